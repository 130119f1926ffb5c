//! Fixture builders shared by the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uagan::aggregation::FeedbackBatch;
use uagan::models::{Mlp, MlpSpec, OutputActivation};
use uagan::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
}

/// The toy discriminator shape: 2 → 64 → 64 → 1.
pub fn toy_discriminator(rng: &mut ChaCha8Rng) -> Mlp {
    Mlp::init(MlpSpec::new(vec![2, 64, 64, 1], OutputActivation::Sigmoid).expect("valid"), rng).expect("init")
}

/// Plausible site replies for a batch of `m` two-dimensional samples.
pub fn feedback(rng: &mut ChaCha8Rng, k: usize, m: usize) -> Vec<FeedbackBatch> {
    (0..k)
        .map(|site| FeedbackBatch {
            site,
            predictions: (0..m).map(|_| rng.random_range(0.01..0.99)).collect(),
            gradients: random_matrix(rng, m, 2),
        })
        .collect()
}
