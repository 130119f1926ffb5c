//! The assembled generator gradients against central finite differences of
//! the loss, using logistic local discriminators with closed-form gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uagan::aggregation::{
    aggregate_odds, avg_generator_gradient, classical_generator_gradient, ua_generator_gradient, FeedbackBatch, GeneratorLoss,
    MixtureWeights,
};
use uagan::Tensor;

struct Logistic {
    w: Vec<f64>,
    b: f64,
}

impl Logistic {
    fn prob(&self, x: &[f64]) -> f64 {
        let z: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b;
        1.0 / (1.0 + (-z).exp())
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let p = self.prob(x);
        self.w.iter().map(|w| p * (1.0 - p) * w).collect()
    }
}

fn feedback(discs: &[Logistic], xs: &[Vec<f64>]) -> Vec<FeedbackBatch> {
    discs
        .iter()
        .enumerate()
        .map(|(j, d)| FeedbackBatch {
            site: j,
            predictions: xs.iter().map(|x| d.prob(x)).collect(),
            gradients: Tensor::matrix(xs.len(), xs[0].len(), xs.iter().flat_map(|x| d.grad(x)).collect()).unwrap(),
        })
        .collect()
}

fn loss_of(d: f64, nonsaturating: bool) -> f64 {
    if nonsaturating {
        -d.ln()
    } else {
        (1.0 - d).ln()
    }
}

fn setup(rng: &mut ChaCha8Rng, k: usize, m: usize, dim: usize) -> (Vec<Logistic>, Vec<Vec<f64>>) {
    let discs = (0..k)
        .map(|_| Logistic { w: (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(), b: rng.random_range(-1.0..1.0) })
        .collect();
    let xs = (0..m).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    (discs, xs)
}

fn check(analytic: &Tensor, xs: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) {
    let h = 1e-6;
    let m = xs.len() as f64;
    for (i, x) in xs.iter().enumerate() {
        for c in 0..x.len() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[c] += h;
            dn[c] -= h;
            // The signal is the gradient of the batch mean, so each row carries a 1/m factor.
            let fd = (f(&up) - f(&dn)) / (2.0 * h) / m;
            let an = analytic.row(i)[c];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-3), "row {i} col {c}: fd {fd} vs analytic {an}");
        }
    }
}

#[test]
fn ua_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let k = 1 + trial % 5;
        let (discs, xs) = setup(&mut rng, k, 6, 2);
        let pi: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = pi.iter().sum();
        let weights = MixtureWeights::new(pi.iter().map(|p| p / total).collect()).unwrap();
        for nonsaturating in [false, true] {
            let loss = GeneratorLoss { nonsaturating, normalize_conditional_weights: false };
            let signal = ua_generator_gradient(&feedback(&discs, &xs), &weights, None, loss).unwrap();
            check(&signal.input_grad, &xs, |x| {
                let preds: Vec<f64> = discs.iter().map(|d| d.prob(x)).collect();
                loss_of(aggregate_odds(&preds, &weights).unwrap(), nonsaturating)
            });
        }
    }
}

#[test]
fn avg_and_classical_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for nonsaturating in [false, true] {
        let (discs, xs) = setup(&mut rng, 3, 5, 3);
        let signal = avg_generator_gradient(&feedback(&discs, &xs), 3, nonsaturating).unwrap();
        check(&signal.input_grad, &xs, |x| loss_of(discs.iter().map(|d| d.prob(x)).sum::<f64>() / 3.0, nonsaturating));

        let fb = feedback(&discs[..1], &xs);
        let signal = classical_generator_gradient(&fb[0], nonsaturating).unwrap();
        check(&signal.input_grad, &xs, |x| loss_of(discs[0].prob(x), nonsaturating));
    }
}
