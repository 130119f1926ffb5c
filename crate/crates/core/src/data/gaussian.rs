use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Isotropic Gaussian mixture with equal mode sizes; `variance` is the
/// per-coordinate variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixtureSpec {
    pub centers: Vec<Vec<f64>>,
    pub variance: f64,
    pub samples_per_mode: usize,
}

impl GaussianMixtureSpec {
    /// Four modes at `(±10, ±10)` with variance 0.5.
    pub fn toy(samples_per_mode: usize) -> Self {
        Self {
            centers: vec![vec![10.0, 10.0], vec![10.0, -10.0], vec![-10.0, 10.0], vec![-10.0, -10.0]],
            variance: 0.5,
            samples_per_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one center".into()));
        }
        let d = self.centers[0].len();
        if d == 0 || self.centers.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("centers must be finite and share one nonzero dimension".into()));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance must be positive, got {}", self.variance)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Samples mode by mode; row labels are mode indices.
pub fn gen_gaussian_mixture(spec: &GaussianMixtureSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let sd = spec.std_dev();
    let n = spec.centers.len() * spec.samples_per_mode;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (mode, center) in spec.centers.iter().enumerate() {
        for _ in 0..spec.samples_per_mode {
            for c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(c + sd * z);
            }
            labels.push(mode as u32);
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, d], data)?, labels, spec.centers.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let spec = GaussianMixtureSpec::toy(2500);
        let a = gen_gaussian_mixture(&spec, 9).unwrap();
        assert_eq!(a, gen_gaussian_mixture(&spec, 9).unwrap());
        assert_eq!(a.class_counts(), vec![2500; 4]);
        assert_ne!(a, gen_gaussian_mixture(&spec, 10).unwrap());
    }

    #[test]
    fn single_mode_mean() {
        let spec = GaussianMixtureSpec { centers: vec![vec![0.0, 0.0]], variance: 0.25, samples_per_mode: 10_000 };
        let ds = gen_gaussian_mixture(&spec, 1).unwrap();
        for c in 0..2 {
            let mean: f64 = (0..ds.len()).map(|i| ds.row(i)[c]).sum::<f64>() / ds.len() as f64;
            assert!(mean.abs() < 0.02, "{mean}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = GaussianMixtureSpec::toy(1);
        spec.variance = 0.0;
        assert!(gen_gaussian_mixture(&spec, 0).is_err());
        spec = GaussianMixtureSpec { centers: vec![], variance: 1.0, samples_per_mode: 1 };
        assert!(spec.validate().is_err());
        spec = GaussianMixtureSpec { centers: vec![vec![0.0], vec![0.0, 1.0]], variance: 1.0, samples_per_mode: 1 };
        assert!(spec.validate().is_err());
    }
}
