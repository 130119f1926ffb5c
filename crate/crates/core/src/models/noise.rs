use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Isotropic Gaussian noise source `N(mean, variance·I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    mean: Vec<f64>,
    variance: f64,
}

impl NoiseSpec {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let spec = Self { mean, variance };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard normal noise of dimension `dim`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::InvalidArgument("noise dimension must be at least 1".into()));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {}", self.variance)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Tensor> {
        if m == 0 {
            return Err(Error::InvalidArgument("noise batch size must be at least 1".into()));
        }
        let sd = self.variance.sqrt();
        let d = self.dim();
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m {
            for mu in &self.mean {
                let e: f64 = rng.sample(StandardNormal);
                data.push(mu + sd * e);
            }
        }
        Tensor::matrix(m, d, data)
    }
}

/// One-hot label features concatenated to network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoding {
    num_classes: usize,
}

impl LabelEncoding {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("label encoding needs at least one class".into()));
        }
        Ok(Self { num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn one_hot(&self, labels: &[u32]) -> Result<Tensor> {
        let c = self.num_classes;
        let mut data = vec![0.0; labels.len() * c];
        for (i, &y) in labels.iter().enumerate() {
            let y = y as usize;
            if y >= c {
                return Err(Error::InvalidArgument(format!("label {y} out of range for {c} classes")));
            }
            data[i * c + y] = 1.0;
        }
        Tensor::matrix(labels.len(), c, data)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_variance_is_rejected() {
        assert!(NoiseSpec::new(vec![0.0, 0.0], 0.0).is_err());
        assert!(NoiseSpec::new(vec![], 1.0).is_err());
    }

    #[test]
    fn same_seed_same_batch() {
        let spec = NoiseSpec::new(vec![0.0, 0.0], 0.5).unwrap();
        let a = spec.sample(16, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = spec.sample(16, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn sample_moments() {
        let spec = NoiseSpec::new(vec![0.0, 0.0], 0.5).unwrap();
        let m = 10_000;
        let z = spec.sample(m, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..m).map(|i| z.row(i)[c]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 0.5).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn one_hot_has_single_one() {
        let enc = LabelEncoding::new(3).unwrap();
        let t = enc.one_hot(&[2, 0]).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(enc.one_hot(&[3]).is_err());
        assert!(LabelEncoding::new(0).is_err());
    }
}
