use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// Probability mass function on `{0, …, S-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidArgument("distribution needs a non-empty support".into()));
        }
        if let Some(m) = mass.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!("negative or non-finite mass {m}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { mass })
    }

    pub fn uniform(support: usize) -> Result<Self> {
        Self::new(vec![1.0 / support as f64; support])
    }

    /// Dirichlet(1, …, 1) draw mixed with the uniform floor so every mass is at least `floor`.
    pub fn random<R: Rng + ?Sized>(support: usize, floor: f64, rng: &mut R) -> Result<Self> {
        if support == 0 || floor < 0.0 || floor * support as f64 >= 1.0 {
            return Err(Error::InvalidArgument(format!("cannot floor {support} masses at {floor}")));
        }
        let raw: Vec<f64> = (0..support).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let free = 1.0 - floor * support as f64;
        let mut mass: Vec<f64> = raw.iter().map(|r| floor + free * r / total).collect();
        // absorb rounding so the sum is 1 to the last bit we can manage
        let drift: f64 = mass.iter().sum::<f64>() - 1.0;
        let imax = argmax(&mass);
        mass[imax] -= drift;
        Self::new(mass)
    }

    pub fn support(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    /// `Σ_j π_j p_j` over distributions sharing a support.
    pub fn mixture(components: &[DiscreteDistribution], weights: &[f64]) -> Result<Self> {
        let s = components.first().map(|c| c.support()).unwrap_or(0);
        if components.len() != weights.len() || components.iter().any(|c| c.support() != s) {
            return Err(Error::shape("mixture", "components and weights disagree"));
        }
        let mass = (0..s).map(|x| components.iter().zip(weights).map(|(c, w)| w * c.mass[x]).sum()).collect();
        Self::new(mass)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Multiplicative odds perturbation `ξ(x)` with its declared bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    xi: Vec<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
}

/// Slack for `ξ = 1 ± δ` values that round one ulp past the boundary.
const BOUND_TOL: f64 = 1e-12;
pub const MAX_PERTURBATION: f64 = 0.125;

impl PerturbationSpec {
    pub fn new(xi: Vec<f64>, delta: Option<f64>, gamma: Option<f64>) -> Result<Self> {
        if let Some(v) = xi.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("perturbation factors must be positive, got {v}")));
        }
        if let Some(d) = delta {
            if !(0.0..=MAX_PERTURBATION).contains(&d) {
                return Err(Error::InvalidArgument(format!("delta {d} outside [0, 1/8]")));
            }
            if let Some(v) = xi.iter().find(|v| (*v - 1.0).abs() > d + BOUND_TOL) {
                return Err(Error::InvalidArgument(format!("|xi - 1| = {} exceeds delta {d}", (v - 1.0).abs())));
            }
        }
        if let Some(g) = gamma {
            if !(0.0..=MAX_PERTURBATION).contains(&g) {
                return Err(Error::InvalidArgument(format!("gamma {g} outside [0, 1/8]")));
            }
            if let Some(v) = xi.iter().find(|v| (*v - 1.0).abs() < g - BOUND_TOL) {
                return Err(Error::InvalidArgument(format!("|xi - 1| = {} below gamma {g}", (v - 1.0).abs())));
            }
        }
        Ok(Self { xi, delta, gamma })
    }

    pub fn unperturbed(support: usize) -> Self {
        Self { xi: vec![1.0; support], delta: Some(0.0), gamma: None }
    }

    /// Every `ξ(x)` drawn uniformly from `[1 - δ, 1 + δ]`.
    pub fn random_bounded<R: Rng + ?Sized>(support: usize, delta: f64, rng: &mut R) -> Result<Self> {
        let xi = (0..support).map(|_| 1.0 + delta * (2.0 * rng.random::<f64>() - 1.0)).collect();
        Self::new(xi, Some(delta), None)
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn support(&self) -> usize {
        self.xi.len()
    }
}

pub fn total_variation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.support() != q.support() {
        return Err(Error::shape("total_variation", format!("supports {} vs {}", p.support(), q.support())));
    }
    Ok(0.5 * p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn random_respects_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in [1, 2, 7, 32] {
            let d = DiscreteDistribution::random(s, 1e-3, &mut rng).unwrap();
            assert!(d.mass().iter().all(|&m| m >= 1e-3 - 1e-15));
            assert!((d.mass().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert!(DiscreteDistribution::random(1000, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = DiscreteDistribution::new(vec![1.0, 0.0]).unwrap();
        let q = DiscreteDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(total_variation(&p, &p).unwrap(), 0.0);
        assert_eq!(total_variation(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn perturbation_bounds() {
        assert!(PerturbationSpec::new(vec![1.1, 0.9], Some(0.1), None).is_ok());
        assert!(PerturbationSpec::new(vec![1.2], Some(0.1), None).is_err());
        assert!(PerturbationSpec::new(vec![1.0], Some(0.2), None).is_err());
        assert!(PerturbationSpec::new(vec![1.05], None, Some(0.1)).is_err());
        assert!(PerturbationSpec::new(vec![1.125, 0.875], None, Some(0.125)).is_ok());
        assert!(PerturbationSpec::new(vec![0.0], None, None).is_err());
    }
}
