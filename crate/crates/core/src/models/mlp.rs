use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

/// Fully connected network shape: `widths[0]` inputs, `widths.last()` outputs,
/// leaky-ReLU between hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    pub output: OutputActivation,
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output: OutputActivation) -> Result<Self> {
        let spec = Self { widths, leaky_slope: DEFAULT_LEAKY_SLOPE, output };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an MLP needs at least 2 layer widths, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer widths must be positive: {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    /// `[W0, b0, W1, b1, ...]` with `Wi: in × out`, `bi: out`.
    params: Vec<Tensor>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialisation for weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::with_capacity(2 * spec.num_layers());
        for pair in spec.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::vector(b));
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .widths
            .windows(2)
            .flat_map(|pair| [Tensor::zeros(&[pair[0], pair[1]]), Tensor::zeros(&[pair[1]])])
            .collect();
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let expected: Vec<Vec<usize>> =
            spec.widths.windows(2).flat_map(|p| [vec![p[0], p[1]], vec![p[1]]]).collect();
        let got: Vec<Vec<usize>> = params.iter().map(|t| t.shape().to_vec()).collect();
        if expected != got {
            return Err(Error::shape("mlp", format!("expected parameter shapes {expected:?}, got {got:?}")));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let kind = if i % 2 == 0 { "weight" } else { "bias" };
                (format!("layer{}.{kind}", i / 2), t)
            })
            .collect()
    }

    /// Records the network on `tape`. Returns the parameter leaves (in
    /// [`Mlp::params`] order) and the output node.
    pub fn forward_on(&self, tape: &mut Tape, input: Var) -> Result<(Vec<Var>, Var)> {
        let cols = tape.value(input).dims2("mlp_forward")?.1;
        if cols != self.spec.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input has {cols} features, network expects {}", self.spec.input_dim()),
            ));
        }
        let leaves: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mut h = input;
        let layers = self.spec.num_layers();
        for l in 0..layers {
            let z = tape.matmul(h, leaves[2 * l])?;
            let z = tape.add_bias(z, leaves[2 * l + 1])?;
            h = if l + 1 < layers {
                tape.leaky_relu(z, self.spec.leaky_slope)
            } else {
                match self.spec.output {
                    OutputActivation::Identity => z,
                    OutputActivation::Tanh => tape.tanh(z),
                    OutputActivation::Sigmoid => tape.sigmoid(z),
                }
            };
        }
        Ok((leaves, h))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let (_, out) = self.forward_on(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn spec_needs_two_positive_layers() {
        assert!(MlpSpec::new(vec![3], OutputActivation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], OutputActivation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 1], OutputActivation::Identity).is_ok());
    }

    #[test]
    fn zero_weights_give_bias_output() {
        let spec = MlpSpec::new(vec![2, 4, 3], OutputActivation::Identity).unwrap();
        let mut net = Mlp::zeros(spec).unwrap();
        net.params_mut()[3] = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let z = Tensor::from_rows(&[vec![0.3, -7.0], vec![100.0, 2.0]]).unwrap();
        let out = net.forward(&z).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn rows_are_independent() {
        let spec = MlpSpec::new(vec![2, 8, 2], OutputActivation::Tanh).unwrap();
        let net = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let a = Tensor::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.1, 0.2], vec![-5.0, 9.0]]).unwrap();
        let (oa, ob) = (net.forward(&a).unwrap(), net.forward(&b).unwrap());
        assert_eq!(oa.row(0), ob.row(0));
        assert_ne!(oa.row(1), ob.row(1));
    }

    #[test]
    fn from_params_checks_shapes() {
        let spec = MlpSpec::new(vec![2, 3, 1], OutputActivation::Sigmoid).unwrap();
        let good = Mlp::zeros(spec.clone()).unwrap().params().to_vec();
        assert!(Mlp::from_params(spec.clone(), good).is_ok());
        assert!(Mlp::from_params(spec, vec![Tensor::zeros(&[2, 3])]).is_err());
    }
}
