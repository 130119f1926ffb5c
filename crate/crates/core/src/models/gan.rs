use rand::Rng;

use super::mlp::{Mlp, MlpSpec, OutputActivation};
use super::noise::{LabelEncoding, NoiseSpec};
use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Discriminator outputs are clamped to `[EPS_D, 1 - EPS_D]` so odds stay finite.
pub const EPS_D: f64 = 1e-6;

fn check_labels(labels: Option<&[u32]>, encoding: Option<LabelEncoding>, rows: usize, op: &'static str) -> Result<()> {
    match (labels, encoding) {
        (None, None) => Ok(()),
        (Some(y), Some(_)) if y.len() == rows => Ok(()),
        (Some(y), Some(_)) => Err(Error::shape(op, format!("{} labels for {rows} rows", y.len()))),
        (Some(_), None) => Err(Error::InvalidArgument(format!("{op}: labels given to an unconditional model"))),
        (None, Some(_)) => Err(Error::InvalidArgument(format!("{op}: conditional model needs labels"))),
    }
}

/// Records `input ⊕ one_hot(labels)` (or just `input`) on the tape.
fn conditioned_input(tape: &mut Tape, input: Var, labels: Option<&[u32]>, encoding: Option<LabelEncoding>) -> Result<Var> {
    match (labels, encoding) {
        (Some(y), Some(enc)) => {
            let onehot = tape.leaf(enc.one_hot(y)?);
            tape.concat(&[input, onehot])
        }
        _ => Ok(input),
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    net: Mlp,
    noise: NoiseSpec,
    labels: Option<LabelEncoding>,
}

impl Generator {
    pub fn new(net: Mlp, noise: NoiseSpec, labels: Option<LabelEncoding>) -> Result<Self> {
        let extra = labels.map_or(0, |l| l.num_classes());
        if net.spec().input_dim() != noise.dim() + extra {
            return Err(Error::shape(
                "generator",
                format!(
                    "network input {} != noise dim {} + {extra} label features",
                    net.spec().input_dim(),
                    noise.dim()
                ),
            ));
        }
        Ok(Self { net, noise, labels })
    }

    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, noise: NoiseSpec, labels: Option<LabelEncoding>, rng: &mut R) -> Result<Self> {
        Self::new(Mlp::init(spec, rng)?, noise, labels)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn labels(&self) -> Option<LabelEncoding> {
        self.labels
    }

    pub fn data_dim(&self) -> usize {
        self.net.spec().output_dim()
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Tensor> {
        self.noise.sample(m, rng)
    }

    /// Records `G(z[, y])` on the tape; returns parameter leaves and the synthetic batch node.
    pub fn forward_on(&self, tape: &mut Tape, z: &Tensor, labels: Option<&[u32]>) -> Result<(Vec<Var>, Var)> {
        let (rows, cols) = z.dims2("generator_forward")?;
        if cols != self.noise.dim() {
            return Err(Error::shape(
                "generator_forward",
                format!("noise has {cols} columns, expected {}", self.noise.dim()),
            ));
        }
        check_labels(labels, self.labels, rows, "generator_forward")?;
        let zv = tape.leaf(z.clone());
        let input = conditioned_input(tape, zv, labels, self.labels)?;
        self.net.forward_on(tape, input)
    }

    pub fn forward(&self, z: &Tensor, labels: Option<&[u32]>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (_, out) = self.forward_on(&mut tape, z, labels)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    labels: Option<LabelEncoding>,
    data_dim: usize,
}

impl Discriminator {
    /// The network must end in a single sigmoid unit.
    pub fn new(net: Mlp, labels: Option<LabelEncoding>) -> Result<Self> {
        let spec = net.spec();
        if spec.output_dim() != 1 || spec.output != OutputActivation::Sigmoid {
            return Err(Error::InvalidArgument(
                "a discriminator needs a single sigmoid output unit".into(),
            ));
        }
        let extra = labels.map_or(0, |l| l.num_classes());
        let data_dim = spec.input_dim().checked_sub(extra).filter(|d| *d > 0).ok_or_else(|| {
            Error::shape("discriminator", format!("input width {} leaves no room for data", spec.input_dim()))
        })?;
        Ok(Self { net, labels, data_dim })
    }

    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, labels: Option<LabelEncoding>, rng: &mut R) -> Result<Self> {
        Self::new(Mlp::init(spec, rng)?, labels)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn labels(&self) -> Option<LabelEncoding> {
        self.labels
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    /// Records `clamp(D(x[, y]))` on the tape given an existing input node.
    pub fn forward_on(&self, tape: &mut Tape, x: Var, labels: Option<&[u32]>) -> Result<(Vec<Var>, Var)> {
        let (rows, cols) = tape.value(x).dims2("discriminator_forward")?;
        if cols != self.data_dim {
            return Err(Error::shape(
                "discriminator_forward",
                format!("input has {cols} columns, expected {}", self.data_dim),
            ));
        }
        check_labels(labels, self.labels, rows, "discriminator_forward")?;
        let input = conditioned_input(tape, x, labels, self.labels)?;
        let (leaves, prob) = self.net.forward_on(tape, input)?;
        Ok((leaves, tape.clamp(prob, EPS_D, 1.0 - EPS_D)))
    }

    /// Probabilities `D(x_i)`, one per row, inside `[EPS_D, 1 - EPS_D]`.
    pub fn forward(&self, x: &Tensor, labels: Option<&[u32]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (_, out) = self.forward_on(&mut tape, xv, labels)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Predictions together with `∂D(x_i)/∂x_i` for every row.
    pub fn predict_with_input_grad(&self, x: &Tensor, labels: Option<&[u32]>) -> Result<(Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (_, out) = self.forward_on(&mut tape, xv, labels)?;
        let preds = tape.value(out).data().to_vec();
        // Rows do not interact, so one reverse sweep with a ones seed yields every per-row gradient.
        let mut grads = tape.backward(out, Tensor::ones(tape.value(out).shape()))?;
        Ok((preds, grads.take(xv)))
    }
}

/// Pairs a real and a synthetic batch for one discriminator update.
pub struct DiscriminatorBatch<'a> {
    pub real: &'a Tensor,
    pub real_labels: Option<&'a [u32]>,
    pub fake: &'a Tensor,
    pub fake_labels: Option<&'a [u32]>,
}

/// One ascent step on `(1/m) Σ [log D(x_i) + log(1 - D(x̂_i))]`.
///
/// Returns the objective evaluated before the update.
pub fn local_discriminator_step(disc: &mut Discriminator, batch: &DiscriminatorBatch<'_>, optimizer: &mut Adam) -> Result<f64> {
    let m_real = batch.real.rows();
    let m_fake = batch.fake.rows();
    if m_real == 0 || m_fake == 0 {
        return Err(Error::InvalidArgument("discriminator step needs non-empty batches".into()));
    }
    if m_real != m_fake {
        return Err(Error::shape(
            "local_discriminator_step",
            format!("{m_real} real rows vs {m_fake} synthetic rows"),
        ));
    }

    let mut tape = Tape::new();
    let real = tape.leaf(batch.real.clone());
    let fake = tape.leaf(batch.fake.clone());
    let (params, d_real) = disc.forward_on(&mut tape, real, batch.real_labels)?;
    let n_params = params.len();
    let (fake_params, d_fake) = disc.forward_on(&mut tape, fake, batch.fake_labels)?;
    let log_real = tape.log(d_real)?;
    let one_minus = tape.affine(d_fake, -1.0, 1.0);
    let log_fake = tape.log(one_minus)?;
    let mean_real = tape.mean(log_real);
    let mean_fake = tape.mean(log_fake);
    let objective = tape.add(mean_real, mean_fake)?;
    let value = tape.value(objective).item();

    // Descend on the negated objective.
    let grads = tape.backward(objective, Tensor::scalar(-1.0))?;
    let mut param_grads = Vec::with_capacity(n_params);
    for (p, fp) in params.iter().zip(&fake_params) {
        let mut g = grads.wrt(*p).clone();
        g.accumulate(grads.wrt(*fp));
        param_grads.push(g);
    }
    optimizer.step(disc.net_mut().params_mut(), &param_grads)?;
    Ok(value)
}
