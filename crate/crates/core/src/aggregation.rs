//! Odds-value aggregation of local discriminators.
//!
//! A simulated central discriminator `D_ua` is defined through its odds value
//! `Φ(D_ua(x)) = Σ_j w_j Φ(D_j(x))`, with `Φ(p) = p / (1 - p)`. Everything here
//! is computed in log-odds space: the weighted sum becomes a log-sum-exp of
//! `ln w_j + logit(D_j)`, which stays finite for predictions close to one.
//!
//! The generator gradient is assembled analytically from the sites'
//! `(D_j(x̂_i), ∂D_j(x̂_i)/∂x̂_i)` pairs; no site ever ships parameters.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::domain("probability", format!("{p} is outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn odds(self) -> OddsValue {
        OddsValue { log: logit_unchecked(self.0) }
    }
}

/// A positive odds value, stored as its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OddsValue {
    log: f64,
}

impl OddsValue {
    pub fn new(v: f64) -> Result<Self> {
        if v > 0.0 && v.is_finite() {
            Ok(Self { log: v.ln() })
        } else {
            Err(Error::domain("odds", format!("odds value must be positive and finite, got {v}")))
        }
    }

    pub fn from_log(log: f64) -> Self {
        Self { log }
    }

    pub fn log(self) -> f64 {
        self.log
    }

    pub fn value(self) -> f64 {
        self.log.exp()
    }

    pub fn probability(self) -> Probability {
        Probability(below_one(sigmoid(self.log)))
    }
}

/// `Φ(p) = p / (1 - p)`.
pub fn odds(p: f64) -> Result<f64> {
    Probability::new(p)?;
    Ok(p / (1.0 - p))
}

/// `Φ⁻¹(v) = v / (1 + v)`, strictly below one even for huge `v`.
pub fn inv_odds(v: f64) -> Result<f64> {
    if !(v > 0.0) || v.is_nan() {
        return Err(Error::domain("inv_odds", format!("odds value must be positive, got {v}")));
    }
    if v.is_infinite() {
        return Ok(below_one(1.0));
    }
    Ok(below_one(v / (1.0 + v)))
}

/// `ln Φ(p)`.
pub fn logit(p: f64) -> Result<f64> {
    Probability::new(p)?;
    Ok(logit_unchecked(p))
}

fn logit_unchecked(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    crate::autodiff::sigmoid(x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn below_one(p: f64) -> f64 {
    if p >= 1.0 {
        1.0f64.next_down()
    } else {
        p
    }
}

/// `ln Σ_j exp(terms_j)`; returns `None` for an empty input.
///
/// A single term is returned unchanged, bit for bit.
fn log_sum_exp(terms: &[f64]) -> Option<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if terms.is_empty() || max == f64::NEG_INFINITY {
        return None;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Some(max + sum.ln())
}

/// Public mixture weights `π_j` and, for conditional models, per-site label
/// proportions `ω_j(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pi: Vec<f64>,
    /// `omega[j][y]`; every site lists the same number of classes.
    omega: Option<Vec<Vec<f64>>>,
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be non-negative: {v:?}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!("{what} must sum to 1, got {s}")));
    }
    Ok(())
}

impl MixtureWeights {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one site".into()));
        }
        check_simplex(&pi, "mixture weights")?;
        Ok(Self { pi, omega: None })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    /// `π_j = n_j / n`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::InvalidArgument(format!("every site needs at least one sample: {counts:?}")));
        }
        Self::new(counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    pub fn with_omega(mut self, omega: Vec<Vec<f64>>) -> Result<Self> {
        if omega.len() != self.pi.len() {
            return Err(Error::shape("mixture_weights", format!("{} omega rows for {} sites", omega.len(), self.pi.len())));
        }
        let classes = omega[0].len();
        for (j, row) in omega.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::shape("mixture_weights", format!("site {j} lists {} classes, expected {classes}", row.len())));
            }
            check_simplex(row, &format!("label proportions of site {j}"))?;
        }
        self.omega = Some(omega);
        Ok(self)
    }

    /// `ω_j(y) = count_j(y) / n_j` from per-site class counts (`counts[j][y]`).
    pub fn with_class_counts(self, counts: &[Vec<u64>]) -> Result<Self> {
        let omega = counts
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let n: u64 = row.iter().sum();
                if n == 0 {
                    return Err(Error::InvalidArgument(format!("site {j} declares no labelled samples")));
                }
                Ok(row.iter().map(|&c| c as f64 / n as f64).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        self.with_omega(omega)
    }

    pub fn num_sites(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn omega(&self) -> Option<&[Vec<f64>]> {
        self.omega.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.omega.as_ref().map(|o| o[0].len())
    }

    /// Label prior `P(y) = Σ_j π_j ω_j(y)`.
    pub fn label_prior(&self) -> Option<Vec<f64>> {
        let omega = self.omega.as_ref()?;
        let classes = omega[0].len();
        Some((0..classes).map(|y| self.pi.iter().zip(omega).map(|(p, o)| p * o[y]).sum()).collect())
    }

    /// Per-site weights `π_j ω_j(y)`, optionally renormalised to sum to one.
    pub fn conditional_weights(&self, y: u32, normalize: bool) -> Result<Vec<f64>> {
        let omega = self
            .omega
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("conditional aggregation needs label proportions".into()))?;
        let y = y as usize;
        if y >= omega[0].len() {
            return Err(Error::InvalidArgument(format!("label {y} unsupported: only {} classes", omega[0].len())));
        }
        let mut w: Vec<f64> = self.pi.iter().zip(omega).map(|(p, o)| p * o[y]).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(format!("label {y} unsupported: no site holds it")));
        }
        if normalize {
            w.iter_mut().for_each(|v| *v /= total);
        }
        Ok(w)
    }
}

/// `ln Σ_j w_j Φ(D_j)`; zero-weight sites are skipped.
pub fn aggregate_log_odds(preds: &[f64], weights: &[f64]) -> Result<f64> {
    if preds.len() != weights.len() {
        return Err(Error::shape(
            "aggregate_odds",
            format!("{} predictions for {} weights", preds.len(), weights.len()),
        ));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (&p, &w) in preds.iter().zip(weights) {
        let l = logit(p)?;
        if w > 0.0 {
            terms.push(w.ln() + l);
        }
    }
    log_sum_exp(&terms).ok_or_else(|| Error::InvalidArgument("all aggregation weights are zero".into()))
}

/// `D_ua = Φ⁻¹(Σ_j π_j Φ(D_j))`.
pub fn aggregate_odds(preds: &[f64], weights: &MixtureWeights) -> Result<f64> {
    Ok(OddsValue::from_log(aggregate_log_odds(preds, weights.pi())?).probability().value())
}

/// Conditional variant with weights `π_j ω_j(y)`; unnormalised unless asked.
pub fn aggregate_odds_conditional(preds: &[f64], y: u32, weights: &MixtureWeights, normalize: bool) -> Result<f64> {
    let w = weights.conditional_weights(y, normalize)?;
    Ok(OddsValue::from_log(aggregate_log_odds(preds, &w)?).probability().value())
}

/// Arithmetic mean of the predictions (the Avg-GAN baseline).
pub fn avg_aggregate(preds: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("average of no predictions".into()));
    }
    for &p in preds {
        Probability::new(p)?;
    }
    Ok(preds.iter().sum::<f64>() / preds.len() as f64)
}

/// One site's answer for a synthetic batch: `D_j(x̂_i)` and `∂D_j(x̂_i)/∂x̂_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackBatch {
    pub site: usize,
    pub predictions: Vec<f64>,
    /// `m × data_dim`.
    pub gradients: Tensor,
}

impl FeedbackBatch {
    pub fn validate(&self) -> Result<()> {
        let (rows, _) = self.gradients.dims2("feedback")?;
        if rows != self.predictions.len() {
            return Err(Error::shape(
                "feedback",
                format!("site {}: {} predictions but {rows} gradient rows", self.site, self.predictions.len()),
            ));
        }
        if let Some(p) = self.predictions.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::domain("feedback", format!("site {} sent prediction {p}", self.site)));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.predictions.len()
    }
}

/// How the central discriminator is formed from local predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// Odds-value aggregation.
    Ua,
    /// Mean of predictions.
    Avg,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GeneratorLoss {
    /// Minimise `-log D` instead of `log(1 - D)`.
    pub nonsaturating: bool,
    /// Renormalise `π_j ω_j(y)` per label (conditional runs only).
    pub normalize_conditional_weights: bool,
}

/// Central-side result for one generator batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSignal {
    /// Simulated central discriminator value per sample.
    pub central: Vec<f64>,
    /// `∂loss/∂x̂`, already averaged over the batch (`m × data_dim`).
    pub input_grad: Tensor,
    /// Batch mean of the generator loss.
    pub loss: f64,
}

fn ordered_feedback(feedback: &[FeedbackBatch], k: usize) -> Result<(Vec<&FeedbackBatch>, usize, usize)> {
    let mut slots: Vec<Option<&FeedbackBatch>> = vec![None; k];
    for fb in feedback {
        if fb.site >= k {
            return Err(Error::Protocol(format!("feedback from unknown site {} (K = {k})", fb.site)));
        }
        if slots[fb.site].is_some() {
            return Err(Error::Protocol(format!("duplicate feedback from site {}", fb.site)));
        }
        fb.validate()?;
        slots[fb.site] = Some(fb);
    }
    let missing: Vec<usize> = (0..k).filter(|&j| slots[j].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRound { missing });
    }
    let ordered: Vec<&FeedbackBatch> = slots.into_iter().map(|s| s.expect("checked")).collect();
    let m = ordered[0].batch_size();
    let dim = ordered[0].gradients.cols();
    for fb in &ordered {
        if fb.batch_size() != m || fb.gradients.cols() != dim {
            return Err(Error::Protocol(format!(
                "site {} answered a {}×{} batch, expected {m}×{dim}",
                fb.site,
                fb.batch_size(),
                fb.gradients.cols()
            )));
        }
    }
    if m == 0 {
        return Err(Error::InvalidArgument("empty feedback batch".into()));
    }
    Ok((ordered, m, dim))
}

/// Generator gradient through the UA discriminator.
///
/// For each sample, with weights `w_j` (`π_j`, or `π_j ω_j(y_i)` when labels
/// are given) and `Φ_ua = Σ_j w_j Φ(D_j)`:
///
/// ```text
/// ∂ log(1 - D_ua)/∂x̂ = -(1 - D_ua) Σ_j w_j / (1 - D_j)² · ∂D_j/∂x̂
/// ∂(-log D_ua)/∂x̂    = -(1 - D_ua)/Φ_ua · Σ_j w_j / (1 - D_j)² · ∂D_j/∂x̂
/// ```
///
/// The factor `w_j (1 - D_ua) / (1 - D_j)` is evaluated as
/// `exp(ln w_j + softplus(l_j) - softplus(l_ua))`, which is exactly one for a
/// single site, so K = 1 reproduces [`classical_generator_gradient`] bit for bit.
pub fn ua_generator_gradient(
    feedback: &[FeedbackBatch],
    weights: &MixtureWeights,
    labels: Option<&[u32]>,
    loss: GeneratorLoss,
) -> Result<GeneratorSignal> {
    let k = weights.num_sites();
    let (ordered, m, dim) = ordered_feedback(feedback, k)?;
    if let Some(y) = labels {
        if y.len() != m {
            return Err(Error::shape("ua_generator_gradient", format!("{} labels for batch of {m}", y.len())));
        }
    }

    let mut central = Vec::with_capacity(m);
    let mut grad = vec![0.0; m * dim];
    let mut loss_sum = 0.0;
    let mut preds = vec![0.0; k];
    let mut logits = vec![0.0; k];
    for i in 0..m {
        for (j, fb) in ordered.iter().enumerate() {
            preds[j] = fb.predictions[i];
            logits[j] = logit_unchecked(preds[j]);
        }
        let w: Cow<'_, [f64]> = match labels {
            Some(y) => Cow::Owned(weights.conditional_weights(y[i], loss.normalize_conditional_weights)?),
            None => Cow::Borrowed(weights.pi()),
        };
        let terms: Vec<f64> = w
            .iter()
            .zip(&logits)
            .map(|(&wj, &l)| if wj > 0.0 { wj.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        let l_ua = log_sum_exp(&terms)
            .ok_or_else(|| Error::InvalidArgument("all aggregation weights are zero".into()))?;
        let d_ua = OddsValue::from_log(l_ua).probability().value();
        central.push(d_ua);
        let sp_ua = softplus(l_ua);
        loss_sum += if loss.nonsaturating { softplus(-l_ua) } else { -sp_ua };
        let phi_ua = if loss.nonsaturating { l_ua.exp() } else { 1.0 };

        let row = &mut grad[i * dim..(i + 1) * dim];
        for (j, fb) in ordered.iter().enumerate() {
            if terms[j] == f64::NEG_INFINITY {
                continue;
            }
            let ratio = (w[j].ln() + softplus(logits[j]) - sp_ua).exp();
            let coeff = -ratio / (phi_ua * (1.0 - preds[j]));
            accumulate_row(row, coeff, fb.gradients.row(i));
        }
    }
    finish(central, grad, m, dim, loss_sum)
}

/// Generator gradient through a single discriminator `D` (classical GAN).
pub fn classical_generator_gradient(feedback: &FeedbackBatch, nonsaturating: bool) -> Result<GeneratorSignal> {
    feedback.validate()?;
    let m = feedback.batch_size();
    let dim = feedback.gradients.cols();
    if m == 0 {
        return Err(Error::InvalidArgument("empty feedback batch".into()));
    }
    let mut central = Vec::with_capacity(m);
    let mut grad = vec![0.0; m * dim];
    let mut loss_sum = 0.0;
    for i in 0..m {
        let d = feedback.predictions[i];
        let l = logit_unchecked(d);
        central.push(OddsValue::from_log(l).probability().value());
        loss_sum += if nonsaturating { softplus(-l) } else { -softplus(l) };
        // d/dx log(1 - D) = -1/(1 - D) · dD/dx;  d/dx (-log D) = -1/D · dD/dx = -1/(Φ(D)(1 - D)) · dD/dx
        let phi = if nonsaturating { l.exp() } else { 1.0 };
        let coeff = -1.0 / (phi * (1.0 - d));
        accumulate_row(&mut grad[i * dim..(i + 1) * dim], coeff, feedback.gradients.row(i));
    }
    finish(central, grad, m, dim, loss_sum)
}

/// Generator gradient through `D_avg = (1/K) Σ_j D_j`.
pub fn avg_generator_gradient(feedback: &[FeedbackBatch], k: usize, nonsaturating: bool) -> Result<GeneratorSignal> {
    let (ordered, m, dim) = ordered_feedback(feedback, k)?;
    let mut central = Vec::with_capacity(m);
    let mut grad = vec![0.0; m * dim];
    let mut loss_sum = 0.0;
    let mut preds = vec![0.0; k];
    for i in 0..m {
        for (j, fb) in ordered.iter().enumerate() {
            preds[j] = fb.predictions[i];
        }
        let d = avg_aggregate(&preds)?;
        central.push(d);
        loss_sum += if nonsaturating { -d.ln() } else { (-d).ln_1p() };
        let outer = if nonsaturating { -1.0 / d } else { -1.0 / (1.0 - d) };
        let coeff = outer / k as f64;
        let row = &mut grad[i * dim..(i + 1) * dim];
        for fb in &ordered {
            accumulate_row(row, coeff, fb.gradients.row(i));
        }
    }
    finish(central, grad, m, dim, loss_sum)
}

fn accumulate_row(row: &mut [f64], coeff: f64, g: &[f64]) {
    for (acc, &gv) in row.iter_mut().zip(g) {
        *acc += coeff * gv;
    }
}

fn finish(central: Vec<f64>, mut grad: Vec<f64>, m: usize, dim: usize, loss_sum: f64) -> Result<GeneratorSignal> {
    let inv_m = 1.0 / m as f64;
    grad.iter_mut().for_each(|g| *g *= inv_m);
    Ok(GeneratorSignal { central, input_grad: Tensor::matrix(m, dim, grad)?, loss: loss_sum * inv_m })
}
