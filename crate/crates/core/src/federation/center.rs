//! The central generator server.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::protocol::{decode_message, encode_message, Directive, Feedback, Message, SynBatch};
use super::site::actor_rng;
use super::transport::Link;
use super::{AggregatorKind, TrainingConfig};
use crate::aggregation::{
    avg_generator_gradient, classical_generator_gradient, ua_generator_gradient, FeedbackBatch, GeneratorSignal, MixtureWeights,
};
use crate::autodiff::{Adam, Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{Generator, LabelEncoding, MlpSpec};

/// Data geometry the center must know without seeing any data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataShape {
    pub dim: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    pub gen_loss: f64,
    /// Batch mean of the central discriminator (`D_ua`, `D_avg`, or `D`).
    pub mean_central: f64,
    /// Per-site local objective averaged over the round's discriminator steps.
    pub disc_losses: Vec<f64>,
}

pub fn metrics_csv(metrics: &[RoundMetrics]) -> String {
    let k = metrics.first().map_or(0, |m| m.disc_losses.len());
    let mut out = String::from("round,gen_loss,mean_dua");
    for j in 0..k {
        let _ = write!(out, ",per_site_disc_loss_{j}");
    }
    out.push('\n');
    for m in metrics {
        let _ = write!(out, "{},{},{}", m.round, m.gen_loss, m.mean_central);
        for l in &m.disc_losses {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
    }
    out
}

/// Sees every generator step: the per-site feedback and the assembled signal.
pub trait RoundObserver {
    fn on_generator_step(&mut self, round: u64, feedback: &[FeedbackBatch], labels: Option<&[u32]>, signal: &GeneratorSignal);
}

#[derive(Debug)]
pub struct TrainingOutcome {
    pub generator: Generator,
    pub metrics: Vec<RoundMetrics>,
    pub weights: MixtureWeights,
}

struct Center<'o, L> {
    config: &'o TrainingConfig,
    links: Vec<L>,
    next_batch: u64,
}

impl<L: Link> Center<'_, L> {
    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        let frame = encode_message(msg);
        for link in &mut self.links {
            link.send(frame.clone())?;
        }
        Ok(())
    }

    /// Sends a synthetic batch to every site and collects one reply per site,
    /// re-sending to sites that stay silent past the timeout.
    fn exchange(&mut self, round: u64, samples: Tensor, labels: Option<Vec<u32>>) -> Result<Vec<Feedback>> {
        let batch_id = self.next_batch;
        self.next_batch += 1;
        let frame = encode_message(&Message::SynBatch(SynBatch { round, batch_id, samples, labels }));
        for link in &mut self.links {
            link.send(frame.clone())?;
        }
        let mut replies = Vec::with_capacity(self.links.len());
        for (j, link) in self.links.iter_mut().enumerate() {
            let mut retries = 0u32;
            loop {
                let Some(bytes) = link.recv(self.config.site_timeout)? else {
                    if retries >= self.config.max_retries {
                        return Err(Error::SiteTimeout { site: j, retries });
                    }
                    retries += 1;
                    log::warn!("site {j} silent for batch {batch_id}; retry {retries}");
                    link.send(frame.clone())?;
                    continue;
                };
                match decode_message(&bytes)? {
                    Message::Feedback(fb) if fb.batch_id < batch_id => continue,
                    Message::Feedback(fb) if fb.batch_id == batch_id && fb.site == j as u64 && fb.round == round => {
                        replies.push(fb);
                        break;
                    }
                    other => {
                        return Err(Error::Protocol(format!(
                            "site {j}: unexpected {} while waiting for batch {batch_id}: {other:?}",
                            other.kind()
                        )))
                    }
                }
            }
        }
        Ok(replies)
    }
}

/// Collects one `SiteHello` per link and orders links by declared site id.
fn register<L: Link>(links: Vec<L>, config: &TrainingConfig, shape: DataShape) -> Result<(Vec<L>, MixtureWeights)> {
    let k = links.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no sites registered".into()));
    }
    let wait = config.site_timeout * (config.max_retries + 1);
    let mut slots: Vec<Option<(L, u64, Option<Vec<u64>>)>> = (0..k).map(|_| None).collect();
    for (pos, mut link) in links.into_iter().enumerate() {
        let bytes = link.recv(wait)?.ok_or(Error::SiteTimeout { site: pos, retries: config.max_retries })?;
        let Message::SiteHello { site, n, class_counts } = decode_message(&bytes)? else {
            return Err(Error::Protocol(format!("connection {pos} did not open with SiteHello")));
        };
        let j = usize::try_from(site).ok().filter(|&j| j < k).ok_or_else(|| Error::Protocol(format!("site id {site} outside 0..{k}")))?;
        if slots[j].is_some() {
            return Err(Error::Protocol(format!("site id {j} registered twice")));
        }
        if config.conditional {
            match &class_counts {
                Some(c) if c.len() == shape.num_classes && c.iter().sum::<u64>() == n => {}
                _ => return Err(Error::Protocol(format!("site {j} sent inconsistent class counts"))),
            }
        }
        slots[j] = Some((link, n, class_counts));
    }
    let mut ordered = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    let mut class_counts = Vec::with_capacity(k);
    for (link, n, c) in slots.into_iter().map(|s| s.expect("all ids present")) {
        ordered.push(link);
        counts.push(n);
        class_counts.push(c.unwrap_or_default());
    }
    let mut weights = MixtureWeights::from_counts(&counts)?;
    if config.conditional {
        weights = weights.with_class_counts(&class_counts)?;
    }
    Ok((ordered, weights))
}

pub fn run_center<L: Link>(
    config: &TrainingConfig,
    shape: DataShape,
    links: Vec<L>,
    mut observer: Option<&mut dyn RoundObserver>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    let (links, weights) = register(links, config, shape)?;
    let k = links.len();
    if config.aggregator == AggregatorKind::Centralized && k != 1 {
        return Err(Error::InvalidArgument(format!("centralized training needs exactly one site, got {k}")));
    }
    log::info!("registered {k} sites, pi = {:?}", weights.pi());

    let mut rng = actor_rng(config.seed, 0);
    let encoding = if config.conditional { Some(LabelEncoding::new(shape.num_classes)?) } else { None };
    let mut widths = vec![config.noise.dim() + encoding.map_or(0, |e| e.num_classes())];
    widths.extend(&config.generator_hidden);
    widths.push(shape.dim);
    let spec = MlpSpec { widths, leaky_slope: config.leaky_slope, output: config.generator_output };
    let mut generator = Generator::init(spec, config.noise.clone(), encoding, &mut rng)?;
    let mut adam = Adam::new(config.generator_optimizer, generator.net().params());
    let label_dist = match (config.conditional, weights.label_prior()) {
        (true, Some(prior)) => Some(WeightedIndex::new(&prior).map_err(|e| Error::InvalidArgument(format!("label prior: {e}")))?),
        _ => None,
    };
    let sample_labels = |rng: &mut rand_chacha::ChaCha8Rng| {
        label_dist.as_ref().map(|d| (0..config.batch_size).map(|_| d.sample(rng) as u32).collect::<Vec<u32>>())
    };

    let mut center = Center { config, links, next_batch: 0 };
    let mut metrics = Vec::with_capacity(config.rounds as usize);
    let report_every = (config.rounds / 10).max(1);
    for round in 0..config.rounds {
        center.broadcast(&Message::RoundControl { round, directive: Directive::Begin })?;
        let mut disc_losses = vec![0.0; k];
        for _ in 0..config.disc_steps {
            let z = generator.sample_noise(config.batch_size, &mut rng)?;
            let labels = sample_labels(&mut rng);
            let fake = generator.forward(&z, labels.as_deref())?;
            for fb in center.exchange(round, fake, labels)? {
                let [objective] = fb.predictions[..] else {
                    return Err(Error::Protocol(format!("site {} acknowledged with {} values", fb.site, fb.predictions.len())));
                };
                disc_losses[fb.site as usize] += objective / config.disc_steps as f64;
            }
        }
        center.broadcast(&Message::RoundControl { round, directive: Directive::End })?;

        let z = generator.sample_noise(config.batch_size, &mut rng)?;
        let labels = sample_labels(&mut rng);
        let mut tape = Tape::new();
        let (leaves, out) = generator.forward_on(&mut tape, &z, labels.as_deref())?;
        let feedback: Vec<FeedbackBatch> = center
            .exchange(round, tape.value(out).clone(), labels.clone())?
            .into_iter()
            .map(|fb| FeedbackBatch { site: fb.site as usize, predictions: fb.predictions, gradients: fb.gradients })
            .collect();
        for fb in &feedback {
            if fb.batch_size() != config.batch_size {
                return Err(Error::Protocol(format!("site {} answered {} of {} samples", fb.site, fb.batch_size(), config.batch_size)));
            }
        }
        let signal = match config.aggregator {
            AggregatorKind::Ua => ua_generator_gradient(&feedback, &weights, labels.as_deref(), config.loss)?,
            AggregatorKind::Avg => avg_generator_gradient(&feedback, k, config.loss.nonsaturating)?,
            AggregatorKind::Centralized => classical_generator_gradient(&feedback[0], config.loss.nonsaturating)?,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs.on_generator_step(round, &feedback, labels.as_deref(), &signal);
        }
        let mut grads = tape.backward(out, signal.input_grad.clone())?;
        let param_grads: Vec<Tensor> = leaves.iter().map(|&v| grads.take(v)).collect();
        adam.step(generator.net_mut().params_mut(), &param_grads)?;

        let mean_central = signal.central.iter().sum::<f64>() / signal.central.len() as f64;
        let m = RoundMetrics { round, gen_loss: signal.loss, mean_central, disc_losses };
        if round % report_every == 0 || round + 1 == config.rounds {
            log::info!("round {round}: gen_loss {:.4} mean_D {:.4} disc {:?}", m.gen_loss, m.mean_central, m.disc_losses);
        }
        metrics.push(m);
    }
    center.broadcast(&Message::RoundControl { round: config.rounds, directive: Directive::Shutdown })?;
    Ok(TrainingOutcome { generator, metrics, weights })
}

/// Samples `n` generator outputs (labels drawn from `prior` for conditional generators).
pub fn sample_generator<R: Rng + ?Sized>(generator: &Generator, n: usize, prior: Option<&[f64]>, rng: &mut R) -> Result<(Tensor, Option<Vec<u32>>)> {
    let z = generator.sample_noise(n, rng)?;
    let labels = match (generator.labels(), prior) {
        (None, _) => None,
        (Some(enc), p) => {
            let uniform = vec![1.0; enc.num_classes()];
            let dist = WeightedIndex::new(p.unwrap_or(&uniform)).map_err(|e| Error::InvalidArgument(format!("label prior: {e}")))?;
            Some((0..n).map(|_| dist.sample(rng) as u32).collect::<Vec<u32>>())
        }
    };
    Ok((generator.forward(&z, labels.as_deref())?, labels))
}
