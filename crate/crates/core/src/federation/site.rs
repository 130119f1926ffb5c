//! A local discriminator site: owns private data and never sends it.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{decode_message, encode_message, Directive, Feedback, Message, SynBatch};
use super::transport::{record, Link, Transcript};
use crate::autodiff::{Adam, AdamConfig, Tensor};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{local_discriminator_step, save_checkpoint, Discriminator, DiscriminatorBatch, LabelEncoding, MlpSpec, OutputActivation};

/// Everything a site needs besides its data.
#[derive(Debug, Clone)]
pub struct SiteSettings {
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub optimizer: AdamConfig,
    pub conditional: bool,
    pub seed: u64,
    /// Where `site_{j}.ckpt` is written on shutdown.
    pub checkpoint_dir: Option<PathBuf>,
}

/// RNG for actor `stream`: the center uses stream 0, site `j` stream `j + 1`.
pub fn actor_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Discriminator(u64),
    Generator(u64),
}

pub struct SiteActor {
    id: usize,
    data: LabeledDataset,
    disc: Discriminator,
    adam: Adam,
    rng: ChaCha8Rng,
    settings: SiteSettings,
    phase: Phase,
    /// Last answered batch id and its reply, replayed when the center retries.
    last: Option<(u64, Vec<u8>)>,
    finished: bool,
}

impl SiteActor {
    pub fn new(id: usize, data: LabeledDataset, settings: SiteSettings) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument(format!("site {id} has no data")));
        }
        if settings.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let mut rng = actor_rng(settings.seed, id as u64 + 1);
        let labels = if settings.conditional { Some(LabelEncoding::new(data.num_classes())?) } else { None };
        let extra = labels.map_or(0, |l| l.num_classes());
        let mut widths = vec![data.dim() + extra];
        widths.extend(&settings.hidden);
        widths.push(1);
        let spec = MlpSpec { widths, leaky_slope: settings.leaky_slope, output: OutputActivation::Sigmoid };
        let disc = Discriminator::init(spec, labels, &mut rng)?;
        let adam = Adam::new(settings.optimizer, disc.net().params());
        Ok(Self { id, data, disc, adam, rng, settings, phase: Phase::Idle, last: None, finished: false })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Registration message: sample count and, for conditional runs, class counts.
    pub fn hello(&self) -> Message {
        Message::SiteHello {
            site: self.id as u64,
            n: self.data.len() as u64,
            class_counts: self.settings.conditional.then(|| self.data.class_counts()),
        }
    }

    /// Processes one inbound frame and returns the reply, if any.
    pub fn handle(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>> {
        match decode_message(frame)? {
            Message::RoundControl { round, directive } => {
                match directive {
                    Directive::Begin => self.phase = Phase::Discriminator(round),
                    Directive::End => self.phase = Phase::Generator(round),
                    Directive::Shutdown => self.shutdown()?,
                }
                Ok(None)
            }
            Message::SynBatch(batch) => {
                if let Some((id, reply)) = &self.last {
                    if batch.batch_id == *id {
                        return Ok(Some(reply.clone()));
                    }
                    if batch.batch_id < *id {
                        return Ok(None);
                    }
                }
                let reply = match self.phase {
                    Phase::Discriminator(r) if r == batch.round => self.train_step(&batch)?,
                    Phase::Generator(r) if r == batch.round => {
                        self.phase = Phase::Idle;
                        self.feedback(&batch)?
                    }
                    phase => {
                        return Err(Error::Protocol(format!(
                            "site {}: batch {} for round {} arrived in phase {phase:?}",
                            self.id, batch.batch_id, batch.round
                        )))
                    }
                };
                let bytes = encode_message(&Message::Feedback(reply));
                self.last = Some((batch.batch_id, bytes.clone()));
                Ok(Some(bytes))
            }
            other => Err(Error::Protocol(format!("site {} cannot handle {}", self.id, other.kind()))),
        }
    }

    fn check_batch(&self, batch: &SynBatch) -> Result<()> {
        let (m, d) = batch.samples.dims2("syn_batch")?;
        if d != self.data.dim() || m == 0 {
            return Err(Error::Protocol(format!("site {}: synthetic batch is {m}×{d}, data has {} columns", self.id, self.data.dim())));
        }
        if batch.labels.is_some() != self.settings.conditional {
            return Err(Error::Protocol(format!("site {}: label presence does not match conditional setting", self.id)));
        }
        Ok(())
    }

    fn train_step(&mut self, batch: &SynBatch) -> Result<Feedback> {
        self.check_batch(batch)?;
        let m = batch.samples.rows();
        let idx: Vec<usize> = (0..m).map(|_| self.rng.random_range(0..self.data.len())).collect();
        let real = self.data.select(&idx);
        let conditional = self.settings.conditional;
        let objective = local_discriminator_step(
            &mut self.disc,
            &DiscriminatorBatch {
                real: real.rows(),
                real_labels: conditional.then(|| real.labels()),
                fake: &batch.samples,
                fake_labels: batch.labels.as_deref(),
            },
            &mut self.adam,
        )?;
        // Acknowledgement only: the local objective, no gradients.
        Ok(Feedback {
            round: batch.round,
            batch_id: batch.batch_id,
            site: self.id as u64,
            predictions: vec![objective],
            gradients: Tensor::zeros(&[0, self.data.dim()]),
        })
    }

    fn feedback(&mut self, batch: &SynBatch) -> Result<Feedback> {
        self.check_batch(batch)?;
        let (predictions, gradients) = self.disc.predict_with_input_grad(&batch.samples, batch.labels.as_deref())?;
        Ok(Feedback { round: batch.round, batch_id: batch.batch_id, site: self.id as u64, predictions, gradients })
    }

    fn shutdown(&mut self) -> Result<()> {
        self.finished = true;
        if let Some(dir) = &self.settings.checkpoint_dir {
            let named = self.disc.net().named_params();
            save_checkpoint(&dir.join(format!("site_{}.ckpt", self.id)), named.iter().map(|(n, t)| (n.as_str(), *t)))?;
        }
        Ok(())
    }
}

/// Runs a site over `link` until shutdown. A closed transport ends the loop cleanly.
pub fn serve(actor: &mut SiteActor, link: &mut dyn Link) -> Result<()> {
    match link.send(encode_message(&actor.hello())) {
        Err(Error::TransportClosed) => return Ok(()),
        r => r?,
    }
    while !actor.is_finished() {
        let frame = match link.recv(Duration::from_secs(3600)) {
            Ok(Some(f)) => f,
            Ok(None) => continue,
            Err(Error::TransportClosed) => {
                log::info!("site {}: transport closed", actor.id());
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        if let Some(reply) = actor.handle(&frame)? {
            match link.send(reply) {
                Err(Error::TransportClosed) => return Ok(()),
                r => r?,
            }
        }
    }
    Ok(())
}

/// Single-threaded link: delivering a frame runs the site immediately.
pub struct InlineLink {
    actor: SiteActor,
    outbox: VecDeque<Vec<u8>>,
    transcript: Option<Transcript>,
}

impl InlineLink {
    pub fn new(actor: SiteActor, transcript: Option<Transcript>) -> Self {
        let hello = encode_message(&actor.hello());
        record(&transcript, &hello);
        Self { actor, outbox: VecDeque::from([hello]), transcript }
    }

    pub fn actor(&self) -> &SiteActor {
        &self.actor
    }
}

impl Link for InlineLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        if let Some(reply) = self.actor.handle(&frame)? {
            record(&self.transcript, &reply);
            self.outbox.push_back(reply);
        }
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> Result<Option<Vec<u8>>> {
        Ok(self.outbox.pop_front())
    }
}
