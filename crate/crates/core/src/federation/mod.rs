//! Central generator server, local discriminator sites, and the message
//! protocol between them.
//!
//! Each round the center broadcasts `Begin`, runs `disc_steps` synthetic
//! batches that the sites train on (they acknowledge each with their local
//! objective), broadcasts `End`, then sends one fresh batch that every site
//! answers with `D_j(x̂)` and `∂D_j/∂x̂`. The center fuses the answers and
//! updates the generator. Sites only ever emit `SiteHello` and `Feedback`.

mod center;
pub mod protocol;
mod site;
pub mod transport;

use std::collections::HashSet;
use std::net::TcpListener;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use center::{metrics_csv, run_center, sample_generator, DataShape, RoundMetrics, RoundObserver, TrainingOutcome};
pub use protocol::{decode_message, encode_message, Directive, Feedback, Message, SynBatch};
pub use site::{actor_rng, serve, InlineLink, SiteActor, SiteSettings};
pub use transport::{accept_links, channel_pair, ChannelLink, Link, Tapped, TcpLink, Transcript};

use crate::aggregation::GeneratorLoss;
use crate::autodiff::AdamConfig;
use crate::data::{LabeledDataset, SitedDataset};
use crate::error::{Error, Result};
use crate::models::{NoiseSpec, OutputActivation, DEFAULT_LEAKY_SLOPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    Ua,
    Avg,
    /// One discriminator on the merged data (classical GAN reference).
    Centralized,
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub aggregator: AggregatorKind,
    pub rounds: u64,
    pub batch_size: usize,
    pub disc_steps: usize,
    pub loss: GeneratorLoss,
    pub conditional: bool,
    pub noise: NoiseSpec,
    pub generator_hidden: Vec<usize>,
    pub generator_output: OutputActivation,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub generator_optimizer: AdamConfig,
    pub discriminator_optimizer: AdamConfig,
    pub seed: u64,
    pub site_timeout: Duration,
    pub max_retries: u32,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainingConfig {
    /// Settings for the four-Gaussian toy problem.
    pub fn toy(aggregator: AggregatorKind, rounds: u64, seed: u64) -> Self {
        Self {
            aggregator,
            rounds,
            batch_size: 256,
            disc_steps: 1,
            loss: GeneratorLoss::default(),
            conditional: false,
            noise: NoiseSpec::new(vec![0.0, 0.0], 0.5).expect("valid noise"),
            generator_hidden: vec![64, 64],
            generator_output: OutputActivation::Identity,
            discriminator_hidden: vec![64, 64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            generator_optimizer: AdamConfig::default(),
            discriminator_optimizer: AdamConfig::default(),
            seed,
            site_timeout: Duration::from_secs(30),
            max_retries: 3,
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.disc_steps == 0 {
            return Err(Error::Config("batch_size and disc_steps must be positive".into()));
        }
        if self.site_timeout.is_zero() {
            return Err(Error::Config("site timeout must be positive".into()));
        }
        self.noise.validate()
    }

    pub fn site_settings(&self) -> SiteSettings {
        SiteSettings {
            batch_size: self.batch_size,
            hidden: self.discriminator_hidden.clone(),
            leaky_slope: self.leaky_slope,
            optimizer: self.discriminator_optimizer,
            conditional: self.conditional,
            seed: self.seed,
            checkpoint_dir: self.checkpoint_dir.clone(),
        }
    }
}

/// How in-process sites are wired to the center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalTransport {
    /// Sites run on the caller's thread, one message at a time.
    Inline,
    /// One thread per site, channel links.
    Threads,
    /// One thread per site, TCP links via the given listen address (`127.0.0.1:0` picks a port).
    Tcp(String),
}

#[derive(Default)]
pub struct Hooks<'a> {
    pub observer: Option<&'a mut dyn RoundObserver>,
    pub transcript: Option<Transcript>,
}

/// Site datasets for a run: the partition itself, or everything merged onto
/// one site for centralized training.
pub fn site_datasets(config: &TrainingConfig, sited: &SitedDataset) -> Vec<LabeledDataset> {
    match config.aggregator {
        AggregatorKind::Centralized => vec![sited.merged()],
        _ => sited.sites().to_vec(),
    }
}

/// Runs center and sites inside this process.
pub fn run_local(config: &TrainingConfig, sited: &SitedDataset, transport: &LocalTransport, hooks: Hooks<'_>) -> Result<TrainingOutcome> {
    config.validate()?;
    let first = sited.site(0);
    let shape = DataShape { dim: first.dim(), num_classes: first.num_classes() };
    let settings = config.site_settings();
    let actors = site_datasets(config, sited)
        .into_iter()
        .enumerate()
        .map(|(j, data)| SiteActor::new(j, data, settings.clone()))
        .collect::<Result<Vec<_>>>()?;
    let Hooks { observer, transcript } = hooks;

    match transport {
        LocalTransport::Inline => {
            let links: Vec<InlineLink> = actors.into_iter().map(|a| InlineLink::new(a, transcript.clone())).collect();
            run_center(config, shape, links, observer)
        }
        LocalTransport::Threads => thread::scope(|scope| {
            let mut links = Vec::with_capacity(actors.len());
            let mut handles = Vec::with_capacity(actors.len());
            for mut actor in actors {
                let (center_end, site_end) = channel_pair();
                links.push(center_end);
                let mut link = Tapped::new(site_end, transcript.clone());
                handles.push(scope.spawn(move || serve(&mut actor, &mut link)));
            }
            let outcome = run_center(config, shape, links, observer);
            join_sites(handles, outcome)
        }),
        LocalTransport::Tcp(addr) => {
            let listener = TcpListener::bind(addr.as_str())?;
            let bound = listener.local_addr()?;
            let deadline = config.site_timeout * (config.max_retries + 1);
            thread::scope(|scope| {
                let mut handles = Vec::with_capacity(actors.len());
                for mut actor in actors {
                    let transcript = transcript.clone();
                    handles.push(scope.spawn(move || {
                        let mut link = Tapped::new(TcpLink::connect(bound, deadline)?, transcript);
                        serve(&mut actor, &mut link)
                    }));
                }
                let outcome = accept_links(&listener, handles.len(), deadline).and_then(|links| run_center(config, shape, links, observer));
                join_sites(handles, outcome)
            })
        }
    }
}

fn join_sites<T>(handles: Vec<thread::ScopedJoinHandle<'_, Result<()>>>, outcome: Result<T>) -> Result<T> {
    let results: Vec<Result<()>> = handles
        .into_iter()
        .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("site thread panicked".into()))))
        .collect();
    let outcome = outcome?;
    for r in results {
        r?;
    }
    Ok(outcome)
}

/// Runs one site that connects to a remote center over TCP.
pub fn serve_tcp(addr: &str, actor: &mut SiteActor, connect_deadline: Duration) -> Result<()> {
    let mut link = TcpLink::connect(addr, connect_deadline)?;
    serve(actor, &mut link)
}

/// Result of scanning the frames that left the sites.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrivacyAudit {
    pub frames: usize,
    pub feedback_frames: usize,
    pub rows_checked: usize,
    /// Human-readable findings; empty means the transcript is clean.
    pub violations: Vec<String>,
}

impl PrivacyAudit {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that sites sent only `SiteHello`/`Feedback`, and that no gradient
/// row or run of predictions reproduces a real data row bit for bit.
pub fn audit_transcript(frames: &[Vec<u8>], datasets: &[LabeledDataset]) -> PrivacyAudit {
    let key = |row: &[f64]| row.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut real: HashSet<Vec<u64>> = HashSet::new();
    for ds in datasets {
        for i in 0..ds.len() {
            real.insert(key(ds.row(i)));
        }
    }
    let dim = datasets.first().map_or(1, LabeledDataset::dim);
    let mut audit = PrivacyAudit { frames: frames.len(), ..Default::default() };
    for (f, bytes) in frames.iter().enumerate() {
        match decode_message(bytes) {
            Ok(Message::SiteHello { .. }) => {}
            Ok(Message::Feedback(fb)) => {
                audit.feedback_frames += 1;
                let grads = fb.gradients.data();
                let rows = grads.chunks_exact(dim).chain(fb.predictions.chunks_exact(dim));
                for row in rows {
                    audit.rows_checked += 1;
                    if real.contains(&key(row)) {
                        audit.violations.push(format!("frame {f}: site {} sent a real data row", fb.site));
                    }
                }
            }
            Ok(other) => audit.violations.push(format!("frame {f}: site sent {}", other.kind())),
            Err(e) => audit.violations.push(format!("frame {f}: undecodable ({e})")),
        }
    }
    audit
}
