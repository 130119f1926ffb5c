//! TOML run configuration and the train pipeline built on it.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aggregation::GeneratorLoss;
use crate::autodiff::{AdamConfig, Tensor};
use crate::data::{
    gen_gaussian_mixture, load_idx_dataset, partition, GaussianMixtureSpec, LabeledDataset, PartitionMode, PartitionPlan, SitedDataset,
};
use crate::error::{Error, Result};
use crate::eval::{self, DEFAULT_EVAL_SAMPLES, DEFAULT_MIN_FRACTION};
use crate::federation::{self, actor_rng, AggregatorKind, Hooks, LocalTransport, TrainingConfig, TrainingOutcome};
use crate::models::{save_checkpoint, NoiseSpec, OutputActivation, DEFAULT_LEAKY_SLOPE};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorKind,
    pub rounds: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "one")]
    pub disc_steps: usize,
    #[serde(default)]
    pub nonsaturating: bool,
    #[serde(default)]
    pub conditional: bool,
    #[serde(default)]
    pub normalize_conditional_weights: bool,
    /// `inproc` or `tcp:<addr>`.
    #[serde(default = "default_transport")]
    pub transport: String,
    /// 1 = deterministic single-threaded schedule; more = one thread per site.
    #[serde(default = "one")]
    pub threads: usize,
    /// With tcp transport: run the sites inside this process (otherwise start
    /// them with the `site` subcommand).
    #[serde(default = "yes")]
    pub spawn_sites: bool,
    #[serde(default = "default_timeout")]
    pub site_timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "yes")]
    pub checkpoints: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_aggregator() -> AggregatorKind {
    AggregatorKind::Ua
}
fn default_batch() -> usize {
    256
}
fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_transport() -> String {
    "inproc".into()
}
fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}

/// Where site data comes from. Exactly one of `dir`, `generate`, `idx` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Output of `gen-data`: site files listed in `manifest.toml`.
    pub dir: Option<PathBuf>,
    pub generate: Option<GenerateConfig>,
    pub idx: Option<IdxConfig>,
    /// Number of sites for `generate`/`idx`.
    pub sites: Option<usize>,
    pub partition: Option<PartitionPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(flatten)]
    pub mixture: GaussianMixtureSpec,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub hidden: Vec<usize>,
    pub output: OutputActivation,
    pub noise_mean: Vec<f64>,
    pub noise_variance: f64,
    pub leaky_slope: f64,
    pub optimizer: AdamConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            output: OutputActivation::Identity,
            noise_mean: vec![0.0, 0.0],
            noise_variance: 0.5,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            optimizer: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub optimizer: AdamConfig,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], optimizer: AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub samples: usize,
    /// Coverage radius; defaults to three standard deviations of the mixture modes.
    pub radius: Option<f64>,
    pub min_fraction: f64,
    /// Mode centers; taken from the data spec or manifest when absent.
    pub centers: Option<Vec<Vec<f64>>>,
    /// RBF bandwidth for MMD against real data; MMD is skipped when absent.
    pub mmd_bandwidth: Option<f64>,
    /// Real points used for MMD (subsampled deterministically).
    pub mmd_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_EVAL_SAMPLES, radius: None, min_fraction: DEFAULT_MIN_FRACTION, centers: None, mmd_bandwidth: None, mmd_samples: 1024, seed: 0 }
    }
}

/// `gen-data` output description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub dim: usize,
    pub num_classes: usize,
    pub total: usize,
    pub partition: PartitionPlan,
    pub centers: Option<Vec<Vec<f64>>>,
    pub variance: Option<f64>,
    pub sites: Vec<ManifestSite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSite {
    pub file: String,
    pub n: usize,
    pub pi: f64,
}

/// `gen-data --spec` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub mixture: GaussianMixtureSpec,
    pub sites: usize,
    pub partition: PartitionMode,
}

impl DataSpec {
    pub fn toy() -> Self {
        Self { mixture: GaussianMixtureSpec::toy(2500), sites: 4, partition: PartitionMode::ByMode }
    }
}

/// Writes `full.csv`, `site_{j}.csv` and `manifest.toml` into `out`.
pub fn generate_data(spec: &DataSpec, seed: u64, out: &Path) -> Result<Manifest> {
    let full = gen_gaussian_mixture(&spec.mixture, seed)?;
    let plan = PartitionPlan::new(spec.partition.clone(), seed);
    let sited = partition(&full, &plan, spec.sites)?;
    fs::create_dir_all(out)?;
    full.write_csv(&out.join("full.csv"))?;
    let pi = sited.pi();
    let mut sites = Vec::with_capacity(sited.num_sites());
    for (j, site) in sited.sites().iter().enumerate() {
        let file = format!("site_{j}.csv");
        site.write_csv(&out.join(&file))?;
        sites.push(ManifestSite { file, n: site.len(), pi: pi[j] });
    }
    let manifest = Manifest {
        seed,
        dim: full.dim(),
        num_classes: full.num_classes(),
        total: full.len(),
        partition: plan,
        centers: Some(spec.mixture.centers.clone()),
        variance: Some(spec.mixture.variance),
        sites,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format { what: "manifest".into(), detail: e.to_string() })?;
    fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Site data plus what the evaluation needs to know about it.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub sited: SitedDataset,
    pub centers: Option<Vec<Vec<f64>>>,
    pub variance: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out_dir = resolve(base, &cfg.out_dir);
        if let Some(d) = &mut cfg.data.dir {
            *d = resolve(base, d);
        }
        if let Some(idx) = &mut cfg.data.idx {
            idx.images = resolve(base, &idx.images);
            idx.labels = resolve(base, &idx.labels);
        }
        for p in cfg.data.dir.iter().chain(cfg.data.idx.iter().flat_map(|i| [&i.images, &i.labels])) {
            if !p.exists() {
                return Err(Error::Config(format!("path {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [self.data.dir.is_some(), self.data.generate.is_some(), self.data.idx.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(Error::Config("data needs exactly one of dir, generate, idx".into()));
        }
        if self.data.dir.is_none() && self.data.sites.is_none() {
            return Err(Error::Config("data.sites is required unless data.dir is given".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !(self.site_timeout_secs > 0.0 && self.site_timeout_secs.is_finite()) {
            return Err(Error::Config("site_timeout_secs must be positive".into()));
        }
        self.local_transport()?;
        if self.aggregator == AggregatorKind::Centralized && self.transport != "inproc" && !self.spawn_sites {
            return Err(Error::Config("centralized runs need spawn_sites = true".into()));
        }
        if self.generator.noise_mean.is_empty() || !(self.generator.noise_variance > 0.0) {
            return Err(Error::Config("generator noise needs a dimension and positive variance".into()));
        }
        Ok(())
    }

    /// Transport as seen from this process.
    pub fn local_transport(&self) -> Result<LocalTransport> {
        match self.transport.as_str() {
            "inproc" if self.threads <= 1 => Ok(LocalTransport::Inline),
            "inproc" => Ok(LocalTransport::Threads),
            t => match t.strip_prefix("tcp:") {
                Some(addr) if !addr.is_empty() => Ok(LocalTransport::Tcp(addr.to_string())),
                _ => Err(Error::Config(format!("transport must be inproc or tcp:<addr>, got {t:?}"))),
            },
        }
    }

    pub fn training_config(&self) -> Result<TrainingConfig> {
        let cfg = TrainingConfig {
            aggregator: self.aggregator,
            rounds: self.rounds,
            batch_size: self.batch_size,
            disc_steps: self.disc_steps,
            loss: GeneratorLoss { nonsaturating: self.nonsaturating, normalize_conditional_weights: self.normalize_conditional_weights },
            conditional: self.conditional,
            noise: NoiseSpec::new(self.generator.noise_mean.clone(), self.generator.noise_variance)?,
            generator_hidden: self.generator.hidden.clone(),
            generator_output: self.generator.output,
            discriminator_hidden: self.discriminator.hidden.clone(),
            leaky_slope: self.generator.leaky_slope,
            generator_optimizer: self.generator.optimizer,
            discriminator_optimizer: self.discriminator.optimizer,
            seed: self.seed,
            site_timeout: Duration::from_secs_f64(self.site_timeout_secs),
            max_retries: self.max_retries,
            checkpoint_dir: self.checkpoints.then(|| self.out_dir.clone()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_data(&self) -> Result<LoadedData> {
        if let Some(dir) = &self.data.dir {
            let manifest = read_manifest(dir)?;
            let sites = manifest
                .sites
                .iter()
                .map(|s| LabeledDataset::read_csv(&dir.join(&s.file), Some(manifest.num_classes)))
                .collect::<Result<Vec<_>>>()?;
            if let Some(k) = self.data.sites {
                if k != sites.len() {
                    return Err(Error::Config(format!("data.sites = {k} but manifest lists {} sites", sites.len())));
                }
            }
            return Ok(LoadedData { sited: SitedDataset::new(sites)?, centers: manifest.centers, variance: manifest.variance });
        }
        let k = self.data.sites.expect("validated");
        let plan = self.data.partition.clone().unwrap_or(PartitionPlan::new(PartitionMode::Iid, self.seed));
        if let Some(g) = &self.data.generate {
            let full = gen_gaussian_mixture(&g.mixture, g.seed)?;
            return Ok(LoadedData { sited: partition(&full, &plan, k)?, centers: Some(g.mixture.centers.clone()), variance: Some(g.mixture.variance) });
        }
        let idx = self.data.idx.as_ref().expect("validated");
        let full = load_idx_dataset(&idx.images, &idx.labels)?;
        Ok(LoadedData { sited: partition(&full, &plan, k)?, centers: None, variance: None })
    }
}

/// Artifacts of a finished `train` run.
#[derive(Debug)]
pub struct TrainReport {
    pub outcome: TrainingOutcome,
    pub samples: Tensor,
    pub mode_report: Option<eval::ModeReport>,
    pub mmd: Option<f64>,
}

/// Loads data, trains, evaluates, and writes `metrics.csv`, `samples.csv`,
/// `eval.csv` and `generator.ckpt` (plus `site_{j}.ckpt`) into `out_dir`.
pub fn train(cfg: &RunConfig, hooks: Hooks<'_>) -> Result<TrainReport> {
    let data = cfg.load_data()?;
    let training = cfg.training_config()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let transport = cfg.local_transport()?;
    let outcome = match &transport {
        LocalTransport::Tcp(addr) if !cfg.spawn_sites => {
            let first = data.sited.site(0);
            let shape = federation::DataShape { dim: first.dim(), num_classes: first.num_classes() };
            let listener = std::net::TcpListener::bind(addr.as_str())?;
            let wait = training.site_timeout * (training.max_retries + 1);
            let links = federation::accept_links(&listener, data.sited.num_sites(), wait)?;
            federation::run_center(&training, shape, links, hooks.observer)?
        }
        t => federation::run_local(&training, &data.sited, t, hooks)?,
    };
    fs::write(cfg.out_dir.join("metrics.csv"), federation::metrics_csv(&outcome.metrics))?;
    if cfg.checkpoints {
        let named = outcome.generator.net().named_params();
        save_checkpoint(&cfg.out_dir.join("generator.ckpt"), named.iter().map(|(n, t)| (n.as_str(), *t)))?;
    }

    let mut rng = actor_rng(cfg.eval.seed, u64::MAX);
    let prior = outcome.weights.label_prior();
    let (samples, _) = federation::sample_generator(&outcome.generator, cfg.eval.samples.max(1), prior.as_deref(), &mut rng)?;
    eval::write_points_csv(&cfg.out_dir.join("samples.csv"), &samples)?;

    let centers = cfg.eval.centers.clone().or(data.centers);
    let radius = cfg.eval.radius.unwrap_or_else(|| data.variance.map_or_else(eval::default_radius, |v| 3.0 * v.sqrt()));
    let mode_report = centers.map(|c| eval::mode_coverage(&samples, &c, radius, cfg.eval.min_fraction)).transpose()?;
    let mmd = match cfg.eval.mmd_bandwidth {
        Some(h) => {
            let real = data.sited.merged();
            let n = real.len().min(cfg.eval.mmd_samples.max(1));
            let stride = real.len() / n;
            let idx: Vec<usize> = (0..n).map(|i| i * stride).collect();
            let m = samples.rows().min(n);
            let gen = Tensor::new(vec![m, samples.cols()], samples.data()[..m * samples.cols()].to_vec())?;
            Some(eval::mmd_rbf(real.select(&idx).rows(), &gen, h)?)
        }
        None => None,
    };
    if let Some(r) = &mode_report {
        fs::write(cfg.out_dir.join("eval.csv"), eval::eval_csv(r, mmd))?;
    } else if let Some(m) = mmd {
        fs::write(cfg.out_dir.join("eval.csv"), format!("metric,value\nmmd2,{m}\n"))?;
    }
    Ok(TrainReport { outcome, samples, mode_report, mmd })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
rounds = 3
[data]
sites = 4
partition = { mode = "by-mode" }
[data.generate]
centers = [[10.0, 10.0], [10.0, -10.0], [-10.0, 10.0], [-10.0, -10.0]]
variance = 0.5
samples_per_mode = 50
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.aggregator, AggregatorKind::Ua);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.local_transport().unwrap(), LocalTransport::Inline);
        let t = cfg.training_config().unwrap();
        assert_eq!(t.site_timeout, Duration::from_secs(30));
        assert_eq!(t.generator_optimizer.lr, 1e-3);
        assert_eq!(cfg.load_data().unwrap().sited.counts(), vec![50; 4]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("rounds = 1\n[data]\nsites = 1\n").is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("rounds = 3", "rounds = 3\ntransport = \"udp\"")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("rounds = 3", "rounds = 3\nbogus = 1")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("rounds = 3", "rounds = 3\nthreads = 0")).is_err());
    }

    #[test]
    fn tcp_transport_parses() {
        let cfg = RunConfig::from_toml(&MINIMAL.replace("rounds = 3", "rounds = 3\ntransport = \"tcp:127.0.0.1:0\"")).unwrap();
        assert_eq!(cfg.local_transport().unwrap(), LocalTransport::Tcp("127.0.0.1:0".into()));
    }
}
