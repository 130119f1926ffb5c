use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use uagan::config::{self, DataSpec, RunConfig};
use uagan::eval;
use uagan::federation::{self, Hooks, SiteActor};
use uagan::plot::{HeatGrid, ScatterPlot};
use uagan::theory::{self, BoundMode, CorrectnessConfig, LowerBoundConfig, TheoryReport, UpperBoundConfig};
use uagan::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

/// Federated GAN training with odds-value aggregation of local discriminators.
#[derive(Parser)]
#[command(name = "uagan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-mixture dataset and its site partition.
    GenData {
        /// TOML data spec (mixture, sites, partition).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train a generator against the configured sites.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `threads` from the config (1 = deterministic single-threaded schedule).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `rounds` from the config.
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Run the discrete-distribution bound checks.
    VerifyTheory {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Mode coverage (and optional MMD) of a samples file.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        /// `gen-data` output directory (supplies centers and real data).
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = eval::DEFAULT_MIN_FRACTION)]
        min_fraction: f64,
        #[arg(long)]
        mmd_bandwidth: Option<f64>,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
    },
    /// Render real/generated/noise points as an SVG scatter plot.
    Plot {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Grid evaluation file with header `x0,x1,value`.
        #[arg(long)]
        heat: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one discriminator site that connects to a tcp center.
    Site {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        site_id: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Correctness,
    Upper,
    Lower,
    Corollary,
    All,
}

enum Failure {
    Usage(String),
    Verify(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Format { .. } => Failure::Usage(e.to_string()),
            Error::Solver { .. } | Error::Trial { .. } => Failure::Verify(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn gen_data(spec: &Path, out: &Path, seed: u64) -> Result<(), Failure> {
    let spec: DataSpec = toml::from_str(&read_input(spec)?).map_err(|e| Failure::Usage(format!("{}: {e}", spec.display())))?;
    let manifest = config::generate_data(&spec, seed, out)?;
    println!("wrote {} rows over {} sites to {}", manifest.total, manifest.sites.len(), out.display());
    Ok(())
}

fn train(path: &Path, threads: Option<usize>, rounds: Option<u64>) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    if let Some(r) = rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    let report = config::train(&cfg, Hooks::default())?;
    if let Some(last) = report.outcome.metrics.last() {
        println!("round {}: gen_loss {:.4}, mean D {:.4}", last.round, last.gen_loss, last.mean_central);
    }
    if let Some(r) = &report.mode_report {
        println!("covered modes {}/{}, high-quality fraction {:.3}", r.covered, r.num_modes(), r.high_quality_fraction);
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn verify_theory(suite: Suite, seed: u64, out: &Path) -> Result<(), Failure> {
    let run = |s: Suite| matches!(suite, Suite::All) || std::mem::discriminant(&s) == std::mem::discriminant(&suite);
    let mut report = TheoryReport::default();
    if run(Suite::Correctness) {
        report.rows.extend(theory::verify_correctness(&CorrectnessConfig { seed, ..Default::default() })?);
    }
    if run(Suite::Upper) {
        let rows = theory::verify_upper_bound(&UpperBoundConfig { seed, ..Default::default() })?;
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.parameter, r.max_dev)).collect();
        println!("upper: log-log slope of max deviation vs delta = {:.3}", theory::loglog_slope(&pts));
        report.rows.extend(rows);
    }
    if run(Suite::Corollary) {
        let cfg = UpperBoundConfig { seed, mode: BoundMode::Aggregated { max_sites: 8 }, trials: 100, ..Default::default() };
        report.rows.extend(theory::verify_upper_bound(&cfg)?);
    }
    if run(Suite::Lower) {
        report.rows.extend(theory::verify_lower_bound(&LowerBoundConfig { seed, ..Default::default() })?);
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    fs::write(out, report.to_csv()).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    print!("{}", report.summary());
    match report.total_violations() {
        0 => Ok(()),
        v => Err(Failure::Verify(format!("{v} bound violations (report in {})", out.display()))),
    }
}

fn eval_cmd(samples: &Path, data_dir: &Path, radius: Option<f64>, min_fraction: f64, bandwidth: Option<f64>, out: &Path) -> Result<(), Failure> {
    let points = eval::parse_points_csv(&read_input(samples)?, None)?;
    let manifest = config::read_manifest(data_dir)?;
    let centers = manifest.centers.ok_or_else(|| Failure::Usage("manifest has no mode centers".into()))?;
    let radius = radius.unwrap_or_else(|| manifest.variance.map_or_else(eval::default_radius, |v| 3.0 * v.sqrt()));
    let report = eval::mode_coverage(&points, &centers, radius, min_fraction)?;
    let mmd = match bandwidth {
        Some(h) => {
            let real = eval::parse_points_csv(&read_input(&data_dir.join("full.csv"))?, Some(points.cols()))?;
            Some(eval::mmd_rbf(&real, &points, h)?)
        }
        None => None,
    };
    fs::write(out, eval::eval_csv(&report, mmd)).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("covered modes {}/{}, high-quality fraction {:.3}", report.covered, report.num_modes(), report.high_quality_fraction);
    Ok(())
}

fn plot(samples: &Path, data: Option<&Path>, noise: Option<&Path>, heat: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let load = |p: Option<&Path>| -> Result<Option<uagan::Tensor>, Failure> {
        p.map(|p| Ok(eval::parse_points_csv(&read_input(p)?, Some(2))?)).transpose()
    };
    let generated = load(Some(samples))?;
    let real = load(data)?;
    let noise = load(noise)?;
    let heat = heat.map(|p| Ok::<_, Failure>(HeatGrid::from_csv(&read_input(p)?)?)).transpose()?;
    let svg = ScatterPlot { real: real.as_ref(), generated: generated.as_ref(), noise: noise.as_ref(), heat: heat.as_ref(), title: None }.render()?;
    fs::write(out, svg).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    Ok(())
}

fn site(path: &Path, site_id: usize) -> Result<(), Failure> {
    let cfg = RunConfig::load(path)?;
    let addr = match cfg.local_transport()? {
        federation::LocalTransport::Tcp(a) => a,
        _ => return Err(Failure::Usage("the site command needs transport = \"tcp:<addr>\"".into())),
    };
    let training = cfg.training_config()?;
    let data = cfg.load_data()?;
    let mut datasets = federation::site_datasets(&training, &data.sited);
    if site_id >= datasets.len() {
        return Err(Failure::Usage(format!("site id {site_id} outside 0..{}", datasets.len())));
    }
    let mut actor = SiteActor::new(site_id, datasets.swap_remove(site_id), training.site_settings())?;
    let deadline = training.site_timeout * (training.max_retries + 1);
    federation::serve_tcp(&addr, &mut actor, deadline.max(Duration::from_secs(1)))?;
    log::info!("site {site_id} finished");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UAFG_LOG", "info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData { spec, out, seed } => gen_data(spec, out, *seed),
        Command::Train { config, threads, rounds } => train(config, *threads, *rounds),
        Command::VerifyTheory { suite, seed, out } => verify_theory(*suite, *seed, out),
        Command::Eval { samples, data_dir, radius, min_fraction, mmd_bandwidth, out } => {
            eval_cmd(samples, data_dir, *radius, *min_fraction, *mmd_bandwidth, out)
        }
        Command::Plot { samples, data, noise, heat, out } => plot(samples, data.as_deref(), noise.as_deref(), heat.as_deref(), out),
        Command::Site { config, site_id } => site(config, *site_id),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verify(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
