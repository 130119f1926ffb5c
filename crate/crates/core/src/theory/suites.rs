//! Randomised verification suites for the correctness and suboptimality bounds.
//!
//! Each suite returns [`BoundRow`]s. For upper-bound rows `max_dev` is the
//! largest deviation seen and a violation is a deviation above `bound`; for
//! lower-bound rows `max_dev` is the *smallest* per-instance deviation seen and
//! a violation is an instance whose deviation falls below `bound`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::distribution::{total_variation, DiscreteDistribution, PerturbationSpec};
use super::solver::{minimize_perturbed_js, optimal_discriminator, stationarity_residual};
use crate::aggregation::{aggregate_log_odds, aggregate_odds, inv_odds, MixtureWeights};
use crate::error::{Error, Result};

pub const DEFAULT_DELTAS: [f64; 4] = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
pub const MIN_MASS: f64 = 1e-3;
pub const CSV_HEADER: &str = "theorem,delta_or_gamma,trials,violations,max_dev,bound";

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub theorem: String,
    pub parameter: f64,
    pub trials: usize,
    pub violations: usize,
    pub max_dev: f64,
    pub bound: f64,
}

impl BoundRow {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct TheoryReport {
    pub rows: Vec<BoundRow>,
}

impl TheoryReport {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.theorem, r.parameter, r.trials, r.violations, r.max_dev, r.bound);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let status = if r.passed() { "ok  " } else { "FAIL" };
            let _ = writeln!(
                out,
                "{status} {:<22} param={:<10.6} trials={:<4} violations={:<4} dev={:.3e} bound={:.3e}",
                r.theorem, r.parameter, r.trials, r.violations, r.max_dev, r.bound
            );
        }
        out
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn in_trial<T>(suite: &'static str, trial: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Trial { suite, trial, source: Box::new(e) })
}

/// `max_x |q(x)/p(x) - 1|`.
pub fn max_ratio_deviation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    p.mass()
        .iter()
        .zip(q.mass())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| (b / a - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone)]
pub struct CorrectnessConfig {
    pub instances: usize,
    pub max_support: usize,
    pub max_sites: usize,
    pub seed: u64,
}

impl Default for CorrectnessConfig {
    fn default() -> Self {
        Self { instances: 100, max_support: 32, max_sites: 8, seed: 1 }
    }
}

/// Unperturbed solver recovers `p`, and optimal locals aggregate to `p/(p+q)`.
pub fn verify_correctness(cfg: &CorrectnessConfig) -> Result<Vec<BoundRow>> {
    const SOLVER_TOL: f64 = 1e-10;
    const STATIONARITY_TOL: f64 = 1e-9;
    const IDENTITY_TOL: f64 = 1e-12;

    let mut solver_row = BoundRow {
        theorem: "correctness".into(),
        parameter: 0.0,
        trials: cfg.instances,
        violations: 0,
        max_dev: 0.0,
        bound: SOLVER_TOL,
    };
    let mut identity_row = BoundRow { theorem: "ua_identity".into(), bound: IDENTITY_TOL, ..solver_row.clone() };

    for t in 0..cfg.instances {
        let mut rng = trial_rng(cfg.seed, t);
        let s = rng.random_range(2..=cfg.max_support);
        let p = in_trial("correctness", t, DiscreteDistribution::random(s, MIN_MASS, &mut rng))?;
        let xi = PerturbationSpec::unperturbed(s);
        let state = in_trial("correctness", t, minimize_perturbed_js(&p, &xi))?;
        let dev = p.mass().iter().zip(state.q.mass()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let res = stationarity_residual(&p, &xi, &state);
        solver_row.max_dev = solver_row.max_dev.max(dev);
        if dev > SOLVER_TOL || res > STATIONARITY_TOL {
            solver_row.violations += 1;
        }

        let (err, _) = in_trial("ua_identity", t, ua_identity_instance(&mut rng, cfg.max_support, cfg.max_sites))?;
        identity_row.max_dev = identity_row.max_dev.max(err);
        if err > IDENTITY_TOL {
            identity_row.violations += 1;
        }
    }
    Ok(vec![solver_row, identity_row])
}

/// One random instance of the optimality identity. Returns the worst relative
/// error of `D_ua` against `p/(p+q)` and of `Φ(D_ua)` against `p/q`.
pub fn ua_identity_instance<R: Rng + ?Sized>(rng: &mut R, max_support: usize, max_sites: usize) -> Result<(f64, f64)> {
    let s = rng.random_range(2..=max_support);
    let k = rng.random_range(1..=max_sites);
    let locals = (0..k).map(|_| DiscreteDistribution::random(s, MIN_MASS, rng)).collect::<Result<Vec<_>>>()?;
    let pi = DiscreteDistribution::random(k, 0.0, rng)?.into_mass();
    let weights = MixtureWeights::new(pi.clone())?;
    let q = DiscreteDistribution::random(s, MIN_MASS, rng)?;
    let p = DiscreteDistribution::mixture(&locals, &pi)?;
    let optimal: Vec<Vec<f64>> = locals.iter().map(|pj| optimal_discriminator(pj, &q)).collect::<Result<_>>()?;

    let mut worst_d = 0.0f64;
    let mut worst_odds = 0.0f64;
    for x in 0..s {
        let preds: Vec<f64> = optimal.iter().map(|d| d[x]).collect();
        let d_ua = aggregate_odds(&preds, &weights)?;
        let (px, qx) = (p.mass()[x], q.mass()[x]);
        let expected = px / (px + qx);
        worst_d = worst_d.max(((d_ua - expected) / expected).abs());
        let odds = aggregate_log_odds(&preds, weights.pi())?.exp();
        worst_odds = worst_odds.max((odds / (px / qx) - 1.0).abs());
    }
    Ok((worst_d.max(worst_odds), worst_odds))
}

#[derive(Debug, Clone)]
pub enum BoundMode {
    /// One perturbed discriminator.
    Single,
    /// `K ∈ [1, max_sites]` perturbed optimal locals combined by odds aggregation.
    Aggregated { max_sites: usize },
}

#[derive(Debug, Clone)]
pub struct UpperBoundConfig {
    pub trials: usize,
    pub max_support: usize,
    pub mode: BoundMode,
    pub deltas: Vec<f64>,
    pub seed: u64,
}

impl Default for UpperBoundConfig {
    fn default() -> Self {
        Self { trials: 200, max_support: 32, mode: BoundMode::Single, deltas: DEFAULT_DELTAS.to_vec(), seed: 2 }
    }
}

/// Draws shared with every δ of a trial, so deviations are comparable across δ.
struct UpperTrial {
    p: DiscreteDistribution,
    /// `u ∈ [-1, 1]` per point (per site in aggregated mode); `ξ = 1 + δ u`.
    unit: Vec<Vec<f64>>,
    aggregated: Option<AggregatedInstance>,
}

struct AggregatedInstance {
    locals: Vec<DiscreteDistribution>,
    pi: Vec<f64>,
    q: DiscreteDistribution,
}

fn draw_upper_trial(cfg: &UpperBoundConfig, t: usize) -> Result<UpperTrial> {
    let mut rng = trial_rng(cfg.seed, t);
    let s = rng.random_range(2..=cfg.max_support);
    let unit_row = |rng: &mut ChaCha8Rng| (0..s).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
    match cfg.mode {
        BoundMode::Single => {
            let p = DiscreteDistribution::random(s, MIN_MASS, &mut rng)?;
            let unit = vec![unit_row(&mut rng)];
            Ok(UpperTrial { p, unit, aggregated: None })
        }
        BoundMode::Aggregated { max_sites } => {
            let k = rng.random_range(1..=max_sites);
            let locals = (0..k).map(|_| DiscreteDistribution::random(s, MIN_MASS, &mut rng)).collect::<Result<Vec<_>>>()?;
            let pi = DiscreteDistribution::random(k, 0.0, &mut rng)?.into_mass();
            let q = DiscreteDistribution::random(s, MIN_MASS, &mut rng)?;
            let unit = (0..k).map(|_| unit_row(&mut rng)).collect();
            let p = DiscreteDistribution::mixture(&locals, &pi)?;
            Ok(UpperTrial { p, unit, aggregated: Some(AggregatedInstance { locals, pi, q }) })
        }
    }
}

/// Effective odds perturbation seen by the generator after aggregating
/// perturbed optimal locals: `Φ(D̃_ua)·q/p`, computed through the aggregator.
///
/// Also returns the closed form `Σ π_j p_j ξ_j / Σ π_j p_j` for comparison.
pub fn aggregated_perturbation(
    locals: &[DiscreteDistribution],
    pi: &[f64],
    q: &DiscreteDistribution,
    xi: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = DiscreteDistribution::mixture(locals, pi)?;
    let s = p.support();
    let mut observed = Vec::with_capacity(s);
    let mut closed = Vec::with_capacity(s);
    for x in 0..s {
        let qx = q.mass()[x];
        let preds: Vec<f64> = locals
            .iter()
            .zip(xi)
            .map(|(pj, xj)| inv_odds(xj[x] * pj.mass()[x] / qx))
            .collect::<Result<_>>()?;
        let phi_ua = aggregate_log_odds(&preds, pi)?.exp();
        let px = p.mass()[x];
        observed.push(phi_ua * qx / px);
        let num: f64 = locals.iter().zip(pi).zip(xi).map(|((pj, w), xj)| w * pj.mass()[x] * xj[x]).sum();
        closed.push(num / px);
    }
    Ok((observed, closed))
}

pub fn verify_upper_bound(cfg: &UpperBoundConfig) -> Result<Vec<BoundRow>> {
    const ODDS_TOL: f64 = 1e-12;
    let trials: Vec<UpperTrial> = (0..cfg.trials)
        .map(|t| in_trial("upper", t, draw_upper_trial(cfg, t)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &delta in &cfg.deltas {
        if !(0.0..=1.0 / 8.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside [0, 1/8]")));
        }
        let row = |name: &str, bound: f64| BoundRow {
            theorem: name.into(),
            parameter: delta,
            trials: cfg.trials,
            violations: 0,
            max_dev: 0.0,
            bound,
        };
        let mut ratio_row = row(if trials.first().is_some_and(|t| t.aggregated.is_some()) { "aggregated_ratio" } else { "upper_bound" }, 16.0 * delta);
        let mut odds_row = row("aggregated_odds", delta);
        let mut tv_row = row("aggregated_tv", 8.0 * delta);

        for (t, trial) in trials.iter().enumerate() {
            let xi_of = |u: &Vec<f64>| u.iter().map(|v| 1.0 + delta * v).collect::<Vec<f64>>();
            let effective = match &trial.aggregated {
                None => xi_of(&trial.unit[0]),
                Some(inst) => {
                    let per_site: Vec<Vec<f64>> = trial.unit.iter().map(xi_of).collect();
                    let (observed, closed) = in_trial("aggregated", t, aggregated_perturbation(&inst.locals, &inst.pi, &inst.q, &per_site))?;
                    let mut bad = false;
                    for (o, c) in observed.iter().zip(&closed) {
                        let dev = (o - 1.0).abs();
                        odds_row.max_dev = odds_row.max_dev.max(dev);
                        bad |= dev > delta + ODDS_TOL || (o - c).abs() > ODDS_TOL * c;
                    }
                    odds_row.violations += usize::from(bad);
                    observed
                }
            };
            let spec = in_trial("upper", t, PerturbationSpec::new(effective, Some(delta), None))?;
            let state = in_trial("upper", t, minimize_perturbed_js(&trial.p, &spec))?;
            let dev = max_ratio_deviation(&trial.p, &state.q);
            ratio_row.max_dev = ratio_row.max_dev.max(dev);
            ratio_row.violations += usize::from(dev > 16.0 * delta);
            if trial.aggregated.is_some() {
                let tv = total_variation(&trial.p, &state.q)?;
                tv_row.max_dev = tv_row.max_dev.max(tv);
                tv_row.violations += usize::from(tv > 8.0 * delta);
            }
        }
        match cfg.mode {
            BoundMode::Single => rows.push(ratio_row),
            BoundMode::Aggregated { .. } => rows.extend([odds_row, ratio_row, tv_row]),
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// `ξ ≡ 1 + γ`.
    ConstantInflation,
    /// `ξ(x) = 1 + γ` on even points, `1 - γ` on odd points.
    SignAlternating,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::ConstantInflation => "lower_constant",
            Construction::SignAlternating => "lower_alternating",
        }
    }

    pub fn xi(self, support: usize, gamma: f64) -> Vec<f64> {
        (0..support)
            .map(|x| match self {
                Construction::ConstantInflation => 1.0 + gamma,
                Construction::SignAlternating if x % 2 == 0 => 1.0 + gamma,
                Construction::SignAlternating => 1.0 - gamma,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LowerBoundConfig {
    pub gammas: Vec<f64>,
    pub constructions: Vec<Construction>,
    /// Random targets in addition to the uniform distribution on 4 points.
    pub random_instances: usize,
    pub max_support: usize,
    pub seed: u64,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            gammas: DEFAULT_DELTAS.to_vec(),
            constructions: vec![Construction::ConstantInflation, Construction::SignAlternating],
            random_instances: 20,
            max_support: 32,
            seed: 3,
        }
    }
}

/// Lower-bound constant asserted for adversarial perturbations: `γ/64`.
pub fn lower_bound(gamma: f64) -> f64 {
    gamma / 64.0
}

pub fn verify_lower_bound(cfg: &LowerBoundConfig) -> Result<Vec<BoundRow>> {
    let mut targets = vec![DiscreteDistribution::uniform(4)?];
    for t in 0..cfg.random_instances {
        let mut rng = trial_rng(cfg.seed, t);
        let s = rng.random_range(2..=cfg.max_support);
        targets.push(in_trial("lower", t, DiscreteDistribution::random(s, MIN_MASS, &mut rng))?);
    }
    let mut rows = Vec::new();
    for &construction in &cfg.constructions {
        for &gamma in &cfg.gammas {
            let bound = lower_bound(gamma);
            let mut row = BoundRow {
                theorem: construction.name().into(),
                parameter: gamma,
                trials: targets.len(),
                violations: 0,
                max_dev: f64::INFINITY,
                bound,
            };
            for (t, p) in targets.iter().enumerate() {
                let spec = in_trial("lower", t, PerturbationSpec::new(construction.xi(p.support(), gamma), None, Some(gamma)))?;
                let state = in_trial("lower", t, minimize_perturbed_js(p, &spec))?;
                let dev = max_ratio_deviation(p, &state.q);
                row.max_dev = row.max_dev.min(dev);
                row.violations += usize::from(dev < bound);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let report = TheoryReport {
            rows: vec![BoundRow { theorem: "upper_bound".into(), parameter: 0.125, trials: 3, violations: 0, max_dev: 0.5, bound: 2.0 }],
        };
        assert_eq!(report.to_csv(), "theorem,delta_or_gamma,trials,violations,max_dev,bound\nupper_bound,0.125,3,0,0.5,2\n");
    }

    #[test]
    fn zero_delta_has_zero_deviation() {
        let cfg = UpperBoundConfig { trials: 10, deltas: vec![0.0], ..Default::default() };
        let rows = verify_upper_bound(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].max_dev < 1e-10, "{}", rows[0].max_dev);
    }

    #[test]
    fn zero_gamma_is_trivial() {
        let cfg = LowerBoundConfig { gammas: vec![0.0], random_instances: 2, ..Default::default() };
        let rows = verify_lower_bound(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.violations == 0 && r.bound == 0.0));
    }

    #[test]
    fn constructions() {
        assert_eq!(Construction::SignAlternating.xi(3, 0.1), vec![1.1, 0.9, 1.1]);
        assert_eq!(Construction::ConstantInflation.xi(2, 0.1), vec![1.1, 1.1]);
    }
}
