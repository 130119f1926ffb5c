//! Sample-quality metrics for low-dimensional generators: mode coverage
//! around known centers and an RBF-kernel MMD.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Coverage radius used for the toy mixture: three standard deviations of a
/// variance-0.5 mode.
pub fn default_radius() -> f64 {
    3.0 * 0.5f64.sqrt()
}
pub const DEFAULT_MIN_FRACTION: f64 = 0.10;
pub const DEFAULT_EVAL_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    /// Samples within `r` of each center (each sample counts toward its nearest center only).
    pub counts: Vec<usize>,
    pub covered: usize,
    pub high_quality_fraction: f64,
    /// Mean distance of the counted samples to their center; `None` when none were counted.
    pub mean_distance: Vec<Option<f64>>,
    pub total: usize,
}

impl ModeReport {
    pub fn num_modes(&self) -> usize {
        self.counts.len()
    }

    pub fn all_covered(&self) -> bool {
        self.covered == self.counts.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mode_coverage(samples: &Tensor, centers: &[Vec<f64>], radius: f64, min_fraction: f64) -> Result<ModeReport> {
    let (n, d) = samples.dims2("mode_coverage")?;
    if n == 0 {
        return Err(Error::InvalidArgument("mode_coverage needs at least one sample".into()));
    }
    if !(radius > 0.0) || !(min_fraction > 0.0 && min_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("need r > 0 and 0 < f < 1, got r={radius}, f={min_fraction}")));
    }
    if centers.is_empty() || centers.iter().any(|c| c.len() != d) {
        return Err(Error::shape("mode_coverage", format!("centers must be nonempty with dimension {d}")));
    }
    let mut counts = vec![0usize; centers.len()];
    let mut dist_sum = vec![0.0; centers.len()];
    for i in 0..n {
        let x = &samples.data()[i * d..(i + 1) * d];
        let (best, d2) = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, sq_dist(x, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty centers");
        let dist = d2.sqrt();
        if dist <= radius {
            counts[best] += 1;
            dist_sum[best] += dist;
        }
    }
    let threshold = min_fraction * n as f64;
    let covered = counts.iter().filter(|&&c| c as f64 >= threshold).count();
    let hits: usize = counts.iter().sum();
    let mean_distance = counts.iter().zip(&dist_sum).map(|(&c, &s)| (c > 0).then(|| s / c as f64)).collect();
    Ok(ModeReport { counts, covered, high_quality_fraction: hits as f64 / n as f64, mean_distance, total: n })
}

/// Squared MMD with kernel `exp(-|x-y|² / (2h²))`, biased (V-statistic) form:
/// mean K(a,a) + mean K(b,b) − 2 mean K(a,b). It is exactly zero for identical
/// inputs and never negative up to rounding.
pub fn mmd_rbf(a: &Tensor, b: &Tensor, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (na, da) = a.dims2("mmd_rbf")?;
    let (nb, db) = b.dims2("mmd_rbf")?;
    if na == 0 || nb == 0 {
        return Err(Error::InvalidArgument("mmd_rbf needs nonempty sample sets".into()));
    }
    if da != db {
        return Err(Error::shape("mmd_rbf", format!("dimensions {da} vs {db}")));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let mean_kernel = |x: &Tensor, y: &Tensor| {
        let (nx, ny) = (x.shape()[0], y.shape()[0]);
        let mut total = 0.0;
        for i in 0..nx {
            let xi = &x.data()[i * da..(i + 1) * da];
            for j in 0..ny {
                total += (-gamma * sq_dist(xi, &y.data()[j * da..(j + 1) * da])).exp();
            }
        }
        total / (nx * ny) as f64
    };
    let kab = 0.5 * (mean_kernel(a, b) + mean_kernel(b, a));
    Ok(mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * kab)
}

/// `metric,value` rows.
pub fn eval_csv(report: &ModeReport, mmd: Option<f64>) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "covered_modes,{}", report.covered);
    let _ = writeln!(out, "num_modes,{}", report.num_modes());
    let _ = writeln!(out, "high_quality_fraction,{}", report.high_quality_fraction);
    let _ = writeln!(out, "samples,{}", report.total);
    if let Some(m) = mmd {
        let _ = writeln!(out, "mmd2,{m}");
    }
    for (j, (c, d)) in report.counts.iter().zip(&report.mean_distance).enumerate() {
        let _ = writeln!(out, "mode_{j}_count,{c}");
        if let Some(d) = d {
            let _ = writeln!(out, "mode_{j}_mean_distance,{d}");
        }
    }
    out
}

/// Parses `metric,value` rows into pairs.
pub fn parse_eval_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let fmt = |detail: String| Error::Format { what: "eval csv".into(), detail };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("metric,value") {
        return Err(fmt("missing metric,value header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once(',').ok_or_else(|| fmt(format!("bad row {l:?}")))?;
            Ok((k.to_string(), v.trim().parse().map_err(|_| fmt(format!("bad value in {l:?}")))?))
        })
        .collect()
}

/// Points as CSV with header `x0,...,x{d-1}`.
pub fn points_csv(points: &Tensor) -> Result<String> {
    let (n, d) = points.dims2("points_csv")?;
    let mut out = (0..d).map(|c| format!("x{c}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..n {
        let row: Vec<String> = points.data()[i * d..(i + 1) * d].iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Reads the first `dim` numeric columns of a CSV whose header starts with
/// `x0`; extra columns (such as `label`) are ignored. With `dim = None` every
/// `x*` column is used.
pub fn parse_points_csv(text: &str, dim: Option<usize>) -> Result<Tensor> {
    let fmt = |detail: String| Error::Format { what: "points csv".into(), detail };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| fmt("missing header".into()))?;
    let xcols = header.split(',').take_while(|c| c.trim().starts_with('x')).count();
    let d = dim.unwrap_or(xcols);
    if d == 0 || d > xcols {
        return Err(fmt(format!("header {header:?} lacks {d} coordinate columns")));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < d {
            return Err(fmt(format!("row {line:?} has fewer than {d} fields")));
        }
        for f in &fields[..d] {
            data.push(f.trim().parse::<f64>().map_err(|_| fmt(format!("bad number {f:?}")))?);
        }
        n += 1;
    }
    Tensor::new(vec![n, d], data)
}

pub fn write_points_csv(path: &Path, points: &Tensor) -> Result<()> {
    fs::write(path, points_csv(points)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corners() -> Vec<Vec<f64>> {
        vec![vec![10.0, 10.0], vec![10.0, -10.0], vec![-10.0, 10.0], vec![-10.0, -10.0]]
    }

    #[test]
    fn centers_repeated_are_fully_covered() {
        let data: Vec<f64> = (0..8).flat_map(|i| corners()[i % 4].clone()).collect();
        let r = mode_coverage(&Tensor::matrix(8, 2, data).unwrap(), &corners(), 1.0, 0.2).unwrap();
        assert_eq!(r.covered, 4);
        assert_eq!(r.high_quality_fraction, 1.0);
        assert_eq!(r.counts, vec![2; 4]);
    }

    #[test]
    fn origin_collapse_covers_nothing() {
        let r = mode_coverage(&Tensor::zeros(&[100, 2]), &corners(), 3.0, 0.1).unwrap();
        assert_eq!(r.covered, 0);
        assert_eq!(r.high_quality_fraction, 0.0);
        assert!(r.mean_distance.iter().all(Option::is_none));
    }

    #[test]
    fn coverage_argument_errors() {
        let s = Tensor::zeros(&[1, 2]);
        assert!(mode_coverage(&Tensor::zeros(&[0, 2]), &corners(), 1.0, 0.1).is_err());
        assert!(mode_coverage(&s, &corners(), 0.0, 0.1).is_err());
        assert!(mode_coverage(&s, &corners(), 1.0, 1.0).is_err());
        assert!(mode_coverage(&s, &[vec![0.0]], 1.0, 0.5).is_err());
    }

    #[test]
    fn mmd_basics() {
        let a = Tensor::matrix(3, 2, vec![0.0, 0.1, 0.3, -0.2, 1.0, 0.5]).unwrap();
        assert_eq!(mmd_rbf(&a, &a, 1.0).unwrap(), 0.0);
        let far = a.map(|v| v + 100.0);
        assert!(mmd_rbf(&a, &far, 1.0).unwrap() > 0.5);
        assert!(mmd_rbf(&a, &far, 0.0).is_err());
        assert!(mmd_rbf(&a, &Tensor::zeros(&[0, 2]), 1.0).is_err());
    }

    #[test]
    fn eval_csv_roundtrip() {
        let r = mode_coverage(&Tensor::zeros(&[4, 2]), &[vec![0.0, 0.0]], 1.0, 0.5).unwrap();
        let rows = parse_eval_csv(&eval_csv(&r, Some(0.25))).unwrap();
        assert!(rows.contains(&("covered_modes".to_string(), 1.0)));
        assert!(rows.contains(&("mmd2".to_string(), 0.25)));
    }

    #[test]
    fn points_roundtrip() {
        let p = Tensor::matrix(2, 2, vec![1.5, -2.0, 1e-9, 3.0]).unwrap();
        assert_eq!(parse_points_csv(&points_csv(&p).unwrap(), None).unwrap(), p);
        assert_eq!(parse_points_csv("x0,x1,label\n1,2,0\n", None).unwrap().shape(), &[1, 2]);
        assert!(parse_points_csv("x0,x1\n1\n", None).is_err());
    }
}
