//! Static SVG scatter plots of 2-D samples.

use std::fmt::Write as _;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

/// Values on a regular grid, e.g. a discriminator evaluated over the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatGrid {
    /// `(x0, x1, value)` triples.
    pub cells: Vec<(f64, f64, f64)>,
}

impl HeatGrid {
    /// Parses CSV with header `x0,x1,value`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let fmt = |detail: String| Error::Format { what: "heat grid csv".into(), detail };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("x0,x1,value") {
            return Err(fmt("expected header x0,x1,value".into()));
        }
        let cells = lines
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|f| f.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| fmt(format!("bad row {l:?}")))?;
                match v[..] {
                    [a, b, c] => Ok((a, b, c)),
                    _ => Err(fmt(format!("row {l:?} needs 3 fields"))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { cells })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScatterPlot<'a> {
    pub real: Option<&'a Tensor>,
    pub generated: Option<&'a Tensor>,
    pub noise: Option<&'a Tensor>,
    pub heat: Option<&'a HeatGrid>,
    pub title: Option<&'a str>,
}

fn points(t: Option<&Tensor>) -> Result<Vec<(f64, f64)>> {
    let Some(t) = t else { return Ok(Vec::new()) };
    let (n, d) = t.dims2("scatter")?;
    if n > 0 && d < 2 {
        return Err(Error::shape("scatter", format!("need 2 columns, got {d}")));
    }
    Ok((0..n).map(|i| (t.data()[i * d], t.data()[i * d + 1])).collect())
}

impl ScatterPlot<'_> {
    pub fn render(&self) -> Result<String> {
        let layers = [("real", "#1f77b4", points(self.real)?), ("generated", "#d62728", points(self.generated)?), ("noise", "#7f7f7f", points(self.noise)?)];
        let heat = self.heat.map_or(&[][..], |h| &h.cells[..]);
        let all = layers.iter().flat_map(|l| l.2.iter().copied()).chain(heat.iter().map(|c| (c.0, c.1)));
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in all.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        if lo_x > hi_x {
            (lo_x, hi_x, lo_y, hi_y) = (-1.0, 1.0, -1.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let p = ((hi - lo) * 0.05).max(0.5);
            (lo - p, hi + p)
        };
        let (lo_x, hi_x) = pad(lo_x, hi_x);
        let (lo_y, hi_y) = pad(lo_y, hi_y);
        let span = SIZE - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - lo_x) / (hi_x - lo_x) * span;
        let sy = |y: f64| SIZE - MARGIN - (y - lo_y) / (hi_y - lo_y) * span;

        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
        svg.push_str("<style>.real{fill:#1f77b4}.generated{fill:#d62728}.noise{fill:#7f7f7f}.axis{stroke:#000;stroke-width:1}</style>\n");
        let _ = writeln!(svg, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
        if !heat.is_empty() {
            let cell = (span / (heat.len() as f64).sqrt()).max(1.0);
            svg.push_str("<g class=\"heat\">\n");
            for &(x, y, v) in heat {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="#2ca02c" fill-opacity="{:.3}"/>"##,
                    sx(x) - cell / 2.0,
                    sy(y) - cell / 2.0,
                    v.clamp(0.0, 1.0)
                );
            }
            svg.push_str("</g>\n");
        }
        let (x0, y0) = (sx(0.0f64.clamp(lo_x, hi_x)), sy(0.0f64.clamp(lo_y, hi_y)));
        let _ = writeln!(svg, r#"<line class="axis" x1="{MARGIN}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}"/>"#, SIZE - MARGIN);
        let _ = writeln!(svg, r#"<line class="axis" x1="{x0:.2}" y1="{MARGIN}" x2="{x0:.2}" y2="{:.2}"/>"#, SIZE - MARGIN);
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{:.0}" font-size="11">x0 ∈ [{lo_x:.2}, {hi_x:.2}], x1 ∈ [{lo_y:.2}, {hi_y:.2}]</text>"#, SIZE - 12.0);
        if let Some(t) = self.title {
            let _ = writeln!(svg, r#"<text x="{MARGIN}" y="24" font-size="14">{}</text>"#, escape(t));
        }
        for (class, _, pts) in &layers {
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(svg, r#"<g class="{class}-points">"#);
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="2"/>"#, sx(x), sy(y));
            }
            svg.push_str("</g>\n");
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_marker_per_point() {
        let real = Tensor::matrix(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let gen = Tensor::matrix(1, 2, vec![-1.0, 5.0]).unwrap();
        let svg = ScatterPlot { real: Some(&real), generated: Some(&gen), ..Default::default() }.render().unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches(r#"class="real""#).count(), 2);
        assert_eq!(svg.matches(r#"class="generated""#).count(), 1);
    }

    #[test]
    fn empty_plot_has_axes_only() {
        let empty = Tensor::zeros(&[0, 2]);
        let svg = ScatterPlot { generated: Some(&empty), ..Default::default() }.render().unwrap();
        assert_eq!(svg.matches("<circle").count(), 0);
        assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn heat_grid_parses() {
        let g = HeatGrid::from_csv("x0,x1,value\n0,0,0.5\n1,0,1\n").unwrap();
        assert_eq!(g.cells.len(), 2);
        assert!(HeatGrid::from_csv("x0,x1\n").is_err());
        let svg = ScatterPlot { heat: Some(&g), ..Default::default() }.render().unwrap();
        assert_eq!(svg.matches("fill-opacity").count(), 2);
    }
}
