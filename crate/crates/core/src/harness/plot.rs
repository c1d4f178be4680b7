use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::config::PlotY;
use super::experiment::ResultTable;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
/// Reference level drawn on scaled-rate plots.
pub const SCALED_FLOOR: f64 = 0.1;

struct LogAxis {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl LogAxis {
    fn new(values: impl Iterator<Item = f64>, a: f64, b: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v.log10()), h.max(v.log10()))
        });
        lo = lo.floor();
        hi = hi.ceil();
        if hi <= lo {
            hi = lo + 1.0;
        }
        Self { lo, hi, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v.log10() - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo as i32)..=(self.hi as i32)
    }
}

/// Render aggregated rows as an SVG log-log plot of rate against dimension,
/// one series per objective, alpha rule and kappa.
pub fn render_svg(table: &ResultTable, y: PlotY) -> Result<String> {
    let mut series: BTreeMap<(String, String, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for r in table.aggregates() {
        let v = match y {
            PlotY::ScaledRate => r.scaled_rate,
            PlotY::CrHat => r.cr_hat,
        };
        if v.is_finite() && v > 0.0 {
            series
                .entry((r.objective.clone(), r.alpha_rule.to_string(), r.kappa))
                .or_default()
                .push((r.d as f64, v));
        }
    }
    if series.is_empty() {
        return Err(Error::invalid(
            "no aggregated rows with a positive value to plot",
        ));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all = || series.values().flatten();
    let xa = LogAxis::new(all().map(|p| p.0), MARGIN_L, WIDTH - MARGIN_R);
    let floor = (y == PlotY::ScaledRate).then_some(SCALED_FLOOR);
    let ya = LogAxis::new(all().map(|p| p.1).chain(floor), HEIGHT - MARGIN_B, MARGIN_T);
    let ylabel = match y {
        PlotY::ScaledRate => "CR x Tr(H)/L",
        PlotY::CrHat => "CR",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (xa.a, xa.b, ya.a, ya.b);
    for k in xa.decades() {
        let x = xa.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"##,
            y0 + 16.0
        );
    }
    for k in ya.decades() {
        let yy = ya.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{yy:.2}" x2="{x1:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            x0 - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">d</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );
    if let Some(f) = floor {
        let yy = ya.map(f);
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{yy:.2}" x2="{x1:.2}" y2="{yy:.2}" stroke="#555" stroke-dasharray="6 4"/>"##
        );
    }
    for (i, ((obj, rule, kappa), pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.len() >= 2 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, v)| format!("{:.2},{:.2}", xa.map(x), ya.map(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for &(x, v) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                xa.map(x),
                ya.map(v)
            );
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{ly:.2}" r="3" fill="{color}"/><text x="{:.2}" y="{:.2}">{obj} {rule} k={kappa}</text>"#,
            x1 + 14.0,
            x1 + 22.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(table: &ResultTable, path: &Path, y: PlotY) -> Result<()> {
    std::fs::write(path, render_svg(table, y)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AlphaRule;
    use crate::harness::experiment::ResultRow;

    fn agg(d: usize, kappa: u32, v: f64) -> ResultRow {
        ResultRow {
            objective: "h1".into(),
            d,
            kappa,
            alpha_rule: AlphaRule::Const,
            seed: None,
            cr_hat: v / d as f64,
            stderr: 0.0,
            scaled_rate: v,
            stop_reason: String::new(),
            wall_ms: 0.0,
        }
    }

    #[test]
    fn deterministic_with_series_and_floor() {
        let t = ResultTable {
            rows: vec![
                agg(10, 0, 0.2),
                agg(100, 0, 0.25),
                agg(10, 2, 0.5),
                agg(100, 2, 0.6),
            ],
        };
        let a = render_svg(&t, PlotY::ScaledRate).unwrap();
        assert_eq!(a, render_svg(&t, PlotY::ScaledRate).unwrap());
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("stroke-dasharray"));
        assert!(!render_svg(&t, PlotY::CrHat)
            .unwrap()
            .contains("stroke-dasharray"));
    }

    #[test]
    fn single_dimension_gives_markers_only() {
        let t = ResultTable {
            rows: vec![agg(10, 0, 0.2), agg(10, 2, 0.5)],
        };
        let s = render_svg(&t, PlotY::ScaledRate).unwrap();
        assert_eq!(s.matches("<polyline").count(), 0);
        assert!(s.matches("<circle").count() >= 2);
        assert!(render_svg(&ResultTable::default(), PlotY::CrHat).is_err());
    }
}
