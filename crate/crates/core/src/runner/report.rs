//! Log–log SVG panel of a ledger with reference slopes and a fit summary.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::fit::FitResult;

use super::{fit_decay, Ledger};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 120.0;

const CURVES: [(&str, &str); 4] = [
    ("E", "#1f77b4"),
    ("D", "#d62728"),
    ("Vmass", "#2ca02c"),
    ("lip", "#9467bd"),
];
const REFERENCE_SLOPES: [f64; 2] = [-4.0 / 3.0, -1.0];

/// Rendered panel and the fits shown in its table.
#[derive(Debug, Clone)]
pub struct Report {
    pub svg: String,
    pub fits: Vec<FitResult>,
}

impl Report {
    /// Plain-text version of the summary table.
    pub fn summary(&self) -> String {
        let mut s = String::from("quantity  slope      stderr     n   window\n");
        for f in &self.fits {
            let _ = writeln!(
                s,
                "{:<9} {:<10.4} {:<10.2e} {:<3} [{:.4e}, {:.4e}]",
                f.quantity, f.slope, f.stderr, f.n_points, f.window.0, f.window.1
            );
        }
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Curves are normalized by their first positive value so they share one axis.
pub fn render_report(ledger: &Ledger, window: (f64, f64)) -> Result<Report> {
    let rows = ledger.clean();
    let mut series: Vec<(&str, &str, Vec<(f64, f64)>)> = Vec::new();
    for (name, colour) in CURVES {
        let col = ledger.column(name)?;
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .zip(&col)
            .filter(|(r, v)| r.t > 0.0 && **v > 0.0)
            .map(|(r, v)| (r.t.log10(), v.log10()))
            .collect();
        if let Some(&(_, y0)) = pts.first() {
            series.push((name, colour, pts.iter().map(|&(x, y)| (x, y - y0)).collect()));
        }
    }
    if series.is_empty() {
        return Err(Error::InvalidArgument(
            "ledger has no positive samples to plot".into(),
        ));
    }
    let all = || series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    x0 = x0.floor();
    x1 = x1.ceil().max(x0 + 1.0);
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#);
    for k in (x0 as i64)..=(x1 as i64) {
        let x = sx(k as f64);
        let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, TOP + ph);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{k}</text>"#, TOP + ph + 16.0);
    }
    for k in (y0 as i64)..=(y1 as i64) {
        let y = sy(k as f64);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{k}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#, LEFT + pw / 2.0, TOP + ph + 34.0);

    // Reference slopes anchored at the start of the energy curve.
    let anchor = series[0].2[0];
    for (i, slope) in REFERENCE_SLOPES.iter().enumerate() {
        let (xa, ya) = anchor;
        let (xb, yb) = (x1, ya + slope * (x1 - xa));
        let _ = writeln!(
            svg,
            r##"<line class="reference" data-slope="{slope:.4}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="{}" clip-path="url(#plot)"/>"##,
            sx(xa),
            sy(ya),
            sx(xb),
            sy(yb),
            if i == 0 { "6,4" } else { "2,3" }
        );
    }
    for (name, colour, pts) in &series {
        let mut d = String::new();
        for (j, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            r#"<path class="curve" data-quantity="{name}" d="{}" fill="none" stroke="{colour}" stroke-width="1.6"/>"#,
            d.trim_end()
        );
    }

    let lx = LEFT + pw + 16.0;
    for (i, (name, colour, _)) in series.iter().enumerate() {
        let y = TOP + 14.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{name} / {name}(t0)</text>"#, lx + 30.0, y + 4.0);
    }
    for i in 0..REFERENCE_SLOPES.len() {
        let y = TOP + 14.0 + 20.0 * (series.len() + i) as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="#555" stroke-dasharray="{}"/>"##,
            lx + 24.0,
            if i == 0 { "6,4" } else { "2,3" }
        );
        let label = if i == 0 { "slope -4/3" } else { "slope -1" };
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{label}</text>"#, lx + 30.0, y + 4.0);
    }

    let mut fits = Vec::new();
    let mut table_y = TOP + ph + 58.0;
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{table_y}" font-weight="bold">fit over [{:.3e}, {:.3e}]</text>"#, window.0, window.1);
    for (name, _) in CURVES {
        table_y += 15.0;
        let line = match fit_decay(ledger, name, window) {
            Ok(f) => {
                let s = format!("{name}: slope {:.4} ± {:.1e} (n = {})", f.slope, f.stderr, f.n_points);
                fits.push(f);
                s
            }
            Err(e) => format!("{name}: {e}"),
        };
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{table_y}">{}</text>"#, escape(&line));
    }
    if let Some(a) = &ledger.abort {
        table_y += 15.0;
        let _ = writeln!(svg, r##"<text x="{LEFT}" y="{table_y}" fill="#b00">aborted ({}) at t = {:.4e}</text>"##, escape(&a.kind), a.t);
    }
    svg.push_str("</svg>\n");
    Ok(Report { svg, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::FunctionalRecord;
    use crate::solver::VelocitySource;

    #[test]
    fn panel_has_curves_and_reference_slopes() {
        let records = (0..=40)
            .map(|i| {
                let t = if i == 0 { 0.0 } else { 10f64.powf(-1.0 + i as f64 / 10.0) };
                let e = (1.0 + t).powf(-4.0 / 3.0);
                FunctionalRecord {
                    t,
                    energy: e,
                    dissipation: e / (1.0 + t),
                    d_source: VelocitySource::FlatDtn,
                    vmass: 1.0,
                    lip: 0.1 * (1.0 + t).powf(-0.5),
                    dimless: e * e,
                    signed_mass: 0.0,
                    h_inf: 0.1,
                }
            })
            .collect();
        let ledger = Ledger { records, flagged_from: None, abort: None };
        let report = render_report(&ledger, (10.0, 1000.0)).unwrap();
        for q in ["E", "D", "Vmass", "lip"] {
            assert!(report.svg.contains(&format!("data-quantity=\"{q}\"")));
        }
        assert!(report.svg.contains("data-slope=\"-1.3333\""));
        assert!(report.svg.contains("data-slope=\"-1.0000\""));
        assert_eq!(report.fits.len(), 4);
        assert!(report.summary().contains("E "));
    }
}
