//! CSV, notes and SVG output of a sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::Metric;
use crate::error::{Error, Result};

use super::ConvergenceReport;

/// Header of `report_notes.txt`.
pub const REPORT_NOTE: &str = "\
The limit theorems assert convergence without rates. The fitted slopes
are engineering targets read off the first-order and second-order
estimates of the band reduction, not guaranteed rates.";

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e6)`.
pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `report.csv`, `slopes.csv`, `health.csv`, `report_notes.txt` and,
/// if `plots`, one `<metric>.svg` per metric into `dir`.
pub fn write_report(report: &ConvergenceReport, dir: &Path, plots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("report.csv")).map_err(csv_err)?;
    w.write_record(["metric", "epsilon", "t", "value"]).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([r.metric.name(), &format_value(r.epsilon), &format_value(r.t), &format_value(r.value)])
            .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("slopes.csv")).map_err(csv_err)?;
    w.write_record(["metric", "t", "slope", "r2"]).map_err(csv_err)?;
    for s in &report.slopes {
        w.write_record([s.metric.name(), &format_value(s.t), &format_value(s.fit.slope), &format_value(s.fit.r2)])
            .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("health.csv")).map_err(csv_err)?;
    w.write_record([
        "epsilon",
        "norm_drift",
        "energy_drift",
        "max_boundary_mass",
        "wigner_mass_defect",
        "wigner_marginal_defect",
    ])
    .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(format_value).unwrap_or_default();
    for h in &report.health {
        w.write_record([
            format_value(h.epsilon),
            format_value(h.norm_drift),
            format_value(h.energy_drift),
            format_value(h.max_boundary_mass),
            opt(h.wigner_mass_defect),
            opt(h.wigner_marginal_defect),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    fs::write(dir.join("report_notes.txt"), notes(report))?;

    if plots {
        let mut metrics: Vec<Metric> = report.rows.iter().map(|r| r.metric).collect();
        metrics.dedup();
        for m in metrics {
            fs::write(dir.join(format!("{}.svg", m.name())), svg_plot(report, m))?;
        }
    }
    Ok(())
}

fn notes(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{REPORT_NOTE}\n");
    let _ = writeln!(s, "epsilon ladder: {:?}", report.epsilon_ladder);
    let _ = writeln!(s, "\nslopes (metric, t, slope, intercept, r2, monotone):");
    for sl in &report.slopes {
        let _ = writeln!(
            s,
            "  {} {} {:.4} {:.4} {:.4} {}",
            sl.metric.name(),
            sl.t,
            sl.fit.slope,
            sl.fit.intercept,
            sl.fit.r2,
            sl.monotone
        );
    }
    if !report.notes.is_empty() {
        let _ = writeln!(s, "\nnotes:");
        for n in &report.notes {
            let _ = writeln!(s, "  {n}");
        }
    }
    if !report.failures.is_empty() {
        let _ = writeln!(s, "\nfailures:");
        for f in &report.failures {
            let what = f.metric.map(|m| m.name()).unwrap_or("pipeline");
            let _ = writeln!(s, "  epsilon {} {}: {}", f.epsilon, what, f.message);
        }
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Log-log plot of one metric, one polyline per time.
fn svg_plot(report: &ConvergenceReport, metric: Metric) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let rows: Vec<_> = report.rows.iter().filter(|r| r.metric == metric && r.value > 0.0).collect();
    let mut times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let lx: Vec<f64> = rows.iter().map(|r| r.epsilon.log10()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.value.log10()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{} (log10 value vs log10 epsilon)</text>"#,
        w / 2.0,
        metric.name()
    );
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" points="{pad},{pad} {pad},{} {},{}"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    if rows.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (x0, x1) = range(&lx);
    let (y0, y1) = range(&ly);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="11">{x0:.2}</text><text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{x1:.2}</text>"#,
        h - pad + 15.0,
        w - pad,
        h - pad + 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="5" y="{}" font-family="sans-serif" font-size="11">{y0:.2}</text><text x="5" y="{}" font-family="sans-serif" font-size="11">{y1:.2}</text>"#,
        h - pad,
        pad + 4.0
    );
    for (i, &t) in times.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = rows
            .iter()
            .zip(lx.iter().zip(&ly))
            .filter(|(r, _)| r.t == t)
            .map(|(_, (&x, &y))| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">t = {t}</text>"#,
            w - pad - 60.0,
            pad + 15.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}
