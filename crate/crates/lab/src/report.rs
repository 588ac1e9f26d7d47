//! Plot-ready panel files: plain two-column whitespace-separated text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use normgen_core::analysis::{linear_fit, psi_transform, Histogram};

use crate::error::{io_err, format_err, Result};
use crate::protocol::RunRecord;

pub const RECORDS_FILE: &str = "records.json";
pub const PSI_GRID: usize = 101;

pub fn read_records(run_dir: &Path) -> Result<Vec<RunRecord>> {
    let path = run_dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let records: Vec<RunRecord> = serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    if records.is_empty() {
        return Err(format_err(&path, "no records"));
    }
    Ok(records)
}

fn two_columns(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = writeln!(s, "{x:.8e} {y:.8e}");
    }
    s
}

/// `ψ` sampled on an evenly spaced grid of `[0, 1]`.
pub fn psi_curve(points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let x = i as f64 / (points - 1) as f64;
            (x, psi_transform(x).expect("grid lies in [0, 1]"))
        })
        .collect()
}

fn histogram_rows(h: &Histogram) -> Vec<(f64, f64)> {
    h.centers().into_iter().zip(h.counts.iter().map(|&c| c as f64)).collect()
}

/// Writes every panel under `run_dir/report` and returns the file paths.
pub fn write_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_records(run_dir)?;
    let out = run_dir.join("report");
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut panels: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("unnormalized_loss".into(), records.iter().map(|r| (r.train_loss, r.test_loss)).collect()),
        ("product_norm_vs_test_loss".into(), records.iter().map(|r| (r.product_norm, r.test_loss)).collect()),
        ("normalized_loss".into(), records.iter().map(|r| (r.norm_train_loss, r.norm_test_loss)).collect()),
        ("psi_curve".into(), psi_curve(PSI_GRID)),
    ];
    let mut curve: Vec<(f64, f64)> = records.iter().map(|r| (r.norm_test_loss, r.test_error)).collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    panels.push(("error_vs_loss".into(), curve));
    let norm: Vec<(f64, f64)> = records.iter().map(|r| (r.norm_train_loss, r.norm_test_loss)).collect();
    if let Ok(fit) = linear_fit(&norm) {
        let lo = norm.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = norm.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let line = (0..PSI_GRID).map(|i| {
            let x = lo + (hi - lo) * i as f64 / (PSI_GRID - 1) as f64;
            (x, fit.predict(x))
        });
        panels.push(("normalized_fit_line".into(), line.collect()));
    }
    for r in &records {
        let slug = r.point.slug();
        panels.push((format!("histogram_raw_{slug}"), histogram_rows(&r.raw_outputs.histogram)));
        panels.push((format!("histogram_normalized_{slug}"), histogram_rows(&r.norm_outputs.histogram)));
    }
    let mut written = Vec::new();
    for (name, pts) in panels {
        let path = out.join(format!("{name}.txt"));
        fs::write(&path, two_columns(pts)).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
