use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::fit::{linear_fit, LinearFit};
use crate::error::{Error, Result};

/// Offsets below this are reported as a tight bound.
pub const DEFAULT_TIGHT_THRESHOLD: f64 = 0.15;

/// `1 - sqrt(1 - x^2)` for `x` in `[0, 1]`, evaluated without cancellation.
pub fn psi_transform(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("psi is defined on [0, 1], got {x}")));
    }
    let x2 = x * x;
    Ok(x2 / (1.0 + Float::sqrt(1.0 - x2)))
}

/// Confidence term `sqrt(ln(1/delta) / (2n))`.
pub fn c2_term(delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    Ok(Float::sqrt(Float::ln(1.0 / delta) / (2.0 * n as f64)))
}

/// Train/test gaps of normalized losses against the fitted offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `|test - train|` per point, in input order.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub fit: LinearFit,
    /// Intercept of the test-on-train fit; stands in for the complexity and
    /// confidence terms together, which are not computable for deep nets.
    pub offset: f64,
    pub delta: f64,
    pub n: usize,
    pub c2_term: f64,
    pub threshold: f64,
    /// `|offset| < threshold`.
    pub tight: bool,
    pub caveat: String,
}

/// Gap and offset summary for `(normalized train loss, normalized test loss)` points.
pub fn bound_report(points: &[(f64, f64)], delta: f64, n: usize, threshold: f64) -> Result<BoundReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    let fit = linear_fit(points)?;
    let gaps: Vec<f64> = points.iter().map(|(tr, te)| (te - tr).abs()).collect();
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let offset = fit.intercept;
    Ok(BoundReport {
        gaps,
        max_gap,
        mean_gap,
        offset,
        delta,
        n,
        c2_term: c2_term(delta, n)?,
        threshold,
        tight: offset.abs() < threshold,
        fit,
        caveat: "gaps use unclipped cross-entropy, which is unbounded; the bound assumes a bounded loss".into(),
    })
}
