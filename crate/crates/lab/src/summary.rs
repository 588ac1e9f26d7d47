//! Cross-point analysis written next to the results table.

use normgen_core::analysis::{bound_report, error_vs_loss_curve, linear_fit, spearman, BoundReport, ErrorLossCurve, LinearFit};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::protocol::{RunRecord, SweepPoint};
use crate::table::TABLE_VERSION;

/// Chance-level check for the random-label point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLabelCheck {
    pub test_error: f64,
    pub chance_error: f64,
    pub norm_train_loss: f64,
    pub chance_loss: f64,
    pub train_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub table_version: u32,
    /// The resolved configuration, defaults included.
    pub config: ExperimentConfig,
    pub points: usize,
    pub train_examples: usize,
    /// Normalized test loss regressed on normalized train loss.
    pub normalized_fit: Option<LinearFit>,
    pub unnormalized_fit: Option<LinearFit>,
    pub bound: Option<BoundReport>,
    /// Test error against normalized test loss.
    pub error_vs_loss: Option<ErrorLossCurve>,
    /// Rank correlation of product norm with unnormalized test loss over
    /// the natural-label points.
    pub capacity_spearman: Option<f64>,
    pub random_labels: Option<RandomLabelCheck>,
    pub warnings: Vec<String>,
}

pub fn summarize(cfg: &ExperimentConfig, records: &[RunRecord], train_examples: usize) -> SweepSummary {
    let mut warnings = Vec::new();
    let norm: Vec<(f64, f64)> = records.iter().map(|r| (r.norm_train_loss, r.norm_test_loss)).collect();
    let raw: Vec<(f64, f64)> = records.iter().map(|r| (r.train_loss, r.test_loss)).collect();
    let mut note = |what: &str, e: &dyn std::fmt::Display| warnings.push(format!("{what}: {e}"));
    let normalized_fit = linear_fit(&norm).map_err(|e| note("normalized fit", &e)).ok();
    let unnormalized_fit = linear_fit(&raw).map_err(|e| note("unnormalized fit", &e)).ok();
    let bound = bound_report(&norm, cfg.bound.delta, train_examples, cfg.bound.threshold)
        .map_err(|e| note("bound report", &e))
        .ok();
    let curve: Vec<(f64, f64)> = records.iter().map(|r| (r.norm_test_loss, r.test_error)).collect();
    let error_vs_loss = error_vs_loss_curve(&curve).map_err(|e| note("error-vs-loss curve", &e)).ok();
    let natural: Vec<&RunRecord> =
        records.iter().filter(|r| !matches!(r.point, SweepPoint::RandomLabels { .. })).collect();
    let pn: Vec<f64> = natural.iter().map(|r| r.product_norm).collect();
    let tl: Vec<f64> = natural.iter().map(|r| r.test_loss).collect();
    let capacity_spearman = spearman(&pn, &tl).map_err(|e| note("capacity correlation", &e)).ok();
    let k = cfg.class_count() as f64;
    let random_labels = records.iter().find(|r| matches!(r.point, SweepPoint::RandomLabels { .. })).map(|r| {
        RandomLabelCheck {
            test_error: r.test_error,
            chance_error: 1.0 - 1.0 / k,
            norm_train_loss: r.norm_train_loss,
            chance_loss: k.ln(),
            train_error: r.train_error,
        }
    });
    for r in records {
        if !r.within_band && !matches!(r.point, SweepPoint::RandomLabels { .. }) {
            warnings.push(format!(
                "{}: selected train loss {:.5} is outside {}x of the reference {}",
                r.point.slug(),
                r.train_loss,
                cfg.reference_band,
                cfg.reference_loss
            ));
        }
        if r.train_error > 0.0 {
            warnings.push(format!("{}: selected snapshot has train error {}", r.point.slug(), r.train_error));
        }
    }
    SweepSummary {
        table_version: TABLE_VERSION,
        config: cfg.clone(),
        points: records.len(),
        train_examples,
        normalized_fit,
        unnormalized_fit,
        bound,
        error_vs_loss,
        capacity_spearman,
        random_labels,
        warnings,
    }
}
