//! Evaluation and the statistics built on top of trained networks: linear
//! train/test fits, bound offsets, the surrogate-risk transform, Rademacher
//! estimates for linear classes and the minimum-norm least-squares demo.

mod bound;
mod eval;
mod fit;
mod linear;
mod rademacher;

pub use bound::{bound_report, c2_term, psi_transform, BoundReport, DEFAULT_TIGHT_THRESHOLD};
pub use eval::{evaluate, histogram, output_histogram, EvalReport, Histogram, OutputStats, EVAL_BATCH};
pub use fit::{error_vs_loss_curve, linear_fit, ranks, spearman, ErrorLossCurve, LinearFit};
pub use linear::{
    lp_norm, min_norm_gd, min_norm_gd_observed, norm_equivalence_check, GdConfig, MinNormReport, NormEquivalence,
};
pub use rademacher::{rademacher_linear, RademacherEstimate};
