//! Deterministic CPU engine for the catalog convnets: forward, backward and SGD.

pub mod arch;
pub(crate) mod conv;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod train;

pub use arch::{build_architecture, Architecture};
pub use conv::valid_extent;
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, GradSample};
pub use init::init_gaussian;
pub use layer::{BatchNorm2d, Conv2d, Dense, Layer, LayerKind, LayerSpec};
pub use loss::{argmax, binary_logistic, classification_error, cross_entropy, softmax_cross_entropy_with_grad};
pub use network::{BackwardOutput, BatchStats, Gradients, Mode, Network};
pub use optim::{sgd_step, OptimizerState, SgdConfig};
pub use train::{epoch_order, train_epoch, train_step, EpochSummary};
