//! Abundance retrieval: non-negative unmixing over basis kernels and the
//! two-stage learned estimator.

mod estimator;
mod nnls;
mod training;
mod unmix;

pub use estimator::{
    encode, estimate, head, loss_qt, loss_qt_grad, loss_rep, loss_rep_grad, map_descriptor, sigmoid, softmax,
    softplus, EstimatorParams, Example, Gradients,
};
pub use nnls::{kkt_certificate, nnls, KktCertificate, NnlsSolution, KKT_RELATIVE, NNLS_MAX_ITER, NNLS_TOLERANCE};
pub use training::{
    grad_check, grad_check_fn, predict, separable_toy_set, synthetic_linear_set, target_distribution, train_stage1,
    train_stage1_from, train_stage2, GradCheck, LossKind, Optimizer, Stage, TargetKind, TrainConfig, TrainOutcome,
    TrainingRow, TrainingSet,
};
pub use unmix::{nnls_unmix, projection_coefficients, AbundanceEstimate, UnmixProblem};
