//! Importance-sampled EM expressed as backpropagation.

mod cluster;
pub mod gradcheck;
mod grad;
mod optim;
mod trainer;

pub use cluster::{cluster_init_views, ViewClusters};
pub use grad::{
    backprop_batch, backprop_into, draw_unsupervised, finite_diff_gradient, frozen_objective,
    loss_and_grad_one_sample, loss_and_grad_weighted, loss_and_grad_with_samples,
    objective_gradient, relative_errors, terms_for, train_step_unsupervised, unsupervised_terms,
    unsupervised_with_draws, BackpropItem, GradMode, PairGrad, Term, UnsupervisedDraws, UnsupervisedGrad,
};
pub use optim::{
    adam_step, optimizer_step, sgd_step, OptimizerKind, OptimizerState, ADAM_BETA2, ADAM_EPS,
};
pub use trainer::{
    append_metrics, train_epoch, EpochMetrics, TrainConfig, Trainer, UnsupervisedConfig,
    METRICS_HEADER,
};
pub(crate) use trainer::median;

#[cfg(test)]
mod tests;
