//! Evaluation protocols: recognition, reconstruction quality, view estimation,
//! interpolation to unseen views and posterior weight sparsity.

mod interpolation;
mod lda;
mod recognition;
mod report;
mod sparsity;
mod viewest;

pub use interpolation::{
    interpolation_experiment, interpolation_report, mse, InterpolationConfig, ALL_VIEWS,
    HELD_OUT_VIEWS, TRAINED_VIEWS,
};
pub use lda::{fisher_ratio, lda_fit, lda_project, scatter_matrices, LdaModel, DEFAULT_LDA_RIDGE};
pub use recognition::{
    frontal_index, gallery_probe_split, layer_features, mean_view_sample,
    reconstruction_quality, reconstruction_quality_from_images, recognition_across_views,
    recognition_protocol, same_view_reconstructions, FeatureSet,
};
pub use report::{EvalReport, ReportRow};
pub use sparsity::{final_third, parse_metrics_csv, read_metrics_csv, weight_sparsity_stats};
pub use viewest::{
    lr_baseline, mae_by_view, predict_views, principal_components, view_estimation_error,
    PcaRegression, ViewPrediction, PCA_COMPONENTS,
};
