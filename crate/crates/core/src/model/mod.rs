//! The multi-view perceptron network.

mod arch;
mod forward;
mod inference;
mod likelihood;
mod pair;
mod params;

pub use arch::{Architecture, LayerKind, LayerSpec, ViewHeadKind};
pub use forward::{
    extract_identity, extract_identity_batch, forward_given_sample, forward_samples,
    forward_samples_batch, sample_view_codes, ForwardTrace,
    IdentityFeatures, ViewSample, ViewSamples,
};
pub(crate) use forward::incoming_codes;
pub use inference::{
    estimate_view, lower_bound_estimate, reconstruct_spectrum, select_for_labels, view_score,
    Spectrum, ViewEstimate,
};
pub use likelihood::{
    importance_weights, recon_loglik, sample_logliks, view_loglik, view_loglik_continuous,
    view_loglik_discrete, weigh_trace, SampleSet, ViewLabel,
};
pub use pair::{to_model_space, to_pixels, TrainingPair, PIXEL_OFFSET};
pub use params::{Dense, Parameters, Tensors, DEFAULT_SIGMA_V, DEFAULT_SIGMA_Y};
