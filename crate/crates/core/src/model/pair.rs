use super::ViewLabel;

/// One `(x, ŷ, v̂)` training example in model space.
///
/// Images live in `[0, 1]` on disk and are shifted to `[-0.5, 0.5]` at the
/// model boundary (see [`to_model_space`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x: Vec<f64>,
    pub target: Vec<f64>,
    pub label: ViewLabel,
    pub identity: usize,
    pub illumination: usize,
    pub input_view: usize,
    pub output_view: usize,
}

pub const PIXEL_OFFSET: f64 = 0.5;

pub fn to_model_space(pixels: &[f64]) -> Vec<f64> {
    pixels.iter().map(|p| p - PIXEL_OFFSET).collect()
}

/// Inverse of [`to_model_space`], clamped to `[0, 1]`.
pub fn to_pixels(model: &[f64]) -> Vec<f64> {
    model
        .iter()
        .map(|v| (v + PIXEL_OFFSET).clamp(0.0, 1.0))
        .collect()
}
