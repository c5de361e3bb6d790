//! Test-time procedures: view spectrum, view estimation, bound monitoring.

use super::forward::{affine_row, extract_identity, forward_samples, sample_view_codes, ForwardTrace, ViewSample};
use super::likelihood::{log_softmax_class, sample_logliks, softmax_probs, ViewLabel};
use super::{Parameters, TrainingPair, ViewHeadKind};
use crate::error::{MvpError, Result};
use crate::numerics::{squared_distance, Rng};

/// Images reconstructed for a list of view labels from one shared draw.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// One output mean per requested label (model space).
    pub images: Vec<Vec<f64>>,
    /// Sample index chosen for each label.
    pub chosen: Vec<usize>,
    pub trace: ForwardTrace,
}

/// Score of `label` under one row of view-head output; higher is better.
pub fn view_score(label: ViewLabel, view_out: &[f64], params: &Parameters) -> Result<f64> {
    label.check(params.arch.view_head)?;
    Ok(match label {
        ViewLabel::Class(j) => log_softmax_class(view_out, j),
        ViewLabel::Yaw(v) => {
            let r = v - view_out[0];
            -r * r / (2.0 * params.sigma_v * params.sigma_v)
        }
    })
}

/// For each label picks the sample whose output gives that view the highest
/// probability (density for the continuous head).
pub fn select_for_labels(
    trace: &ForwardTrace,
    labels: &[ViewLabel],
    params: &Parameters,
) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&label| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for s in 0..trace.len() {
                let sc = view_score(label, trace.view_out.row(s), params)?;
                if sc > best_score {
                    best = s;
                    best_score = sc;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Draws `s` view samples once and returns, for every requested label, the
/// output `y_s` that maximizes `p(v | y_s, h^v_s)`.
pub fn reconstruct_spectrum(
    x: &[f64],
    labels: &[ViewLabel],
    s: usize,
    params: &Parameters,
    rng: &mut Rng,
) -> Result<Spectrum> {
    if labels.is_empty() {
        return Err(MvpError::contract("reconstruct_spectrum needs at least one view label"));
    }
    let id = extract_identity(x, params)?;
    let samples = sample_view_codes(&params.arch, s, rng)?;
    let trace = forward_samples(&id, &samples, params)?;
    let chosen = select_for_labels(&trace, labels, params)?;
    let images = chosen.iter().map(|&c| trace.y.row(c).to_vec()).collect();
    Ok(Spectrum {
        images,
        chosen,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct ViewEstimate {
    /// Position of the winning candidate.
    pub index: usize,
    pub label: ViewLabel,
    /// Codes of the sample that generated the winning candidate image; used
    /// as the input's view feature.
    pub view_feature: ViewSample,
    /// Objective value of the winner (smaller is better).
    pub score: f64,
}

/// Assigns `x` the candidate view whose generated image best explains it.
///
/// Continuous head: `argmin_z ‖x − y_z‖²`. Discrete head:
/// `argmin_z Σ_j (p(v_j | x, h^v_z) − p(v_j | y_z, h^v_z))²`, feeding `x`
/// through the view head in place of `y`.
pub fn estimate_view(
    x: &[f64],
    params: &Parameters,
    s: usize,
    rng: &mut Rng,
    candidates: &[ViewLabel],
) -> Result<ViewEstimate> {
    if candidates.is_empty() {
        return Err(MvpError::contract("estimate_view needs at least one candidate"));
    }
    let spec = reconstruct_spectrum(x, candidates, s, params, rng)?;
    let scores: Vec<f64> = match params.arch.view_head {
        ViewHeadKind::Continuous => spec.images.iter().map(|y| squared_distance(x, y)).collect(),
        ViewHeadKind::Discrete(_) => {
            if params.arch.input_dim != params.arch.output_dim {
                return Err(MvpError::contract(
                    "discrete view estimation feeds x through the view head; needs D_x = D_y",
                ));
            }
            let view = &params.tensors.view;
            let codes = spec.trace.samples.concat();
            spec.chosen
                .iter()
                .map(|&c| {
                    let px = softmax_probs(&affine_row(view, x, codes.row(c)));
                    let py = softmax_probs(spec.trace.view_out.row(c));
                    squared_distance(&px, &py)
                })
                .collect()
        }
    };
    let mut index = 0;
    for (z, &sc) in scores.iter().enumerate() {
        if sc < scores[index] {
            index = z;
        }
    }
    Ok(ViewEstimate {
        index,
        label: candidates[index],
        view_feature: spec.trace.samples.get(spec.chosen[index]),
        score: scores[index],
    })
}

/// Monte-Carlo lower bound: batch mean of `Σ_s w_s log p(ŷ, v̂, h^v_s | h^id)`
/// with normalized weights. Monitoring only.
pub fn lower_bound_estimate(
    pairs: &[TrainingPair],
    s: usize,
    params: &Parameters,
    rng: &mut Rng,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(MvpError::contract("lower_bound_estimate on empty batch"));
    }
    let mut total = 0.0;
    for p in pairs {
        let id = extract_identity(&p.x, params)?;
        let samples = sample_view_codes(&params.arch, s, rng)?;
        let trace = forward_samples(&id, &samples, params)?;
        let ll = sample_logliks(&trace, &p.target, p.label, params)?;
        let set = super::SampleSet::from_log_weights(ll.iter().map(|(r, v)| r + v).collect())?;
        total += set
            .weights
            .iter()
            .zip(&ll)
            .map(|(w, (r, v))| w * (r + v))
            .sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}
