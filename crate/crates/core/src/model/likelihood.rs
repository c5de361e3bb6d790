//! Log-likelihood terms and importance weights.
//!
//! The `½ log 2π` constants are dropped throughout; `−log σ_y` is charged per
//! output dimension.

use super::forward::{extract_identity, forward_samples, ForwardTrace, ViewSamples};
use super::{Parameters, ViewHeadKind};
use crate::error::{MvpError, Result};
use crate::numerics::{log_softmax_row, log_sum_exp, squared_distance};

/// Ground-truth view of an output image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewLabel {
    /// Index into the `M` discrete views.
    Class(usize),
    /// Yaw in degrees divided by 90, so `[-90°, 90°] → [-1, 1]`.
    Yaw(f64),
}

impl ViewLabel {
    pub fn from_degrees(deg: f64) -> Self {
        ViewLabel::Yaw(deg / 90.0)
    }

    pub fn degrees(&self) -> Option<f64> {
        match self {
            ViewLabel::Yaw(v) => Some(v * 90.0),
            ViewLabel::Class(_) => None,
        }
    }

    pub(crate) fn check(&self, head: ViewHeadKind) -> Result<()> {
        match (self, head) {
            (ViewLabel::Class(j), ViewHeadKind::Discrete(m)) if *j < m => Ok(()),
            (ViewLabel::Yaw(v), ViewHeadKind::Continuous) if v.is_finite() => Ok(()),
            _ => Err(MvpError::contract(format!(
                "view label {self:?} does not fit view head {head:?}"
            ))),
        }
    }
}

/// `−D·log σ_y − ‖ŷ − y‖² / 2σ_y²`.
pub fn recon_loglik(target: &[f64], y_mean: &[f64], sigma_y: f64) -> Result<f64> {
    if sigma_y <= 0.0 || !sigma_y.is_finite() {
        return Err(MvpError::contract(format!("sigma_y must be positive, got {sigma_y}")));
    }
    if target.len() != y_mean.len() {
        return Err(MvpError::dim(
            "recon_loglik",
            format!("{} vs {}", target.len(), y_mean.len()),
        ));
    }
    let d = target.len() as f64;
    Ok(-d * sigma_y.ln() - squared_distance(target, y_mean) / (2.0 * sigma_y * sigma_y))
}

/// `Σ_j v̂_j log softmax(z)_j` for a one-hot `v̂`.
pub fn view_loglik_discrete(onehot: &[f64], logits: &[f64]) -> Result<f64> {
    if onehot.len() != logits.len() {
        return Err(MvpError::dim(
            "view_loglik_discrete",
            format!("{} labels for {} logits", onehot.len(), logits.len()),
        ));
    }
    let ones = onehot.iter().filter(|&&v| v == 1.0).count();
    let zeros = onehot.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != onehot.len() {
        return Err(MvpError::contract("view label is not one-hot"));
    }
    let class = onehot.iter().position(|&v| v == 1.0).unwrap_or(0);
    Ok(log_softmax_class(logits, class))
}

pub(crate) fn log_softmax_class(logits: &[f64], class: usize) -> f64 {
    logits[class] - log_sum_exp(logits)
}

/// `−log σ_v − (v̂ − μ)² / 2σ_v²`.
pub fn view_loglik_continuous(target: f64, mean: f64, sigma_v: f64) -> Result<f64> {
    if sigma_v <= 0.0 || !sigma_v.is_finite() {
        return Err(MvpError::contract(format!("sigma_v must be positive, got {sigma_v}")));
    }
    let r = target - mean;
    Ok(-sigma_v.ln() - r * r / (2.0 * sigma_v * sigma_v))
}

/// Log-probability of `label` under one row of view-head output.
pub fn view_loglik(label: ViewLabel, view_out: &[f64], params: &Parameters) -> Result<f64> {
    label.check(params.arch.view_head)?;
    match label {
        ViewLabel::Class(j) => Ok(log_softmax_class(view_out, j)),
        ViewLabel::Yaw(v) => view_loglik_continuous(v, view_out[0], params.sigma_v),
    }
}

/// Normalized importance weights over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Unnormalized `log p(ŷ, v̂ | h^v_s)`.
    pub log_weights: Vec<f64>,
    /// `exp(log_w − max) / Σ`; sums to one.
    pub weights: Vec<f64>,
    /// Largest weight, lowest index on ties.
    pub best: usize,
}

impl SampleSet {
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(MvpError::contract("empty sample set"));
        }
        if log_weights.iter().any(|v| v.is_nan()) {
            return Err(MvpError::contract("NaN log-weight"));
        }
        let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_weights.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= z);
        let mut best = 0;
        for (i, &v) in log_weights.iter().enumerate() {
            if v > log_weights[best] {
                best = i;
            }
        }
        Ok(Self {
            log_weights,
            weights,
            best,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights[self.best]
    }
}

/// Per-sample `(recon, view)` log-likelihoods for a traced batch.
pub fn sample_logliks(
    trace: &ForwardTrace,
    target: &[f64],
    label: ViewLabel,
    params: &Parameters,
) -> Result<Vec<(f64, f64)>> {
    label.check(params.arch.view_head)?;
    (0..trace.len())
        .map(|s| {
            let r = recon_loglik(target, trace.y.row(s), params.sigma_y)?;
            let v = view_loglik(label, trace.view_out.row(s), params)?;
            Ok((r, v))
        })
        .collect()
}

/// Weights from an existing trace: `log w_s = log p(ŷ|·) + log p(v̂|·)`.
pub fn weigh_trace(
    trace: &ForwardTrace,
    target: &[f64],
    label: ViewLabel,
    params: &Parameters,
) -> Result<SampleSet> {
    let ll = sample_logliks(trace, target, label, params)?;
    SampleSet::from_log_weights(ll.into_iter().map(|(r, v)| r + v).collect())
}

/// Importance weights `w_s ∝ p(ŷ, v̂ | h^v_s; Θ)` for the given draws.
pub fn importance_weights(
    x: &[f64],
    target: &[f64],
    label: ViewLabel,
    samples: &ViewSamples,
    params: &Parameters,
) -> Result<SampleSet> {
    let id = extract_identity(x, params)?;
    let trace = forward_samples(&id, samples, params)?;
    weigh_trace(&trace, target, label, params)
}

/// Full log-softmax rows, used by view estimation.
pub(crate) fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    log_softmax_row(logits).into_iter().map(f64::exp).collect()
}
