//! Analytic-versus-finite-difference sweep over every estimator and head.

use super::grad::{
    draw_unsupervised, finite_diff_gradient, loss_and_grad_with_samples, relative_errors,
    terms_for, unsupervised_terms, unsupervised_with_draws, GradMode,
};
use crate::error::Result;
use crate::model::{
    extract_identity, forward_samples, sample_view_codes, weigh_trace, Architecture, Parameters,
    TrainingPair, ViewHeadKind, ViewLabel,
};
use crate::numerics::Rng;

/// Tiny network used by the gate: 16-8-8(3)-8(3)-12-16 with M = 3.
pub const GRADCHECK_ARCH: &str = "16-8-8(3)-8(3)-12-16";
pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Entries whose analytic and numeric magnitudes are both below this are
/// compared absolutely; central differences cannot resolve smaller values
/// to 1e-4 relative.
pub const GRADCHECK_FLOOR: f64 = 1e-5;
pub const GRADCHECK_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub objective: &'static str,
    pub head: &'static str,
    pub tensor: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < GRADCHECK_TOL)
    }
}

fn tiny_params(head: ViewHeadKind, seed: u64) -> Result<(Parameters, TrainingPair)> {
    let spec = match head {
        ViewHeadKind::Discrete(m) => format!("{GRADCHECK_ARCH}[{m}]"),
        ViewHeadKind::Continuous => format!("{GRADCHECK_ARCH}[c]"),
    };
    let arch: Architecture = spec.parse()?;
    let mut params = Parameters::init(&arch, seed)?;
    let mut rng = Rng::new(seed ^ 0x5EED);
    for d in params
        .tensors
        .hidden
        .iter_mut()
        .chain([&mut params.tensors.output, &mut params.tensors.view])
    {
        let n = d.bias.cols();
        d.bias = rng.gaussian(1, n, 0.0, 0.2);
    }
    let label = match head {
        ViewHeadKind::Discrete(_) => ViewLabel::Class(1),
        ViewHeadKind::Continuous => ViewLabel::Yaw(0.25),
    };
    let pair = TrainingPair {
        x: rng.uniform(1, 16).map(|v| v - 0.5).into_vec(),
        target: rng.uniform(1, 16).map(|v| v - 0.5).into_vec(),
        label,
        identity: 0,
        illumination: 0,
        input_view: 0,
        output_view: 0,
    };
    Ok((params, pair))
}

/// Runs the one-sample, weighted and label-free objectives on both heads.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut entries = Vec::new();
    let heads = [
        (ViewHeadKind::Discrete(3), "discrete"),
        (ViewHeadKind::Continuous, "continuous"),
    ];
    for (head, head_name) in heads {
        let (params, pair) = tiny_params(head, seed)?;
        let mut rng = Rng::new(seed.wrapping_add(1));
        for (mode, name) in [
            (GradMode::OneSample, "one-sample"),
            (GradMode::WeightedAverage, "weighted"),
        ] {
            let samples = sample_view_codes(&params.arch, GRADCHECK_SAMPLES, &mut rng)?;
            let analytic = loss_and_grad_with_samples(&pair, &params, &samples, mode)?;
            let id = extract_identity(&pair.x, &params)?;
            let trace = forward_samples(&id, &samples, &params)?;
            let set = weigh_trace(&trace, &pair.target, pair.label, &params)?;
            let terms = terms_for(mode, &set, pair.label);
            let numeric = finite_diff_gradient(&pair, &params, &samples, &terms, GRADCHECK_STEP)?;
            for (tensor, err) in relative_errors(&analytic.grads, &numeric, GRADCHECK_FLOOR) {
                entries.push(GradcheckEntry {
                    objective: name,
                    head: head_name,
                    tensor,
                    max_rel_error: err,
                });
            }
        }
        if head == ViewHeadKind::Continuous {
            let draws = draw_unsupervised(&pair, &params, GRADCHECK_SAMPLES, &mut rng)?;
            let v_tilde = -0.3;
            let analytic = unsupervised_with_draws(&pair, v_tilde, 0.5, &params, &draws)?;
            let (_, term, _, _) = unsupervised_terms(&pair, v_tilde, 0.5, &params, &draws)?;
            let numeric =
                finite_diff_gradient(&pair, &params, &draws.samples, &[term], GRADCHECK_STEP)?;
            for (tensor, err) in relative_errors(&analytic.grads, &numeric, GRADCHECK_FLOOR) {
                entries.push(GradcheckEntry {
                    objective: "unsupervised",
                    head: head_name,
                    tensor,
                    max_rel_error: err,
                });
            }
        }
    }
    Ok(GradcheckReport { entries })
}
