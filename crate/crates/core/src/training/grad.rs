//! Analytic gradients of the sampled objectives.
//!
//! Every objective here has the form `J(Θ) = Σ_r c_r · L_{s_r}(Θ)` where
//! `L_s = −(log p(ŷ | h^id, h^v_s) + log p(v | y_s, h^v_s))` and the
//! coefficients `c_r` (normalized importance weights) are computed from the
//! current parameters and then held constant. Selection and weighting never
//! receive gradient.

use crate::error::{MvpError, Result};
use crate::model::{
    extract_identity, forward_samples, incoming_codes, recon_loglik, sample_logliks,
    sample_view_codes, view_loglik, view_loglik_continuous, ForwardTrace, Parameters, SampleSet,
    Tensors, TrainingPair, ViewHeadKind, ViewLabel, ViewSamples,
};
use crate::numerics::{gemm, softmax_row, Matrix, Rng, Trans};

/// Which estimator of the M-step gradient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Backpropagate only the largest-weight sample, scaled by its weight.
    OneSample,
    /// Weighted sum of every sample's gradient.
    WeightedAverage,
}

/// One term of a frozen-weight objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub sample: usize,
    pub coef: f64,
    pub label: ViewLabel,
}

/// Result of one pair's E-step plus gradient.
#[derive(Debug, Clone)]
pub struct PairGrad {
    /// `L` of the selected sample (one-sample) or `Σ w_s L_s` (weighted).
    pub loss: f64,
    pub grads: Tensors,
    pub weights: SampleSet,
    /// `Σ_s w_s log p(ŷ, v̂, h^v_s | h^id)` at the current parameters.
    pub bound: f64,
}

/// The terms an estimator keeps for a weighted sample set.
pub fn terms_for(mode: GradMode, set: &SampleSet, label: ViewLabel) -> Vec<Term> {
    match mode {
        GradMode::OneSample => vec![Term {
            sample: set.best,
            coef: set.weights[set.best],
            label,
        }],
        GradMode::WeightedAverage => set
            .weights
            .iter()
            .enumerate()
            .map(|(sample, &coef)| Term {
                sample,
                coef,
                label,
            })
            .collect(),
    }
}

/// `Σ_r c_r L_{s_r}` evaluated by a fresh forward pass.
pub fn frozen_objective(
    pair: &TrainingPair,
    params: &Parameters,
    samples: &ViewSamples,
    terms: &[Term],
) -> Result<f64> {
    let id = extract_identity(&pair.x, params)?;
    let trace = forward_samples(&id, samples, params)?;
    let mut j = 0.0;
    for t in terms {
        let r = recon_loglik(&pair.target, trace.y.row(t.sample), params.sigma_y)?;
        let v = view_loglik(t.label, trace.view_out.row(t.sample), params)?;
        j -= t.coef * (r + v);
    }
    Ok(j)
}

/// Adds `scale · ∇Θ Σ_r c_r L_{s_r}` into `acc`.
pub fn backprop_into(
    params: &Parameters,
    trace: &ForwardTrace,
    target: &[f64],
    terms: &[Term],
    scale: f64,
    acc: &mut Tensors,
) -> Result<()> {
    backprop_batch(params, &[BackpropItem { trace, target, terms }], scale, acc)
}

/// One input's share of a batched backward pass.
#[derive(Debug, Clone, Copy)]
pub struct BackpropItem<'a> {
    pub trace: &'a ForwardTrace,
    pub target: &'a [f64],
    pub terms: &'a [Term],
}

/// Sums row `r` of each group of consecutive rows.
fn group_sums(m: &Matrix, groups: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(groups.len(), m.cols());
    let mut r = 0;
    for (i, &g) in groups.iter().enumerate() {
        let dst = out.row_mut(i);
        for _ in 0..g {
            for (d, v) in dst.iter_mut().zip(m.row(r)) {
                *d += v;
            }
            r += 1;
        }
    }
    out
}

fn stack<'a>(cols: usize, parts: impl Iterator<Item = &'a Matrix>) -> Result<Matrix> {
    Matrix::stack_rows(cols, parts.flat_map(|m| (0..m.rows()).map(move |r| m.row(r))))
}

/// [`backprop_into`] for several inputs at once: every weight gradient is a
/// single product over the stacked rows of all items.
pub fn backprop_batch(params: &Parameters, items: &[BackpropItem], scale: f64, acc: &mut Tensors) -> Result<()> {
    let items: Vec<&BackpropItem> = items.iter().filter(|it| !it.terms.is_empty()).collect();
    if items.is_empty() {
        return Ok(());
    }
    let arch = &params.arch;
    let n = arch.layers.len();
    let depth = arch.identity_depth();
    let groups: Vec<usize> = items.iter().map(|it| it.terms.len()).collect();
    let picks: Vec<Vec<usize>> = items
        .iter()
        .map(|it| it.terms.iter().map(|t| t.sample).collect())
        .collect();
    let pick = |f: &dyn Fn(&ForwardTrace) -> &Matrix| -> Result<Matrix> {
        let parts: Vec<Matrix> = items.iter().zip(&picks).map(|(it, p)| f(it.trace).select_rows(p)).collect();
        stack(parts[0].cols(), parts.iter())
    };
    let y = pick(&|t| &t.y)?;
    let out = pick(&|t| &t.view_out)?;
    let hidden: Vec<Matrix> = (0..n - depth).map(|l| pick(&|t| &t.hidden[l])).collect::<Result<_>>()?;
    let hybrids = arch.hybrid_layers().count();
    let code_layers: Vec<Matrix> = (0..hybrids).map(|k| pick(&|t| t.samples.layer(k))).collect::<Result<_>>()?;
    let samples = ViewSamples::from_layers(code_layers);
    let x = stack(arch.input_dim, items.iter().map(|it| &it.trace.identity.x))?;
    let identity: Vec<Matrix> = (0..depth)
        .map(|l| stack(arch.layers[l].width, items.iter().map(|it| &it.trace.identity.layers[l])))
        .collect::<Result<_>>()?;
    let rows = y.rows();

    // view head
    let k = arch.view_head.outputs();
    let mut d_view = Matrix::zeros(rows, k);
    let mut r = 0;
    for it in &items {
        for t in it.terms {
            let c = t.coef * scale;
            let row = d_view.row_mut(r);
            match (t.label, arch.view_head) {
                (ViewLabel::Class(j), ViewHeadKind::Discrete(m)) if j < m => {
                    let p = softmax_row(out.row(r));
                    for (i, d) in row.iter_mut().enumerate() {
                        *d = c * (p[i] - if i == j { 1.0 } else { 0.0 });
                    }
                }
                (ViewLabel::Yaw(v), ViewHeadKind::Continuous) => {
                    row[0] = c * (out[(r, 0)] - v) / (params.sigma_v * params.sigma_v);
                }
                (label, head) => {
                    return Err(MvpError::contract(format!(
                        "view label {label:?} does not fit view head {head:?}"
                    )))
                }
            }
            r += 1;
        }
    }
    let codes = samples.concat();
    let view = &params.tensors.view;
    gemm(1.0, &d_view, Trans::Yes, &y, Trans::No, 1.0, &mut acc.view.weight)?;
    if let Some(g) = acc.view.code_weight.as_mut() {
        gemm(1.0, &d_view, Trans::Yes, &codes, Trans::No, 1.0, g)?;
    }
    acc.view.bias.axpy(1.0, &d_view.column_sums())?;

    // dL/dy = c (y − ŷ)/σ_y² + W_yᵀ δ_view
    let inv_var = 1.0 / (params.sigma_y * params.sigma_y);
    let mut delta = Matrix::zeros(rows, arch.output_dim);
    let mut r = 0;
    for it in &items {
        for t in it.terms {
            let c = t.coef * scale * inv_var;
            for ((d, yv), tv) in delta.row_mut(r).iter_mut().zip(y.row(r)).zip(it.target) {
                *d = c * (yv - tv);
            }
            r += 1;
        }
    }
    gemm(1.0, &d_view, Trans::No, &view.weight, Trans::No, 1.0, &mut delta)?;

    let mut per_input = false;
    for m in (0..=n).rev() {
        let (dense, grad) = if m == n {
            (&params.tensors.output, &mut acc.output)
        } else {
            (&params.tensors.hidden[m], &mut acc.hidden[m])
        };
        if let (Some(c), Some(g)) = (incoming_codes(arch, &samples, m), grad.code_weight.as_mut()) {
            gemm(1.0, &delta, Trans::Yes, c, Trans::No, 1.0, g)?;
        }
        let input: &Matrix = match m {
            0 => &x,
            _ if m - 1 < depth => &identity[m - 1],
            _ => &hidden[m - 1 - depth],
        };
        if m <= depth && !per_input {
            // identity activations are shared by every sample of an input
            delta = group_sums(&delta, &groups);
            per_input = true;
        }
        gemm(1.0, &delta, Trans::Yes, input, Trans::No, 1.0, &mut grad.weight)?;
        grad.bias.axpy(1.0, &delta.column_sums())?;
        if m == 0 {
            break;
        }
        let mut prev = Matrix::zeros(delta.rows(), dense.weight.cols());
        gemm(1.0, &delta, Trans::No, &dense.weight, Trans::No, 0.0, &mut prev)?;
        for (d, a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
            *d *= a * (1.0 - a);
        }
        delta = prev;
    }
    Ok(())
}

/// Gradient of a frozen-weight objective for fixed draws.
pub fn objective_gradient(
    pair: &TrainingPair,
    params: &Parameters,
    samples: &ViewSamples,
    terms: &[Term],
) -> Result<Tensors> {
    let id = extract_identity(&pair.x, params)?;
    let trace = forward_samples(&id, samples, params)?;
    let mut g = params.tensors.zeros_like();
    backprop_into(params, &trace, &pair.target, terms, 1.0, &mut g)?;
    Ok(g)
}

pub(crate) struct Estep {
    pub trace: ForwardTrace,
    pub set: SampleSet,
    pub loss: f64,
    pub bound: f64,
    pub terms: Vec<Term>,
}

/// Forward pass, importance weights and the terms the estimator keeps.
pub(crate) fn e_step(
    pair: &TrainingPair,
    params: &Parameters,
    samples: &ViewSamples,
    mode: GradMode,
) -> Result<Estep> {
    let id = extract_identity(&pair.x, params)?;
    let trace = forward_samples(&id, samples, params)?;
    weigh(trace, pair, params, mode)
}

/// Importance weights and kept terms for an existing trace.
pub(crate) fn weigh(trace: ForwardTrace, pair: &TrainingPair, params: &Parameters, mode: GradMode) -> Result<Estep> {
    let ll = sample_logliks(&trace, &pair.target, pair.label, params)?;
    let set = SampleSet::from_log_weights(ll.iter().map(|(r, v)| r + v).collect())?;
    let bound: f64 = set.weights.iter().zip(&ll).map(|(w, (r, v))| w * (r + v)).sum();
    let loss = match mode {
        GradMode::OneSample => -set.log_weights[set.best],
        GradMode::WeightedAverage => -bound,
    };
    let terms = terms_for(mode, &set, pair.label);
    Ok(Estep {
        trace,
        set,
        loss,
        bound,
        terms,
    })
}

/// E-step and gradient for fixed draws.
pub fn loss_and_grad_with_samples(
    pair: &TrainingPair,
    params: &Parameters,
    samples: &ViewSamples,
    mode: GradMode,
) -> Result<PairGrad> {
    let e = e_step(pair, params, samples, mode)?;
    let mut grads = params.tensors.zeros_like();
    backprop_into(params, &e.trace, &pair.target, &e.terms, 1.0, &mut grads)?;
    Ok(PairGrad {
        loss: e.loss,
        grads,
        weights: e.set,
        bound: e.bound,
    })
}

/// Draws `s` view samples and backpropagates the largest-weight one.
pub fn loss_and_grad_one_sample(
    pair: &TrainingPair,
    params: &Parameters,
    s: usize,
    rng: &mut Rng,
) -> Result<PairGrad> {
    let samples = sample_view_codes(&params.arch, s, rng)?;
    loss_and_grad_with_samples(pair, params, &samples, GradMode::OneSample)
}

/// Draws `s` view samples and backpropagates their weighted sum.
pub fn loss_and_grad_weighted(
    pair: &TrainingPair,
    params: &Parameters,
    s: usize,
    rng: &mut Rng,
) -> Result<PairGrad> {
    let samples = sample_view_codes(&params.arch, s, rng)?;
    loss_and_grad_with_samples(pair, params, &samples, GradMode::WeightedAverage)
}

/// Fixed draws for the label-free variant: codes plus one view value per code.
#[derive(Debug, Clone)]
pub struct UnsupervisedDraws {
    pub samples: ViewSamples,
    pub views: Vec<f64>,
}

/// Result of the label-free E-step.
#[derive(Debug, Clone)]
pub struct UnsupervisedGrad {
    pub loss: f64,
    pub grads: Tensors,
    pub weights: SampleSet,
    pub selected: usize,
    pub drawn_view: f64,
}

/// Draws codes, then `v_s ~ N(view_mean_s, σ_v)` for each.
pub fn draw_unsupervised(
    pair: &TrainingPair,
    params: &Parameters,
    s: usize,
    rng: &mut Rng,
) -> Result<UnsupervisedDraws> {
    if params.arch.view_head != ViewHeadKind::Continuous {
        return Err(MvpError::contract("unsupervised training needs the continuous view head"));
    }
    let samples = sample_view_codes(&params.arch, s, rng)?;
    let id = extract_identity(&pair.x, params)?;
    let trace = forward_samples(&id, &samples, params)?;
    let views = (0..s)
        .map(|i| trace.view_out[(i, 0)] + params.sigma_v * rng.next_gaussian())
        .collect();
    Ok(UnsupervisedDraws { samples, views })
}

/// Weights `w_s ∝ p(ŷ | h^v_s) · p(ṽ | v_s)` and the selected term.
pub fn unsupervised_terms(
    pair: &TrainingPair,
    v_tilde: f64,
    sigma_tilde: f64,
    params: &Parameters,
    draws: &UnsupervisedDraws,
) -> Result<(SampleSet, Term, f64, ForwardTrace)> {
    if params.arch.view_head != ViewHeadKind::Continuous {
        return Err(MvpError::contract("unsupervised training needs the continuous view head"));
    }
    if !(sigma_tilde > 0.0) {
        return Err(MvpError::contract("sigma for the view initialization must be positive"));
    }
    let id = extract_identity(&pair.x, params)?;
    let trace = forward_samples(&id, &draws.samples, params)?;
    let mut log_w = Vec::with_capacity(trace.len());
    let mut prior = Vec::with_capacity(trace.len());
    for s in 0..trace.len() {
        let r = recon_loglik(&pair.target, trace.y.row(s), params.sigma_y)?;
        let p = view_loglik_continuous(v_tilde, draws.views[s], sigma_tilde)?;
        log_w.push(r + p);
        prior.push(p);
    }
    let set = SampleSet::from_log_weights(log_w)?;
    let best = set.best;
    let term = Term {
        sample: best,
        coef: set.weights[best],
        label: ViewLabel::Yaw(draws.views[best]),
    };
    Ok((set, term, prior[best], trace))
}

/// Label-free step: backpropagates `w_s{log p(ṽ|v_s) + log p(v_s|y,h^v_s) +
/// log p(ŷ|h^id,h^v_s)}` through the largest-weight sample with `v_s` held
/// constant. The `p(ṽ|v_s)` term carries no parameter gradient.
pub fn train_step_unsupervised(
    pair: &TrainingPair,
    v_tilde: f64,
    sigma_tilde: f64,
    params: &Parameters,
    s: usize,
    rng: &mut Rng,
) -> Result<UnsupervisedGrad> {
    let draws = draw_unsupervised(pair, params, s, rng)?;
    unsupervised_with_draws(pair, v_tilde, sigma_tilde, params, &draws)
}

pub fn unsupervised_with_draws(
    pair: &TrainingPair,
    v_tilde: f64,
    sigma_tilde: f64,
    params: &Parameters,
    draws: &UnsupervisedDraws,
) -> Result<UnsupervisedGrad> {
    let (set, term, prior, trace) = unsupervised_terms(pair, v_tilde, sigma_tilde, params, draws)?;
    let r = recon_loglik(&pair.target, trace.y.row(term.sample), params.sigma_y)?;
    let v = view_loglik(term.label, trace.view_out.row(term.sample), params)?;
    let mut grads = params.tensors.zeros_like();
    backprop_into(params, &trace, &pair.target, &[term], 1.0, &mut grads)?;
    Ok(UnsupervisedGrad {
        loss: -(prior + v + r),
        grads,
        weights: set,
        selected: term.sample,
        drawn_view: draws.views[term.sample],
    })
}

/// Central differences of `Σ_r c_r L_{s_r}` with draws and coefficients fixed.
pub fn finite_diff_gradient(
    pair: &TrainingPair,
    params: &Parameters,
    samples: &ViewSamples,
    terms: &[Term],
    h: f64,
) -> Result<Tensors> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(MvpError::contract(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let mut probe = params.clone();
    let mut out = params.tensors.zeros_like();
    let count = params.tensors.tensors().len();
    for t in 0..count {
        let len = params.tensors.tensors()[t].len();
        for i in 0..len {
            let orig = probe.tensors.tensors_mut()[t].as_slice()[i];
            probe.tensors.tensors_mut()[t].as_mut_slice()[i] = orig + h;
            let plus = frozen_objective(pair, &probe, samples, terms)?;
            probe.tensors.tensors_mut()[t].as_mut_slice()[i] = orig - h;
            let minus = frozen_objective(pair, &probe, samples, terms)?;
            probe.tensors.tensors_mut()[t].as_mut_slice()[i] = orig;
            out.tensors_mut()[t].as_mut_slice()[i] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Max relative error per named tensor, `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_errors(analytic: &Tensors, numeric: &Tensors, floor: f64) -> Vec<(String, f64)> {
    analytic
        .named()
        .into_iter()
        .zip(numeric.tensors())
        .map(|((name, a), n)| {
            let err = a
                .as_slice()
                .iter()
                .zip(n.as_slice())
                .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
                .fold(0.0, f64::max);
            (name, err)
        })
        .collect()
}
