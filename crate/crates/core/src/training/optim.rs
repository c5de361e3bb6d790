use crate::error::{MvpError, Result};
use crate::model::{Parameters, Tensors};

/// Update rule applied after each minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Classical momentum.
    Sgd,
    /// Adam with `β₁ = momentum`, `β₂ = 0.999`, `ε = 1e-8`.
    Adam,
}

pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Momentum (or first-moment) buffers, plus second moments for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Tensors,
    pub second: Option<Tensors>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &Parameters) -> Self {
        Self::for_kind(params, OptimizerKind::Sgd)
    }

    pub fn for_kind(params: &Parameters, kind: OptimizerKind) -> Self {
        Self {
            velocity: params.tensors.zeros_like(),
            second: (kind == OptimizerKind::Adam).then(|| params.tensors.zeros_like()),
            step: 0,
        }
    }
}

pub fn optimizer_step(
    kind: OptimizerKind,
    params: &mut Parameters,
    grads: &Tensors,
    state: &mut OptimizerState,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    match kind {
        OptimizerKind::Sgd => sgd_step(params, grads, state, learning_rate, momentum),
        OptimizerKind::Adam => adam_step(params, grads, state, learning_rate, momentum),
    }
}

/// Bias-corrected Adam: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `θ ← θ − lr·m̂/(√v̂ + ε)`.
pub fn adam_step(
    params: &mut Parameters,
    grads: &Tensors,
    state: &mut OptimizerState,
    learning_rate: f64,
    beta1: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(MvpError::contract(format!("beta1 {beta1} outside [0, 1)")));
    }
    if grads.count() != params.tensors.count() {
        return Err(MvpError::dim("adam_step", "gradient shape differs from parameters"));
    }
    let second = state
        .second
        .get_or_insert_with(|| params.tensors.zeros_like());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 / (1.0 - beta1.powi(t));
    let c2 = 1.0 / (1.0 - ADAM_BETA2.powi(t));
    let ms = state.velocity.tensors_mut();
    let vs = second.tensors_mut();
    let ps = params.tensors.tensors_mut();
    for (((p, m), v), g) in ps.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
        for (((p, m), v), g) in p
            .as_mut_slice()
            .iter_mut()
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
            .zip(g.as_slice())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= learning_rate * (*m * c1) / ((*v * c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// `buf ← μ·buf + g; θ ← θ − lr·buf`.
pub fn sgd_step(
    params: &mut Parameters,
    grads: &Tensors,
    state: &mut OptimizerState,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(MvpError::contract(format!("momentum {momentum} outside [0, 1)")));
    }
    state.velocity.scale(momentum);
    state.velocity.axpy(1.0, grads)?;
    params.tensors.axpy(-learning_rate, &state.velocity)?;
    state.step += 1;
    Ok(())
}
