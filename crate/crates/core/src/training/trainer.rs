use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use super::grad::{
    backprop_batch, backprop_into, draw_unsupervised, unsupervised_terms, weigh, BackpropItem,
    GradMode,
};
use super::optim::{optimizer_step, OptimizerKind, OptimizerState};
use crate::error::{MvpError, Result};
use crate::model::{
    extract_identity_batch, forward_samples_batch, recon_loglik, sample_view_codes, view_loglik,
    Parameters, TrainingPair, ViewSamples,
};
use crate::numerics::{derive_seed, Rng};

/// Knobs of the MCEM/backprop trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// View samples drawn per pair and step.
    pub samples: usize,
    pub mode: GradMode,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Momentum for SGD, `β₁` for Adam.
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub sigma_y: f64,
    pub sigma_v: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            mode: GradMode::OneSample,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 100,
            batch_size: 16,
            seed: 0,
            sigma_y: crate::model::DEFAULT_SIGMA_Y,
            sigma_v: crate::model::DEFAULT_SIGMA_V,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(MvpError::contract("samples must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(MvpError::contract("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MvpError::contract("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(MvpError::contract("batch size must be >= 1"));
        }
        if !(self.sigma_y > 0.0 && self.sigma_v > 0.0) {
            return Err(MvpError::contract("sigmas must be positive"));
        }
        Ok(())
    }
}

/// Label-free training inputs: one initial view guess per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedConfig {
    /// `ṽ` for each pair, aligned with the dataset order.
    pub v_tilde: Vec<f64>,
    pub sigma_tilde: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean over pairs of `Σ_s w_s log p(ŷ, v̂, h^v_s | h^id)` before each update.
    pub elbo_estimate: f64,
    /// Median over pairs of the largest normalized weight.
    pub max_weight_median: f64,
    /// Fraction of all drawn samples whose normalized weight exceeds 0.9.
    pub weight_sparsity_fraction: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,mean_loss,elbo_estimate,max_weight_median,weight_sparsity_fraction,wall_seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.10e},{:.10e},{:.10},{:.10},{:.3}",
            self.epoch,
            self.mean_loss,
            self.elbo_estimate,
            self.max_weight_median,
            self.weight_sparsity_fraction,
            self.wall_seconds
        )
    }
}

/// Appends one row to a metrics CSV, writing the header if the file is new.
pub fn append_metrics(path: &Path, m: &EpochMetrics) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| MvpError::io(path, e))?;
    if fresh {
        writeln!(f, "{METRICS_HEADER}").map_err(|e| MvpError::io(path, e))?;
    }
    writeln!(f, "{}", m.csv_row()).map_err(|e| MvpError::io(path, e))
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One pass over `pairs` in a seeded shuffled order with minibatch SGD.
///
/// Gradients within a batch are accumulated in pair order and averaged.
pub fn train_epoch(
    pairs: &[TrainingPair],
    params: &mut Parameters,
    state: &mut OptimizerState,
    config: &TrainConfig,
    unsupervised: Option<&UnsupervisedConfig>,
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochMetrics> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(MvpError::contract("train_epoch on an empty dataset"));
    }
    if let Some(u) = unsupervised {
        if u.v_tilde.len() != pairs.len() {
            return Err(MvpError::contract("one view initialization per pair is required"));
        }
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);

    let mut loss_sum = 0.0;
    let mut bound_sum = 0.0;
    let mut max_weights = Vec::with_capacity(pairs.len());
    let mut heavy = 0usize;
    let mut acc = params.tensors.zeros_like();

    for batch in order.chunks(config.batch_size) {
        acc.scale(0.0);
        let scale = 1.0 / batch.len() as f64;
        match unsupervised {
            None => {
                let draws: Vec<ViewSamples> = batch
                    .iter()
                    .map(|_| sample_view_codes(&params.arch, config.samples, rng))
                    .collect::<Result<_>>()?;
                let xs: Vec<&[f64]> = batch.iter().map(|&i| pairs[i].x.as_slice()).collect();
                let ids = extract_identity_batch(&xs, params)?;
                let traces = forward_samples_batch(&ids.iter().collect::<Vec<_>>(), &draws.iter().collect::<Vec<_>>(), params)?;
                let mut steps = Vec::with_capacity(batch.len());
                for (trace, &i) in traces.into_iter().zip(batch) {
                    steps.push(weigh(trace, &pairs[i], params, config.mode)?);
                }
                let items: Vec<BackpropItem> = steps
                    .iter()
                    .zip(batch)
                    .map(|(e, &i)| BackpropItem { trace: &e.trace, target: &pairs[i].target, terms: &e.terms })
                    .collect();
                backprop_batch(params, &items, scale, &mut acc)?;
                for e in &steps {
                    loss_sum += e.loss;
                    bound_sum += e.bound;
                    max_weights.push(e.set.max_weight());
                    heavy += e.set.weights.iter().filter(|&&w| w > 0.9).count();
                }
            }
            Some(u) => {
                for &i in batch {
                    let pair = &pairs[i];
                    let draws = draw_unsupervised(pair, params, config.samples, rng)?;
                    let (set, term, prior, trace) =
                        unsupervised_terms(pair, u.v_tilde[i], u.sigma_tilde, params, &draws)?;
                    let r = recon_loglik(&pair.target, trace.y.row(term.sample), params.sigma_y)?;
                    let v = view_loglik(term.label, trace.view_out.row(term.sample), params)?;
                    backprop_into(params, &trace, &pair.target, &[term], scale, &mut acc)?;
                    loss_sum -= prior + v + r;
                    bound_sum += set.weights[set.best] * (prior + v + r);
                    max_weights.push(set.max_weight());
                    heavy += set.weights.iter().filter(|&&w| w > 0.9).count();
                }
            }
        }
        optimizer_step(config.optimizer, params, &acc, state, config.learning_rate, config.momentum)?;
    }
    if !params.tensors.is_finite() {
        return Err(MvpError::contract(format!(
            "parameters diverged in epoch {epoch}; lower the learning rate"
        )));
    }
    let n = pairs.len() as f64;
    Ok(EpochMetrics {
        epoch,
        mean_loss: loss_sum / n,
        elbo_estimate: bound_sum / n,
        max_weight_median: median(&mut max_weights),
        weight_sparsity_fraction: heavy as f64 / (n * config.samples as f64),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Complete training state; serializable through the checkpoint module.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub params: Parameters,
    pub state: OptimizerState,
    pub config: TrainConfig,
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(params: Parameters, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = params.with_sigmas(config.sigma_y, config.sigma_v)?;
        let state = OptimizerState::for_kind(&params, config.optimizer);
        Ok(Self {
            params,
            state,
            config,
            epochs_done: 0,
        })
    }

    pub fn run_epoch(
        &mut self,
        pairs: &[TrainingPair],
        unsupervised: Option<&UnsupervisedConfig>,
    ) -> Result<EpochMetrics> {
        let epoch = self.epochs_done + 1;
        // per-epoch stream so a resumed run draws what an uninterrupted one would
        let mut rng = Rng::new(derive_seed(&[self.config.seed, epoch as u64]));
        let m = train_epoch(
            pairs,
            &mut self.params,
            &mut self.state,
            &self.config,
            unsupervised,
            epoch,
            &mut rng,
        )?;
        self.epochs_done += 1;
        Ok(m)
    }

    /// Runs the remaining configured epochs, calling `on_epoch` after each.
    pub fn run<F>(
        &mut self,
        pairs: &[TrainingPair],
        unsupervised: Option<&UnsupervisedConfig>,
        mut on_epoch: F,
    ) -> Result<Vec<EpochMetrics>>
    where
        F: FnMut(&Trainer, &EpochMetrics) -> Result<()>,
    {
        let mut out = Vec::new();
        while self.epochs_done < self.config.epochs {
            let m = self.run_epoch(pairs, unsupervised)?;
            on_epoch(self, &m)?;
            out.push(m);
        }
        Ok(out)
    }
}
