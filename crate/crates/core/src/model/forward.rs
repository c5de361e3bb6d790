//! Identity pathway and the sampled stochastic forward pass.

use super::params::{Dense, Parameters};
use super::Architecture;
use crate::error::{MvpError, Result};
use crate::numerics::{dot, gemm, sigmoid_in_place, Matrix, Rng, Trans};

/// One draw of the random view units: a code vector per hybrid layer, each
/// entry in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub codes: Vec<Vec<f64>>,
}

impl ViewSample {
    /// All codes concatenated in layer order (`[h^v_2; h^v_3]` for the default net).
    pub fn concat(&self) -> Vec<f64> {
        self.codes.iter().flatten().copied().collect()
    }
}

/// `S` view samples stored per hybrid layer as `S × r_l` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSamples {
    layers: Vec<Matrix>,
}

impl ViewSamples {
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Codes of the `k`-th hybrid layer.
    pub fn layer(&self, k: usize) -> &Matrix {
        &self.layers[k]
    }

    pub fn get(&self, s: usize) -> ViewSample {
        ViewSample {
            codes: self.layers.iter().map(|m| m.row(s).to_vec()).collect(),
        }
    }

    pub fn from_samples(arch: &Architecture, samples: &[ViewSample]) -> Result<Self> {
        let widths: Vec<usize> = arch.hybrid_layers().map(|(_, l)| l.random).collect();
        let mut layers = Vec::with_capacity(widths.len());
        for (k, &w) in widths.iter().enumerate() {
            let rows = samples.iter().map(|s| s.codes.get(k).map_or(&[][..], Vec::as_slice));
            layers.push(Matrix::stack_rows(w, rows).map_err(|_| {
                MvpError::dim("ViewSamples", format!("hybrid layer {k} expects {w} codes"))
            })?);
        }
        for s in samples {
            if s.codes.len() != widths.len() {
                return Err(MvpError::dim(
                    "ViewSamples",
                    format!("{} code vectors for {} hybrid layers", s.codes.len(), widths.len()),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub(crate) fn from_layers(layers: Vec<Matrix>) -> Self {
        Self { layers }
    }

    /// Keeps only rows `idx`.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            layers: self.layers.iter().map(|m| m.select_rows(idx)).collect(),
        }
    }

    /// `S × R` matrix of all codes concatenated per sample.
    pub fn concat(&self) -> Matrix {
        let total: usize = self.layers.iter().map(Matrix::cols).sum();
        let mut out = Matrix::zeros(self.len(), total);
        for s in 0..self.len() {
            let row = out.row_mut(s);
            let mut off = 0;
            for m in &self.layers {
                row[off..off + m.cols()].copy_from_slice(m.row(s));
                off += m.cols();
            }
        }
        out
    }
}

/// Draws `s` independent view samples, `h^v ~ U(0,1)` entrywise.
///
/// Draws are sample-major, so the first `k` samples of a larger draw equal a
/// draw of `k` from the same generator state.
pub fn sample_view_codes(arch: &Architecture, s: usize, rng: &mut Rng) -> Result<ViewSamples> {
    if s == 0 {
        return Err(MvpError::contract("sample count must be >= 1"));
    }
    let widths: Vec<usize> = arch.hybrid_layers().map(|(_, l)| l.random).collect();
    let mut layers: Vec<Matrix> = widths.iter().map(|&w| Matrix::zeros(s, w)).collect();
    for row in 0..s {
        for m in layers.iter_mut() {
            for v in m.row_mut(row) {
                *v = rng.next_f64();
            }
        }
    }
    Ok(ViewSamples { layers })
}

/// Activations of the code-free prefix of the network for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityFeatures {
    /// Input as a `1 × D_x` row.
    pub x: Matrix,
    /// `h^id_1 … h^id_k`, each `1 × width`.
    pub layers: Vec<Matrix>,
}

impl IdentityFeatures {
    /// The deepest identity feature (`h^id_2` for the default net).
    pub fn top(&self) -> &Matrix {
        self.layers.last().expect("at least one identity layer")
    }
}

/// Repeats row `i` of `m` `groups[i]` times.
fn expand_rows(m: &Matrix, groups: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(groups.iter().sum(), m.cols());
    let mut r = 0;
    for (i, &g) in groups.iter().enumerate() {
        for _ in 0..g {
            out.row_mut(r).copy_from_slice(m.row(i));
            r += 1;
        }
    }
    out
}

/// `det_in·Wᵀ + b (+ codes·Vᵀ)`. With `groups`, `det_in` holds one row per
/// group and is broadcast to every row of that group before the codes are added.
fn affine(d: &Dense, det_in: &Matrix, codes_in: Option<&Matrix>, groups: Option<&[usize]>) -> Result<Matrix> {
    let out = d.weight.rows();
    let mut pre = Matrix::zeros(det_in.rows(), out);
    gemm(1.0, det_in, Trans::No, &d.weight, Trans::Yes, 0.0, &mut pre)?;
    pre.add_row_broadcast(d.bias.as_slice())?;
    if let Some(g) = groups {
        pre = expand_rows(&pre, g);
    }
    match (&d.code_weight, codes_in) {
        (Some(v), Some(c)) => gemm(1.0, c, Trans::No, v, Trans::Yes, 1.0, &mut pre)?,
        (None, None) => {}
        _ => return Err(MvpError::dim("affine", "code input and code weight disagree")),
    }
    Ok(pre)
}

/// Unbatched `W·h + V·c + b` for a single row.
pub(crate) fn affine_row(d: &Dense, det: &[f64], codes: &[f64]) -> Vec<f64> {
    let mut out = d.bias.as_slice().to_vec();
    for (o, w) in out.iter_mut().zip(0..d.weight.rows()) {
        *o += dot(d.weight.row(w), det);
        if let Some(v) = &d.code_weight {
            *o += dot(v.row(w), codes);
        }
    }
    out
}

/// `h^id_1 = σ(U₀x + b₀)`, `h^id_2 = σ(U₁h^id_1 + b₁)`, …; no sampling involved.
pub fn extract_identity(x: &[f64], params: &Parameters) -> Result<IdentityFeatures> {
    Ok(extract_identity_batch(&[x], params)?.pop().expect("one input"))
}

/// [`extract_identity`] for several inputs through one matrix product per layer.
pub fn extract_identity_batch(xs: &[&[f64]], params: &Parameters) -> Result<Vec<IdentityFeatures>> {
    let arch = &params.arch;
    if let Some(x) = xs.iter().find(|x| x.len() != arch.input_dim) {
        return Err(MvpError::dim(
            "extract_identity",
            format!("input of {} for D_x = {}", x.len(), arch.input_dim),
        ));
    }
    let xm = Matrix::stack_rows(arch.input_dim, xs.iter().copied())?;
    let mut layers: Vec<Matrix> = Vec::with_capacity(arch.identity_depth());
    for l in 0..arch.identity_depth() {
        let input = if l == 0 { &xm } else { &layers[l - 1] };
        let mut h = affine(&params.tensors.hidden[l], input, None, None)?;
        sigmoid_in_place(&mut h);
        layers.push(h);
    }
    Ok((0..xs.len())
        .map(|i| IdentityFeatures {
            x: Matrix::row_vector(xm.row(i)),
            layers: layers.iter().map(|h| Matrix::row_vector(h.row(i))).collect(),
        })
        .collect())
}

/// Batched forward pass for `S` samples sharing one input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub identity: IdentityFeatures,
    pub samples: ViewSamples,
    /// Activations of the layers after the identity prefix
    /// (`h^r_3, h^r_4, …`), each `S × width`.
    pub hidden: Vec<Matrix>,
    /// Output means `y_s`, `S × D_y`.
    pub y: Matrix,
    /// View head output per sample: logits (`S × M`) or mean (`S × 1`).
    pub view_out: Matrix,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.y.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Activation of hidden layer `l` for sample `s`, whichever pathway it is on.
    pub fn layer_activation(&self, l: usize, s: usize) -> &[f64] {
        let k = self.identity.layers.len();
        if l < k {
            self.identity.layers[l].row(0)
        } else {
            self.hidden[l - k].row(s)
        }
    }
}

/// Index of the hybrid layer whose codes feed map `l`, if any.
fn codes_feeding(arch: &Architecture, l: usize) -> Option<usize> {
    if l == 0 || arch.layers[l - 1].random == 0 {
        return None;
    }
    Some(arch.layers[..l - 1].iter().filter(|s| s.random > 0).count())
}

pub(crate) fn incoming_codes<'a>(
    arch: &Architecture,
    samples: &'a ViewSamples,
    l: usize,
) -> Option<&'a Matrix> {
    codes_feeding(arch, l).map(|k| samples.layer(k))
}

/// Runs the code-dependent part of the network for every sample.
pub fn forward_samples(
    identity: &IdentityFeatures,
    samples: &ViewSamples,
    params: &Parameters,
) -> Result<ForwardTrace> {
    Ok(forward_samples_batch(&[identity], &[samples], params)?.pop().expect("one input"))
}

/// [`forward_samples`] for several inputs, each with its own draws, stacked
/// into one matrix product per layer.
pub fn forward_samples_batch(
    identities: &[&IdentityFeatures],
    samples: &[&ViewSamples],
    params: &Parameters,
) -> Result<Vec<ForwardTrace>> {
    let arch = &params.arch;
    let depth = arch.identity_depth();
    if identities.len() != samples.len() {
        return Err(MvpError::dim("forward_samples", "one sample set per input is required"));
    }
    if identities.iter().any(|id| id.layers.len() != depth) {
        return Err(MvpError::dim("forward_samples", "identity features from another architecture"));
    }
    if samples.iter().any(|s| s.is_empty()) {
        return Err(MvpError::contract("forward needs at least one sample"));
    }
    let groups: Vec<usize> = samples.iter().map(|s| s.len()).collect();
    let hybrids = arch.hybrid_layers().count();
    let stacked = if samples.len() == 1 {
        samples[0].clone()
    } else {
        let mut layers = Vec::with_capacity(hybrids);
        for k in 0..hybrids {
            let w = samples[0].layer(k).cols();
            layers.push(Matrix::stack_rows(w, samples.iter().flat_map(|s| {
                let m = s.layer(k);
                (0..m.rows()).map(move |r| m.row(r))
            }))?);
        }
        ViewSamples { layers }
    };
    let top_width = identities[0].top().cols();
    let tops = Matrix::stack_rows(top_width, identities.iter().map(|id| id.top().row(0)))?;

    let n = arch.layers.len();
    let mut hidden: Vec<Matrix> = Vec::with_capacity(n - depth);
    for l in depth..n {
        let mut h = if l == depth {
            affine(&params.tensors.hidden[l], &tops, incoming_codes(arch, &stacked, l), Some(&groups))?
        } else {
            affine(&params.tensors.hidden[l], &hidden[l - depth - 1], incoming_codes(arch, &stacked, l), None)?
        };
        sigmoid_in_place(&mut h);
        hidden.push(h);
    }
    let y = match hidden.last() {
        Some(last) => affine(&params.tensors.output, last, incoming_codes(arch, &stacked, n), None)?,
        None => affine(&params.tensors.output, &tops, incoming_codes(arch, &stacked, n), Some(&groups))?,
    };
    let codes = stacked.concat();
    let view_out = affine(&params.tensors.view, &y, Some(&codes), None)?;
    if samples.len() == 1 {
        return Ok(vec![ForwardTrace {
            identity: identities[0].clone(),
            samples: stacked,
            hidden,
            y,
            view_out,
        }]);
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut start = 0;
    for (i, &g) in groups.iter().enumerate() {
        let rows: Vec<usize> = (start..start + g).collect();
        out.push(ForwardTrace {
            identity: identities[i].clone(),
            samples: samples[i].clone(),
            hidden: hidden.iter().map(|h| h.select_rows(&rows)).collect(),
            y: y.select_rows(&rows),
            view_out: view_out.select_rows(&rows),
        });
        start += g;
    }
    Ok(out)
}

/// Single-sample forward pass: returns `(y_mean, view_out, trace)`.
pub fn forward_given_sample(
    identity: &IdentityFeatures,
    sample: &ViewSample,
    params: &Parameters,
) -> Result<(Vec<f64>, Vec<f64>, ForwardTrace)> {
    let samples = ViewSamples::from_samples(&params.arch, std::slice::from_ref(sample))?;
    let trace = forward_samples(identity, &samples, params)?;
    Ok((trace.y.row(0).to_vec(), trace.view_out.row(0).to_vec(), trace))
}
