use super::arch::Architecture;
use crate::error::{MvpError, Result};
use crate::numerics::{Matrix, Rng};

pub const DEFAULT_SIGMA_Y: f64 = 1.0;
pub const DEFAULT_SIGMA_V: f64 = 0.1;

/// Affine map `out = W·h + V·c + b`, weights stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    /// Present when random codes feed this map.
    pub code_weight: Option<Matrix>,
    /// `1 × out`.
    pub bias: Matrix,
}

impl Dense {
    fn zeros(out: usize, inp: usize, codes: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            code_weight: (codes > 0).then(|| Matrix::zeros(out, codes)),
            bias: Matrix::zeros(1, out),
        }
    }

    fn init(out: usize, inp: usize, codes: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / ((inp + codes) as f64).sqrt();
        let weight = rng.gaussian(out, inp, 0.0, std);
        let code_weight = (codes > 0).then(|| rng.gaussian(out, codes, 0.0, std));
        Self {
            weight,
            code_weight,
            bias: Matrix::zeros(1, out),
        }
    }
}

/// Every trainable tensor of the network. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub hidden: Vec<Dense>,
    pub output: Dense,
    /// View head: `weight` acts on `y`, `code_weight` on all codes concatenated.
    pub view: Dense,
}

impl Tensors {
    pub fn zeros(arch: &Architecture) -> Self {
        let hidden = (0..arch.layers.len())
            .map(|l| {
                Dense::zeros(
                    arch.layers[l].width,
                    arch.incoming_width(l),
                    arch.incoming_codes(l),
                )
            })
            .collect();
        let n = arch.layers.len();
        Self {
            hidden,
            output: Dense::zeros(arch.output_dim, arch.incoming_width(n), arch.incoming_codes(n)),
            view: Dense::zeros(arch.view_head.outputs(), arch.output_dim, arch.total_random()),
        }
    }

    fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        let hidden = (0..arch.layers.len())
            .map(|l| {
                Dense::init(
                    arch.layers[l].width,
                    arch.incoming_width(l),
                    arch.incoming_codes(l),
                    rng,
                )
            })
            .collect();
        let n = arch.layers.len();
        let output = Dense::init(
            arch.output_dim,
            arch.incoming_width(n),
            arch.incoming_codes(n),
            rng,
        );
        let view = Dense::init(
            arch.view_head.outputs(),
            arch.output_dim,
            arch.total_random(),
            rng,
        );
        Self {
            hidden,
            output,
            view,
        }
    }

    /// Tensors in canonical order with stable names
    /// (`U0`, `V2`, `b2`, …, `U_out`, `W_y`, `W_v`, `b_view`).
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, d) in self.hidden.iter().enumerate() {
            out.push((format!("U{l}"), &d.weight));
            if let Some(v) = &d.code_weight {
                out.push((format!("V{l}"), v));
            }
            out.push((format!("b{l}"), &d.bias));
        }
        out.push(("U_out".into(), &self.output.weight));
        if let Some(v) = &self.output.code_weight {
            out.push(("V_out".into(), v));
        }
        out.push(("b_out".into(), &self.output.bias));
        out.push(("W_y".into(), &self.view.weight));
        if let Some(v) = &self.view.code_weight {
            out.push(("W_v".into(), v));
        }
        out.push(("b_view".into(), &self.view.bias));
        out
    }

    /// Same order as [`Tensors::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for d in self.hidden.iter_mut().chain([&mut self.output, &mut self.view]) {
            out.push(&mut d.weight);
            if let Some(v) = &mut d.code_weight {
                out.push(v);
            }
            out.push(&mut d.bias);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, m)| m).collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|m| m.fill(0.0));
        z
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tensors) -> Result<()> {
        let src = other.tensors();
        let dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(MvpError::dim("Tensors::axpy", "tensor lists differ"));
        }
        for (d, o) in dst.into_iter().zip(src) {
            d.axpy(s, o)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|m| m.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().fold(0.0, |a, m| a.max(m.max_abs()))
    }
}

/// Network weights plus the fixed observation noise scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub arch: Architecture,
    pub tensors: Tensors,
    /// Per-pixel std of `p(y | h^id, h^v)`.
    pub sigma_y: f64,
    /// Std of the continuous view head.
    pub sigma_v: f64,
}

impl Parameters {
    /// Weights `N(0, 1/fan_in)`, zero biases, default noise scales.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = Rng::new(seed);
        Ok(Self {
            arch: arch.clone(),
            tensors: Tensors::init(arch, &mut rng),
            sigma_y: DEFAULT_SIGMA_Y,
            sigma_v: DEFAULT_SIGMA_V,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch: arch.clone(),
            tensors: Tensors::zeros(arch),
            sigma_y: DEFAULT_SIGMA_Y,
            sigma_v: DEFAULT_SIGMA_V,
        })
    }

    pub fn with_sigmas(mut self, sigma_y: f64, sigma_v: f64) -> Result<Self> {
        if !(sigma_y > 0.0 && sigma_v > 0.0) {
            return Err(MvpError::contract("sigma_y and sigma_v must be positive"));
        }
        self.sigma_y = sigma_y;
        self.sigma_v = sigma_v;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_parameters() {
        let arch: Architecture = "16-8-8(3)-8(3)-12-16[3]".parse().unwrap();
        assert_eq!(
            Parameters::init(&arch, 3).unwrap(),
            Parameters::init(&arch, 3).unwrap()
        );
        assert_ne!(
            Parameters::init(&arch, 3).unwrap(),
            Parameters::init(&arch, 4).unwrap()
        );
    }

    #[test]
    fn fan_in_512_weight_std() {
        let arch: Architecture = "16-512-512(10)-16[2]".parse().unwrap();
        let p = Parameters::init(&arch, 1).unwrap();
        let w = &p.tensors.hidden[1].weight;
        assert_eq!(w.cols(), 512);
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((0.040..=0.048).contains(&std), "std {std}");
        assert!(p.tensors.hidden[1].bias.as_slice().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn default_tensor_count_matches_architecture() {
        let arch = Architecture::default();
        let p = Parameters::init(&arch, 0).unwrap();
        assert_eq!(p.tensors.count(), arch.parameter_count());
        assert_eq!(p.sigma_y, 1.0);
        assert_eq!(p.sigma_v, 0.1);
        let names: Vec<String> = p.tensors.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "U0", "b0", "U1", "b1", "U2", "V2", "b2", "U3", "V3", "b3", "U_out", "b_out",
                "W_y", "W_v", "b_view"
            ]
        );
    }
}
