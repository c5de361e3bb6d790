use std::fmt;
use std::str::FromStr;

use crate::error::{MvpError, Result};

/// One hidden layer: `width` deterministic sigmoid units plus `random`
/// uniformly sampled view units (zero for a purely deterministic layer).
///
/// Random units of layer `l` feed the deterministic units of layer `l + 1`
/// (or the output layer) and the view head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub random: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Deterministic,
    Hybrid,
}

impl LayerSpec {
    pub fn deterministic(width: usize) -> Self {
        Self { width, random: 0 }
    }

    pub fn hybrid(width: usize, random: usize) -> Self {
        Self { width, random }
    }

    pub fn kind(&self) -> LayerKind {
        if self.random == 0 {
            LayerKind::Deterministic
        } else {
            LayerKind::Hybrid
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewHeadKind {
    /// Softmax over `M` view classes.
    Discrete(usize),
    /// Gaussian over a scalar yaw in `[-1, 1]`.
    Continuous,
}

impl ViewHeadKind {
    pub fn outputs(&self) -> usize {
        match self {
            ViewHeadKind::Discrete(m) => *m,
            ViewHeadKind::Continuous => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub output_dim: usize,
    pub view_head: ViewHeadKind,
}

impl Default for Architecture {
    /// `32x32-512-512(10)-512(10)-1024-32x32[7]`
    fn default() -> Self {
        Self {
            input_dim: 1024,
            layers: vec![
                LayerSpec::deterministic(512),
                LayerSpec::hybrid(512, 10),
                LayerSpec::hybrid(512, 10),
                LayerSpec::deterministic(1024),
            ],
            output_dim: 1024,
            view_head: ViewHeadKind::Discrete(7),
        }
    }
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        output_dim: usize,
        view_head: ViewHeadKind,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            layers,
            output_dim,
            view_head,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(MvpError::contract("input and output dims must be positive"));
        }
        if self.layers.is_empty() || self.layers.iter().any(|l| l.width == 0) {
            return Err(MvpError::contract("every hidden layer needs width >= 1"));
        }
        if self.first_hybrid().is_none() {
            return Err(MvpError::contract("at least one hybrid layer is required"));
        }
        if let ViewHeadKind::Discrete(m) = self.view_head {
            if m < 2 {
                return Err(MvpError::contract("discrete view head needs M >= 2"));
            }
        }
        Ok(())
    }

    pub fn first_hybrid(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.random > 0)
    }

    /// Number of leading layers that never see a random code: the identity
    /// pathway (`h^id_1 … h^id_k`).
    pub fn identity_depth(&self) -> usize {
        self.first_hybrid().map_or(self.layers.len(), |i| i + 1)
    }

    pub fn hybrid_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers.iter().enumerate().filter(|(_, l)| l.random > 0)
    }

    pub fn total_random(&self) -> usize {
        self.layers.iter().map(|l| l.random).sum()
    }

    /// Code width entering hidden layer `l` (or the output when `l == layers.len()`).
    pub fn incoming_codes(&self, l: usize) -> usize {
        if l == 0 {
            0
        } else {
            self.layers[l - 1].random
        }
    }

    pub fn incoming_width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.layers[l - 1].width
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        for l in 0..=self.layers.len() {
            let out = if l < self.layers.len() {
                self.layers[l].width
            } else {
                self.output_dim
            };
            n += out * (self.incoming_width(l) + self.incoming_codes(l) + 1);
        }
        let k = self.view_head.outputs();
        n + k * (self.output_dim + self.total_random() + 1)
    }
}

fn fmt_dim(d: usize) -> String {
    let side = (d as f64).sqrt().round() as usize;
    if side * side == d && side > 1 {
        format!("{side}x{side}")
    } else {
        d.to_string()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fmt_dim(self.input_dim))?;
        for l in &self.layers {
            if l.random > 0 {
                write!(f, "-{}({})", l.width, l.random)?;
            } else {
                write!(f, "-{}", l.width)?;
            }
        }
        write!(f, "-{}", fmt_dim(self.output_dim))?;
        match self.view_head {
            ViewHeadKind::Discrete(m) => write!(f, "[{m}]"),
            ViewHeadKind::Continuous => write!(f, "[c]"),
        }
    }
}

fn parse_dim(tok: &str) -> Result<usize> {
    let bad = || MvpError::contract(format!("bad dimension {tok:?}"));
    if let Some((a, b)) = tok.split_once(['x', '×']) {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        Ok(a * b)
    } else {
        tok.trim().parse().map_err(|_| bad())
    }
}

impl FromStr for Architecture {
    type Err = MvpError;

    /// Parses size strings like `32x32-512-512(10)-512(10)-1024-32x32[7]`;
    /// `[c]` selects the continuous view head. `×` and `−` are accepted too.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('−', "-");
        let (body, head) = match s.find('[') {
            Some(i) => {
                let close = s[i..]
                    .find(']')
                    .ok_or_else(|| MvpError::contract("unterminated view head"))?;
                (&s[..i], s[i + 1..i + close].trim())
            }
            None => return Err(MvpError::contract("missing [M] or [c] view head")),
        };
        let view_head = if head.eq_ignore_ascii_case("c") {
            ViewHeadKind::Continuous
        } else {
            ViewHeadKind::Discrete(
                head.parse()
                    .map_err(|_| MvpError::contract(format!("bad view head {head:?}")))?,
            )
        };
        let toks: Vec<&str> = body.split('-').map(str::trim).collect();
        if toks.len() < 3 {
            return Err(MvpError::contract("need input, hidden layers and output"));
        }
        let input_dim = parse_dim(toks[0])?;
        let output_dim = parse_dim(toks[toks.len() - 1])?;
        let mut layers = Vec::new();
        for t in &toks[1..toks.len() - 1] {
            let layer = match t.split_once('(') {
                Some((w, r)) => {
                    let r = r.trim_end_matches(')');
                    LayerSpec::hybrid(parse_dim(w)?, parse_dim(r)?)
                }
                None => LayerSpec::deterministic(parse_dim(t)?),
            };
            layers.push(layer);
        }
        Architecture::new(input_dim, layers, output_dim, view_head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_size_string() {
        let a = Architecture::default();
        assert_eq!(a.to_string(), "32x32-512-512(10)-512(10)-1024-32x32[7]");
        let b: Architecture = "32×32−512−512(10)−512(10)−1024−32×32[7]".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.identity_depth(), 2);
        assert_eq!(a.total_random(), 20);
    }

    #[test]
    fn parameter_count_matches_shape_sum() {
        let a = Architecture::default();
        let expected = 512 * 1024 + 512          // U0, b0
            + 512 * 512 + 512                    // U1, b1
            + 512 * 512 + 512 * 10 + 512         // U2, V2, b2
            + 1024 * 512 + 1024 * 10 + 1024      // U3, V3, b3
            + 1024 * 1024 + 1024                 // U4, b4
            + 7 * 1024 + 7 * 20 + 7; // view head
        assert_eq!(a.parameter_count(), expected);
    }

    #[test]
    fn rejects_invalid_layouts() {
        assert!("16-8-8-16[3]".parse::<Architecture>().is_err());
        assert!("16-8(2)-16[1]".parse::<Architecture>().is_err());
        assert!("16-8(2)-16".parse::<Architecture>().is_err());
        let c: Architecture = "16-8-8(3)-8(3)-12-16[c]".parse().unwrap();
        assert_eq!(c.view_head, ViewHeadKind::Continuous);
    }
}
