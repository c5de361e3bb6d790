//! Versioned binary snapshots of a model and, optionally, its optimizer.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "MVPC"  u32 version
//! u32 len, architecture string      f64 σ_y, f64 σ_v
//! u64 epochs_done   u8 state (0 none, 1 momentum, 2 momentum + second moments)
//! u64 optimizer step
//! u32 tensor count, then (u32 rows, u32 cols) per tensor
//! f64 data: parameters, then each optimizer buffer, in tensor order
//! u64 FNV-1a of every byte above
//! ```

use std::fs;
use std::path::Path;

use crate::error::{MvpError, Result};
use crate::model::{Architecture, Parameters, Tensors};
use crate::training::{OptimizerKind, OptimizerState, TrainConfig, Trainer};

pub const MAGIC: &[u8; 4] = b"MVPC";
pub const FORMAT_VERSION: u32 = 1;

/// Model weights plus the training progress needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub epochs_done: usize,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn weights_only(params: Parameters) -> Self {
        Self {
            params,
            epochs_done: 0,
            optimizer: None,
        }
    }
}

impl Trainer {
    /// Snapshot including optimizer buffers.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            epochs_done: self.epochs_done,
            optimizer: Some(self.state.clone()),
        }
    }

    /// Continues from a snapshot. Noise scales come from the snapshot, the
    /// rest from `config`; a weights-only snapshot starts fresh buffers.
    pub fn resume(ck: Checkpoint, mut config: TrainConfig) -> Result<Self> {
        config.sigma_y = ck.params.sigma_y;
        config.sigma_v = ck.params.sigma_v;
        let mut t = Trainer::new(ck.params, config)?;
        t.epochs_done = ck.epochs_done;
        if let Some(state) = ck.optimizer {
            if state.second.is_some() != (t.config.optimizer == OptimizerKind::Adam) {
                return Err(MvpError::contract(format!(
                    "checkpoint optimizer state does not match {:?}",
                    t.config.optimizer
                )));
            }
            t.state = state;
        }
        Ok(t)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn push_tensors(out: &mut Vec<u8>, t: &Tensors) {
    for m in t.tensors() {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let p = &ck.params;
    let mut out = Vec::with_capacity(64 + 8 * 3 * p.tensors.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let arch = p.arch.to_string();
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    out.extend_from_slice(&p.sigma_y.to_le_bytes());
    out.extend_from_slice(&p.sigma_v.to_le_bytes());
    out.extend_from_slice(&(ck.epochs_done as u64).to_le_bytes());
    let state = match &ck.optimizer {
        None => 0u8,
        Some(s) if s.second.is_none() => 1,
        Some(_) => 2,
    };
    out.push(state);
    out.extend_from_slice(&ck.optimizer.as_ref().map_or(0, |s| s.step).to_le_bytes());
    let tensors = p.tensors.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for m in &tensors {
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    }
    push_tensors(&mut out, &p.tensors);
    if let Some(s) = &ck.optimizer {
        push_tensors(&mut out, &s.velocity);
        if let Some(v) = &s.second {
            push_tensors(&mut out, v);
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: impl Into<String>) -> MvpError {
        MvpError::ParseAt {
            what: "checkpoint".into(),
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, t: &mut Tensors) -> Result<()> {
        for m in t.tensors_mut() {
            for v in m.as_mut_slice() {
                *v = self.f64()?;
                if !v.is_finite() {
                    return Err(self.err("non-finite value"));
                }
            }
        }
        Ok(())
    }
}

/// Verifies the checksum first, then the header, then that the tensor data
/// fills the remaining bytes exactly.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 {
        return Err(MvpError::ParseAt {
            what: "checkpoint".into(),
            offset: bytes.len(),
            detail: "too short for header and checksum".into(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(MvpError::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic, expected MVPC"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported format version {version}")));
    }
    let len = r.u32()? as usize;
    let arch_text = std::str::from_utf8(r.take(len)?).map_err(|_| r.err("architecture is not UTF-8"))?;
    let arch: Architecture = arch_text.parse()?;
    let sigma_y = r.f64()?;
    let sigma_v = r.f64()?;
    let mut params = Parameters::zeros(&arch)?.with_sigmas(sigma_y, sigma_v)?;
    let epochs_done = r.u64()? as usize;
    let state = r.u8()?;
    if state > 2 {
        return Err(r.err(format!("unknown optimizer state tag {state}")));
    }
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let expected: Vec<(usize, usize)> = params.tensors.tensors().iter().map(|m| m.shape()).collect();
    if count != expected.len() {
        return Err(r.err(format!("{count} tensors for an architecture with {}", expected.len())));
    }
    for (i, &(rows, cols)) in expected.iter().enumerate() {
        let got = (r.u32()? as usize, r.u32()? as usize);
        if got != (rows, cols) {
            return Err(r.err(format!("tensor {i} is {}x{}, architecture needs {rows}x{cols}", got.0, got.1)));
        }
    }
    let buffers = match state {
        0 => 1,
        1 => 2,
        _ => 3,
    };
    let need = buffers * 8 * params.tensors.count();
    if body.len() - r.pos != need {
        return Err(r.err(format!("{} data bytes, descriptor implies {need}", body.len() - r.pos)));
    }
    r.fill(&mut params.tensors)?;
    let optimizer = if state == 0 {
        None
    } else {
        let mut velocity = params.tensors.zeros_like();
        r.fill(&mut velocity)?;
        let second = if state == 2 {
            let mut v = params.tensors.zeros_like();
            r.fill(&mut v)?;
            Some(v)
        } else {
            None
        };
        Some(OptimizerState { velocity, second, step })
    };
    Ok(Checkpoint {
        params,
        epochs_done,
        optimizer,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)).map_err(|e| MvpError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| MvpError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrainingPair;

    fn sample() -> Checkpoint {
        let arch: Architecture = "16-8-8(3)-8(3)-12-16[3]".parse().unwrap();
        let params = Parameters::init(&arch, 5).unwrap().with_sigmas(0.5, 0.2).unwrap();
        let mut st = OptimizerState::for_kind(&params, OptimizerKind::Adam);
        st.velocity.tensors_mut()[0].fill(0.25);
        st.second.as_mut().unwrap().tensors_mut()[1].fill(1e-7);
        st.step = 42;
        Checkpoint {
            params,
            epochs_done: 3,
            optimizer: Some(st),
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode_checkpoint(&back), bytes);

        let plain = Checkpoint::weights_only(ck.params.clone());
        assert_eq!(decode_checkpoint(&encode_checkpoint(&plain)).unwrap(), plain);
        let mut sgd = ck;
        sgd.optimizer.as_mut().unwrap().second = None;
        assert_eq!(decode_checkpoint(&encode_checkpoint(&sgd)).unwrap(), sgd);
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = encode_checkpoint(&Checkpoint::weights_only(sample().params));
        for i in (0..bytes.len()).step_by(97).chain([0, bytes.len() - 1]) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(decode_checkpoint(&bad).is_err(), "byte {i}");
        }
    }

    #[test]
    fn header_errors_behind_a_valid_checksum() {
        let reseal = |mut body: Vec<u8>| {
            body.truncate(body.len() - 8);
            let s = fnv1a64(&body);
            body.extend_from_slice(&s.to_le_bytes());
            body
        };
        let good = encode_checkpoint(&Checkpoint::weights_only(sample().params));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(decode_checkpoint(&reseal(magic)), Err(MvpError::ParseAt { offset: 0, .. })));
        let mut version = good.clone();
        version[4] = 9;
        assert!(decode_checkpoint(&reseal(version)).is_err());
        let mut short = good.clone();
        short.truncate(good.len() - 16);
        short.extend_from_slice(&[0; 8]);
        match decode_checkpoint(&reseal(short)) {
            Err(MvpError::ParseAt { detail, .. }) => assert!(detail.contains("descriptor")),
            other => panic!("{other:?}"),
        }
        assert!(decode_checkpoint(b"MVPC").is_err());
    }

    #[test]
    fn resumed_training_matches_an_uninterrupted_run() {
        let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
        let mut rng = crate::numerics::Rng::new(1);
        let pairs: Vec<TrainingPair> = (0..9)
            .map(|i| TrainingPair {
                x: rng.uniform(1, 6).map(|v| v - 0.5).into_vec(),
                target: rng.uniform(1, 6).map(|v| v - 0.5).into_vec(),
                label: crate::model::ViewLabel::Class(i % 3),
                identity: i,
                illumination: 0,
                input_view: 0,
                output_view: i % 3,
            })
            .collect();
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let cfg = TrainConfig { epochs: 4, samples: 3, batch_size: 4, optimizer, learning_rate: 0.01, ..Default::default() };
            let mut full = Trainer::new(Parameters::init(&arch, 2).unwrap(), cfg.clone()).unwrap();
            full.run(&pairs, None, |_, _| Ok(())).unwrap();

            let mut half = Trainer::new(Parameters::init(&arch, 2).unwrap(), TrainConfig { epochs: 2, ..cfg.clone() }).unwrap();
            half.run(&pairs, None, |_, _| Ok(())).unwrap();
            let bytes = encode_checkpoint(&half.checkpoint());
            let mut resumed = Trainer::resume(decode_checkpoint(&bytes).unwrap(), cfg.clone()).unwrap();
            // zero further epochs reproduces the same bytes
            assert_eq!(encode_checkpoint(&resumed.checkpoint()), bytes);
            resumed.run(&pairs, None, |_, _| Ok(())).unwrap();
            assert_eq!(encode_checkpoint(&resumed.checkpoint()), encode_checkpoint(&full.checkpoint()));
        }
        let adam = Trainer::new(Parameters::init(&arch, 2).unwrap(), TrainConfig { optimizer: OptimizerKind::Adam, ..Default::default() }).unwrap();
        assert!(Trainer::resume(adam.checkpoint(), TrainConfig::default()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        assert!(matches!(load_checkpoint(&dir.path().join("none")), Err(MvpError::Io { .. })));
    }
}
