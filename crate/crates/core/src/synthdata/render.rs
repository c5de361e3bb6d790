use crate::error::{MvpError, Result};
use crate::numerics::{derive_seed, Rng};

pub const LANDMARKS: usize = 8;
pub const JITTER_STD: f64 = 0.12;
/// Brightness factor for landmarks facing away from the camera.
pub const BACKFACE_ATTENUATION: f64 = 0.3;
/// Head radius as a fraction of the image side.
pub const FACE_SCALE: f64 = 0.35;

// (x, y) on the front cap of the unit sphere: eyes, nose, mouth corners, chin, ears.
const TEMPLATE_XY: [(f64, f64); LANDMARKS] = [
    (-0.38, 0.28),
    (0.38, 0.28),
    (0.0, -0.02),
    (-0.28, -0.42),
    (0.28, -0.42),
    (0.0, -0.72),
    (-0.88, 0.05),
    (0.88, 0.05),
];

fn template() -> Vec<[f64; 3]> {
    TEMPLATE_XY
        .iter()
        .map(|&(x, y)| [x, y, (1.0 - x * x - y * y).sqrt()])
        .collect()
}

/// A synthetic head: 3-D landmarks and their brightness.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySpec {
    pub id: usize,
    pub landmarks: Vec<[f64; 3]>,
    pub intensity: Vec<f64>,
}

impl IdentitySpec {
    /// Template head with matched left/right intensities, mirror symmetric about x = 0.
    pub fn symmetric_template(intensity: f64) -> Self {
        Self {
            id: 0,
            landmarks: template(),
            intensity: vec![intensity; LANDMARKS],
        }
    }
}

/// Template plus per-identity jitter; a pure function of `(seed, id)`.
pub fn generate_identity(dataset_seed: u64, id: usize) -> IdentitySpec {
    let mut rng = Rng::new(derive_seed(&[dataset_seed, 0x1D, id as u64]));
    let landmarks = template()
        .into_iter()
        .map(|p| {
            let mut q = p.map(|c| c + JITTER_STD * rng.next_gaussian());
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1.0 {
                q.iter_mut().for_each(|c| *c /= norm);
            }
            q
        })
        .collect();
    let intensity = (0..LANDMARKS).map(|_| 0.5 + 0.5 * rng.next_f64()).collect();
    IdentitySpec {
        id,
        landmarks,
        intensity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub yaw_degrees: f64,
    pub gain: f64,
    pub size: usize,
    pub blob_std: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            yaw_degrees: 0.0,
            gain: 1.0,
            size: 32,
            blob_std: 1.6,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.yaw_degrees) {
            return Err(MvpError::contract(format!("yaw {} outside [-90, 90]", self.yaw_degrees)));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(MvpError::contract("illumination gain must be positive"));
        }
        if self.size < 8 {
            return Err(MvpError::contract(format!("image size {} below 8", self.size)));
        }
        if !(self.blob_std > 0.0) {
            return Err(MvpError::contract("blob std must be positive"));
        }
        Ok(())
    }
}

/// Projected landmark: pixel column, pixel row and depth after rotation.
pub(crate) fn project(spec: &IdentitySpec, rp: &RenderParams) -> Vec<(f64, f64, f64)> {
    let (s, c) = rp.yaw_degrees.to_radians().sin_cos();
    let center = (rp.size as f64 - 1.0) / 2.0;
    let scale = FACE_SCALE * rp.size as f64;
    spec.landmarks
        .iter()
        .map(|&[x, y, z]| {
            let xr = c * x + s * z;
            let zr = -s * x + c * z;
            (center + scale * xr, center - scale * y, zr)
        })
        .collect()
}

/// Unclamped intensities; [`render_view`] clamps these to `[0, 1]`.
pub fn render_linear(spec: &IdentitySpec, rp: &RenderParams) -> Result<Vec<f64>> {
    rp.validate()?;
    if spec.landmarks.len() != spec.intensity.len() {
        return Err(MvpError::dim("render_view", "one intensity per landmark"));
    }
    let n = rp.size;
    let inv = 1.0 / (2.0 * rp.blob_std * rp.blob_std);
    let mut img = vec![0.0; n * n];
    for (&(u, v, depth), &a) in project(spec, rp).iter().zip(&spec.intensity) {
        let amp = a * rp.gain * if depth < 0.0 { BACKFACE_ATTENUATION } else { 1.0 };
        for (r, row) in img.chunks_exact_mut(n).enumerate() {
            let dv = r as f64 - v;
            for (col, px) in row.iter_mut().enumerate() {
                let du = col as f64 - u;
                *px += amp * (-(du * du + dv * dv) * inv).exp();
            }
        }
    }
    Ok(img)
}

/// Rotates about the vertical axis, projects orthographically and splats
/// each landmark as a Gaussian blob. Row-major `size × size` in `[0, 1]`.
pub fn render_view(spec: &IdentitySpec, rp: &RenderParams) -> Result<Vec<f64>> {
    Ok(render_linear(spec, rp)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect())
}

/// Intensity-weighted mean column of the projected landmarks.
pub fn landmark_centroid_x(spec: &IdentitySpec, rp: &RenderParams) -> f64 {
    let pts = project(spec, rp);
    let w: f64 = spec.intensity.iter().sum();
    pts.iter().zip(&spec.intensity).map(|(p, a)| p.0 * a).sum::<f64>() / w
}
