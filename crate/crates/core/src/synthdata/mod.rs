//! Deterministic synthetic multi-view heads.
//!
//! Eight 3-D landmarks per identity, rotated in yaw, projected orthographically
//! and splatted as Gaussian blobs. The whole dataset is a pure function of
//! its seed and grid.

mod dataset;
mod manifest;
mod pgm;
mod render;

pub use dataset::{build_pairs, illumination_gains, Dataset, DatasetConfig, Pairing, MANIFEST_FILE};
pub use manifest::{image_path, read_manifest, write_manifest, DatasetManifest, ManifestRecord};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, GrayImage};
pub use render::{
    generate_identity, landmark_centroid_x, render_linear, render_view, IdentitySpec,
    RenderParams, BACKFACE_ATTENUATION, FACE_SCALE, JITTER_STD, LANDMARKS,
};
