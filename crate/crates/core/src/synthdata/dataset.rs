use std::fs;
use std::path::Path;

use super::manifest::{image_path, read_manifest, write_manifest, DatasetManifest, ManifestRecord};
use super::pgm::{read_pgm, write_pgm, GrayImage};
use super::render::{generate_identity, render_view, RenderParams};
use crate::error::{MvpError, Result};
use crate::model::{to_model_space, TrainingPair, ViewHeadKind, ViewLabel};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub identities: usize,
    pub train_identities: usize,
    pub views: Vec<f64>,
    pub illuminations: usize,
    pub size: usize,
    pub blob_std: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            identities: 50,
            train_identities: 30,
            views: vec![-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0],
            illuminations: 3,
            size: 32,
            blob_std: 1.6,
        }
    }
}

/// `L` gains evenly spaced over `[0.7, 1.3]`; a single illumination has gain 1.
pub fn illumination_gains(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        n => (0..n)
            .map(|i| (0.7 * (n - 1 - i) as f64 + 1.3 * i as f64) / (n - 1) as f64)
            .collect(),
    }
}

/// Images in memory alongside their manifest; `images[i]` belongs to `records[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Pixels in `[0, 1]`, row-major.
    pub images: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Every input view paired with every output view.
    AllViews,
    /// Outputs restricted to the 0° view.
    FrontalOnly,
}

impl Dataset {
    /// Renders every `(identity, view, illumination)` in that nesting order.
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        if cfg.train_identities > cfg.identities {
            return Err(MvpError::contract("train identities exceed identities"));
        }
        let gains = illumination_gains(cfg.illuminations);
        let mut records = Vec::new();
        let mut images = Vec::new();
        for id in 0..cfg.identities {
            let spec = generate_identity(cfg.seed, id);
            for (k, &yaw) in cfg.views.iter().enumerate() {
                for (l, &gain) in gains.iter().enumerate() {
                    let rp = RenderParams {
                        yaw_degrees: yaw,
                        gain,
                        size: cfg.size,
                        blob_std: cfg.blob_std,
                    };
                    images.push(render_view(&spec, &rp)?);
                    records.push(ManifestRecord {
                        identity: id,
                        view: k,
                        yaw,
                        illumination: l,
                        path: image_path(id, k, l),
                    });
                }
            }
        }
        let manifest = DatasetManifest {
            seed: cfg.seed,
            identities: cfg.identities,
            train_identities: cfg.train_identities,
            size: cfg.size,
            blob_std: cfg.blob_std,
            views: cfg.views.clone(),
            illuminations: gains,
            records,
        };
        manifest.validate()?;
        Ok(Self { manifest, images })
    }

    /// Writes `manifest.txt` and `id<i>/v<k>_l<l>.pgm` under `root`.
    pub fn write(&self, root: &Path) -> Result<()> {
        for (r, px) in self.manifest.records.iter().zip(&self.images) {
            let path = root.join(&r.path);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| MvpError::io(dir, e))?;
            }
            let size = self.manifest.size;
            write_pgm(&GrayImage::square(size, px.clone())?, &path)?;
        }
        fs::create_dir_all(root).map_err(|e| MvpError::io(root, e))?;
        write_manifest(&self.manifest, &root.join(MANIFEST_FILE))
    }

    /// Reads a manifest and every image it references (paths relative to it).
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = read_manifest(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let mut images = Vec::with_capacity(manifest.records.len());
        for r in &manifest.records {
            let im = read_pgm(&root.join(&r.path))?;
            if im.width != manifest.size || im.height != manifest.size {
                return Err(MvpError::dim(
                    "Dataset::load",
                    format!("{} is {}x{}, manifest says {}", r.path, im.width, im.height, manifest.size),
                ));
            }
            images.push(im.pixels);
        }
        Ok(Self { manifest, images })
    }

    pub fn pixel_count(&self) -> usize {
        self.manifest.size * self.manifest.size
    }

    /// Records whose identity and view pass the filters. View indices are
    /// renumbered to the kept views; identities keep their ids.
    pub fn filter(&self, keep_id: impl Fn(usize) -> bool, keep_view: impl Fn(f64) -> bool) -> Self {
        let kept_views: Vec<usize> = (0..self.manifest.views.len())
            .filter(|&k| keep_view(self.manifest.views[k]))
            .collect();
        let mut manifest = self.manifest.clone();
        manifest.views = kept_views.iter().map(|&k| self.manifest.views[k]).collect();
        manifest.records.clear();
        let mut images = Vec::new();
        for (r, px) in self.manifest.records.iter().zip(&self.images) {
            if !keep_id(r.identity) {
                continue;
            }
            if let Some(k) = kept_views.iter().position(|&v| v == r.view) {
                manifest.records.push(ManifestRecord { view: k, ..r.clone() });
                images.push(px.clone());
            }
        }
        Self { manifest, images }
    }

    pub fn train_split(&self) -> Self {
        let n = self.manifest.train_identities;
        self.filter(|id| id < n, |_| true)
    }

    pub fn test_split(&self) -> Self {
        let n = self.manifest.train_identities;
        self.filter(|id| id >= n, |_| true)
    }

    pub fn with_views(&self, yaws: &[f64]) -> Self {
        self.filter(|_| true, |v| yaws.contains(&v))
    }

    /// Label of view `k` under `head`.
    pub fn view_label(&self, k: usize, head: ViewHeadKind) -> Result<ViewLabel> {
        match head {
            ViewHeadKind::Discrete(m) if m == self.manifest.views.len() => Ok(ViewLabel::Class(k)),
            ViewHeadKind::Discrete(m) => Err(MvpError::contract(format!(
                "discrete head has {m} classes but the dataset has {} views",
                self.manifest.views.len()
            ))),
            ViewHeadKind::Continuous => Ok(ViewLabel::from_degrees(self.manifest.views[k])),
        }
    }

    fn index(&self, identity: usize, view: usize, illumination: usize) -> Option<usize> {
        self.manifest
            .records
            .iter()
            .position(|r| r.identity == identity && r.view == view && r.illumination == illumination)
    }
}

/// Same-identity, same-illumination pairs in model space.
pub fn build_pairs(data: &Dataset, pairing: Pairing, head: ViewHeadKind) -> Result<Vec<TrainingPair>> {
    let m = &data.manifest;
    let outputs: Vec<usize> = match pairing {
        Pairing::AllViews => (0..m.views.len()).collect(),
        Pairing::FrontalOnly => {
            let k = m
                .views
                .iter()
                .position(|&v| v == 0.0)
                .ok_or_else(|| MvpError::contract("frontal pairing needs a 0° view"))?;
            vec![k]
        }
    };
    let labels: Vec<ViewLabel> = (0..m.views.len())
        .map(|k| data.view_label(k, head))
        .collect::<Result<_>>()?;
    let model: Vec<Vec<f64>> = data.images.iter().map(|px| to_model_space(px)).collect();
    let mut pairs = Vec::new();
    for (i, r) in m.records.iter().enumerate() {
        for &k in &outputs {
            let Some(j) = data.index(r.identity, k, r.illumination) else {
                continue;
            };
            pairs.push(TrainingPair {
                x: model[i].clone(),
                target: model[j].clone(),
                label: labels[k],
                identity: r.identity,
                illumination: r.illumination,
                input_view: r.view,
                output_view: k,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::squared_distance;

    fn small(identities: usize, views: &[f64], illums: usize) -> Dataset {
        Dataset::generate(&DatasetConfig {
            seed: 5,
            identities,
            train_identities: identities,
            views: views.to_vec(),
            illuminations: illums,
            size: 12,
            blob_std: 0.8,
        })
        .unwrap()
    }

    #[test]
    fn pair_counts() {
        let d = small(2, &[-15.0, 0.0, 15.0], 1);
        let all = build_pairs(&d, Pairing::AllViews, ViewHeadKind::Discrete(3)).unwrap();
        assert_eq!(all.len(), 18);
        let frontal = build_pairs(&d, Pairing::FrontalOnly, ViewHeadKind::Continuous).unwrap();
        assert_eq!(frontal.len(), 6);
        assert!(frontal.iter().all(|p| p.label == ViewLabel::Yaw(0.0)));
        let d2 = small(2, &[-15.0, 0.0, 15.0], 2);
        assert_eq!(build_pairs(&d2, Pairing::AllViews, ViewHeadKind::Continuous).unwrap().len(), 36);
    }

    #[test]
    fn pairs_share_identity_and_label_matches_target() {
        let d = small(3, &[-30.0, 0.0, 30.0], 2);
        let pairs = build_pairs(&d, Pairing::AllViews, ViewHeadKind::Discrete(3)).unwrap();
        for p in &pairs {
            let xi = d.index(p.identity, p.input_view, p.illumination).unwrap();
            let yi = d.index(p.identity, p.output_view, p.illumination).unwrap();
            assert_eq!(p.x, to_model_space(&d.images[xi]));
            assert_eq!(p.target, to_model_space(&d.images[yi]));
            assert_eq!(p.label, ViewLabel::Class(p.output_view));
        }
    }

    #[test]
    fn wrong_class_count_rejected() {
        let d = small(1, &[0.0, 15.0], 1);
        assert!(build_pairs(&d, Pairing::AllViews, ViewHeadKind::Discrete(7)).is_err());
        assert!(build_pairs(&small(1, &[15.0], 1), Pairing::FrontalOnly, ViewHeadKind::Continuous).is_err());
    }

    #[test]
    fn record_count_is_n_m_l() {
        let d = small(4, &[-45.0, 0.0, 45.0], 3);
        assert_eq!(d.manifest.records.len(), 4 * 3 * 3);
        assert_eq!(d.manifest.illuminations, vec![0.7, 1.0, 1.3]);
    }

    #[test]
    fn splits_and_view_subsets() {
        let mut cfg = DatasetConfig { size: 10, blob_std: 0.8, identities: 5, train_identities: 3, ..Default::default() };
        cfg.illuminations = 1;
        let d = Dataset::generate(&cfg).unwrap();
        assert_eq!(d.train_split().manifest.records.len(), 21);
        let t = d.test_split().with_views(&[0.0, 30.0]);
        assert_eq!(t.manifest.views, vec![0.0, 30.0]);
        assert_eq!(t.manifest.records.len(), 4);
        assert!(t.manifest.records.iter().all(|r| r.identity >= 3 && r.view < 2));
        t.manifest.validate().unwrap();
    }

    #[test]
    fn identities_are_more_alike_across_adjacent_views_than_strangers() {
        let d = Dataset::generate(&DatasetConfig {
            identities: 12,
            train_identities: 12,
            illuminations: 1,
            ..Default::default()
        }).unwrap();
        let m = &d.manifest;
        let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
        for (a, ra) in m.records.iter().enumerate() {
            for (b, rb) in m.records.iter().enumerate().skip(a + 1) {
                let dist = squared_distance(&d.images[a], &d.images[b]).sqrt();
                if ra.identity == rb.identity && ra.view.abs_diff(rb.view) == 1 {
                    intra += dist;
                    ni += 1;
                } else if ra.identity != rb.identity && ra.view == rb.view {
                    inter += dist;
                    ne += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / ne as f64);
        assert!(intra < inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn disk_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let d = small(2, &[-15.0, 0.0], 1);
        d.write(dir.path()).unwrap();
        assert!(dir.path().join("id1/v1_l0.pgm").exists());
        let back = Dataset::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back.manifest, d.manifest);
        for (a, b) in back.images.iter().zip(&d.images) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
