//! Cross-view identity recognition with a frontal gallery.

use super::lda::{lda_fit, lda_project};
use super::report::EvalReport;
use crate::error::{MvpError, Result};
use crate::model::{
    extract_identity, forward_given_sample, reconstruct_spectrum, to_model_space, to_pixels,
    Parameters, ViewSample,
};
use crate::numerics::{derive_seed, squared_distance, Matrix, Rng};
use crate::synthdata::Dataset;
use crate::model::ViewHeadKind;

/// Feature rows with the bookkeeping needed to score them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Matrix,
    pub identity: Vec<usize>,
    /// View index into the dataset's view list.
    pub view: Vec<usize>,
    pub illumination: Vec<usize>,
}

impl FeatureSet {
    pub fn new(features: Matrix, data: &Dataset) -> Result<Self> {
        let recs = &data.manifest.records;
        if features.rows() != recs.len() {
            return Err(MvpError::dim(
                "FeatureSet::new",
                format!("{} rows for {} records", features.rows(), recs.len()),
            ));
        }
        Ok(Self {
            features,
            identity: recs.iter().map(|r| r.identity).collect(),
            view: recs.iter().map(|r| r.view).collect(),
            illumination: recs.iter().map(|r| r.illumination).collect(),
        })
    }

    /// Raw pixels as features.
    pub fn pixels(data: &Dataset) -> Result<Self> {
        let features = Matrix::from_rows(&data.images)?;
        Self::new(features, data)
    }

    pub fn len(&self) -> usize {
        self.identity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            identity: idx.iter().map(|&i| self.identity[i]).collect(),
            view: idx.iter().map(|&i| self.view[i]).collect(),
            illumination: idx.iter().map(|&i| self.illumination[i]).collect(),
        }
    }
}

/// Codes at the prior mean; makes the code-dependent layers deterministic.
pub fn mean_view_sample(params: &Parameters) -> ViewSample {
    ViewSample {
        codes: params
            .arch
            .hybrid_layers()
            .map(|(_, spec)| vec![0.5; spec.random])
            .collect(),
    }
}

/// Activations of hidden layer `layer` (0-based) for every image in `data`.
///
/// Identity layers need no codes; deeper layers are evaluated with all view
/// codes at their prior mean 0.5.
pub fn layer_features(params: &Parameters, data: &Dataset, layer: usize) -> Result<FeatureSet> {
    let arch = &params.arch;
    if layer >= arch.layers.len() {
        return Err(MvpError::contract(format!(
            "layer {layer} out of range for {} hidden layers",
            arch.layers.len()
        )));
    }
    let sample = mean_view_sample(params);
    let width = arch.layers[layer].width;
    let mut features = Matrix::zeros(data.images.len(), width);
    for (i, px) in data.images.iter().enumerate() {
        let id = extract_identity(&to_model_space(px), params)?;
        let row = if layer < arch.identity_depth() {
            id.layers[layer].row(0).to_vec()
        } else {
            let (_, _, trace) = forward_given_sample(&id, &sample, params)?;
            trace.layer_activation(layer, 0).to_vec()
        };
        features.row_mut(i).copy_from_slice(&row);
    }
    FeatureSet::new(features, data)
}

/// One image per identity at `frontal` under `gallery_illumination`; the rest are probes.
pub fn gallery_probe_split(
    set: &FeatureSet,
    frontal: usize,
    gallery_illumination: usize,
) -> (FeatureSet, FeatureSet) {
    let (g, p): (Vec<usize>, Vec<usize>) = (0..set.len())
        .partition(|&i| set.view[i] == frontal && set.illumination[i] == gallery_illumination);
    (set.select(&g), set.select(&p))
}

/// Index of the 0° view.
pub fn frontal_index(views: &[f64]) -> Result<usize> {
    views
        .iter()
        .position(|&v| v == 0.0)
        .ok_or_else(|| MvpError::contract("recognition needs a 0° view for the gallery"))
}

/// Fits LDA on `train` (labels = identity), then labels each probe with its
/// nearest gallery entry in LDA space. Columns follow `views`; a view with no
/// probes reports NaN.
pub fn recognition_across_views(
    train: &FeatureSet,
    gallery: &FeatureSet,
    probes: &FeatureSet,
    views: &[f64],
) -> Result<EvalReport> {
    let frontal = frontal_index(views)?;
    let mut seen = std::collections::BTreeSet::new();
    for (&id, &v) in gallery.identity.iter().zip(&gallery.view) {
        if v != frontal {
            return Err(MvpError::contract(format!("gallery entry for identity {id} is not frontal")));
        }
        if !seen.insert(id) {
            return Err(MvpError::contract(format!("identity {id} appears twice in the gallery")));
        }
    }
    if let Some(id) = probes.identity.iter().find(|id| !seen.contains(id)) {
        return Err(MvpError::contract(format!("no frontal gallery image for identity {id}")));
    }
    let model = lda_fit(&train.features, &train.identity, None)?;
    let g = lda_project(&model, &gallery.features)?;
    let p = lda_project(&model, &probes.features)?;

    let mut correct = vec![0usize; views.len()];
    let mut total = vec![0usize; views.len()];
    for i in 0..probes.len() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..gallery.len() {
            let d = squared_distance(p.row(i), g.row(j));
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        let v = probes.view[i];
        total[v] += 1;
        if gallery.identity[best] == probes.identity[i] {
            correct[v] += 1;
        }
    }
    let acc: Vec<f64> = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| if t == 0 { f64::NAN } else { c as f64 / t as f64 })
        .collect();
    let mut report = EvalReport::for_views("recognition", views);
    report.push_row("accuracy", acc)?;
    report.push_scalar("chance", 1.0 / gallery.len() as f64);
    report.push_scalar("probes", probes.len() as f64);
    report.push_meta("lda_dims", model.projection.cols());
    Ok(report)
}

/// Full protocol on a train/test pair of feature sets drawn from one dataset
/// layout: gallery = frontal view under the middle illumination.
pub fn recognition_protocol(train: &FeatureSet, test: &FeatureSet, views: &[f64]) -> Result<EvalReport> {
    let frontal = frontal_index(views)?;
    let illums = test.illumination.iter().max().map_or(1, |m| m + 1);
    let (gallery, probes) = gallery_probe_split(test, frontal, (illums - 1) / 2);
    recognition_across_views(train, &gallery, &probes, views)
}

/// Same-view reconstructions (pixel space) of every image in `data`.
///
/// Each image uses its own derived random stream, so results do not depend on
/// evaluation order.
pub fn same_view_reconstructions(
    params: &Parameters,
    data: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let head: ViewHeadKind = params.arch.view_head;
    let labels: Vec<_> = (0..data.manifest.views.len())
        .map(|k| data.view_label(k, head))
        .collect::<Result<_>>()?;
    data.manifest
        .records
        .iter()
        .zip(&data.images)
        .enumerate()
        .map(|(i, (r, px))| {
            let mut rng = Rng::new(derive_seed(&[seed, i as u64]));
            let spec = reconstruct_spectrum(&to_model_space(px), &[labels[r.view]], samples, params, &mut rng)?;
            Ok(to_pixels(&spec.images[0]))
        })
        .collect()
}

/// Recognition on original images (OI) and on their same-view reconstructions (RI).
pub fn reconstruction_quality_from_images(
    train: &Dataset,
    test: &Dataset,
    train_recon: &[Vec<f64>],
    test_recon: &[Vec<f64>],
) -> Result<EvalReport> {
    let views = &test.manifest.views;
    let oi = recognition_protocol(&FeatureSet::pixels(train)?, &FeatureSet::pixels(test)?, views)?;
    let ri_train = FeatureSet::new(Matrix::from_rows(train_recon)?, train)?;
    let ri_test = FeatureSet::new(Matrix::from_rows(test_recon)?, test)?;
    let ri = recognition_protocol(&ri_train, &ri_test, views)?;
    let mut report = EvalReport::for_views("recon-quality", views);
    report.push_row("OI", oi.rows[0].values.clone())?;
    report.push_row("RI", ri.rows[0].values.clone())?;
    report.push_scalar("gap", oi.rows[0].average - ri.rows[0].average);
    report.push_scalar("chance", oi.scalar("chance").unwrap_or(f64::NAN));
    Ok(report)
}

/// LDA recognition on raw pixels versus on the model's reconstructions.
pub fn reconstruction_quality(
    params: &Parameters,
    train: &Dataset,
    test: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    let tr = same_view_reconstructions(params, train, samples, derive_seed(&[seed, 0]))?;
    let te = same_view_reconstructions(params, test, samples, derive_seed(&[seed, 1]))?;
    let mut report = reconstruction_quality_from_images(train, test, &tr, &te)?;
    report.push_meta("seed", seed);
    report.push_meta("samples", samples);
    Ok(report)
}
