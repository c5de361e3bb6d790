//! Generating views that were never seen in training.

use super::recognition::{gallery_probe_split, layer_features, recognition_across_views};
use super::report::EvalReport;
use crate::error::{MvpError, Result};
use crate::model::{
    reconstruct_spectrum, to_model_space, to_pixels, Architecture, Parameters, ViewHeadKind,
    ViewLabel,
};
use crate::numerics::{derive_seed, squared_distance, Rng};
use crate::synthdata::{build_pairs, Dataset, DatasetConfig, Pairing};
use crate::training::{TrainConfig, Trainer};

pub const TRAINED_VIEWS: [f64; 3] = [0.0, 30.0, 60.0];
pub const HELD_OUT_VIEWS: [f64; 2] = [15.0, 45.0];
pub const ALL_VIEWS: [f64; 5] = [0.0, 15.0, 30.0, 45.0, 60.0];

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationConfig {
    /// Grid for the generated data; its view list is replaced by 0..60 in 15° steps.
    pub data: DatasetConfig,
    pub arch: Architecture,
    pub train: TrainConfig,
    /// Samples per reconstruction.
    pub samples: usize,
    pub seed: u64,
}

/// Mean squared pixel error.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b) / a.len() as f64
}

fn lookup(data: &Dataset, identity: usize, yaw: f64, illumination: usize) -> Option<&[f64]> {
    let k = data.manifest.views.iter().position(|&v| v == yaw)?;
    data.manifest
        .records
        .iter()
        .position(|r| r.identity == identity && r.view == k && r.illumination == illumination)
        .map(|i| data.images[i].as_slice())
}

/// Scores a trained continuous-head model on `data`, which must hold all of
/// 0, 15, 30, 45 and 60 degrees.
///
/// Rows (columns 15°, 45°): MSE of the model's reconstruction from the 0° image,
/// of the mean training image, of the same identity's render at the trained
/// view below and above, and the identity retrieval accuracy of 15°/45°
/// inputs against a 0° gallery.
pub fn interpolation_report(params: &Parameters, data: &Dataset, samples: usize, seed: u64) -> Result<EvalReport> {
    if params.arch.view_head != ViewHeadKind::Continuous {
        return Err(MvpError::contract("interpolation needs the continuous view head"));
    }
    if ALL_VIEWS.iter().any(|v| !data.manifest.views.contains(v)) {
        return Err(MvpError::contract("interpolation data must contain 0, 15, 30, 45 and 60 degrees"));
    }
    let train = data.train_split().with_views(&TRAINED_VIEWS);
    let test = data.test_split();
    let dim = data.pixel_count();
    let mut mean_image = vec![0.0; dim];
    for px in &train.images {
        for (m, p) in mean_image.iter_mut().zip(px) {
            *m += p / train.images.len() as f64;
        }
    }

    let labels: Vec<ViewLabel> = HELD_OUT_VIEWS.iter().map(|&d| ViewLabel::from_degrees(d)).collect();
    let spectrum_labels: Vec<ViewLabel> = TRAINED_VIEWS.iter().map(|&d| ViewLabel::from_degrees(d)).collect();
    let mut sums = [[0.0; 2]; 4];
    let mut spectrum_err = 0.0;
    let mut count = 0usize;
    let mut spectrum_count = 0usize;
    let frontal = test.manifest.views.iter().position(|&v| v == 0.0).unwrap();
    for (i, r) in test.manifest.records.iter().enumerate() {
        let mut rng = Rng::new(derive_seed(&[seed, i as u64]));
        let input = &test.images[i];
        if r.view == frontal {
            let spec = reconstruct_spectrum(&to_model_space(input), &labels, samples, params, &mut rng)?;
            for (c, &yaw) in HELD_OUT_VIEWS.iter().enumerate() {
                let truth = lookup(&test, r.identity, yaw, r.illumination)
                    .ok_or_else(|| MvpError::contract("missing held-out render"))?;
                let below = lookup(&test, r.identity, yaw - 15.0, r.illumination).unwrap();
                let above = lookup(&test, r.identity, yaw + 15.0, r.illumination).unwrap();
                sums[0][c] += mse(&to_pixels(&spec.images[c]), truth);
                sums[1][c] += mse(&mean_image, truth);
                sums[2][c] += mse(below, truth);
                sums[3][c] += mse(above, truth);
            }
            count += 1;
        } else if HELD_OUT_VIEWS.contains(&test.manifest.views[r.view]) {
            let spec = reconstruct_spectrum(&to_model_space(input), &spectrum_labels, samples, params, &mut rng)?;
            for (img, &yaw) in spec.images.iter().zip(&TRAINED_VIEWS) {
                let truth = lookup(&test, r.identity, yaw, r.illumination).unwrap();
                spectrum_err += mse(&to_pixels(img), truth);
                spectrum_count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MvpError::contract("no frontal test images to interpolate from"));
    }
    let mut report = EvalReport::for_views("interpolation", &HELD_OUT_VIEWS);
    for (name, s) in ["mvp_mse", "mean_image_mse", "below_view_mse", "above_view_mse"].iter().zip(sums) {
        report.push_row(*name, s.iter().map(|v| v / count as f64).collect())?;
    }

    // retrieval: h^id features of 15°/45° inputs against a 0° gallery
    let layer = params.arch.identity_depth() - 1;
    let train_feats = layer_features(params, &train, layer)?;
    let probe_data = test.with_views(&[0.0, 15.0, 45.0]);
    let feats = layer_features(params, &probe_data, layer)?;
    let illums = probe_data.manifest.illuminations.len();
    let (gallery, probes) = gallery_probe_split(&feats, 0, (illums - 1) / 2);
    let held: Vec<usize> = (0..probes.len()).filter(|&i| probes.view[i] != 0).collect();
    let rec = recognition_across_views(&train_feats, &gallery, &probes.select(&held), &probe_data.manifest.views)?;
    report.push_row("retrieval_accuracy", rec.rows[0].values[1..].to_vec())?;
    if spectrum_count > 0 {
        report.push_scalar("held_out_input_spectrum_mse", spectrum_err / spectrum_count as f64);
    }
    report.push_meta("seed", seed);
    report.push_meta("samples", samples);
    Ok(report)
}

/// Trains on the 0°, 30° and 60° views of the training identities and
/// evaluates on held-out identities at 15° and 45°.
pub fn interpolation_experiment(cfg: &InterpolationConfig) -> Result<(EvalReport, Parameters)> {
    if cfg.arch.view_head != ViewHeadKind::Continuous {
        return Err(MvpError::contract("interpolation needs the continuous view head"));
    }
    let data = Dataset::generate(&DatasetConfig {
        views: ALL_VIEWS.to_vec(),
        ..cfg.data.clone()
    })?;
    let train = data.train_split().with_views(&TRAINED_VIEWS);
    let pairs = build_pairs(&train, Pairing::AllViews, ViewHeadKind::Continuous)?;
    let mut trainer = Trainer::new(Parameters::init(&cfg.arch, cfg.seed)?, cfg.train.clone())?;
    trainer.run(&pairs, None, |_, _| Ok(()))?;
    let report = interpolation_report(&trainer.params, &data, cfg.samples, cfg.seed)?;
    Ok((report, trainer.params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_has_zero_error() {
        let a = vec![0.2, 0.4, 0.9];
        assert_eq!(mse(&a, &a), 0.0);
        assert!((mse(&a, &[0.2, 0.5, 0.9]) - 0.01 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn discrete_head_rejected() {
        let cfg = InterpolationConfig {
            data: DatasetConfig { identities: 4, train_identities: 2, illuminations: 1, size: 8, blob_std: 0.5, ..Default::default() },
            arch: "64-8-8(2)-8(2)-64[5]".parse().unwrap(),
            train: TrainConfig { epochs: 1, ..Default::default() },
            samples: 3,
            seed: 1,
        };
        assert!(interpolation_experiment(&cfg).is_err());
    }

    #[test]
    fn tiny_run_reports_every_row() {
        let cfg = InterpolationConfig {
            data: DatasetConfig { identities: 6, train_identities: 3, illuminations: 1, size: 8, blob_std: 0.5, ..Default::default() },
            arch: "64-8-8(2)-8(2)-64[c]".parse().unwrap(),
            train: TrainConfig { epochs: 2, samples: 3, ..Default::default() },
            samples: 3,
            seed: 1,
        };
        let (r, _) = interpolation_experiment(&cfg).unwrap();
        assert_eq!(r.columns, vec!["15", "45"]);
        for row in ["mvp_mse", "mean_image_mse", "below_view_mse", "above_view_mse", "retrieval_accuracy"] {
            assert!(r.row(row).is_some(), "{row}");
        }
        let acc = r.row("retrieval_accuracy").unwrap();
        assert!(acc.values.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}
