//! View estimation error and the PCA + linear regression baseline.

use super::report::EvalReport;
use crate::error::{MvpError, Result};
use crate::model::{estimate_view, to_model_space, Parameters, ViewLabel};
use crate::numerics::{derive_seed, dot, matmul_nt, matmul_tn, sym_eigh, Matrix, Rng};
use crate::synthdata::Dataset;

pub const PCA_COMPONENTS: usize = 32;

/// One estimate: candidate index and its yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPrediction {
    pub index: usize,
    pub degrees: f64,
}

/// Runs [`estimate_view`] on each image with candidates = the listed views.
///
/// Images are `[0, 1]` pixels; image `i` draws from `derive_seed(seed, i)`.
pub fn predict_views(
    params: &Parameters,
    images: &[Vec<f64>],
    candidate_degrees: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ViewPrediction>> {
    let candidates: Vec<ViewLabel> = match params.arch.view_head {
        crate::model::ViewHeadKind::Continuous => {
            candidate_degrees.iter().map(|&d| ViewLabel::from_degrees(d)).collect()
        }
        crate::model::ViewHeadKind::Discrete(m) => {
            if m != candidate_degrees.len() {
                return Err(MvpError::contract(format!(
                    "discrete head has {m} views, {} candidates given",
                    candidate_degrees.len()
                )));
            }
            (0..m).map(ViewLabel::Class).collect()
        }
    };
    images
        .iter()
        .enumerate()
        .map(|(i, px)| {
            let mut rng = Rng::new(derive_seed(&[seed, i as u64]));
            let e = estimate_view(&to_model_space(px), params, samples, &mut rng, &candidates)?;
            Ok(ViewPrediction {
                index: e.index,
                degrees: candidate_degrees[e.index],
            })
        })
        .collect()
}

/// Mean absolute error in degrees per view and on average.
pub fn mae_by_view(views: &[f64], truth_view: &[usize], predicted_degrees: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; views.len()];
    let mut n = vec![0usize; views.len()];
    for (&k, &p) in truth_view.iter().zip(predicted_degrees) {
        sum[k] += (p - views[k]).abs();
        n[k] += 1;
    }
    sum.iter()
        .zip(&n)
        .map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect()
}

/// MVP view-estimation MAE over every image of `test`, candidates = its views.
pub fn view_estimation_error(
    params: &Parameters,
    test: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    let views = &test.manifest.views;
    let preds = predict_views(params, &test.images, views, samples, seed)?;
    let truth: Vec<usize> = test.manifest.records.iter().map(|r| r.view).collect();
    let deg: Vec<f64> = preds.iter().map(|p| p.degrees).collect();
    let mut report = EvalReport::for_views("view-error", views);
    report.push_row("mvp_mae", mae_by_view(views, &truth, &deg))?;
    report.push_meta("seed", seed);
    report.push_meta("samples", samples);
    Ok(report)
}

/// Least-squares yaw regression on the top principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaRegression {
    pub mean: Vec<f64>,
    /// `dim × k`, orthonormal columns.
    pub components: Matrix,
    /// Intercept followed by one weight per component.
    pub weights: Vec<f64>,
}

fn center(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for r in 0..c.rows() {
        for (v, m) in c.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

/// Top-`k` principal directions of the centered rows, via whichever of the
/// covariance or Gram matrix is smaller.
pub fn principal_components(centered: &Matrix, k: usize) -> Result<Matrix> {
    let (n, d) = centered.shape();
    if d <= n {
        let e = sym_eigh(&matmul_tn(centered, centered)?)?;
        let k = k.min(d);
        let cols: Vec<usize> = (0..k).collect();
        return Ok(e.vectors.transpose().select_rows(&cols).transpose());
    }
    let e = sym_eigh(&matmul_nt(centered, centered)?)?;
    let tol = 1e-10 * e.values[0].max(f64::MIN_POSITIVE);
    let k = k.min(e.values.iter().filter(|&&v| v > tol).count());
    let mut comps = Matrix::zeros(d, k);
    for j in 0..k {
        let inv = 1.0 / e.values[j].sqrt();
        for i in 0..n {
            let u = e.vectors[(i, j)] * inv;
            for (c, x) in (0..d).zip(centered.row(i)) {
                comps[(c, j)] += u * x;
            }
        }
    }
    Ok(comps)
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return Err(MvpError::contract("regression normal equations are singular"));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[(i, k)] * y[k]).sum::<f64>()) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[(k, i)] * x[k]).sum::<f64>()) / l[(i, i)];
    }
    Ok(x)
}

impl PcaRegression {
    pub fn fit(features: &Matrix, targets: &[f64], k: usize) -> Result<Self> {
        let n = features.rows();
        if targets.len() != n || n < 2 {
            return Err(MvpError::dim("PcaRegression::fit", "need ≥ 2 rows and one target per row"));
        }
        let mut mean = features.column_sums().into_vec();
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let centered = center(features, &mean);
        let components = principal_components(&centered, k)?;
        let z = crate::numerics::matmul(&centered, &components)?;
        let p = z.cols() + 1;
        // design rows [1, z]; the tiny ridge only guards exact collinearity
        let mut ata = Matrix::zeros(p, p);
        let mut atb = vec![0.0; p];
        for i in 0..n {
            let row: Vec<f64> = std::iter::once(1.0).chain(z.row(i).iter().copied()).collect();
            for a in 0..p {
                atb[a] += row[a] * targets[i];
                for b in 0..p {
                    ata[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 1..p {
            ata[(a, a)] += 1e-9 * n as f64;
        }
        let weights = solve_spd(&ata, &atb)?;
        Ok(Self {
            mean,
            components,
            weights,
        })
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        let z = crate::numerics::matmul(&center(features, &self.mean), &self.components)?;
        Ok((0..z.rows())
            .map(|i| self.weights[0] + dot(&self.weights[1..], z.row(i)))
            .collect())
    }
}

/// PCA (k = 32) + least-squares yaw regression fit on `train`, scored on `test`.
pub fn lr_baseline(train: &Dataset, test: &Dataset) -> Result<EvalReport> {
    let yaw = |d: &Dataset| -> Vec<f64> { d.manifest.records.iter().map(|r| r.yaw).collect() };
    let model = PcaRegression::fit(&Matrix::from_rows(&train.images)?, &yaw(train), PCA_COMPONENTS)?;
    let pred = model.predict(&Matrix::from_rows(&test.images)?)?;
    let views = &test.manifest.views;
    let truth: Vec<usize> = test.manifest.records.iter().map(|r| r.view).collect();
    let mut report = EvalReport::for_views("view-error", views);
    report.push_row("lr_mae", mae_by_view(views, &truth, &pred))?;
    report.push_meta("pca_components", model.components.cols());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_a_linear_target() {
        let mut rng = Rng::new(3);
        let x = rng.gaussian(50, 8, 0.0, 1.0);
        let w = [2.0, -1.0, 0.5, 0.0, 3.0, 1.0, -2.0, 0.25];
        let y: Vec<f64> = (0..50).map(|i| 4.0 + dot(x.row(i), &w)).collect();
        let m = PcaRegression::fit(&x, &y, 32).unwrap();
        let p = m.predict(&x).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let mut rng = Rng::new(5);
        let x = rng.gaussian(6, 10, 0.0, 1.0);
        let mut mean = x.column_sums().into_vec();
        mean.iter_mut().for_each(|v| *v /= 6.0);
        let c = center(&x, &mean);
        // 6 rows < 10 columns takes the Gram route
        let wide = principal_components(&c, 3).unwrap();
        assert_eq!(wide.shape(), (10, 3));
        let g = matmul_tn(&wide, &wide).unwrap();
        assert!(g.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-10);
        let cov = sym_eigh(&matmul_tn(&c, &c).unwrap()).unwrap();
        for j in 0..3 {
            let d: f64 = (0..10).map(|r| wide[(r, j)] * cov.vectors[(r, j)]).sum();
            assert!((d.abs() - 1.0).abs() < 1e-8, "component {j}: {d}");
        }
    }

    #[test]
    fn mae_per_view() {
        let m = mae_by_view(&[-15.0, 0.0, 15.0], &[0, 0, 2], &[-15.0, 0.0, 30.0]);
        assert_eq!(m[0], 7.5);
        assert!(m[1].is_nan());
        assert_eq!(m[2], 15.0);
    }

    #[test]
    fn spd_solver() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let x = solve_spd(&a, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12);
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(solve_spd(&s, &[1.0, 1.0]).is_err());
    }
}
