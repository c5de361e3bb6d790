//! Regularized Fisher discriminant.

use std::collections::BTreeMap;

use crate::error::{MvpError, Result};
use crate::numerics::{matmul, matmul_nt, matmul_tn, sym_eigh, Matrix};

/// Relative size of the default ridge: `λ = 1e-3 · trace(S_w) / dim`.
pub const DEFAULT_LDA_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Training mean, subtracted before projecting.
    pub mean: Vec<f64>,
    /// `dim × k`, `k ≤ classes − 1`.
    pub projection: Matrix,
    /// Generalized eigenvalues of the kept directions (descending).
    pub eigenvalues: Vec<f64>,
    pub classes: Vec<usize>,
    /// Projected class means, aligned with `classes`.
    pub class_means: Matrix,
    pub lambda: f64,
}

/// Class-centered rows, between-class rows `sqrt(n_c/n)(μ_c − μ)` and the global mean.
fn scatter_parts(features: &Matrix, labels: &[usize]) -> Result<(Matrix, Matrix, Vec<f64>)> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(MvpError::dim("scatter", format!("{} labels for {n} rows", labels.len())));
    }
    let groups = group(labels);
    let mean = column_mean(features);
    let mut centered = features.clone();
    let mut between = Matrix::zeros(groups.len(), d);
    for (g, rows) in groups.values().enumerate() {
        let mu = column_mean(&features.select_rows(rows));
        let w = (rows.len() as f64 / n as f64).sqrt();
        for ((b, m), g0) in between.row_mut(g).iter_mut().zip(&mu).zip(&mean) {
            *b = w * (m - g0);
        }
        for &r in rows {
            for (c, m) in centered.row_mut(r).iter_mut().zip(&mu) {
                *c -= m;
            }
        }
    }
    Ok((centered, between, mean))
}

/// Within- and between-class scatter, both normalized by the sample count.
pub fn scatter_matrices(features: &Matrix, labels: &[usize]) -> Result<(Matrix, Matrix)> {
    let (centered, between, _) = scatter_parts(features, labels)?;
    let mut sw = matmul_tn(&centered, &centered)?;
    sw.scale(1.0 / features.rows() as f64);
    Ok((sw, matmul_tn(&between, &between)?))
}

fn group(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

fn column_mean(m: &Matrix) -> Vec<f64> {
    let mut s = m.column_sums().into_vec();
    s.iter_mut().for_each(|v| *v /= m.rows() as f64);
    s
}

/// Fits the projection maximizing between- over within-class scatter.
///
/// `lambda = None` picks `1e-3 · trace(S_w) / dim`.
pub fn lda_fit(features: &Matrix, labels: &[usize], lambda: Option<f64>) -> Result<LdaModel> {
    let (n, d) = features.shape();
    let groups = group(labels);
    if labels.len() != n {
        return Err(MvpError::dim("lda_fit", format!("{} labels for {n} rows", labels.len())));
    }
    if groups.len() < 2 {
        return Err(MvpError::contract("LDA needs at least two classes"));
    }
    if let Some((c, rows)) = groups.iter().find(|(_, r)| r.len() < 2) {
        return Err(MvpError::contract(format!("class {c} has {} sample(s); LDA needs 2", rows.len())));
    }
    let (centered, between, mean) = scatter_parts(features, labels)?;
    let mut sw = matmul_tn(&centered, &centered)?;
    sw.scale(1.0 / n as f64);
    let trace: f64 = (0..d).map(|i| sw[(i, i)]).sum();
    let lambda = lambda.unwrap_or(DEFAULT_LDA_RIDGE * trace / d as f64);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(MvpError::contract(format!("LDA ridge {lambda} must be finite and >= 0")));
    }
    for i in 0..d {
        sw[(i, i)] += lambda;
    }

    // W = V Λ^{-1/2} whitens S_w + λI
    let e = sym_eigh(&sw)?;
    let top = e.values[0].max(0.0);
    if e.values[d - 1] <= 1e-12 * top.max(f64::MIN_POSITIVE) {
        return Err(MvpError::contract(format!(
            "within-class scatter is singular with λ = {lambda:e}; use a larger λ"
        )));
    }
    let mut white = e.vectors;
    for r in 0..d {
        for (c, v) in white.row_mut(r).iter_mut().enumerate() {
            *v /= e.values[c].sqrt();
        }
    }

    let k = (groups.len() - 1).min(d);
    // Between-class scatter is BᵀB; whitened it is (BW)ᵀ(BW), whose leading
    // eigenvectors come from the small C×C problem when dim > C.
    let bw = matmul(&between, &white)?;
    let (eigenvalues, dirs) = if d <= groups.len() {
        let m = matmul_tn(&bw, &bw)?;
        let e = sym_eigh(&m)?;
        let cols: Vec<usize> = (0..k).collect();
        (e.values[..k].to_vec(), e.vectors.transpose().select_rows(&cols).transpose())
    } else {
        let g = matmul_nt(&bw, &bw)?;
        let e = sym_eigh(&g)?;
        let scale = e.values[0].max(0.0);
        let mut dirs = Matrix::zeros(d, k);
        for j in 0..k {
            let val = e.values[j];
            // directions with no between-class spread carry nothing; leave them zero
            if val <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                continue;
            }
            let inv = 1.0 / val.sqrt();
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..groups.len() {
                    acc += bw[(c, r)] * e.vectors[(c, j)];
                }
                dirs[(r, j)] = acc * inv;
            }
        }
        (e.values[..k].iter().map(|v| v.max(0.0)).collect(), dirs)
    };
    let projection = matmul(&white, &dirs)?;
    let classes: Vec<usize> = groups.keys().copied().collect();
    let mut model = LdaModel {
        mean,
        projection,
        eigenvalues,
        classes,
        class_means: Matrix::zeros(0, 0),
        lambda,
    };
    let means: Vec<Vec<f64>> = groups
        .values()
        .map(|rows| column_mean(&features.select_rows(rows)))
        .collect();
    model.class_means = lda_project(&model, &Matrix::from_rows(&means)?)?;
    Ok(model)
}

pub fn lda_project(model: &LdaModel, features: &Matrix) -> Result<Matrix> {
    if features.cols() != model.mean.len() {
        return Err(MvpError::dim(
            "lda_project",
            format!("{} features for a {}-dim model", features.cols(), model.mean.len()),
        ));
    }
    let mut centered = features.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    matmul(&centered, &model.projection)
}

/// `trace(PᵀS_bP) / trace(PᵀS_wP)` for a `dim × k` projection.
pub fn fisher_ratio(features: &Matrix, labels: &[usize], projection: &Matrix) -> Result<f64> {
    let (sw, sb) = scatter_matrices(features, labels)?;
    let tr = |s: &Matrix| -> Result<f64> {
        let m = matmul_tn(projection, &matmul(s, projection)?)?;
        Ok((0..m.rows()).map(|i| m[(i, i)]).sum())
    };
    Ok(tr(&sb)? / tr(&sw)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn two_points_per_side_on_a_line() {
        // classes at x = ±1 with uncorrelated within-class spread
        let offsets = [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.3), (0.0, -0.3)];
        let rows: Vec<Vec<f64>> = [-1.0, 1.0]
            .iter()
            .flat_map(|c| offsets.iter().map(move |(dx, dy)| vec![c + dx, *dy]))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = lda_fit(&x, &[0, 0, 0, 0, 1, 1, 1, 1], Some(1e-9)).unwrap();
        assert_eq!(m.projection.cols(), 1);
        let (a, b) = (m.projection[(0, 0)], m.projection[(1, 0)]);
        assert!(b.abs() < 1e-6 * a.abs(), "direction ({a}, {b})");
        let p = lda_project(&m, &x).unwrap();
        assert!(p[(0, 0)].signum() != p[(7, 0)].signum());
    }

    #[test]
    fn identical_class_means_have_no_discriminant() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.5],
            vec![-1.0, 0.0, -0.5],
            vec![0.0, 1.0, 0.2],
            vec![0.0, -1.0, -0.2],
            vec![0.3, 0.3, 1.0],
            vec![-0.3, -0.3, -1.0],
        ])
        .unwrap();
        let m = lda_fit(&x, &[0, 0, 1, 1, 2, 2], None).unwrap();
        assert!(m.eigenvalues.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn fisher_ratio_beats_random_projections() {
        let mut rng = Rng::new(21);
        let centers = [[0.0, 0.0, 0.0, 0.0, 0.0], [2.0, 1.0, 0.0, -1.0, 0.5], [-1.0, 2.0, 1.0, 0.0, -1.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, mu) in centers.iter().enumerate() {
            for _ in 0..40 {
                rows.push(mu.iter().enumerate().map(|(i, m)| m + (1.0 + i as f64 * 0.5) * rng.next_gaussian()).collect());
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let m = lda_fit(&x, &labels, Some(1e-9)).unwrap();
        // Fisher directions maximize the ratio column by column; compare the top one
        let best = fisher_ratio(&x, &labels, &m.projection.transpose().select_rows(&[0]).transpose()).unwrap();
        for _ in 0..100 {
            let p = rng.gaussian(5, 1, 0.0, 1.0);
            assert!(fisher_ratio(&x, &labels, &p).unwrap() <= best + 1e-9);
        }
    }

    #[test]
    fn singular_scatter_without_ridge_is_reported() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 2.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        match lda_fit(&x, &[0, 0, 1, 1], Some(0.0)) {
            Err(MvpError::Contract(msg)) => assert!(msg.contains("larger")),
            other => panic!("{other:?}"),
        }
        assert!(lda_fit(&x, &[0, 0, 1, 1], None).is_ok());
    }

    #[test]
    fn preconditions() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(lda_fit(&x, &[0, 0, 0], None).is_err());
        assert!(lda_fit(&x, &[0, 0, 1], None).is_err());
    }

    #[test]
    fn high_dimension_uses_class_space() {
        let mut rng = Rng::new(2);
        let x = rng.gaussian(12, 20, 0.0, 1.0);
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let m = lda_fit(&x, &labels, None).unwrap();
        assert_eq!(m.projection.shape(), (20, 2));
        // whitened directions are orthonormal under S_w + λI
        let (mut sw, _) = scatter_matrices(&x, &labels).unwrap();
        for i in 0..20 {
            sw[(i, i)] += m.lambda;
        }
        let g = matmul_tn(&m.projection, &matmul(&sw, &m.projection).unwrap()).unwrap();
        assert!(g.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-8);
    }
}
