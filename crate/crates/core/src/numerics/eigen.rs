//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by implicit QL iterations.

use super::Matrix;
use crate::error::{MvpError, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_QL_ITERATIONS: usize = 60;

/// Eigen-decomposition `A = V Λ Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: Matrix,
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
///
/// The input is symmetrized before reduction; asymmetry beyond `1e-10`
/// relative to the largest entry is a contract error.
pub fn sym_eigh(a: &Matrix) -> Result<SymEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(MvpError::dim("sym_eigh", format!("{n}x{} not square", a.cols())));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(MvpError::contract(format!(
                    "sym_eigh: input not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: Matrix::zeros(0, 0) });
    }
    let mut v = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = s;
            v[(j, i)] = s;
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for k in 0..n {
        let src = v.row(k);
        let dst = vectors.row_mut(k);
        for (c, &o) in order.iter().enumerate() {
            dst[c] = src[o];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Householder reduction. On return `v` holds the orthogonal transform,
/// `d` the diagonal and `e[1..]` the subdiagonal.
fn tridiagonalize(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Diagonalizes the tridiagonal form, rotating the columns of `v`.
fn ql_implicit(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(MvpError::contract("sym_eigh: QL iteration did not converge"));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for x in d[(l + 2)..].iter_mut() {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = v.row_mut(k);
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matmul, Rng};

    fn reconstruct(e: &SymEigen) -> Matrix {
        let n = e.values.len();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = e.values[i];
        }
        matmul(&matmul(&e.vectors, &l).unwrap(), &e.vectors.transpose()).unwrap()
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let e = sym_eigh(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_characteristic_roots() {
        // λ² − 4λ + 3 = 0 → {3, 1}
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eigh(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_is_orthogonal_and_reconstructs() {
        let mut rng = Rng::new(6);
        let g = rng.gaussian(6, 6, 0.0, 1.0);
        let a = g.add(&g.transpose()).unwrap();
        let e = sym_eigh(&a).unwrap();
        let vtv = matmul(&e.vectors.transpose(), &e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-8);
        assert!(reconstruct(&e).sub(&a).unwrap().max_abs() < 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn larger_spectrum_with_repeated_values() {
        // Q diag(λ) Qᵀ with known λ, including a repeated pair and a zero
        let n = 40;
        let mut rng = Rng::new(11);
        let g = rng.gaussian(n, n, 0.0, 1.0);
        let q = sym_eigh(&g.add(&g.transpose()).unwrap()).unwrap().vectors;
        let mut lam: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        lam[5] = lam[4];
        lam[n - 1] = 0.0;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = lam[i];
        }
        let a = matmul(&matmul(&q, &l).unwrap(), &q.transpose()).unwrap();
        let a = a.add(&a.transpose()).unwrap().map(|x| 0.5 * x);
        let e = sym_eigh(&a).unwrap();
        for (got, want) in e.values.iter().zip(&lam) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(reconstruct(&e).sub(&a).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn one_by_one_and_empty() {
        let e = sym_eigh(&Matrix::from_rows(&[vec![-2.5]]).unwrap()).unwrap();
        assert_eq!(e.values, vec![-2.5]);
        assert_eq!(e.vectors[(0, 0)].abs(), 1.0);
        assert!(sym_eigh(&Matrix::zeros(0, 0)).unwrap().values.is_empty());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigh(&a), Err(MvpError::Contract(_))));
    }
}
