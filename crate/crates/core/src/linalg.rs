//! Small dense helpers on top of nalgebra: symmetric checks, PSD tests,
//! Cholesky-backed solves and a diagonally pivoted factorization for
//! semidefinite covariances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue slack for PSD checks: `min_eig >= -PSD_RELATIVE_TOL * max_eig`.
pub const PSD_RELATIVE_TOL: f64 = 1e-10;

/// Pivots at or below this (scaled by the largest diagonal entry) count as zero.
pub const ZERO_PIVOT: f64 = 1e-12;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_asymmetry(m) <= tol
}

/// Returns `(A + Aᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(min, max)` of the symmetric part of `m`.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let (min, max) = eigen_range(m);
    min >= -PSD_RELATIVE_TOL * max.abs().max(f64::MIN_POSITIVE)
}

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::dimension(what, "square matrix", shape(m)));
    }
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { what })
}

pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    check_len(what, rhs, m.nrows())?;
    Ok(cholesky(m, what)?.solve(rhs))
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

/// Factor `F` with `F Fᵀ = m` for a symmetric positive semidefinite `m`.
///
/// Uses Cholesky with diagonal pivoting. Once the largest remaining pivot falls
/// below [`ZERO_PIVOT`] (relative) the trailing Schur complement must vanish,
/// otherwise the matrix is reported as indefinite.
pub fn psd_factor(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::dimension(what, "square matrix", shape(m)));
    }
    let mut a = symmetrize(m);
    let scale = a.diagonal().iter().fold(0.0_f64, |acc, d| acc.max(d.abs())).max(1.0);
    let tol = ZERO_PIVOT * scale;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);

    for k in 0..n {
        let (piv, dmax) =
            (k..n)
                .map(|j| (j, a[(j, j)]))
                .fold((k, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        if dmax <= tol {
            // Remaining block must be numerically zero.
            for i in k..n {
                for j in k..n {
                    let v = a[(i, j)];
                    if (i == j && v < -tol) || (i != j && v.abs() > 1e3 * tol) {
                        return Err(Error::Indefinite { what, pivot: v });
                    }
                }
            }
            break;
        }
        if piv != k {
            a.swap_rows(k, piv);
            a.swap_columns(k, piv);
            l.swap_rows(k, piv);
            perm.swap(k, piv);
        }
        let d = a[(k, k)].sqrt();
        l[(k, k)] = d;
        for i in (k + 1)..n {
            l[(i, k)] = a[(i, k)] / d;
        }
        for i in (k + 1)..n {
            for j in (k + 1)..=i {
                let v = a[(i, j)] - l[(i, k)] * l[(j, k)];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }

    // Undo the permutation: row perm[i] of the original matrix is row i of L.
    let mut f = DMatrix::<f64>::zeros(n, n);
    for (i, &p) in perm.iter().enumerate() {
        f.set_row(p, &l.row(i));
    }
    Ok(f)
}

pub fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

pub fn check_len(field: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dimension(
            field,
            format!("length {n}"),
            format!("length {}", v.len()),
        ));
    }
    Ok(())
}

pub fn check_shape(field: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dimension(field, format!("{rows}x{cols}"), shape(m)));
    }
    Ok(())
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
