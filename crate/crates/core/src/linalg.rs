//! Small dense linear-algebra helpers: symmetric-matrix flattening, PSD
//! projection and PSD square roots.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Eigenvalue slack under which a symmetric matrix still counts as PSD.
pub const PSD_TOL: f64 = 1e-12;

/// Number of real coordinates of a flattened symmetric `d × d` matrix.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Recovers `d` from `n = d(d+1)/2`, if `n` is triangular.
pub fn sym_order(n: usize) -> Option<usize> {
    let mut d = 0;
    while sym_dim(d) < n {
        d += 1;
    }
    (sym_dim(d) == n).then_some(d)
}

/// Flattens a symmetric matrix row-major over the upper triangle with
/// off-diagonal entries scaled by √2, so the Euclidean inner product of two
/// flattenings equals `tr(xy)`.
pub fn flatten_sym<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> Vec<T> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(sym_dim(d));
    for i in 0..d {
        out.push(m[(i, i)]);
        for j in i + 1..d {
            out.push((m[(i, j)] + m[(j, i)]).scale(0.5 * SQRT_2));
        }
    }
    out
}

/// Inverse of [`flatten_sym`].
pub fn unflatten_sym<T: ComplexField<RealField = f64> + Copy>(v: &[T], d: usize) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = v[k];
        k += 1;
        for j in i + 1..d {
            let x = v[k].scale(1.0 / SQRT_2);
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// The symmetric matrix `E_j` whose flattening is the `j`-th unit vector.
pub fn sym_basis(d: usize, j: usize) -> DMatrix<f64> {
    let mut e = vec![0.0; sym_dim(d)];
    e[j] = 1.0;
    unflatten_sym(&e, d)
}

/// Bilinear (non-conjugating) pairing `Σ u_i x_i`.
pub fn cdot(u: &[Complex64], x: &[f64]) -> Complex64 {
    u.iter().zip(x).map(|(u, x)| u * x).sum()
}

/// Bilinear pairing of two complex vectors.
pub fn cdot_c(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(u, v)| u * v).sum()
}

/// Quadratic form `uᵀ M u` for complex `u` and real `M` (no conjugation).
pub fn cquad(u: &[Complex64], m: &DMatrix<f64>) -> Complex64 {
    let n = u.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += m[(i, j)] * u[j];
        }
        acc += u[i] * row;
    }
    acc
}

/// Euclidean norm of a complex vector.
pub fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of `m` (`+∞` for empty input).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at 0. Inputs that are already PSD to [`PSD_TOL`] come back
/// unchanged.
pub fn psd_project(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    if n == 0 {
        return c.clone();
    }
    if n == 1 {
        let mut out = c.clone();
        if out[(0, 0)] < -PSD_TOL {
            out[(0, 0)] = 0.0;
        }
        return out;
    }
    let s = (c + c.transpose()) * 0.5;
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= -PSD_TOL && asymmetry(c) == 0.0 {
        return c.clone();
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    // restore exact symmetry lost to round-off
    (&out + out.transpose()) * 0.5
}

/// Factor `L` with `L Lᵀ = psd_project(c)`: lower-triangular Cholesky factor
/// when the projection is positive definite, symmetric eigen square root
/// otherwise.
pub fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = 1.0 + c.norm();
    let asym = asymmetry(c);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let n = c.nrows();
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, c[(0, 0)].max(0.0).sqrt()));
    }
    let p = psd_project(c);
    if let Some(ch) = p.clone().cholesky() {
        let l = ch.l();
        if l.iter().all(|v| v.is_finite()) {
            return Ok(l);
        }
    }
    let sym = (&p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots: DVector<f64> = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Converts nested rows into a dense matrix, checking every row length.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    for r in rows {
        if r.len() != nc {
            return Err(Error::DimensionMismatch {
                what,
                expected: nc,
                got: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Inverse of [`matrix_from_rows`].
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
