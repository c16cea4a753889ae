//! Dense linear-algebra kernels shared by every other module.
//!
//! Matrices are `nalgebra` dense f64 matrices. All file/CSV interchange uses
//! row-major entry order; converters at the I/O boundary keep the internal
//! storage an implementation detail.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vec64 = DVector<f64>;

/// Singular values below `SVD_RELATIVE_CUTOFF * sigma_max` are treated as zero.
pub const SVD_RELATIVE_CUTOFF: f64 = 1e-12;
/// Default relative cut for pseudo-inverting Gram matrices.
pub const GRAM_PINV_TOL: f64 = 1e-10;

/// Top-k singular triplets of a dense matrix.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Column-orthonormal left factor, `rows x k`.
    pub u: Mat,
    /// Non-increasing, non-negative singular values, length `k`.
    pub singular_values: Vec64,
    /// Column-orthonormal right factor, `cols x k`.
    pub v: Mat,
}

impl SvdResult {
    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Mat {
        let us = scale_columns(&self.u, self.singular_values.as_slice());
        us * self.v.transpose()
    }
}

/// Multiply column `j` of `m` by `scales[j]`.
pub fn scale_columns(m: &Mat, scales: &[f64]) -> Mat {
    let mut out = m.clone();
    for (j, &s) in scales.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// Frobenius inner product `<a, b>`.
pub fn fro_inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// Largest singular value.
pub fn operator_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// Top-`k` singular triplets, with sub-cutoff singular values clamped to zero.
pub fn thin_svd(x: &Mat, k: usize) -> Result<SvdResult> {
    check_finite(x, "svd input")?;
    let p = x.nrows().min(x.ncols());
    if k == 0 || k > p {
        return Err(Error::invalid(format!(
            "svd rank k={k} out of range for a {}x{} matrix",
            x.nrows(),
            x.ncols()
        )));
    }
    // Same tolerance nalgebra's panicking `svd()` entry point uses.
    let svd = x
        .clone()
        .try_svd(true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let u_full = svd.u.as_ref().expect("svd requested u");
    let vt_full = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = SVD_RELATIVE_CUTOFF * sigma_max;
    let mut sigma = Vec64::zeros(k);
    for i in 0..k {
        let s = svd.singular_values[i];
        sigma[i] = if s < cutoff { 0.0 } else { s };
    }
    let u = u_full.columns(0, k).into_owned();
    let v = vt_full.rows(0, k).transpose();
    Ok(SvdResult {
        u,
        singular_values: sigma,
        v,
    })
}

/// All singular values of `x`, non-increasing.
pub fn singular_values(x: &Mat) -> Vec64 {
    x.clone()
        .try_svd(false, false, 5.0 * f64::EPSILON, 0)
        .map(|svd| svd.singular_values)
        .unwrap_or_else(|| x.clone().singular_values())
}

/// Partial Frobenius norm: `sqrt(sum of the r largest squared singular values)`.
///
/// Equals the Frobenius norm of the best rank-`r` approximation. `r` larger
/// than the number of singular values degrades to the plain Frobenius norm.
pub fn partial_frobenius_norm(x: &Mat, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("partial Frobenius norm requires r >= 1"));
    }
    check_finite(x, "partial Frobenius norm input")?;
    let sv = singular_values(x);
    let take = r.min(sv.len());
    Ok(sv.as_slice()[..take]
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt())
}

/// Best rank-`r` approximation in Frobenius norm.
pub fn best_rank_r(x: &Mat, r: usize) -> Result<Mat> {
    if r == 0 {
        return Err(Error::invalid("best rank-r approximation requires r >= 1"));
    }
    let p = x.nrows().min(x.ncols());
    if r >= p {
        return Ok(x.clone());
    }
    Ok(thin_svd(x, r)?.reconstruct())
}

/// Pseudo-inverse of the Gram matrix `F^T F`.
///
/// Eigenvalues below `tol * lambda_max` are dropped. Returns the `r x r`
/// pseudo-inverse together with a flag telling whether any mode was cut.
pub fn gram_pinv_checked(f: &Mat, tol: f64) -> (Mat, bool) {
    let r = f.ncols();
    let gram = f.transpose() * f;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if lambda_max <= 0.0 {
        return (Mat::zeros(r, r), true);
    }
    let cut = tol * lambda_max;
    let mut deficient = false;
    let mut inv_diag = Vec64::zeros(r);
    for i in 0..r {
        let l = eig.eigenvalues[i];
        if l > cut {
            inv_diag[i] = 1.0 / l;
        } else {
            inv_diag[i] = 0.0;
            deficient = true;
        }
    }
    let scaled = scale_columns(&eig.eigenvectors, inv_diag.as_slice());
    (scaled * eig.eigenvectors.transpose(), deficient)
}

/// Pseudo-inverse of `F^T F` with the rank-cut tolerance `tol`.
pub fn gram_pinv(f: &Mat, tol: f64) -> Mat {
    gram_pinv_checked(f, tol).0
}

/// Orthonormal basis of the column span of an `n x r` Rademacher (+-1) draw.
///
/// QR with the sign convention `diag(R) >= 0`, which makes the output a
/// deterministic function of the RNG state. A rank-deficient draw (probability
/// ~ 0) is resampled once before giving up.
pub fn rademacher_orthonormal<R: Rng>(n: usize, r: usize, rng: &mut R) -> Result<Mat> {
    if r == 0 || r > n {
        return Err(Error::invalid(format!(
            "rademacher_orthonormal needs 1 <= r <= n, got n={n}, r={r}"
        )));
    }
    for attempt in 0..2 {
        let m = Mat::from_fn(n, r, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let qr = m.qr();
        let rmat = qr.r();
        let min_diag = (0..r).map(|i| rmat[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if min_diag <= 1e-10 * (n as f64).sqrt() {
            if attempt == 0 {
                continue;
            }
            return Err(Error::numerical(
                "rank-deficient Rademacher draw twice in a row",
            ));
        }
        let mut q = qr.q();
        for j in 0..r {
            if rmat[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return Ok(q);
    }
    unreachable!()
}

/// Matrix from row-major entries (the interchange layout).
pub fn mat_from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Mat> {
    if entries.len() != rows * cols {
        return Err(Error::invalid(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = Mat::from_row_slice(rows, cols, entries);
    check_finite(&m, "matrix entries")?;
    Ok(m)
}

/// Row-major entry dump (the interchange layout).
pub fn mat_to_row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
