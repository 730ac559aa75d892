//! Dense SVD and symmetric eigendecomposition on nalgebra matrices.
//!
//! The factorizations run in faer; nalgebra stays the storage type for the
//! rest of the crate. faer is built without its thread pool so results do
//! not depend on the number of workers.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD `m = U diag(s) Vᵀ` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("matrix has non-finite entries".into()))
    }
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    finite(m)?;
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let f = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Degenerate(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (f.U(), f.S().column_vector(), f.V());
    Ok(Svd {
        u: DMatrix::from_fn(rows, r, |i, j| u[(i, j)]),
        s: DVector::from_fn(r, |i, _| s[i]),
        v: DMatrix::from_fn(cols, r, |i, j| v[(i, j)]),
    })
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    finite(m)?;
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let s = to_faer(m)
        .singular_values()
        .map_err(|e| Error::Degenerate(format!("SVD did not converge: {e:?}")))?;
    Ok(DVector::from_vec(s))
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Only the lower
/// triangle is read.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let f = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigensolver did not converge: {e:?}")))?;
    let (u, s) = (f.U(), f.S().column_vector());
    // faer sorts ascending
    let values = DVector::from_fn(n, |i, _| s[n - 1 - i]);
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok((values, vectors))
}
