//! Spectral projections and iterative spectral routines.
//!
//! `psd_truncate` and `clip_singular` are the two projections the
//! decomposition pipeline is built from: the first maps a symmetric matrix to
//! `(M - εI)_+`, the second caps singular values. Both are Frobenius-norm
//! projections onto closed convex sets, so they never increase distances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dense;
use crate::error::{Error, Result};
use crate::matrix::{LinearOperator, LowRankPsd, MatrixView};
use crate::rng::{gaussian_matrix, seeded};

/// Relative asymmetry accepted by [`psd_truncate`] before it refuses input.
pub const SYMMETRY_TOL: f64 = 1e-8;

pub const DEFAULT_POWER_TOL: f64 = 1e-9;
pub const DEFAULT_POWER_MAX_ITERS: usize = 500;

/// Whether a decomposition covers the whole spectrum or only its top part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Full,
    /// Only the leading triplets are known; the operator is the original
    /// matrix and these triplets describe what would be subtracted from it.
    Partial,
}

/// Leading singular triplets, values descending.
///
/// Each pair of vectors is sign-normalized so that the largest-magnitude
/// entry of the left vector is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    pub values: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub representation: Representation,
}

impl SpectralDecomp {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// For symmetric input the singular values are `|λ|`; this recovers the
    /// signed eigenvalues from the relative orientation of left and right
    /// vectors.
    pub fn signed_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                if self.left.column(i).dot(&self.right.column(i)) < 0.0 {
                    -s
                } else {
                    s
                }
            })
            .collect()
    }
}

/// Flips `u` (and `v` with it) so the largest-magnitude entry of `u` is positive.
pub fn normalize_sign(u: &mut [f64], v: Option<&mut [f64]>) {
    let pivot = u
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
        if let Some(v) = v {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn normalize_columns(left: &mut DMatrix<f64>, right: &mut DMatrix<f64>) {
    for c in 0..left.ncols() {
        let mut u: Vec<f64> = left.column(c).iter().copied().collect();
        let mut v: Vec<f64> = right.column(c).iter().copied().collect();
        normalize_sign(&mut u, Some(&mut v));
        left.set_column(c, &DVector::from_vec(u));
        right.set_column(c, &DVector::from_vec(v));
    }
}

pub use crate::dense::sym_eigen_desc;

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("matrix has non-finite entries".into()))
    }
}

/// `(M + Mᵀ)/2` after checking that `M` is symmetric up to
/// [`SYMMETRY_TOL`] relative to its Frobenius norm.
pub fn symmetrized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Domain(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let asym = (m - m.transpose()).abs().max();
    let scale = m.norm();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Domain(format!(
            "matrix is not symmetric: max |M - Mᵀ| = {asym:.3e} exceeds {:.3e}",
            SYMMETRY_TOL * scale
        )));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// `(M - εI)_+` in factored form: only eigenpairs with `λ > ε` are kept,
/// each with weight `λ - ε`.
pub fn psd_truncate_factored(m: &DMatrix<f64>, eps: f64) -> Result<LowRankPsd> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParam(format!("truncation level must be >= 0, got {eps}")));
    }
    let sym = symmetrized(m)?;
    let (values, vectors) = sym_eigen_desc(&sym)?;
    let keep = values.iter().take_while(|&&l| l > eps).count();
    let weights = DVector::from_iterator(keep, values.iter().take(keep).map(|l| l - eps));
    Ok(LowRankPsd::new(vectors.columns(0, keep).into_owned(), weights))
}

/// Projects the symmetric matrix `M - εI` onto the PSD cone:
/// `Σ max(λ_i - ε, 0) u_i u_iᵀ`.
pub fn psd_truncate(m: &MatrixView, eps: f64) -> Result<MatrixView> {
    let dense = psd_truncate_factored(m.matrix(), eps)?.to_dense();
    Ok(match m.plan() {
        Some(plan) => MatrixView::with_plan(dense, plan.clone()),
        None => MatrixView::new(dense),
    })
}

/// Caps all singular values of `m` at `bound`, keeping singular vectors.
pub fn clip_singular(m: &MatrixView, bound: f64) -> Result<MatrixView> {
    let clipped = clip_singular_dense(m.matrix(), bound)?;
    Ok(match m.plan() {
        Some(plan) => MatrixView::with_plan(clipped, plan.clone()),
        None => MatrixView::new(clipped),
    })
}

pub fn clip_singular_dense(m: &DMatrix<f64>, bound: f64) -> Result<DMatrix<f64>> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidParam(format!("clip bound must be positive, got {bound}")));
    }
    check_finite(m)?;
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = dense::svd(m)?;
    let mut out = m.clone();
    // subtract the excess of each large singular value; the rest of the
    // spectrum is left bit-for-bit untouched
    for (i, &s) in svd.s.iter().enumerate() {
        if s <= bound {
            break;
        }
        out -= (s - bound) * svd.u.column(i) * svd.v.column(i).transpose();
    }
    Ok(out)
}

/// Top-`k` singular triplets by block subspace iteration with Rayleigh-Ritz
/// extraction.
///
/// The block carries a few extra columns beyond `k` so that clustered
/// leading singular values still separate. Converged when every returned
/// triplet has `‖A v_i − σ_i u_i‖ ≤ tol · σ_1`.
pub fn subspace_power_iter<A, R>(
    op: &A,
    k: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<SpectralDecomp>
where
    A: LinearOperator + ?Sized,
    R: Rng,
{
    let (rows, cols) = (op.nrows(), op.ncols());
    let full = rows.min(cols);
    if k == 0 || k > full {
        return Err(Error::InvalidParam(format!(
            "k = {k} must lie in 1..={full} for a {rows}x{cols} operator"
        )));
    }
    let block = (k + k.max(4)).min(full);
    let representation = if k == full {
        Representation::Full
    } else {
        Representation::Partial
    };

    let mut q = orthonormal_basis(gaussian_matrix(rng, cols, block));
    let mut aq = op.apply(&q);
    let mut best: Option<(f64, SpectralDecomp)> = None;

    for _ in 0..max_iters {
        let left_basis = orthonormal_basis(aq);
        let w = op.apply_t(&left_basis);
        let svd = dense::svd(&w)?;
        let sigma = svd.s;
        let right = svd.u;
        let ritz_left = &left_basis * svd.v;

        let sigma_max = sigma[0];
        aq = op.apply(&right);
        if sigma_max == 0.0 {
            return Ok(SpectralDecomp {
                values: vec![0.0; k],
                left: ritz_left.columns(0, k).into_owned(),
                right: right.columns(0, k).into_owned(),
                representation,
            });
        }
        let residual = (0..k)
            .map(|i| (aq.column(i) - sigma[i] * ritz_left.column(i)).norm())
            .fold(0.0, f64::max)
            / sigma_max;

        let mut left_k = ritz_left.columns(0, k).into_owned();
        let mut right_k = right.columns(0, k).into_owned();
        normalize_columns(&mut left_k, &mut right_k);
        let decomp = SpectralDecomp {
            values: sigma.iter().take(k).copied().collect(),
            left: left_k,
            right: right_k,
            representation,
        };
        if residual <= tol {
            return Ok(decomp);
        }
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, decomp));
        }
        q = right;
    }
    let _ = q;
    let (residual, best) = best.expect("at least one iteration");
    Err(Error::Convergence {
        iters: max_iters,
        residual,
        best: Box::new(best),
    })
}

/// Orthonormal basis for the column space of `m` (thin QR, same width).
fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let q = m.qr().q();
    q.columns(0, cols).into_owned()
}

/// Largest singular value, by subspace iteration with `k = 1`.
pub fn spectral_norm<A: LinearOperator + ?Sized>(op: &A) -> f64 {
    if op.nrows() == 0 || op.ncols() == 0 {
        return 0.0;
    }
    let mut rng = seeded(0x5eed_5eed);
    match subspace_power_iter(op, 1, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS, &mut rng) {
        Ok(d) => d.values[0],
        Err(Error::Convergence { best, .. }) => best.values[0],
        // only non-finite input gets here
        Err(_) => f64::NAN,
    }
}

/// Largest singular value from a full dense SVD.
pub fn dense_spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(dense::singular_values(m)?.iter().copied().fold(0.0, f64::max))
}

/// Top singular value and sign-normalized left/right singular vectors of a
/// small dense matrix.
pub fn top_singular_pair(m: &DMatrix<f64>) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if m.is_empty() {
        return Err(Error::Domain("empty matrix has no singular vectors".into()));
    }
    let svd = dense::svd(m)?;
    let mut u: Vec<f64> = svd.u.column(0).iter().copied().collect();
    let mut v: Vec<f64> = svd.v.column(0).iter().copied().collect();
    normalize_sign(&mut u, Some(&mut v));
    Ok((svd.s[0], u, v))
}

/// `M^{-1/2}` and `M^{1/2}` for a symmetric positive definite matrix; errors
/// if the smallest eigenvalue is below `floor`.
pub fn inverse_sqrt_psd(m: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sym = symmetrized(m)?;
    let (values, vectors) = sym_eigen_desc(&sym)?;
    let smallest = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > floor) {
        return Err(Error::Degenerate(format!(
            "matrix is not positive definite: smallest eigenvalue {smallest:.3e}"
        )));
    }
    let inv_sqrt = DVector::from_iterator(values.len(), values.iter().map(|l| 1.0 / l.sqrt()));
    let w = &vectors * DMatrix::from_diagonal(&inv_sqrt) * vectors.transpose();
    Ok(((&w + w.transpose()) * 0.5, values))
}
