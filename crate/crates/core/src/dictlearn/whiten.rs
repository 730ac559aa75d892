use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::inverse_sqrt_psd;

use super::nice::Samples;

/// Rows per partial covariance sum; fixed for thread-count independence.
const SHARD: usize = 16384;

/// Empirical covariance and the map that whitens it.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningState {
    pub covariance: DMatrix<f64>,
    pub inverse_sqrt: DMatrix<f64>,
    /// Eigenvalues of the covariance, descending.
    pub eigenvalues: DVector<f64>,
}

impl WhiteningState {
    /// `λ_max / λ_min` of the covariance.
    pub fn condition(&self) -> f64 {
        let n = self.eigenvalues.len();
        self.eigenvalues[0] / self.eigenvalues[n - 1]
    }

    /// `Σ̂^{1/2}`, which undoes the whitening.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let s = &self.covariance * &self.inverse_sqrt;
        (&s + s.transpose()) * 0.5
    }

    /// `‖W Σ̂ W - I‖`, how far the whitened covariance is from the identity.
    pub fn residual(&self) -> f64 {
        let w = &self.inverse_sqrt;
        let r = w * &self.covariance * w - DMatrix::identity(w.nrows(), w.ncols());
        crate::spectral::dense_spectral_norm(&r).unwrap_or(f64::NAN)
    }
}

pub fn covariance(samples: &Samples) -> Result<DMatrix<f64>> {
    let d = samples.dim();
    if samples.is_empty() {
        return Err(Error::InvalidParam("no samples".into()));
    }
    let parts: Vec<DMatrix<f64>> = samples
        .as_slice()
        .par_chunks(SHARD * d)
        .map(|chunk| {
            let rows = chunk.len() / d;
            // chunk is row-major m×d, i.e. column-major d×m
            let y = DMatrix::from_column_slice(d, rows, chunk);
            &y * y.transpose()
        })
        .collect();
    let mut sum = DMatrix::zeros(d, d);
    for p in parts {
        sum += p;
    }
    Ok(sum / samples.len() as f64)
}

/// Whitens with `Σ̂^{-1/2}` where `Σ̂ = (1/m) Σ y yᵀ`.
pub fn whiten(samples: &Samples) -> Result<(WhiteningState, Samples)> {
    let d = samples.dim();
    if samples.len() < d {
        return Err(Error::InvalidParam(format!(
            "whitening needs at least d = {d} samples, got {}",
            samples.len()
        )));
    }
    let cov = covariance(samples)?;
    let top = cov.diagonal().iter().copied().fold(0.0, f64::max);
    let (w, eigenvalues) = inverse_sqrt_psd(&cov, 1e-12 * top.max(f64::MIN_POSITIVE))?;
    let state = WhiteningState {
        covariance: cov,
        inverse_sqrt: w,
        eigenvalues,
    };
    let out = samples.transformed(&state.inverse_sqrt)?;
    Ok((state, out))
}
