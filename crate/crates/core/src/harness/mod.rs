//! Synthetic instances, the plain Jennrich baseline, recovery scoring and
//! grid experiments.

mod baseline;
mod experiment;
mod score;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use baseline::{jennrich_baseline, JennrichParams};
pub use experiment::{
    run_experiment, run_experiment_file, worker_threads, Algorithm, CellReport,
    ExperimentConfig, GridSpec, PipelineOverrides, CSV_HEADER,
};
pub use score::{score, MatchReport};

use crate::decompose::{components_tensor, ComponentSet};
use crate::dense;
use crate::error::{Error, Result};
use crate::rng::{gaussian_vec, haar_orthonormal, substream};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// `ε · I_{d²}` in the square unfolding.
    IdentityScaled,
    /// A GOE matrix in the square unfolding; the tensor itself is not
    /// symmetric under all mode permutations.
    RandomSymmetric,
    /// A Gaussian tensor averaged over the 24 mode permutations.
    RandomDenseTensor,
    /// `-Σ_{i ≤ ⌈ε²n⌉} a_i^{⊗4}`: wipes out a few components entirely. Not
    /// scaled to `ε`.
    PlantedCancel,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::None,
        NoiseKind::IdentityScaled,
        NoiseKind::RandomSymmetric,
        NoiseKind::RandomDenseTensor,
        NoiseKind::PlantedCancel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::IdentityScaled => "identity_scaled",
            NoiseKind::RandomSymmetric => "random_symmetric",
            NoiseKind::RandomDenseTensor => "random_dense_tensor",
            NoiseKind::PlantedCancel => "planted_cancel",
        }
    }

    /// Whether the realized square-unfolding norm is exactly `ε`.
    pub fn is_calibrated(self) -> bool {
        !matches!(self, NoiseKind::PlantedCancel)
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "unknown noise kind {s:?}; expected one of none, identity_scaled, \
                     random_symmetric, random_dense_tensor, planted_cancel"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Target spectral norm of `E_{12,34}`.
    pub eps: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, eps: f64) -> Self {
        Self { kind, eps }
    }

    pub fn none() -> Self {
        Self::new(NoiseKind::None, 0.0)
    }
}

/// A synthetic `T = Σ a_i^{⊗4} + E` with its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tensor: Tensor4,
    pub truth: ComponentSet,
    pub noise: Tensor4,
}

/// Spectral norm of the square unfolding of a tensor whose square unfolding
/// is symmetric.
pub fn square_spectral_norm(t: &Tensor4) -> Result<f64> {
    let (values, _) = dense::sym_eigen_desc(&t.square_matrix())?;
    Ok(values.iter().map(|x| x.abs()).fold(0.0, f64::max))
}

fn scaled_to(t: Tensor4, eps: f64) -> Result<Tensor4> {
    let norm = square_spectral_norm(&t)?;
    if norm == 0.0 {
        return Err(Error::Degenerate("noise draw has zero norm".into()));
    }
    Ok(t.scale(eps / norm))
}

/// Draws the error tensor for `truth` (used only by `planted_cancel`).
pub fn gen_noise(
    d: usize,
    noise: &NoiseModel,
    truth: &ComponentSet,
    seed: u64,
) -> Result<Tensor4> {
    let eps = noise.eps;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParam(format!("noise eps must be >= 0, got {eps}")));
    }
    let mut rng = substream(seed, 1);
    let d2 = d * d;
    match noise.kind {
        NoiseKind::None => Ok(Tensor4::zeros(d)),
        _ if eps == 0.0 && noise.kind.is_calibrated() => Ok(Tensor4::zeros(d)),
        NoiseKind::IdentityScaled => Tensor4::from_square_matrix(&(DMatrix::identity(d2, d2) * eps)),
        NoiseKind::RandomSymmetric => {
            let g = DMatrix::from_vec(d2, d2, gaussian_vec(&mut rng, d2 * d2));
            let sym = (&g + g.transpose()) * 0.5;
            scaled_to(Tensor4::from_square_matrix(&sym)?, eps)
        }
        NoiseKind::RandomDenseTensor => {
            let g = Tensor4::from_vec(d, gaussian_vec(&mut rng, d2 * d2))?;
            scaled_to(g.symmetrize(), eps)
        }
        NoiseKind::PlantedCancel => {
            let k = ((eps * eps * truth.len() as f64).ceil() as usize).min(truth.len());
            Ok(Tensor4::sum_of_powers(d, truth.iter().take(k)).scale(-1.0))
        }
    }
}

/// `n` Haar-random orthonormal components in `R^d` plus noise.
pub fn gen_instance(d: usize, n: usize, noise: &NoiseModel, seed: u64) -> Result<Instance> {
    if d == 0 {
        return Err(Error::InvalidParam("dimension must be positive".into()));
    }
    if n > d {
        return Err(Error::InvalidParam(format!(
            "cannot place {n} orthonormal components in dimension {d}"
        )));
    }
    let a = haar_orthonormal(&mut substream(seed, 0), d, n);
    let truth = ComponentSet::from_columns(&a)?;
    let noise_t = gen_noise(d, noise, &truth, seed)?;
    let tensor = components_tensor(&truth).add(&noise_t);
    Ok(Instance {
        tensor,
        truth,
        noise: noise_t,
    })
}
