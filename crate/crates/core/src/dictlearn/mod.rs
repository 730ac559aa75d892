//! Orthonormal dictionary learning from fourth moments.
//!
//! Samples `y = A x` with sparse `x` have a fourth moment that is
//! `Σ a_i^{⊗4}` plus cross terms `E[x_i²x_j²](...)`. One of those cross
//! terms is low rank and large in the square unfolding; [`clean_moment`]
//! removes it by truncating in the square unfolding, switching to the
//! `{1,3}{2,4}` unfolding where it is small, and truncating again. The
//! cleaned tensor goes through [`full_decompose`], and every component is
//! refined once more against the raw moment.

mod moment;
mod nice;
mod whiten;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use moment::{
    analytic_moment, clean_moment, cross_term_norms, empirical_moment4, kurtosis_scale,
    reshape_sigma, MomentAccumulator, MomentEstimate,
};
pub use nice::{
    generate_samples, generate_samples_with, sample_nice, sample_nice_with, IndependentSupport,
    NiceDistSpec, Samples, SupportSampler, SAMPLE_SHARD,
};
pub use whiten::{covariance, whiten, WhiteningState};

use crate::decompose::{self, full_decompose, ComponentSet, RecoveryParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// `τ` must stay below this for the moment cleaning to separate the signal.
pub const C_STAR: f64 = 0.25;

/// Error parameter of the dictionary refinement step.
const DICT_POST_EPS: f64 = 0.5;

/// One step of tensor power iteration against the moment, with the loose
/// error parameter `1/2`. Its acceptance threshold is negative, so a vector
/// is always returned.
pub fn dict_postprocess(moment: &Tensor4, u: &[f64]) -> Option<decompose::Refined> {
    decompose::postprocess(moment, u, DICT_POST_EPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictParams {
    /// Pairwise moment bound of the coefficient law.
    pub tau: f64,
    /// Truncation level for the cleaning; defaults to `tau`.
    pub alpha: Option<f64>,
    /// Number of dictionary columns; defaults to the sample dimension.
    pub n_components: Option<usize>,
    /// Noise bound handed to the decomposition; defaults to `alpha`.
    pub eps: Option<f64>,
    pub whiten: bool,
    /// Fewer samples than this is an error; defaults to `10·d²`.
    pub min_samples: Option<usize>,
    pub max_trials: Option<usize>,
    pub seed: u64,
}

impl DictParams {
    pub fn new(tau: f64, seed: u64) -> Self {
        Self {
            tau,
            alpha: None,
            n_components: None,
            eps: None,
            whiten: false,
            min_samples: None,
            max_trials: None,
            seed,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau < C_STAR) {
            return Err(Error::InvalidParam(format!(
                "tau = {} is outside [0, {C_STAR}); the coefficient law is not nice enough",
                self.tau
            )));
        }
        let alpha = self.alpha();
        if !(0.0..C_STAR).contains(&alpha) {
            return Err(Error::InvalidParam(format!("alpha must lie in [0, {C_STAR}), got {alpha}")));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidParam(format!("eps must lie in (0, 1), got {e}")));
            }
        }
        if self.n_components == Some(0) {
            return Err(Error::InvalidParam("n_components must be positive".into()));
        }
        Ok(())
    }

    fn recovery(&self) -> RecoveryParams {
        // alpha = 0 means an exact moment; a tiny eps still defines the rank
        let eps = self.eps.unwrap_or_else(|| self.alpha().max(1e-6));
        let mut p = RecoveryParams::new(eps, self.seed);
        p.max_trials = self.max_trials;
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub components: ComponentSet,
    /// Divisor applied to the empirical moment.
    pub scale: f64,
    pub alpha: f64,
    pub samples: u64,
    pub whitening: Option<WhiteningState>,
    pub rounds: usize,
    pub trials_used: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryReport {
    pub components: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub scale: f64,
    pub alpha: f64,
    pub samples: u64,
    pub whitened: bool,
    pub condition: Option<f64>,
    pub rounds: usize,
    pub trials_used: usize,
    pub warnings: Vec<String>,
}

impl Dictionary {
    pub fn report(&self) -> DictionaryReport {
        DictionaryReport {
            components: self.components.vectors().to_vec(),
            scores: self.components.scores().to_vec(),
            scale: self.scale,
            alpha: self.alpha,
            samples: self.samples,
            whitened: self.whitening.is_some(),
            condition: self.whitening.as_ref().map(WhiteningState::condition),
            rounds: self.rounds,
            trials_used: self.trials_used,
            warnings: self.warnings.clone(),
        }
    }
}

/// Whiten (optionally), estimate and normalize the fourth moment, clean it,
/// decompose, and refine each component against the moment.
pub fn learn_dictionary(samples: &Samples, params: &DictParams) -> Result<Dictionary> {
    params.validate()?;
    let d = samples.dim();
    let floor = params.min_samples.unwrap_or(10 * d * d);
    if samples.len() < floor {
        return Err(Error::InvalidParam(format!(
            "insufficient samples: {} < {floor}",
            samples.len()
        )));
    }
    let (whitening, moment) = if params.whiten {
        let (state, white) = whiten(samples)?;
        (Some(state), empirical_moment4(&white)?)
    } else {
        (None, empirical_moment4(samples)?)
    };
    let mut dict = learn_from_moment(moment, params)?;
    if let Some(state) = &whitening {
        let sqrt = state.sqrt();
        let mut mapped = ComponentSet::new(d);
        for (v, &score) in dict.components.iter().zip(dict.components.scores()) {
            let back = &sqrt * nalgebra::DVector::from_column_slice(v);
            mapped.push(back.as_slice().to_vec(), score)?;
        }
        dict.components = mapped;
    }
    dict.whitening = whitening;
    Ok(dict)
}

/// The part of [`learn_dictionary`] after the moment is known; also accepts
/// an exact moment.
pub fn learn_from_moment(moment: MomentEstimate, params: &DictParams) -> Result<Dictionary> {
    params.validate()?;
    let d = moment.tensor.dim();
    let n = params.n_components.unwrap_or(d);
    if n > d {
        return Err(Error::InvalidParam(format!(
            "{n} orthonormal components do not fit in dimension {d}"
        )));
    }
    let moment = moment.normalized(n)?;
    let alpha = params.alpha();
    let cleaned = clean_moment(&moment.tensor, alpha)?;
    let dec = full_decompose(&cleaned, &params.recovery())?;
    let mut components = ComponentSet::new(d);
    for u in dec.components.iter() {
        if let Some(r) = dict_postprocess(&moment.tensor, u) {
            if components.max_corr2(&r.vector) < 0.5 {
                components.push(r.vector, r.score)?;
            }
        }
    }
    Ok(Dictionary {
        components,
        scale: moment.scale,
        alpha,
        samples: moment.count,
        whitening: None,
        rounds: dec.rounds,
        trials_used: dec.trials_used,
        warnings: dec.warnings,
    })
}

/// Columns of a Haar-random `d × n` dictionary, for synthetic experiments.
pub fn random_dictionary(d: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n > d || n == 0 {
        return Err(Error::InvalidParam(format!(
            "need 1 <= n <= d for an orthonormal dictionary, got n = {n}, d = {d}"
        )));
    }
    Ok(crate::rng::haar_orthonormal(
        &mut crate::rng::substream(seed, u64::MAX),
        d,
        n,
    ))
}
