use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs for [`full_decompose`](super::full_decompose).
///
/// Only `eps` is mandatory; every `None` is derived from `eps` and the
/// working rank `n` (the number of eigenvalues of the square unfolding above
/// `eps`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    /// Bound on the spectral norm of the noise in the `{1,2}{3,4}` unfolding.
    pub eps: f64,
    /// Reject a candidate `v` when some known `k` has `⟨v,k⟩² ≥ dedup_corr`.
    /// Defaults to `1 - eps`.
    pub dedup_corr: Option<f64>,
    /// Random contractions per round. Defaults to `ceil(10 n ln n)`.
    pub trials_per_round: Option<usize>,
    /// Upper cap on the per-round trial count.
    pub max_trials: Option<usize>,
    /// Multiplier on the postprocessing acceptance threshold.
    pub accept_margin: f64,
    /// Defaults to `ceil(100 ln n)`.
    pub max_rounds: Option<usize>,
    pub seed: u64,
}

impl RecoveryParams {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self {
            eps,
            dedup_corr: None,
            trials_per_round: None,
            max_trials: None,
            accept_margin: 1.0,
            max_rounds: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::InvalidParam(format!("eps must lie in [0, 1), got {}", self.eps)));
        }
        let dedup = self.dedup_corr();
        if !(dedup > 0.0 && dedup < 1.0) {
            return Err(Error::InvalidParam(format!(
                "dedup_corr must lie in (0, 1), got {dedup}"
            )));
        }
        if self.trials_per_round == Some(0) || self.max_trials == Some(0) {
            return Err(Error::InvalidParam("trials_per_round must be at least 1".into()));
        }
        if !(self.accept_margin > 0.0) {
            return Err(Error::InvalidParam("accept_margin must be positive".into()));
        }
        if self.max_rounds == Some(0) {
            return Err(Error::InvalidParam("max_rounds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dedup_corr(&self) -> f64 {
        self.dedup_corr.unwrap_or(1.0 - self.eps)
    }

    pub fn trials_for(&self, n: usize) -> usize {
        let auto = || {
            let n = n.max(1) as f64;
            (10.0 * n * n.ln().max(1.0)).ceil() as usize
        };
        let trials = self.trials_per_round.unwrap_or_else(auto);
        match self.max_trials {
            Some(cap) => trials.min(cap),
            None => trials,
        }
    }

    pub fn rounds_for(&self, n: usize) -> usize {
        self.max_rounds
            .unwrap_or_else(|| ((100.0 * (n.max(1) as f64).ln()).ceil() as usize).max(10))
    }

    /// Threshold on `⟨v^{⊗4}, T⟩` applied right after refinement.
    pub fn postprocess_threshold(&self) -> f64 {
        self.accept_margin * postprocess_threshold(self.eps)
    }

    /// Threshold applied to the orthonormalized batch.
    pub fn batch_threshold(&self) -> f64 {
        let e = self.eps;
        (1.0 - 6.0 * e).powi(2) - e
    }
}

/// `(1 - 3ε)² - ε`.
pub fn postprocess_threshold(eps: f64) -> f64 {
    (1.0 - 3.0 * eps).powi(2) - eps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_eps_and_rank() {
        let p = RecoveryParams::new(0.1, 0);
        p.validate().unwrap();
        assert!((p.dedup_corr() - 0.9).abs() < 1e-15);
        assert_eq!(p.trials_for(10), (100.0 * 10f64.ln()).ceil() as usize);
        assert_eq!(p.trials_for(1), 10);
        assert!((p.postprocess_threshold() - (0.49 - 0.1)).abs() < 1e-12);
        assert!((p.batch_threshold() - (0.16 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn cap_applies() {
        let mut p = RecoveryParams::new(0.05, 0);
        p.max_trials = Some(7);
        assert_eq!(p.trials_for(50), 7);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(RecoveryParams::new(1.0, 0).validate().is_err());
        assert!(RecoveryParams::new(-0.1, 0).validate().is_err());
        let mut p = RecoveryParams::new(0.1, 0);
        p.trials_per_round = Some(0);
        assert!(p.validate().is_err());
        let mut p = RecoveryParams::new(0.1, 0);
        p.dedup_corr = Some(1.0);
        assert!(p.validate().is_err());
    }
}
