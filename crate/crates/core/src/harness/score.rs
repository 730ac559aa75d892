use serde::{Deserialize, Serialize};

use crate::decompose::{corr2, ComponentSet};
use crate::error::{Error, Result};

/// Greedy sign-invariant matching of recovered vectors to ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `(recovered index, truth index, corr²)`, in the order they were matched.
    pub pairs: Vec<(usize, usize, f64)>,
    pub recovered_total: usize,
    pub truth_total: usize,
    /// Minimum over truth vectors; an unmatched truth vector counts as 0.
    /// Vacuously 1 when there is no truth.
    pub min_corr2: f64,
    pub mean_corr2: f64,
}

impl MatchReport {
    /// Truth vectors matched with `corr² ≥ threshold`.
    pub fn recovered_at(&self, threshold: f64) -> usize {
        self.pairs.iter().filter(|p| p.2 >= threshold).count()
    }

    /// The corr² for each truth vector (0 when unmatched).
    pub fn per_truth(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.truth_total];
        for &(_, t, c) in &self.pairs {
            out[t] = c;
        }
        out
    }
}

/// Repeatedly takes the remaining (recovered, truth) pair with the largest
/// `⟨b, a⟩²`; ties go to the lower recovered index, then lower truth index.
pub fn score(recovered: &ComponentSet, truth: &ComponentSet) -> Result<MatchReport> {
    if recovered.dim() != truth.dim() {
        return Err(Error::Dimension {
            expected: truth.dim(),
            got: recovered.dim(),
        });
    }
    let mut all: Vec<(usize, usize, f64)> = Vec::with_capacity(recovered.len() * truth.len());
    for (i, b) in recovered.iter().enumerate() {
        for (j, a) in truth.iter().enumerate() {
            all.push((i, j, corr2(b, a)));
        }
    }
    // stable sort keeps index order among equal values
    all.sort_by(|x, y| y.2.total_cmp(&x.2));
    let mut used_r = vec![false; recovered.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (i, j, c) in all {
        if used_r[i] || used_t[j] {
            continue;
        }
        used_r[i] = true;
        used_t[j] = true;
        pairs.push((i, j, c));
    }
    let mut report = MatchReport {
        pairs,
        recovered_total: recovered.len(),
        truth_total: truth.len(),
        min_corr2: 1.0,
        mean_corr2: 1.0,
    };
    if !truth.is_empty() {
        let per = report.per_truth();
        report.min_corr2 = per.iter().copied().fold(1.0, f64::min);
        report.mean_corr2 = per.iter().sum::<f64>() / per.len() as f64;
    }
    Ok(report)
}
