use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::{dot, ComponentSet};
use crate::dense;
use crate::error::Result;
use crate::rng::gaussian_vec;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JennrichParams {
    pub trials: usize,
    /// Eigenvalues of `T_{12,34}` above this count as components.
    pub rank_threshold: f64,
}

impl Default for JennrichParams {
    fn default() -> Self {
        Self {
            trials: 20,
            rank_threshold: 0.5,
        }
    }
}

/// Eigenvectors of random contractions of the raw tensor, with no
/// preprocessing or clipping.
///
/// Each trial eigendecomposes `sym(M_g)` and keeps the `n` eigenvectors with
/// the largest `|λ|`, where `n` is the number of eigenvalues of `T_{12,34}`
/// above the rank threshold. All candidates are ranked by `⟨T, v^{⊗4}⟩` and
/// taken greedily, skipping any with `corr² ≥ 1/2` to one already taken.
pub fn jennrich_baseline(
    t: &Tensor4,
    params: &JennrichParams,
    rng: &mut impl Rng,
) -> Result<ComponentSet> {
    let d = t.dim();
    let (spectrum, _) = dense::sym_eigen_desc(&crate::spectral::symmetrized(&t.square_matrix())?)?;
    let n = spectrum
        .iter()
        .filter(|&&l| l > params.rank_threshold)
        .count()
        .min(d);
    let mut out = ComponentSet::new(d);
    if n == 0 {
        return Ok(out);
    }
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for _ in 0..params.trials.max(1) {
        let g = gaussian_vec(rng, d * d);
        let m = t.contract_front(&g);
        let sym = (&m + m.transpose()) * 0.5;
        let (values, vectors) = dense::sym_eigen_desc(&sym)?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
        for &i in order.iter().take(n) {
            let v: Vec<f64> = vectors.column(i).iter().copied().collect();
            candidates.push((t.quartic_form(&v), v));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (score, v) in candidates {
        if out.len() == n {
            break;
        }
        if out.iter().all(|k| dot(k, &v).powi(2) < 0.5) {
            out.push(v, score)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_instance, NoiseModel};
    use crate::rng::seeded;

    #[test]
    fn noise_free_recovery() {
        let inst = gen_instance(8, 5, &NoiseModel::none(), 2).unwrap();
        let out = jennrich_baseline(&inst.tensor, &JennrichParams::default(), &mut seeded(1))
            .unwrap();
        assert_eq!(out.len(), 5);
        for a in inst.truth.iter() {
            assert!(out.max_corr2(a) > 0.999);
        }
    }

    #[test]
    fn zero_tensor() {
        let out =
            jennrich_baseline(&Tensor4::zeros(4), &JennrichParams::default(), &mut seeded(1))
                .unwrap();
        assert!(out.is_empty());
    }
}
