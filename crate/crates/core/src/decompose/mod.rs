//! Robust orthogonal 4-tensor decomposition.
//!
//! One round of [`full_decompose`]:
//!
//! 1. [`preprocess`]: `(T_{12,34} - εI)_+` turns a spectral-norm error of `ε`
//!    into a Frobenius-norm error of at most `2ε√(2n)`.
//! 2. [`clip_rect`]: cap the `{1,2,3}{4}` and then `{1,2,4}{3}` unfoldings at
//!    unit spectral norm.
//! 3. [`random_contraction`]: contract modes 1 and 2 against a Gaussian and
//!    take the top singular vectors of the resulting `d × d` matrix.
//! 4. [`postprocess`]: one step of tensor power iteration against the
//!    original tensor, keeping the result only if its quartic form is large.
//! 5. deduplicate, [`orthonormalize`], filter, and [`subtract_components`]
//!    from the working tensor.

mod components;
mod params;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use components::{corr2, dot, ComponentSet};
pub use params::{postprocess_threshold, RecoveryParams};

use crate::dense;
use crate::error::{Error, Result};
use crate::matrix::LowRankPsd;
use crate::rng::{gaussian_vec, stream_id, substream};
use crate::spectral::{self, clip_singular_dense, psd_truncate_factored, top_singular_pair};
use crate::tensor::{ReshapePlan, Tensor4};

/// Smallest singular value [`orthonormalize`] accepts.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// A vector within this squared correlation of an already-known component is
/// a second copy of it, not a new orthogonal component.
const KNOWN_OVERLAP_CAP: f64 = 0.5;

/// Eigenvalues within this relative distance of `ε` count as equal to it.
pub const RANK_TOL: f64 = 1e-9;

/// `(T_{12,34} - εI)_+`, kept in factored form. Its rank is the working
/// component count.
///
/// Eigenvalues that exceed `ε` only by rounding (relative to the largest
/// eigenvalue) are dropped, so an exact `ε·I` error term does not inflate the
/// rank.
pub fn preprocess(t: &Tensor4, eps: f64) -> Result<LowRankPsd> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("eps must be positive, got {eps}")));
    }
    let full = psd_truncate_factored(&t.square_matrix(), eps)?;
    let top = full.weights().iter().copied().fold(eps, f64::max) + eps;
    let keep = full.weights().iter().take_while(|&&w| w > RANK_TOL * top).count();
    if keep == full.rank() {
        return Ok(full);
    }
    Ok(LowRankPsd::new(
        full.vectors().columns(0, keep).into_owned(),
        full.weights().rows(0, keep).into_owned(),
    ))
}

/// Projects `t` onto tensors whose `{1,2,3}{4}` unfolding has spectral norm
/// at most 1, then does the same for `{1,2,4}{3}`. The second projection
/// preserves the first bound.
pub fn clip_rect(t: &Tensor4) -> Result<Tensor4> {
    let d = t.dim();
    let mut out = t.clone();
    for plan in [ReshapePlan::rect_123_4(), ReshapePlan::rect_124_3()] {
        let m = out.reshape(&plan);
        let clipped = clip_singular_dense(m.matrix(), 1.0)?;
        out = Tensor4::from_unfolding(&clipped, &plan, d)?;
    }
    Ok(out)
}

/// Outcome of one random flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCandidate {
    /// The Gaussian in `R^{d²}` used for the contraction.
    pub g: Vec<f64>,
    pub u_left: Vec<f64>,
    pub u_right: Vec<f64>,
    pub sigma_top: f64,
}

/// `M_g = Σ_j g_j T_j` for `g ~ N(0, I_{d²})` and its top singular vectors.
pub fn random_contraction(t: &Tensor4, rng: &mut impl Rng) -> Result<ContractionCandidate> {
    let d = t.dim();
    let g = gaussian_vec(rng, d * d);
    contract_with(t, g)
}

/// Same as [`random_contraction`] with a caller-chosen `g`.
pub fn contract_with(t: &Tensor4, g: Vec<f64>) -> Result<ContractionCandidate> {
    let mg = t.contract_front(&g);
    let (sigma_top, u_left, u_right) = top_singular_pair(&mg)?;
    Ok(ContractionCandidate {
        g,
        u_left,
        u_right,
        sigma_top,
    })
}

/// A refined unit vector and its quartic form `⟨v^{⊗4}, T⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub vector: Vec<f64>,
    pub score: f64,
}

/// Refines `u` against the clean tensor: the top left and right singular
/// vectors of `T_{12,34}(u⊗u)` (reshaped to `d × d`) are scored by their
/// quartic form, and the better one is returned if it reaches
/// `(1-3ε)² - ε`.
pub fn postprocess(t_clean: &Tensor4, u: &[f64], eps: f64) -> Option<Refined> {
    postprocess_at(t_clean, u, postprocess_threshold(eps))
}

/// [`postprocess`] with an explicit acceptance threshold.
pub fn postprocess_at(t_clean: &Tensor4, u: &[f64], threshold: f64) -> Option<Refined> {
    let a = t_clean.apply_to_square(u);
    let (_, v_left, v_right) = top_singular_pair(&a).ok()?;
    [v_left, v_right]
        .into_iter()
        .map(|v| {
            let score = t_clean.quartic_form(&v);
            Refined { vector: v, score }
        })
        .filter(|r| r.score >= threshold)
        .max_by(|a, b| a.score.total_cmp(&b.score))
}

/// Replaces `B = UΣVᵀ` (components as columns) by `UΣ⁻¹UᵀB = UVᵀ`, the
/// nearest matrix with orthonormal columns in Frobenius norm. Scores are
/// carried over unchanged.
pub fn orthonormalize(b: &ComponentSet) -> Result<ComponentSet> {
    if b.is_empty() {
        return Ok(b.clone());
    }
    if b.len() > b.dim() {
        return Err(Error::Degenerate(format!(
            "{} vectors in R^{} cannot be linearly independent",
            b.len(),
            b.dim()
        )));
    }
    let svd = dense::svd(&b.to_matrix())?;
    let smallest = svd.s.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "component matrix is rank deficient (smallest singular value {smallest:.3e})"
        )));
    }
    let polar = svd.u * svd.v.transpose();
    let mut out = ComponentSet::from_columns(&polar)?;
    out.set_scores(b.scores().to_vec());
    Ok(out)
}

/// Orthonormal basis of the span of the vectors accepted so far in a batch.
///
/// A candidate whose squared norm inside this span is at least
/// [`KNOWN_OVERLAP_CAP`] is treated as redundant, which keeps the batch
/// well-conditioned for [`orthonormalize`].
struct SpanBasis {
    dim: usize,
    basis: Vec<Vec<f64>>,
}

impl SpanBasis {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            basis: Vec::new(),
        }
    }

    /// Fraction of `v`'s squared norm that lies in the span.
    fn captured(&self, v: &[f64]) -> f64 {
        let norm2 = dot(v, v);
        if norm2 == 0.0 {
            return 1.0;
        }
        self.basis.iter().map(|q| dot(q, v).powi(2)).sum::<f64>() / norm2
    }

    fn add(&mut self, v: &[f64]) {
        if self.basis.len() == self.dim {
            return;
        }
        let mut r = v.to_vec();
        // two passes of Gram-Schmidt keep the basis orthonormal to rounding
        for _ in 0..2 {
            for q in &self.basis {
                let c = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&r, &r).sqrt();
        if n > 1e-12 {
            self.basis.push(r.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Mutable state of the recovery loop.
#[derive(Debug, Clone)]
pub struct WorkingState {
    pub clean: Tensor4,
    /// `clean - Σ_{k ∈ known} k^{⊗4}`.
    pub work: Tensor4,
    pub known: ComponentSet,
    pub round: usize,
}

impl WorkingState {
    pub fn new(t: Tensor4) -> Self {
        let d = t.dim();
        Self {
            work: t.clone(),
            clean: t,
            known: ComponentSet::new(d),
            round: 0,
        }
    }
}

/// Removes `Σ b^{⊗4}` over `found` from the working tensor and records the
/// vectors as known.
pub fn subtract_components(mut state: WorkingState, found: &ComponentSet) -> WorkingState {
    for b in found.iter() {
        state.work.add_rank_one(b, -1.0);
    }
    state.known.extend(found.clone());
    state
}

/// Result of [`full_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub components: ComponentSet,
    pub rounds: usize,
    pub trials_used: usize,
    pub warnings: Vec<String>,
}

/// Serialized form of a [`Decomposition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub components: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub rounds: usize,
    pub trials_used: usize,
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn report(&self) -> DecompositionReport {
        DecompositionReport {
            components: self.components.vectors().to_vec(),
            scores: self.components.scores().to_vec(),
            rounds: self.rounds,
            trials_used: self.trials_used,
            warnings: self.warnings.clone(),
        }
    }
}

/// The full recovery loop. See the module docs for the per-round steps.
///
/// Stops when the known set reaches the initial working rank, when the
/// preprocessed working tensor has rank zero, after `max_rounds`, or after two
/// consecutive rounds without a new component (the last case adds a warning).
pub fn full_decompose(t: &Tensor4, params: &RecoveryParams) -> Result<Decomposition> {
    params.validate()?;
    let d = t.dim();
    let eps = params.eps;
    let mut state = WorkingState::new(t.clone());
    let mut trials_used = 0;
    let mut warnings = Vec::new();
    let mut target = None;
    let mut max_rounds = usize::MAX;
    let mut stalled = 0;
    let mut rounds = 0;

    while state.round < max_rounds {
        let pre = preprocess(&state.work, eps)?;
        let n_work = pre.rank();
        let n_target = *target.get_or_insert(n_work);
        if state.round == 0 {
            max_rounds = params.rounds_for(n_target);
        }
        if n_work == 0 || state.known.len() >= n_target {
            break;
        }
        rounds += 1;

        let clipped = clip_rect(&pre.to_tensor()?)?;
        let trials = params.trials_for(n_work);
        let threshold = params.postprocess_threshold();
        let round = state.round as u64;
        let clean = &state.clean;
        let per_trial: Vec<Vec<Refined>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = substream(params.seed, stream_id(round, trial as u64));
                let c = random_contraction(&clipped, &mut rng)?;
                Ok([c.u_left, c.u_right]
                    .into_iter()
                    .filter_map(|u| postprocess_at(clean, &u, threshold))
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut candidates: Vec<Refined> = per_trial.into_iter().flatten().collect();
        trials_used += trials;

        // best candidates first so each duplicate cluster keeps its top scorer
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut batch = ComponentSet::new(d);
        let mut span = SpanBasis::new(d);
        for c in candidates {
            if state.known.max_corr2(&c.vector) >= params.dedup_corr()
                || span.captured(&c.vector) >= KNOWN_OVERLAP_CAP
            {
                continue;
            }
            span.add(&c.vector);
            batch.push(c.vector, c.score)?;
        }

        let accepted = if batch.is_empty() {
            ComponentSet::new(d)
        } else {
            let ortho = orthonormalize(&batch)?;
            let floor = params.batch_threshold();
            let mut kept = ComponentSet::new(d);
            for v in ortho.iter() {
                let score = state.clean.quartic_form(v);
                if score >= floor && state.known.max_corr2(v) < KNOWN_OVERLAP_CAP {
                    kept.push(v.to_vec(), score)?;
                }
            }
            kept
        };
        debug!(
            "round {}: rank {n_work}, {trials} trials, batch {}, accepted {}",
            state.round,
            batch.len(),
            accepted.len()
        );

        if accepted.is_empty() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        state = subtract_components(state, &accepted);
        state.round += 1;
        if stalled >= 2 {
            let msg = format!(
                "no new components in two consecutive rounds; stopping with {} of {} expected",
                state.known.len(),
                n_target
            );
            warn!("{msg}");
            warnings.push(msg);
            break;
        }
    }

    let mut components = state.known;
    if !components.is_orthonormal(DEGENERACY_TOL) {
        // batches are orthonormal internally but only nearly so across rounds
        components = orthonormalize(&components)?;
        let scores = components.iter().map(|v| t.quartic_form(v)).collect();
        components.set_scores(scores);
    }
    Ok(Decomposition {
        components,
        rounds,
        trials_used,
        warnings,
    })
}

/// `‖Σ a_i a_iᵀ - I‖` restricted to the span of the vectors: the largest
/// deviation of a non-zero Gram eigenvalue from 1.
pub fn near_orthonormal_check(components: &ComponentSet) -> f64 {
    if components.is_empty() {
        return 0.0;
    }
    let a = components.to_matrix();
    let gram = a.transpose() * &a;
    let Ok((values, _)) = spectral::sym_eigen_desc(&gram) else {
        return f64::NAN;
    };
    let top = values.iter().copied().fold(0.0, f64::max);
    values
        .iter()
        .filter(|&&l| l > 1e-12 * top.max(1.0))
        .map(|l| (l - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `Σ_i a_i^{⊗4}` for a component set.
pub fn components_tensor(c: &ComponentSet) -> Tensor4 {
    Tensor4::sum_of_powers(c.dim(), c.iter())
}

/// `‖Σ a_i^{⊗4} - Σ b_i^{⊗4}‖` in the square unfolding, computed on the
/// span of the Kronecker squares.
///
/// With `W = [a_i⊗a_i | b_i⊗b_i]` and `S = diag(±1)` the difference is
/// `W S Wᵀ`, which has the same non-zero spectrum as `G^{1/2} S G^{1/2}` for
/// `G = WᵀW`.
pub fn power_sum_gap(a: &ComponentSet, b: &ComponentSet) -> f64 {
    let cols: Vec<DVector<f64>> = a
        .iter()
        .chain(b.iter())
        .map(crate::tensor::kron_square)
        .collect();
    if cols.is_empty() {
        return 0.0;
    }
    let w = DMatrix::from_columns(&cols);
    let signs = DVector::from_fn(cols.len(), |i, _| if i < a.len() { 1.0 } else { -1.0 });
    let Ok((gv, gvec)) = spectral::sym_eigen_desc(&w.tr_mul(&w)) else {
        return f64::NAN;
    };
    let root = &gvec * DMatrix::from_diagonal(&gv.map(|x| x.max(0.0).sqrt())) * gvec.transpose();
    let core = &root * DMatrix::from_diagonal(&signs) * &root;
    let Ok((values, _)) = spectral::sym_eigen_desc(&((&core + core.transpose()) * 0.5)) else {
        return f64::NAN;
    };
    values.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::rng::{haar_orthonormal, seeded, unit_vec};

    fn basis(d: usize, n: usize, seed: u64) -> ComponentSet {
        ComponentSet::from_columns(&haar_orthonormal(&mut seeded(seed), d, n)).unwrap()
    }

    #[test]
    fn preprocess_rank_one() {
        let a = unit_vec(&mut seeded(1), 5);
        let t = Tensor4::rank_one(&a);
        let pre = preprocess(&t, 0.1).unwrap();
        assert_eq!(pre.rank(), 1);
        let want = t.square_matrix() * 0.9;
        assert!((pre.to_dense() - &want).abs().max() < 1e-12);
        let dist = (pre.to_dense() - t.square_matrix()).norm();
        assert!((dist - 0.1).abs() < 1e-12);
        assert!(dist <= 2.0 * 0.1 * 2f64.sqrt());
    }

    #[test]
    fn preprocess_zero_and_bad_eps() {
        let pre = preprocess(&Tensor4::zeros(3), 0.05).unwrap();
        assert_eq!(pre.rank(), 0);
        assert_eq!(pre.to_dense().abs().max(), 0.0);
        assert!(preprocess(&Tensor4::zeros(3), 0.0).is_err());
    }

    #[test]
    fn clip_rect_rank_one_cases() {
        let a = unit_vec(&mut seeded(2), 4);
        let t = Tensor4::rank_one(&a);
        assert!(clip_rect(&t).unwrap().max_abs_diff(&t) < 1e-14);
        let big = t.scale(3.0);
        let e = clip_rect(&big).unwrap().max_abs_diff(&t); assert!(e < 1e-12, "{e}");
    }

    #[test]
    fn clip_rect_bounds_both_unfoldings() {
        let mut rng = seeded(8);
        let t = Tensor4::from_vec(5, crate::rng::gaussian_vec(&mut rng, 625)).unwrap();
        let c = clip_rect(&t).unwrap();
        for plan in [ReshapePlan::rect_123_4(), ReshapePlan::rect_124_3()] {
            let n = oracle::spectral_norm(c.reshape(&plan).matrix());
            assert!(n <= 1.0 + 1e-8, "{plan}: {n}");
        }
    }

    #[test]
    fn contraction_of_rank_one() {
        let a = unit_vec(&mut seeded(3), 6);
        let t = Tensor4::rank_one(&a);
        let c = random_contraction(&t, &mut seeded(4)).unwrap();
        let coef = dot(&c.g, crate::tensor::kron_square(&a).as_slice());
        assert!((c.sigma_top - coef.abs()).abs() < 1e-12, "{} {}", c.sigma_top, coef);
        assert!((corr2(&c.u_left, &a) - 1.0).abs() < 1e-12);
        assert!((corr2(&c.u_right, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_orthogonal_to_first_component() {
        let b = basis(5, 2, 6);
        let t = components_tensor(&b);
        let a1 = crate::tensor::kron_square(b.get(0));
        let mut g = DVector::from_vec(crate::rng::gaussian_vec(&mut seeded(7), 25));
        let proj = g.dot(&a1);
        g -= proj * &a1;
        let c = contract_with(&t, g.as_slice().to_vec()).unwrap();
        assert!((corr2(&c.u_left, b.get(1)) - 1.0).abs() < 1e-10);
        assert!(corr2(&c.u_left, b.get(0)) < 1e-10);
    }

    #[test]
    fn postprocess_fixed_point_and_contraction() {
        let b = basis(6, 3, 9);
        let t = components_tensor(&b);
        let r = postprocess(&t, b.get(0), 0.05).unwrap();
        assert!((corr2(&r.vector, b.get(0)) - 1.0).abs() < 1e-12);

        // ⟨u, a_1⟩² = 0.99 with the rest of u along a_2
        let u: Vec<f64> = b
            .get(0)
            .iter()
            .zip(b.get(1))
            .map(|(x, y)| 0.99f64.sqrt() * x + 0.01f64.sqrt() * y)
            .collect();
        assert!((corr2(&u, b.get(0)) - 0.99).abs() < 1e-12);
        let r = postprocess(&t, &u, 0.05).unwrap();
        assert!(corr2(&r.vector, b.get(0)) >= 1.0 - 1e-9);
    }

    #[test]
    fn postprocess_rejects_weak_candidates() {
        let b = basis(6, 2, 10);
        let t = components_tensor(&b).scale(0.3);
        assert!(postprocess(&t, b.get(0), 0.05).is_none());
    }

    #[test]
    fn orthonormalize_keeps_orthonormal_input() {
        let b = basis(7, 4, 11);
        let o = orthonormalize(&b).unwrap();
        for (x, y) in b.iter().zip(o.iter()) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormalize_opens_symmetric_pair() {
        let angle = 80f64.to_radians();
        let b = ComponentSet::from_vectors(
            2,
            [vec![1.0, 0.0], vec![angle.cos(), angle.sin()]],
        )
        .unwrap();
        let o = orthonormalize(&b).unwrap();
        assert!(o.is_orthonormal(1e-12));
        let moved0 = dot(o.get(0), b.get(0)).acos();
        let moved1 = dot(o.get(1), b.get(1)).acos();
        assert!((moved0 - moved1).abs() < 1e-12);
        assert!((moved0 - 5f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn orthonormalize_rejects_dependent_vectors() {
        let b = ComponentSet::from_vectors(3, [vec![1.0, 0.0, 0.0], vec![-2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(orthonormalize(&b), Err(Error::Degenerate(_))));
        assert!(orthonormalize(&ComponentSet::new(3)).unwrap().is_empty());
    }

    #[test]
    fn subtract_exact_and_empty() {
        let b = basis(4, 3, 12);
        let t = components_tensor(&b);
        let state = subtract_components(WorkingState::new(t.clone()), &b);
        assert!(state.work.frobenius() < 1e-12);
        assert_eq!(state.known.len(), 3);
        let state = subtract_components(WorkingState::new(t.clone()), &ComponentSet::new(4));
        assert_eq!(state.work, t);
    }

    #[test]
    fn power_sum_gap_matches_dense_oracle() {
        let a = basis(4, 2, 13);
        let b = basis(4, 2, 14);
        let diff = components_tensor(&a).sub(&components_tensor(&b));
        let want = oracle::sym_spectral_norm(&diff.square_matrix());
        assert!((power_sum_gap(&a, &b) - want).abs() < 1e-10);
    }

    #[test]
    fn near_orthonormal_examples() {
        assert!(near_orthonormal_check(&basis(6, 4, 15)) < 1e-12);
        let single = ComponentSet::from_vectors(3, [vec![0.0, 3.0, 4.0]]).unwrap();
        assert!(near_orthonormal_check(&single) < 1e-15);

        // Gram = I + 0.1·P for a fixed off-diagonal pattern P
        let k = 4;
        let mut gram = DMatrix::<f64>::identity(k, k);
        for (i, j) in [(0, 1), (1, 2), (0, 3)] {
            gram[(i, j)] = 0.1;
            gram[(j, i)] = 0.1;
        }
        let (values, vectors) = oracle::jacobi_eigen(&gram);
        let root = &vectors
            * DMatrix::from_diagonal(&DVector::from_iterator(k, values.iter().map(|l| l.sqrt())))
            * vectors.transpose();
        let q = haar_orthonormal(&mut seeded(16), 7, k);
        let vectors_ = &q * &root;
        let set = ComponentSet::from_columns(&vectors_).unwrap();
        // from_columns normalizes; the diagonal of Gram is already 1
        let want = values.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
        assert!((near_orthonormal_check(&set) - want).abs() < 1e-10);
    }

    #[test]
    fn zero_tensor_decomposes_to_nothing() {
        let out = full_decompose(&Tensor4::zeros(4), &RecoveryParams::new(0.05, 1)).unwrap();
        assert!(out.components.is_empty());
        assert_eq!(out.trials_used, 0);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn small_noise_free_decomposition() {
        let b = basis(6, 3, 17);
        let t = components_tensor(&b);
        let out = full_decompose(&t, &RecoveryParams::new(0.05, 3)).unwrap();
        assert_eq!(out.components.len(), 3);
        for a in b.iter() {
            assert!(out.components.max_corr2(a) > 0.999);
        }
        assert!(out.components.is_orthonormal(1e-8));
    }
}
