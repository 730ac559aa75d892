mod support;

use nalgebra::{DMatrix, DVector};
use spectensor::decompose::{
    clip_rect, components_tensor, full_decompose, near_orthonormal_check, orthonormalize,
    postprocess, power_sum_gap, preprocess, random_contraction, ComponentSet, RecoveryParams,
};
use spectensor::harness::{gen_instance, score, NoiseKind, NoiseModel};
use spectensor::rng::{gaussian_matrix, haar_orthonormal, seeded, substream, stream_id};
use spectensor::tensor::{ReshapePlan, Tensor4};
use support::oracle;

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

#[test]
fn preprocess_respects_frobenius_bound() {
    for seed in 0..5 {
        let inst =
            gen_instance(12, 6, &NoiseModel::new(NoiseKind::RandomSymmetric, 0.05), seed).unwrap();
        let pre = preprocess(&inst.tensor, 0.05).unwrap();
        let s = components_tensor(&inst.truth).square_matrix();
        let dist = (pre.to_dense() - s).norm();
        assert!(dist <= 2.0 * 0.05 * 12f64.sqrt(), "seed {seed}: {dist}");
    }
}

#[test]
fn preprocess_matches_dense_eigen_oracle() {
    let inst = gen_instance(5, 3, &NoiseModel::new(NoiseKind::RandomSymmetric, 0.1), 8).unwrap();
    let pre = preprocess(&inst.tensor, 0.1).unwrap().to_dense();
    let expected = oracle::psd_truncate(&inst.tensor.square_matrix(), 0.1);
    assert!((pre - expected).abs().max() < 1e-10);
}

#[test]
fn clip_rect_on_random_tensor() {
    let mut rng = seeded(3);
    let d: usize = 8;
    let data: Vec<f64> = gaussian_matrix(&mut rng, d.pow(4), 1).iter().map(|x| x * 0.05).collect();
    let t = Tensor4::from_vec(d, data).unwrap();
    let clipped = clip_rect(&t).unwrap();
    for plan in [ReshapePlan::rect_123_4(), ReshapePlan::rect_124_3()] {
        assert!(oracle::spectral_norm(t.reshape(&plan).matrix()) > 1.0);
        assert!(oracle::spectral_norm(clipped.reshape(&plan).matrix()) <= 1.0 + 1e-8);
    }
    // the first clip is exactly the oracle singular-value clip
    let first = oracle::clip_singular(t.reshape(&ReshapePlan::rect_123_4()).matrix(), 1.0);
    let first = Tensor4::from_unfolding(&first, &ReshapePlan::rect_123_4(), d).unwrap();
    let second = oracle::clip_singular(first.reshape(&ReshapePlan::rect_124_3()).matrix(), 1.0);
    let second = Tensor4::from_unfolding(&second, &ReshapePlan::rect_124_3(), d).unwrap();
    assert!(clipped.max_abs_diff(&second) < 1e-10);
}

#[test]
fn every_component_is_reached_by_some_contraction() {
    let inst = gen_instance(10, 5, &NoiseModel::none(), 11).unwrap();
    let clipped = clip_rect(&inst.tensor).unwrap();
    let mut hit = [false; 5];
    for trial in 0..200 {
        let c = random_contraction(&clipped, &mut substream(5, stream_id(0, trial))).unwrap();
        for (i, a) in inst.truth.iter().enumerate() {
            if spectensor::decompose::corr2(&c.u_left, a) >= 0.99 {
                hit[i] = true;
            }
        }
    }
    assert!(hit.iter().all(|&h| h), "{hit:?}");
}

/// `√0.99 a_1 + √0.01 a_2`.
fn tilted(truth: &ComponentSet) -> Vec<f64> {
    truth
        .get(0)
        .iter()
        .zip(truth.get(1))
        .map(|(x, y)| 0.99f64.sqrt() * x + 0.01f64.sqrt() * y)
        .collect()
}

#[test]
fn postprocess_sharpens_a_good_guess() {
    let inst = gen_instance(8, 4, &NoiseModel::none(), 2).unwrap();
    let u = tilted(&inst.truth);
    let v = postprocess(&inst.tensor, &u, 0.05).unwrap();
    assert!(spectensor::decompose::corr2(&v.vector, inst.truth.get(0)) >= 1.0 - 1e-9);

    for kind in [NoiseKind::IdentityScaled, NoiseKind::RandomSymmetric, NoiseKind::RandomDenseTensor] {
        let inst = gen_instance(8, 4, &NoiseModel::new(kind, 0.05), 2).unwrap();
        let v = postprocess(&inst.tensor, &tilted(&inst.truth), 0.05).unwrap();
        let c = spectensor::decompose::corr2(&v.vector, inst.truth.get(0));
        assert!(c >= 0.85, "{kind}: {c}");
    }
}

#[test]
fn orthonormalize_is_no_farther_than_the_truth() {
    let mut rng = seeded(21);
    let (d, k) = (9, 5);
    let a = haar_orthonormal(&mut rng, d, k);
    // perturb each column by a vector of squared norm 0.01
    let noise = gaussian_matrix(&mut rng, d, k);
    let mut b = a.clone();
    for j in 0..k {
        let n = noise.column(j);
        b.set_column(j, &(a.column(j) + n * (0.1 / n.norm())));
    }
    let b_set = ComponentSet::from_vectors(d, (0..k).map(|j| column(&b, j))).unwrap();
    let out = orthonormalize(&b_set).unwrap();
    assert!(out.is_orthonormal(1e-10));
    let out_m = out.to_matrix();
    // vectors are renormalized on entry, so compare against the normalized columns
    let b_unit = b_set.to_matrix();
    assert!((&out_m - &b_unit).norm() <= (&a - &b_unit).norm());

    // the polar factor from the oracle SVD
    let (_, u, v) = oracle::jacobi_svd(&b_unit);
    let polar = u * v.transpose();
    assert!((out_m - polar).abs().max() < 1e-10);
}

#[test]
fn subtraction_error_of_tilted_pairs() {
    let mut rng = seeded(4);
    let (d, k, eps) = (10, 4, 0.04f64);
    let q = haar_orthonormal(&mut rng, d, 2 * k);
    let a = ComponentSet::from_vectors(d, (0..k).map(|j| column(&q, j))).unwrap();
    let b = ComponentSet::from_vectors(
        d,
        (0..k).map(|j| {
            let v = q.column(j) * (1.0 - eps).sqrt() + q.column(k + j) * eps.sqrt();
            v.iter().copied().collect::<Vec<_>>()
        }),
    )
    .unwrap();
    let diff = components_tensor(&a).sub(&components_tensor(&b)).square_matrix();
    let gap = oracle::sym_spectral_norm(&diff);
    assert!(gap <= 0.8, "{gap}");
    assert!((power_sum_gap(&a, &b) - gap).abs() < 1e-9);
}

#[test]
fn recovers_under_scaled_identity_noise() {
    let inst = gen_instance(16, 8, &NoiseModel::new(NoiseKind::IdentityScaled, 0.1), 6).unwrap();
    let out = full_decompose(&inst.tensor, &RecoveryParams::new(0.1, 6)).unwrap();
    assert!(out.components.is_orthonormal(1e-8));
    let m = score(&out.components, &inst.truth).unwrap();
    assert!(m.recovered_at(0.7) >= 7);
    assert!(m.recovered_at(0.97) >= 7, "{:?}", m.per_truth());
}

#[test]
fn cancelled_components_stay_hidden() {
    let inst = gen_instance(12, 6, &NoiseModel::new(NoiseKind::PlantedCancel, 0.5), 1).unwrap();
    // ceil(0.25 * 6) = 2 components are cancelled
    let out = full_decompose(&inst.tensor, &RecoveryParams::new(0.05, 1)).unwrap();
    let per = score(&out.components, &inst.truth).unwrap().per_truth();
    assert!(per[..2].iter().all(|&c| c < 0.5), "{per:?}");
    assert!(per[2..].iter().all(|&c| c > 0.999), "{per:?}");
}

#[test]
fn near_orthonormal_matches_gram_eigenvalues() {
    let mut rng = seeded(13);
    let (d, n) = (8, 4);
    let q = haar_orthonormal(&mut rng, d, n);
    let g = gaussian_matrix(&mut rng, n, n);
    let mut delta = (&g + g.transpose()) * 0.5;
    delta.fill_diagonal(0.0);
    delta *= 0.1 / oracle::sym_spectral_norm(&delta);
    let gram = DMatrix::identity(n, n) + &delta;
    let (values, vectors) = oracle::jacobi_eigen(&gram);
    let root = &vectors
        * DMatrix::from_diagonal(&DVector::from_iterator(n, values.iter().map(|l| l.sqrt())))
        * vectors.transpose();
    let a = q * root;
    let set = ComponentSet::from_vectors(d, (0..n).map(|j| column(&a, j))).unwrap();
    let expected = values.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
    assert!((near_orthonormal_check(&set) - expected).abs() < 1e-10);
    assert!((expected - 0.1).abs() < 1e-10);
}

#[test]
fn top_singular_vector_of_spiked_matrix() {
    // M = c vvᵀ + N with ‖N‖ < c/2: the top eigenvector u obeys ⟨u, v⟩² ≥ 1 - 2‖N‖/c
    let mut rng = seeded(30);
    let d = 12;
    for trial in 0..10 {
        let v = column(&haar_orthonormal(&mut rng, d, 1), 0);
        let g = gaussian_matrix(&mut rng, d, d);
        let mut noise = (&g + g.transpose()) * 0.5;
        let target = 0.05 + 0.03 * trial as f64;
        noise *= target / oracle::sym_spectral_norm(&noise);
        let vv = DVector::from_vec(v.clone());
        let m = &vv * vv.transpose() + &noise;
        let (_, u, _) = spectensor::spectral::top_singular_pair(&m).unwrap();
        let c2 = spectensor::decompose::corr2(&u, &v);
        assert!(c2 >= 1.0 - 2.0 * target, "‖N‖ = {target}: {c2}");
    }
}
