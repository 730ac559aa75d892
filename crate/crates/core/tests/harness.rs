mod support;

use std::fs;

use spectensor::decompose::{corr2, full_decompose, ComponentSet, RecoveryParams};
use spectensor::harness::{
    gen_instance, jennrich_baseline, run_experiment, score, square_spectral_norm,
    ExperimentConfig, JennrichParams, NoiseKind, NoiseModel, CSV_HEADER,
};
use spectensor::rng::{gaussian_vec, haar_orthonormal, seeded, substream};
use support::oracle;

#[test]
fn noise_is_calibrated_for_every_kind() {
    for kind in [NoiseKind::IdentityScaled, NoiseKind::RandomSymmetric, NoiseKind::RandomDenseTensor] {
        for eps in [0.01, 0.1, 0.3] {
            let inst = gen_instance(6, 3, &NoiseModel::new(kind, eps), 7).unwrap();
            let norm = square_spectral_norm(&inst.noise).unwrap();
            assert!((norm - eps).abs() <= 1e-6, "{kind} {eps}: {norm}");
        }
    }
    let inst = gen_instance(8, 4, &NoiseModel::new(NoiseKind::RandomSymmetric, 0.2), 3).unwrap();
    let norm = oracle::sym_spectral_norm(&inst.noise.square_matrix());
    assert!((norm - 0.2).abs() <= 1e-6);
    let clean = inst.tensor.sub(&inst.noise);
    let s = spectensor::decompose::components_tensor(&inst.truth);
    assert!(clean.max_abs_diff(&s) < 1e-14);
}

#[test]
fn instances_are_reproducible() {
    let noise = NoiseModel::new(NoiseKind::RandomDenseTensor, 0.1);
    assert_eq!(gen_instance(5, 2, &noise, 9).unwrap(), gen_instance(5, 2, &noise, 9).unwrap());
    assert_ne!(
        gen_instance(5, 2, &noise, 9).unwrap().tensor,
        gen_instance(5, 2, &noise, 10).unwrap().tensor
    );
}

/// Best total corr² over all injective assignments.
fn best_assignment(recovered: &ComponentSet, truth: &ComponentSet) -> f64 {
    fn go(i: usize, used: &mut Vec<bool>, c: &[Vec<f64>]) -> f64 {
        if i == c.len() {
            return 0.0;
        }
        let mut best = go(i + 1, used, c);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(c[i][j] + go(i + 1, used, c));
                used[j] = false;
            }
        }
        best
    }
    let c: Vec<Vec<f64>> = recovered
        .iter()
        .map(|b| truth.iter().map(|a| corr2(b, a)).collect())
        .collect();
    go(0, &mut vec![false; truth.len()], &c)
}

#[test]
fn greedy_matching_agrees_with_exhaustive_search() {
    let mut rng = seeded(5);
    let truth = ComponentSet::from_columns(&haar_orthonormal(&mut rng, 7, 5)).unwrap();
    for (trial, picks) in [[3usize, 0, 4], [1, 2, 0], [4, 3, 2]].iter().enumerate() {
        let recovered = ComponentSet::from_vectors(
            7,
            picks.iter().map(|&j| {
                let noise = gaussian_vec(&mut substream(trial as u64, j as u64), 7);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                truth.get(j).iter().zip(&noise).map(|(a, n)| sign * a + 0.1 * n).collect::<Vec<_>>()
            }),
        )
        .unwrap();
        let m = score(&recovered, &truth).unwrap();
        assert_eq!(m.pairs.len(), 3);
        for &(r, t, c) in &m.pairs {
            assert_eq!(t, picks[r]);
            assert!((0.0..=1.0).contains(&c));
        }
        let greedy: f64 = m.pairs.iter().map(|p| p.2).sum();
        assert!((greedy - best_assignment(&recovered, &truth)).abs() < 1e-12);
        assert_eq!(m.per_truth().iter().filter(|&&c| c == 0.0).count(), 2);
    }
}

#[test]
fn pipeline_beats_the_baseline_on_structured_noise() {
    for (kind, eps) in [(NoiseKind::IdentityScaled, 0.1), (NoiseKind::RandomDenseTensor, 0.2)] {
        let mut wins = 0;
        for seed in 0..10 {
            let inst = gen_instance(16, 8, &NoiseModel::new(kind, eps), seed).unwrap();
            let ours = full_decompose(&inst.tensor, &RecoveryParams::new(eps, seed)).unwrap();
            let base =
                jennrich_baseline(&inst.tensor, &JennrichParams::default(), &mut substream(seed, 2))
                    .unwrap();
            let a = score(&ours.components, &inst.truth).unwrap().min_corr2;
            let b = score(&base, &inst.truth).unwrap().min_corr2;
            if a > b {
                wins += 1;
            }
        }
        assert!(wins > 5, "{kind}: {wins}/10");
    }
}

const SINGLE: &str = r#"
[grid]
d = [8]
n = [4]
eps = [0.0]
noise = ["none"]
seeds = [3]
algorithm = "pipeline"
"#;

#[test]
fn single_noise_free_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(SINGLE).unwrap();
    let reports = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].recovered, 4);
    assert!(reports[0].matching.min_corr2 >= 0.999);

    let mut rd = csv::Reader::from_path(dir.path().join("results.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][5], "pipeline");
    assert_eq!(&rows[0][6], "4");
    assert!(rows[0][7].parse::<f64>().unwrap() >= 0.999);
    assert_eq!(fs::read_dir(dir.path().join("cells")).unwrap().count(), 1);
}

#[test]
fn empty_grid_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(
        "[grid]\nd = []\nn = []\neps = []\nnoise = []\nseeds = []\n",
    )
    .unwrap();
    assert!(run_experiment(&cfg, dir.path()).unwrap().is_empty());
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
}

const GRID: &str = r#"
csv = "grid.csv"

[grid]
d = [8]
n = [4]
eps = [0.05, 0.1]
noise = ["identity_scaled", "random_dense_tensor"]
seeds = [1]
algorithm = "pipeline"
"#;

#[test]
fn grid_reruns_are_byte_identical() {
    let cfg = ExperimentConfig::from_toml(GRID).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    assert_eq!(first.len(), 4);
    let csv_a = fs::read(a.path().join("grid.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.path().join("grid.csv")).unwrap());
    assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), 5);
    for entry in fs::read_dir(a.path().join("cells")).unwrap() {
        let entry = entry.unwrap();
        let other = b.path().join("cells").join(entry.file_name());
        assert_eq!(fs::read(entry.path()).unwrap(), fs::read(other).unwrap());
    }
}

#[test]
fn both_algorithms_share_an_instance() {
    let text = SINGLE.replace("algorithm = \"pipeline\"", "algorithm = \"both\"");
    let dir = tempfile::tempdir().unwrap();
    let reports = run_experiment(&ExperimentConfig::from_toml(&text).unwrap(), dir.path()).unwrap();
    let algos: Vec<&str> = reports.iter().map(|r| r.algo.as_str()).collect();
    assert_eq!(algos, ["pipeline", "jennrich"]);
    assert!(reports.iter().all(|r| r.recovered == 4));
}
