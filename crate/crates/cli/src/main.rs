use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use spectensor::decompose::{full_decompose, ComponentSet, RecoveryParams};
use spectensor::dictlearn::{
    generate_samples, learn_dictionary, random_dictionary, DictParams, NiceDistSpec, Samples,
};
use spectensor::harness::{gen_instance, run_experiment_file, score, NoiseKind, NoiseModel};
use spectensor::{dense, ReshapePlan, Tensor4};

#[derive(Parser)]
#[command(name = "spectensor", version, about = "Robust orthogonal 4-tensor decomposition")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "SPECTENSOR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tensor `Σ a_i^{⊗4} + E`.
    Gen(GenArgs),
    /// Write samples `y = A x` with sparse coefficients.
    GenSamples(GenSamplesArgs),
    /// Recover components from a tensor.
    Decompose(DecomposeArgs),
    /// Learn an orthonormal dictionary from samples.
    Dictlearn(DictlearnArgs),
    /// Run an experiment grid from a TOML config.
    Bench(BenchArgs),
    /// Print the spectrum of an unfolding, to help pick eps.
    Spectrum(SpectrumArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// none, identity_scaled, random_symmetric, random_dense_tensor or planted_cancel.
    #[arg(long, default_value = "none")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the planted components as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct GenSamplesArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Support probability of each coefficient.
    #[arg(long)]
    p: f64,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the dictionary columns as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    tensor: PathBuf,
    /// Bound on the spectral norm of the noise.
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials_per_round: Option<usize>,
    /// Cap on contractions per round.
    #[arg(long)]
    max_trials: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    dedup_corr: Option<f64>,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth JSON to score against.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct DictlearnArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_components: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Whiten first, for dictionaries with independent but not orthonormal columns.
    #[arg(long)]
    whiten: bool,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long)]
    max_trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    tensor: PathBuf,
    /// Unfolding, e.g. `12/34` or `{1,2,3}{4}`.
    #[arg(long, default_value = "12/34")]
    plan: ReshapePlan,
    /// Only print the largest values.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    components: Vec<Vec<f64>>,
}

fn write_truth(path: &Path, truth: &ComponentSet) -> Result<()> {
    let file = TruthFile {
        components: truth.vectors().to_vec(),
    };
    write_json(path, &file)
}

fn read_truth(path: &Path, dim: usize) -> Result<ComponentSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: TruthFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(ComponentSet::from_vectors(dim, file.components)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn report_match(recovered: &ComponentSet, truth: Option<&Path>) -> Result<()> {
    if let Some(path) = truth {
        let truth = read_truth(path, recovered.dim())?;
        let m = score(recovered, &truth)?;
        eprintln!(
            "matched {}/{} at corr² >= 0.9, min corr² {:.6}, mean corr² {:.6}",
            m.recovered_at(0.9),
            m.truth_total,
            m.min_corr2,
            m.mean_corr2
        );
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let inst = gen_instance(args.d, args.n, &NoiseModel::new(args.noise, args.eps), args.seed)?;
    inst.tensor.write_t4(&args.out)?;
    if let Some(p) = &args.truth {
        write_truth(p, &inst.truth)?;
    }
    info!("wrote {}", args.out.display());
    Ok(())
}

fn gen_samples(args: GenSamplesArgs) -> Result<()> {
    let a = random_dictionary(args.d, args.n, args.seed)?;
    let spec = NiceDistSpec::new(args.n, args.p)?;
    let samples = generate_samples(&a, &spec, args.m, args.seed)?;
    samples.write_smp(&args.out)?;
    if let Some(p) = &args.truth {
        write_truth(p, &ComponentSet::from_columns(&a)?)?;
    }
    info!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn decompose(args: DecomposeArgs) -> Result<()> {
    let t = Tensor4::read_t4(&args.tensor)?;
    let mut params = RecoveryParams::new(args.eps, args.seed);
    params.trials_per_round = args.trials_per_round;
    params.max_trials = args.max_trials;
    params.max_rounds = args.max_rounds;
    params.dedup_corr = args.dedup_corr;
    let out = full_decompose(&t, &params)?;
    for w in &out.warnings {
        warn!("{w}");
    }
    emit(args.out.as_deref(), &out.report())?;
    report_match(&out.components, args.truth.as_deref())
}

fn dictlearn(args: DictlearnArgs) -> Result<()> {
    let samples = Samples::read_smp(&args.samples)?;
    let mut params = DictParams::new(args.tau, args.seed);
    params.alpha = args.alpha;
    params.n_components = args.n_components;
    params.eps = args.eps;
    params.whiten = args.whiten;
    params.min_samples = args.min_samples;
    params.max_trials = args.max_trials;
    let dict = learn_dictionary(&samples, &params)?;
    for w in &dict.warnings {
        warn!("{w}");
    }
    emit(args.out.as_deref(), &dict.report())?;
    report_match(&dict.components, args.truth.as_deref())
}

fn bench(args: BenchArgs) -> Result<()> {
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let reports = run_experiment_file(&args.config, &args.out_dir)?;
    for r in &reports {
        println!(
            "d={} n={} eps={} noise={} seed={} {}: recovered {}/{} min corr² {:.4}",
            r.d, r.n, r.eps, r.noise, r.seed, r.algo, r.recovered, r.n, r.matching.min_corr2
        );
    }
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let t = Tensor4::read_t4(&args.tensor)?;
    let m = t.reshape(&args.plan).into_matrix();
    let symmetric = m.is_square() && {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        (&m - m.transpose()).amax() <= 1e-12 * scale
    };
    let values = if symmetric {
        dense::sym_eigen_desc(&m)?.0
    } else {
        dense::singular_values(&m)?
    };
    let kind = if symmetric { "eigenvalues" } else { "singular values" };
    println!("# {kind} of the {} unfolding", args.plan);
    for v in values.iter().take(args.top.unwrap_or(usize::MAX)) {
        println!("{v:.12e}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::GenSamples(a) => gen_samples(a),
        Command::Decompose(a) => decompose(a),
        Command::Dictlearn(a) => dictlearn(a),
        Command::Bench(a) => bench(a),
        Command::Spectrum(a) => spectrum(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
