//! Batch front end: training, prediction, evaluation, the four-way
//! ablation, grid search, and synthetic data generation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! failure. `RANKPI_THREADS` caps worker parallelism. All commands are
//! deterministic given their flags; anything timing-dependent goes to
//! stderr only.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankpi::data::{load_dataset, LabelSet, MultiLabelDataset};
use rankpi::dual::{TrainConfig, Variant};
use rankpi::error::{Error, Result};
use rankpi::experiment::{grid_search, run_ablation, GridSpec};
use rankpi::kernel::{median_gamma, KernelKind, KernelSpec};
use rankpi::metrics::evaluate;
use rankpi::model::{load_model, save_model, train, TrainOutcome};
use rankpi::synth::{generate_to_files, SynthParams};

#[derive(Parser)]
#[command(name = "rankpi", version, about = "Multi-label ranking SVM with privileged information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on an available/privileged dataset pair.
    Train(TrainArgs),
    /// Predict label sets for a dataset with a trained model.
    Predict(PredictArgs),
    /// Evaluate a predictions file against ground-truth labels.
    Evaluate(EvaluateArgs),
    /// Train and evaluate all four variants side by side.
    Ablate(AblateArgs),
    /// Exhaustive cross-validated hyperparameter search.
    Gridsearch(GridArgs),
    /// Generate a synthetic available/privileged dataset pair.
    Synth(SynthArgs),
}

#[derive(Args)]
struct KernelFlags {
    /// Kernel for the available feature space.
    #[arg(long, default_value = "linear")]
    kernel: String,
    /// Kernel for the privileged feature space.
    #[arg(long = "priv-kernel", default_value = "linear")]
    priv_kernel: String,
    /// Kernel width/scale; defaults to the median heuristic for rbf.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "priv-gamma")]
    priv_gamma: Option<f64>,
    /// Polynomial degree (available space).
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long = "priv-degree", default_value_t = 2)]
    priv_degree: u32,
    /// Polynomial offset (available space).
    #[arg(long, default_value_t = 1.0)]
    coef0: f64,
    #[arg(long = "priv-coef0", default_value_t = 1.0)]
    priv_coef0: f64,
}

#[derive(Args)]
struct ConfigFlags {
    /// Ranking slack weight (available space).
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Ranking slack weight (privileged space).
    #[arg(long = "Cstar", default_value_t = 1.0)]
    c_star: f64,
    /// Similarity coupling weight.
    #[arg(long = "D", default_value_t = 1.0)]
    d: f64,
    /// Similarity tolerance.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Relative duality-gap stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_iter: usize,
    /// Print a solver log line to stderr every N iterations (0 = off).
    #[arg(long = "log-every", default_value_t = 0)]
    log_every: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Available-features file (labels embedded).
    #[arg(long)]
    data: PathBuf,
    /// Privileged-features file aligned with --data.
    #[arg(long = "priv")]
    privileged: Option<PathBuf>,
    /// Training variant: full, ml, pi, or br.
    #[arg(long, default_value = "full")]
    variant: String,
    #[command(flatten)]
    kernels: KernelFlags,
    #[command(flatten)]
    config: ConfigFlags,
    /// Output model path.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output predictions file (one comma-separated label list per line).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth dataset file (labels are read, features ignored).
    #[arg(long)]
    truth: PathBuf,
    /// Predictions file produced by `predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Also print the per-label F-measure table.
    #[arg(long = "per-label")]
    per_label: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Training available-features file.
    #[arg(long)]
    train: PathBuf,
    /// Training privileged-features file.
    #[arg(long = "priv")]
    privileged: Option<PathBuf>,
    /// Test available-features file.
    #[arg(long)]
    test: PathBuf,
    /// Ground-truth labels for the test set (may equal --test).
    #[arg(long = "test-truth")]
    test_truth: PathBuf,
    #[command(flatten)]
    kernels: KernelFlags,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "priv")]
    privileged: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    variant: String,
    #[command(flatten)]
    kernels: KernelFlags,
    /// Candidate C values (comma-separated).
    #[arg(long = "C", value_delimiter = ',', default_value = "1.0")]
    c: Vec<f64>,
    #[arg(long = "Cstar", value_delimiter = ',', default_value = "1.0")]
    c_star: Vec<f64>,
    #[arg(long = "D", value_delimiter = ',', default_value = "1.0")]
    d: Vec<f64>,
    /// Candidate kernel gammas (comma-separated; applied to both spaces).
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_iter: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    d: usize,
    /// Available-view noise scale.
    #[arg(long)]
    sigma: f64,
    /// Privileged-view noise scale (at most --sigma).
    #[arg(long = "sigma-star")]
    sigma_star: f64,
    /// Present labels per instance.
    #[arg(long)]
    k: usize,
    /// Output prefix; writes <prefix>.data, <prefix>.priv, <prefix>.manifest.
    #[arg(long = "out-prefix")]
    out_prefix: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParam(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn init_threads() {
    if let Ok(value) = std::env::var("RANKPI_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid RANKPI_THREADS='{value}'"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap uses "errors" for --help/--version too
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Gridsearch(args) => cmd_gridsearch(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn feature_rows(ds: &MultiLabelDataset, privileged: bool) -> Vec<Vec<f64>> {
    ds.instances()
        .iter()
        .map(|inst| {
            if privileged {
                inst.x_star().unwrap_or(&[]).to_vec()
            } else {
                inst.x().to_vec()
            }
        })
        .collect()
}

fn resolve_kernel(
    kind: &str,
    gamma: Option<f64>,
    degree: u32,
    coef0: f64,
    ds: &MultiLabelDataset,
    privileged: bool,
) -> Result<KernelSpec> {
    let kind = KernelKind::parse(kind)?;
    let spec = match kind {
        KernelKind::Linear => KernelSpec::linear(),
        KernelKind::Rbf => {
            let gamma = match gamma {
                Some(g) => g,
                None => median_gamma(&feature_rows(ds, privileged))?,
            };
            KernelSpec::rbf(gamma)
        }
        KernelKind::Polynomial => KernelSpec::polynomial(gamma.unwrap_or(1.0), degree, coef0),
    };
    spec.validate()?;
    Ok(spec)
}

fn resolve_kernels(
    flags: &KernelFlags,
    ds: &MultiLabelDataset,
    needs_priv: bool,
) -> Result<(KernelSpec, Option<KernelSpec>)> {
    let avail = resolve_kernel(&flags.kernel, flags.gamma, flags.degree, flags.coef0, ds, false)?;
    let privileged = if needs_priv && ds.has_privileged() {
        Some(resolve_kernel(
            &flags.priv_kernel,
            flags.priv_gamma,
            flags.priv_degree,
            flags.priv_coef0,
            ds,
            true,
        )?)
    } else {
        None
    };
    Ok((avail, privileged))
}

fn build_config(flags: &ConfigFlags, variant: Variant) -> TrainConfig {
    TrainConfig {
        c: flags.c,
        c_star: flags.c_star,
        d: flags.d,
        epsilon: flags.epsilon,
        tol: flags.tol,
        max_iter: flags.max_iter,
        variant,
    }
}

fn print_train_summary(ds: &MultiLabelDataset, outcome: &TrainOutcome) {
    let m = &outcome.model;
    let s = &outcome.solve;
    println!("variant {}", m.variant().tag());
    println!(
        "instances {}  labels {}  d {}  d_star {}",
        ds.n(),
        ds.q(),
        ds.d(),
        ds.d_star()
    );
    println!(
        "solver: iterations {}  converged {}  objective {:.9e}  gap {:.9e}",
        s.iterations, s.converged, s.final_objective, s.final_gap
    );
    println!("support vectors {}", m.n_support());
    print!("{}", outcome.slacks.render_summary());
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.privileged.as_deref(), None)?;
    let variant = Variant::parse(&args.variant)?;
    let cfg = build_config(&args.config, variant);
    let (kernel_avail, kernel_priv) = resolve_kernels(&args.kernels, &ds, variant.uses_privileged())?;

    let outcome = train(&ds, &cfg, &kernel_avail, kernel_priv.as_ref())?;
    eprint!("{}", outcome.solve.render_log(args.config.log_every));
    eprintln!("training took {:.2}s", outcome.solve.wall_time);
    print_train_summary(&ds, &outcome);
    save_model(&outcome.model, &args.model)?;
    println!("model written to {}", args.model.display());
    Ok(())
}

fn format_label_line(labels: &LabelSet) -> String {
    let parts: Vec<String> = labels.iter().map(|k| k.to_string()).collect();
    parts.join(",")
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data, None, None)?;
    if ds.d() > model.d() {
        return Err(Error::Data(format!(
            "prediction data has {} features but the model expects {}",
            ds.d(),
            model.d()
        )));
    }
    let mut out = String::new();
    for inst in ds.instances() {
        // pad with zeros if the sparse file never touched trailing columns
        let mut x = inst.x().to_vec();
        x.resize(model.d(), 0.0);
        let pred = model.predict(&x)?;
        out.push_str(&format_label_line(&pred));
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    eprintln!("predicted {} instances", ds.n());
    Ok(())
}

fn read_predictions(path: &Path, q: usize) -> Result<Vec<LabelSet>> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            return Err(Error::parse(
                &display,
                lineno,
                "empty prediction line (predicted sets are never empty)",
            ));
        }
        let mut labels = Vec::new();
        for tok in line.split(',') {
            let value: usize = tok.trim().parse().map_err(|_| {
                Error::parse(&display, lineno, format!("malformed label '{tok}'"))
            })?;
            labels.push(value);
        }
        out.push(LabelSet::new(q, labels)?);
    }
    Ok(out)
}

fn max_pred_label(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .split([',', '\n'])
        .filter_map(|tok| tok.trim().parse::<usize>().ok())
        .max()
        .map(|m| m + 1)
        .unwrap_or(0))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let truth_ds = load_dataset(&args.truth, None, None)?;
    let q = truth_ds.q().max(max_pred_label(&args.pred)?);
    let truths: Vec<LabelSet> = truth_ds
        .instances()
        .iter()
        .map(|inst| LabelSet::new(q, inst.labels().iter()))
        .collect::<Result<_>>()?;
    let preds = read_predictions(&args.pred, q)?;
    let report = evaluate(&truths, &preds)?;
    print!("{}", report.render_table());
    print!("{}", report.render_kv());
    if args.per_label {
        print!("{}", report.render_per_label(None));
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let train_ds = load_dataset(&args.train, args.privileged.as_deref(), None)?;
    let test_ds = load_dataset(&args.test, None, Some(train_ds.q()))?;
    let truth_ds = load_dataset(&args.test_truth, None, Some(train_ds.q()))?;
    if truth_ds.n() != test_ds.n() {
        return Err(Error::Data(format!(
            "test set has {} instances but test-truth has {}",
            test_ds.n(),
            truth_ds.n()
        )));
    }
    let truths: Vec<LabelSet> = truth_ds
        .instances()
        .iter()
        .map(|inst| inst.labels().clone())
        .collect();

    let cfg = build_config(&args.config, Variant::Full);
    let (kernel_avail, kernel_priv) = resolve_kernels(&args.kernels, &train_ds, true)?;
    let run_name = args
        .train
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    let table = run_ablation(
        &train_ds,
        &test_ds,
        &truths,
        &cfg,
        &kernel_avail,
        kernel_priv.as_ref(),
        &run_name,
    )?;
    print!("{}", table.render_table());
    print!("{}", table.render_kv());
    Ok(())
}

fn cmd_gridsearch(args: GridArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.privileged.as_deref(), None)?;
    let variant = Variant::parse(&args.variant)?;
    let cfg = TrainConfig {
        epsilon: args.epsilon,
        tol: args.tol,
        max_iter: args.max_iter,
        variant,
        ..TrainConfig::default()
    };
    let (kernel_avail, kernel_priv) = resolve_kernels(&args.kernels, &ds, variant.uses_privileged())?;
    let grid = GridSpec {
        c: args.c,
        c_star: args.c_star,
        d: args.d,
        gamma: args.gamma,
        folds: args.folds,
        seed: args.seed,
    };
    let result = grid_search(&ds, &cfg, &kernel_avail, kernel_priv.as_ref(), &grid)?;
    print!("{}", result.render());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let params = SynthParams {
        seed: args.seed,
        n: args.n,
        q: args.q,
        d: args.d,
        sigma: args.sigma,
        sigma_star: args.sigma_star,
        labels_per_instance: args.k,
    };
    let files = generate_to_files(&params, &args.out_prefix)?;
    println!("available {}", files.available.display());
    println!("privileged {}", files.privileged.display());
    println!("manifest {}", files.manifest.display());
    Ok(())
}
