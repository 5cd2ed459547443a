use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use refcal::datagen::{corrupt, generate_blobs, read_dataset, write_dataset, BlobConfig, Split};
use refcal::exec::ExecMode;
use refcal::losses::CalibrationLossSpec;
use refcal::metrics::ProbabilityBatch;
use refcal::network::{read_checkpoint, write_checkpoint, NetworkParams};
use refcal::pipeline::{
    confusion_rows, evaluate, fingerprint, insight_scenario, pitfall_transform, predict, read_predictions,
    train_baseline, train_refcal, write_predictions, write_training_log, MetricConfig, ModelSelection,
    PredictionDump, ReliabilityReport, TrainConfig, INSIGHT_ROWS,
};
use refcal::verify::{self, VerifyConfig};
use refcal::RefcalError;

const DEFAULT_SEED: u64 = 1234;

#[derive(Parser)]
#[command(name = "refcal", version, about = "Calibration and refinement toolkit for classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded long-tailed blob dataset.
    Generate(GenerateArgs),
    /// Train a model and write checkpoint, log, report and predictions.
    Train(TrainArgs),
    /// Compute a reliability report from a prediction dump or a checkpoint.
    Evaluate(EvaluateArgs),
    /// Run the property sweep (bound, identities, gradients, metric oracles).
    Verify(VerifyArgs),
    /// Replace predictions by per-class confusion rows and compare reports.
    Pitfall(PitfallArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Random seed; falls back to REFCAL_SEED, then 1234.
    #[arg(long, env = "REFCAL_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    ace_ranges: u64,
    #[arg(long, default_value_t = 0.05, value_parser = positive_f64)]
    smece_bandwidth: f64,
}

impl MetricArgs {
    fn config(&self) -> MetricConfig {
        MetricConfig {
            bins: self.bins as usize,
            ace_ranges: self.ace_ranges as usize,
            smece_bandwidth: self.smece_bandwidth,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 1000)]
    n_max: usize,
    /// Tail-to-head class size ratio, in (0, 1].
    #[arg(long, default_value_t = 0.1)]
    imbalance: f64,
    #[arg(long, default_value_t = 8)]
    dims: usize,
    #[arg(long, default_value_t = 4.0, value_parser = positive_f64)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Add Gaussian noise of this severity (1-5) to the test split.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    severity: Option<u8>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Regime {
    Refcal,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LossKind {
    Nll,
    Ls,
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SelectionKind {
    BestVal,
    Final,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory receiving model.ckpt, train_log.csv, report.json,
    /// predictions.txt and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Regime::Refcal)]
    regime: Regime,
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Fit a temperature on the validation split after training.
    #[arg(long)]
    ts: bool,
    #[arg(long)]
    stage1_epochs: Option<usize>,
    #[arg(long)]
    stage2_epochs: Option<usize>,
    #[arg(long, value_enum)]
    selection: Option<SelectionKind>,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction dump to evaluate (no model needed).
    #[arg(long, conflicts_with_all = ["checkpoint", "data"])]
    predictions: Option<PathBuf>,
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    #[arg(long)]
    out: PathBuf,
    /// With --checkpoint, also write the prediction dump of the split.
    #[arg(long, requires = "checkpoint")]
    predictions_out: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random pairs per dimension and random batches for the bound sweep.
    #[arg(long, default_value_t = 1000)]
    batches: usize,
    #[arg(long, default_value_t = 100)]
    gradient_instances: usize,
    #[arg(long, default_value_t = 100)]
    metric_instances: usize,
    /// Flip the sign of every analytic gradient; the sweep must then fail.
    #[arg(long)]
    self_test: bool,
    #[arg(long)]
    sequential: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct PitfallArgs {
    /// Test-set prediction dump to transform.
    #[arg(long, requires = "validation", conflicts_with = "scenario")]
    predictions: Option<PathBuf>,
    /// Validation prediction dump the confusion rows are computed from.
    #[arg(long, requires = "predictions")]
    validation: Option<PathBuf>,
    /// Use a generated binary scenario of this size with the fixed rows
    /// (0.7, 0.3) / (0.2, 0.8) instead of input dumps.
    #[arg(long, required_unless_present = "predictions")]
    scenario: Option<usize>,
    /// Directory receiving before.json, after.json, delta.json,
    /// after_predictions.txt and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    seed: SeedArg,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|_| format!("`{s}` is not one of train, val, test"))
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
enum Failure {
    /// Invalid flags or configuration.
    Usage(String),
    /// Unreadable or malformed input file.
    Input(String),
    /// Error raised while training or transforming predictions.
    Runtime(String),
    /// The verification sweep found a failing property.
    Verify,
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Runtime(_) => 4,
            Failure::Verify | Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => format!("invalid arguments: {m}"),
            Failure::Input(m) => format!("bad input: {m}"),
            Failure::Runtime(m) => m.clone(),
            Failure::Verify => "verification failed".into(),
            Failure::Io(m) => format!("i/o error: {m}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn input_error(path: &Path) -> impl Fn(RefcalError) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Outputs collected in memory and written together once a command has
/// succeeded, each via a temporary file renamed into place.
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, contents: impl Into<Vec<u8>>) {
        self.files.push((path, contents.into()));
    }

    fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    fn commit(self) -> CliResult<()> {
        for (path, contents) in self.files {
            write_atomic(&path, &contents)?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    version: &'a str,
    duration_seconds: f64,
}

/// Manifest beside a single output file: `<stem>.manifest.json`.
fn sibling_manifest(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

fn finish(
    mut outputs: Outputs,
    manifest_path: PathBuf,
    command: &str,
    config: Option<&Path>,
    inputs: &[&Path],
    seed: u64,
    started: Instant,
) -> CliResult<()> {
    let manifest = RunManifest {
        command,
        config: config.map(|p| p.display().to_string()),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.paths(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    outputs.add(manifest_path, json);
    outputs.commit()
}

fn resolve_seed(arg: &SeedArg) -> u64 {
    arg.seed.unwrap_or(DEFAULT_SEED)
}

fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let started = Instant::now();
    let seed = resolve_seed(&args.seed);
    if !(args.imbalance > 0.0 && args.imbalance <= 1.0) {
        return Err(Failure::Usage(format!("--imbalance {} must lie in (0, 1]", args.imbalance)));
    }
    if args.classes < 2 || args.n_max < 2 * args.classes {
        return Err(Failure::Usage(format!(
            "need --classes >= 2 and --n-max >= 2 * classes, got {} and {}",
            args.classes, args.n_max
        )));
    }
    if args.dims == 0 || args.noise.is_nan() || args.noise < 0.0 {
        return Err(Failure::Usage("--dims must be positive and --noise non-negative".into()));
    }
    let config = BlobConfig {
        num_classes: args.classes,
        n_max: args.n_max,
        dims: args.dims,
        imbalance_factor: args.imbalance,
        class_separation: args.separation,
        noise_sigma: args.noise,
        seed,
    };
    let mut dataset = generate_blobs(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(severity) = args.severity {
        dataset = corrupt(&dataset, severity, seed).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let counts = dataset.class_counts(None);
    let mut outputs = Outputs::new();
    outputs.add(args.out.clone(), write_dataset(&dataset));
    finish(outputs, sibling_manifest(&args.out), "generate", None, &[], seed, started)?;
    println!("wrote {} samples, class counts {:?}", dataset.len(), counts);
    Ok(())
}

/// Flat JSON training configuration; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatConfig {
    stage1_epochs: Option<usize>,
    stage1_batch_size: Option<usize>,
    stage1_lr: Option<f64>,
    stage1_momentum: Option<f64>,
    tau: Option<f64>,
    stage2_epochs: Option<usize>,
    stage2_batch_size: Option<usize>,
    stage2_lr: Option<f64>,
    stage2_momentum: Option<f64>,
    loss: Option<LossKind>,
    epsilon: Option<f64>,
    gamma: Option<f64>,
    temperature_scaling: Option<bool>,
    selection: Option<SelectionKind>,
    hidden: Option<Vec<usize>>,
    representation_dim: Option<usize>,
    projection_dim: Option<usize>,
    seed: Option<u64>,
}

fn build_train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let flat: FlatConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_text(path).map_err(|f| Failure::Usage(f.message()))?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => FlatConfig::default(),
    };
    let seed = args.seed.seed.or(flat.seed).unwrap_or(DEFAULT_SEED);
    let mut c = TrainConfig::desk(seed);
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(c.stage1.epochs, flat.stage1_epochs);
    set!(c.stage1.batch_size, flat.stage1_batch_size);
    set!(c.stage1.lr, flat.stage1_lr);
    set!(c.stage1.momentum, flat.stage1_momentum);
    set!(c.stage1.tau, flat.tau);
    set!(c.stage2.epochs, flat.stage2_epochs);
    set!(c.stage2.batch_size, flat.stage2_batch_size);
    set!(c.stage2.lr, flat.stage2_lr);
    set!(c.stage2.momentum, flat.stage2_momentum);
    set!(c.stage2.apply_temperature_scaling, flat.temperature_scaling);
    set!(c.hidden, flat.hidden);
    set!(c.representation_dim, flat.representation_dim);
    set!(c.projection_dim, flat.projection_dim);
    set!(c.stage1.epochs, args.stage1_epochs);
    set!(c.stage2.epochs, args.stage2_epochs);
    if args.ts {
        c.stage2.apply_temperature_scaling = true;
    }
    if let Some(sel) = args.selection.or(flat.selection) {
        c.selection = match sel {
            SelectionKind::BestVal => ModelSelection::BestValTop1,
            SelectionKind::Final => ModelSelection::FinalEpoch,
        };
    }
    let loss = args.loss.or(flat.loss).unwrap_or(LossKind::Nll);
    let epsilon = args.epsilon.or(flat.epsilon);
    let gamma = args.gamma.or(flat.gamma);
    c.stage2.loss = match loss {
        LossKind::Nll => CalibrationLossSpec::Nll,
        LossKind::Ls => CalibrationLossSpec::LabelSmoothing { epsilon: epsilon.unwrap_or(0.1) },
        LossKind::Focal => CalibrationLossSpec::Focal { gamma: gamma.unwrap_or(2.0) },
    };
    if (epsilon.is_some() && loss != LossKind::Ls) || (gamma.is_some() && loss != LossKind::Focal) {
        return Err(Failure::Usage("--epsilon applies to --loss ls and --gamma to --loss focal".into()));
    }
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    let config = build_train_config(args)?;
    let dataset = read_dataset(&read_text(&args.data)?).map_err(input_error(&args.data))?;
    let regime = match args.regime {
        Regime::Refcal => "refcal",
        Regime::Baseline => "baseline",
    };
    let runtime = |e: RefcalError| Failure::Runtime(format!("training failed: {e}"));
    let (params, log) = match args.regime {
        Regime::Refcal => train_refcal(&dataset, &config),
        Regime::Baseline => train_baseline(&dataset, &config),
    }
    .map_err(runtime)?;
    let print = fingerprint(&format!("{regime}:{}", config.to_json()));
    let eval = evaluate(&params, &dataset, Split::Test, &args.metrics.config(), &print, config.seed).map_err(runtime)?;

    let mut checkpoint = Vec::new();
    write_checkpoint(&params, &mut checkpoint).map_err(|e| Failure::Io(e.to_string()))?;
    let dir = &args.out_dir;
    let mut outputs = Outputs::new();
    outputs.add(dir.join("model.ckpt"), checkpoint);
    outputs.add(dir.join("train_log.csv"), write_training_log(&log));
    outputs.add(dir.join("report.json"), eval.report.to_json());
    outputs.add(dir.join("predictions.txt"), write_predictions(&eval.predictions));
    finish(outputs, dir.join("manifest.json"), "train", args.config.as_deref(), &[&args.data], config.seed, started)?;
    println!("{regime} test: {}", eval.report.summary());
    Ok(())
}

fn load_params(path: &Path) -> CliResult<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    read_checkpoint(&mut bytes.as_slice()).map_err(input_error(path))
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let started = Instant::now();
    let seed = resolve_seed(&args.seed);
    let metrics = args.metrics.config();
    let print = fingerprint(&serde_json::to_string(&metrics).expect("config serializes"));
    let mut outputs = Outputs::new();
    let (batch, inputs): (ProbabilityBatch, Vec<&Path>) = match (&args.predictions, &args.checkpoint, &args.data) {
        (Some(p), _, _) => (read_predictions(&read_text(p)?).map_err(input_error(p))?.batch, vec![p.as_path()]),
        (None, Some(ckpt), Some(data)) => {
            let params = load_params(ckpt)?;
            let dataset = read_dataset(&read_text(data)?).map_err(input_error(data))?;
            let (x, y) = dataset.subset(args.split);
            if y.is_empty() {
                return Err(Failure::Input(format!("{}: split {} is empty", data.display(), args.split.as_str())));
            }
            let batch = predict(&params, x.view(), y).map_err(input_error(ckpt))?;
            if let Some(path) = &args.predictions_out {
                let dump = PredictionDump { sample_ids: dataset.indices(args.split), batch: batch.clone() };
                outputs.add(path.clone(), write_predictions(&dump));
            }
            (batch, vec![ckpt.as_path(), data.as_path()])
        }
        _ => return Err(Failure::Usage("give --predictions, or --checkpoint with --data".into())),
    };
    let report =
        ReliabilityReport::from_batch(&batch, &metrics, &print, seed).map_err(|e| Failure::Input(e.to_string()))?;
    outputs.add(args.out.clone(), report.to_json());
    finish(outputs, sibling_manifest(&args.out), "evaluate", None, &inputs, seed, started)?;
    println!("{}", report.summary());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let started = Instant::now();
    let config = VerifyConfig {
        batches: args.batches,
        gradient_instances: args.gradient_instances,
        metric_instances: args.metric_instances,
        seed: resolve_seed(&args.seed),
        inject_fault: args.self_test,
        mode: if args.sequential { ExecMode::Sequential } else { ExecMode::Parallel },
    };
    let report = verify::run(&config);
    print!("{}", report.render());
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new();
        outputs.add(out.clone(), report.to_json());
        finish(outputs, sibling_manifest(out), "verify", None, &[], config.seed, started)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

#[derive(Serialize)]
struct PitfallDelta {
    delta_auc: Option<f64>,
    delta_ece: f64,
    distinct_confidences_before: usize,
    distinct_confidences_after: usize,
}

fn distinct_confidences(batch: &ProbabilityBatch) -> usize {
    let mut c = batch.confidences();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c.len()
}

fn cmd_pitfall(args: &PitfallArgs) -> CliResult<()> {
    let started = Instant::now();
    let seed = resolve_seed(&args.seed);
    let runtime = |e: RefcalError| Failure::Runtime(format!("pitfall transform failed: {e}"));
    let (test, rows, ids, inputs): (ProbabilityBatch, _, Vec<usize>, Vec<&Path>) =
        match (&args.predictions, &args.validation, args.scenario) {
            (Some(p), Some(v), _) => {
                let test = read_predictions(&read_text(p)?).map_err(input_error(p))?;
                let val = read_predictions(&read_text(v)?).map_err(input_error(v))?;
                if val.batch.num_classes() != test.batch.num_classes() {
                    return Err(Failure::Input("validation and test dumps have different class counts".into()));
                }
                let rows = confusion_rows(&val.batch);
                (test.batch, rows, test.sample_ids, vec![p.as_path(), v.as_path()])
            }
            (None, None, Some(n)) if n > 0 => {
                let batch = insight_scenario(n, seed).map_err(runtime)?;
                let rows = ndarray::Array2::from_shape_fn((2, 2), |(i, j)| INSIGHT_ROWS[i][j]);
                (batch, rows, (0..n).collect(), vec![])
            }
            _ => return Err(Failure::Usage("give --predictions with --validation, or --scenario N > 0".into())),
        };
    let after = pitfall_transform(&test, &rows).map_err(runtime)?;
    let metrics = args.metrics.config();
    let print = fingerprint(&format!("pitfall:{}", serde_json::to_string(&metrics).expect("config serializes")));
    let report = |b: &ProbabilityBatch| ReliabilityReport::from_batch(b, &metrics, &print, seed).map_err(runtime);
    let (before_report, after_report) = (report(&test)?, report(&after)?);
    let delta = PitfallDelta {
        delta_auc: before_report.auc.zip(after_report.auc).map(|(b, a)| a - b),
        delta_ece: after_report.ece - before_report.ece,
        distinct_confidences_before: distinct_confidences(&test),
        distinct_confidences_after: distinct_confidences(&after),
    };
    let mut delta_json = serde_json::to_string_pretty(&delta).expect("delta serializes");
    delta_json.push('\n');

    let dir = &args.out_dir;
    let mut outputs = Outputs::new();
    outputs.add(dir.join("before.json"), before_report.to_json());
    outputs.add(dir.join("after.json"), after_report.to_json());
    outputs.add(dir.join("delta.json"), delta_json);
    outputs.add(dir.join("after_predictions.txt"), write_predictions(&PredictionDump { sample_ids: ids, batch: after }));
    finish(outputs, dir.join("manifest.json"), "pitfall", None, &inputs, seed, started)?;
    println!("before: {}", before_report.summary());
    println!("after:  {}", after_report.summary());
    let auc = delta.delta_auc.map_or("n/a".to_string(), |d| format!("{:+.2}", 100.0 * d));
    println!(
        "delta AUC {auc}  delta ECE {:+.2}  distinct confidences {} -> {}",
        100.0 * delta.delta_ece,
        delta.distinct_confidences_before,
        delta.distinct_confidences_after
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Pitfall(a) => cmd_pitfall(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("refcal: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
