use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_cli::*;
use cascade_core::abstain::AccuracyModelKind;
use cascade_core::cascade::CascadeFile;
use cascade_core::data::{AccuracyMetric, ModelManifest, PredictionLog};
use cascade_core::par::Execution;
use cascade_core::synth::{self, SynthConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Build and evaluate cost-aware cascades of abstaining models"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cascade from a train log and write it as JSON.
    Build(BuildArgs),
    /// Run a cascade on a test log and report accuracy and cost.
    Evaluate(EvaluateArgs),
    /// Build and evaluate for each α of a grid; CSV on stdout.
    Sweep(SweepArgs),
    /// Accuracy versus abstention rate for one model; CSV on stdout.
    AbstainCurve(CurveArgs),
    /// Run the seeded property suites.
    Oracle(OracleArgs),
    /// Write a synthetic train log, test log and manifest.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct ConstraintArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "top1")]
    metric: AccuracyMetric,
    /// Reference model (default: most expensive manifest model).
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value = "raw:logit_gap")]
    accuracy_model: AccuracyModelKind,
    #[arg(long, default_value = "confident")]
    generator: GeneratorKind,
    #[arg(long, default_value = "linear")]
    cost: CostChoice,
    /// Add prefix composites of every linear chain in the cost graph.
    #[arg(long)]
    prefix_composites: bool,
    /// Cost added per component of an ensemble stage.
    #[arg(long, default_value_t = 0.0)]
    ensemble_overhead: f64,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    train_log: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    constraint: ConstraintArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Cascade JSON written by `build`.
    #[arg(long)]
    cascade: PathBuf,
    #[arg(long)]
    test_log: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Build log, only used to refuse evaluating on it.
    #[arg(long)]
    train_log: Option<PathBuf>,
    /// Also write the per-stage table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    allow_train_eval: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    train_log: PathBuf,
    #[arg(long)]
    test_log: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    constraint: ConstraintArgs,
    /// Comma-separated α values (default 1.00, 0.99, ..., 0.95).
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_train_eval: bool,
}

#[derive(Args)]
struct CurveArgs {
    /// Log the accuracy models are fitted on.
    #[arg(long)]
    train_log: PathBuf,
    /// Log the curves are measured on (default: the train log).
    #[arg(long)]
    test_log: Option<PathBuf>,
    #[arg(long)]
    model: String,
    /// Repeatable.
    #[arg(long, default_value = "raw:logit_gap")]
    accuracy_model: Vec<AccuracyModelKind>,
    #[arg(long, default_value = "top1")]
    metric: AccuracyMetric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Three models, 40 + 40 examples.
    Fixture,
    /// Five nested models, 2000 + 2000 examples.
    Nested,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "fixture")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn build_config(c: &ConstraintArgs, exec: Execution) -> BuildConfig {
    BuildConfig {
        alpha: c.alpha,
        metric: c.metric,
        reference: c.reference.clone(),
        accuracy_model: c.accuracy_model.clone(),
        generator: c.generator,
        cost: c.cost,
        prefix_composites: c.prefix_composites,
        ensemble_overhead: c.ensemble_overhead,
        exec,
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> CliResult<(PredictionLog, Vec<u8>)> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let log = PredictionLog::from_jsonl_str(text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((log, bytes))
}

fn load_manifest(path: &Path) -> CliResult<ModelManifest> {
    ModelManifest::load(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Build(args) => {
            let (train, bytes) = load_log(&args.train_log)?;
            let manifest = load_manifest(&args.manifest)?;
            let mut built = build(&train, &manifest, &build_config(&args.constraint, exec))?;
            built.file.build_stats.train_log_sha256 = Some(sha256_hex(&bytes));
            write(&args.out, &built.file.to_json_string())?;
            print!("{}", stage_table(&built.file));
        }
        Command::Evaluate(args) => {
            let text = String::from_utf8(read(&args.cascade)?)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let file = CascadeFile::from_json_str(&text)?;
            let (test, bytes) = load_log(&args.test_log)?;
            if !args.allow_train_eval {
                check_not_train(&file, &bytes, &args.test_log, args.train_log.as_deref())?;
            }
            let manifest = load_manifest(&args.manifest)?;
            let report = evaluate(&file, &test, &manifest, file_metric(&file))?;
            print!("{}", report_text(&report));
            if let Some(csv) = &args.csv {
                write(csv, &report_csv(&report))?;
            }
        }
        Command::Sweep(args) => {
            let (train, train_bytes) = load_log(&args.train_log)?;
            let (test, test_bytes) = load_log(&args.test_log)?;
            if !args.allow_train_eval
                && (train_bytes == test_bytes || args.train_log == args.test_log)
            {
                return Err(CliError::Validation(
                    "test log is identical to the train log; pass --allow-train-eval to override"
                        .into(),
                ));
            }
            let manifest = load_manifest(&args.manifest)?;
            let alphas = args
                .alpha_grid
                .clone()
                .unwrap_or_else(|| DEFAULT_ALPHA_GRID.to_vec());
            let rows = sweep(
                &train,
                &test,
                &manifest,
                &build_config(&args.constraint, exec),
                &alphas,
            )?;
            emit(&args.out, &sweep_csv(&rows))?;
        }
        Command::AbstainCurve(args) => {
            let (train, _) = load_log(&args.train_log)?;
            let test = match &args.test_log {
                Some(p) => Some(load_log(p)?.0),
                None => None,
            };
            let curves = abstain_curves(
                &args.model,
                &args.accuracy_model,
                &train,
                test.as_ref().unwrap_or(&train),
                args.metric,
            )?;
            emit(&args.out, &curves_csv(&curves))?;
        }
        Command::Oracle(args) => {
            let (text, reports) = oracle_report(args.trials, args.seed, exec)?;
            print!("{text}");
            let failed: Vec<&str> = reports
                .iter()
                .filter(|r| !r.passed())
                .map(|r| r.name)
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Violation(failed.join(", ")));
            }
        }
        Command::Synth(args) => {
            let cfg = match args.preset {
                Preset::Fixture => SynthConfig::three_model_fixture(args.seed),
                Preset::Nested => SynthConfig::nested_pool(args.seed),
            };
            let data = synth::generate(&cfg)?;
            fs::create_dir_all(&args.out_dir)?;
            write(&args.out_dir.join("train.jsonl"), &data.train.to_jsonl())?;
            write(&args.out_dir.join("test.jsonl"), &data.test.to_jsonl())?;
            write(
                &args.out_dir.join("manifest.json"),
                &data.manifest.to_json_string(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
