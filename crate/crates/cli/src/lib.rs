//! Batch commands behind the `cascade` binary: build, evaluate, sweep,
//! abstention curves, oracle suites and synthetic fixtures.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use cascade_core::abstain::{
    abstention_tradeoff_curve, format_threshold, perfect_tradeoff_curve, AccuracyModelKind,
    TradeoffPoint,
};
use cascade_core::cascade::{
    evaluate_cascade, greedy_cascade, AccuracyConstraint, CascadeFile, CascadeTrace,
    CompositeGenerator, ConfidentGenerator, CostSpec, EnsembleGenerator, EvaluationReport,
    GreedyOptions, GreedyOutcome, ModelGenerator, UnionGenerator,
};
use cascade_core::cost::{register_prefix_composites, CostFunction, CostKind};
use cascade_core::data::{AccuracyMetric, ModelManifest, PredictionLog};
use cascade_core::oracle::{run_property_suites, SuiteReport};
use cascade_core::par::{self, Execution};
use sha2::{Digest, Sha256};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

/// Default α grid: 1 − i/100 for i = 0..=5.
pub const DEFAULT_ALPHA_GRID: [f64; 6] = [1.0, 0.99, 0.98, 0.97, 0.96, 0.95];

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    /// Greedy found no useful, accurate candidate; carries the partial report.
    GreedyFailure(String),
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::GreedyFailure(_) => EXIT_FAILURE,
            CliError::Violation(_) => EXIT_VIOLATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::GreedyFailure(m) => write!(f, "greedy failure: {m}"),
            CliError::Violation(m) => write!(f, "property violation: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cascade_core::Error> for CliError {
    fn from(e: cascade_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Confident,
    /// Pool models plus ensembles with the stages already chosen.
    Ensemble,
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "confident" => Ok(GeneratorKind::Confident),
            "ensemble" => Ok(GeneratorKind::Ensemble),
            _ => Err(format!(
                "unknown generator {s:?} (expected confident or ensemble)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostChoice {
    Linear,
    Graph,
}

impl CostChoice {
    pub fn name(self) -> &'static str {
        match self {
            CostChoice::Linear => "linear",
            CostChoice::Graph => "graph",
        }
    }
}

impl std::str::FromStr for CostChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(CostChoice::Linear),
            "graph" => Ok(CostChoice::Graph),
            _ => Err(format!(
                "unknown cost function {s:?} (expected linear or graph)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub alpha: f64,
    pub metric: AccuracyMetric,
    /// Defaults to the most expensive manifest model.
    pub reference: Option<String>,
    pub accuracy_model: AccuracyModelKind,
    pub generator: GeneratorKind,
    pub cost: CostChoice,
    pub prefix_composites: bool,
    pub ensemble_overhead: f64,
    pub exec: Execution,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            metric: AccuracyMetric::Top1,
            reference: None,
            accuracy_model: AccuracyModelKind::Raw("logit_gap".into()),
            generator: GeneratorKind::Confident,
            cost: CostChoice::Linear,
            prefix_composites: false,
            ensemble_overhead: 0.0,
            exec: Execution::default(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Most expensive manifest model, smallest id on ties.
pub fn default_reference(manifest: &ModelManifest) -> Option<String> {
    manifest
        .entries
        .iter()
        .max_by(|a, b| a.cost.total_cmp(&b.cost).then(b.id.cmp(&a.id)))
        .map(|e| e.id.clone())
}

fn cost_function(manifest: &ModelManifest, kind: &str) -> CliResult<CostFunction> {
    Ok(match kind {
        "linear" => CostFunction::linear_from_manifest(manifest)?,
        "graph" => CostFunction::graph_from_manifest(manifest)?,
        other => return Err(CliError::Validation(format!("unknown cost kind {other:?}"))),
    })
}

#[derive(Debug)]
pub struct Built {
    pub trace: CascadeTrace,
    pub file: CascadeFile,
}

/// Fits accuracy models on the train log and runs the greedy algorithm over
/// every example of it.
pub fn build(
    train: &PredictionLog,
    manifest: &ModelManifest,
    cfg: &BuildConfig,
) -> CliResult<Built> {
    let reference = match &cfg.reference {
        Some(r) => r.clone(),
        None => default_reference(manifest)
            .ok_or_else(|| CliError::Validation("manifest lists no models".into()))?,
    };
    if !manifest.contains(&reference) {
        return Err(CliError::Validation(format!(
            "reference model {reference:?} is not in the manifest"
        )));
    }
    let constraint = AccuracyConstraint::min_relative(cfg.alpha, cfg.metric, reference)?;
    let pool_ids: Vec<String> = manifest.entries.iter().map(|e| e.id.clone()).collect();
    for id in &pool_ids {
        if !train.has_model(id) {
            return Err(CliError::Validation(format!(
                "model {id:?} from the manifest is missing from the train log"
            )));
        }
    }

    let mut cf = cost_function(manifest, cfg.cost.name())?;
    let fitted: Vec<(String, cascade_core::abstain::AccuracyModel)> =
        par::map(cfg.exec, &pool_ids, |id| {
            let m = train.model_index(id)?;
            Ok((id.clone(), cfg.accuracy_model.fit(train, m, cfg.metric)?))
        })
        .into_iter()
        .collect::<cascade_core::Result<_>>()?;

    let mut generators: Vec<Box<dyn ModelGenerator>> = vec![Box::new(ConfidentGenerator {
        pool: fitted.clone(),
    })];
    if cfg.generator == GeneratorKind::Ensemble {
        generators.push(Box::new(EnsembleGenerator {
            pool: pool_ids
                .iter()
                .map(|id| (id.clone(), cfg.accuracy_model.clone()))
                .collect(),
            metric: cfg.metric,
            include_singletons: false,
        }));
    }
    if cfg.prefix_composites {
        let CostKind::Graph(graph) = cf.kind() else {
            return Err(CliError::Validation(
                "--prefix-composites needs --cost graph".into(),
            ));
        };
        let chains: Vec<Vec<String>> = graph
            .linear_chains()
            .into_iter()
            .filter(|c| c.len() > 1)
            .collect();
        for chain in &chains {
            register_prefix_composites(chain, &mut cf)?;
        }
        generators.push(Box::new(CompositeGenerator {
            chains,
            accuracy_models: fitted.iter().cloned().collect::<HashMap<_, _>>(),
        }));
    }
    let generator = UnionGenerator(generators);

    let validation = train.all_examples();
    let outcome = greedy_cascade(
        &validation,
        &constraint,
        &cf,
        &generator,
        train,
        GreedyOptions {
            exec: cfg.exec,
            ensemble_overhead: cfg.ensemble_overhead,
        },
    )?;
    match outcome {
        GreedyOutcome::Cascade(trace) => {
            let file = CascadeFile::from_trace(
                &trace,
                &constraint,
                CostSpec {
                    kind: cfg.cost.name().into(),
                    ensemble_overhead: cfg.ensemble_overhead,
                    units: manifest.units.clone(),
                },
                validation.len(),
            );
            Ok(Built { trace, file })
        }
        GreedyOutcome::Failure { partial, remaining } => Err(CliError::GreedyFailure(format!(
            "no useful, accurate candidate after {} stage(s); {} example(s) unanswered",
            partial.len(),
            remaining.len()
        ))),
    }
}

/// Left-aligned columns separated by two spaces.
fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(cell);
            s.extend(std::iter::repeat_n(' ', widths[i] - cell.chars().count()));
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn ratio_text(x: f64) -> String {
    if x.is_infinite() {
        "+inf".into()
    } else {
        num(x)
    }
}

/// Per-stage build table with n_i, |A_i|, C_i and the totals.
pub fn stage_table(file: &CascadeFile) -> String {
    let rows: Vec<Vec<String>> = file
        .build_stats
        .stage_table
        .iter()
        .map(|r| {
            vec![
                r.stage.to_string(),
                r.model.clone(),
                r.remaining.to_string(),
                r.answered.to_string(),
                num(r.cost),
                ratio_text(r.ratio.0),
                r.threshold.map_or("-".into(), |t| format_threshold(t.0)),
            ]
        })
        .collect();
    let mut out = render_table(
        &[
            "stage",
            "model",
            "remaining",
            "answered",
            "cost",
            "ratio",
            "threshold",
        ],
        &rows,
    );
    let stats = &file.build_stats;
    let _ = writeln!(out, "examples: {}", stats.build_examples);
    let _ = writeln!(out, "T: {}", num(stats.total_cost));
    let _ = writeln!(
        out,
        "mean cost: {}",
        num(stats.total_cost / stats.build_examples.max(1) as f64)
    );
    let _ = writeln!(out, "C_sigma: {}", num(stats.total_stage_cost));
    out
}

/// Runs a cascade file on a log, costing it with the manifest.
pub fn evaluate(
    file: &CascadeFile,
    log: &PredictionLog,
    manifest: &ModelManifest,
    metric: AccuracyMetric,
) -> CliResult<EvaluationReport> {
    let mut cf = cost_function(manifest, &file.cost.kind)?;
    for chain in file.composite_chains() {
        register_prefix_composites(&chain, &mut cf)?;
    }
    let stages = file.models()?;
    Ok(evaluate_cascade(
        &stages,
        log,
        metric,
        &cf,
        file.cost.ensemble_overhead,
    )?)
}

/// Metric the cascade was built for, falling back to top-1.
pub fn file_metric(file: &CascadeFile) -> AccuracyMetric {
    match &file.constraint {
        AccuracyConstraint::MinRelative { metric, .. } => *metric,
        AccuracyConstraint::AlwaysTrue => AccuracyMetric::Top1,
    }
}

fn optional(x: Option<f64>) -> String {
    x.map_or("-".into(), num)
}

pub fn report_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "examples: {}", report.examples);
    let _ = writeln!(out, "accuracy: {}", num(report.accuracy));
    let _ = writeln!(out, "mean cost: {}", num(report.mean_cost));
    let _ = writeln!(out, "unanswered: {}", num(report.unanswered));
    out.push('\n');
    let rows: Vec<Vec<String>> = report
        .stages
        .iter()
        .map(|s| {
            vec![
                s.stage.to_string(),
                s.model.clone(),
                num(s.cost),
                s.threshold.map_or("-".into(), format_threshold),
                num(s.fraction_classified),
                optional(s.accuracy),
            ]
        })
        .collect();
    out.push_str(&render_table(
        &[
            "stage",
            "model",
            "cost",
            "threshold",
            "classified",
            "accuracy",
        ],
        &rows,
    ));
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("stage,model,cost,threshold,fraction_classified,accuracy\n");
    for s in &report.stages {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.stage,
            csv_field(&s.model),
            num(s.cost),
            s.threshold.map_or(String::new(), format_threshold),
            num(s.fraction_classified),
            s.accuracy.map_or(String::new(), num)
        );
    }
    let _ = writeln!(
        out,
        "overall,,{},,{},{}",
        num(report.mean_cost),
        num(1.0 - report.unanswered),
        num(report.accuracy)
    );
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    /// `None` when greedy failed at this α.
    pub result: Option<SweepResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub accuracy: f64,
    pub mean_cost: f64,
    pub stages: usize,
}

/// build + evaluate for every α, in the order given.
pub fn sweep(
    train: &PredictionLog,
    test: &PredictionLog,
    manifest: &ModelManifest,
    cfg: &BuildConfig,
    alphas: &[f64],
) -> CliResult<Vec<SweepRow>> {
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(CliError::Validation(format!(
                "alpha must be in (0, 1], got {a}"
            )));
        }
    }
    let inner = BuildConfig {
        exec: Execution::Sequential,
        ..cfg.clone()
    };
    par::map(cfg.exec, alphas, |&alpha| {
        let cfg = BuildConfig {
            alpha,
            ..inner.clone()
        };
        match build(train, manifest, &cfg) {
            Ok(built) => {
                let report = evaluate(&built.file, test, manifest, cfg.metric)?;
                Ok(SweepRow {
                    alpha,
                    result: Some(SweepResult {
                        accuracy: report.accuracy,
                        mean_cost: report.mean_cost,
                        stages: report.stages.len(),
                    }),
                })
            }
            Err(CliError::GreedyFailure(_)) => Ok(SweepRow {
                alpha,
                result: None,
            }),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,status,accuracy,mean_cost,stages\n");
    for r in rows {
        match &r.result {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},ok,{},{},{}",
                    r.alpha,
                    num(s.accuracy),
                    num(s.mean_cost),
                    s.stages
                );
            }
            None => {
                let _ = writeln!(out, "{},FAILURE,,,", r.alpha);
            }
        }
    }
    out
}

/// Tradeoff curves of one model: one per accuracy-model kind (fitted on
/// `fit_log`, evaluated on `eval_log`) followed by the perfect-oracle curve.
pub fn abstain_curves(
    model_id: &str,
    kinds: &[AccuracyModelKind],
    fit_log: &PredictionLog,
    eval_log: &PredictionLog,
    metric: AccuracyMetric,
) -> CliResult<Vec<(String, Vec<TradeoffPoint>)>> {
    let m = fit_log.model_index(model_id)?;
    eval_log.model_index(model_id)?;
    let mut out = Vec::new();
    for kind in kinds {
        let fitted = kind.fit(fit_log, m, metric)?;
        out.push((
            kind.to_string(),
            abstention_tradeoff_curve(model_id, &fitted, eval_log, metric)?,
        ));
    }
    out.push((
        "perfect".into(),
        perfect_tradeoff_curve(model_id, eval_log, metric)?,
    ));
    Ok(out)
}

pub fn curves_csv(curves: &[(String, Vec<TradeoffPoint>)]) -> String {
    let mut out = String::from("curve,threshold,abstention_rate,accuracy\n");
    for (name, points) in curves {
        for p in points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(name),
                format_threshold(p.threshold),
                num(p.abstention_rate),
                num(p.accuracy)
            );
        }
    }
    out
}

/// Runs the property suites and renders their report.
pub fn oracle_report(
    trials: u64,
    seed: u64,
    exec: Execution,
) -> CliResult<(String, Vec<SuiteReport>)> {
    let reports = run_property_suites(trials, seed, exec)?;
    let mut out = String::new();
    if trials == 0 {
        out.push_str("warning: 0 trials requested; every suite passes vacuously\n");
    }
    let _ = writeln!(out, "seed: {seed}");
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                r.trials.to_string(),
                r.violations.len().to_string(),
                if r.passed() { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    out.push_str(&render_table(
        &["suite", "trials", "violations", "result"],
        &rows,
    ));
    for r in &reports {
        if let Some(w) = r.worst_ratio {
            let _ = writeln!(out, "worst GREEDY/OPT ratio: {}", num(w));
        }
        for v in &r.violations {
            let _ = writeln!(
                out,
                "{}: trial {} (seed {}): {}",
                r.name, v.trial, v.seed, v.message
            );
        }
    }
    Ok((out, reports))
}

/// Refuses to evaluate on the log the cascade was built from.
pub fn check_not_train(
    file: &CascadeFile,
    test_bytes: &[u8],
    test_path: &Path,
    train_path: Option<&Path>,
) -> CliResult<()> {
    if let Some(train) = train_path {
        let same = match (train.canonicalize(), test_path.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => train == test_path,
        };
        if same {
            return Err(CliError::Validation(
                "test log is the train log (same path); pass --allow-train-eval to override".into(),
            ));
        }
    }
    if let Some(hash) = &file.build_stats.train_log_sha256 {
        if *hash == sha256_hex(test_bytes) {
            return Err(CliError::Validation(
                "test log has the same content hash as the train log; pass --allow-train-eval to override".into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "bb"], &[vec!["long".into(), "x".into()]]);
        assert_eq!(t, "a     bb\nlong  x\n");
    }

    #[test]
    fn default_grid_has_six_rows() {
        assert_eq!(DEFAULT_ALPHA_GRID.len(), 6);
        for (i, a) in DEFAULT_ALPHA_GRID.iter().enumerate() {
            assert!((a - (1.0 - i as f64 / 100.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("ab"), "ab");
    }
}
