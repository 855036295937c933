//! Abstaining models: confidence features, accuracy models and the
//! confident-model thresholding rule.
//!
//! An [`AbstainingModel`] wraps a pool model with an accuracy model q̂ and a
//! threshold `t`; it answers with the pool model's logged prediction when
//! q̂(x) ≥ t and abstains otherwise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{AccuracyMetric, Label, ModelOutput, PredictionLog};
use crate::error::{Error, Result};

/// Magnitude cap on every logistic parameter, bias included.
pub const LOGISTIC_PARAM_CAP: f64 = 25.0;
const LOGISTIC_MAX_ITERS: usize = 500;

/// Names of the score-derived features.
pub const FEATURE_ENTROPY: &str = "entropy";
pub const FEATURE_NEG_ENTROPY: &str = "neg_entropy";
pub const FEATURE_MAX_PROB: &str = "max_prob";
pub const FEATURE_LOGIT_GAP: &str = "logit_gap";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceFeatures {
    /// Softmax entropy in nats.
    pub entropy: f64,
    pub max_prob: f64,
    pub logit_gap: f64,
}

pub trait FeatureSource {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureSource for ConfidenceFeatures {
    fn feature(&self, name: &str) -> Option<f64> {
        match name {
            FEATURE_ENTROPY => Some(self.entropy),
            FEATURE_NEG_ENTROPY => Some(-self.entropy),
            FEATURE_MAX_PROB => Some(self.max_prob),
            FEATURE_LOGIT_GAP => Some(self.logit_gap),
            _ => None,
        }
    }
}

impl FeatureSource for BTreeMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Features of one logged output: log-supplied values take precedence over
/// values derived from the score vector.
pub struct CellFeatures<'a> {
    supplied: &'a BTreeMap<String, f64>,
    computed: Option<ConfidenceFeatures>,
}

impl<'a> CellFeatures<'a> {
    pub fn new(output: &'a ModelOutput) -> Self {
        let computed = output
            .scores
            .as_deref()
            .and_then(|s| compute_features(s).ok());
        Self {
            supplied: &output.features,
            computed,
        }
    }
}

impl FeatureSource for CellFeatures<'_> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.supplied
            .get(name)
            .copied()
            .or_else(|| self.computed.as_ref().and_then(|c| c.feature(name)))
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn compute_features(scores: &[f64]) -> Result<ConfidenceFeatures> {
    if scores.len() < 2 || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::FeaturesUnavailable);
    }
    let probs = softmax(scores);
    let entropy = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0);
    let max_prob = probs.iter().copied().fold(0.0, f64::max);
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &s in scores {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    Ok(ConfidenceFeatures {
        entropy,
        max_prob,
        logit_gap: first - second,
    })
}

/// Predictor of a base model's per-example accuracy (q̂).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyModel {
    /// The named feature, unchanged.
    RawFeature { feature: String },
    Logistic {
        weights: Vec<f64>,
        bias: f64,
        features: Vec<String>,
    },
    /// Non-decreasing step function of one feature.
    Isotonic {
        feature: String,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl AccuracyModel {
    pub fn raw(feature: &str) -> Self {
        AccuracyModel::RawFeature {
            feature: feature.to_string(),
        }
    }

    /// Short human-readable tag, stable across runs.
    pub fn tag(&self) -> String {
        match self {
            AccuracyModel::RawFeature { feature } => format!("raw:{feature}"),
            AccuracyModel::Logistic { .. } => "logistic".to_string(),
            AccuracyModel::Isotonic { feature, .. } => format!("isotonic:{feature}"),
        }
    }

    pub fn required_features(&self) -> Vec<&str> {
        match self {
            AccuracyModel::RawFeature { feature } | AccuracyModel::Isotonic { feature, .. } => {
                vec![feature.as_str()]
            }
            AccuracyModel::Logistic { features, .. } => {
                features.iter().map(String::as_str).collect()
            }
        }
    }

    pub fn predict(&self, source: &impl FeatureSource) -> Result<f64> {
        let get = |name: &str| {
            source
                .feature(name)
                .ok_or_else(|| Error::FeatureNotFound(name.to_string()))
        };
        match self {
            AccuracyModel::RawFeature { feature } => get(feature),
            AccuracyModel::Logistic {
                weights,
                bias,
                features,
            } => {
                let mut z = *bias;
                for (w, name) in weights.iter().zip(features) {
                    z += w * get(name)?;
                }
                Ok(sigmoid(z))
            }
            AccuracyModel::Isotonic {
                feature,
                breakpoints,
                values,
            } => Ok(step_value(breakpoints, values, get(feature)?)),
        }
    }
}

fn step_value(breakpoints: &[f64], values: &[f64], x: f64) -> f64 {
    // number of breakpoints <= x
    let idx = breakpoints.partition_point(|&b| b <= x);
    values[idx.saturating_sub(1)]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss of parameters `theta = [weights..., bias]`.
pub fn logistic_loss(theta: &[f64], features: &[Vec<f64>], targets: &[f64]) -> f64 {
    let d = theta.len() - 1;
    let total: f64 = features
        .iter()
        .zip(targets)
        .map(|(x, &y)| {
            let z = theta[d] + x.iter().zip(theta).map(|(a, w)| a * w).sum::<f64>();
            y * softplus(-z) + (1.0 - y) * softplus(z)
        })
        .sum();
    total / features.len() as f64
}

/// Fits a logistic accuracy model by box-constrained projected Newton.
///
/// Every parameter is confined to `[-LOGISTIC_PARAM_CAP, LOGISTIC_PARAM_CAP]`
/// so that separable data has a finite, unique optimum.
pub fn fit_logistic(
    features: &[Vec<f64>],
    accuracies: &[f64],
    feature_names: Vec<String>,
) -> Result<AccuracyModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput("logistic regression"));
    }
    if features.len() != accuracies.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: accuracies.len(),
        });
    }
    let d = feature_names.len();
    if let Some(bad) = features.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }

    let n = features.len() as f64;
    let p = d + 1;
    let cap = LOGISTIC_PARAM_CAP;
    let mut theta = vec![0.0; p];
    let mut loss = logistic_loss(&theta, features, accuracies);

    for _ in 0..LOGISTIC_MAX_ITERS {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (x, &y) in features.iter().zip(accuracies) {
            let z = theta[d] + x.iter().zip(&theta).map(|(a, w)| a * w).sum::<f64>();
            let s = sigmoid(z);
            let r = (s - y) / n;
            let c = s * (1.0 - s) / n;
            for i in 0..p {
                let xi = if i == d { 1.0 } else { x[i] };
                grad[i] += r * xi;
                for j in 0..=i {
                    let xj = if j == d { 1.0 } else { x[j] };
                    hess[(i, j)] += c * xi * xj;
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                hess[(j, i)] = hess[(i, j)];
            }
        }

        // Coordinates pinned at a bound with the gradient pushing outward stay fixed.
        let free: Vec<usize> = (0..p)
            .filter(|&i| {
                let at_upper = theta[i] >= cap && grad[i] < 0.0;
                let at_lower = theta[i] <= -cap && grad[i] > 0.0;
                !(at_upper || at_lower)
            })
            .collect();
        let max_free_grad = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if free.is_empty() || max_free_grad < 1e-12 {
            break;
        }

        let k = free.len();
        let mut h_ff = DMatrix::<f64>::from_fn(k, k, |a, b| hess[(free[a], free[b])]);
        for a in 0..k {
            h_ff[(a, a)] += 1e-12;
        }
        let g_f = DVector::<f64>::from_fn(k, |a, _| grad[free[a]]);
        let newton = h_ff.cholesky().map(|ch| -ch.solve(&g_f));

        let mut directions = Vec::with_capacity(2);
        if let Some(step) = newton {
            directions.push(step);
        }
        directions.push(-g_f.clone());

        let mut improved = false;
        'directions: for dir in directions {
            let mut step = 1.0;
            while step > 1e-12 {
                let mut candidate = theta.clone();
                for (a, &i) in free.iter().enumerate() {
                    candidate[i] = (theta[i] + step * dir[a]).clamp(-cap, cap);
                }
                let cand_loss = logistic_loss(&candidate, features, accuracies);
                let decrease: f64 = free
                    .iter()
                    .map(|&i| grad[i] * (theta[i] - candidate[i]))
                    .sum();
                if cand_loss <= loss - 1e-4 * decrease && cand_loss < loss {
                    theta = candidate;
                    loss = cand_loss;
                    improved = true;
                    break 'directions;
                }
                step *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }

    Ok(AccuracyModel::Logistic {
        weights: theta[..d].to_vec(),
        bias: theta[d],
        features: feature_names,
    })
}

/// Weighted pool-adjacent-violators on values already sorted by feature.
/// Returns one fitted value per input value.
pub fn pool_adjacent_violators(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// Fits a one-dimensional isotonic accuracy model. Equal feature values are
/// merged by averaging before pooling.
pub fn fit_isotonic(
    feature: &str,
    feature_values: &[f64],
    accuracies: &[f64],
) -> Result<AccuracyModel> {
    if feature_values.is_empty() {
        return Err(Error::EmptyInput("isotonic regression"));
    }
    if feature_values.len() != accuracies.len() {
        return Err(Error::DimensionMismatch {
            expected: feature_values.len(),
            found: accuracies.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = feature_values
        .iter()
        .copied()
        .zip(accuracies.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut breakpoints: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for (x, y) in pairs {
        if breakpoints.last() == Some(&x) {
            *sums.last_mut().unwrap() += y;
            *counts.last_mut().unwrap() += 1.0;
        } else {
            breakpoints.push(x);
            sums.push(y);
            counts.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
    let values = pool_adjacent_violators(&means, &counts);
    Ok(AccuracyModel::Isotonic {
        feature: feature.to_string(),
        breakpoints,
        values,
    })
}

/// Serde adapter for extended-real thresholds: finite floats as numbers,
/// infinities as the strings `"-inf"` / `"+inf"`.
pub mod extended_real {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if *value == f64::NEG_INFINITY {
            serializer.serialize_str("-inf")
        } else if *value == f64::INFINITY {
            serializer.serialize_str("+inf")
        } else {
            serializer.serialize_f64(*value)
        }
    }

    struct ExtendedReal;

    impl Visitor<'_> for ExtendedReal {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number, \"-inf\" or \"+inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "-inf" => Ok(f64::NEG_INFINITY),
                "+inf" | "inf" => Ok(f64::INFINITY),
                other => Err(E::custom(format!("invalid threshold {other:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        deserializer.deserialize_any(ExtendedReal)
    }
}

/// Formats an extended real the way cascade files spell it.
pub fn format_threshold(t: f64) -> String {
    if t == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if t == f64::INFINITY {
        "+inf".to_string()
    } else {
        format!("{t:.6}")
    }
}

/// A pool model that abstains when its predicted accuracy is below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstainingModel {
    pub model_id: String,
    pub accuracy_model: AccuracyModel,
    #[serde(with = "extended_real")]
    pub threshold: f64,
}

impl AbstainingModel {
    pub fn new(model_id: impl Into<String>, accuracy_model: AccuracyModel, threshold: f64) -> Self {
        Self {
            model_id: model_id.into(),
            accuracy_model,
            threshold,
        }
    }

    /// Answers iff `confidence >= threshold`.
    pub fn answers(&self, confidence: f64) -> bool {
        confidence >= self.threshold
    }

    /// Logged prediction on `example_id`, or `None` for abstain.
    pub fn evaluate(&self, log: &PredictionLog, example_id: &str) -> Result<Option<Label>> {
        let m = log.model_index(&self.model_id)?;
        let e = log.example_index(example_id)?;
        let q = predict_cell(&self.accuracy_model, log, m, e)?;
        Ok(self.answers(q).then(|| log.output(m, e).prediction))
    }

    /// Decision on every example of `log`, in log order.
    pub fn decisions(&self, log: &PredictionLog) -> Result<Vec<Option<Label>>> {
        let m = log.model_index(&self.model_id)?;
        let q = confidences(&self.accuracy_model, log, m)?;
        Ok(q.into_iter()
            .enumerate()
            .map(|(e, q)| self.answers(q).then(|| log.output(m, e).prediction))
            .collect())
    }
}

/// q̂ for one cell of the log.
pub fn predict_cell(model: &AccuracyModel, log: &PredictionLog, m: usize, e: usize) -> Result<f64> {
    model
        .predict(&CellFeatures::new(log.output(m, e)))
        .map_err(|err| match err {
            Error::FeatureNotFound(feature) => Error::MissingFeature {
                feature,
                model_id: log.model_ids()[m].clone(),
                example_id: log.example_id(e).to_string(),
            },
            other => other,
        })
}

/// q̂ of pool model `m` on every example of the log.
pub fn confidences(model: &AccuracyModel, log: &PredictionLog, m: usize) -> Result<Vec<f64>> {
    (0..log.len())
        .map(|e| predict_cell(model, log, m, e))
        .collect()
}

/// Named features of pool model `m` on every example (rows follow log order).
pub fn feature_matrix(log: &PredictionLog, m: usize, names: &[String]) -> Result<Vec<Vec<f64>>> {
    (0..log.len())
        .map(|e| {
            let cell = CellFeatures::new(log.output(m, e));
            names
                .iter()
                .map(|name| {
                    cell.feature(name).ok_or_else(|| Error::MissingFeature {
                        feature: name.clone(),
                        model_id: log.model_ids()[m].clone(),
                        example_id: log.example_id(e).to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Per-example metric values of pool model `m`.
pub fn metric_values(log: &PredictionLog, m: usize, metric: AccuracyMetric) -> Vec<f64> {
    (0..log.len())
        .map(|e| metric.value(log.output(m, e).prediction, log.label(e)))
        .collect()
}

/// Which accuracy model to fit for a pool model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccuracyModelKind {
    Raw(String),
    Logistic,
    Isotonic(String),
}

impl AccuracyModelKind {
    /// Features fed to logistic fits.
    pub const LOGISTIC_FEATURES: [&'static str; 3] =
        [FEATURE_ENTROPY, FEATURE_MAX_PROB, FEATURE_LOGIT_GAP];

    pub fn fit(
        &self,
        log: &PredictionLog,
        m: usize,
        metric: AccuracyMetric,
    ) -> Result<AccuracyModel> {
        let rows: Vec<usize> = log.all_examples();
        self.fit_on(log, m, metric, &rows)
    }

    /// Fits on the given example subset of the log.
    pub fn fit_on(
        &self,
        log: &PredictionLog,
        m: usize,
        metric: AccuracyMetric,
        rows: &[usize],
    ) -> Result<AccuracyModel> {
        match self {
            AccuracyModelKind::Raw(feature) => Ok(AccuracyModel::raw(feature)),
            AccuracyModelKind::Logistic => {
                let names: Vec<String> = Self::LOGISTIC_FEATURES
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let all = feature_matrix(log, m, &names)?;
                let targets = metric_values(log, m, metric);
                let xs: Vec<Vec<f64>> = rows.iter().map(|&e| all[e].clone()).collect();
                let ys: Vec<f64> = rows.iter().map(|&e| targets[e]).collect();
                fit_logistic(&xs, &ys, names)
            }
            AccuracyModelKind::Isotonic(feature) => {
                let names = vec![feature.clone()];
                let all = feature_matrix(log, m, &names)?;
                let targets = metric_values(log, m, metric);
                let xs: Vec<f64> = rows.iter().map(|&e| all[e][0]).collect();
                let ys: Vec<f64> = rows.iter().map(|&e| targets[e]).collect();
                fit_isotonic(feature, &xs, &ys)
            }
        }
    }
}

impl AccuracyModelKind {
    /// Fits on arbitrary outputs (e.g. ensemble outputs not present in a log).
    pub fn fit_cells(&self, cells: &[&ModelOutput], targets: &[f64]) -> Result<AccuracyModel> {
        let extract = |names: &[String]| -> Result<Vec<Vec<f64>>> {
            cells
                .iter()
                .map(|o| {
                    let features = CellFeatures::new(o);
                    names
                        .iter()
                        .map(|n| {
                            features
                                .feature(n)
                                .ok_or_else(|| Error::FeatureNotFound(n.clone()))
                        })
                        .collect()
                })
                .collect()
        };
        match self {
            AccuracyModelKind::Raw(feature) => Ok(AccuracyModel::raw(feature)),
            AccuracyModelKind::Logistic => {
                let names: Vec<String> = Self::LOGISTIC_FEATURES
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let xs = extract(&names)?;
                fit_logistic(&xs, targets, names)
            }
            AccuracyModelKind::Isotonic(feature) => {
                let xs: Vec<f64> = extract(std::slice::from_ref(feature))?
                    .into_iter()
                    .map(|row| row[0])
                    .collect();
                fit_isotonic(feature, &xs, targets)
            }
        }
    }
}

impl std::str::FromStr for AccuracyModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "logistic" {
            return Ok(AccuracyModelKind::Logistic);
        }
        let known = [
            FEATURE_ENTROPY,
            FEATURE_NEG_ENTROPY,
            FEATURE_MAX_PROB,
            FEATURE_LOGIT_GAP,
        ];
        let check = |f: &str| -> Result<String> {
            if f.is_empty() {
                Err(Error::Config(format!("missing feature name in {s:?}")))
            } else if known.contains(&f) || f.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                Ok(f.to_string())
            } else {
                Err(Error::Config(format!("invalid feature name {f:?}")))
            }
        };
        if let Some(f) = s.strip_prefix("raw:") {
            return Ok(AccuracyModelKind::Raw(check(f)?));
        }
        if let Some(f) = s.strip_prefix("isotonic:") {
            return Ok(AccuracyModelKind::Isotonic(check(f)?));
        }
        Err(Error::Config(format!("unknown accuracy model {s:?}")))
    }
}

impl std::fmt::Display for AccuracyModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AccuracyModelKind::Raw(x) => write!(f, "raw:{x}"),
            AccuracyModelKind::Logistic => f.write_str("logistic"),
            AccuracyModelKind::Isotonic(x) => write!(f, "isotonic:{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub threshold: f64,
    pub abstention_rate: f64,
    pub accuracy: f64,
}

/// Accuracy on answered examples versus abstention rate, sweeping the
/// threshold over −∞ and every distinct confidence value.
///
/// The −∞ point comes first; ties in abstention rate keep that order.
pub fn tradeoff_curve(confidence: &[f64], metric: &[f64]) -> Vec<TradeoffPoint> {
    let n = confidence.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));

    let mut points = Vec::new();
    let mut answered = 0usize;
    let mut correct = 0.0;
    let mut i = 0;
    while i < n {
        let t = confidence[order[i]];
        while i < n && confidence[order[i]] == t {
            correct += metric[order[i]];
            answered += 1;
            i += 1;
        }
        points.push(TradeoffPoint {
            threshold: t,
            abstention_rate: 1.0 - answered as f64 / n as f64,
            accuracy: correct / answered as f64,
        });
    }
    let total: f64 = metric.iter().sum();
    points.push(TradeoffPoint {
        threshold: f64::NEG_INFINITY,
        abstention_rate: 0.0,
        accuracy: total / n as f64,
    });
    points.reverse();
    points.sort_by(|a, b| a.abstention_rate.total_cmp(&b.abstention_rate));
    points
}

pub fn abstention_tradeoff_curve(
    model_id: &str,
    accuracy_model: &AccuracyModel,
    log: &PredictionLog,
    metric: AccuracyMetric,
) -> Result<Vec<TradeoffPoint>> {
    let m = log.model_index(model_id)?;
    let q = confidences(accuracy_model, log, m)?;
    Ok(tradeoff_curve(&q, &metric_values(log, m, metric)))
}

/// Curve of an accuracy model that knows the true metric value.
pub fn perfect_tradeoff_curve(
    model_id: &str,
    log: &PredictionLog,
    metric: AccuracyMetric,
) -> Result<Vec<TradeoffPoint>> {
    let m = log.model_index(model_id)?;
    let values = metric_values(log, m, metric);
    Ok(tradeoff_curve(&values, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledExample;

    fn log_with_features(feature: &str, values: &[f64], correct: &[bool]) -> PredictionLog {
        let examples = (0..values.len())
            .map(|i| LabeledExample {
                example_id: format!("e{i}"),
                label: 1,
            })
            .collect();
        let outputs = values
            .iter()
            .zip(correct)
            .map(|(&v, &c)| ModelOutput {
                prediction: if c { 1 } else { 0 },
                scores: None,
                features: [(feature.to_string(), v)].into_iter().collect(),
            })
            .collect();
        PredictionLog::new(examples, vec!["m".into()], vec![outputs]).unwrap()
    }

    #[test]
    fn uniform_scores_features() {
        let f = compute_features(&[1.0, 1.0]).unwrap();
        assert!((f.entropy - 2f64.ln()).abs() < 1e-12);
        assert!((f.max_prob - 0.5).abs() < 1e-12);
        assert_eq!(f.logit_gap, 0.0);
    }

    #[test]
    fn logit_gap_is_top_two_difference() {
        let f = compute_features(&[3.0, 1.0, 0.5]).unwrap();
        assert_eq!(f.logit_gap, 2.0);
        let f = compute_features(&[0.5, 3.0, 3.0]).unwrap();
        assert_eq!(f.logit_gap, 0.0);
    }

    #[test]
    fn peaked_scores_match_direct_formula() {
        // Reference: p = 1/(1+e^-10), H = -(p ln p + (1-p) ln(1-p)), evaluated
        // via log-probabilities to avoid cancellation.
        let e = (-10f64).exp();
        let p = 1.0 / (1.0 + e);
        let q = e / (1.0 + e);
        let ln_p = -(e.ln_1p());
        let ln_q = -10.0 - e.ln_1p();
        let entropy = -(p * ln_p + q * ln_q);
        let f = compute_features(&[10.0, 0.0]).unwrap();
        assert!((f.max_prob - p).abs() < 1e-15);
        assert!(
            (f.entropy - entropy).abs() < 1e-12,
            "{} vs {}",
            f.entropy,
            entropy
        );
        assert_eq!(f.logit_gap, 10.0);
    }

    #[test]
    fn features_need_two_scores() {
        assert!(matches!(
            compute_features(&[1.0]),
            Err(Error::FeaturesUnavailable)
        ));
        assert!(matches!(
            compute_features(&[]),
            Err(Error::FeaturesUnavailable)
        ));
        assert!(matches!(
            compute_features(&[1.0, f64::NAN]),
            Err(Error::FeaturesUnavailable)
        ));
    }

    #[test]
    fn logistic_one_class_saturates() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3]).collect();
        let ys = vec![1.0; 5];
        let model = fit_logistic(&xs, &ys, vec!["f".into()]).unwrap();
        for x in &xs {
            let mut src = BTreeMap::new();
            src.insert("f".to_string(), x[0]);
            assert!(model.predict(&src).unwrap() >= 0.99);
        }
        if let AccuracyModel::Logistic { weights, bias, .. } = model {
            assert!(weights[0].abs() <= LOGISTIC_PARAM_CAP && bias.abs() <= LOGISTIC_PARAM_CAP);
        }
    }

    #[test]
    fn logistic_separable_direction() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ys = vec![0.0, 1.0];
        match fit_logistic(&xs, &ys, vec!["f".into()]).unwrap() {
            AccuracyModel::Logistic { weights, .. } => assert!(weights[0] > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logistic_errors() {
        assert!(matches!(
            fit_logistic(&[], &[], vec!["f".into()]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            fit_logistic(&[vec![0.0], vec![1.0, 2.0]], &[0.0, 1.0], vec!["f".into()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logistic_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), i as f64 / 20.0])
            .collect();
        let ys: Vec<f64> = (0..20).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(
            fit_logistic(&xs, &ys, names.clone()).unwrap(),
            fit_logistic(&xs, &ys, names).unwrap()
        );
    }

    #[test]
    fn isotonic_pools_violators() {
        let model = fit_isotonic("f", &[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]).unwrap();
        match &model {
            AccuracyModel::Isotonic {
                breakpoints,
                values,
                ..
            } => {
                assert_eq!(breakpoints, &[1.0, 2.0, 3.0]);
                assert_eq!(values, &[0.0, 0.5, 0.5]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn isotonic_identity_and_constant() {
        match fit_isotonic("f", &[1.0, 2.0, 3.0], &[0.0, 0.5, 1.0]).unwrap() {
            AccuracyModel::Isotonic { values, .. } => assert_eq!(values, vec![0.0, 0.5, 1.0]),
            other => panic!("{other:?}"),
        }
        match fit_isotonic("f", &[4.0, 5.0], &[0.7, 0.7]).unwrap() {
            AccuracyModel::Isotonic { values, .. } => assert_eq!(values, vec![0.7, 0.7]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn isotonic_merges_ties_and_rejects_empty() {
        match fit_isotonic("f", &[2.0, 1.0, 2.0], &[1.0, 0.0, 0.0]).unwrap() {
            AccuracyModel::Isotonic {
                breakpoints,
                values,
                ..
            } => {
                assert_eq!(breakpoints, vec![1.0, 2.0]);
                assert_eq!(values, vec![0.0, 0.5]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fit_isotonic("f", &[], &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn predict_variants() {
        let features = ConfidenceFeatures {
            entropy: 0.3,
            max_prob: 0.9,
            logit_gap: 1.98,
        };
        assert_eq!(
            AccuracyModel::raw("logit_gap").predict(&features).unwrap(),
            1.98
        );
        assert_eq!(
            AccuracyModel::raw("neg_entropy")
                .predict(&features)
                .unwrap(),
            -0.3
        );
        let logistic = AccuracyModel::Logistic {
            weights: vec![0.0],
            bias: 0.0,
            features: vec!["logit_gap".into()],
        };
        assert_eq!(logistic.predict(&features).unwrap(), 0.5);
        let iso = AccuracyModel::Isotonic {
            feature: "logit_gap".into(),
            breakpoints: vec![1.0, 2.0, 3.0],
            values: vec![0.0, 0.5, 0.5],
        };
        let at = |x: f64| {
            let mut m = BTreeMap::new();
            m.insert("logit_gap".to_string(), x);
            iso.predict(&m).unwrap()
        };
        assert_eq!(at(2.5), 0.5);
        assert_eq!(at(1.5), 0.0);
        assert_eq!(at(-10.0), 0.0);
        assert_eq!(at(99.0), 0.5);
        assert!(matches!(
            AccuracyModel::raw("nope").predict(&features),
            Err(Error::FeatureNotFound(_))
        ));
    }

    #[test]
    fn abstaining_threshold_rules() {
        let log = log_with_features("c", &[0.9, 0.7, 0.5], &[true, false, true]);
        let mk = |t| AbstainingModel::new("m", AccuracyModel::raw("c"), t);
        for e in ["e0", "e1", "e2"] {
            assert!(mk(f64::NEG_INFINITY).evaluate(&log, e).unwrap().is_some());
            assert!(mk(f64::INFINITY).evaluate(&log, e).unwrap().is_none());
        }
        // inclusive boundary
        assert_eq!(mk(0.7).evaluate(&log, "e1").unwrap(), Some(0));
        assert_eq!(mk(0.7).evaluate(&log, "e2").unwrap(), None);
        assert!(matches!(
            mk(0.7).evaluate(&log, "zz"),
            Err(Error::UnknownExample(_))
        ));
        let other = AbstainingModel::new("q", AccuracyModel::raw("c"), 0.0);
        assert!(matches!(
            other.evaluate(&log, "e0"),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn missing_feature_names_cell() {
        let log = log_with_features("c", &[0.9], &[true]);
        let m = AbstainingModel::new("m", AccuracyModel::raw("logit_gap"), 0.0);
        assert!(matches!(
            m.evaluate(&log, "e0"),
            Err(Error::MissingFeature { feature, .. }) if feature == "logit_gap"
        ));
    }

    #[test]
    fn tradeoff_hand_scan() {
        let log = log_with_features("c", &[0.9, 0.7, 0.5, 0.2], &[true, true, false, false]);
        let curve =
            abstention_tradeoff_curve("m", &AccuracyModel::raw("c"), &log, AccuracyMetric::Top1)
                .unwrap();
        assert_eq!(curve.len(), 5);
        assert_eq!(curve[0].threshold, f64::NEG_INFINITY);
        assert_eq!((curve[0].abstention_rate, curve[0].accuracy), (0.0, 0.5));
        let at_07 = curve.iter().find(|p| p.threshold == 0.7).unwrap();
        assert_eq!((at_07.abstention_rate, at_07.accuracy), (0.5, 1.0));
        assert!(curve
            .windows(2)
            .all(|w| w[0].abstention_rate <= w[1].abstention_rate));
    }

    #[test]
    fn perfect_curve_abstains_on_errors() {
        let log = log_with_features("c", &[0.1, 0.2, 0.3, 0.4], &[true, false, true, false]);
        let curve = perfect_tradeoff_curve("m", &log, AccuracyMetric::Top1).unwrap();
        assert!(curve
            .iter()
            .any(|p| p.abstention_rate == 0.5 && p.accuracy == 1.0));
    }

    #[test]
    fn threshold_json_spelling() {
        let m = AbstainingModel::new("m", AccuracyModel::raw("logit_gap"), f64::NEG_INFINITY);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"-inf\""), "{text}");
        let back: AbstainingModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let m = AbstainingModel::new("m", AccuracyModel::raw("logit_gap"), 1.5);
        let back: AbstainingModel =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.threshold, 1.5);
    }

    #[test]
    fn accuracy_model_kind_parsing() {
        assert_eq!(
            "logistic".parse::<AccuracyModelKind>().unwrap(),
            AccuracyModelKind::Logistic
        );
        assert_eq!(
            "raw:logit_gap".parse::<AccuracyModelKind>().unwrap(),
            AccuracyModelKind::Raw("logit_gap".into())
        );
        assert_eq!(
            "isotonic:max_prob".parse::<AccuracyModelKind>().unwrap(),
            AccuracyModelKind::Isotonic("max_prob".into())
        );
        assert!("raw:".parse::<AccuracyModelKind>().is_err());
        assert!("svm".parse::<AccuracyModelKind>().is_err());
    }
}
