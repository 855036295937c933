//! Ground truth for the approximation guarantees: exhaustive optimal
//! cascades, the single-model rate bound, domination checks and the
//! Min-Sum Set Cover reduction, plus seeded property suites over random
//! instances.
//!
//! Instances are answered-set tables: which examples each model answers,
//! independent of how its threshold was chosen.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstain::{AbstainingModel, AccuracyModel};
use crate::cascade::{
    greedy_cascade, AccuracyConstraint, FixedGenerator, GeneratedModel, GreedyOptions,
    GreedyOutcome,
};
use crate::cost::CostFunction;
use crate::data::{Label, LabeledExample, ModelOutput, PredictionLog};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Hard limits for [`brute_force_opt`].
pub const MAX_OPT_MODELS: usize = 8;
pub const MAX_OPT_EXAMPLES: usize = 12;

/// Feature used to encode table answers in a log.
const ANSWER_FEATURE: &str = "answers";

#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    pub id: String,
    /// Prediction per example, `None` where the model abstains.
    pub outputs: Vec<Option<Label>>,
}

/// Fixed abstaining behavior of a set of models on a set of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerTable {
    pub labels: Vec<Label>,
    pub models: Vec<TableModel>,
}

impl AnswerTable {
    /// Every model predicts the (single) label correctly where it answers.
    pub fn from_sets(examples: usize, sets: Vec<(String, Vec<usize>)>) -> Self {
        let models = sets
            .into_iter()
            .map(|(id, answered)| TableModel {
                id,
                outputs: (0..examples)
                    .map(|e| answered.contains(&e).then_some(0))
                    .collect(),
            })
            .collect();
        Self {
            labels: vec![0; examples],
            models,
        }
    }

    pub fn examples(&self) -> usize {
        self.labels.len()
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }

    /// Bit mask over positions of `within` answered by model `m`.
    pub fn mask(&self, m: usize, within: &[usize]) -> u64 {
        within
            .iter()
            .enumerate()
            .filter(|(_, &e)| self.models[m].outputs[e].is_some())
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub fn answered(&self, m: usize, within: &[usize]) -> Vec<usize> {
        within
            .iter()
            .copied()
            .filter(|&e| self.models[m].outputs[e].is_some())
            .collect()
    }

    /// Log plus one abstaining model per table column, reproducing the table
    /// exactly. Abstained cells log a prediction of 0 with feature 0.
    pub fn to_log(&self) -> (PredictionLog, Vec<GeneratedModel>) {
        let examples = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabeledExample {
                example_id: format!("x{i:02}"),
                label,
            })
            .collect();
        let mut ids: Vec<(usize, &TableModel)> = self.models.iter().enumerate().collect();
        ids.sort_by(|a, b| a.1.id.cmp(&b.1.id));
        let outputs = ids
            .iter()
            .map(|(_, m)| {
                m.outputs
                    .iter()
                    .map(|o| ModelOutput {
                        prediction: o.unwrap_or(0),
                        scores: None,
                        features: [(
                            ANSWER_FEATURE.to_string(),
                            if o.is_some() { 1.0 } else { 0.0 },
                        )]
                        .into_iter()
                        .collect(),
                    })
                    .collect()
            })
            .collect();
        let log = PredictionLog::new(
            examples,
            ids.iter().map(|(_, m)| m.id.clone()).collect(),
            outputs,
        )
        .expect("table ids are unique");
        let models = self
            .models
            .iter()
            .map(|m| {
                GeneratedModel::Pool(AbstainingModel::new(
                    m.id.clone(),
                    AccuracyModel::raw(ANSWER_FEATURE),
                    0.5,
                ))
            })
            .collect();
        (log, models)
    }
}

/// T(S) and C_Σ(S) of a model sequence on the examples `within`.
///
/// Examples no stage answers accrue the full sequence cost.
pub fn sequence_cost(
    table: &AnswerTable,
    within: &[usize],
    sequence: &[usize],
    cf: &CostFunction,
) -> Result<(f64, f64)> {
    let mut covered = 0u64;
    let full = (1u64 << within.len()) - 1;
    let mut total = 0.0;
    let mut stage_sum = 0.0;
    let mut prior: Vec<&str> = Vec::new();
    for &m in sequence {
        let c = cf.cost(&table.models[m].id, prior.iter().copied())?;
        total += (full & !covered).count_ones() as f64 * c;
        stage_sum += c;
        covered |= table.mask(m, within);
        prior.push(&table.models[m].id);
    }
    Ok((total, stage_sum))
}

/// Minimum T over cascades of distinct models, by exhaustive search.
///
/// With fixed answered sets and c(m, S) ≤ c(m, ∅), repeating a model or
/// adding one that answers nothing new never lowers T, so only sequences of
/// distinct productive models are enumerated. Every stage must satisfy the
/// constraint on the examples it newly answers, and a sequence is complete
/// once it answers every example some model answers; examples no model
/// answers accrue the whole sequence cost.
///
/// Returns the best sequence (model indices) and its cost, or `None` when no
/// complete sequence satisfies the constraint.
pub fn brute_force_opt(
    within: &[usize],
    table: &AnswerTable,
    cf: &CostFunction,
    constraint: &AccuracyConstraint,
) -> Result<Option<(Vec<usize>, f64)>> {
    if table.models.len() > MAX_OPT_MODELS {
        return Err(Error::TooLarge(format!(
            "{} models (max {MAX_OPT_MODELS})",
            table.models.len()
        )));
    }
    if within.len() > MAX_OPT_EXAMPLES {
        return Err(Error::TooLarge(format!(
            "{} examples (max {MAX_OPT_EXAMPLES})",
            within.len()
        )));
    }
    let (log, models) = table.to_log();
    let decisions: Vec<Vec<Option<Label>>> = models
        .iter()
        .map(|m| m.decisions(&log))
        .collect::<Result<_>>()?;
    let masks: Vec<u64> = (0..table.models.len())
        .map(|m| table.mask(m, within))
        .collect();
    let target = masks.iter().fold(0, |a, &m| a | m);
    let full = if within.is_empty() {
        0
    } else {
        (1u64 << within.len()) - 1
    };

    struct Search<'a> {
        within: &'a [usize],
        table: &'a AnswerTable,
        cf: &'a CostFunction,
        constraint: &'a AccuracyConstraint,
        log: &'a PredictionLog,
        decisions: &'a [Vec<Option<Label>>],
        masks: &'a [u64],
        target: u64,
        full: u64,
        best: Option<(Vec<usize>, f64)>,
    }

    impl Search<'_> {
        fn run(&mut self, seq: &mut Vec<usize>, covered: u64, partial: f64) -> Result<()> {
            if let Some((_, best)) = &self.best {
                if partial >= *best && covered != self.target {
                    return Ok(());
                }
            }
            if covered == self.target {
                if self.best.as_ref().is_none_or(|(_, b)| partial < *b) {
                    self.best = Some((seq.clone(), partial));
                }
                return Ok(());
            }
            let prior: Vec<&str> = seq
                .iter()
                .map(|&m| self.table.models[m].id.as_str())
                .collect();
            for m in 0..self.masks.len() {
                let fresh = self.masks[m] & !covered;
                if fresh == 0 || seq.contains(&m) {
                    continue;
                }
                let slice: Vec<usize> = (0..self.within.len())
                    .filter(|i| fresh & (1 << i) != 0)
                    .map(|i| self.within[i])
                    .collect();
                if !self
                    .constraint
                    .check(&self.decisions[m], &slice, self.log)?
                {
                    continue;
                }
                let c = self
                    .cf
                    .cost(&self.table.models[m].id, prior.iter().copied())?;
                let step = (self.full & !covered).count_ones() as f64 * c;
                seq.push(m);
                self.run(seq, covered | self.masks[m], partial + step)?;
                seq.pop();
            }
            Ok(())
        }
    }

    let mut search = Search {
        within,
        table,
        cf,
        constraint,
        log: &log,
        decisions: &decisions,
        masks: &masks,
        target,
        full,
        best: None,
    };
    search.run(&mut Vec::new(), 0, 0.0)?;
    Ok(search.best)
}

/// r* = max over models of |A(m, R)| / c(m, ∅). Models answering nothing
/// contribute 0; a free model answering something gives +∞.
pub fn max_single_model_rate(
    within: &[usize],
    table: &AnswerTable,
    cf: &CostFunction,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (m, model) in table.models.iter().enumerate() {
        let n = table.answered(m, within).len();
        if n == 0 {
            continue;
        }
        let c = cf.from_scratch(&model.id)?;
        best = best.max(if c == 0.0 {
            f64::INFINITY
        } else {
            n as f64 / c
        });
    }
    Ok(best)
}

/// Exact r* for integer costs, as a (numerator, denominator) pair.
pub fn max_single_model_rate_exact(
    within: &[usize],
    table: &AnswerTable,
    costs: &[u64],
) -> (u64, u64) {
    let mut best = (0u64, 1u64);
    for (m, &cost) in costs.iter().enumerate().take(table.models.len()) {
        let n = table.answered(m, within).len() as u64;
        if n == 0 {
            continue;
        }
        // n / cost > best.0 / best.1
        if n as u128 * best.1 as u128 > best.0 as u128 * cost as u128 {
            best = (n, cost);
        }
    }
    best
}

/// Whether `set` dominates `sequence`: its from-scratch costs sum to at most
/// C_Σ(sequence), and it answers every example of `log` the sequence answers.
///
/// Cost sums are compared with a 1e-9 relative tolerance since the two sides
/// add the same terms in different orders.
pub fn check_domination(
    set: &[GeneratedModel],
    sequence: &[GeneratedModel],
    cf: &CostFunction,
    log: &PredictionLog,
) -> Result<bool> {
    let set_cost: f64 = set
        .iter()
        .map(|m| m.stage_cost(cf, &BTreeSet::new(), 0.0))
        .sum::<Result<f64>>()?;
    let seq_cost: f64 = crate::cascade::stage_costs(sequence, cf, 0.0)?
        .into_iter()
        .sum();
    if set_cost > seq_cost + 1e-9 * seq_cost.abs().max(1.0) {
        return Ok(false);
    }
    let covered = |models: &[GeneratedModel]| -> Result<Vec<bool>> {
        let mut out = vec![false; log.len()];
        for m in models {
            for (slot, d) in out.iter_mut().zip(m.decisions(log)?) {
                *slot |= d.is_some();
            }
        }
        Ok(out)
    };
    let by_set = covered(set)?;
    let by_seq = covered(sequence)?;
    Ok(by_seq.iter().zip(&by_set).all(|(&s, &t)| !s || t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetCoverInstance {
    pub elements: Vec<String>,
    pub sets: Vec<(String, Vec<String>)>,
}

impl SetCoverInstance {
    fn member_indices(&self) -> Vec<Vec<usize>> {
        self.sets
            .iter()
            .map(|(_, members)| {
                members
                    .iter()
                    .filter_map(|m| self.elements.iter().position(|e| e == m))
                    .collect()
            })
            .collect()
    }

    pub fn check_coverable(&self) -> Result<()> {
        let members = self.member_indices();
        for (i, e) in self.elements.iter().enumerate() {
            if !members.iter().any(|s| s.contains(&i)) {
                return Err(Error::Uncoverable(e.clone()));
            }
        }
        Ok(())
    }
}

/// Min-Sum Set Cover as a cascade instance: one example per element, one
/// model per set answering exactly its members, unit costs and a constraint
/// that always holds.
pub fn reduce_mssc(
    instance: &SetCoverInstance,
) -> Result<(AnswerTable, CostFunction, AccuracyConstraint)> {
    instance.check_coverable()?;
    let members = instance.member_indices();
    let sets: Vec<(String, Vec<usize>)> = instance
        .sets
        .iter()
        .zip(members)
        .map(|((id, _), m)| (id.clone(), m))
        .collect();
    let cf = CostFunction::linear(sets.iter().map(|(id, _)| (id.clone(), 1.0)))?;
    let table = AnswerTable::from_sets(instance.elements.len(), sets);
    Ok((table, cf, AccuracyConstraint::AlwaysTrue))
}

/// Σ over elements of the 1-based position of the first set covering it.
pub fn mssc_cost(instance: &SetCoverInstance, order: &[usize]) -> usize {
    let members = instance.member_indices();
    (0..instance.elements.len())
        .map(|e| {
            order
                .iter()
                .position(|&s| members[s].contains(&e))
                .map_or(order.len(), |p| p + 1)
        })
        .sum()
}

/// Classical greedy: repeatedly take the set covering the most uncovered
/// elements, lowest index on ties.
pub fn mssc_greedy(instance: &SetCoverInstance) -> (Vec<usize>, usize) {
    let members = instance.member_indices();
    let mut covered = vec![false; instance.elements.len()];
    let mut order = Vec::new();
    loop {
        let gain = |s: usize| members[s].iter().filter(|&&e| !covered[e]).count();
        let mut best: Option<(usize, usize)> = None;
        for s in 0..members.len() {
            let g = gain(s);
            if g > 0 && best.is_none_or(|(_, bg)| g > bg) {
                best = Some((s, g));
            }
        }
        let Some((s, _)) = best else { break };
        for &e in &members[s] {
            covered[e] = true;
        }
        order.push(s);
    }
    let cost = mssc_cost(instance, &order);
    (order, cost)
}

/// Minimum over all set orders, by enumerating permutations.
pub fn mssc_optimum(instance: &SetCoverInstance) -> usize {
    fn permute(k: usize, items: &mut Vec<usize>, instance: &SetCoverInstance, best: &mut usize) {
        if k == items.len() {
            *best = (*best).min(mssc_cost(instance, items));
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(k + 1, items, instance, best);
            items.swap(k, i);
        }
    }
    let mut items: Vec<usize> = (0..instance.sets.len()).collect();
    let mut best = usize::MAX;
    permute(0, &mut items, instance, &mut best);
    best
}

/// Random answered-set instance with costs in tenths.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub table: AnswerTable,
    /// Model costs in units of 0.1.
    pub cost_tenths: Vec<u64>,
}

impl RandomInstance {
    /// Up to `max_models` models over up to `max_examples` examples; every
    /// example is answered by at least one model; costs uniform on
    /// {0.1, 0.2, ..., 10.0}.
    pub fn generate(rng: &mut impl Rng, max_models: usize, max_examples: usize) -> Self {
        let models = rng.gen_range(1..=max_models);
        let examples = rng.gen_range(1..=max_examples);
        let mut sets: Vec<Vec<usize>> = (0..models)
            .map(|_| {
                let p: f64 = rng.gen_range(0.15..0.7);
                (0..examples).filter(|_| rng.gen_bool(p)).collect()
            })
            .collect();
        for e in 0..examples {
            if !sets.iter().any(|s| s.contains(&e)) {
                let m = rng.gen_range(0..models);
                sets[m].push(e);
                sets[m].sort_unstable();
            }
        }
        let table = AnswerTable::from_sets(
            examples,
            sets.into_iter()
                .enumerate()
                .map(|(i, s)| (format!("m{i}"), s))
                .collect(),
        );
        let cost_tenths = (0..models).map(|_| rng.gen_range(1..=100)).collect();
        Self { table, cost_tenths }
    }

    pub fn cost_function(&self) -> CostFunction {
        CostFunction::linear(
            self.table
                .models
                .iter()
                .zip(&self.cost_tenths)
                .map(|(m, &c)| (m.id.clone(), c as f64 / 10.0)),
        )
        .expect("costs are positive")
    }
}

/// Random coverable set-cover instance.
pub fn random_set_cover(
    rng: &mut impl Rng,
    max_sets: usize,
    max_elements: usize,
) -> SetCoverInstance {
    let n_sets = rng.gen_range(1..=max_sets);
    let n_elems = rng.gen_range(1..=max_elements);
    let elements: Vec<String> = (0..n_elems).map(|i| format!("u{i}")).collect();
    let mut members: Vec<BTreeSet<usize>> = (0..n_sets)
        .map(|_| (0..n_elems).filter(|_| rng.gen_bool(0.4)).collect())
        .collect();
    for e in 0..n_elems {
        if !members.iter().any(|s| s.contains(&e)) {
            members[rng.gen_range(0..n_sets)].insert(e);
        }
    }
    SetCoverInstance {
        sets: members
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                (
                    format!("Z{i:02}"),
                    s.into_iter().map(|e| elements[e].clone()).collect(),
                )
            })
            .collect(),
        elements,
    }
}

/// Greedy cascade over a table with its models as the fixed candidate pool.
pub fn greedy_on_table(
    table: &AnswerTable,
    within: &[usize],
    cf: &CostFunction,
    constraint: &AccuracyConstraint,
    exec: Execution,
) -> Result<GreedyOutcome> {
    let (log, models) = table.to_log();
    greedy_cascade(
        within,
        constraint,
        cf,
        &FixedGenerator(models),
        &log,
        GreedyOptions {
            exec,
            ensemble_overhead: 0.0,
        },
    )
}

/// Every sequence of distinct models drawn from `0..n`, including the empty one.
pub fn all_sequences(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for seq in &frontier {
            for m in 0..n {
                if !seq.contains(&m) {
                    let mut s: Vec<usize> = seq.clone();
                    s.push(m);
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Per-trial seed derived from the suite seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trial: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: u64,
    pub violations: Vec<Violation>,
    /// Largest observed GREEDY / OPT, for the approximation suite.
    pub worst_ratio: Option<f64>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn collect_suite(
    name: &'static str,
    trials: u64,
    outcomes: Vec<Result<(Option<f64>, Option<String>)>>,
    seed: u64,
) -> Result<SuiteReport> {
    let mut violations = Vec::new();
    let mut worst: Option<f64> = None;
    for (t, outcome) in outcomes.into_iter().enumerate() {
        let (ratio, failure) = outcome?;
        if let Some(r) = ratio {
            worst = Some(worst.map_or(r, |w| w.max(r)));
        }
        if let Some(message) = failure {
            violations.push(Violation {
                trial: t as u64,
                seed: trial_seed(seed, t as u64),
                message,
            });
        }
    }
    Ok(SuiteReport {
        name,
        trials,
        violations,
        worst_ratio: worst,
    })
}

/// T of a greedy trace in integer cost units.
fn trace_cost_units(
    trace: &crate::cascade::CascadeTrace,
    table: &AnswerTable,
    units: &[u64],
) -> u64 {
    trace
        .stages
        .iter()
        .map(|s| {
            let m = table
                .model_index(&s.model.display_name())
                .expect("table model");
            s.remaining as u64 * units[m]
        })
        .sum()
}

fn sequence_cost_units(
    table: &AnswerTable,
    within: &[usize],
    sequence: &[usize],
    units: &[u64],
) -> u64 {
    let full = (1u64 << within.len()) - 1;
    let mut covered = 0u64;
    let mut total = 0;
    for &m in sequence {
        total += (full & !covered).count_ones() as u64 * units[m];
        covered |= table.mask(m, within);
    }
    total
}

/// GREEDY ≤ 4·OPT on random instances with linear costs and an
/// always-satisfied constraint, compared exactly in tenths.
pub fn approximation_suite(trials: u64, seed: u64, exec: Execution) -> Result<SuiteReport> {
    let outcomes = par::map_range(
        exec,
        trials as usize,
        |t| -> Result<(Option<f64>, Option<String>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t as u64));
            let inst = RandomInstance::generate(&mut rng, 6, 10);
            let cf = inst.cost_function();
            let within: Vec<usize> = (0..inst.table.examples()).collect();
            let ac = AccuracyConstraint::AlwaysTrue;
            let Some(trace) =
                greedy_on_table(&inst.table, &within, &cf, &ac, Execution::Sequential)?.cascade()
            else {
                return Ok((None, Some("greedy failed on a coverable instance".into())));
            };
            let Some((best, _)) = brute_force_opt(&within, &inst.table, &cf, &ac)? else {
                return Ok((None, Some("no complete sequence found".into())));
            };
            let greedy = trace_cost_units(&trace, &inst.table, &inst.cost_tenths);
            let opt = sequence_cost_units(&inst.table, &within, &best, &inst.cost_tenths);
            let ratio = greedy as f64 / opt as f64;
            let failure =
                (greedy > 4 * opt).then(|| format!("GREEDY {greedy} > 4 * OPT {opt} (tenths)"));
            Ok((Some(ratio), failure))
        },
    );
    collect_suite("4-approximation", trials, outcomes, seed)
}

/// |A(S, R)| ≤ r*·C_Σ(S) for every sequence of distinct models, exactly.
pub fn rate_bound_suite(trials: u64, seed: u64, exec: Execution) -> Result<SuiteReport> {
    let outcomes = par::map_range(
        exec,
        trials as usize,
        |t| -> Result<(Option<f64>, Option<String>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t as u64));
            let inst = RandomInstance::generate(&mut rng, 6, 10);
            let within: Vec<usize> = (0..inst.table.examples()).collect();
            let (num, den) = max_single_model_rate_exact(&within, &inst.table, &inst.cost_tenths);
            for seq in all_sequences(inst.table.models.len()) {
                let answered = seq
                    .iter()
                    .fold(0u64, |a, &m| a | inst.table.mask(m, &within))
                    .count_ones() as u128;
                let stage_sum: u128 = seq.iter().map(|&m| inst.cost_tenths[m] as u128).sum();
                // answered <= (num / den) * stage_sum
                if answered * den as u128 > num as u128 * stage_sum {
                    return Ok((
                        None,
                        Some(format!(
                            "sequence {seq:?} answers {answered} > r* * C_sigma"
                        )),
                    ));
                }
            }
            Ok((None, None))
        },
    );
    collect_suite("lemma-1 rate bound", trials, outcomes, seed)
}

/// Reduction + greedy equals classical greedy; reduction + brute force
/// equals the exhaustive optimum.
pub fn mssc_suite(trials: u64, seed: u64, exec: Execution) -> Result<SuiteReport> {
    let outcomes = par::map_range(
        exec,
        trials as usize,
        |t| -> Result<(Option<f64>, Option<String>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t as u64));
            let inst = random_set_cover(&mut rng, 5, 8);
            let (table, cf, ac) = reduce_mssc(&inst)?;
            let within: Vec<usize> = (0..table.examples()).collect();
            let Some(trace) =
                greedy_on_table(&table, &within, &cf, &ac, Execution::Sequential)?.cascade()
            else {
                return Ok((None, Some("greedy failed on a coverable instance".into())));
            };
            let (_, classical) = mssc_greedy(&inst);
            let opt = brute_force_opt(&within, &table, &cf, &ac)?.map(|(_, v)| v);
            let exhaustive = mssc_optimum(&inst);
            let mut problems = Vec::new();
            if trace.total_cost != classical as f64 {
                problems.push(format!(
                    "greedy cascade {} != greedy MSSC {classical}",
                    trace.total_cost
                ));
            }
            if opt != Some(exhaustive as f64) {
                problems.push(format!("cascade OPT {opt:?} != MSSC optimum {exhaustive}"));
            }
            Ok((None, (!problems.is_empty()).then(|| problems.join("; "))))
        },
    );
    collect_suite("min-sum set cover equivalence", trials, outcomes, seed)
}

/// Under linear costs every repeat-free sequence is dominated by its set.
pub fn domination_suite(trials: u64, seed: u64, exec: Execution) -> Result<SuiteReport> {
    let outcomes = par::map_range(
        exec,
        trials as usize,
        |t| -> Result<(Option<f64>, Option<String>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t as u64));
            let inst = RandomInstance::generate(&mut rng, 6, 10);
            let cf = inst.cost_function();
            let (log, models) = inst.table.to_log();
            let mut order: Vec<usize> = (0..models.len()).collect();
            // random repeat-free sequence
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let len = rng.gen_range(0..=order.len());
            let sequence: Vec<GeneratedModel> =
                order[..len].iter().map(|&m| models[m].clone()).collect();
            let mut set_order = order[..len].to_vec();
            set_order.sort_unstable();
            let set: Vec<GeneratedModel> = set_order.iter().map(|&m| models[m].clone()).collect();
            let ok = check_domination(&set, &sequence, &cf, &log)?;
            Ok((
                None,
                (!ok).then(|| format!("set of {:?} does not dominate its sequence", &order[..len])),
            ))
        },
    );
    collect_suite("domination", trials, outcomes, seed)
}

/// All four suites, in a fixed order.
pub fn run_property_suites(trials: u64, seed: u64, exec: Execution) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        approximation_suite(trials, seed, exec)?,
        rate_bound_suite(trials, seed, exec)?,
        mssc_suite(trials, seed, exec)?,
        domination_suite(trials, seed, exec)?,
    ])
}
