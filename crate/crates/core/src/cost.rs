//! Cost functions c(m, S): the marginal cost of evaluating model `m` when the
//! models in `S` have already been evaluated on the same example.
//!
//! Graph costs are shortest paths in a reuse graph whose source vertex stands
//! for "nothing computed yet". The prefix-composite construction turns a
//! linear chain of models into an admissible set.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::abstain::AbstainingModel;
use crate::data::{Label, ModelManifest, PredictionLog, SOURCE_NAME};
use crate::error::{Error, Result};

/// Index of the source vertex in every [`CostGraph`].
pub const SOURCE: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct CostGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Default for CostGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl CostGraph {
    /// A graph holding only the source vertex.
    pub fn new() -> Self {
        Self {
            names: vec![SOURCE_NAME.to_string()],
            index: HashMap::new(),
            adjacency: vec![Vec::new()],
        }
    }

    /// Every manifest model gets a source edge at its base cost, then the
    /// listed reuse edges are added.
    pub fn from_manifest(manifest: &ModelManifest) -> Result<Self> {
        let mut graph = Self::new();
        for entry in &manifest.entries {
            graph.add_vertex(&entry.id)?;
        }
        let explicit: BTreeSet<&str> = manifest
            .reuse_edges
            .iter()
            .filter(|e| e.from.is_none())
            .map(|e| e.to.as_str())
            .collect();
        for entry in &manifest.entries {
            if !explicit.contains(entry.id.as_str()) {
                graph.add_edge(None, &entry.id, entry.cost)?;
            }
        }
        for edge in &manifest.reuse_edges {
            graph.add_edge(edge.from.as_deref(), &edge.to, edge.weight)?;
        }
        graph.check_reachable()?;
        Ok(graph)
    }

    pub fn add_vertex(&mut self, id: &str) -> Result<usize> {
        if id == SOURCE_NAME {
            return Err(Error::CostGraph(format!(
                "{SOURCE_NAME:?} is reserved for the source"
            )));
        }
        if self.index.contains_key(id) {
            return Err(Error::CostGraph(format!("duplicate vertex {id:?}")));
        }
        let v = self.names.len();
        self.names.push(id.to_string());
        self.adjacency.push(Vec::new());
        self.index.insert(id.to_string(), v);
        Ok(v)
    }

    /// Adds an edge; `from == None` is the source.
    pub fn add_edge(&mut self, from: Option<&str>, to: &str, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::CostGraph(format!(
                "edge weight {weight} must be finite and nonnegative"
            )));
        }
        let u = match from {
            None => SOURCE,
            Some(id) => self.vertex(id)?,
        };
        let v = self.vertex(to)?;
        self.adjacency[u].push((v, weight));
        Ok(())
    }

    pub fn vertex(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.names[1..].iter().map(String::as_str)
    }

    pub fn out_edges(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Lightest direct edge `from -> to`, if any.
    pub fn edge_weight(&self, from: usize, to: usize) -> Option<f64> {
        self.adjacency[from]
            .iter()
            .filter(|(v, _)| *v == to)
            .map(|(_, w)| *w)
            .min_by(f64::total_cmp)
    }

    pub fn check_reachable(&self) -> Result<()> {
        let dist = self.distances_from(&[SOURCE]);
        match dist.iter().position(|d| d.is_infinite()) {
            Some(v) => Err(Error::Unreachable(self.names[v].clone())),
            None => Ok(()),
        }
    }

    /// Multi-source Dijkstra: distance from the nearest of `sources` to every vertex.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                other
                    .0
                    .total_cmp(&self.0)
                    .then_with(|| other.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist = vec![f64::INFINITY; self.names.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Entry(0.0, s));
        }
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let next = d + w;
                if next < dist[v] {
                    dist[v] = next;
                    heap.push(Entry(next, v));
                }
            }
        }
        dist
    }

    /// Maximal linear chains among model-to-model edges: runs where each
    /// link is the only out-edge of its tail and the only in-edge of its head.
    /// Only chains of two or more models are returned.
    pub fn linear_chains(&self) -> Vec<Vec<String>> {
        let n = self.names.len();
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (u, edges) in self.adjacency.iter().enumerate().skip(1) {
            for &(v, _) in edges {
                if v != SOURCE && v != u && pairs.insert((u, v)) {
                    out_deg[u] += 1;
                    in_deg[v] += 1;
                }
            }
        }
        let mut next = vec![None; n];
        let mut has_prev = vec![false; n];
        for &(u, v) in &pairs {
            if out_deg[u] == 1 && in_deg[v] == 1 {
                next[u] = Some(v);
                has_prev[v] = true;
            }
        }
        let mut chains = Vec::new();
        for start in 1..n {
            if has_prev[start] || next[start].is_none() {
                continue;
            }
            let mut chain = vec![self.names[start].clone()];
            let mut cur = start;
            while let Some(v) = next[cur] {
                chain.push(self.names[v].clone());
                cur = v;
            }
            chains.push(chain);
        }
        chains
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// c(m, S) = c(m, ∅).
    Linear(HashMap<String, f64>),
    Graph(CostGraph),
}

/// A cost function with a memo of graph shortest-path queries.
#[derive(Debug)]
pub struct CostFunction {
    kind: CostKind,
    memo: RwLock<HashMap<(usize, Vec<usize>), f64>>,
}

impl Clone for CostFunction {
    fn clone(&self) -> Self {
        Self::from_kind(self.kind.clone())
    }
}

impl CostFunction {
    pub fn from_kind(kind: CostKind) -> Self {
        Self {
            kind,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn linear<I, S>(costs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = HashMap::new();
        for (id, c) in costs {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!("invalid cost {c}")));
            }
            map.insert(id.into(), c);
        }
        Ok(Self::from_kind(CostKind::Linear(map)))
    }

    pub fn linear_from_manifest(manifest: &ModelManifest) -> Result<Self> {
        Self::linear(manifest.entries.iter().map(|e| (e.id.clone(), e.cost)))
    }

    pub fn graph(graph: CostGraph) -> Result<Self> {
        graph.check_reachable()?;
        Ok(Self::from_kind(CostKind::Graph(graph)))
    }

    pub fn graph_from_manifest(manifest: &ModelManifest) -> Result<Self> {
        Self::graph(CostGraph::from_manifest(manifest)?)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            CostKind::Linear(_) => "linear",
            CostKind::Graph(_) => "graph",
        }
    }

    pub fn contains(&self, model_id: &str) -> bool {
        match &self.kind {
            CostKind::Linear(map) => map.contains_key(model_id),
            CostKind::Graph(g) => g.index.contains_key(model_id),
        }
    }

    pub fn from_scratch(&self, target: &str) -> Result<f64> {
        self.cost(target, std::iter::empty::<&str>())
    }

    /// c(target, already).
    pub fn cost<'a, I>(&self, target: &str, already: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a str>,
    {
        match &self.kind {
            CostKind::Linear(map) => {
                for id in already {
                    if !map.contains_key(id) {
                        return Err(Error::UnknownModel(id.to_string()));
                    }
                }
                map.get(target)
                    .copied()
                    .ok_or_else(|| Error::UnknownModel(target.to_string()))
            }
            CostKind::Graph(graph) => {
                let t = graph.vertex(target)?;
                let mut sources: Vec<usize> = already
                    .into_iter()
                    .map(|id| graph.vertex(id))
                    .collect::<Result<_>>()?;
                sources.push(SOURCE);
                sources.sort_unstable();
                sources.dedup();
                let key = (t, sources);
                if let Some(&c) = self.memo.read().expect("memo lock").get(&key) {
                    return Ok(c);
                }
                let d = graph.distances_from(&key.1)[t];
                if d.is_infinite() {
                    return Err(Error::Unreachable(target.to_string()));
                }
                self.memo.write().expect("memo lock").insert(key, d);
                Ok(d)
            }
        }
    }

    /// Adds a model vertex reachable from the source at `cost`.
    fn register(&mut self, id: &str, cost: f64) -> Result<()> {
        self.memo.get_mut().expect("memo lock").clear();
        match &mut self.kind {
            CostKind::Linear(map) => {
                if map.contains_key(id) {
                    return Err(Error::CostGraph(format!("duplicate model {id:?}")));
                }
                map.insert(id.to_string(), cost);
                Ok(())
            }
            CostKind::Graph(graph) => {
                graph.add_vertex(id)?;
                graph.add_edge(None, id, cost)
            }
        }
    }

    fn add_reuse_edge(&mut self, from: &str, to: &str, weight: f64) -> Result<()> {
        if let CostKind::Graph(graph) = &mut self.kind {
            self.memo.get_mut().expect("memo lock").clear();
            graph.add_edge(Some(from), to, weight)?;
        }
        Ok(())
    }
}

/// Vertex id of the prefix composite over `chain`.
pub fn composite_id(chain: &[String]) -> String {
    format!("composite[{}]", chain.join(">"))
}

/// Synthetic model that runs a chain prefix in order and answers with the
/// highest-index member that does not abstain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeModel {
    pub id: String,
    pub members: Vec<AbstainingModel>,
}

impl CompositeModel {
    pub fn chain(&self) -> Vec<String> {
        self.members.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn decisions(&self, log: &PredictionLog) -> Result<Vec<Option<Label>>> {
        let mut out = vec![None; log.len()];
        for member in &self.members {
            for (slot, d) in out.iter_mut().zip(member.decisions(log)?) {
                if d.is_some() {
                    *slot = d;
                }
            }
        }
        Ok(out)
    }
}

/// Registers the composite vertices of `chain` in the cost function, with
/// from-scratch cost c(m_k, ∅). Returns the composite ids in prefix order.
///
/// In graph costs each composite also gets zero-weight edges to its members
/// (running it computes them) and an edge from the previous composite with
/// the chain edge's weight.
pub fn register_prefix_composites(chain: &[String], cf: &mut CostFunction) -> Result<Vec<String>> {
    if let CostKind::Graph(graph) = cf.kind() {
        let mut ok = !chain.is_empty();
        for pair in chain.windows(2) {
            let (u, v) = (graph.vertex(&pair[0])?, graph.vertex(&pair[1])?);
            ok &= graph.edge_weight(u, v).is_some();
        }
        if !ok {
            return Err(Error::NotAChain(chain.to_vec()));
        }
    } else if chain.is_empty() {
        return Err(Error::NotAChain(Vec::new()));
    }
    let mut ids = Vec::with_capacity(chain.len());
    for k in 1..=chain.len() {
        let prefix = &chain[..k];
        let id = composite_id(prefix);
        if cf.contains(&id) {
            ids.push(id);
            continue;
        }
        let base = cf.from_scratch(&chain[k - 1])?;
        cf.register(&id, base)?;
        for member in prefix {
            cf.add_reuse_edge(&id, member, 0.0)?;
        }
        if k > 1 {
            if let CostKind::Graph(graph) = cf.kind() {
                let w = graph
                    .edge_weight(graph.vertex(&chain[k - 2])?, graph.vertex(&chain[k - 1])?)
                    .expect("chain edges checked above");
                let prev = ids[k - 2].clone();
                cf.add_reuse_edge(&prev, &id, w)?;
            }
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Builds the prefix composites m*_1..m*_k of `chain` from the given
/// abstaining wrappers and registers them in `cf`.
pub fn make_prefix_composites(
    chain: &[String],
    cf: &mut CostFunction,
    log: &PredictionLog,
    abstaining: &HashMap<String, AbstainingModel>,
) -> Result<Vec<CompositeModel>> {
    let members: Vec<AbstainingModel> = chain
        .iter()
        .map(|id| {
            log.model_index(id)?;
            abstaining
                .get(id)
                .cloned()
                .ok_or_else(|| Error::UnknownModel(id.clone()))
        })
        .collect::<Result<_>>()?;
    let ids = register_prefix_composites(chain, cf)?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(k, id)| CompositeModel {
            id,
            members: members[..=k].to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstain::AccuracyModel;
    use crate::data::{LabeledExample, ModelOutput};

    fn chain_graph() -> CostFunction {
        let mut g = CostGraph::new();
        g.add_vertex("m1").unwrap();
        g.add_vertex("m2").unwrap();
        g.add_edge(None, "m1", 2.0).unwrap();
        g.add_edge(Some("m1"), "m2", 3.0).unwrap();
        g.add_edge(None, "m2", 5.0).unwrap();
        CostFunction::graph(g).unwrap()
    }

    #[test]
    fn graph_chain_costs() {
        let cf = chain_graph();
        assert_eq!(cf.from_scratch("m2").unwrap(), 5.0);
        assert_eq!(cf.cost("m2", ["m1"]).unwrap(), 3.0);
        assert_eq!(cf.cost("m1", ["m2"]).unwrap(), 2.0);
        assert_eq!(cf.cost("m1", ["m1"]).unwrap(), 0.0);
        // memoized answer is stable
        assert_eq!(cf.cost("m2", ["m1"]).unwrap(), 3.0);
    }

    #[test]
    fn unknown_and_unreachable() {
        let cf = chain_graph();
        assert!(matches!(cf.cost("zz", []), Err(Error::UnknownModel(_))));
        assert!(matches!(cf.cost("m1", ["zz"]), Err(Error::UnknownModel(_))));
        let mut g = CostGraph::new();
        g.add_vertex("lonely").unwrap();
        assert!(matches!(CostFunction::graph(g), Err(Error::Unreachable(id)) if id == "lonely"));
    }

    #[test]
    fn linear_ignores_prior() {
        let cf = CostFunction::linear([("a", 1.5), ("b", 4.0)]).unwrap();
        assert_eq!(cf.cost("b", ["a"]).unwrap(), 4.0);
        assert_eq!(cf.from_scratch("a").unwrap(), 1.5);
        assert!(cf.cost("c", []).is_err());
    }

    #[test]
    fn manifest_implies_source_edges() {
        let manifest = ModelManifest::from_json_str(
            r#"{"models": [{"id": "a", "cost": 4}, {"id": "b", "cost": 10}],
                "reuse_edges": [{"from": "a", "to": "b", "weight": 7}]}"#,
        )
        .unwrap();
        let cf = CostFunction::graph_from_manifest(&manifest).unwrap();
        assert_eq!(cf.from_scratch("b").unwrap(), 10.0);
        assert_eq!(cf.cost("b", ["a"]).unwrap(), 7.0);
    }

    #[test]
    fn chains_are_detected() {
        let manifest = ModelManifest::from_json_str(
            r#"{"models": [{"id": "a", "cost": 1}, {"id": "b", "cost": 2}, {"id": "c", "cost": 3}, {"id": "d", "cost": 1}],
                "reuse_edges": [{"from": "a", "to": "b", "weight": 1}, {"from": "b", "to": "c", "weight": 1}]}"#,
        )
        .unwrap();
        let graph = CostGraph::from_manifest(&manifest).unwrap();
        assert_eq!(
            graph.linear_chains(),
            vec![vec!["a".to_string(), "b".into(), "c".into()]]
        );
    }

    fn three_model_log() -> (PredictionLog, HashMap<String, AbstainingModel>) {
        // feature "c" per model; each model answers where c >= 0.5
        let answers = [
            [true, false, false],
            [false, true, false],
            [false, false, true],
        ];
        let examples: Vec<LabeledExample> = (0..3)
            .map(|i| LabeledExample {
                example_id: format!("e{i}"),
                label: 0,
            })
            .collect();
        let outputs = answers
            .iter()
            .enumerate()
            .map(|(m, row)| {
                row.iter()
                    .map(|&a| ModelOutput {
                        prediction: m as u32,
                        scores: None,
                        features: [("c".to_string(), if a { 1.0 } else { 0.0 })]
                            .into_iter()
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        let ids: Vec<String> = vec!["m1".into(), "m2".into(), "m3".into()];
        let log = PredictionLog::new(examples, ids.clone(), outputs).unwrap();
        let abstaining = ids
            .iter()
            .map(|id| {
                (
                    id.clone(),
                    AbstainingModel::new(id.clone(), AccuracyModel::raw("c"), 0.5),
                )
            })
            .collect();
        (log, abstaining)
    }

    fn chain3() -> CostFunction {
        let mut g = CostGraph::new();
        for (id, c) in [("m1", 1.0), ("m2", 3.0), ("m3", 6.0)] {
            g.add_vertex(id).unwrap();
            g.add_edge(None, id, c).unwrap();
        }
        g.add_edge(Some("m1"), "m2", 2.0).unwrap();
        g.add_edge(Some("m2"), "m3", 3.0).unwrap();
        CostFunction::graph(g).unwrap()
    }

    #[test]
    fn prefix_composites() {
        let (log, abstaining) = three_model_log();
        let mut cf = chain3();
        let chain: Vec<String> = vec!["m1".into(), "m2".into(), "m3".into()];
        let composites = make_prefix_composites(&chain, &mut cf, &log, &abstaining).unwrap();
        assert_eq!(composites.len(), 3);

        // k = 1 behaves like m1 at c(m1, ∅)
        assert_eq!(
            composites[0].decisions(&log).unwrap(),
            abstaining["m1"].decisions(&log).unwrap()
        );
        assert_eq!(cf.from_scratch(&composites[0].id).unwrap(), 1.0);

        // m1 answers e0, m2 abstains there: m*_2(e0) is m1's prediction
        let d2 = composites[1].decisions(&log).unwrap();
        assert_eq!(d2[0], Some(0));
        assert_eq!(d2[1], Some(1));

        // answered set of m*_3 is the union of the members' answered sets
        let d3 = composites[2].decisions(&log).unwrap();
        assert!(d3.iter().all(Option::is_some));
        assert_eq!(d3, vec![Some(0), Some(1), Some(2)]);

        for (k, c) in composites.iter().enumerate() {
            assert_eq!(
                cf.from_scratch(&c.id).unwrap(),
                cf.from_scratch(&chain[k]).unwrap()
            );
        }
        // running the composite computes its members
        assert_eq!(cf.cost("m2", [composites[2].id.as_str()]).unwrap(), 0.0);
    }

    #[test]
    fn non_chain_rejected() {
        let (log, abstaining) = three_model_log();
        let mut cf = chain3();
        let chain: Vec<String> = vec!["m1".into(), "m3".into()];
        assert!(matches!(
            make_prefix_composites(&chain, &mut cf, &log, &abstaining),
            Err(Error::NotAChain(_))
        ));
    }
}
