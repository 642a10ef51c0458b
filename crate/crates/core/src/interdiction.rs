//! Bilevel edge interdiction: the defender protects up to `k_D` edges, then the
//! attacker removes up to `k_A` unprotected edges to maximise disruption.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::combinations;
use crate::error::{GameError, Result};

pub const INTERDICTION_LIMIT: u128 = 10_000_000;

/// Recorded with every solution.
pub const ORIENTATION: &str = "attacker maximises disruption: shortest-path length (disconnection ranks above any finite length) or negated max-flow; defender minimises the attacker's best disruption; protected edges cannot be removed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    ShortestPathLength,
    MaxFlowValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub weight: f64,
    #[serde(default)]
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInstance {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    ends: Vec<(usize, usize)>,
    source: usize,
    sink: usize,
    metric: Metric,
    attacker_budget: usize,
    defender_budget: usize,
}

impl NetworkInstance {
    /// With `directed == false` every input edge becomes two opposite arcs,
    /// each a separate interdiction target.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nodes: Vec<String>,
        edges: Vec<Edge>,
        directed: bool,
        source: &str,
        sink: &str,
        metric: Metric,
        attacker_budget: usize,
        defender_budget: usize,
    ) -> Result<Self> {
        let index = |label: &str| {
            nodes
                .iter()
                .position(|n| n == label)
                .ok_or_else(|| GameError::invalid(format!("unknown node `{label}`")))
        };
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].contains(n) {
                return Err(GameError::invalid(format!("duplicate node `{n}`")));
            }
        }
        let source_i = index(source)?;
        let sink_i = index(sink)?;
        if source_i == sink_i {
            return Err(GameError::invalid("source and sink must differ"));
        }
        let mut arcs = Vec::with_capacity(edges.len() * if directed { 1 } else { 2 });
        for e in edges {
            for (name, x) in [("weight", e.weight), ("capacity", e.capacity)] {
                if !x.is_finite() || x < 0.0 {
                    return Err(GameError::invalid(format!("edge {}->{} has invalid {name} {x}", e.from, e.to)));
                }
            }
            if !directed {
                arcs.push(Edge {
                    from: e.to.clone(),
                    to: e.from.clone(),
                    weight: e.weight,
                    capacity: e.capacity,
                });
                arcs.insert(arcs.len() - 1, e);
            } else {
                arcs.push(e);
            }
        }
        let ends = arcs
            .iter()
            .map(|e| Ok((index(&e.from)?, index(&e.to)?)))
            .collect::<Result<Vec<_>>>()?;
        if attacker_budget > arcs.len() || defender_budget > arcs.len() {
            return Err(GameError::invalid("budgets cannot exceed the number of edges"));
        }
        Ok(Self {
            nodes,
            edges: arcs,
            ends,
            source: source_i,
            sink: sink_i,
            metric,
            attacker_budget,
            defender_budget,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Directed arcs after ingestion.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> &str {
        &self.nodes[self.source]
    }

    pub fn sink(&self) -> &str {
        &self.nodes[self.sink]
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn attacker_budget(&self) -> usize {
        self.attacker_budget
    }

    pub fn defender_budget(&self) -> usize {
        self.defender_budget
    }

    pub fn with_budgets(&self, attacker: usize, defender: usize) -> Result<Self> {
        if attacker > self.edges.len() || defender > self.edges.len() {
            return Err(GameError::invalid("budgets cannot exceed the number of edges"));
        }
        let mut out = self.clone();
        out.attacker_budget = attacker;
        out.defender_budget = defender;
        Ok(out)
    }

    /// Distance used in place of "disconnected": sum of all weights plus one.
    pub fn disconnection_sentinel(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum::<f64>() + 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "camelCase")]
pub enum MetricValue {
    Distance(f64),
    Disconnected,
    Flow(f64),
}

impl MetricValue {
    /// Attacker's score; larger is more disruptive.
    pub fn disruption(&self, instance: &NetworkInstance) -> f64 {
        match *self {
            MetricValue::Distance(d) => d,
            MetricValue::Disconnected => instance.disconnection_sentinel(),
            MetricValue::Flow(f) => -f,
        }
    }
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn shortest_path(inst: &NetworkInstance, alive: &[bool]) -> Option<f64> {
    let n = inst.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for (i, &(u, v)) in inst.ends.iter().enumerate() {
        if alive[i] {
            adj[u].push((v, inst.edges[i].weight));
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[inst.source] = 0.0;
    let mut heap = BinaryHeap::from([Frontier(0.0, inst.source)]);
    while let Some(Frontier(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == inst.sink {
            return Some(d);
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Frontier(nd, v));
            }
        }
    }
    None
}

/// Edmonds-Karp on a dense residual matrix; parallel arcs add capacity.
fn max_flow(inst: &NetworkInstance, alive: &[bool]) -> f64 {
    let n = inst.nodes.len();
    let mut cap = vec![vec![0.0f64; n]; n];
    for (i, &(u, v)) in inst.ends.iter().enumerate() {
        if alive[i] && u != v {
            cap[u][v] += inst.edges[i].capacity;
        }
    }
    let (s, t) = (inst.source, inst.sink);
    let mut flow = 0.0;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] > 0.0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            return flow;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(cap[parent[v]][v]);
            v = parent[v];
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        flow += push;
    }
}

fn metric_on(inst: &NetworkInstance, alive: &[bool]) -> MetricValue {
    match inst.metric {
        Metric::ShortestPathLength => match shortest_path(inst, alive) {
            Some(d) => MetricValue::Distance(d),
            None => MetricValue::Disconnected,
        },
        Metric::MaxFlowValue => MetricValue::Flow(max_flow(inst, alive)),
    }
}

/// The instance's metric on the graph with `removed` arcs deleted.
pub fn evaluate_metric(instance: &NetworkInstance, removed: &[usize]) -> Result<MetricValue> {
    let mut alive = vec![true; instance.edges.len()];
    for &e in removed {
        if e >= alive.len() {
            return Err(GameError::invalid(format!("edge index {e} out of range")));
        }
        alive[e] = false;
    }
    Ok(metric_on(instance, &alive))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterdictionSolution {
    /// Protected arc indices.
    pub defender_set: Vec<usize>,
    /// Attacker's best response to the protected set.
    pub attacker_set: Vec<usize>,
    pub value: MetricValue,
    /// Metric in natural units; the sentinel distance when disconnected.
    pub objective: f64,
    /// Attacker-oriented score that the defender minimised.
    pub disruption: f64,
    pub disconnected: bool,
    pub orientation: &'static str,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Subsets of `pool` of size `0..=k`, by size then lexicographically.
fn subsets_up_to(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    (0..=k.min(pool.len()))
        .flat_map(|size| combinations(pool.len(), size))
        .map(|idx| idx.into_iter().map(|i| pool[i]).collect())
        .collect()
}

fn best_attack(inst: &NetworkInstance, protected: &[usize]) -> (f64, Vec<usize>, MetricValue) {
    let pool: Vec<usize> = (0..inst.edges.len()).filter(|e| !protected.contains(e)).collect();
    let mut best: Option<(f64, Vec<usize>, MetricValue)> = None;
    for attack in subsets_up_to(&pool, inst.attacker_budget) {
        let mut alive = vec![true; inst.edges.len()];
        for &e in &attack {
            alive[e] = false;
        }
        let value = metric_on(inst, &alive);
        let score = value.disruption(inst);
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, attack, value));
        }
    }
    best.expect("the empty attack is always available")
}

/// Exhaustive min-max over protected sets and attacks.
pub fn solve_minmax_interdiction(instance: &NetworkInstance) -> Result<InterdictionSolution> {
    let e = instance.edges.len();
    let bound = binomial(e, instance.defender_budget).saturating_mul(binomial(e, instance.attacker_budget));
    if bound > INTERDICTION_LIMIT {
        return Err(GameError::UnsupportedSize {
            what: "C(|E|, k_D) * C(|E|, k_A)".into(),
            actual: bound,
            limit: INTERDICTION_LIMIT,
        });
    }
    let all: Vec<usize> = (0..e).collect();
    let defences = subsets_up_to(&all, instance.defender_budget);
    let outcomes: Vec<(f64, Vec<usize>, MetricValue)> = defences
        .par_iter()
        .map(|d| best_attack(instance, d))
        .collect();
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        if o.0 < outcomes[best].0 {
            best = i;
        }
    }
    let (disruption, attacker_set, value) = outcomes[best].clone();
    let objective = match value {
        MetricValue::Distance(d) | MetricValue::Flow(d) => d,
        MetricValue::Disconnected => instance.disconnection_sentinel(),
    };
    Ok(InterdictionSolution {
        defender_set: defences[best].clone(),
        attacker_set,
        value,
        objective,
        disruption,
        disconnected: value == MetricValue::Disconnected,
        orientation: ORIENTATION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(from: &str, to: &str, w: f64) -> Edge {
        Edge {
            from: from.into(),
            to: to.into(),
            weight: w,
            capacity: w,
        }
    }

    fn nodes(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn diamond(metric: Metric, ka: usize, kd: usize) -> NetworkInstance {
        NetworkInstance::new(
            nodes(&["s", "a", "b", "t"]),
            vec![edge("s", "a", 1.0), edge("a", "t", 1.0), edge("s", "b", 1.0), edge("b", "t", 1.0)],
            true,
            "s",
            "t",
            metric,
            ka,
            kd,
        )
        .unwrap()
    }

    #[test]
    fn metric_examples() {
        let single = NetworkInstance::new(nodes(&["s", "t"]), vec![edge("s", "t", 3.0)], true, "s", "t", Metric::ShortestPathLength, 0, 0).unwrap();
        assert_eq!(evaluate_metric(&single, &[]).unwrap(), MetricValue::Distance(3.0));
        assert_eq!(evaluate_metric(&single, &[0]).unwrap(), MetricValue::Disconnected);

        let d = diamond(Metric::ShortestPathLength, 0, 0);
        assert_eq!(evaluate_metric(&d, &[1]).unwrap(), MetricValue::Distance(2.0));
        let f = diamond(Metric::MaxFlowValue, 0, 0);
        assert_eq!(evaluate_metric(&f, &[]).unwrap(), MetricValue::Flow(2.0));
        assert_eq!(evaluate_metric(&f, &[0]).unwrap(), MetricValue::Flow(1.0));
        assert!(evaluate_metric(&f, &[9]).is_err());
    }

    #[test]
    fn unknown_nodes_and_bad_weights_rejected() {
        let bad = NetworkInstance::new(nodes(&["s", "t"]), vec![edge("s", "x", 1.0)], true, "s", "t", Metric::MaxFlowValue, 0, 0);
        assert!(bad.unwrap_err().is_validation());
        let neg = NetworkInstance::new(nodes(&["s", "t"]), vec![edge("s", "t", -1.0)], true, "s", "t", Metric::MaxFlowValue, 0, 0);
        assert!(neg.is_err());
        let same = NetworkInstance::new(nodes(&["s", "t"]), vec![], true, "s", "s", Metric::MaxFlowValue, 0, 0);
        assert!(same.is_err());
    }

    #[test]
    fn undirected_edges_expand_to_arc_pairs() {
        let g = NetworkInstance::new(nodes(&["s", "t"]), vec![edge("t", "s", 2.0)], false, "s", "t", Metric::ShortestPathLength, 1, 0).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!((g.edges()[1].from.as_str(), g.edges()[1].to.as_str()), ("s", "t"));
        assert_eq!(evaluate_metric(&g, &[0]).unwrap(), MetricValue::Distance(2.0));
    }

    #[test]
    fn no_attack_gives_base_metric() {
        let d = diamond(Metric::ShortestPathLength, 0, 2);
        let sol = solve_minmax_interdiction(&d).unwrap();
        assert_eq!(sol.objective, 2.0);
        assert!(sol.defender_set.is_empty());
        assert!(sol.attacker_set.is_empty());
    }

    #[test]
    fn diamond_with_one_protection() {
        let d = diamond(Metric::ShortestPathLength, 1, 1);
        let sol = solve_minmax_interdiction(&d).unwrap();
        assert_eq!(sol.objective, 2.0);
        assert!(!sol.disconnected);
        assert_eq!(sol.defender_set, Vec::<usize>::new());
        assert_eq!(evaluate_metric(&d, &sol.attacker_set).unwrap(), sol.value);
        assert_eq!(sol.orientation, ORIENTATION);
    }

    #[test]
    fn series_graph_is_cut() {
        let g = NetworkInstance::new(
            nodes(&["s", "a", "t"]),
            vec![edge("s", "a", 1.0), edge("a", "t", 1.0)],
            true,
            "s",
            "t",
            Metric::ShortestPathLength,
            1,
            0,
        )
        .unwrap();
        let sol = solve_minmax_interdiction(&g).unwrap();
        assert!(sol.disconnected);
        assert_eq!(sol.value, MetricValue::Disconnected);
        assert_eq!(sol.objective, 3.0);
        assert_eq!(sol.attacker_set, vec![0]);
    }

    #[test]
    fn flow_interdiction_protects_capacity() {
        let f = diamond(Metric::MaxFlowValue, 1, 1);
        let sol = solve_minmax_interdiction(&f).unwrap();
        // any attack halves the flow; protection cannot prevent that
        assert_eq!(sol.value, MetricValue::Flow(1.0));
        assert_eq!(sol.disruption, -1.0);
    }

    #[test]
    fn oversize_is_rejected() {
        let n: Vec<String> = (0..30).map(|i| format!("v{i}")).collect();
        let edges: Vec<Edge> = (0..29)
            .flat_map(|i| (i + 1..30).map(move |j| edge(&format!("v{i}"), &format!("v{j}"), 1.0)))
            .collect();
        let g = NetworkInstance::new(n, edges, true, "v0", "v29", Metric::ShortestPathLength, 3, 3).unwrap();
        match solve_minmax_interdiction(&g) {
            Err(GameError::UnsupportedSize { limit, .. }) => assert_eq!(limit, INTERDICTION_LIMIT),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(2, 3), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }
}
