//! Multi-agent workflows: agents wired by forward and feedback edges, run in
//! rounds with failure injection, voting, and a debate protocol.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::prompt::{InfoContext, PromptSpaceGame, ReasoningPolicy, Role, Sampling, Slot, StructuredPrompt};

pub const DEFAULT_SAMPLE_COUNT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Topology {
    Chain,
    Star,
    Parallel,
    Feedback,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EdgeKind {
    Forward,
    Feedback,
}

/// `node.port`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: String,
    pub port: String,
}

impl PortRef {
    pub fn new(node: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            node: node.into(),
            port: port.into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.rsplit_once('.') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok(Self::new(n, p)),
            _ => Err(GameError::Configuration(format!("`{text}` is not of the form node.port"))),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

impl Serialize for PortRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PortRef::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowEdge {
    pub from: PortRef,
    pub to: PortRef,
    pub kind: EdgeKind,
}

impl WorkflowEdge {
    pub fn forward(from: &str, to: &str) -> Result<Self> {
        Ok(Self {
            from: PortRef::parse(from)?,
            to: PortRef::parse(to)?,
            kind: EdgeKind::Forward,
        })
    }

    pub fn feedback(from: &str, to: &str) -> Result<Self> {
        Ok(Self {
            kind: EdgeKind::Feedback,
            ..Self::forward(from, to)?
        })
    }
}

#[derive(Clone, Debug)]
pub enum Behavior {
    /// Fill the template from input texts, evaluate, emit the sampled label.
    Policy {
        policy: Arc<dyn ReasoningPolicy>,
        template: StructuredPrompt,
    },
    /// Weighted plurality over the input texts; ports missing from
    /// `weights` count 1.
    Vote { weights: BTreeMap<String, f64> },
}

#[derive(Clone, Debug)]
pub struct AgentNode {
    pub id: String,
    pub role: String,
    pub behavior: Behavior,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Standby nodes never fire on their own; they only run as fallbacks.
    pub standby: bool,
    /// A prompt-space game attached to the node for analysis. The engine
    /// carries it but never solves it during a run.
    pub stage_game: Option<Arc<PromptSpaceGame>>,
}

impl AgentNode {
    pub fn policy(
        id: impl Into<String>,
        role: impl Into<String>,
        policy: Arc<dyn ReasoningPolicy>,
        template: StructuredPrompt,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Self {
        Self {
            id: id.into(),
            role: role.into(),
            behavior: Behavior::Policy { policy, template },
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            standby: false,
            stage_game: None,
        }
    }

    pub fn vote(id: impl Into<String>, role: impl Into<String>, inputs: &[&str], outputs: &[&str]) -> Self {
        Self {
            id: id.into(),
            role: role.into(),
            behavior: Behavior::Vote {
                weights: BTreeMap::new(),
            },
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            standby: false,
            stage_game: None,
        }
    }

    pub fn with_weight(mut self, port: &str, w: f64) -> Self {
        if let Behavior::Vote { weights } = &mut self.behavior {
            weights.insert(port.to_string(), w);
        }
        self
    }

    pub fn as_standby(mut self) -> Self {
        self.standby = true;
        self
    }

    pub fn with_stage_game(mut self, game: PromptSpaceGame) -> Self {
        self.stage_game = Some(Arc::new(game));
        self
    }

    /// Checks the node can be driven by the given input port names.
    fn check_ports(&self, ports: &[String], context: &str) -> Result<()> {
        match &self.behavior {
            Behavior::Policy { template, .. } => {
                template.validate()?;
                for ph in template.placeholders() {
                    if !ports.contains(&ph) {
                        return Err(GameError::Configuration(format!(
                            "node `{}`: placeholder {{{ph}}} is not an input port{context}",
                            self.id
                        )));
                    }
                }
            }
            Behavior::Vote { weights } => {
                for (port, w) in weights {
                    if !ports.contains(port) {
                        return Err(GameError::Configuration(format!(
                            "node `{}`: weight for unknown port `{port}`{context}",
                            self.id
                        )));
                    }
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(GameError::Configuration(format!("node `{}`: bad weight {w} on `{port}`", self.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct WorkflowGraph {
    nodes: Vec<AgentNode>,
    edges: Vec<WorkflowEdge>,
    pub topology: Topology,
    max_rounds: usize,
    pub sample_count: usize,
    layers: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl WorkflowGraph {
    pub fn new(nodes: Vec<AgentNode>, edges: Vec<WorkflowEdge>, topology: Topology, max_rounds: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(GameError::Configuration("workflow has no nodes".into()));
        }
        if max_rounds == 0 {
            return Err(GameError::Configuration("max feedback iterations must be at least 1".into()));
        }
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GameError::Configuration(format!("duplicate node id `{}`", n.id)));
            }
            n.check_ports(&n.inputs, "")?;
        }
        let mut fed = BTreeSet::new();
        for e in &edges {
            let from = index
                .get(&e.from.node)
                .map(|&i| &nodes[i])
                .ok_or_else(|| GameError::Configuration(format!("edge from unknown node `{}`", e.from.node)))?;
            let to = index
                .get(&e.to.node)
                .map(|&i| &nodes[i])
                .ok_or_else(|| GameError::Configuration(format!("edge to unknown node `{}`", e.to.node)))?;
            if !from.outputs.contains(&e.from.port) {
                return Err(GameError::Configuration(format!("`{}` is not an output port", e.from)));
            }
            if !to.inputs.contains(&e.to.port) {
                return Err(GameError::Configuration(format!("`{}` is not an input port", e.to)));
            }
            if from.standby || to.standby {
                return Err(GameError::Configuration(format!("standby nodes cannot be wired: {} -> {}", e.from, e.to)));
            }
            if !fed.insert(e.to.clone()) {
                return Err(GameError::Configuration(format!("input port `{}` has more than one incoming edge", e.to)));
            }
        }

        // Longest-path layering of the forward subgraph (Kahn).
        let n = nodes.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in edges.iter().filter(|e| e.kind == EdgeKind::Forward) {
            let (a, b) = (index[&e.from.node], index[&e.to.node]);
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut depth = vec![0usize; n];
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(a) = ready.pop() {
            seen += 1;
            for &b in &succ[a] {
                depth[b] = depth[b].max(depth[a] + 1);
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.push(b);
                }
            }
        }
        if seen < n {
            let stuck: Vec<&str> = (0..n).filter(|&i| indeg[i] > 0).map(|i| nodes[i].id.as_str()).collect();
            return Err(GameError::Configuration(format!(
                "forward edges form a cycle through {stuck:?}; close loops with feedback edges"
            )));
        }
        let mut layers: Vec<Vec<usize>> = vec![Vec::new(); depth.iter().max().map_or(0, |d| d + 1)];
        for i in (0..n).filter(|&i| !nodes[i].standby) {
            layers[depth[i]].push(i);
        }
        for l in &mut layers {
            l.sort_by(|&a, &b| nodes[a].id.cmp(&nodes[b].id));
        }
        layers.retain(|l| !l.is_empty());
        Ok(Self {
            nodes,
            edges,
            topology,
            max_rounds,
            sample_count: DEFAULT_SAMPLE_COUNT,
            layers,
            index,
        })
    }

    pub fn with_sample_count(mut self, n: usize) -> Self {
        self.sample_count = n.max(1);
        self
    }

    pub fn nodes(&self) -> &[AgentNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[WorkflowEdge] {
        &self.edges
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    pub fn node(&self, id: &str) -> Option<&AgentNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Node ids grouped by forward-graph depth, each layer sorted by id.
    pub fn layers(&self) -> Vec<Vec<&str>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|&i| self.nodes[i].id.as_str()).collect())
            .collect()
    }

    fn incoming(&self, target: &PortRef) -> Option<&WorkflowEdge> {
        self.edges.iter().find(|e| &e.to == target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FailureMode {
    Silent,
    Corrupt,
    Crash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub node: String,
    pub round: usize,
    pub mode: FailureMode,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePlan {
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    /// Failed node id to backup node id.
    #[serde(default)]
    pub fallback: BTreeMap<String, String>,
}

impl FailurePlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fail(mut self, node: &str, round: usize, mode: FailureMode) -> Self {
        self.failures.push(FailureEvent {
            node: node.into(),
            round,
            mode,
        });
        self
    }

    pub fn with_fallback(mut self, node: &str, backup: &str) -> Self {
        self.fallback.insert(node.into(), backup.into());
        self
    }

    fn validate(&self, graph: &WorkflowGraph) -> Result<HashMap<(String, usize), FailureMode>> {
        let mut by_key = HashMap::new();
        for f in &self.failures {
            if graph.node(&f.node).is_none() {
                return Err(GameError::Configuration(format!("failure plan names unknown node `{}`", f.node)));
            }
            if f.round == 0 || f.round > graph.max_rounds {
                return Err(GameError::Configuration(format!(
                    "failure for `{}` at round {} outside 1..={}",
                    f.node, f.round, graph.max_rounds
                )));
            }
            if by_key.insert((f.node.clone(), f.round), f.mode).is_some() {
                return Err(GameError::Configuration(format!("two failures for `{}` in round {}", f.node, f.round)));
            }
        }
        let crashing: BTreeSet<&str> = self
            .failures
            .iter()
            .filter(|f| f.mode == FailureMode::Crash)
            .map(|f| f.node.as_str())
            .collect();
        for (primary, backup) in &self.fallback {
            let p = graph
                .node(primary)
                .ok_or_else(|| GameError::Configuration(format!("fallback for unknown node `{primary}`")))?;
            let b = graph
                .node(backup)
                .ok_or_else(|| GameError::Configuration(format!("fallback `{primary}` -> unknown node `{backup}`")))?;
            if primary == backup || crashing.contains(backup.as_str()) {
                return Err(GameError::Configuration(format!("fallback `{primary}` -> `{backup}` targets a failed node")));
            }
            b.check_ports(&p.inputs, &format!(" (as fallback for `{primary}`)"))?;
        }
        Ok(by_key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Termination {
    Completed,
    IterationCap,
    FailureUnrecovered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Outcome {
    Fired,
    /// Run by the registered fallback because the node is down.
    Rerouted,
    Silent,
    Corrupted,
    /// Crashed with no fallback.
    Crashed,
    /// Policy error with no fallback.
    PolicyError,
    /// An input had no message this round.
    Starved,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Firing {
    pub round: usize,
    pub node: String,
    pub executed_by: String,
    pub outcome: Outcome,
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitted: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub distribution: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Message {
    pub source: PortRef,
    pub target: PortRef,
    pub payload: String,
    pub round: usize,
    pub provenance: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub rounds: usize,
    pub termination: Termination,
    pub firings: Vec<Firing>,
    pub messages: Vec<Message>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "camelCase")]
enum TraceLine<'a> {
    Firing(&'a Firing),
    Message(&'a Message),
    Summary {
        seed: u64,
        rounds: usize,
        termination: Termination,
    },
}

impl TraceRecord {
    /// One JSON object per line: firings, then messages, then a summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = self
            .firings
            .iter()
            .map(TraceLine::Firing)
            .chain(self.messages.iter().map(TraceLine::Message))
            .chain(std::iter::once(TraceLine::Summary {
                seed: self.seed,
                rounds: self.rounds,
                termination: self.termination,
            }));
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("trace lines serialize"));
            out.push('\n');
        }
        out
    }

    pub fn firings_in_round(&self, round: usize) -> impl Iterator<Item = &Firing> {
        self.firings.iter().filter(move |f| f.round == round)
    }

    /// Last text emitted by `node` in the run.
    pub fn last_emitted(&self, node: &str) -> Option<&str> {
        self.firings
            .iter()
            .rev()
            .filter(|f| f.node == node)
            .find_map(|f| f.emitted.as_deref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub action: String,
    pub tally: BTreeMap<String, f64>,
}

/// Weighted plurality over `(voter, action, weight)`; ties go to the
/// lexicographically smallest action label.
pub fn aggregate_decisions<S: AsRef<str>>(inputs: &[(S, S, f64)]) -> Result<Decision> {
    if inputs.is_empty() {
        return Err(GameError::invalid("no votes to aggregate"));
    }
    let mut tally: BTreeMap<String, f64> = BTreeMap::new();
    for (voter, action, w) in inputs {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(GameError::invalid(format!("vote from `{}` has weight {w}", voter.as_ref())));
        }
        *tally.entry(action.as_ref().to_string()).or_default() += w;
    }
    if tally.values().all(|w| *w == 0.0) {
        return Err(GameError::invalid("all vote weights are zero"));
    }
    // BTreeMap iterates labels in order, so a strict `>` keeps the smallest on ties.
    let mut best: Option<(&String, f64)> = None;
    for (a, w) in &tally {
        if best.is_none_or(|(_, bw)| *w > bw) {
            best = Some((a, *w));
        }
    }
    let action = best.expect("non-empty tally").0.clone();
    Ok(Decision { action, tally })
}

pub fn derive_seed(seed: u64, round: usize, node: &str) -> u64 {
    let bytes = (round as u64).to_le_bytes();
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for b in bytes.iter().chain(node.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic scramble: `~` followed by a seeded shuffle of the characters.
pub fn corrupt_payload(text: &str, seed: u64) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    chars.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de));
    std::iter::once('~').chain(chars).collect()
}

#[derive(Clone, Debug)]
struct Msg {
    payload: String,
    provenance: Vec<String>,
}

struct Emission {
    text: String,
    distribution: Vec<(String, f64)>,
}

/// Runs `node`'s behavior on `inputs`.
fn execute(node: &AgentNode, inputs: &BTreeMap<String, String>, seed: u64, sample_count: usize) -> Result<Emission> {
    match &node.behavior {
        Behavior::Policy { policy, template } => {
            let prompt = template.fill(inputs);
            let mut info = InfoContext::new(Role::Agent);
            info.private_info = inputs.clone();
            let d = policy.evaluate(&prompt, &info, Sampling { seed, sample_count })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let i = d.sample_with(rng.random());
            Ok(Emission {
                text: d.space().label(i).to_string(),
                distribution: d.space().labels().iter().cloned().zip(d.probs().iter().copied()).collect(),
            })
        }
        Behavior::Vote { weights } => {
            let votes: Vec<(String, String, f64)> = inputs
                .iter()
                .map(|(p, a)| (p.clone(), a.clone(), weights.get(p).copied().unwrap_or(1.0)))
                .collect();
            let d = aggregate_decisions(&votes)?;
            let total: f64 = d.tally.values().sum();
            Ok(Emission {
                distribution: d.tally.iter().map(|(a, w)| (a.clone(), w / total)).collect(),
                text: d.action,
            })
        }
    }
}

struct NodeResult {
    firing: Firing,
    emitted: Option<Msg>,
    crashed: bool,
    unrecovered: bool,
}

struct RoundState<'a> {
    graph: &'a WorkflowGraph,
    initial: &'a BTreeMap<PortRef, String>,
    plan: &'a HashMap<(String, usize), FailureMode>,
    fallback: &'a BTreeMap<String, String>,
    down: &'a BTreeSet<String>,
    current: &'a HashMap<PortRef, Msg>,
    previous: &'a HashMap<PortRef, Msg>,
    round: usize,
    seed: u64,
}

impl RoundState<'_> {
    fn input(&self, target: &PortRef) -> Option<Msg> {
        let initial = || {
            self.initial.get(target).map(|t| Msg {
                payload: t.clone(),
                provenance: Vec::new(),
            })
        };
        match self.graph.incoming(target) {
            Some(e) if e.kind == EdgeKind::Forward => self.current.get(&e.from).cloned(),
            Some(e) if self.round > 1 => self.previous.get(&e.from).cloned(),
            _ => initial(),
        }
    }

    fn fire(&self, node: &AgentNode) -> NodeResult {
        let mut inputs = BTreeMap::new();
        let mut provenance: Vec<String> = Vec::new();
        let mut missing = Vec::new();
        for port in &node.inputs {
            match self.input(&PortRef::new(&node.id, port)) {
                Some(m) => {
                    for p in m.provenance {
                        if !provenance.contains(&p) {
                            provenance.push(p);
                        }
                    }
                    inputs.insert(port.clone(), m.payload);
                }
                None => missing.push(port.clone()),
            }
        }
        let seed = derive_seed(self.seed, self.round, &node.id);
        let already_down = self.down.contains(&node.id);
        let mode = if already_down {
            None
        } else {
            self.plan.get(&(node.id.clone(), self.round)).copied()
        };
        let mut firing = Firing {
            round: self.round,
            node: node.id.clone(),
            executed_by: node.id.clone(),
            outcome: Outcome::Fired,
            inputs,
            emitted: None,
            distribution: Vec::new(),
            provenance: Vec::new(),
            note: None,
        };
        let done = |firing: Firing, crashed: bool, unrecovered: bool| NodeResult {
            firing,
            emitted: None,
            crashed,
            unrecovered,
        };

        let mut crashed = false;
        let mut executor = node;
        if already_down || mode == Some(FailureMode::Crash) {
            crashed = !already_down;
            match self.fallback.get(&node.id) {
                Some(b) => {
                    executor = self.graph.node(b).expect("fallback validated");
                    firing.outcome = Outcome::Rerouted;
                    firing.executed_by = b.clone();
                }
                None => {
                    firing.outcome = Outcome::Crashed;
                    return done(firing, crashed, true);
                }
            }
        }
        let starved = match executor.behavior {
            Behavior::Policy { .. } => !missing.is_empty(),
            Behavior::Vote { .. } => firing.inputs.is_empty(),
        };
        if starved {
            firing.outcome = Outcome::Starved;
            firing.note = Some(format!("no message on {}", missing.join(", ")));
            return done(firing, crashed, false);
        }
        if mode == Some(FailureMode::Silent) {
            firing.outcome = Outcome::Silent;
            return done(firing, false, false);
        }
        let mut result = execute(executor, &firing.inputs, seed, self.graph.sample_count);
        if let Err(e) = &result {
            // A policy error takes the node down; reroute if possible.
            firing.note = Some(e.to_string());
            crashed = true;
            match self.fallback.get(&node.id).filter(|_| executor.id == node.id) {
                Some(b) => {
                    executor = self.graph.node(b).expect("fallback validated");
                    firing.outcome = Outcome::Rerouted;
                    firing.executed_by = b.clone();
                    result = execute(executor, &firing.inputs, seed, self.graph.sample_count);
                }
                None => {
                    firing.outcome = Outcome::PolicyError;
                    return done(firing, true, true);
                }
            }
        }
        let emission = match result {
            Ok(e) => e,
            Err(e) => {
                firing.outcome = Outcome::PolicyError;
                firing.note = Some(e.to_string());
                return done(firing, true, true);
            }
        };
        let mut text = emission.text;
        if mode == Some(FailureMode::Corrupt) {
            text = corrupt_payload(&text, seed);
            firing.outcome = Outcome::Corrupted;
        }
        if !provenance.contains(&executor.id) {
            provenance.push(executor.id.clone());
        }
        firing.emitted = Some(text.clone());
        firing.distribution = emission.distribution;
        firing.provenance = provenance.clone();
        NodeResult {
            firing,
            emitted: Some(Msg { payload: text, provenance }),
            crashed,
            unrecovered: false,
        }
    }
}

pub fn run_workflow(graph: &WorkflowGraph, initial: &BTreeMap<String, String>, seed: u64) -> Result<TraceRecord> {
    run_workflow_with_failures(graph, initial, seed, &FailurePlan::default())
}

/// Runs rounds until quiescence of the feedback messages, the round cap, or
/// an unrecovered failure. `initial` maps `node.port` to text and must
/// cover every input port without a forward edge; feedback ports read it in
/// round 1.
pub fn run_workflow_with_failures(
    graph: &WorkflowGraph,
    initial: &BTreeMap<String, String>,
    seed: u64,
    plan: &FailurePlan,
) -> Result<TraceRecord> {
    let plan_map = plan.validate(graph)?;
    let mut init = BTreeMap::new();
    for (k, v) in initial {
        let p = PortRef::parse(k)?;
        if !graph.node(&p.node).is_some_and(|n| n.inputs.contains(&p.port)) {
            return Err(GameError::Configuration(format!("initial input for unknown port `{k}`")));
        }
        init.insert(p, v.clone());
    }
    for n in graph.nodes.iter().filter(|n| !n.standby) {
        for port in &n.inputs {
            let p = PortRef::new(&n.id, port);
            let forward = graph.incoming(&p).is_some_and(|e| e.kind == EdgeKind::Forward);
            if !forward && !init.contains_key(&p) {
                return Err(GameError::Configuration(format!("input port `{p}` has no edge and no initial value")));
            }
        }
    }

    let feedback: Vec<&WorkflowEdge> = graph.edges.iter().filter(|e| e.kind == EdgeKind::Feedback).collect();
    let mut down = BTreeSet::new();
    let mut previous: HashMap<PortRef, Msg> = HashMap::new();
    let mut last_snapshot: Option<Vec<Option<String>>> = None;
    let mut firings = Vec::new();
    let mut messages = Vec::new();
    let mut termination = Termination::IterationCap;
    let mut rounds = 0;

    for round in 1..=graph.max_rounds {
        rounds = round;
        let mut current: HashMap<PortRef, Msg> = HashMap::new();
        let mut unrecovered = false;
        let mut emitted_order = Vec::new();
        for layer in &graph.layers {
            let state = RoundState {
                graph,
                initial: &init,
                plan: &plan_map,
                fallback: &plan.fallback,
                down: &down,
                current: &current,
                previous: &previous,
                round,
                seed,
            };
            let results: Vec<NodeResult> = layer.par_iter().map(|&i| state.fire(&graph.nodes[i])).collect();
            for (r, &i) in results.into_iter().zip(layer) {
                let node = &graph.nodes[i];
                if r.crashed {
                    down.insert(node.id.clone());
                }
                unrecovered |= r.unrecovered;
                if let Some(m) = r.emitted {
                    for port in &node.outputs {
                        current.insert(PortRef::new(&node.id, port), m.clone());
                    }
                    emitted_order.push(i);
                }
                firings.push(r.firing);
            }
        }
        for &i in &emitted_order {
            let id = &graph.nodes[i].id;
            for e in graph.edges.iter().filter(|e| &e.from.node == id) {
                let m = &current[&e.from];
                messages.push(Message {
                    source: e.from.clone(),
                    target: e.to.clone(),
                    payload: m.payload.clone(),
                    round,
                    provenance: m.provenance.clone(),
                });
            }
        }
        if unrecovered {
            termination = Termination::FailureUnrecovered;
            break;
        }
        if feedback.is_empty() {
            termination = Termination::Completed;
            break;
        }
        let snapshot: Vec<Option<String>> = feedback.iter().map(|e| current.get(&e.from).map(|m| m.payload.clone())).collect();
        if last_snapshot.as_ref() == Some(&snapshot) {
            termination = Termination::Completed;
            break;
        }
        last_snapshot = Some(snapshot);
        previous = current;
    }
    Ok(TraceRecord {
        seed,
        rounds,
        termination,
        firings,
        messages,
    })
}

#[derive(Clone, Debug)]
pub enum Judge {
    Node(AgentNode),
    Vote,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DebateTurn {
    pub round: usize,
    pub agent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DebateOutcome {
    pub answer: Option<String>,
    pub transcript: Vec<DebateTurn>,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tally: Option<BTreeMap<String, f64>>,
}

fn render_transcript(turns: &[DebateTurn]) -> String {
    turns
        .iter()
        .filter_map(|t| t.stance.as_ref().map(|s| format!("{}: {s}", t.agent)))
        .collect::<Vec<_>>()
        .join("\n")
}

const DEBATE_PORTS: [&str; 2] = ["question", "transcript"];

fn debate_turn(node: &AgentNode, question: &str, transcript: &str, seed: u64, sample_count: usize) -> Result<String> {
    let Behavior::Policy { policy, template } = &node.behavior else {
        return Err(GameError::Configuration(format!("debate participant `{}` must be a policy node", node.id)));
    };
    let mut values = BTreeMap::new();
    values.insert("question".to_string(), question.to_string());
    values.insert("transcript".to_string(), transcript.to_string());
    let mut prompt = template.fill(&values);
    if !transcript.is_empty() {
        let memory = prompt.slot_mut(Slot::Memory);
        *memory = Some(match memory.take() {
            Some(m) if !m.is_empty() => format!("{m}\n{transcript}"),
            _ => transcript.to_string(),
        });
    }
    let d = policy.evaluate(&prompt, &InfoContext::new(Role::Agent), Sampling { seed, sample_count })?;
    let i = d.sample_with(ChaCha8Rng::seed_from_u64(seed).random());
    Ok(d.space().label(i).to_string())
}

/// Round-robin debate. Each agent sees the question and every earlier turn
/// (through `{transcript}` and its memory slot). An agent whose policy fails
/// drops out; fewer than two remaining aborts the debate.
pub fn debate_protocol(agents: &[AgentNode], question: &str, rounds: usize, judge: &Judge, seed: u64) -> Result<DebateOutcome> {
    if agents.len() < 2 {
        return Err(GameError::invalid("a debate needs at least two agents"));
    }
    if rounds == 0 {
        return Err(GameError::invalid("a debate needs at least one round"));
    }
    let ports: Vec<String> = DEBATE_PORTS.iter().map(|s| s.to_string()).collect();
    let mut ids = BTreeSet::new();
    for a in agents.iter().chain(match judge {
        Judge::Node(n) => Some(n),
        Judge::Vote => None,
    }) {
        if !matches!(a.behavior, Behavior::Policy { .. }) {
            return Err(GameError::Configuration(format!("debate participant `{}` must be a policy node", a.id)));
        }
        a.check_ports(&ports, " (debate nodes see only {question} and {transcript})")?;
        if !ids.insert(a.id.as_str()) {
            return Err(GameError::Configuration(format!("duplicate debate agent `{}`", a.id)));
        }
    }

    let mut active: Vec<&AgentNode> = agents.iter().collect();
    let mut transcript: Vec<DebateTurn> = Vec::new();
    let abort = |transcript| DebateOutcome {
        answer: None,
        transcript,
        termination: Termination::FailureUnrecovered,
        tally: None,
    };
    for round in 1..=rounds {
        let mut i = 0;
        while i < active.len() {
            let agent = active[i];
            let text = render_transcript(&transcript);
            let turn = debate_turn(agent, question, &text, derive_seed(seed, round, &agent.id), DEFAULT_SAMPLE_COUNT);
            match turn {
                Ok(stance) => {
                    transcript.push(DebateTurn {
                        round,
                        agent: agent.id.clone(),
                        stance: Some(stance),
                        error: None,
                    });
                    i += 1;
                }
                Err(e) => {
                    transcript.push(DebateTurn {
                        round,
                        agent: agent.id.clone(),
                        stance: None,
                        error: Some(e.to_string()),
                    });
                    active.remove(i);
                    if active.len() < 2 {
                        return Ok(abort(transcript));
                    }
                }
            }
        }
    }

    match judge {
        Judge::Node(node) => {
            let text = render_transcript(&transcript);
            match debate_turn(node, question, &text, derive_seed(seed, rounds + 1, &node.id), DEFAULT_SAMPLE_COUNT) {
                Ok(answer) => Ok(DebateOutcome {
                    answer: Some(answer),
                    transcript,
                    termination: Termination::Completed,
                    tally: None,
                }),
                Err(e) => {
                    transcript.push(DebateTurn {
                        round: rounds + 1,
                        agent: node.id.clone(),
                        stance: None,
                        error: Some(e.to_string()),
                    });
                    Ok(abort(transcript))
                }
            }
        }
        Judge::Vote => {
            let finals: Vec<(String, String, f64)> = active
                .iter()
                .filter_map(|a| {
                    transcript
                        .iter()
                        .rev()
                        .find(|t| t.agent == a.id && t.stance.is_some())
                        .map(|t| (a.id.clone(), t.stance.clone().expect("filtered"), 1.0))
                })
                .collect();
            let d = aggregate_decisions(&finals)?;
            Ok(DebateOutcome {
                answer: Some(d.action),
                transcript,
                termination: Termination::Completed,
                tally: Some(d.tally),
            })
        }
    }
}
