//! JSON game documents: `{kind, version, body, metadata}`.
//!
//! Loading validates the body against its kind and builds the domain object.
//! Errors carry a JSON-pointer location.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::game::{matrix_from_rows, ActionSpace, BimatrixGame, Distribution};
use crate::interdiction::{Edge, Metric, NetworkInstance};
use crate::markov::{Horizon, MarkovGame};
use crate::prompt::external::{ExternalPolicy, ResponseCache, DEFAULT_RETRIES, DEFAULT_TIMEOUT};
use crate::prompt::{InfoContext, PromptSpaceGame, ReasoningPolicy, Role, Sampling, StructuredPrompt, TablePolicy};
use crate::signaling::SignalingGame;
use crate::stackelberg::{PayoffVariant, StackelbergMarkovGame};
use crate::workflow::{AgentNode, Behavior, EdgeKind, FailurePlan, PortRef, Topology, WorkflowEdge, WorkflowGraph};

pub const SPEC_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SpecKind {
    Matrix,
    Markov,
    Signaling,
    Stackelberg,
    Interdiction,
    PromptGame,
    Workflow,
}

impl std::fmt::Display for SpecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().expect("kind is a string"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpecDocument {
    pub kind: SpecKind,
    pub version: u32,
    pub body: serde_json::Value,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

// ---- bodies -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBody {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixBody {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub row_payoff: Vec<Vec<f64>>,
    /// Absent for zero-sum games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_payoff: Option<Vec<Vec<f64>>>,
    /// A mixed profile to evaluate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovBody {
    pub states: Vec<String>,
    /// `[player][state]` action labels.
    pub action_spaces: Vec<Vec<Vec<String>>>,
    /// `[state][joint][next]`, joint actions in row-major player order.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `[player][state][joint]`.
    pub utilities: Vec<Vec<Vec<f64>>>,
    pub discount: f64,
    /// Last stage index for a finite horizon; absent means infinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalingBody {
    pub types: Vec<String>,
    pub prior: Vec<f64>,
    pub signals: Vec<String>,
    pub actions: Vec<String>,
    /// `[type][signal][action]`.
    pub sender_utility: Vec<Vec<Vec<f64>>>,
    pub receiver_utility: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantBody {
    pub leader_type: String,
    pub follower_type: String,
    pub utilities: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeBody {
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackelbergBody {
    pub game: MarkovBody,
    pub leader: usize,
    #[serde(default)]
    pub start_state: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantBody>,
    /// `[leader type, follower type]` selecting a variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_profile: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterdictionBody {
    pub nodes: Vec<String>,
    /// `[from, to, weight, capacity]`.
    pub edges: Vec<(String, String, f64, f64)>,
    #[serde(default = "default_true")]
    pub directed: bool,
    pub source: String,
    pub sink: String,
    pub metric: Metric,
    pub attacker_budget: usize,
    pub defender_budget: usize,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableBody {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_id: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_rendered: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalBody {
    /// Falls back to [`LoadOptions::policy_url`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyBody {
    Table(TableBody),
    External(ExternalBody),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseGameBody {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub row_payoff: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_payoff: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptGameBody {
    pub base: BaseGameBody,
    pub row_prompts: Vec<StructuredPrompt>,
    pub col_prompts: Vec<StructuredPrompt>,
    pub row_policy: PolicyBody,
    pub col_policy: PolicyBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_info: Option<InfoContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_info: Option<InfoContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyNodeBody {
    pub actions: Vec<String>,
    pub policy: PolicyBody,
    pub template: StructuredPrompt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteNodeBody {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BehaviorBody {
    Policy(PolicyNodeBody),
    Vote(VoteNodeBody),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeBody {
    pub id: String,
    #[serde(default)]
    pub role: String,
    pub behavior: BehaviorBody,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub standby: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_game: Option<Box<PromptGameBody>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeBody {
    pub from: PortRef,
    pub to: PortRef,
    #[serde(default = "forward")]
    pub kind: EdgeKind,
}

fn forward() -> EdgeKind {
    EdgeKind::Forward
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowBody {
    pub topology: Topology,
    pub max_rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    pub nodes: Vec<NodeBody>,
    #[serde(default)]
    pub edges: Vec<EdgeBody>,
    #[serde(default)]
    pub initial_inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failures: Option<FailurePlan>,
}

// ---- loaded objects -----------------------------------------------------

#[derive(Clone, Debug)]
pub struct LoadedWorkflow {
    pub graph: WorkflowGraph,
    pub initial_inputs: BTreeMap<String, String>,
    pub failures: FailurePlan,
}

#[derive(Clone, Debug)]
pub struct LoadedStackelberg {
    pub game: StackelbergMarkovGame,
    pub episode: Option<EpisodeBody>,
}

#[derive(Clone, Debug)]
pub enum LoadedSpec {
    Matrix {
        game: BimatrixGame,
        profile: Option<(Distribution, Distribution)>,
    },
    Markov(MarkovGame),
    Signaling(SignalingGame),
    Stackelberg(LoadedStackelberg),
    Interdiction(NetworkInstance),
    PromptGame(PromptSpaceGame),
    Workflow(LoadedWorkflow),
}

impl LoadedSpec {
    pub fn kind(&self) -> SpecKind {
        match self {
            LoadedSpec::Matrix { .. } => SpecKind::Matrix,
            LoadedSpec::Markov(_) => SpecKind::Markov,
            LoadedSpec::Signaling(_) => SpecKind::Signaling,
            LoadedSpec::Stackelberg(_) => SpecKind::Stackelberg,
            LoadedSpec::Interdiction(_) => SpecKind::Interdiction,
            LoadedSpec::PromptGame(_) => SpecKind::PromptGame,
            LoadedSpec::Workflow(_) => SpecKind::Workflow,
        }
    }
}

/// The uniform error for a command given the wrong kind of document.
pub fn kind_mismatch(expected: &[SpecKind], found: SpecKind) -> GameError {
    let names: Vec<String> = expected.iter().map(|k| k.to_string()).collect();
    GameError::validation("/kind", format!("expected one of [{}], found `{found}`", names.join(", ")))
}

/// Settings for external policies referenced by a document.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub policy_url: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub cache: Option<Arc<ResponseCache>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            policy_url: None,
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            cache: None,
        }
    }
}

// ---- parsing ------------------------------------------------------------

fn pointer(prefix: &str, path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn strip_location(msg: String) -> String {
    // serde_json appends " at line L column C", which is noise next to a pointer.
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

/// Parses the envelope without looking at the body.
pub fn parse_document(text: &str) -> Result<GameSpecDocument> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: GameSpecDocument = serde_path_to_error::deserialize(de)
        .map_err(|e| GameError::validation(pointer("", e.path()), strip_location(e.inner().to_string())))?;
    if doc.version != SPEC_VERSION {
        return Err(GameError::validation("/version", format!("unsupported version {}, expected {SPEC_VERSION}", doc.version)));
    }
    Ok(doc)
}

fn body<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value)
        .map_err(|e| GameError::validation(pointer("/body", e.path()), strip_location(e.inner().to_string())))
}

/// Reattaches domain errors to a location; simplex errors keep their own
/// field name, which already is a pointer.
fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        GameError::InvalidInput(m) | GameError::Configuration(m) => GameError::validation(path, m),
        other => other,
    })
}

fn space(path: &str, labels: &[String]) -> Result<ActionSpace> {
    at(path, ActionSpace::new(labels.iter().cloned()))
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    at(path, matrix_from_rows(rows))
}

fn bimatrix(rows: &[String], cols: &[String], up: &[Vec<f64>], cp: Option<&Vec<Vec<f64>>>, path: &str) -> Result<BimatrixGame> {
    let rs = space(&format!("{path}/rows"), rows)?;
    let cs = space(&format!("{path}/cols"), cols)?;
    let a = matrix(&format!("{path}/row_payoff"), up)?;
    match cp {
        None => at(path, BimatrixGame::zero_sum(rs, cs, a)),
        Some(b) => {
            let b = matrix(&format!("{path}/col_payoff"), b)?;
            at(path, BimatrixGame::new(rs, cs, a, b))
        }
    }
}

fn markov(b: &MarkovBody, path: &str) -> Result<MarkovGame> {
    let mut spaces = Vec::new();
    for (p, per_state) in b.action_spaces.iter().enumerate() {
        let mut v = Vec::new();
        for (s, labels) in per_state.iter().enumerate() {
            v.push(space(&format!("{path}/action_spaces/{p}/{s}"), labels)?);
        }
        spaces.push(v);
    }
    let horizon = b.horizon.map_or(Horizon::Infinite, Horizon::Finite);
    at(
        path,
        MarkovGame::new(b.states.clone(), spaces, b.transitions.clone(), b.utilities.clone(), b.discount, horizon),
    )
}

fn flatten3(path: &str, t: usize, s: usize, a: usize, u: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let ok = u.len() == t && u.iter().all(|x| x.len() == s && x.iter().all(|y| y.len() == a));
    if !ok {
        return Err(GameError::validation(path, format!("expected a {t}x{s}x{a} array")));
    }
    Ok(u.iter().flatten().flatten().copied().collect())
}

fn policy(
    path: &str,
    body: &PolicyBody,
    actions: &ActionSpace,
    opts: &LoadOptions,
) -> Result<Arc<dyn ReasoningPolicy>> {
    match body {
        PolicyBody::Table(t) => {
            let mut table = TablePolicy::new(actions.clone());
            for (id, probs) in &t.by_id {
                let field = format!("{path}/table/by_id/{id}");
                let d = at(&field, Distribution::named(&field, actions.clone(), probs.clone()))?;
                table.insert_id(id.clone(), d)?;
            }
            for (key, probs) in &t.by_rendered {
                let field = format!("{path}/table/by_rendered/{key}");
                let d = at(&field, Distribution::named(&field, actions.clone(), probs.clone()))?;
                table.insert_rendered(key.clone(), d)?;
            }
            if let Some(probs) = &t.default {
                let field = format!("{path}/table/default");
                let d = at(&field, Distribution::named(&field, actions.clone(), probs.clone()))?;
                table.set_default(d)?;
            }
            Ok(Arc::new(table))
        }
        PolicyBody::External(e) => {
            let endpoint = e.endpoint.clone().or_else(|| opts.policy_url.clone()).ok_or_else(|| {
                GameError::validation(format!("{path}/external/endpoint"), "no endpoint given and no policy URL configured")
            })?;
            let mut p = ExternalPolicy::with_options(endpoint, actions.clone(), opts.timeout, opts.retries);
            if let Some(c) = &opts.cache {
                p = p.with_cache(Arc::clone(c));
            }
            Ok(Arc::new(p))
        }
    }
}

fn prompt_game(b: &PromptGameBody, root: &str, opts: &LoadOptions) -> Result<PromptSpaceGame> {
    let base = bimatrix(&b.base.rows, &b.base.cols, &b.base.row_payoff, b.base.col_payoff.as_ref(), &format!("{root}/base"))?;
    let rp = policy(&format!("{root}/row_policy"), &b.row_policy, base.row_space(), opts)?;
    let cp = policy(&format!("{root}/col_policy"), &b.col_policy, base.col_space(), opts)?;
    for (name, prompts) in [("row_prompts", &b.row_prompts), ("col_prompts", &b.col_prompts)] {
        for (i, p) in prompts.iter().enumerate() {
            at(&format!("{root}/{name}/{i}"), p.validate())?;
        }
    }
    let g = at(
        root,
        PromptSpaceGame::new(
            base,
            b.row_prompts.clone(),
            b.col_prompts.clone(),
            rp,
            cp,
            b.row_info.clone().unwrap_or_else(|| InfoContext::new(Role::Row)),
            b.col_info.clone().unwrap_or_else(|| InfoContext::new(Role::Col)),
        ),
    )?;
    Ok(match b.sampling {
        Some(s) => g.with_sampling(s),
        None => g,
    })
}

fn workflow(b: &WorkflowBody, opts: &LoadOptions) -> Result<LoadedWorkflow> {
    let mut nodes = Vec::new();
    for (i, n) in b.nodes.iter().enumerate() {
        let path = format!("/body/nodes/{i}");
        let behavior = match &n.behavior {
            BehaviorBody::Policy(p) => {
                let actions = space(&format!("{path}/behavior/policy/actions"), &p.actions)?;
                Behavior::Policy {
                    policy: policy(&format!("{path}/behavior/policy/policy"), &p.policy, &actions, opts)?,
                    template: p.template.clone(),
                }
            }
            BehaviorBody::Vote(v) => Behavior::Vote { weights: v.weights.clone() },
        };
        nodes.push(AgentNode {
            id: n.id.clone(),
            role: n.role.clone(),
            behavior,
            inputs: n.inputs.clone(),
            outputs: n.outputs.clone(),
            standby: n.standby,
            stage_game: match &n.stage_game {
                Some(g) => Some(Arc::new(prompt_game(g, &format!("{path}/stage_game"), opts)?)),
                None => None,
            },
        });
    }
    let edges = b
        .edges
        .iter()
        .map(|e| WorkflowEdge {
            from: e.from.clone(),
            to: e.to.clone(),
            kind: e.kind,
        })
        .collect();
    let mut graph = at("/body", WorkflowGraph::new(nodes, edges, b.topology, b.max_rounds))?;
    if let Some(n) = b.sample_count {
        graph = graph.with_sample_count(n);
    }
    Ok(LoadedWorkflow {
        graph,
        initial_inputs: b.initial_inputs.clone(),
        failures: b.failures.clone().unwrap_or_default(),
    })
}

/// Validates `doc.body` against its kind and builds the domain object.
pub fn build(doc: &GameSpecDocument, opts: &LoadOptions) -> Result<LoadedSpec> {
    Ok(match doc.kind {
        SpecKind::Matrix => {
            let b: MatrixBody = body(&doc.body)?;
            let game = bimatrix(&b.rows, &b.cols, &b.row_payoff, b.col_payoff.as_ref(), "/body")?;
            let profile = match &b.profile {
                None => None,
                Some(p) => {
                    let row = Distribution::named("/body/profile/row", game.row_space().clone(), p.row.clone());
                    let col = Distribution::named("/body/profile/col", game.col_space().clone(), p.col.clone());
                    Some((at("/body/profile/row", row)?, at("/body/profile/col", col)?))
                }
            };
            LoadedSpec::Matrix { game, profile }
        }
        SpecKind::Markov => LoadedSpec::Markov(markov(&body(&doc.body)?, "/body")?),
        SpecKind::Signaling => {
            let b: SignalingBody = body(&doc.body)?;
            let types = space("/body/types", &b.types)?;
            let signals = space("/body/signals", &b.signals)?;
            let actions = space("/body/actions", &b.actions)?;
            let prior = at("/body/prior", Distribution::named("/body/prior", types.clone(), b.prior.clone()))?;
            let dims = (types.len(), signals.len(), actions.len());
            let us = flatten3("/body/sender_utility", dims.0, dims.1, dims.2, &b.sender_utility)?;
            let ur = flatten3("/body/receiver_utility", dims.0, dims.1, dims.2, &b.receiver_utility)?;
            LoadedSpec::Signaling(at("/body", SignalingGame::new(prior, signals, actions, us, ur))?)
        }
        SpecKind::Stackelberg => {
            let b: StackelbergBody = body(&doc.body)?;
            let base = markov(&b.game, "/body/game")?;
            let variants = b
                .variants
                .iter()
                .map(|v| PayoffVariant {
                    leader_type: v.leader_type.clone(),
                    follower_type: v.follower_type.clone(),
                    utilities: v.utilities.clone(),
                })
                .collect();
            let g = at("/body", StackelbergMarkovGame::new(base, b.leader))?;
            let g = at("/body/variants", g.with_types(variants, b.type_profile.clone()))?;
            let g = at("/body/start_state", g.with_start_state(b.start_state))?;
            LoadedSpec::Stackelberg(LoadedStackelberg {
                game: g,
                episode: b.episode.clone(),
            })
        }
        SpecKind::Interdiction => {
            let b: InterdictionBody = body(&doc.body)?;
            let edges = b
                .edges
                .iter()
                .map(|(from, to, weight, capacity)| Edge {
                    from: from.clone(),
                    to: to.clone(),
                    weight: *weight,
                    capacity: *capacity,
                })
                .collect();
            LoadedSpec::Interdiction(at(
                "/body",
                NetworkInstance::new(
                    b.nodes.clone(),
                    edges,
                    b.directed,
                    &b.source,
                    &b.sink,
                    b.metric,
                    b.attacker_budget,
                    b.defender_budget,
                ),
            )?)
        }
        SpecKind::PromptGame => LoadedSpec::PromptGame(prompt_game(&body(&doc.body)?, "/body", opts)?),
        SpecKind::Workflow => LoadedSpec::Workflow(workflow(&body(&doc.body)?, opts)?),
    })
}

pub fn load_game_spec_str(text: &str, opts: &LoadOptions) -> Result<(GameSpecDocument, LoadedSpec)> {
    let doc = parse_document(text)?;
    let loaded = build(&doc, opts)?;
    Ok((doc, loaded))
}

pub fn load_game_spec(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(GameSpecDocument, LoadedSpec)> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| GameError::validation("/", format!("cannot read {}: {e}", path.display())))?;
    load_game_spec_str(&text, opts)
}

/// Canonical serialization: bodies re-emitted through their typed form, so
/// field order and omitted defaults are fixed.
pub fn to_canonical_json(doc: &GameSpecDocument) -> Result<String> {
    fn canon<T: DeserializeOwned + Serialize>(v: &serde_json::Value) -> Result<serde_json::Value> {
        let t: T = body(v)?;
        serde_json::to_value(t).map_err(|e| GameError::Internal(e.to_string()))
    }
    let body = match doc.kind {
        SpecKind::Matrix => canon::<MatrixBody>(&doc.body)?,
        SpecKind::Markov => canon::<MarkovBody>(&doc.body)?,
        SpecKind::Signaling => canon::<SignalingBody>(&doc.body)?,
        SpecKind::Stackelberg => canon::<StackelbergBody>(&doc.body)?,
        SpecKind::Interdiction => canon::<InterdictionBody>(&doc.body)?,
        SpecKind::PromptGame => canon::<PromptGameBody>(&doc.body)?,
        SpecKind::Workflow => canon::<WorkflowBody>(&doc.body)?,
    };
    let out = GameSpecDocument { body, ..doc.clone() };
    serde_json::to_string_pretty(&out).map_err(|e| GameError::Internal(e.to_string()))
}

/// The bundled rock-paper-scissors prompt game.
pub const RPS_PROMPT_GAME: &str = include_str!("../fixtures/rps_prompt_game.json");

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedSpec> {
        load_game_spec_str(text, &LoadOptions::default()).map(|(_, l)| l)
    }

    #[test]
    fn empty_document_fails_at_root() {
        for text in ["", "{}"] {
            match load(text) {
                Err(GameError::Validation { path, .. }) => assert_eq!(path, "/"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn simplex_violation_names_field_and_sum() {
        let text = r#"{"kind":"matrix","version":1,"body":{"rows":["a","b"],"cols":["c","d"],
            "row_payoff":[[1,0],[0,1]],"profile":{"row":[0.5,0.6],"col":[0.5,0.5]}}}"#;
        match load(text) {
            Err(GameError::Simplex { field, sum }) => {
                assert_eq!(field, "/body/profile/row");
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_pointer() {
        let text = r#"{"kind":"interdiction","version":1,"body":{"nodes":["s","t"],"edges":[["s","t",1,"x"]],
            "source":"s","sink":"t","metric":"shortestPathLength","attacker_budget":1,"defender_budget":0}}"#;
        match load(text) {
            Err(GameError::Validation { path, .. }) => assert_eq!(path, "/body/edges/0/3"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"kind":"matrix","version":2,"body":{}}"#;
        assert!(matches!(load(text), Err(GameError::Validation { ref path, .. }) if path == "/version"));
    }

    #[test]
    fn rps_fixture_loads() {
        match load(RPS_PROMPT_GAME).unwrap() {
            LoadedSpec::PromptGame(g) => {
                assert_eq!(g.row_prompts.len(), 5);
                assert_eq!(g.col_prompts.len(), 5);
            }
            other => panic!("{:?}", other.kind()),
        }
    }

    #[test]
    fn kind_mismatch_is_uniform() {
        let e = kind_mismatch(&[SpecKind::Workflow], SpecKind::Matrix);
        assert!(e.is_validation());
        assert_eq!(e.to_string(), "validation error at /kind: expected one of [workflow], found `matrix`");
    }
}
