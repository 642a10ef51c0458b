use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::game::{ActionSpace, Distribution};

/// The four semantic components a prompt may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Cot,
    Bias,
    Tom,
    Memory,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Cot, Slot::Bias, Slot::Tom, Slot::Memory];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub id: String,
    pub rendered: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<String>,
}

impl StructuredPrompt {
    pub fn new(id: impl Into<String>, rendered: impl Into<String>) -> Result<Self> {
        let p = Self {
            id: id.into(),
            rendered: rendered.into(),
            cot: None,
            bias: None,
            tom: None,
            memory: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rendered.trim().is_empty() {
            return Err(GameError::invalid(format!("prompt `{}` has empty rendered text", self.id)));
        }
        Ok(())
    }

    pub fn with_slot(mut self, slot: Slot, text: impl Into<String>) -> Self {
        *self.slot_mut(slot) = Some(text.into());
        self
    }

    pub fn slot(&self, slot: Slot) -> Option<&str> {
        match slot {
            Slot::Cot => self.cot.as_deref(),
            Slot::Bias => self.bias.as_deref(),
            Slot::Tom => self.tom.as_deref(),
            Slot::Memory => self.memory.as_deref(),
        }
    }

    pub fn slot_mut(&mut self, slot: Slot) -> &mut Option<String> {
        match slot {
            Slot::Cot => &mut self.cot,
            Slot::Bias => &mut self.bias,
            Slot::Tom => &mut self.tom,
            Slot::Memory => &mut self.memory,
        }
    }

    /// Placeholder names `{name}` used in the rendered text and slots.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        let texts = std::iter::once(self.rendered.as_str()).chain(Slot::ALL.iter().filter_map(|s| self.slot(*s)));
        for text in texts {
            let mut rest = text;
            while let Some(open) = rest.find('{') {
                let after = &rest[open + 1..];
                match after.find('}') {
                    Some(close) => {
                        let name = &after[..close];
                        if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') && !out.iter().any(|n| n == name) {
                            out.push(name.to_string());
                        }
                        rest = &after[close + 1..];
                    }
                    None => break,
                }
            }
        }
        out
    }

    /// Substitutes `{name}` placeholders in the rendered text and every slot.
    pub fn fill(&self, values: &BTreeMap<String, String>) -> Self {
        let sub = |text: &str| {
            let mut out = text.to_string();
            for (k, v) in values {
                out = out.replace(&format!("{{{k}}}"), v);
            }
            out
        };
        let mut p = self.clone();
        p.rendered = sub(&self.rendered);
        for slot in Slot::ALL {
            if let Some(t) = self.slot(slot) {
                *p.slot_mut(slot) = Some(sub(t));
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
    Row,
    Col,
    /// A workflow agent.
    Agent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoContext {
    pub role: Role,
    #[serde(default)]
    pub private_info: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_message: Option<String>,
}

impl InfoContext {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            private_info: BTreeMap::new(),
            observed_message: None,
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.private_info.insert(key.into(), value.into());
        self
    }

    pub fn observing(mut self, message: impl Into<String>) -> Self {
        self.observed_message = Some(message.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Table,
    External,
}

/// Sampling controls; table backends ignore them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub seed: u64,
    pub sample_count: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_count: 64,
        }
    }
}

/// A mapping from (prompt, private information) to a distribution over actions.
pub trait ReasoningPolicy: Send + Sync + Debug {
    fn backend(&self) -> Backend;
    fn action_space(&self) -> &ActionSpace;
    fn evaluate(&self, prompt: &StructuredPrompt, info: &InfoContext, sampling: Sampling) -> Result<Distribution>;
    fn is_deterministic(&self) -> bool;
}

/// Evaluates `policy` on one prompt.
pub fn policy_action_distribution(
    policy: &dyn ReasoningPolicy,
    prompt: &StructuredPrompt,
    info: &InfoContext,
    seed: u64,
    sample_count: usize,
) -> Result<Distribution> {
    policy.evaluate(prompt, info, Sampling { seed, sample_count })
}

/// Evaluates many prompts with at most `concurrency` in flight. Output order
/// follows `items` regardless of completion order. Errors carry the prompt id.
pub fn evaluate_all(
    policy: &dyn ReasoningPolicy,
    items: &[(StructuredPrompt, InfoContext)],
    sampling: Sampling,
    concurrency: usize,
) -> Result<Vec<Distribution>> {
    let workers = concurrency.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<Distribution>>> = (0..items.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, Result<Distribution>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            return local;
                        }
                        let (prompt, info) = &items[i];
                        local.push((i, policy.evaluate(prompt, info, sampling)));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    for (i, r) in done.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .zip(items)
        .map(|(r, (prompt, _))| {
            r.expect("every item evaluated").map_err(|e| GameError::Policy {
                prompt_id: prompt.id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Fixed lookup table. A prompt is matched by its rendered text first, then
/// by id, then falls back to the default row if one is set.
#[derive(Clone, Debug, PartialEq)]
pub struct TablePolicy {
    space: ActionSpace,
    by_rendered: BTreeMap<String, Distribution>,
    by_id: BTreeMap<String, Distribution>,
    default: Option<Distribution>,
}

impl TablePolicy {
    pub fn new(space: ActionSpace) -> Self {
        Self {
            space,
            by_rendered: BTreeMap::new(),
            by_id: BTreeMap::new(),
            default: None,
        }
    }

    fn check(&self, d: &Distribution) -> Result<()> {
        if d.space() != &self.space {
            return Err(GameError::invalid(format!(
                "table row over {:?}, policy acts over {:?}",
                d.space(),
                self.space
            )));
        }
        Ok(())
    }

    pub fn with_id(mut self, id: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        let id = id.into();
        let d = Distribution::named(&id, self.space.clone(), probs)?;
        self.by_id.insert(id, d);
        Ok(self)
    }

    pub fn with_rendered(mut self, rendered: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        let key = rendered.into();
        let d = Distribution::named(&key, self.space.clone(), probs)?;
        self.by_rendered.insert(key, d);
        Ok(self)
    }

    pub fn with_default(mut self, probs: Vec<f64>) -> Result<Self> {
        self.default = Some(Distribution::named("default", self.space.clone(), probs)?);
        Ok(self)
    }

    pub fn insert_id(&mut self, id: impl Into<String>, d: Distribution) -> Result<()> {
        self.check(&d)?;
        self.by_id.insert(id.into(), d);
        Ok(())
    }

    pub fn insert_rendered(&mut self, rendered: impl Into<String>, d: Distribution) -> Result<()> {
        self.check(&d)?;
        self.by_rendered.insert(rendered.into(), d);
        Ok(())
    }

    pub fn set_default(&mut self, d: Distribution) -> Result<()> {
        self.check(&d)?;
        self.default = Some(d);
        Ok(())
    }

    pub fn entries_by_id(&self) -> &BTreeMap<String, Distribution> {
        &self.by_id
    }

    pub fn entries_by_rendered(&self) -> &BTreeMap<String, Distribution> {
        &self.by_rendered
    }

    pub fn default_row(&self) -> Option<&Distribution> {
        self.default.as_ref()
    }

    pub fn lookup(&self, prompt: &StructuredPrompt) -> Option<&Distribution> {
        self.by_rendered
            .get(&prompt.rendered)
            .or_else(|| self.by_id.get(&prompt.id))
            .or(self.default.as_ref())
    }
}

impl ReasoningPolicy for TablePolicy {
    fn backend(&self) -> Backend {
        Backend::Table
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn evaluate(&self, prompt: &StructuredPrompt, _info: &InfoContext, _sampling: Sampling) -> Result<Distribution> {
        self.lookup(prompt)
            .cloned()
            .ok_or_else(|| GameError::invalid(format!("no table entry for prompt `{}`", prompt.id)))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rps() -> ActionSpace {
        ActionSpace::new(["Rock", "Paper", "Scissors"]).unwrap()
    }

    #[test]
    fn table_lookup_order() {
        let t = TablePolicy::new(rps())
            .with_id("x1", vec![0.2, 0.6, 0.2])
            .unwrap()
            .with_rendered("exact text", vec![1.0, 0.0, 0.0])
            .unwrap()
            .with_default(vec![1.0 / 3.0; 3])
            .unwrap();
        let info = InfoContext::new(Role::Row);
        let s = Sampling::default();
        let p = StructuredPrompt::new("x1", "anything").unwrap();
        assert_eq!(t.evaluate(&p, &info, s).unwrap().probs(), &[0.2, 0.6, 0.2]);
        let p = StructuredPrompt::new("x1", "exact text").unwrap();
        assert_eq!(t.evaluate(&p, &info, s).unwrap().probs(), &[1.0, 0.0, 0.0]);
        let p = StructuredPrompt::new("zz", "other").unwrap();
        assert!(t.evaluate(&p, &info, s).unwrap().probs().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let bare = TablePolicy::new(rps());
        assert!(bare.evaluate(&p, &info, s).is_err());
        assert!(t.is_deterministic());
    }

    #[test]
    fn placeholders_and_fill() {
        let p = StructuredPrompt::new("n", "Given {alert} and {alert}, decide").unwrap().with_slot(Slot::Memory, "history: {log}");
        assert_eq!(p.placeholders(), vec!["alert".to_string(), "log".to_string()]);
        let mut v = BTreeMap::new();
        v.insert("alert".to_string(), "A".to_string());
        v.insert("log".to_string(), "L".to_string());
        let f = p.fill(&v);
        assert_eq!(f.rendered, "Given A and A, decide");
        assert_eq!(f.memory.as_deref(), Some("history: L"));
        assert!(StructuredPrompt::new("e", "  ").is_err());
    }

    #[test]
    fn evaluate_all_keeps_order_and_names_prompt() {
        let t = TablePolicy::new(rps()).with_id("a", vec![1.0, 0.0, 0.0]).unwrap().with_id("b", vec![0.0, 1.0, 0.0]).unwrap();
        let info = InfoContext::new(Role::Row);
        let items: Vec<_> = ["a", "b", "a", "b", "b"]
            .iter()
            .map(|id| (StructuredPrompt::new(*id, "t").unwrap(), info.clone()))
            .collect();
        let out = evaluate_all(&t, &items, Sampling::default(), 3).unwrap();
        let picks: Vec<usize> = out.iter().map(|d| d.support()[0]).collect();
        assert_eq!(picks, vec![0, 1, 0, 1, 1]);

        let bad = vec![(StructuredPrompt::new("missing", "t").unwrap(), info)];
        match evaluate_all(&t, &bad, Sampling::default(), 2) {
            Err(GameError::Policy { prompt_id, .. }) => assert_eq!(prompt_id, "missing"),
            other => panic!("{other:?}"),
        }
    }
}
