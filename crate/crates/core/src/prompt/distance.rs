//! Prompt distance and empirical stability of a policy over a prompt set.

use serde::Serialize;

use crate::error::{GameError, Result};
use crate::prompt::policy::{evaluate_all, InfoContext, ReasoningPolicy, Sampling, Slot, StructuredPrompt};

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn normalized<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

/// Edit distance over whitespace tokens divided by the longer token count.
/// Texts with identical tokens but different spacing fall back to
/// character-level distance so that distinct texts never sit at zero.
pub fn text_distance(a: &str, b: &str) -> f64 {
    if a == b {
        return 0.0;
    }
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    let d = normalized(&ta, &tb);
    if d > 0.0 {
        return d;
    }
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    normalized(&ca, &cb)
}

/// Distance of one semantic slot: 0 when both absent, 1 when exactly one is.
pub fn slot_distance(a: Option<&str>, b: Option<&str>) -> f64 {
    match (a, b) {
        (None, None) => 0.0,
        (Some(x), Some(y)) => text_distance(x, y),
        _ => 1.0,
    }
}

/// Half rendered-text distance, half the mean of the four slot distances.
/// Lies in `[0, 1]`; symmetric and zero exactly on identical content.
/// The triangle inequality is not guaranteed.
pub fn prompt_distance(a: &StructuredPrompt, b: &StructuredPrompt) -> f64 {
    let slots: f64 = Slot::ALL.iter().map(|s| slot_distance(a.slot(*s), b.slot(*s))).sum::<f64>() / 4.0;
    0.5 * (text_distance(&a.rendered, &b.rendered) + slots)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub output_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityProfile {
    pub pairs: Vec<StabilityPair>,
    /// Max of `output_gap / distance` over pairs with positive distance;
    /// `None` when every pair is at distance zero.
    pub lipschitz_ratio: Option<f64>,
}

pub fn stability_profile(
    policy: &dyn ReasoningPolicy,
    prompts: &[StructuredPrompt],
    info: &InfoContext,
    sampling: Sampling,
) -> Result<StabilityProfile> {
    if prompts.len() < 2 {
        return Err(GameError::invalid("stability profile needs at least two prompts"));
    }
    let items: Vec<_> = prompts.iter().map(|p| (p.clone(), info.clone())).collect();
    let dists = evaluate_all(policy, &items, sampling, 4)?;
    let mut pairs = Vec::new();
    let mut ratio: Option<f64> = None;
    for a in 0..prompts.len() {
        for b in a + 1..prompts.len() {
            let distance = prompt_distance(&prompts[a], &prompts[b]);
            let output_gap = dists[a].l1_distance(&dists[b]);
            if distance > 0.0 {
                let r = output_gap / distance;
                ratio = Some(ratio.map_or(r, |m| m.max(r)));
            }
            pairs.push(StabilityPair { a, b, distance, output_gap });
        }
    }
    Ok(StabilityProfile {
        pairs,
        lipschitz_ratio: ratio,
    })
}
