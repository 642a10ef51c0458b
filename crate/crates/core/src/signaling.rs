//! One-shot signaling games: Bayesian updating and pure PBNE enumeration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GameError, Result};
use crate::game::{ActionSpace, Distribution};

pub const SIGNALING_CELL_LIMIT: u128 = 1_000;
pub const SIGNALING_PROFILE_LIMIT: u128 = 10_000_000;
const OPT_TOL: f64 = 1e-9;

/// Off-path beliefs are searched in this order; the first supporting one is kept.
pub const OFF_PATH_BELIEF_SEARCH: &str = "point mass on each type in type order, then the prior, then uniform";

#[derive(Clone, Debug, PartialEq)]
pub struct SignalingGame {
    types: ActionSpace,
    prior: Distribution,
    signals: ActionSpace,
    actions: ActionSpace,
    sender_utility: Vec<f64>,
    receiver_utility: Vec<f64>,
}

impl SignalingGame {
    /// Utilities are flattened `[type][signal][action]`, action fastest.
    pub fn new(
        prior: Distribution,
        signals: ActionSpace,
        actions: ActionSpace,
        sender_utility: Vec<f64>,
        receiver_utility: Vec<f64>,
    ) -> Result<Self> {
        let types = prior.space().clone();
        let cells = types.len() * signals.len() * actions.len();
        for (name, u) in [("sender", &sender_utility), ("receiver", &receiver_utility)] {
            if u.len() != cells {
                return Err(GameError::invalid(format!("{name} utility has {} entries, expected {cells}", u.len())));
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(GameError::invalid(format!("{name} utility has non-finite entries")));
            }
        }
        Ok(Self {
            types,
            prior,
            signals,
            actions,
            sender_utility,
            receiver_utility,
        })
    }

    pub fn types(&self) -> &ActionSpace {
        &self.types
    }

    pub fn prior(&self) -> &Distribution {
        &self.prior
    }

    pub fn signals(&self) -> &ActionSpace {
        &self.signals
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn sender_utilities(&self) -> &[f64] {
        &self.sender_utility
    }

    pub fn receiver_utilities(&self) -> &[f64] {
        &self.receiver_utility
    }

    fn cell(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.signals.len() + s) * self.actions.len() + a
    }

    pub fn sender_utility(&self, t: usize, s: usize, a: usize) -> f64 {
        self.sender_utility[self.cell(t, s, a)]
    }

    pub fn receiver_utility(&self, t: usize, s: usize, a: usize) -> f64 {
        self.receiver_utility[self.cell(t, s, a)]
    }

    /// Receiver's expected utility of `a` after `s` under `belief` over types.
    pub fn receiver_expected(&self, belief: &Distribution, s: usize, a: usize) -> f64 {
        (0..self.types.len()).map(|t| belief.prob(t) * self.receiver_utility(t, s, a)).sum()
    }

    fn receiver_optimal(&self, belief: &Distribution, s: usize, a: usize) -> bool {
        let chosen = self.receiver_expected(belief, s, a);
        (0..self.actions.len()).all(|b| self.receiver_expected(belief, s, b) <= chosen + OPT_TOL)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Posterior {
    Belief(Distribution),
    /// The signal has zero probability under the sender strategy.
    OffPath,
}

/// Posterior over types after observing `signal`. `sender[t]` is type `t`'s
/// distribution over signals.
pub fn bayes_update(prior: &Distribution, sender: &[Distribution], signal: usize) -> Result<Posterior> {
    if sender.len() != prior.len() {
        return Err(GameError::invalid(format!("{} sender rows for {} types", sender.len(), prior.len())));
    }
    if sender.iter().any(|d| signal >= d.len()) {
        return Err(GameError::invalid(format!("signal {signal} out of range")));
    }
    let joint: Vec<f64> = prior.probs().iter().zip(sender).map(|(p, d)| p * d.prob(signal)).collect();
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return Ok(Posterior::OffPath);
    }
    let post = joint.into_iter().map(|x| x / total).collect();
    Ok(Posterior::Belief(Distribution::from_weights(prior.space().clone(), post)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefSystem {
    /// One belief over types per signal.
    pub beliefs: Vec<Distribution>,
    pub on_path: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Separating,
    Pooling,
    Hybrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PbneAssessment {
    /// Signal index per type.
    pub sender: Vec<usize>,
    /// Action index per signal.
    pub receiver: Vec<usize>,
    pub beliefs: BeliefSystem,
    pub classification: Classification,
}

pub fn classify(sender: &[usize]) -> Classification {
    let mut distinct = sender.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() == 1 && sender.len() > 1 {
        Classification::Pooling
    } else if distinct.len() == sender.len() {
        Classification::Separating
    } else {
        Classification::Hybrid
    }
}

fn mixed_radix(radix: usize, digits: usize, mut index: usize) -> Vec<usize> {
    let mut out = vec![0; digits];
    for d in out.iter_mut().rev() {
        *d = index % radix;
        index /= radix;
    }
    out
}

fn belief_search_set(game: &SignalingGame) -> Vec<Distribution> {
    let types = game.types();
    let mut set: Vec<Distribution> = (0..types.len()).map(|t| Distribution::point(types.clone(), t)).collect();
    set.push(game.prior().clone());
    set.push(Distribution::uniform(types.clone()));
    set
}

fn assess(game: &SignalingGame, sender: &[usize], receiver: &[usize], search: &[Distribution]) -> Option<PbneAssessment> {
    let n_signals = game.signals().len();
    let strategy: Vec<Distribution> = sender
        .iter()
        .map(|s| Distribution::point(game.signals().clone(), *s))
        .collect();
    let mut beliefs = Vec::with_capacity(n_signals);
    let mut on_path = Vec::with_capacity(n_signals);
    for s in 0..n_signals {
        match bayes_update(game.prior(), &strategy, s).ok()? {
            Posterior::Belief(b) => {
                if !game.receiver_optimal(&b, s, receiver[s]) {
                    return None;
                }
                beliefs.push(b);
                on_path.push(true);
            }
            Posterior::OffPath => {
                let b = search.iter().find(|b| game.receiver_optimal(b, s, receiver[s]))?;
                beliefs.push(b.clone());
                on_path.push(false);
            }
        }
    }
    for (t, &sent) in sender.iter().enumerate() {
        let got = game.sender_utility(t, sent, receiver[sent]);
        if (0..n_signals).any(|s| game.sender_utility(t, s, receiver[s]) > got + OPT_TOL) {
            return None;
        }
    }
    Some(PbneAssessment {
        sender: sender.to_vec(),
        receiver: receiver.to_vec(),
        beliefs: BeliefSystem { beliefs, on_path },
        classification: classify(sender),
    })
}

/// All pure-strategy PBNE, ordered by (sender map, receiver map) in
/// lexicographic index order.
pub fn enumerate_pure_pbne(game: &SignalingGame) -> Result<Vec<PbneAssessment>> {
    let (nt, ns, na) = (game.types().len(), game.signals().len(), game.actions().len());
    let cells = (nt * ns * na) as u128;
    if cells > SIGNALING_CELL_LIMIT {
        return Err(GameError::UnsupportedSize {
            what: "|types|*|signals|*|actions|".into(),
            actual: cells,
            limit: SIGNALING_CELL_LIMIT,
        });
    }
    let sender_maps = (ns as u128).checked_pow(nt as u32).unwrap_or(u128::MAX);
    let receiver_maps = (na as u128).checked_pow(ns as u32).unwrap_or(u128::MAX);
    let profiles = sender_maps.saturating_mul(receiver_maps);
    if profiles > SIGNALING_PROFILE_LIMIT {
        return Err(GameError::UnsupportedSize {
            what: "pure strategy profile count".into(),
            actual: profiles,
            limit: SIGNALING_PROFILE_LIMIT,
        });
    }
    let search = belief_search_set(game);
    let found: Vec<Vec<PbneAssessment>> = (0..sender_maps as usize)
        .into_par_iter()
        .map(|si| {
            let sender = mixed_radix(ns, nt, si);
            (0..receiver_maps as usize)
                .filter_map(|ri| assess(game, &sender, &mixed_radix(na, ns, ri), &search))
                .collect()
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoneypotParams {
    pub cost_signal: f64,
    pub attack_gain_real: f64,
    pub attack_loss_honeypot: f64,
    pub prior_real: f64,
}

impl Default for HoneypotParams {
    fn default() -> Self {
        Self {
            cost_signal: 0.1,
            attack_gain_real: 1.0,
            attack_loss_honeypot: 1.0,
            prior_real: 0.5,
        }
    }
}

pub const HONEYPOT_TYPES: [&str; 2] = ["real", "honeypot"];
pub const HONEYPOT_SIGNALS: [&str; 2] = ["lookReal", "lookFake"];
pub const HONEYPOT_ACTIONS: [&str; 2] = ["attack", "withdraw"];

/// Two-type deception template. The attacker (receiver) earns
/// `attack_gain_real` for attacking a real system and loses
/// `attack_loss_honeypot` on a honeypot; withdrawing pays 0. The defender's
/// utility is the negated attacker utility minus `cost_signal` whenever the
/// signal misrepresents its type.
pub fn build_honeypot_game(cost_signal: f64, attack_gain_real: f64, attack_loss_honeypot: f64, prior_real: f64) -> Result<SignalingGame> {
    if !(prior_real > 0.0 && prior_real < 1.0) {
        return Err(GameError::invalid("prior of the real type must lie strictly inside (0, 1)"));
    }
    for (name, x) in [
        ("cost_signal", cost_signal),
        ("attack_gain_real", attack_gain_real),
        ("attack_loss_honeypot", attack_loss_honeypot),
    ] {
        if !x.is_finite() {
            return Err(GameError::invalid(format!("{name} must be finite")));
        }
    }
    let types = ActionSpace::new(HONEYPOT_TYPES)?;
    let prior = Distribution::named("prior", types, vec![prior_real, 1.0 - prior_real])?;
    let mut sender = Vec::with_capacity(8);
    let mut receiver = Vec::with_capacity(8);
    for t in 0..2 {
        for s in 0..2 {
            let disguise = if t != s { cost_signal } else { 0.0 };
            for a in 0..2 {
                let ua = match (t, a) {
                    (0, 0) => attack_gain_real,
                    (1, 0) => -attack_loss_honeypot,
                    _ => 0.0,
                };
                receiver.push(ua);
                sender.push(-ua - disguise);
            }
        }
    }
    SignalingGame::new(
        prior,
        ActionSpace::new(HONEYPOT_SIGNALS)?,
        ActionSpace::new(HONEYPOT_ACTIONS)?,
        sender,
        receiver,
    )
}

impl HoneypotParams {
    pub fn build(&self) -> Result<SignalingGame> {
        build_honeypot_game(self.cost_signal, self.attack_gain_real, self.attack_loss_honeypot, self.prior_real)
    }
}
