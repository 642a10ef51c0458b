//! Leader commitment in two-player Markov games and deception episode rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GameError, Result};
use crate::markov::{evaluate_state_values, Horizon, MarkovGame, MarkovPolicy, SHAPLEY_MAX_ITER, SHAPLEY_TOL};

pub const LEADER_POLICY_LIMIT: u128 = 100_000;
const TIE_TOL: f64 = 1e-9;

/// Result metadata string recorded with every commitment solution.
pub const COMMITMENT_SCOPE: &str = "pure stationary state-feedback leader policies; history-dependent commitment not searched";

/// Utilities for one pair of private types `(leader type, follower type)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffVariant {
    pub leader_type: String,
    pub follower_type: String,
    /// `utilities[player][state][joint]`, same shape as the base game.
    pub utilities: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackelbergMarkovGame {
    base: MarkovGame,
    leader: usize,
    variants: Vec<PayoffVariant>,
    type_profile: Option<(String, String)>,
    start_state: usize,
    active: MarkovGame,
}

impl StackelbergMarkovGame {
    pub fn new(base: MarkovGame, leader: usize) -> Result<Self> {
        if base.player_count() != 2 {
            return Err(GameError::invalid("leader commitment needs a two-player game"));
        }
        if leader > 1 {
            return Err(GameError::invalid("leader must be player 0 or 1"));
        }
        Ok(Self {
            active: base.clone(),
            base,
            leader,
            variants: Vec::new(),
            type_profile: None,
            start_state: 0,
        })
    }

    /// Adds payoff variants and selects the one matching `profile`.
    pub fn with_types(mut self, variants: Vec<PayoffVariant>, profile: Option<(String, String)>) -> Result<Self> {
        for v in &variants {
            self.base.with_utilities(v.utilities.clone())?;
        }
        self.active = match &profile {
            None => self.base.clone(),
            Some((ld, fl)) => {
                let v = variants
                    .iter()
                    .find(|v| &v.leader_type == ld && &v.follower_type == fl)
                    .ok_or_else(|| GameError::invalid(format!("no payoff variant for type profile ({ld}, {fl})")))?;
                self.base.with_utilities(v.utilities.clone())?
            }
        };
        self.variants = variants;
        self.type_profile = profile;
        Ok(self)
    }

    pub fn with_start_state(mut self, state: usize) -> Result<Self> {
        if state >= self.base.state_count() {
            return Err(GameError::invalid(format!("no state {state}")));
        }
        self.start_state = state;
        Ok(self)
    }

    pub fn base(&self) -> &MarkovGame {
        &self.base
    }

    /// The base game with the selected payoff variant applied.
    pub fn game(&self) -> &MarkovGame {
        &self.active
    }

    pub fn leader(&self) -> usize {
        self.leader
    }

    pub fn follower(&self) -> usize {
        1 - self.leader
    }

    pub fn variants(&self) -> &[PayoffVariant] {
        &self.variants
    }

    pub fn type_profile(&self) -> Option<&(String, String)> {
        self.type_profile.as_ref()
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    fn policies(&self, leader: MarkovPolicy, follower: MarkovPolicy) -> Vec<MarkovPolicy> {
        if self.leader == 0 {
            vec![leader, follower]
        } else {
            vec![follower, leader]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FollowerResponse {
    pub policy: MarkovPolicy,
    /// Follower value per state under the returned policy.
    pub values: Vec<f64>,
}

/// Expected `(follower, leader)` stage utility and next-state row when the
/// follower plays `b` at `state` against the leader's mix.
fn follower_step(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy, state: usize, b: usize) -> (f64, f64, Vec<f64>) {
    let game = g.game();
    let n = game.state_count();
    let mut uf = 0.0;
    let mut ul = 0.0;
    let mut next = vec![0.0; n];
    let mix = leader_policy.at(0, state);
    for a in mix.support() {
        let w = mix.prob(a);
        let mut joint = [0usize; 2];
        joint[g.leader] = a;
        joint[g.follower()] = b;
        let j = game.encode_joint(state, &joint);
        uf += w * game.utility(g.follower(), state, j);
        ul += w * game.utility(g.leader, state, j);
        for (acc, p) in next.iter_mut().zip(game.transition(state, j)) {
            *acc += w * p;
        }
    }
    (uf, ul, next)
}

struct StepTable {
    /// `[state][follower action] -> (follower reward, leader reward, next row)`
    steps: Vec<Vec<(f64, f64, Vec<f64>)>>,
}

impl StepTable {
    fn new(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy) -> Self {
        let game = g.game();
        let steps = (0..game.state_count())
            .map(|s| {
                (0..game.action_space(g.follower(), s).len())
                    .map(|b| follower_step(g, leader_policy, s, b))
                    .collect()
            })
            .collect();
        Self { steps }
    }

    fn q(&self, state: usize, b: usize, gamma: f64, v: &[f64], leader: bool) -> f64 {
        let (uf, ul, next) = &self.steps[state][b];
        let r = if leader { *ul } else { *uf };
        r + gamma * next.iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
    }
}

fn optimal_sets(table: &StepTable, gamma: f64, v: &[f64]) -> Vec<Vec<usize>> {
    table
        .steps
        .iter()
        .enumerate()
        .map(|(s, acts)| {
            let q: Vec<f64> = (0..acts.len()).map(|b| table.q(s, b, gamma, v, false)).collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..q.len()).filter(|b| q[*b] >= best - TIE_TOL).collect()
        })
        .collect()
}

/// Value iteration on `max_{b in allowed[s]}` (or min for the leader view).
fn iterate_values(table: &StepTable, gamma: f64, allowed: &[Vec<usize>], leader_min: bool, what: &str) -> Result<Vec<f64>> {
    let n = allowed.len();
    let mut v = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..SHAPLEY_MAX_ITER {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let qs = allowed[s].iter().map(|b| table.q(s, *b, gamma, &v, leader_min));
                if leader_min {
                    qs.fold(f64::INFINITY, f64::min)
                } else {
                    qs.fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < SHAPLEY_TOL {
            return Ok(v);
        }
    }
    Err(GameError::ConvergenceFailure {
        what: what.into(),
        iterations: SHAPLEY_MAX_ITER,
        residual: change,
        last_iterate: Some(vec![v]),
    })
}

fn pick(sets: &[Vec<usize>], table: &StepTable, gamma: f64, leader_values: Option<&[f64]>) -> Vec<usize> {
    sets.iter()
        .enumerate()
        .map(|(s, set)| match leader_values {
            None => set[0],
            Some(w) => {
                let mut best = set[0];
                let mut best_q = table.q(s, best, gamma, w, true);
                for &b in &set[1..] {
                    let q = table.q(s, b, gamma, w, true);
                    if q < best_q - TIE_TOL {
                        best = b;
                        best_q = q;
                    }
                }
                best
            }
        })
        .collect()
}

fn stationary_response(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy, pessimistic: bool) -> Result<FollowerResponse> {
    let game = g.game();
    let gamma = game.discount();
    let f = g.follower();
    let table = StepTable::new(g, leader_policy);
    let everything: Vec<Vec<usize>> = (0..game.state_count())
        .map(|s| (0..game.action_space(f, s).len()).collect())
        .collect();
    let mut v = iterate_values(&table, gamma, &everything, false, "follower value iteration")?;
    // Policy-iteration refinement: evaluate the greedy policy exactly and
    // re-improve until the greedy choice is stable.
    let mut actions = Vec::new();
    for _ in 0..=game.state_count() * 64 {
        let sets = optimal_sets(&table, gamma, &v);
        let chosen = if pessimistic {
            let w = iterate_values(&table, gamma, &sets, true, "leader tie-break iteration")?;
            pick(&sets, &table, gamma, Some(&w))
        } else {
            pick(&sets, &table, gamma, None)
        };
        let policy = MarkovPolicy::pure(game, f, &chosen)?;
        let exact = evaluate_state_values(game, &g.policies(leader_policy.clone(), policy), f)?;
        let stable = chosen == actions;
        actions = chosen;
        v = exact;
        if stable {
            break;
        }
    }
    Ok(FollowerResponse {
        policy: MarkovPolicy::pure(game, f, &actions)?,
        values: v,
    })
}

fn staged_response(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy, k: usize, pessimistic: bool) -> Result<FollowerResponse> {
    let game = g.game();
    let gamma = game.discount();
    let f = g.follower();
    let table = StepTable::new(g, leader_policy);
    let n = game.state_count();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut stages = vec![Vec::new(); k + 1];
    for stage in (0..=k).rev() {
        let sets = optimal_sets(&table, gamma, &v);
        let chosen = pick(&sets, &table, gamma, pessimistic.then_some(&w[..]));
        let nv: Vec<f64> = (0..n).map(|s| table.q(s, chosen[s], gamma, &v, false)).collect();
        let nw: Vec<f64> = (0..n).map(|s| table.q(s, chosen[s], gamma, &w, true)).collect();
        stages[stage] = MarkovPolicy::pure(game, f, &chosen)?.stages()[0].clone();
        v = nv;
        w = nw;
    }
    Ok(FollowerResponse {
        policy: MarkovPolicy::staged(stages)?,
        values: v,
    })
}

fn check_leader_policy(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy) -> Result<()> {
    if !leader_policy.is_stationary() {
        return Err(GameError::invalid("leader policy must be stationary"));
    }
    let game = g.game();
    if leader_policy.stages()[0].len() != game.state_count() {
        return Err(GameError::invalid("leader policy must cover every state"));
    }
    for (s, d) in leader_policy.stages()[0].iter().enumerate() {
        if d.space() != game.action_space(g.leader, s) {
            return Err(GameError::invalid(format!("leader policy at state {s} is over the wrong action space")));
        }
    }
    Ok(())
}

/// Optimal deterministic follower policy against a fixed stationary leader
/// policy. Ties go to the lowest action index.
pub fn follower_best_response_mdp(game: &StackelbergMarkovGame, leader_policy: &MarkovPolicy) -> Result<FollowerResponse> {
    follower_response(game, leader_policy, false)
}

fn follower_response(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy, pessimistic: bool) -> Result<FollowerResponse> {
    check_leader_policy(g, leader_policy)?;
    match g.game().horizon() {
        Horizon::Infinite => stationary_response(g, leader_policy, pessimistic),
        Horizon::Finite(k) => staged_response(g, leader_policy, k, pessimistic),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommitmentSolution {
    pub leader_policy: MarkovPolicy,
    /// Leader's discounted value from the start state.
    pub leader_value: f64,
    pub follower_policy: MarkovPolicy,
    pub follower_value: f64,
    /// Action index per state of the chosen leader policy.
    pub leader_actions: Vec<usize>,
    pub policies_evaluated: usize,
    pub scope: &'static str,
}

/// Decodes the `index`-th pure stationary policy; state 0 is the most
/// significant digit, so indices follow lexicographic order of action vectors.
fn decode_policy(radices: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
    out
}

/// Best pure stationary leader commitment.
///
/// The follower answers with an optimal policy; among its optimal actions it
/// takes the one worst for the leader, then the lowest index. Leader ties go to
/// the lexicographically smallest action vector.
pub fn solve_leader_commitment(g: &StackelbergMarkovGame) -> Result<CommitmentSolution> {
    let game = g.game();
    let radices: Vec<usize> = (0..game.state_count()).map(|s| game.action_space(g.leader, s).len()).collect();
    let count = radices.iter().try_fold(1u128, |acc, r| acc.checked_mul(*r as u128)).unwrap_or(u128::MAX);
    if count > LEADER_POLICY_LIMIT {
        return Err(GameError::UnsupportedSize {
            what: "pure stationary leader policy count".into(),
            actual: count,
            limit: LEADER_POLICY_LIMIT,
        });
    }
    let count = count as usize;
    let start = g.start_state;
    let evaluated: Vec<(f64, f64, MarkovPolicy, MarkovPolicy)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let actions = decode_policy(&radices, i);
            let lp = MarkovPolicy::pure(game, g.leader, &actions)?;
            let resp = follower_response(g, &lp, true)?;
            let pols = g.policies(lp.clone(), resp.policy.clone());
            let lv = evaluate_state_values(game, &pols, g.leader)?[start];
            Ok((lv, resp.values[start], lp, resp.policy))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, e) in evaluated.iter().enumerate().skip(1) {
        if e.0 > evaluated[best].0 + TIE_TOL {
            best = i;
        }
    }
    let (leader_value, follower_value, leader_policy, follower_policy) = evaluated[best].clone();
    Ok(CommitmentSolution {
        leader_policy,
        leader_value,
        follower_policy,
        follower_value,
        leader_actions: decode_policy(&radices, best),
        policies_evaluated: count,
        scope: COMMITMENT_SCOPE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeStep {
    pub stage: usize,
    pub state: String,
    pub leader_action: String,
    pub follower_action: String,
    pub leader_payoff: f64,
    pub follower_payoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub steps: Vec<EpisodeStep>,
    pub final_state: String,
    /// Realized discounted leader return J_D.
    pub leader_return: f64,
    /// Realized discounted follower return J_A.
    pub follower_return: f64,
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in row.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Simulates `horizon` steps (stages `0..horizon`) with all randomness drawn
/// from a ChaCha8 stream seeded by `seed`.
pub fn run_deception_episode(
    g: &StackelbergMarkovGame,
    leader_policy: &MarkovPolicy,
    follower_policy: &MarkovPolicy,
    start: usize,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    let game = g.game();
    if start >= game.state_count() {
        return Err(GameError::invalid(format!("no state {start}")));
    }
    // validates shapes of both policies
    evaluate_shapes(g, leader_policy, follower_policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = game.discount();
    let mut state = start;
    let mut weight = 1.0;
    let mut steps = Vec::with_capacity(horizon);
    let (mut jl, mut jf) = (0.0, 0.0);
    for stage in 0..horizon {
        let a = leader_policy.at(stage, state).sample_with(rng.random());
        let b = follower_policy.at(stage, state).sample_with(rng.random());
        let mut joint = [0usize; 2];
        joint[g.leader] = a;
        joint[g.follower()] = b;
        let j = game.encode_joint(state, &joint);
        let ul = game.utility(g.leader, state, j);
        let uf = game.utility(g.follower(), state, j);
        jl += weight * ul;
        jf += weight * uf;
        weight *= gamma;
        steps.push(EpisodeStep {
            stage,
            state: game.states()[state].clone(),
            leader_action: game.action_space(g.leader, state).label(a).to_string(),
            follower_action: game.action_space(g.follower(), state).label(b).to_string(),
            leader_payoff: ul,
            follower_payoff: uf,
        });
        state = sample_row(game.transition(state, j), rng.random());
    }
    Ok(EpisodeTrace {
        seed,
        steps,
        final_state: game.states()[state].clone(),
        leader_return: jl,
        follower_return: jf,
    })
}

fn evaluate_shapes(g: &StackelbergMarkovGame, leader_policy: &MarkovPolicy, follower_policy: &MarkovPolicy) -> Result<()> {
    let game = g.game();
    for (player, pol) in [(g.leader, leader_policy), (g.follower(), follower_policy)] {
        for stage in pol.stages() {
            if stage.len() != game.state_count() {
                return Err(GameError::invalid(format!("policy of player {player} must cover every state")));
            }
            for (s, d) in stage.iter().enumerate() {
                if d.space() != game.action_space(player, s) {
                    return Err(GameError::invalid(format!("policy of player {player} at state {s} is over the wrong action space")));
                }
            }
        }
    }
    Ok(())
}
