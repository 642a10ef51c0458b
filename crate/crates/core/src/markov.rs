//! Discounted stochastic games over finite state sets.
//!
//! Joint actions at a state are flattened row-major over the players' action
//! spaces at that state, last player fastest, as in [`PayoffTensor`](crate::game::PayoffTensor).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::equilibrium::solve_zero_sum;
use crate::error::{GameError, Result};
use crate::game::{matrix_from_rows, ActionSpace, BimatrixGame, Distribution, SIMPLEX_TOL};

pub const SHAPLEY_TOL: f64 = 1e-8;
pub const SHAPLEY_MAX_ITER: usize = 100_000;
const EVAL_RESIDUAL_TOL: f64 = 1e-10;
const ZERO_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Infinite,
    /// Stages `0..=K`.
    Finite(usize),
}

/// Observation kernel of one player: for every state and joint action a
/// distribution over observation labels. Carried for round-tripping only.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    pub labels: ActionSpace,
    /// `kernel[s][joint]`
    pub kernel: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGame {
    states: Vec<String>,
    action_spaces: Vec<Vec<ActionSpace>>,
    transitions: Vec<Vec<Vec<f64>>>,
    utilities: Vec<Vec<Vec<f64>>>,
    discount: f64,
    horizon: Horizon,
    observations: Option<Vec<ObservationModel>>,
}

fn check_stochastic(row: &[f64], width: usize, what: impl Fn() -> String) -> Result<()> {
    if row.len() != width {
        return Err(GameError::invalid(format!("{} has {} entries, expected {width}", what(), row.len())));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(GameError::invalid(format!("{} has a negative or non-finite entry", what())));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(GameError::Simplex { field: what(), sum });
    }
    Ok(())
}

impl MarkovGame {
    /// `action_spaces[player][state]`, `transitions[state][joint][next]`,
    /// `utilities[player][state][joint]`.
    pub fn new(
        states: Vec<String>,
        action_spaces: Vec<Vec<ActionSpace>>,
        transitions: Vec<Vec<Vec<f64>>>,
        utilities: Vec<Vec<Vec<f64>>>,
        discount: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(GameError::invalid("a Markov game needs at least one state"));
        }
        ActionSpace::new(states.iter().cloned()).map_err(|_| GameError::invalid("state labels must be unique"))?;
        if action_spaces.len() < 2 {
            return Err(GameError::invalid("a Markov game needs at least two players"));
        }
        if utilities.len() != action_spaces.len() {
            return Err(GameError::invalid("one utility table per player is required"));
        }
        for (p, spaces) in action_spaces.iter().enumerate() {
            if spaces.len() != n {
                return Err(GameError::invalid(format!("player {p} has action spaces for {} of {n} states", spaces.len())));
            }
        }
        match horizon {
            Horizon::Infinite if !(discount > 0.0 && discount < 1.0) => {
                return Err(GameError::invalid("infinite-horizon discount must lie strictly inside (0, 1)"));
            }
            Horizon::Finite(_) if !(discount > 0.0 && discount <= 1.0) => {
                return Err(GameError::invalid("finite-horizon discount must lie in (0, 1]"));
            }
            _ => {}
        }
        if transitions.len() != n {
            return Err(GameError::invalid("one transition table per state is required"));
        }
        let game = Self {
            states,
            action_spaces,
            transitions,
            utilities,
            discount,
            horizon,
            observations: None,
        };
        for s in 0..n {
            let joints = game.joint_count(s);
            if game.transitions[s].len() != joints {
                return Err(GameError::invalid(format!(
                    "state `{}` has {} transition rows for {joints} joint actions",
                    game.states[s],
                    game.transitions[s].len()
                )));
            }
            for (j, row) in game.transitions[s].iter().enumerate() {
                check_stochastic(row, n, || format!("transition[{}][{j}]", game.states[s]))?;
            }
            for (p, u) in game.utilities.iter().enumerate() {
                let us = u.get(s).ok_or_else(|| GameError::invalid(format!("player {p} lacks utilities at state {s}")))?;
                if us.len() != joints || us.iter().any(|x| !x.is_finite()) {
                    return Err(GameError::invalid(format!(
                        "utilities of player {p} at state `{}` must be {joints} finite numbers",
                        game.states[s]
                    )));
                }
            }
            for u in &game.utilities {
                if u.len() != n {
                    return Err(GameError::invalid("utility tables must cover every state"));
                }
            }
        }
        Ok(game)
    }

    pub fn with_observations(mut self, models: Vec<ObservationModel>) -> Result<Self> {
        if models.len() != self.player_count() {
            return Err(GameError::invalid("one observation model per player is required"));
        }
        for (p, m) in models.iter().enumerate() {
            if m.kernel.len() != self.state_count() {
                return Err(GameError::invalid(format!("observation model of player {p} must cover every state")));
            }
            for (s, rows) in m.kernel.iter().enumerate() {
                if rows.len() != self.joint_count(s) {
                    return Err(GameError::invalid(format!("observation model of player {p} at state {s} has wrong row count")));
                }
                for (j, row) in rows.iter().enumerate() {
                    check_stochastic(row, m.labels.len(), || format!("observation[{p}][{s}][{j}]"))?;
                }
            }
        }
        self.observations = Some(models);
        Ok(self)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn player_count(&self) -> usize {
        self.action_spaces.len()
    }

    pub fn action_space(&self, player: usize, state: usize) -> &ActionSpace {
        &self.action_spaces[player][state]
    }

    pub fn action_spaces(&self) -> &[Vec<ActionSpace>] {
        &self.action_spaces
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn observations(&self) -> Option<&[ObservationModel]> {
        self.observations.as_deref()
    }

    pub fn joint_count(&self, state: usize) -> usize {
        self.action_spaces.iter().map(|p| p[state].len()).product()
    }

    pub fn transition(&self, state: usize, joint: usize) -> &[f64] {
        &self.transitions[state][joint]
    }

    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transitions
    }

    pub fn utility(&self, player: usize, state: usize, joint: usize) -> f64 {
        self.utilities[player][state][joint]
    }

    pub fn utilities(&self) -> &[Vec<Vec<f64>>] {
        &self.utilities
    }

    pub fn decode_joint(&self, state: usize, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.player_count()];
        for (p, slot) in out.iter_mut().enumerate().rev() {
            let len = self.action_spaces[p][state].len();
            *slot = joint % len;
            joint /= len;
        }
        out
    }

    pub fn encode_joint(&self, state: usize, actions: &[usize]) -> usize {
        actions
            .iter()
            .enumerate()
            .fold(0, |acc, (p, a)| acc * self.action_spaces[p][state].len() + a)
    }

    /// Same game with every stage utility of every player shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut g = self.clone();
        for u in g.utilities.iter_mut().flatten().flatten() {
            *u += c;
        }
        g
    }

    /// Same game with `utilities` replaced (same shapes required).
    pub fn with_utilities(&self, utilities: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let g = Self::new(
            self.states.clone(),
            self.action_spaces.clone(),
            self.transitions.clone(),
            utilities,
            self.discount,
            self.horizon,
        )?;
        match &self.observations {
            Some(o) => g.with_observations(o.clone()),
            None => Ok(g),
        }
    }

    fn stage_count(&self) -> usize {
        match self.horizon {
            Horizon::Infinite => 1,
            Horizon::Finite(k) => k + 1,
        }
    }

    fn check_policies(&self, policies: &[MarkovPolicy]) -> Result<()> {
        if policies.len() != self.player_count() {
            return Err(GameError::invalid(format!(
                "{} policies for {} players",
                policies.len(),
                self.player_count()
            )));
        }
        for (p, pol) in policies.iter().enumerate() {
            pol.check_against(self, p)?;
        }
        Ok(())
    }

    /// Probability of `joint` at `state` under the policies at `stage`.
    fn joint_prob(&self, policies: &[MarkovPolicy], stage: usize, state: usize, joint: usize) -> f64 {
        self.decode_joint(state, joint)
            .iter()
            .enumerate()
            .map(|(p, a)| policies[p].at(stage, state).prob(*a))
            .product()
    }
}

/// A per-state mixed policy; stationary when it has one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPolicy {
    stages: Vec<Vec<Distribution>>,
}

impl MarkovPolicy {
    pub fn stationary(per_state: Vec<Distribution>) -> Self {
        Self { stages: vec![per_state] }
    }

    /// One entry per stage `0..=K` for finite-horizon games.
    pub fn staged(stages: Vec<Vec<Distribution>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(GameError::invalid("a staged policy needs at least one stage"));
        }
        Ok(Self { stages })
    }

    /// Uniform play at every state.
    pub fn uniform(game: &MarkovGame, player: usize) -> Self {
        Self::stationary(
            (0..game.state_count())
                .map(|s| Distribution::uniform(game.action_space(player, s).clone()))
                .collect(),
        )
    }

    /// Pure stationary policy from one action index per state.
    pub fn pure(game: &MarkovGame, player: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != game.state_count() {
            return Err(GameError::invalid("one action per state is required"));
        }
        let mut per_state = Vec::with_capacity(actions.len());
        for (s, &a) in actions.iter().enumerate() {
            let space = game.action_space(player, s);
            if a >= space.len() {
                return Err(GameError::invalid(format!("action {a} out of range at state {s}")));
            }
            per_state.push(Distribution::point(space.clone(), a));
        }
        Ok(Self::stationary(per_state))
    }

    pub fn is_stationary(&self) -> bool {
        self.stages.len() == 1
    }

    pub fn stages(&self) -> &[Vec<Distribution>] {
        &self.stages
    }

    /// Distribution at `state` for `stage`; stationary policies ignore the stage.
    pub fn at(&self, stage: usize, state: usize) -> &Distribution {
        let k = if self.stages.len() == 1 { 0 } else { stage };
        &self.stages[k][state]
    }

    fn check_against(&self, game: &MarkovGame, player: usize) -> Result<()> {
        if !self.is_stationary() && self.stages.len() != game.stage_count() {
            return Err(GameError::invalid(format!(
                "policy of player {player} has {} stages, game has {}",
                self.stages.len(),
                game.stage_count()
            )));
        }
        for stage in &self.stages {
            if stage.len() != game.state_count() {
                return Err(GameError::invalid(format!("policy of player {player} must cover every state")));
            }
            for (s, d) in stage.iter().enumerate() {
                if d.space() != game.action_space(player, s) {
                    return Err(GameError::invalid(format!(
                        "policy of player {player} at state `{}` is over the wrong action space",
                        game.states[s]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Expected stage reward and next-state distribution at `state` under the policies.
fn induced(game: &MarkovGame, policies: &[MarkovPolicy], player: usize, stage: usize, state: usize) -> (f64, Vec<f64>) {
    let n = game.state_count();
    let mut reward = 0.0;
    let mut next = vec![0.0; n];
    for j in 0..game.joint_count(state) {
        let w = game.joint_prob(policies, stage, state, j);
        if w == 0.0 {
            continue;
        }
        reward += w * game.utility(player, state, j);
        for (acc, p) in next.iter_mut().zip(game.transition(state, j)) {
            *acc += w * p;
        }
    }
    (reward, next)
}

/// Discounted value of `player` at every state. Finite horizons return the
/// stage-0 values of the sum over stages `0..=K`.
pub fn evaluate_state_values(game: &MarkovGame, policies: &[MarkovPolicy], player: usize) -> Result<Vec<f64>> {
    game.check_policies(policies)?;
    if player >= game.player_count() {
        return Err(GameError::invalid(format!("no player {player}")));
    }
    let n = game.state_count();
    let gamma = game.discount();
    match game.horizon() {
        Horizon::Finite(k) => {
            let mut v = vec![0.0; n];
            for stage in (0..=k).rev() {
                v = (0..n)
                    .map(|s| {
                        let (r, next) = induced(game, policies, player, stage, s);
                        r + gamma * next.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .collect();
            }
            Ok(v)
        }
        Horizon::Infinite => {
            let mut a = DMatrix::<f64>::identity(n, n);
            let mut r = DVector::<f64>::zeros(n);
            for s in 0..n {
                let (reward, next) = induced(game, policies, player, 0, s);
                r[s] = reward;
                for (t, p) in next.iter().enumerate() {
                    a[(s, t)] -= gamma * p;
                }
            }
            let lu = a.clone().lu();
            let mut v = lu.solve(&r).ok_or_else(|| GameError::Internal("singular policy-evaluation system".into()))?;
            // one step of iterative refinement
            let residual = &r - &a * &v;
            if let Some(dv) = lu.solve(&residual) {
                v += dv;
            }
            let residual = (&r - &a * &v).amax();
            if residual >= EVAL_RESIDUAL_TOL * (1.0 + r.amax()) {
                return Err(GameError::Internal(format!("policy evaluation residual {residual:e}")));
            }
            Ok(v.iter().copied().collect())
        }
    }
}

/// Expected discounted utility of `player` from `start`.
pub fn evaluate_discounted_value(game: &MarkovGame, policies: &[MarkovPolicy], start: usize, player: usize) -> Result<f64> {
    if start >= game.state_count() {
        return Err(GameError::invalid(format!("no state {start}")));
    }
    Ok(evaluate_state_values(game, policies, player)?[start])
}

/// Result of Shapley value iteration. Values are from the first player's view.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapleySolution {
    pub values: Vec<f64>,
    pub policies: Vec<MarkovPolicy>,
    pub iterations: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

fn require_zero_sum(game: &MarkovGame) -> Result<()> {
    if game.player_count() != 2 {
        return Err(GameError::invalid("Shapley iteration needs exactly two players"));
    }
    for (u0, u1) in game.utilities[0].iter().flatten().zip(game.utilities[1].iter().flatten()) {
        if (u0 + u1).abs() > ZERO_SUM_TOL {
            return Err(GameError::invalid("Shapley iteration needs zero-sum stage utilities"));
        }
    }
    Ok(())
}

/// Stage game at `state` with continuation `v`: `u0(s, a, b) + γ Σ P(s'|s,a,b) v(s')`.
fn auxiliary_game(game: &MarkovGame, state: usize, v: &[f64]) -> Result<BimatrixGame> {
    let rows = game.action_space(0, state);
    let cols = game.action_space(1, state);
    let gamma = game.discount();
    let m: Vec<Vec<f64>> = (0..rows.len())
        .map(|a| {
            (0..cols.len())
                .map(|b| {
                    let j = a * cols.len() + b;
                    let cont: f64 = game.transition(state, j).iter().zip(v).map(|(p, x)| p * x).sum();
                    game.utility(0, state, j) + gamma * cont
                })
                .collect()
        })
        .collect();
    BimatrixGame::zero_sum(rows.clone(), cols.clone(), matrix_from_rows(&m)?)
}

fn solve_stage(game: &MarkovGame, v: &[f64]) -> Result<Vec<(f64, Distribution, Distribution)>> {
    (0..game.state_count())
        .into_par_iter()
        .map(|s| {
            let r = solve_zero_sum(&auxiliary_game(game, s, v)?)?;
            Ok((r.value.row(), r.row_strategy, r.col_strategy))
        })
        .collect()
}

/// Zero-sum value iteration `V ← val(u + γ P V)` with per-state exact stage solves.
///
/// Infinite horizons iterate until the sup-norm change is below [`SHAPLEY_TOL`];
/// finite horizons run backward induction once and return staged policies.
pub fn shapley_value_iteration(game: &MarkovGame) -> Result<ShapleySolution> {
    shapley_value_iteration_with(game, SHAPLEY_TOL, SHAPLEY_MAX_ITER)
}

/// [`shapley_value_iteration`] with explicit stopping tolerance and sweep cap.
pub fn shapley_value_iteration_with(game: &MarkovGame, tol: f64, max_iter: usize) -> Result<ShapleySolution> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(GameError::invalid("tolerance must be positive and the sweep cap at least 1"));
    }
    require_zero_sum(game)?;
    let n = game.state_count();
    match game.horizon() {
        Horizon::Finite(k) => {
            let mut v = vec![0.0; n];
            let mut stages = vec![Vec::new(); k + 1];
            for stage in (0..=k).rev() {
                stages[stage] = solve_stage(game, &v)?;
                v = stages[stage].iter().map(|x| x.0).collect();
            }
            let policy = |player: usize| {
                MarkovPolicy::staged(
                    stages
                        .iter()
                        .map(|st| st.iter().map(|x| if player == 0 { x.1.clone() } else { x.2.clone() }).collect())
                        .collect(),
                )
            };
            Ok(ShapleySolution {
                values: v,
                policies: vec![policy(0)?, policy(1)?],
                iterations: k + 1,
                residuals: Vec::new(),
            })
        }
        Horizon::Infinite => {
            let mut v = vec![0.0; n];
            let mut residuals = Vec::new();
            for it in 1..=max_iter {
                let solved = solve_stage(game, &v)?;
                let next: Vec<f64> = solved.iter().map(|x| x.0).collect();
                let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                residuals.push(change);
                v = next;
                if change < tol {
                    let (rows, cols) = solved.into_iter().map(|(_, r, c)| (r, c)).unzip();
                    return Ok(ShapleySolution {
                        values: v,
                        policies: vec![MarkovPolicy::stationary(rows), MarkovPolicy::stationary(cols)],
                        iterations: it,
                        residuals,
                    });
                }
            }
            Err(GameError::ConvergenceFailure {
                what: "Shapley value iteration".into(),
                iterations: max_iter,
                residual: residuals.last().copied().unwrap_or(f64::INFINITY),
                last_iterate: Some(vec![v]),
            })
        }
    }
}

/// One-shot deviation check. `gains[player][state]` is the largest gain over
/// all stages from switching that state's action, continuation fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPerfectCheck {
    pub is_perfect: bool,
    pub gains: Vec<Vec<f64>>,
}

impl MarkovPerfectCheck {
    pub fn worst_gain(&self) -> f64 {
        self.gains.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Value of `player` deviating to pure `action` at `state` for one step.
fn deviation_value(
    game: &MarkovGame,
    policies: &[MarkovPolicy],
    player: usize,
    stage: usize,
    state: usize,
    action: usize,
    continuation: &[f64],
) -> f64 {
    let gamma = game.discount();
    let mut total = 0.0;
    for j in 0..game.joint_count(state) {
        let joint = game.decode_joint(state, j);
        if joint[player] != action {
            continue;
        }
        let w: f64 = joint
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != player)
            .map(|(p, a)| policies[p].at(stage, state).prob(*a))
            .product();
        if w == 0.0 {
            continue;
        }
        let cont: f64 = game.transition(state, j).iter().zip(continuation).map(|(p, x)| p * x).sum();
        total += w * (game.utility(player, state, j) + gamma * cont);
    }
    total
}

pub fn verify_markov_perfect(game: &MarkovGame, policies: &[MarkovPolicy], epsilon: f64) -> Result<MarkovPerfectCheck> {
    if !(epsilon >= 0.0) {
        return Err(GameError::invalid("epsilon must be non-negative"));
    }
    game.check_policies(policies)?;
    let n = game.state_count();
    let gamma = game.discount();
    let mut gains = vec![vec![0.0f64; n]; game.player_count()];
    for (player, player_gains) in gains.iter_mut().enumerate() {
        match game.horizon() {
            Horizon::Infinite => {
                let v = evaluate_state_values(game, policies, player)?;
                for s in 0..n {
                    let best = (0..game.action_space(player, s).len())
                        .map(|a| deviation_value(game, policies, player, 0, s, a, &v))
                        .fold(f64::NEG_INFINITY, f64::max);
                    player_gains[s] = (best - v[s]).max(0.0);
                }
            }
            Horizon::Finite(k) => {
                let mut cont = vec![0.0; n];
                for stage in (0..=k).rev() {
                    let mut here = vec![0.0; n];
                    for s in 0..n {
                        let (r, next) = induced(game, policies, player, stage, s);
                        here[s] = r + gamma * next.iter().zip(&cont).map(|(p, x)| p * x).sum::<f64>();
                        let best = (0..game.action_space(player, s).len())
                            .map(|a| deviation_value(game, policies, player, stage, s, a, &cont))
                            .fold(f64::NEG_INFINITY, f64::max);
                        player_gains[s] = player_gains[s].max(best - here[s]);
                    }
                    cont = here;
                }
            }
        }
    }
    let worst = gains.iter().flatten().copied().fold(0.0, f64::max);
    Ok(MarkovPerfectCheck {
        is_perfect: worst <= epsilon,
        gains,
    })
}
