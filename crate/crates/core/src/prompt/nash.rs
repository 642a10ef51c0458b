//! Equilibria over finite prompt spaces.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GameError, Result};
use crate::game::{ActionSpace, BimatrixGame, Distribution, Player};
use crate::prompt::policy::{evaluate_all, InfoContext, ReasoningPolicy, Sampling, StructuredPrompt};

pub const PROMPT_GRID_LIMIT: usize = 10_000;
pub const PROMPT_TOL: f64 = 1e-9;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Clone, Debug)]
pub struct PromptSpaceGame {
    pub row_prompts: Vec<StructuredPrompt>,
    pub col_prompts: Vec<StructuredPrompt>,
    pub row_policy: Arc<dyn ReasoningPolicy>,
    pub col_policy: Arc<dyn ReasoningPolicy>,
    pub base: BimatrixGame,
    pub row_info: InfoContext,
    pub col_info: InfoContext,
    pub sampling: Sampling,
    pub concurrency: usize,
}

impl PromptSpaceGame {
    pub fn new(
        base: BimatrixGame,
        row_prompts: Vec<StructuredPrompt>,
        col_prompts: Vec<StructuredPrompt>,
        row_policy: Arc<dyn ReasoningPolicy>,
        col_policy: Arc<dyn ReasoningPolicy>,
        row_info: InfoContext,
        col_info: InfoContext,
    ) -> Result<Self> {
        for (name, prompts) in [("row", &row_prompts), ("column", &col_prompts)] {
            if prompts.is_empty() {
                return Err(GameError::invalid(format!("{name} prompt space is empty")));
            }
            for (i, p) in prompts.iter().enumerate() {
                p.validate()?;
                if prompts[..i].iter().any(|q| q.id == p.id) {
                    return Err(GameError::invalid(format!("duplicate {name} prompt id `{}`", p.id)));
                }
            }
        }
        if row_policy.action_space() != base.row_space() {
            return Err(GameError::invalid("row policy acts over a different space than the base game rows"));
        }
        if col_policy.action_space() != base.col_space() {
            return Err(GameError::invalid("column policy acts over a different space than the base game columns"));
        }
        Ok(Self {
            row_prompts,
            col_prompts,
            row_policy,
            col_policy,
            base,
            row_info,
            col_info,
            sampling: Sampling::default(),
            concurrency: DEFAULT_CONCURRENCY,
        })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_concurrency(mut self, c: usize) -> Self {
        self.concurrency = c.max(1);
        self
    }

    pub fn prompts(&self, player: Player) -> &[StructuredPrompt] {
        match player {
            Player::Row => &self.row_prompts,
            Player::Col => &self.col_prompts,
        }
    }

    fn policy(&self, player: Player) -> &dyn ReasoningPolicy {
        match player {
            Player::Row => self.row_policy.as_ref(),
            Player::Col => self.col_policy.as_ref(),
        }
    }

    fn info(&self, player: Player) -> &InfoContext {
        match player {
            Player::Row => &self.row_info,
            Player::Col => &self.col_info,
        }
    }

    /// The distribution each prompt of `player` induces, in prompt order.
    pub fn induced(&self, player: Player) -> Result<Vec<Distribution>> {
        let info = self.info(player);
        let items: Vec<_> = self.prompts(player).iter().map(|p| (p.clone(), info.clone())).collect();
        evaluate_all(self.policy(player), &items, self.sampling, self.concurrency)
    }
}

/// Best unilateral prompt deviation from a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub player: Player,
    pub to: usize,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmNashResult {
    pub row_distributions: Vec<Distribution>,
    pub col_distributions: Vec<Distribution>,
    /// `row_payoffs[(i, j)]`: row player's expected utility at prompts `(x_i, y_j)`.
    pub row_payoffs: DMatrix<f64>,
    pub col_payoffs: DMatrix<f64>,
    /// Equilibrium prompt index pairs in row-major order.
    pub equilibria: Vec<(usize, usize)>,
    pub behavioral: Vec<(Distribution, Distribution)>,
}

impl LlmNashResult {
    /// The largest-gain deviation of each player at `(i, j)`, lowest index on ties.
    pub fn deviations(&self, i: usize, j: usize) -> [Deviation; 2] {
        let (m, n) = self.row_payoffs.shape();
        let best = |len: usize, f: &dyn Fn(usize) -> f64, here: f64, player| {
            let mut to = 0;
            for k in 1..len {
                if f(k) > f(to) {
                    to = k;
                }
            }
            Deviation {
                player,
                to,
                gain: f(to) - here,
            }
        };
        [
            best(m, &|k| self.row_payoffs[(k, j)], self.row_payoffs[(i, j)], Player::Row),
            best(n, &|k| self.col_payoffs[(i, k)], self.col_payoffs[(i, j)], Player::Col),
        ]
    }
}

pub fn llm_nash_equilibria(game: &PromptSpaceGame) -> Result<LlmNashResult> {
    let (m, n) = (game.row_prompts.len(), game.col_prompts.len());
    if m * n > PROMPT_GRID_LIMIT {
        return Err(GameError::UnsupportedSize {
            what: "prompt grid |X|*|Y|".into(),
            actual: (m * n) as u128,
            limit: PROMPT_GRID_LIMIT as u128,
        });
    }
    let rows = game.induced(Player::Row)?;
    let cols = game.induced(Player::Col)?;
    let mut gr = DMatrix::zeros(m, n);
    let mut gc = DMatrix::zeros(m, n);
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let (ur, uc) = game.base.expected_payoffs(r, c)?;
            gr[(i, j)] = ur;
            gc[(i, j)] = uc;
        }
    }
    let mut equilibria = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let row_ok = (0..m).all(|k| gr[(k, j)] <= gr[(i, j)] + PROMPT_TOL);
            let col_ok = (0..n).all(|k| gc[(i, k)] <= gc[(i, j)] + PROMPT_TOL);
            if row_ok && col_ok {
                equilibria.push((i, j));
            }
        }
    }
    let behavioral = equilibria.iter().map(|&(i, j)| (rows[i].clone(), cols[j].clone())).collect();
    Ok(LlmNashResult {
        row_distributions: rows,
        col_distributions: cols,
        row_payoffs: gr,
        col_payoffs: gc,
        equilibria,
        behavioral,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmStackelbergResult {
    /// Index of the optimal sender prompt.
    pub sender_prompt: usize,
    /// Per message, the index into that message's receiver prompt list, or
    /// `None` for an unreachable message with no prompts.
    pub receiver_prompts: Vec<Option<usize>>,
    pub sender_value: f64,
    /// Sender's message-averaged utility for every sender prompt.
    pub sender_values: Vec<f64>,
    /// Receiver's expected utility at its chosen prompt, per message.
    pub receiver_values: Vec<Option<f64>>,
    /// Messages with zero probability under the chosen sender prompt.
    pub zero_probability_messages: Vec<usize>,
    pub sender_distribution: Distribution,
}

/// Sender prompt optimal against the receiver's per-message optimal prompts.
///
/// The sender's policy acts over `messages`, which must equal the sender's
/// action space in the base game; the receiver's policy acts over the other
/// player's actions and sees the message label as its observed message.
pub fn llm_stackelberg_solve(
    game: &PromptSpaceGame,
    sender: Player,
    messages: &ActionSpace,
    receiver_prompts: &[Vec<StructuredPrompt>],
) -> Result<LlmStackelbergResult> {
    let receiver = sender.opponent();
    if game.base.space(sender) != messages {
        return Err(GameError::invalid("message space must equal the sender's action space in the base game"));
    }
    if receiver_prompts.len() != messages.len() {
        return Err(GameError::invalid(format!(
            "{} receiver prompt lists for {} messages",
            receiver_prompts.len(),
            messages.len()
        )));
    }
    let u_s = game.base.payoff(sender);
    let u_r = game.base.payoff(receiver);
    // payoff(player)[(row action, col action)]
    let cell = |m: usize, a: usize| if sender == Player::Row { (m, a) } else { (a, m) };

    let sender_dists = game.induced(sender)?;
    let reachable: Vec<bool> = (0..messages.len())
        .map(|m| sender_dists.iter().any(|d| d.prob(m) > 0.0))
        .collect();

    let mut chosen: Vec<Option<(usize, Distribution, f64)>> = Vec::with_capacity(messages.len());
    for (m, list) in receiver_prompts.iter().enumerate() {
        if list.is_empty() {
            if reachable[m] {
                return Err(GameError::invalid(format!(
                    "message `{}` is reachable but has no receiver prompts",
                    messages.label(m)
                )));
            }
            chosen.push(None);
            continue;
        }
        let info = game.info(receiver).clone().observing(messages.label(m));
        let items: Vec<_> = list.iter().map(|p| (p.clone(), info.clone())).collect();
        let dists = evaluate_all(game.policy(receiver), &items, game.sampling, game.concurrency)?;
        let values: Vec<f64> = dists
            .iter()
            .map(|d| (0..d.len()).map(|a| d.prob(a) * u_r[cell(m, a)]).sum())
            .collect();
        let mut best = 0;
        for k in 1..values.len() {
            if values[k] > values[best] + PROMPT_TOL {
                best = k;
            }
        }
        chosen.push(Some((best, dists[best].clone(), values[best])));
    }

    let sender_values: Vec<f64> = sender_dists
        .iter()
        .map(|d| {
            chosen
                .iter()
                .enumerate()
                .filter_map(|(m, c)| c.as_ref().map(|(_, r, _)| (m, r)))
                .map(|(m, r)| d.prob(m) * (0..r.len()).map(|a| r.prob(a) * u_s[cell(m, a)]).sum::<f64>())
                .sum()
        })
        .collect();
    let mut best = 0;
    for k in 1..sender_values.len() {
        if sender_values[k] > sender_values[best] + PROMPT_TOL {
            best = k;
        }
    }
    let sd = sender_dists[best].clone();
    Ok(LlmStackelbergResult {
        sender_prompt: best,
        receiver_prompts: chosen.iter().map(|c| c.as_ref().map(|x| x.0)).collect(),
        sender_value: sender_values[best],
        receiver_values: chosen.iter().map(|c| c.as_ref().map(|x| x.2)).collect(),
        zero_probability_messages: (0..messages.len()).filter(|m| sd.prob(*m) == 0.0).collect(),
        sender_values,
        sender_distribution: sd,
    })
}
