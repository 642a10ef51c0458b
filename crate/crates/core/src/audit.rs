//! Reproduction audit of the rock-paper-scissors prompt game: recomputed
//! values next to the published reference values, with discrepancies flagged.

use std::fmt::Write as _;

use serde::Serialize;

use crate::equilibrium::solve_zero_sum;
use crate::error::{GameError, Result};
use crate::game::{expected_utility, Player};
use crate::prompt::{llm_nash_equilibria, PromptSpaceGame};
use crate::spec::{load_game_spec_str, LoadOptions, LoadedSpec, RPS_PROMPT_GAME};

/// Values printed alongside the recomputation are equal when within this.
pub const AUDIT_TOL: f64 = 1e-9;

/// Published attacker utilities `U_ij` at prompt pairs `(x_i, y_j)`.
pub const PUBLISHED_SCALARS: [(usize, usize, f64); 4] = [(1, 3, 0.0), (4, 4, 0.0), (3, 5, 0.04), (5, 3, 0.02)];

/// The prompt pair published as the equilibrium.
pub const PUBLISHED_PAIR: (usize, usize) = (5, 3);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarLine {
    pub label: String,
    pub published: f64,
    /// Via the payoff tensor.
    pub recomputed: f64,
    /// Via an explicit sum over the nine outcomes.
    pub outcome_sum: f64,
    pub discrepancy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCheck {
    pub pair: String,
    pub published_as_equilibrium: bool,
    pub is_equilibrium: bool,
    pub row_best_deviation: String,
    pub row_gain: f64,
    pub col_best_deviation: String,
    pub col_gain: f64,
    pub discrepancy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpsAudit {
    pub classical_value: f64,
    pub classical_row: Vec<f64>,
    pub classical_col: Vec<f64>,
    pub scalars: Vec<ScalarLine>,
    pub row_prompts: Vec<String>,
    pub col_prompts: Vec<String>,
    /// Attacker utility at every prompt pair.
    pub prompt_payoffs: Vec<Vec<f64>>,
    pub equilibria: Vec<String>,
    pub published_pair: PairCheck,
    pub discrepancies: usize,
}

pub fn rps_prompt_game() -> Result<PromptSpaceGame> {
    match load_game_spec_str(RPS_PROMPT_GAME, &LoadOptions::default())?.1 {
        LoadedSpec::PromptGame(g) => Ok(g),
        other => Err(GameError::Internal(format!("bundled fixture has kind {}", other.kind()))),
    }
}

pub fn audit_rps() -> Result<RpsAudit> {
    let game = rps_prompt_game()?;
    let classical = solve_zero_sum(&game.base)?;
    let tensor = game.base.to_tensor();
    let rows = game.induced(Player::Row)?;
    let cols = game.induced(Player::Col)?;
    let a = game.base.row_payoff();

    let mut scalars = Vec::new();
    for (i, j, published) in PUBLISHED_SCALARS {
        let (x, y) = (&rows[i - 1], &cols[j - 1]);
        let recomputed = expected_utility(&tensor, &[x.clone(), y.clone()], 0)?;
        let mut outcome_sum = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                outcome_sum += x.prob(r) * y.prob(c) * a[(r, c)];
            }
        }
        scalars.push(ScalarLine {
            label: format!("U{i}{j}"),
            published,
            recomputed,
            outcome_sum,
            discrepancy: (recomputed - published).abs() > AUDIT_TOL,
        });
    }

    let nash = llm_nash_equilibria(&game)?;
    let name = |p: Player, k: usize| game.prompts(p)[k].id.clone();
    let (pi, pj) = (PUBLISHED_PAIR.0 - 1, PUBLISHED_PAIR.1 - 1);
    let [row_dev, col_dev] = nash.deviations(pi, pj);
    let is_eq = nash.equilibria.contains(&(pi, pj));
    let published_pair = PairCheck {
        pair: format!("({}, {})", name(Player::Row, pi), name(Player::Col, pj)),
        published_as_equilibrium: true,
        is_equilibrium: is_eq,
        row_best_deviation: deviation_name(row_dev.gain, name(Player::Row, row_dev.to)),
        row_gain: row_dev.gain.max(0.0),
        col_best_deviation: deviation_name(col_dev.gain, name(Player::Col, col_dev.to)),
        col_gain: col_dev.gain.max(0.0),
        discrepancy: !is_eq,
    };
    let (m, n) = nash.row_payoffs.shape();
    let discrepancies = scalars.iter().filter(|s| s.discrepancy).count() + usize::from(published_pair.discrepancy);
    Ok(RpsAudit {
        classical_value: classical.value.row(),
        classical_row: classical.row_strategy.probs().to_vec(),
        classical_col: classical.col_strategy.probs().to_vec(),
        scalars,
        row_prompts: (0..m).map(|i| name(Player::Row, i)).collect(),
        col_prompts: (0..n).map(|j| name(Player::Col, j)).collect(),
        prompt_payoffs: (0..m).map(|i| (0..n).map(|j| nash.row_payoffs[(i, j)]).collect()).collect(),
        equilibria: nash
            .equilibria
            .iter()
            .map(|&(i, j)| format!("({}, {})", name(Player::Row, i), name(Player::Col, j)))
            .collect(),
        published_pair,
        discrepancies,
    })
}

fn deviation_name(gain: f64, prompt: String) -> String {
    if gain > AUDIT_TOL {
        prompt
    } else {
        "none".into()
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

impl RpsAudit {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let flag = |d: bool| if d { "DISCREPANCY" } else { "ok" };
        let _ = writeln!(s, "classical equilibrium");
        let _ = writeln!(s, "  value {:+.6}", self.classical_value);
        let _ = writeln!(s, "  row {}  col {}", fmt_vec(&self.classical_row), fmt_vec(&self.classical_col));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<6} {:>19} {:>11} {:>12}  flag", "value", "published/reference", "recomputed", "outcome-sum");
        for l in &self.scalars {
            let _ = writeln!(
                s,
                "{:<6} {:>19.2} {:>11.4} {:>12.4}  {}",
                l.label,
                l.published,
                l.recomputed,
                l.outcome_sum,
                flag(l.discrepancy)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "attacker utility by prompt pair");
        let _ = write!(s, "{:>6}", "");
        for c in &self.col_prompts {
            let _ = write!(s, " {c:>8}");
        }
        let _ = writeln!(s);
        for (r, row) in self.row_prompts.iter().zip(&self.prompt_payoffs) {
            let _ = write!(s, "{r:>6}");
            for v in row {
                let _ = write!(s, " {:>8.4}", v + 0.0);
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "prompt-level equilibria: {}", self.equilibria.join(" "));
        let p = &self.published_pair;
        let _ = writeln!(
            s,
            "published/reference equilibrium {}: recomputed {}; attacker best deviation {} gains {:+.4}; defender best deviation {} gains {:+.4}  {}",
            p.pair,
            if p.is_equilibrium { "equilibrium" } else { "not an equilibrium" },
            p.row_best_deviation,
            p.row_gain,
            p.col_best_deviation,
            p.col_gain,
            flag(p.discrepancy)
        );
        let _ = writeln!(s, "discrepancies: {}", self.discrepancies);
        s
    }
}
