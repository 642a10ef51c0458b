use crate::error::{GameError, Result};
use crate::game::space::{ActionSpace, Distribution};

/// Utilities of an N-player finite game, one dense tensor per player.
///
/// Tensors are flattened row-major: the last player's action varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTensor {
    spaces: Vec<ActionSpace>,
    utilities: Vec<Vec<f64>>,
}

impl PayoffTensor {
    pub fn new(spaces: Vec<ActionSpace>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        if spaces.len() < 2 {
            return Err(GameError::invalid("a game needs at least two players"));
        }
        if utilities.len() != spaces.len() {
            return Err(GameError::invalid(format!(
                "{} utility tensors for {} players",
                utilities.len(),
                spaces.len()
            )));
        }
        let cells: usize = spaces.iter().map(ActionSpace::len).product();
        for (i, u) in utilities.iter().enumerate() {
            if u.len() != cells {
                return Err(GameError::invalid(format!(
                    "utility tensor of player {i} has {} entries, expected {cells}",
                    u.len()
                )));
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(GameError::invalid(format!("player {i} has non-finite utilities")));
            }
        }
        Ok(Self { spaces, utilities })
    }

    pub fn player_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn utilities(&self, player: usize) -> &[f64] {
        &self.utilities[player]
    }

    pub fn cell_count(&self) -> usize {
        self.utilities[0].len()
    }

    /// Decodes a flat cell index into one action index per player.
    pub fn joint_action(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.spaces.len()];
        for (slot, space) in out.iter_mut().zip(&self.spaces).rev() {
            *slot = cell % space.len();
            cell /= space.len();
        }
        out
    }

    fn check_profile(&self, profile: &[Distribution]) -> Result<()> {
        if profile.len() != self.spaces.len() {
            return Err(GameError::invalid(format!(
                "profile has {} strategies for {} players",
                profile.len(),
                self.spaces.len()
            )));
        }
        for (i, (d, s)) in profile.iter().zip(&self.spaces).enumerate() {
            if d.space() != s {
                return Err(GameError::invalid(format!(
                    "strategy of player {i} is over {:?}, expected {:?}",
                    d.space(),
                    s
                )));
            }
        }
        Ok(())
    }

    /// Payoff of `player` for each of its pure actions against the others' mixes.
    pub fn deviation_payoffs(&self, profile: &[Distribution], player: usize) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        if player >= self.spaces.len() {
            return Err(GameError::invalid(format!("no player {player}")));
        }
        let mut out = vec![0.0; self.spaces[player].len()];
        for (cell, u) in self.utilities[player].iter().enumerate() {
            let joint = self.joint_action(cell);
            let weight: f64 = joint
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != player)
                .map(|(j, a)| profile[j].prob(*a))
                .product();
            out[joint[player]] += weight * u;
        }
        Ok(out)
    }
}

/// Expected utility of `player` under a mixed profile: the sum over joint
/// actions of the product of marginal probabilities times the utility.
pub fn expected_utility(game: &PayoffTensor, profile: &[Distribution], player: usize) -> Result<f64> {
    game.check_profile(profile)?;
    if player >= game.player_count() {
        return Err(GameError::invalid(format!("no player {player}")));
    }
    let mut total = 0.0;
    for (cell, u) in game.utilities[player].iter().enumerate() {
        let joint = game.joint_action(cell);
        let weight: f64 = joint.iter().enumerate().map(|(j, a)| profile[j].prob(*a)).product();
        total += weight * u;
    }
    Ok(total)
}

/// Outcome of an ε-Nash check.
#[derive(Clone, Debug, PartialEq)]
pub struct NashCheck {
    pub is_equilibrium: bool,
    /// Best pure-deviation gain of each player (never negative).
    pub gains: Vec<f64>,
}

impl NashCheck {
    pub fn worst_gain(&self) -> f64 {
        self.gains.iter().copied().fold(0.0, f64::max)
    }
}

pub fn is_epsilon_nash(game: &PayoffTensor, profile: &[Distribution], epsilon: f64) -> Result<NashCheck> {
    if !(epsilon >= 0.0) {
        return Err(GameError::invalid("epsilon must be non-negative"));
    }
    let mut gains = Vec::with_capacity(game.player_count());
    for player in 0..game.player_count() {
        let current = expected_utility(game, profile, player)?;
        let best = game
            .deviation_payoffs(profile, player)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        gains.push((best - current).max(0.0));
    }
    Ok(NashCheck {
        is_equilibrium: gains.iter().all(|g| *g <= epsilon),
        gains,
    })
}
