use nalgebra::DMatrix;

use crate::error::{GameError, Result};
use crate::game::space::{ActionSpace, Distribution};
use crate::game::tensor::PayoffTensor;

/// Which side of a two-player game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Player {
    Row,
    Col,
}

impl Player {
    pub fn index(self) -> usize {
        match self {
            Player::Row => 0,
            Player::Col => 1,
        }
    }

    pub fn opponent(self) -> Player {
        match self {
            Player::Row => Player::Col,
            Player::Col => Player::Row,
        }
    }
}

/// Builds a dense matrix from rows, rejecting ragged or non-finite input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(GameError::invalid("matrix has no rows"));
    }
    let c = rows[0].len();
    if c == 0 {
        return Err(GameError::invalid("matrix has no columns"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(GameError::invalid("matrix rows have different lengths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(GameError::invalid("matrix has non-finite entries"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Two-player finite game in normal form. The row player is player 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BimatrixGame {
    row_space: ActionSpace,
    col_space: ActionSpace,
    row_payoff: DMatrix<f64>,
    col_payoff: DMatrix<f64>,
    zero_sum: bool,
}

impl BimatrixGame {
    pub fn new(
        row_space: ActionSpace,
        col_space: ActionSpace,
        row_payoff: DMatrix<f64>,
        col_payoff: DMatrix<f64>,
    ) -> Result<Self> {
        let shape = (row_space.len(), col_space.len());
        if row_payoff.shape() != shape || col_payoff.shape() != shape {
            return Err(GameError::invalid(format!(
                "payoff matrices must be {}x{}",
                shape.0, shape.1
            )));
        }
        if row_payoff.iter().chain(col_payoff.iter()).any(|x| !x.is_finite()) {
            return Err(GameError::invalid("payoffs must be finite"));
        }
        Ok(Self {
            row_space,
            col_space,
            row_payoff,
            col_payoff,
            zero_sum: false,
        })
    }

    /// Zero-sum game; the column payoff is the exact negation of `row_payoff`.
    pub fn zero_sum(row_space: ActionSpace, col_space: ActionSpace, row_payoff: DMatrix<f64>) -> Result<Self> {
        let col_payoff = -&row_payoff;
        let mut g = Self::new(row_space, col_space, row_payoff, col_payoff)?;
        g.zero_sum = true;
        Ok(g)
    }

    /// Builds from explicit matrices and a flag, enforcing the zero-sum invariant.
    pub fn with_flag(
        row_space: ActionSpace,
        col_space: ActionSpace,
        row_payoff: DMatrix<f64>,
        col_payoff: DMatrix<f64>,
        zero_sum: bool,
    ) -> Result<Self> {
        let mut g = Self::new(row_space, col_space, row_payoff, col_payoff)?;
        if zero_sum {
            if g.row_payoff.iter().zip(g.col_payoff.iter()).any(|(a, b)| *b != -*a) {
                return Err(GameError::invalid(
                    "zero-sum flag set but column payoff is not the negated row payoff",
                ));
            }
            g.zero_sum = true;
        }
        Ok(g)
    }

    pub fn row_space(&self) -> &ActionSpace {
        &self.row_space
    }

    pub fn col_space(&self) -> &ActionSpace {
        &self.col_space
    }

    pub fn space(&self, player: Player) -> &ActionSpace {
        match player {
            Player::Row => &self.row_space,
            Player::Col => &self.col_space,
        }
    }

    pub fn row_payoff(&self) -> &DMatrix<f64> {
        &self.row_payoff
    }

    pub fn col_payoff(&self) -> &DMatrix<f64> {
        &self.col_payoff
    }

    pub fn payoff(&self, player: Player) -> &DMatrix<f64> {
        match player {
            Player::Row => &self.row_payoff,
            Player::Col => &self.col_payoff,
        }
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    pub fn shape(&self) -> (usize, usize) {
        self.row_payoff.shape()
    }

    pub fn to_tensor(&self) -> PayoffTensor {
        let (m, n) = self.shape();
        let flat = |mat: &DMatrix<f64>| -> Vec<f64> {
            (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| mat[(i, j)]).collect()
        };
        PayoffTensor::new(
            vec![self.row_space.clone(), self.col_space.clone()],
            vec![flat(&self.row_payoff), flat(&self.col_payoff)],
        )
        .expect("bimatrix shapes are validated on construction")
    }

    /// Payoff vector of `player`'s pure actions against the opponent's mix.
    pub fn pure_payoffs(&self, player: Player, opponent: &Distribution) -> Result<Vec<f64>> {
        let expected = self.space(player.opponent());
        if opponent.space() != expected {
            return Err(GameError::invalid(format!(
                "opponent mix is over {:?}, expected {:?}",
                opponent.space(),
                expected
            )));
        }
        let q = opponent.probs();
        Ok(match player {
            Player::Row => (0..self.row_payoff.nrows())
                .map(|i| (0..q.len()).map(|j| self.row_payoff[(i, j)] * q[j]).sum())
                .collect(),
            Player::Col => (0..self.col_payoff.ncols())
                .map(|j| (0..q.len()).map(|i| self.col_payoff[(i, j)] * q[i]).sum())
                .collect(),
        })
    }

    /// `(row, col)` expected payoffs under the mixed pair, as bilinear forms.
    pub fn expected_payoffs(&self, row: &Distribution, col: &Distribution) -> Result<(f64, f64)> {
        if row.space() != &self.row_space || col.space() != &self.col_space {
            return Err(GameError::invalid("strategy spaces do not match the game"));
        }
        let p = row.probs();
        let q = col.probs();
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..p.len() {
            for j in 0..q.len() {
                let w = p[i] * q[j];
                a += w * self.row_payoff[(i, j)];
                b += w * self.col_payoff[(i, j)];
            }
        }
        Ok((a, b))
    }

    /// Copy with rows and columns reordered: new row `i` is old row `row_perm[i]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Result<Self> {
        let (m, n) = self.shape();
        let valid = |perm: &[usize], len: usize| {
            let mut seen = vec![false; len];
            perm.len() == len && perm.iter().all(|&k| k < len && !std::mem::replace(&mut seen[k], true))
        };
        if !valid(row_perm, m) || !valid(col_perm, n) {
            return Err(GameError::invalid("not a permutation"));
        }
        let rs = ActionSpace::new(row_perm.iter().map(|&i| self.row_space.label(i).to_string()))?;
        let cs = ActionSpace::new(col_perm.iter().map(|&j| self.col_space.label(j).to_string()))?;
        let a = DMatrix::from_fn(m, n, |i, j| self.row_payoff[(row_perm[i], col_perm[j])]);
        let b = DMatrix::from_fn(m, n, |i, j| self.col_payoff[(row_perm[i], col_perm[j])]);
        let mut g = Self::new(rs, cs, a, b)?;
        g.zero_sum = self.zero_sum;
        Ok(g)
    }
}

/// Best-response value and every maximising action.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub value: f64,
    pub actions: Vec<usize>,
}

/// Relative tolerance used when collecting argmax ties.
pub const TIE_TOL: f64 = 1e-12;

pub(crate) fn argmax_set(values: &[f64], tol: f64) -> (f64, Vec<usize>) {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = tol * best.abs().max(1.0);
    let idx = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= best - slack)
        .map(|(i, _)| i)
        .collect();
    (best, idx)
}

pub fn best_response(game: &BimatrixGame, opponent_mix: &Distribution, player: Player) -> Result<BestResponse> {
    let payoffs = game.pure_payoffs(player, opponent_mix)?;
    let (value, actions) = argmax_set(&payoffs, TIE_TOL);
    Ok(BestResponse { value, actions })
}
