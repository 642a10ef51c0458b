//! Bounded-rationality transforms: logit quantal response, level-k reasoning
//! and prospect-theory valuation.

use nalgebra::DMatrix;

use crate::error::{GameError, Result};
use crate::game::bimatrix::{best_response, BimatrixGame, Player};
use crate::game::space::Distribution;

pub const QRE_TOL: f64 = 1e-10;
pub const QRE_DEFAULT_DAMPING: f64 = 0.5;

fn logit_response(payoffs: &[f64], lambda: f64) -> Vec<f64> {
    let top = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = payoffs.iter().map(|u| (lambda * (u - top)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Damped fixed-point iteration of the logit response map.
///
/// Both players update simultaneously from the previous iterate; iteration
/// stops once the sup-norm change drops below [`QRE_TOL`].
pub fn quantal_response_equilibrium(
    game: &BimatrixGame,
    rationality: f64,
    damping: f64,
    max_iter: usize,
) -> Result<(Distribution, Distribution)> {
    if !(rationality >= 0.0) || !rationality.is_finite() {
        return Err(GameError::invalid("rationality must be a finite non-negative number"));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(GameError::invalid("damping must lie in (0, 1]"));
    }
    let mut row = Distribution::uniform(game.row_space().clone());
    let mut col = Distribution::uniform(game.col_space().clone());
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let target_row = logit_response(&game.pure_payoffs(Player::Row, &col)?, rationality);
        let target_col = logit_response(&game.pure_payoffs(Player::Col, &row)?, rationality);
        let blend = |old: &Distribution, target: Vec<f64>| {
            let w = old
                .probs()
                .iter()
                .zip(target)
                .map(|(o, t)| (1.0 - damping) * o + damping * t)
                .collect();
            Distribution::from_weights(old.space().clone(), w)
        };
        let next_row = blend(&row, target_row)?;
        let next_col = blend(&col, target_col)?;
        change = next_row.sup_distance(&row).max(next_col.sup_distance(&col));
        row = next_row;
        col = next_col;
        if change < QRE_TOL {
            return Ok((row, col));
        }
    }
    Err(GameError::ConvergenceFailure {
        what: "quantal response iteration".into(),
        iterations: max_iter,
        residual: change,
        last_iterate: Some(vec![row.probs().to_vec(), col.probs().to_vec()]),
    })
}

/// Level-k strategies for levels `0..=k`. Level 0 is uniform; level `j`
/// plays the lowest-index pure best response to the opponent's level `j-1`.
pub fn level_k_strategies(game: &BimatrixGame, k: usize) -> Result<Vec<(Distribution, Distribution)>> {
    let mut levels = Vec::with_capacity(k + 1);
    levels.push((
        Distribution::uniform(game.row_space().clone()),
        Distribution::uniform(game.col_space().clone()),
    ));
    for _ in 0..k {
        let (prev_row, prev_col) = levels.last().expect("level 0 present");
        let r = best_response(game, prev_col, Player::Row)?.actions[0];
        let c = best_response(game, prev_row, Player::Col)?.actions[0];
        levels.push((
            Distribution::point(game.row_space().clone(), r),
            Distribution::point(game.col_space().clone(), c),
        ));
    }
    Ok(levels)
}

/// Prospect-theory value function parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProspectParams {
    pub gain_exponent: f64,
    pub loss_exponent: f64,
    pub loss_aversion: f64,
    pub reference_point: f64,
}

impl Default for ProspectParams {
    fn default() -> Self {
        Self {
            gain_exponent: 0.88,
            loss_exponent: 0.88,
            loss_aversion: 2.25,
            reference_point: 0.0,
        }
    }
}

impl ProspectParams {
    pub fn new(gain_exponent: f64, loss_exponent: f64, loss_aversion: f64, reference_point: f64) -> Result<Self> {
        let p = Self {
            gain_exponent,
            loss_exponent,
            loss_aversion,
            reference_point,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gain_exponent) || !unit(self.loss_exponent) {
            return Err(GameError::invalid("prospect exponents must lie in (0, 1]"));
        }
        if !(self.loss_aversion >= 1.0) || !self.loss_aversion.is_finite() {
            return Err(GameError::invalid("loss aversion must be >= 1"));
        }
        if !self.reference_point.is_finite() {
            return Err(GameError::invalid("reference point must be finite"));
        }
        Ok(())
    }

    pub fn value(&self, z: f64) -> f64 {
        let r = self.reference_point;
        if z >= r {
            (z - r).powf(self.gain_exponent)
        } else {
            -self.loss_aversion * (r - z).powf(self.loss_exponent)
        }
    }
}

pub fn prospect_transform(payoffs: &DMatrix<f64>, params: &ProspectParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    Ok(payoffs.map(|z| params.value(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::bimatrix::matrix_from_rows;
    use crate::game::space::ActionSpace;

    fn rps() -> BimatrixGame {
        let s = ActionSpace::new(["Rock", "Paper", "Scissors"]).unwrap();
        let a = matrix_from_rows(&[vec![0., -1., 1.], vec![1., 0., -1.], vec![-1., 1., 0.]]).unwrap();
        BimatrixGame::zero_sum(s.clone(), s, a).unwrap()
    }

    #[test]
    fn qre_at_zero_rationality_is_uniform() {
        let s = ActionSpace::indexed("a", 3).unwrap();
        let t = ActionSpace::indexed("b", 2).unwrap();
        let g = BimatrixGame::new(
            s,
            t,
            matrix_from_rows(&[vec![1., 5.], vec![2., 0.], vec![9., 3.]]).unwrap(),
            matrix_from_rows(&[vec![0., 1.], vec![4., 2.], vec![1., 1.]]).unwrap(),
        )
        .unwrap();
        let (r, c) = quantal_response_equilibrium(&g, 0.0, 0.5, 1000).unwrap();
        assert!(r.probs().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert!(c.probs().iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn qre_of_rps_is_uniform_fixed_point() {
        let g = rps();
        for lambda in [0.5, 2.0, 10.0] {
            let (r, c) = quantal_response_equilibrium(&g, lambda, 0.5, 10_000).unwrap();
            // residual of the undamped logit map at the returned point
            let lr = logit_response(&g.pure_payoffs(Player::Row, &c).unwrap(), lambda);
            let residual = r.probs().iter().zip(&lr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(residual < 1e-10, "lambda {lambda}: residual {residual}");
        }
    }

    #[test]
    fn qre_concentrates_on_dominant_action() {
        let s = ActionSpace::indexed("a", 2).unwrap();
        let g = BimatrixGame::new(
            s.clone(),
            s,
            matrix_from_rows(&[vec![3., 2.], vec![1., 0.]]).unwrap(),
            matrix_from_rows(&[vec![1., 0.], vec![0., 1.]]).unwrap(),
        )
        .unwrap();
        let (r, _) = quantal_response_equilibrium(&g, 50.0, 0.5, 100_000).unwrap();
        // logit weight of the dominated row is exp(-100) relative
        assert!(r.prob(0) > 0.99);
    }

    #[test]
    fn qre_reports_last_iterate_on_failure() {
        let s = ActionSpace::indexed("a", 2).unwrap();
        let g = BimatrixGame::zero_sum(
            s.clone(),
            s,
            matrix_from_rows(&[vec![3., -1.], vec![-2., 1.]]).unwrap(),
        )
        .unwrap();
        let err = quantal_response_equilibrium(&g, 5.0, 1.0, 1).unwrap_err();
        match err {
            GameError::ConvergenceFailure { last_iterate, .. } => {
                assert_eq!(last_iterate.unwrap().len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn level_k_examples() {
        let g = rps();
        let levels = level_k_strategies(&g, 0).unwrap();
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].0, Distribution::uniform(g.row_space().clone()));

        let levels = level_k_strategies(&g, 1).unwrap();
        assert_eq!(levels[1].0.probs(), &[1.0, 0.0, 0.0]);
        assert_eq!(levels[1].1.probs(), &[1.0, 0.0, 0.0]);

        // Matching pennies: level 1 both pick H (all ties vs uniform).
        // Level 2 row best-responds to column H -> H; column best-responds to row H -> T.
        let s = ActionSpace::new(["H", "T"]).unwrap();
        let mp = BimatrixGame::zero_sum(
            s.clone(),
            s,
            matrix_from_rows(&[vec![1., -1.], vec![-1., 1.]]).unwrap(),
        )
        .unwrap();
        let levels = level_k_strategies(&mp, 2).unwrap();
        assert_eq!(levels[2].0.probs(), &[1.0, 0.0]);
        assert_eq!(levels[2].1.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn prospect_examples() {
        let m = matrix_from_rows(&[vec![1.0, -1.0], vec![2.5, -0.3]]).unwrap();
        let id = ProspectParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(prospect_transform(&m, &id).unwrap(), m);

        let p = ProspectParams::default();
        assert_eq!(p.value(1.0), 1.0);
        assert!((p.value(-1.0) + 2.25).abs() < 1e-15);
        assert!(ProspectParams::new(1.2, 0.5, 2.0, 0.0).is_err());
        assert!(ProspectParams::new(0.5, 0.5, 0.9, 0.0).is_err());
    }
}
