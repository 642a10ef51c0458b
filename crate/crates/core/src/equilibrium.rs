//! Exact mixed equilibria of small two-player games.
//!
//! Zero-sum games up to 9x9 and all bimatrix games up to 6x6 are solved by
//! enumerating square support pairs and solving the indifference systems.
//! Larger zero-sum games fall back to fictitious play.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GameError, Result};
use crate::game::{is_epsilon_nash, BimatrixGame, Distribution, Player};

pub const SUPPORT_ENUMERATION_EPSILON: f64 = 1e-8;
pub const FICTITIOUS_PLAY_EPSILON: f64 = 1e-4;
pub const FICTITIOUS_PLAY_MAX_ITER: usize = 1_000_000;
const NEGATIVE_PROB_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-12;
const BR_TOL: f64 = 1e-9;
const POLISH_START: usize = 1 << 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    SupportEnumeration,
    FictitiousPlay,
}

impl Method {
    /// The ε at which this method's results are guaranteed to be Nash.
    pub fn epsilon(self) -> f64 {
        match self {
            Method::SupportEnumeration => SUPPORT_ENUMERATION_EPSILON,
            Method::FictitiousPlay => FICTITIOUS_PLAY_EPSILON,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GameValue {
    ZeroSum(f64),
    GeneralSum { row: f64, col: f64 },
}

impl GameValue {
    pub fn row(&self) -> f64 {
        match *self {
            GameValue::ZeroSum(v) => v,
            GameValue::GeneralSum { row, .. } => row,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResult {
    pub row_strategy: Distribution,
    pub col_strategy: Distribution,
    pub value: GameValue,
    pub method: Method,
}

impl EquilibriumResult {
    pub fn row_support(&self) -> Vec<usize> {
        support_of(&self.row_strategy)
    }

    pub fn col_support(&self) -> Vec<usize> {
        support_of(&self.col_strategy)
    }
}

fn support_of(d: &Distribution) -> Vec<usize> {
    d.probs()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 1e-12)
        .map(|(i, _)| i)
        .collect()
}

/// All equilibria found by support enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct BimatrixEquilibria {
    pub equilibria: Vec<EquilibriumResult>,
    /// Set when some equilibrium has more pure best responses than its
    /// opponent's support size; the list then holds vertex equilibria only.
    pub degenerate: bool,
}

/// Lexicographic k-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Solves `[M | -1; 1 | 0] (x, v) = (0, 1)`: the mix `x` over `cols` that makes
/// every line in `lines` earn the same value `v`. `payoff(line, col)`.
fn indifference_mix(
    lines: &[usize],
    cols: &[usize],
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<(Vec<f64>, f64)> {
    let k = lines.len();
    debug_assert_eq!(k, cols.len());
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (r, &line) in lines.iter().enumerate() {
        for (c, &col) in cols.iter().enumerate() {
            m[(r, c)] = payoff(line, col);
        }
        m[(r, k)] = -1.0;
    }
    for c in 0..k {
        m[(k, c)] = 1.0;
    }
    let sv = m.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    if hi == 0.0 || lo / hi < SINGULAR_TOL {
        return None;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    let mix: Vec<f64> = sol.iter().take(k).copied().collect();
    if mix.iter().any(|x| !x.is_finite() || *x < -NEGATIVE_PROB_TOL) {
        return None;
    }
    Some((mix, sol[k]))
}

fn embed(space_len: usize, support: &[usize], mix: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; space_len];
    for (&i, &x) in support.iter().zip(mix) {
        full[i] = x.max(0.0);
    }
    let total: f64 = full.iter().sum();
    full.iter_mut().for_each(|x| *x /= total);
    full
}

/// Candidate equilibrium on the square support pair `(rows, cols)`.
fn support_candidate(game: &BimatrixGame, rows: &[usize], cols: &[usize]) -> Option<(Distribution, Distribution)> {
    let a = game.row_payoff();
    let b = game.col_payoff();
    let (m, n) = game.shape();
    let (q, _) = indifference_mix(rows, cols, |i, j| a[(i, j)])?;
    let (p, _) = indifference_mix(cols, rows, |j, i| b[(i, j)])?;
    let row = Distribution::from_weights(game.row_space().clone(), embed(m, rows, &p)).ok()?;
    let col = Distribution::from_weights(game.col_space().clone(), embed(n, cols, &q)).ok()?;
    let check = is_epsilon_nash(&game.to_tensor(), &[row.clone(), col.clone()], SUPPORT_ENUMERATION_EPSILON).ok()?;
    check.is_equilibrium.then_some((row, col))
}

fn check_size(game: &BimatrixGame, limit: usize, what: &str) -> Result<()> {
    let (m, n) = game.shape();
    if m > limit || n > limit {
        return Err(GameError::UnsupportedSize {
            what: format!("{what} game dimension"),
            actual: m.max(n) as u128,
            limit: limit as u128,
        });
    }
    Ok(())
}

fn result_from(game: &BimatrixGame, row: Distribution, col: Distribution, method: Method) -> EquilibriumResult {
    let (vr, vc) = game.expected_payoffs(&row, &col).expect("strategies built from the game");
    let value = if game.is_zero_sum() {
        GameValue::ZeroSum(vr)
    } else {
        GameValue::GeneralSum { row: vr, col: vc }
    };
    EquilibriumResult {
        row_strategy: row,
        col_strategy: col,
        value,
        method,
    }
}

/// Value and optimal strategies of a zero-sum game.
pub fn solve_zero_sum(game: &BimatrixGame) -> Result<EquilibriumResult> {
    if !game.is_zero_sum() {
        return Err(GameError::invalid("solve_zero_sum requires a zero-sum game"));
    }
    check_size(game, 50, "zero-sum")?;
    let (m, n) = game.shape();
    if m <= 9 && n <= 9 {
        for k in 1..=m.min(n) {
            let row_sets = combinations(m, k);
            let col_sets = combinations(n, k);
            for rows in &row_sets {
                for cols in &col_sets {
                    if let Some((row, col)) = support_candidate(game, rows, cols) {
                        return Ok(result_from(game, row, col, Method::SupportEnumeration));
                    }
                }
            }
        }
        // Shapley-Snow guarantees a square kernel; reaching here means the
        // game is numerically too ill-conditioned for the exact route.
        return fictitious_play(game);
    }
    fictitious_play(game)
}

/// Alternating fictitious play on the empirical averages of a zero-sum game.
///
/// At every power-of-two iteration from 1024 on, the most played actions are
/// tried as an exact support; a hit ends the run early.
pub fn fictitious_play(game: &BimatrixGame) -> Result<EquilibriumResult> {
    run_fictitious_play(game, FICTITIOUS_PLAY_MAX_ITER, true)
}

/// [`fictitious_play`] with a caller-chosen iteration cap.
pub fn fictitious_play_with(game: &BimatrixGame, max_iter: usize) -> Result<EquilibriumResult> {
    run_fictitious_play(game, max_iter, true)
}

fn run_fictitious_play(game: &BimatrixGame, max_iter: usize, polish: bool) -> Result<EquilibriumResult> {
    if !game.is_zero_sum() {
        return Err(GameError::invalid("fictitious play is implemented for zero-sum games"));
    }
    let a = game.row_payoff();
    let (m, n) = game.shape();
    let mut row_counts = vec![0u64; m];
    let mut col_counts = vec![0u64; n];
    // row_acc[i] = sum over past column plays of A[i, j_t]; col_acc[j] likewise for rows
    let mut row_acc = vec![0.0; m];
    let mut col_acc = vec![0.0; n];
    let mut col_play = 0usize;
    let mut gap = f64::INFINITY;
    for t in 1..=max_iter {
        col_counts[col_play] += 1;
        for i in 0..m {
            row_acc[i] += a[(i, col_play)];
        }
        let row_play = argmax_first(&row_acc);
        row_counts[row_play] += 1;
        for j in 0..n {
            col_acc[j] += a[(row_play, j)];
        }
        col_play = argmin_first(&col_acc);

        let tf = t as f64;
        let upper = row_acc[argmax_first(&row_acc)] / tf;
        let lower = col_acc[argmin_first(&col_acc)] / tf;
        gap = upper - lower;
        if polish && t >= POLISH_START && t.is_power_of_two() {
            if let Some((row, col)) = polish_supports(game, &row_counts, &col_counts) {
                return Ok(result_from(game, row, col, Method::FictitiousPlay));
            }
        }
        if gap <= FICTITIOUS_PLAY_EPSILON {
            let row = Distribution::from_weights(game.row_space().clone(), row_counts.iter().map(|c| *c as f64).collect())?;
            let col = Distribution::from_weights(game.col_space().clone(), col_counts.iter().map(|c| *c as f64).collect())?;
            let check = is_epsilon_nash(&game.to_tensor(), &[row.clone(), col.clone()], FICTITIOUS_PLAY_EPSILON)?;
            if check.is_equilibrium {
                return Ok(result_from(game, row, col, Method::FictitiousPlay));
            }
        }
    }
    if polish {
        if let Some((row, col)) = polish_supports(game, &row_counts, &col_counts) {
            return Ok(result_from(game, row, col, Method::FictitiousPlay));
        }
    }
    Err(GameError::ConvergenceFailure {
        what: "fictitious play".into(),
        iterations: max_iter,
        residual: gap,
        last_iterate: Some(vec![
            row_counts.iter().map(|c| *c as f64 / max_iter as f64).collect(),
            col_counts.iter().map(|c| *c as f64 / max_iter as f64).collect(),
        ]),
    })
}

/// Tries the square supports formed by the `k` most played actions of each
/// player, for every `k`. Accepts only candidates that are exact to 1e-8.
fn polish_supports(game: &BimatrixGame, row_counts: &[u64], col_counts: &[u64]) -> Option<(Distribution, Distribution)> {
    let ranked = |counts: &[u64]| {
        let mut idx: Vec<usize> = (0..counts.len()).filter(|i| counts[*i] > 0).collect();
        idx.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
        idx
    };
    let rows = ranked(row_counts);
    let cols = ranked(col_counts);
    for k in 1..=rows.len().min(cols.len()) {
        let mut r = rows[..k].to_vec();
        let mut c = cols[..k].to_vec();
        r.sort_unstable();
        c.sort_unstable();
        if let Some(found) = support_candidate(game, &r, &c) {
            return Some(found);
        }
    }
    None
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

fn count_best_responses(payoffs: &[f64]) -> usize {
    let best = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    payoffs.iter().filter(|x| **x >= best - BR_TOL).count()
}

fn same_profile(a: &EquilibriumResult, row: &Distribution, col: &Distribution) -> bool {
    a.row_strategy.sup_distance(row) < 1e-9 && a.col_strategy.sup_distance(col) < 1e-9
}

/// Every equilibrium reachable by square support enumeration, sorted by
/// (row support, column support).
pub fn solve_bimatrix(game: &BimatrixGame) -> Result<BimatrixEquilibria> {
    check_size(game, 6, "bimatrix")?;
    let (m, n) = game.shape();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = (1..=m.min(n))
        .flat_map(|k| {
            let cols = combinations(n, k);
            combinations(m, k)
                .into_iter()
                .flat_map(move |r| cols.clone().into_iter().map(move |c| (r.clone(), c)))
        })
        .collect();
    let candidates: Vec<(Distribution, Distribution)> = pairs
        .par_iter()
        .filter_map(|(rows, cols)| support_candidate(game, rows, cols))
        .collect();

    let mut equilibria: Vec<EquilibriumResult> = Vec::new();
    for (row, col) in candidates {
        if !equilibria.iter().any(|e| same_profile(e, &row, &col)) {
            equilibria.push(result_from(game, row, col, Method::SupportEnumeration));
        }
    }
    equilibria.sort_by(|x, y| {
        (x.row_support(), x.col_support())
            .cmp(&(y.row_support(), y.col_support()))
            .then_with(|| {
                x.row_strategy
                    .probs()
                    .partial_cmp(y.row_strategy.probs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });

    let mut degenerate = false;
    for e in &equilibria {
        let row_brs = count_best_responses(&game.pure_payoffs(Player::Row, &e.col_strategy)?);
        let col_brs = count_best_responses(&game.pure_payoffs(Player::Col, &e.row_strategy)?);
        if row_brs > e.col_support().len() || col_brs > e.row_support().len() {
            degenerate = true;
        }
    }
    Ok(BimatrixEquilibria { equilibria, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{matrix_from_rows, ActionSpace};

    fn zs(rows: &[Vec<f64>]) -> BimatrixGame {
        let m = matrix_from_rows(rows).unwrap();
        BimatrixGame::zero_sum(
            ActionSpace::indexed("r", m.nrows()).unwrap(),
            ActionSpace::indexed("c", m.ncols()).unwrap(),
            m,
        )
        .unwrap()
    }

    fn bi(a: &[Vec<f64>], b: &[Vec<f64>]) -> BimatrixGame {
        let a = matrix_from_rows(a).unwrap();
        let b = matrix_from_rows(b).unwrap();
        BimatrixGame::new(
            ActionSpace::indexed("r", a.nrows()).unwrap(),
            ActionSpace::indexed("c", a.ncols()).unwrap(),
            a,
            b,
        )
        .unwrap()
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(1, 1), vec![vec![0]]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn one_by_one_game() {
        let r = solve_zero_sum(&zs(&[vec![2.5]])).unwrap();
        assert_eq!(r.value, GameValue::ZeroSum(2.5));
        assert_eq!(r.row_strategy.probs(), &[1.0]);
    }

    #[test]
    fn matching_pennies() {
        let r = solve_zero_sum(&zs(&[vec![1., -1.], vec![-1., 1.]])).unwrap();
        assert!(r.value.row().abs() < 1e-12);
        for p in r.row_strategy.probs().iter().chain(r.col_strategy.probs()) {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn non_zero_sum_rejected_and_oversize_reported() {
        let g = bi(&[vec![1.]], &[vec![1.]]);
        assert!(matches!(solve_zero_sum(&g), Err(GameError::InvalidInput(_))));
        let big = zs(&vec![vec![0.0; 51]; 51]);
        assert!(matches!(solve_zero_sum(&big), Err(GameError::UnsupportedSize { .. })));
        let seven = bi(&vec![vec![0.0; 7]; 7], &vec![vec![0.0; 7]; 7]);
        assert!(matches!(solve_bimatrix(&seven), Err(GameError::UnsupportedSize { .. })));
    }

    #[test]
    fn prisoners_dilemma_single_equilibrium() {
        let g = bi(&[vec![3., 0.], vec![5., 1.]], &[vec![3., 5.], vec![0., 1.]]);
        let eqs = solve_bimatrix(&g).unwrap();
        assert!(!eqs.degenerate);
        assert_eq!(eqs.equilibria.len(), 1);
        assert_eq!(eqs.equilibria[0].row_strategy.probs(), &[0.0, 1.0]);
        assert_eq!(eqs.equilibria[0].col_strategy.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn battle_of_the_sexes() {
        let g = bi(&[vec![2., 0.], vec![0., 1.]], &[vec![1., 0.], vec![0., 2.]]);
        let eqs = solve_bimatrix(&g).unwrap();
        assert!(!eqs.degenerate);
        assert_eq!(eqs.equilibria.len(), 3);
        let mixed = &eqs.equilibria[1];
        assert_eq!(mixed.row_support(), vec![0, 1]);
        assert!((mixed.row_strategy.prob(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((mixed.col_strategy.prob(0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(eqs.equilibria[0].row_support(), vec![0]);
        assert_eq!(eqs.equilibria[2].row_support(), vec![1]);
    }

    #[test]
    fn zero_game_is_degenerate_with_four_vertices() {
        let g = bi(&[vec![0., 0.], vec![0., 0.]], &[vec![0., 0.], vec![0., 0.]]);
        let eqs = solve_bimatrix(&g).unwrap();
        assert!(eqs.degenerate);
        assert_eq!(eqs.equilibria.len(), 4);
    }

    fn random_zero_sum(n: usize, seed: u64) -> BimatrixGame {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        zs(&rows)
    }

    #[test]
    fn fictitious_play_on_large_random_game() {
        let g = random_zero_sum(12, 7);
        let r = solve_zero_sum(&g).unwrap();
        assert_eq!(r.method, Method::FictitiousPlay);
        let check = is_epsilon_nash(&g.to_tensor(), &[r.row_strategy, r.col_strategy], FICTITIOUS_PLAY_EPSILON).unwrap();
        assert!(check.is_equilibrium);
    }

    fn cyclic(n: usize) -> BimatrixGame {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match () {
                        _ if (j + n - i) % n == 1 => -1.0,
                        _ if (i + n - j) % n == 1 => 1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        zs(&rows)
    }

    #[test]
    fn fictitious_play_solves_cyclic_game() {
        let g = cyclic(12);
        let r = solve_zero_sum(&g).unwrap();
        assert!(r.value.row().abs() < 1e-8);
        let check = is_epsilon_nash(&g.to_tensor(), &[r.row_strategy, r.col_strategy], 1e-8).unwrap();
        assert!(check.is_equilibrium);
    }

    #[test]
    fn plain_fictitious_play_reports_last_iterate() {
        // Without polishing the 12-cycle closes its gap at roughly t^(-1/2).
        match run_fictitious_play(&cyclic(12), 10_000, false) {
            Err(GameError::ConvergenceFailure { last_iterate, residual, iterations, .. }) => {
                assert_eq!(iterations, 10_000);
                assert!(residual > FICTITIOUS_PLAY_EPSILON);
                let it = last_iterate.unwrap();
                assert!((it[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
