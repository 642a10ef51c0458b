//! Finite games: action spaces, mixed strategies, payoffs, best responses
//! and bounded-rationality transforms.

pub mod bimatrix;
pub mod bounded;
pub mod space;
pub mod tensor;

pub use bimatrix::{best_response, matrix_from_rows, matrix_to_rows, BestResponse, BimatrixGame, Player};
pub use bounded::{
    level_k_strategies, prospect_transform, quantal_response_equilibrium, ProspectParams,
    QRE_DEFAULT_DAMPING,
};
pub use space::{ActionSpace, Distribution, SIMPLEX_TOL};
pub use tensor::{expected_utility, is_epsilon_nash, NashCheck, PayoffTensor};
