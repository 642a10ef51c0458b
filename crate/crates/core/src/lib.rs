//! Game-theoretic models for cyber defense: matrix games, zero-sum Markov
//! games, signaling and Stackelberg deception games, network interdiction,
//! games played over reasoning prompts, and multi-agent workflows.
//!
//! Game documents are JSON envelopes loaded through [`spec`]; every solver is
//! deterministic given its inputs and seed.

pub mod audit;
pub mod error;
pub mod equilibrium;
pub mod game;
pub mod interdiction;
pub mod markov;
pub mod prompt;
pub mod signaling;
pub mod spec;
pub mod stackelberg;
pub mod workflow;

pub use error::{GameError, Result};
pub use game::{ActionSpace, BimatrixGame, Distribution, Player};
