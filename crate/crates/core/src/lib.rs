//! Exact unitary synthesis over discrete gate sets by tree search, with an
//! optional self-play-trained policy/value network guiding the search.
//!
//! The main entry points are [`gates::ActionTable`] (the legal actions for a
//! gate set on an architecture), [`env::Environment`] (the synthesis game),
//! [`mcts::run_search`], [`alphazero::training_run`] and
//! [`synth::synthesize`].

pub mod alphazero;
pub mod circuit;
pub mod cli;
pub mod env;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod mcts;
pub mod network;
pub mod oracles;
pub mod rng;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
