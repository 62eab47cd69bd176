//! Conversational skill discovery: a dialog environment over a skill
//! catalog, simulated users, and a Q-learning dialog manager.

pub mod catalog;
pub mod dialog;
pub mod error;
pub mod logs;
pub mod nlu;
pub mod nn;
pub mod rl;
pub mod runner;
pub mod service;
pub mod usersim;

pub use error::{Error, Result};

/// Seeded random source used throughout; reproducible across platforms.
pub type SimRng = rand_chacha::ChaCha8Rng;
