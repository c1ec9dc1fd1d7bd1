//! Monotone couplings of geometric Galton–Watson trees conditioned to be
//! infinite, with the exact numerics and transport plans behind them.

pub mod chain;
pub mod cli;
pub mod coupler;
pub mod error;
pub mod infinite;
pub mod ladder;
pub mod numerics;
pub mod rng;
pub mod trees;
pub mod unif_sampling;
pub mod verify;

pub use error::{Error, Result};
