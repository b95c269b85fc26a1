//! Metastability of heavy-tailed clipped SGD: landscapes, noise, simulation,
//! the jump-count graph, the limiting Markov chain, and noise injection.

pub mod error;
pub mod graph;
pub mod harness;
pub mod injection;
pub mod landscape;
pub mod limit;
pub mod noise;
pub mod par;
pub mod rng;
pub mod sgd;

pub use error::{Error, Result};
