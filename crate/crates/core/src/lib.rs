//! Agent-based simulator of in-play betting on track races.
//!
//! The crate is organized around a deterministic pipeline: a race kernel
//! ([`race`]) produces per-tick trajectories, Monte-Carlo dry runs over that
//! kernel turn snapshots into win-probability estimates ([`prediction`]),
//! heterogeneous bettor agents ([`bettors`]) convert estimates into orders on
//! a back/lay matching engine ([`exchange`]), and a session driver
//! ([`orchestrator`]) wires the pieces together and hands the resulting
//! journal to the synthetic-data writers ([`datagen`]).
//!
//! Everything is reproducible: all randomness flows from explicit seeds
//! through named substreams, money is integer minor units, and identical
//! (config, seed) pairs yield byte-identical outputs.

pub mod bettors;
pub mod config;
pub mod datagen;
pub mod exchange;
pub mod ladder;
pub mod money;
pub mod orchestrator;
pub mod prediction;
pub mod race;
pub mod scenarios;
pub mod seeds;
