//! Dynamic verification for INT-8 quantized classifiers.
//!
//! A large *task* model is paired with a much smaller *checker* model that
//! approximates it; both run on every input and a comparator accepts the task
//! label only when the checker's (possibly coarser) label agrees, re-running
//! the task model otherwise. This crate implements the whole desk-scale
//! toolkit around that idea:
//!
//! - [`qnn`]: a deterministic INT-8 inference engine with FLOP accounting,
//!   width-multiplier scaling and a byte-exact model container.
//! - [`fault`]: bit-flip injection, seeded random campaigns that estimate the
//!   risk probability matrix, and a progressive bit-search attack.
//! - [`runtime`]: the verified pair, its overhead/coverage metrics, the
//!   activation-range baseline detector, and campaign replay.
//! - [`arch`]: checker candidates distilled at swept width multipliers, the
//!   consistency-curve fit and the closed-form optimal multiplier.
//! - [`task`]: risk/impact/inconsistency matrices, agglomerative class
//!   clustering into simplified tasks, and Pareto selection.
//! - [`pipeline`]: the two exploration stages wired end to end.
//!
//! Everything is deterministic given a master seed: campaigns, training and
//! splits all draw from named ChaCha streams (see [`rng`]).

pub mod arch;
pub mod data;
pub mod error;
pub mod fault;
pub mod matrix;
pub mod pipeline;
pub mod qnn;
pub mod rng;
pub mod runtime;
pub mod task;
pub mod train;

pub use error::{DyveError, Result};
