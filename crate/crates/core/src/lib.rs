//! Attention steering for open-book question answering.
//!
//! The crate wires together four pieces:
//!
//! - [`steering`]: the pre-softmax attention bias that upweights a set of
//!   highlighted token positions at selected heads, plus an independent
//!   post-softmax scaling formulation used as an oracle.
//! - [`model`]: a small decoder-only transformer with a KV cache whose
//!   attention heads accept the steering bias during prefill and decode.
//! - [`pipeline`]: the three answering methods (direct prompting, two-round
//!   iterative prompting, and identify → match back → steer).
//! - [`profiling`]: head-set search (greedy, group, coarse-to-fine) with
//!   exact evaluation budgeting.
//!
//! Supporting modules cover sentence matching ([`matching`]), prompt
//! templates ([`prompts`]), datasets and metrics ([`eval`]) and the batch
//! command line ([`cli`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod profiling;
pub mod prompts;
pub mod steering;

pub use error::{Error, Result};
