//! Cooperative passing-order scheduling for connected automated vehicles at an
//! unsignalized intersection.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: intersection geometry, lanes, movements and the conflict-subzone grid.
//! - [`schedule`]: interpretation of a (partial) passing order into collision-free
//!   subzone arrival times, plus the delay objective.
//! - [`search`]: Monte Carlo tree search over passing orders, the FIFO baseline and an
//!   exhaustive enumeration oracle.
//! - [`sim`]: a discrete-time point-queue traffic simulator with rolling replanning.
//! - [`cli`]: configuration handling and the experiment commands behind the binary.

pub mod cli;
pub mod error;
pub mod model;
pub mod schedule;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
