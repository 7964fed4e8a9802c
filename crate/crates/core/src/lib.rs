//! Distributed optimal steady-state regulation for heterogeneous linear
//! multi-agent systems.
//!
//! Each agent runs a copy of a primal-dual optimal signal generator whose
//! state converges to the solution of a network resource-allocation
//! problem, and a tracking controller (state feedback, output feedback or a
//! high-gain law fed by real-time gradients) that drives the agent output to
//! that signal while a reduced-order observer cancels exosystem
//! disturbances.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! scenario loading live in the `dosr-cli` companion crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod control;
pub mod costs;
pub mod error;
pub mod generator;
pub mod graph;
pub mod numerics;
pub mod plant;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use numerics::Mat;
