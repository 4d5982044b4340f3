//! Cycle-driven simulation core for a TDM passive optical network whose
//! subscriber units (ONUs) put their transmitter and receiver to sleep
//! independently, each through its own awake / listen / sleep state machine.
//!
//! The crate has three layers:
//!
//! * packet sources ([`traffic`]) and the per-cycle state machines with the
//!   head-end's handshake-free replicas of them ([`fsm`]),
//! * head-end cycle machinery: report intake, the two grant paths, and
//!   downstream buffering ([`sched`]),
//! * the closed-form companion models: priority-queue waiting times, sleep
//!   budgets derived from delay thresholds, and whole-cycle Markov chains
//!   over the machine states ([`analysis`]),
//!
//! tied together by the discrete-event engine in [`sim`].
//!
//! Everything here is deterministic: a (seed, config) pair fully determines
//! a run, bit for bit. The crate is `no_std` (with `alloc`) so the machine
//! and scheduling logic can be reused in firmware-flavoured environments;
//! all floating-point math goes through `libm`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod fsm;
pub mod power;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
pub use sim::{run_simulation, SimConfig, SimMetrics};
