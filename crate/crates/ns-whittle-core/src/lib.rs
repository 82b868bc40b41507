//! Core engine for online control of non-stationary restless bandits.
//!
//! The crate is organised around the decision loop of a budgeted restless
//! bandit controller that has to *learn* drifting transition dynamics while
//! it acts:
//!
//! - [`kernel`] / [`config`] — shared domain types: row-stochastic transition
//!   kernels, reward tables, instance configuration and validation.
//! - [`variation`] — L1 drift bookkeeping for kernel schedules.
//! - [`env`] — seeded generators for stationary / abruptly-changing /
//!   drifting environments and the joint stepping logic.
//! - [`estimator`] — per-arm sliding-window transition statistics and the
//!   L1 confidence sets built from them.
//! - [`evi`] — extended value iteration: optimistic Q-values where the
//!   transition row is an extra control variable inside its confidence set.
//! - [`dual`] — golden-section minimisation of the activation multiplier,
//!   activation indices, and budgeted top-K selection.
//! - [`oracle`] — exact solves under true dynamics, policy evaluation by
//!   linear solve, regret accounting and the runtime audits.
//! - [`sim`] — the full per-replication simulation loop tying the above
//!   together.
//!
//! Everything here is deterministic given the seeds handed in; all
//! randomness flows through named [`rng`] streams. The crate is `no_std`
//! (with `alloc`) unless the default `std` feature is enabled.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod config;
pub mod dual;
pub mod env;
pub mod estimator;
pub mod evi;
pub mod kernel;
pub(crate) mod linalg;
pub(crate) mod math;
pub mod oracle;
pub mod regret;
pub mod rng;
pub mod sim;
pub mod variation;

pub use config::RmabConfig;
pub use env::{EnvMode, EnvironmentSchedule, JointState, StepOutcome};
pub use estimator::{ConfidenceSet, SlidingWindowStats};
pub use evi::{EviStop, QTable};
pub use dual::{DualState, PolicyDecision};
pub use kernel::{RewardTable, TransitionKernel, NUM_ACTIONS, PASSIVE, ACTIVE};
pub use variation::VariationBudget;
