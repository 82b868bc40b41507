//! Regret accounting and the runtime audits.
//!
//! Per step, the comparator value and the algorithm's value are both
//! evaluated at the *same* oracle multiplier under the true kernels at the
//! realized state; gaps are recorded signed and summed as-is. The audits
//! check three testable conclusions at runtime: the uniform value bound,
//! the optimism inequality on good-event steps, and the window-extended
//! bad-event count against `W B / eta`.

use alloc::vec::Vec;

use crate::kernel::TransitionKernel;
use crate::math;
use crate::oracle::{evaluate_policy_value, OracleSolution};

/// One step of the emitted regret log.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub time: usize,
    pub v_opt: f64,
    pub v_alg: f64,
    pub gap: f64,
    pub cum_regret: f64,
    /// The algorithm's own multiplier at this step (0 for policies that do
    /// not solve the dual).
    pub lambda_alg: f64,
    pub active_count: usize,
    /// Shortfall against the equality reading of the budget constraint,
    /// `K - active_count`; the hard cap keeps activations at or below `K`.
    pub constraint_violation: usize,
    pub bad_event: bool,
}

/// Both sides of one regret gap, evaluated at the oracle's multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretGap {
    pub v_opt: f64,
    pub v_alg: f64,
    pub gap: f64,
}

/// Evaluate the algorithm's per-arm policies against the oracle solution at
/// the same multiplier and true kernels.
pub fn regret_step(
    oracle: &OracleSolution,
    alg_policies: &[Vec<usize>],
    kernels: &[&TransitionKernel],
    rewards: &[crate::kernel::RewardTable],
    states: &[usize],
    gamma: f64,
    budget: usize,
) -> RegretGap {
    let v_alg = evaluate_policy_value(
        alg_policies,
        kernels,
        rewards,
        states,
        oracle.dual.lambda,
        gamma,
        budget,
    );
    RegretGap {
        v_opt: oracle.value,
        v_alg,
        gap: oracle.value - v_alg,
    }
}

/// Slack allowed by the optimism audit; covers value-iteration tolerance.
pub const OPTIMISM_SLACK: f64 = 1e-6;

/// One step of the optimism audit: the algorithm's policy under its
/// optimistic kernels should dominate the comparator on good-event steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimismRecord {
    pub time: usize,
    pub v_optimistic: f64,
    pub v_opt: f64,
    pub good_event: bool,
    pub holds: bool,
}

pub fn optimism_audit(
    time: usize,
    v_optimistic: f64,
    v_opt: f64,
    good_event: bool,
) -> OptimismRecord {
    OptimismRecord {
        time,
        v_optimistic,
        v_opt,
        good_event,
        holds: v_optimistic >= v_opt - OPTIMISM_SLACK,
    }
}

/// Window-extended bad-event bookkeeping.
///
/// `q_times` collects, greedily in time order, steps where some true row
/// escaped its inflated confidence set and that are separated from the
/// previous pick by more than the window. The extension adds every step
/// within the window after each pick; picks are spaced more than `W` apart,
/// so those stretches never overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct BadEventAudit {
    pub q_times: Vec<usize>,
    pub extended_count: usize,
    pub bound: f64,
    pub window: usize,
    pub eta: f64,
}

impl BadEventAudit {
    pub fn within_bound(&self) -> bool {
        self.extended_count as f64 <= math::ceil(self.bound)
    }
}

/// Build the audit from per-step escape flags (`flags[t-1]` for step `t`).
pub fn bad_event_audit(
    flags: &[bool],
    window: usize,
    total_variation: f64,
    eta: f64,
) -> BadEventAudit {
    let horizon = flags.len();
    let mut q_times: Vec<usize> = Vec::new();
    for (idx, &flag) in flags.iter().enumerate() {
        let t = idx + 1;
        if !flag {
            continue;
        }
        match q_times.last() {
            Some(&last) if t - last <= window => {}
            _ => q_times.push(t),
        }
    }
    let extended_count = q_times
        .iter()
        .map(|&t| horizon.min(t + window) - t + 1)
        .sum();
    let bound = if eta > 0.0 {
        window as f64 * total_variation / eta
    } else if total_variation == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    BadEventAudit {
        q_times,
        extended_count,
        bound,
        window,
        eta,
    }
}

/// Running check of the uniform value bound `N (1 + U_lambda) / (1 - gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueBoundAudit {
    pub bound: f64,
    pub max_abs: f64,
    pub violations: usize,
}

impl ValueBoundAudit {
    pub fn new(num_arms: usize, lambda_cap: f64, gamma: f64) -> Self {
        Self {
            bound: num_arms as f64 * (1.0 + lambda_cap) / (1.0 - gamma),
            max_abs: 0.0,
            violations: 0,
        }
    }

    pub fn observe(&mut self, value: f64) {
        let a = math::abs(value);
        if a > self.max_abs {
            self.max_abs = a;
        }
        if a > self.bound + 1e-6 {
            self.violations += 1;
        }
    }
}
