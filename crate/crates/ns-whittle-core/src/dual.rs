//! Activation-multiplier minimisation and budgeted arm selection.
//!
//! The summed optimistic values plus the budget credit form a convex
//! function of the multiplier (a pointwise maximum of affine functions), so
//! golden-section search over the capped interval is valid. Ties during the
//! search shrink from the right, biasing flat regions toward the smallest
//! minimiser.

use alloc::vec::Vec;

use crate::evi::{run_evi, ConfidenceSets, EviError, EviOutcome, EviStop, QTable};
use crate::kernel::{RewardTable, ACTIVE, PASSIVE};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Multiplier search outcome: the minimiser, its search interval
/// configuration, and how many objective evaluations were spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    pub lambda: f64,
    pub lambda_cap: f64,
    pub tolerance: f64,
    pub evaluations: usize,
}

/// Default search tolerance, scaled to the cap.
pub fn default_dual_tolerance(lambda_cap: f64) -> f64 {
    1e-4 * (1.0 + lambda_cap)
}

/// Golden-section minimisation of `f` on `[0, cap]` down to interval width
/// `tolerance`; returns the left endpoint of the final bracket, so flat
/// regions that touch the left edge resolve to the smallest minimiser.
pub fn minimize_dual<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    lambda_cap: f64,
    tolerance: f64,
) -> Result<DualState, E> {
    let mut a = 0.0f64;
    let mut b = lambda_cap;
    let mut evaluations = 0usize;
    if b - a > tolerance {
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        evaluations = 2;
        while b - a > tolerance {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(x2)?;
            }
            evaluations += 1;
        }
    }
    Ok(DualState {
        lambda: a,
        lambda_cap,
        tolerance,
        evaluations,
    })
}

/// One arm's inputs to the dual objective.
#[derive(Clone, Copy)]
pub struct ArmInput<'a> {
    pub sets: &'a ConfidenceSets,
    pub rewards: &'a RewardTable,
    pub state: usize,
}

/// The dual objective at `lambda`: summed per-arm optimistic values at the
/// arms' current states plus the budget credit `lambda * K / (1 - gamma)`.
///
/// The credit restores the constraint term that the per-arm activation
/// penalty leaves out; without it the objective would be monotone decreasing
/// in `lambda` and the search would pin to the cap.
pub fn dual_objective(
    lambda: f64,
    arms: &[ArmInput<'_>],
    gamma: f64,
    budget: usize,
    stop: &EviStop,
) -> Result<f64, EviError> {
    let mut total = lambda * budget as f64 / (1.0 - gamma);
    for arm in arms {
        let out = run_evi(
            &QTable::zeros(arm.sets.num_states()),
            arm.sets,
            arm.rewards,
            lambda,
            gamma,
            stop,
        )?;
        total += out.q.max_value(arm.state);
    }
    Ok(total)
}

/// Full dual solve: minimise the objective over `[0, cap]`, then re-run the
/// per-arm value iteration at the minimiser to expose converged Q-tables
/// and optimistic kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub state: DualState,
    pub objective: f64,
    pub per_arm: Vec<EviOutcome>,
}

pub fn solve_dual(
    arms: &[ArmInput<'_>],
    gamma: f64,
    budget: usize,
    stop: &EviStop,
    lambda_cap: f64,
    tolerance: f64,
) -> Result<DualSolution, EviError> {
    let state = minimize_dual(
        |lambda| dual_objective(lambda, arms, gamma, budget, stop),
        lambda_cap,
        tolerance,
    )?;
    let mut per_arm = Vec::with_capacity(arms.len());
    let mut objective = state.lambda * budget as f64 / (1.0 - gamma);
    for arm in arms {
        let out = run_evi(
            &QTable::zeros(arm.sets.num_states()),
            arm.sets,
            arm.rewards,
            state.lambda,
            gamma,
            stop,
        )?;
        objective += out.q.max_value(arm.state);
        per_arm.push(out);
    }
    Ok(DualSolution {
        state,
        objective,
        per_arm,
    })
}

/// Activation advantage per arm at its current state:
/// `Q(s_i, active) - Q(s_i, passive)` at the common multiplier.
pub fn whittle_indices(per_arm: &[QTable], states: &[usize]) -> Vec<f64> {
    per_arm
        .iter()
        .zip(states)
        .map(|(q, &s)| q.get(s, ACTIVE) - q.get(s, PASSIVE))
        .collect()
}

/// Budgeted selection: activate the arms with the `K` largest nonnegative
/// indices; fewer than `K` activate when fewer indices are nonnegative.
/// Ties break toward the lower arm id.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub indices: Vec<f64>,
    pub actions: Vec<bool>,
    pub active_count: usize,
}

pub fn select_actions(indices: &[f64], budget: usize) -> PolicyDecision {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&i, &j| {
        indices[j]
            .partial_cmp(&indices[i])
            .expect("indices are finite")
            .then(i.cmp(&j))
    });
    let mut actions = alloc::vec![false; indices.len()];
    let mut active_count = 0usize;
    for &arm in order.iter().take(budget) {
        if indices[arm] >= 0.0 {
            actions[arm] = true;
            active_count += 1;
        }
    }
    PolicyDecision {
        indices: indices.to_vec(),
        actions,
        active_count,
    }
}
