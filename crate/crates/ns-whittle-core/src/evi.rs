//! Extended value iteration: optimistic Q-values where each transition row
//! is an extra decision variable ranging over its confidence set.
//!
//! The inner maximisation over an L1 ball intersected with the simplex has a
//! closed-form greedy solution: shift mass onto the most valuable successor
//! (up to half the radius, capped at what the row can absorb) and strip the
//! same mass from the least valuable successors. Sweeps are synchronous: the
//! continuation values are frozen while a new Q-table is produced.

use alloc::vec::Vec;
use thiserror::Error;

use crate::estimator::ConfidenceSet;
use crate::kernel::{RewardTable, TransitionKernel, ACTIVE, NUM_ACTIONS, PASSIVE};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EviError {
    #[error("total radius {0} is negative")]
    InvalidRadius(f64),
    #[error("discount {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("expected {expected} confidence sets / values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Per-arm action values, flattened `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize) -> Self {
        Self {
            num_states,
            q: alloc::vec![0.0; num_states * NUM_ACTIONS],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.q[state * NUM_ACTIONS + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.q[state * NUM_ACTIONS + action] = value;
    }

    /// `max_a Q(s, a)`.
    #[inline]
    pub fn max_value(&self, state: usize) -> f64 {
        let p = self.get(state, PASSIVE);
        let a = self.get(state, ACTIVE);
        if a > p {
            a
        } else {
            p
        }
    }

    /// Activation rule: active iff `Q(s, 1) >= Q(s, 0)`.
    #[inline]
    pub fn greedy_action(&self, state: usize) -> usize {
        if self.get(state, ACTIVE) >= self.get(state, PASSIVE) {
            ACTIVE
        } else {
            PASSIVE
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

/// One arm's confidence sets, one per `(s, a)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSets {
    num_states: usize,
    sets: Vec<ConfidenceSet>,
}

impl ConfidenceSets {
    pub fn new(num_states: usize, sets: Vec<ConfidenceSet>) -> Result<Self, EviError> {
        if sets.len() != num_states * NUM_ACTIONS {
            return Err(EviError::ShapeMismatch {
                expected: num_states * NUM_ACTIONS,
                got: sets.len(),
            });
        }
        Ok(Self { num_states, sets })
    }

    /// Degenerate sets that contain exactly the rows of `kernel`.
    pub fn point_mass(kernel: &TransitionKernel) -> Self {
        let n = kernel.num_states();
        let mut sets = Vec::with_capacity(n * NUM_ACTIONS);
        for s in 0..n {
            for a in 0..NUM_ACTIONS {
                sets.push(ConfidenceSet::point_mass(kernel.row(s, a)));
            }
        }
        Self {
            num_states: n,
            sets,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> &ConfidenceSet {
        &self.sets[state * NUM_ACTIONS + action]
    }

    /// True iff every row of `kernel` is a member of its set.
    pub fn contains_kernel(&self, kernel: &TransitionKernel) -> bool {
        for s in 0..self.num_states {
            for a in 0..NUM_ACTIONS {
                if !self.get(s, a).contains(kernel.row(s, a)) {
                    return false;
                }
            }
        }
        true
    }
}

/// Value ordering shared by every row of a sweep: descending and ascending
/// positions of the continuation values, ties broken by lower state index.
struct ValueOrder {
    best: usize,
    ascending: Vec<usize>,
    all_equal: bool,
}

impl ValueOrder {
    fn new(values: &[f64]) -> Self {
        let mut ascending: Vec<usize> = (0..values.len()).collect();
        ascending.sort_by(|&i, &j| {
            values[i]
                .partial_cmp(&values[j])
                .expect("values are finite")
                .then(i.cmp(&j))
        });
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        let all_equal = values
            .iter()
            .all(|&v| v == values[0]);
        Self {
            best,
            ascending,
            all_equal,
        }
    }
}

/// Expected continuation value under the optimistic row, computed without
/// materialising the row.
fn optimistic_expectation(
    center: &[f64],
    total_radius: f64,
    values: &[f64],
    order: &ValueOrder,
) -> f64 {
    let base: f64 = center.iter().zip(values).map(|(p, v)| p * v).sum();
    if total_radius == 0.0 || order.all_equal {
        return base;
    }
    let best = order.best;
    let add = (total_radius / 2.0).min(1.0 - center[best]);
    if add <= 0.0 {
        return base;
    }
    let mut expectation = base + add * values[best];
    let mut to_remove = add;
    for &j in &order.ascending {
        if j == best {
            continue;
        }
        let take = center[j].min(to_remove);
        if take > 0.0 {
            expectation -= take * values[j];
            to_remove -= take;
        }
        if to_remove <= 0.0 {
            break;
        }
    }
    expectation
}

/// Materialised optimistic row for the same greedy rule.
fn optimistic_row(center: &[f64], total_radius: f64, order: &ValueOrder) -> Vec<f64> {
    let mut p = center.to_vec();
    if total_radius == 0.0 || order.all_equal {
        return p;
    }
    let best = order.best;
    let add = (total_radius / 2.0).min(1.0 - center[best]);
    if add <= 0.0 {
        return p;
    }
    p[best] += add;
    let mut to_remove = add;
    for &j in &order.ascending {
        if j == best {
            continue;
        }
        let take = p[j].min(to_remove);
        p[j] -= take;
        to_remove -= take;
        if to_remove <= 0.0 {
            break;
        }
    }
    p
}

/// Maximise `sum_j p_j values_j` over `{p on the simplex :
/// ||p - center||_1 <= total_radius}`.
///
/// Greedy rule: add `min(total_radius / 2, 1 - center[s*])` to the
/// highest-value state `s*` and strip the same mass from states in
/// ascending value order, never below zero. Ties break toward the lower
/// state index. Equal values return the center unchanged.
pub fn inner_maximize(
    center: &[f64],
    total_radius: f64,
    values: &[f64],
) -> Result<Vec<f64>, EviError> {
    if total_radius < 0.0 {
        return Err(EviError::InvalidRadius(total_radius));
    }
    if center.len() != values.len() {
        return Err(EviError::ShapeMismatch {
            expected: center.len(),
            got: values.len(),
        });
    }
    let order = ValueOrder::new(values);
    Ok(optimistic_row(center, total_radius, &order))
}

fn sweep_into(
    q: &QTable,
    sets: &ConfidenceSets,
    rewards: &RewardTable,
    lambda: f64,
    gamma: f64,
    values: &[f64],
    order: &ValueOrder,
    out: &mut QTable,
) {
    let n = q.num_states;
    for s in 0..n {
        for a in 0..NUM_ACTIONS {
            let set = sets.get(s, a);
            let expectation =
                optimistic_expectation(&set.center, set.total_radius(), values, order);
            let value = -lambda * a as f64 + rewards.get(s, a) + gamma * expectation;
            out.set(s, a, value);
        }
    }
}

/// One synchronous sweep of the optimistic Bellman backup at multiplier
/// `lambda`; the inputs' continuation values stay frozen for the whole
/// sweep.
pub fn evi_sweep(
    q: &QTable,
    sets: &ConfidenceSets,
    rewards: &RewardTable,
    lambda: f64,
    gamma: f64,
) -> QTable {
    let n = q.num_states;
    let values: Vec<f64> = (0..n).map(|s| q.max_value(s)).collect();
    let order = ValueOrder::new(&values);
    let mut out = QTable::zeros(n);
    sweep_into(q, sets, rewards, lambda, gamma, &values, &order, &mut out);
    out
}

/// Stopping rule: sup-norm tolerance as the primary stop with a hard sweep
/// cap. The discounted operator is a `gamma`-contraction, so the tolerance
/// is always reached for `gamma < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EviStop {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl EviStop {
    pub fn for_discount(gamma: f64) -> Self {
        let tol = 1e-6 * (1.0 - gamma);
        let max_sweeps = (10.0 * math::ceil(math::ln(1.0 / tol) / (1.0 - gamma))).max(1.0) as usize;
        Self { tol, max_sweeps }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EviOutcome {
    pub q: QTable,
    pub optimistic: TransitionKernel,
    pub sweeps: usize,
    pub sweep_deltas: Vec<f64>,
}

/// Iterate sweeps from `q0` until the sup-norm change drops to `stop.tol`
/// or the sweep cap is hit, then extract the optimistic kernel from the
/// final continuation values. Deterministic in its inputs.
pub fn run_evi(
    q0: &QTable,
    sets: &ConfidenceSets,
    rewards: &RewardTable,
    lambda: f64,
    gamma: f64,
    stop: &EviStop,
) -> Result<EviOutcome, EviError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EviError::InvalidDiscount(gamma));
    }
    let n = q0.num_states;
    if sets.num_states() != n || rewards.num_states() != n {
        return Err(EviError::ShapeMismatch {
            expected: n,
            got: sets.num_states(),
        });
    }
    for s in 0..n {
        for a in 0..NUM_ACTIONS {
            let r = sets.get(s, a).total_radius();
            if r < 0.0 {
                return Err(EviError::InvalidRadius(r));
            }
        }
    }

    let mut q = q0.clone();
    let mut next = QTable::zeros(n);
    let mut values: Vec<f64> = (0..n).map(|s| q.max_value(s)).collect();
    let mut order = ValueOrder::new(&values);
    let mut sweep_deltas = Vec::new();
    let mut sweeps = 0;
    while sweeps < stop.max_sweeps {
        sweep_into(&q, sets, rewards, lambda, gamma, &values, &order, &mut next);
        let delta = q.sup_distance(&next);
        sweep_deltas.push(delta);
        core::mem::swap(&mut q, &mut next);
        sweeps += 1;
        for (s, v) in values.iter_mut().enumerate() {
            *v = q.max_value(s);
        }
        order = ValueOrder::new(&values);
        if delta <= stop.tol {
            break;
        }
    }

    let mut flat = Vec::with_capacity(n * NUM_ACTIONS * n);
    for s in 0..n {
        for a in 0..NUM_ACTIONS {
            let set = sets.get(s, a);
            flat.extend(optimistic_row(&set.center, set.total_radius(), &order));
        }
    }
    let optimistic = TransitionKernel::from_flat(n, flat).expect("shape correct by construction");
    Ok(EviOutcome {
        q,
        optimistic,
        sweeps,
        sweep_deltas,
    })
}
