//! Per-arm sliding-window transition statistics and L1 confidence sets.
//!
//! A window of size `W` means the `W` most recent transitions: a record made
//! at time `q` influences estimates queried at time `t` iff
//! `q in [max(t - W, 1), t - 1]`. Counts for the current frontier (one past
//! the last recorded time) are maintained incrementally; queries at older
//! times recount from the retained history, which doubles as the
//! differential-testing oracle for the incremental path.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::kernel::{l1_distance, NUM_ACTIONS};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("record at time {time} not after previous time {last}")]
    NonMonotoneTime { time: usize, last: usize },
    #[error("state {state} or next state {next} outside [0, {num_states})")]
    StateOutOfRange {
        state: usize,
        next: usize,
        num_states: usize,
    },
    #[error("delta {0} outside (0, 1)")]
    InvalidDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Record {
    time: u32,
    state: u16,
    action: u8,
    next: u16,
}

/// Sliding-window transition counts for a single arm.
#[derive(Debug, Clone)]
pub struct SlidingWindowStats {
    num_states: usize,
    window: usize,
    history: Vec<Record>,
    // First index of `history` inside the frontier window.
    window_start: usize,
    last_time: usize,
    // Frontier window counts, flattened [s][a] and [s][a][s'].
    counts: Vec<u32>,
    joint: Vec<u32>,
}

impl SlidingWindowStats {
    pub fn new(num_states: usize, window: usize) -> Self {
        assert!(window >= 1, "window must be at least 1");
        Self {
            num_states,
            window,
            history: Vec::new(),
            window_start: 0,
            last_time: 0,
            counts: vec![0; num_states * NUM_ACTIONS],
            joint: vec![0; num_states * NUM_ACTIONS * num_states],
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Time the frontier counts are valid for: one past the last record.
    pub fn frontier(&self) -> usize {
        self.last_time + 1
    }

    /// Append one observed transition `(s, a) -> s'` made at time `t`.
    /// Times must be strictly increasing per arm.
    pub fn record_transition(
        &mut self,
        time: usize,
        state: usize,
        action: usize,
        next: usize,
    ) -> Result<(), EstimatorError> {
        if time <= self.last_time {
            return Err(EstimatorError::NonMonotoneTime {
                time,
                last: self.last_time,
            });
        }
        if state >= self.num_states || next >= self.num_states {
            return Err(EstimatorError::StateOutOfRange {
                state,
                next,
                num_states: self.num_states,
            });
        }
        debug_assert!(action < NUM_ACTIONS);
        // Evict records that fall outside the window for queries at time+1.
        let keep_from = (time + 1).saturating_sub(self.window);
        while self.window_start < self.history.len() {
            let r = self.history[self.window_start];
            if (r.time as usize) >= keep_from {
                break;
            }
            let sas = self.sas(r.state as usize, r.action as usize, r.next as usize);
            self.counts[Self::sa(r.state as usize, r.action as usize)] -= 1;
            self.joint[sas] -= 1;
            self.window_start += 1;
        }
        self.history.push(Record {
            time: time as u32,
            state: state as u16,
            action: action as u8,
            next: next as u16,
        });
        let sas = self.sas(state, action, next);
        self.counts[Self::sa(state, action)] += 1;
        self.joint[sas] += 1;
        self.last_time = time;
        Ok(())
    }

    #[inline]
    fn sa(state: usize, action: usize) -> usize {
        state * NUM_ACTIONS + action
    }

    #[inline]
    fn sas(&self, state: usize, action: usize, next: usize) -> usize {
        (state * NUM_ACTIONS + action) * self.num_states + next
    }

    /// Raw in-window visit count of `(s, a)` for a query at time `t`.
    pub fn raw_window_count(&self, time: usize, state: usize, action: usize) -> usize {
        if time == self.frontier() {
            return self.counts[Self::sa(state, action)] as usize;
        }
        self.recount(time, state, action).0
    }

    /// The guarded count `max(raw, 1)` used in estimator denominators.
    pub fn window_count(&self, time: usize, state: usize, action: usize) -> usize {
        self.raw_window_count(time, state, action).max(1)
    }

    fn recount(&self, time: usize, state: usize, action: usize) -> (usize, Vec<usize>) {
        let lo = time.saturating_sub(self.window).max(1);
        let hi = time.saturating_sub(1);
        let mut count = 0usize;
        let mut joint = vec![0usize; self.num_states];
        for r in &self.history {
            let q = r.time as usize;
            if q < lo || q > hi {
                continue;
            }
            if r.state as usize == state && r.action as usize == action {
                count += 1;
                joint[r.next as usize] += 1;
            }
        }
        (count, joint)
    }

    /// Observed average transition row for `(s, a)` at time `t`; uniform
    /// when the window holds no observation, so the center always lies on
    /// the simplex.
    pub fn empirical_transition(&self, time: usize, state: usize, action: usize) -> Vec<f64> {
        let (raw, joint) = if time == self.frontier() {
            let raw = self.counts[Self::sa(state, action)] as usize;
            let base = (state * NUM_ACTIONS + action) * self.num_states;
            let joint = self.joint[base..base + self.num_states]
                .iter()
                .map(|&c| c as usize)
                .collect();
            (raw, joint)
        } else {
            self.recount(time, state, action)
        };
        if raw == 0 {
            return vec![1.0 / self.num_states as f64; self.num_states];
        }
        joint
            .into_iter()
            .map(|c| c as f64 / raw as f64)
            .collect()
    }

    /// Package center, radius, and exploration bonus for one `(s, a)`.
    pub fn confidence_set(
        &self,
        time: usize,
        state: usize,
        action: usize,
        eta: f64,
        horizon: usize,
        delta: f64,
    ) -> Result<ConfidenceSet, EstimatorError> {
        let n_plus = self.window_count(time, state, action);
        let radius = confidence_radius(n_plus, self.num_states, NUM_ACTIONS, horizon, delta)?;
        Ok(ConfidenceSet {
            center: self.empirical_transition(time, state, action),
            radius,
            eta,
        })
    }

    /// `(raw counts [s][a], joint counts [s][a][s'])` for the frontier
    /// window; used for debug dumps and differential tests.
    pub fn counts_snapshot(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.counts.iter().map(|&c| c as usize).collect(),
            self.joint.iter().map(|&c| c as usize).collect(),
        )
    }

    pub fn records_len(&self) -> usize {
        self.history.len()
    }
}

/// Statistical deviation term for a windowed transition-row estimate:
/// `sqrt(2 |S| ln(|S| |A| T / delta) / n_plus)`. Natural log; strictly
/// decreasing in the count, scaling as `1/sqrt(n_plus)`.
pub fn confidence_radius(
    n_plus: usize,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    delta: f64,
) -> Result<f64, EstimatorError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimatorError::InvalidDelta(delta));
    }
    let n = n_plus.max(1) as f64;
    let arg = (num_states * num_actions * horizon) as f64 / delta;
    Ok(math::sqrt(2.0 * num_states as f64 * math::ln(arg) / n))
}

/// An L1 ball of radius `radius + eta` around an empirical transition row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub eta: f64,
}

impl ConfidenceSet {
    /// Degenerate set containing exactly `row`.
    pub fn point_mass(row: &[f64]) -> Self {
        Self {
            center: row.to_vec(),
            radius: 0.0,
            eta: 0.0,
        }
    }

    #[inline]
    pub fn total_radius(&self) -> f64 {
        self.radius + self.eta
    }

    /// Membership test `||p - center||_1 <= radius + eta`, with a 1e-12
    /// float guard so boundary rows produced by the optimizer are members.
    pub fn contains(&self, p: &[f64]) -> bool {
        match l1_distance(p, &self.center) {
            Ok(d) => d <= self.total_radius() + 1e-12,
            Err(_) => false,
        }
    }
}

/// Windowed average of *true* transition rows over visited `(s, a)` pairs.
///
/// Instrumentation for the good-event audit: tracks, per `(s, a)`, the mean
/// of the true kernel rows in force when the pair was visited inside the
/// window — the quantity the empirical row estimates.
#[derive(Debug, Clone)]
pub struct TrueRowWindow {
    num_states: usize,
    window: usize,
    history: Vec<(u32, u16, u8, Vec<f64>)>,
    start: usize,
    counts: Vec<u32>,
    sums: Vec<f64>,
}

impl TrueRowWindow {
    pub fn new(num_states: usize, window: usize) -> Self {
        Self {
            num_states,
            window,
            history: Vec::new(),
            start: 0,
            counts: vec![0; num_states * NUM_ACTIONS],
            sums: vec![0.0; num_states * NUM_ACTIONS * num_states],
        }
    }

    pub fn record(&mut self, time: usize, state: usize, action: usize, true_row: &[f64]) {
        let keep_from = (time + 1).saturating_sub(self.window);
        while self.start < self.history.len() {
            let (q, s, a, ref row) = self.history[self.start];
            if (q as usize) >= keep_from {
                break;
            }
            let sa = s as usize * NUM_ACTIONS + a as usize;
            self.counts[sa] -= 1;
            let base = sa * self.num_states;
            for (j, v) in row.iter().enumerate() {
                self.sums[base + j] -= v;
            }
            self.start += 1;
        }
        let sa = state * NUM_ACTIONS + action;
        self.counts[sa] += 1;
        let base = sa * self.num_states;
        for (j, v) in true_row.iter().enumerate() {
            self.sums[base + j] += v;
        }
        self.history
            .push((time as u32, state as u16, action as u8, true_row.to_vec()));
        // Rebuild sums from scratch occasionally: subtracting floats leaks
        // roundoff over long runs.
        if self.start > 0 && self.start % 4096 == 0 {
            self.rebuild();
        }
    }

    fn rebuild(&mut self) {
        self.history.drain(..self.start);
        self.start = 0;
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        for (_, s, a, row) in &self.history {
            let sa = *s as usize * NUM_ACTIONS + *a as usize;
            self.counts[sa] += 1;
            let base = sa * self.num_states;
            for (j, v) in row.iter().enumerate() {
                self.sums[base + j] += v;
            }
        }
    }

    pub fn visit_count(&self, state: usize, action: usize) -> usize {
        self.counts[state * NUM_ACTIONS + action] as usize
    }

    /// Mean true row over in-window visits; `None` if the pair is unvisited.
    pub fn mean_row(&self, state: usize, action: usize) -> Option<Vec<f64>> {
        let sa = state * NUM_ACTIONS + action;
        let c = self.counts[sa];
        if c == 0 {
            return None;
        }
        let base = sa * self.num_states;
        Some(
            self.sums[base..base + self.num_states]
                .iter()
                .map(|&s| s / c as f64)
                .collect(),
        )
    }
}
