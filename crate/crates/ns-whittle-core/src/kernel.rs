//! Transition kernels, reward tables, and row-level arithmetic.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::math;

/// The action space is fixed to passive/active.
pub const NUM_ACTIONS: usize = 2;
pub const PASSIVE: usize = 0;
pub const ACTIVE: usize = 1;

/// Tolerance on row sums; generated kernels are renormalised after
/// construction so this is exact in practice.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("row ({state}, {action}) sums to {sum}, expected 1")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },
    #[error("entry ({state}, {action}, {next}) = {value} outside [0, 1]")]
    EntryOutOfRange {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    #[error("entry ({state}, {action}, {next}) = {value} below floor {floor}")]
    BelowPMinFloor {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
        floor: f64,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("reward entry ({state}, {action}) = {value} outside [0, 1]")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
    },
}

/// Per-arm transition kernel: a row-stochastic tensor over `(s, a)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    // Flattened `[s][a][s']`.
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Build from flattened `[s][a][s']` probabilities. Shape is checked;
    /// stochasticity is not (see [`TransitionKernel::validate`]).
    pub fn from_flat(num_states: usize, probs: Vec<f64>) -> Result<Self, KernelError> {
        let expected = num_states * NUM_ACTIONS * num_states;
        if probs.len() != expected {
            return Err(KernelError::DimensionMismatch {
                left: probs.len(),
                right: expected,
            });
        }
        Ok(Self { num_states, probs })
    }

    /// Kernel where every state self-loops with probability 1.
    pub fn identity(num_states: usize) -> Self {
        let mut probs = vec![0.0; num_states * NUM_ACTIONS * num_states];
        for s in 0..num_states {
            for a in 0..NUM_ACTIONS {
                probs[(s * NUM_ACTIONS + a) * num_states + s] = 1.0;
            }
        }
        Self { num_states, probs }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * NUM_ACTIONS + action) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    #[inline]
    pub fn row_mut(&mut self, state: usize, action: usize) -> &mut [f64] {
        let start = (state * NUM_ACTIONS + action) * self.num_states;
        &mut self.probs[start..start + self.num_states]
    }

    pub fn flat(&self) -> &[f64] {
        &self.probs
    }

    /// Check stochasticity and the floor on non-zero entries: rows sum to 1
    /// within [`ROW_SUM_TOL`], entries lie in `[0, 1]`, and entries that are
    /// not exactly zero are at least `p_min`.
    pub fn validate(&self, p_min: f64) -> Result<(), KernelError> {
        for s in 0..self.num_states {
            for a in 0..NUM_ACTIONS {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(KernelError::EntryOutOfRange {
                            state: s,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                    if p != 0.0 && p < p_min {
                        return Err(KernelError::BelowPMinFloor {
                            state: s,
                            action: a,
                            next,
                            value: p,
                            floor: p_min,
                        });
                    }
                    sum += p;
                }
                if math::abs(sum - 1.0) > ROW_SUM_TOL {
                    return Err(KernelError::NonStochasticRow {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest L1 distance between corresponding rows of two kernels.
    pub fn max_row_l1(&self, other: &Self) -> Result<f64, KernelError> {
        if self.num_states != other.num_states {
            return Err(KernelError::DimensionMismatch {
                left: self.num_states,
                right: other.num_states,
            });
        }
        let mut worst = 0.0f64;
        for s in 0..self.num_states {
            for a in 0..NUM_ACTIONS {
                let d = l1_distance(self.row(s, a), other.row(s, a))?;
                if d > worst {
                    worst = d;
                }
            }
        }
        Ok(worst)
    }

    /// FNV-1a over the raw bit patterns; used to key oracle caches.
    pub fn content_hash(&self, seed: u64) -> u64 {
        let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
        for &p in &self.probs {
            for b in p.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Validate a kernel against stochasticity and the probability floor.
pub fn validate_kernel(kernel: &TransitionKernel, p_min: f64) -> Result<(), KernelError> {
    kernel.validate(p_min)
}

/// `sum_j |p_j - q_j|`; symmetric, in `[0, 2]` for distributions.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64, KernelError> {
    if p.len() != q.len() {
        return Err(KernelError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| math::abs(a - b)).sum())
}

/// Map a raw nonnegative vector onto the floored simplex
/// `{q : q_j >= p_min, sum q = 1}` by affine shrinkage toward uniform.
///
/// Requires `p_min * len <= 1`. Guarantees every output entry is `>= p_min`
/// bit-exactly, which keeps repeated interpolation from drifting below the
/// floor.
pub(crate) fn renormalize_row_floored(row: &mut [f64], p_min: f64) {
    let n = row.len();
    let slack = 1.0 - p_min * n as f64;
    if slack <= 0.0 {
        for v in row.iter_mut() {
            *v = p_min;
        }
        return;
    }
    // Strip the floor, clamp dust, renormalise the remainder exactly.
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - p_min).max(0.0);
        sum += *v;
    }
    if sum <= 0.0 {
        let u = slack / n as f64;
        for v in row.iter_mut() {
            *v = p_min + u;
        }
        return;
    }
    for v in row.iter_mut() {
        *v = p_min + slack * (*v / sum);
    }
}

/// Known, stationary per-arm rewards indexed by `(s, a)`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    rewards: Vec<f64>,
}

impl RewardTable {
    pub fn from_flat(num_states: usize, rewards: Vec<f64>) -> Result<Self, KernelError> {
        if rewards.len() != num_states * NUM_ACTIONS {
            return Err(KernelError::DimensionMismatch {
                left: rewards.len(),
                right: num_states * NUM_ACTIONS,
            });
        }
        for s in 0..num_states {
            for a in 0..NUM_ACTIONS {
                let value = rewards[s * NUM_ACTIONS + a];
                if !(0.0..=1.0).contains(&value) {
                    return Err(KernelError::RewardOutOfRange {
                        state: s,
                        action: a,
                        value,
                    });
                }
            }
        }
        Ok(Self { num_states, rewards })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * NUM_ACTIONS + action]
    }

    pub fn flat(&self) -> &[f64] {
        &self.rewards
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_kernel_is_valid_at_any_floor() {
        let k = TransitionKernel::identity(3);
        assert!(validate_kernel(&k, 0.1).is_ok());
    }

    #[test]
    fn non_stochastic_row_is_rejected() {
        let k = TransitionKernel::from_flat(2, vec![0.5, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        match validate_kernel(&k, 0.0) {
            Err(KernelError::NonStochasticRow { state: 0, action: 0, sum }) => {
                assert_abs_diff_eq!(sum, 1.1, epsilon = 1e-12);
            }
            other => panic!("expected NonStochasticRow, got {other:?}"),
        }
    }

    #[test]
    fn below_floor_entry_is_rejected() {
        let k = TransitionKernel::from_flat(2, vec![0.05, 0.95, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            validate_kernel(&k, 0.1),
            Err(KernelError::BelowPMinFloor { value, .. }) if value == 0.05
        ));
        // Exact zeros are exempt from the floor.
        let k = TransitionKernel::from_flat(2, vec![0.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(validate_kernel(&k, 0.1).is_ok());
    }

    #[test]
    fn entry_out_of_range_is_rejected() {
        let k = TransitionKernel::from_flat(2, vec![-0.1, 1.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            validate_kernel(&k, 0.0),
            Err(KernelError::EntryOutOfRange { .. })
        ));
    }

    #[test]
    fn l1_distance_matches_hand_sums() {
        assert_eq!(l1_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(l1_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        // |0.7-0.5| + |0.3-0.5| = 0.4
        assert_abs_diff_eq!(
            l1_distance(&[0.7, 0.3], &[0.5, 0.5]).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        assert!(matches!(
            l1_distance(&[0.5, 0.5], &[1.0]),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn floored_renormalization_respects_floor_and_sum() {
        let mut row = vec![0.9, 0.05, 0.05];
        renormalize_row_floored(&mut row, 0.1);
        assert!(row.iter().all(|&v| v >= 0.1));
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // Floor at 1/n forces uniform.
        let mut row = vec![1.0, 0.0];
        renormalize_row_floored(&mut row, 0.5);
        assert_eq!(row, vec![0.5, 0.5]);
    }

    #[test]
    fn reward_table_rejects_out_of_range() {
        assert!(RewardTable::from_flat(1, vec![0.0, 1.5]).is_err());
        let r = RewardTable::from_flat(1, vec![0.25, 1.0]).unwrap();
        assert_eq!(r.get(0, ACTIVE), 1.0);
        assert_eq!(r.get(0, PASSIVE), 0.25);
    }

    #[test]
    fn l1_triangle_inequality_random_triples() {
        use crate::rng;
        let mut r = rng::stream(11, &[99]);
        for _ in 0..1000 {
            let n = 2 + rng::uniform_usize(&mut r, 5);
            let draw = |r: &mut rand_chacha::ChaCha8Rng| {
                let mut v: Vec<f64> = (0..n).map(|_| rng::uniform_f64(r)).collect();
                let s: f64 = v.iter().sum();
                if s > 0.0 {
                    v.iter_mut().for_each(|x| *x /= s);
                }
                v
            };
            let (p, q, z) = (draw(&mut r), draw(&mut r), draw(&mut r));
            let pq = l1_distance(&p, &q).unwrap();
            let qz = l1_distance(&q, &z).unwrap();
            let pz = l1_distance(&p, &z).unwrap();
            assert!(pz <= pq + qz + 1e-12);
        }
    }
}
