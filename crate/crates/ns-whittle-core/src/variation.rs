//! Drift bookkeeping: per-step and total L1 variation of kernel schedules.

use alloc::vec::Vec;

use crate::kernel::{KernelError, TransitionKernel};

/// Per-step drift of a kernel schedule.
///
/// `per_step[t][i]` is the largest row-wise L1 change of arm `i` between
/// consecutive steps `t+1` and `t+2` (0-indexed over the `T-1` consecutive
/// pairs of a length-`T` schedule). Each entry lies in `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationBudget {
    pub per_step: Vec<Vec<f64>>,
    pub total: f64,
}

impl VariationBudget {
    pub fn zero(num_pairs: usize, num_arms: usize) -> Self {
        Self {
            per_step: alloc::vec![alloc::vec![0.0; num_arms]; num_pairs],
            total: 0.0,
        }
    }

    /// Sum of one arm's per-step variation over the whole schedule.
    pub fn per_arm_total(&self, arm: usize) -> f64 {
        self.per_step.iter().map(|row| row[arm]).sum()
    }
}

/// Measure the variation of per-arm kernel schedules (`schedules[arm][t]`).
///
/// All arms must share the same horizon. A stationary schedule measures to
/// exactly zero.
pub fn variation_budget(
    schedules: &[Vec<TransitionKernel>],
) -> Result<VariationBudget, KernelError> {
    let horizon = schedules.first().map_or(0, |s| s.len());
    for sched in schedules {
        if sched.len() != horizon {
            return Err(KernelError::DimensionMismatch {
                left: sched.len(),
                right: horizon,
            });
        }
    }
    let num_pairs = horizon.saturating_sub(1);
    let mut budget = VariationBudget::zero(num_pairs, schedules.len());
    let mut total = 0.0;
    for t in 0..num_pairs {
        for (i, sched) in schedules.iter().enumerate() {
            let step = sched[t + 1].max_row_l1(&sched[t])?;
            budget.per_step[t][i] = step;
            total += step;
        }
    }
    budget.total = total;
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::TransitionKernel;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn kernel(rows: &[[f64; 2]; 4]) -> TransitionKernel {
        TransitionKernel::from_flat(2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn stationary_schedule_has_zero_variation() {
        let k = kernel(&[[0.3, 0.7], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]);
        let sched = vec![vec![k.clone(); 5], vec![k; 5]];
        let b = variation_budget(&sched).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(b.per_step.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_jump_sums_to_jump_size() {
        // One arm, T=5, a single (s,a) row changes by L1 0.3 at t=3.
        let before = kernel(&[[0.5, 0.5], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]);
        let after = kernel(&[[0.65, 0.35], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]);
        let sched = vec![vec![
            before.clone(),
            before.clone(),
            after.clone(),
            after.clone(),
            after,
        ]];
        let b = variation_budget(&sched).unwrap();
        assert_abs_diff_eq!(b.total, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b.per_step[1][0], 0.3, epsilon = 1e-12);
        assert_eq!(b.per_step[0][0], 0.0);
    }

    #[test]
    fn variation_is_additive_over_arms() {
        let before = kernel(&[[0.5, 0.5], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]);
        let after = kernel(&[[0.65, 0.35], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]);
        let one = vec![before.clone(), after.clone()];
        let sched = vec![one.clone(), one];
        let b = variation_budget(&sched).unwrap();
        assert_abs_diff_eq!(b.total, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(b.per_arm_total(0), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b.per_arm_total(1), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn reversal_preserves_total_variation() {
        use crate::rng;
        let mut r = rng::stream(3, &[17]);
        for _ in 0..50 {
            let horizon = 2 + rng::uniform_usize(&mut r, 6);
            let mut sched = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let mut flat = Vec::with_capacity(8);
                for _ in 0..4 {
                    let p = rng::uniform_f64(&mut r);
                    flat.push(p);
                    flat.push(1.0 - p);
                }
                sched.push(TransitionKernel::from_flat(2, flat).unwrap());
            }
            let fwd = variation_budget(core::slice::from_ref(&sched)).unwrap();
            let mut rev = sched.clone();
            rev.reverse();
            let bwd = variation_budget(core::slice::from_ref(&rev)).unwrap();
            assert_abs_diff_eq!(fwd.total, bwd.total, epsilon = 1e-12);
        }
    }
}
