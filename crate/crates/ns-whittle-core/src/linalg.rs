//! Dense Gaussian elimination for the small per-arm policy-evaluation
//! systems. State spaces here are tiny (a handful of states), so partial
//! pivoting on a dense matrix is both exact enough and fast.

use alloc::vec::Vec;

use crate::math;

/// Solve `A x = b` in place for square `A` (row-major). The policy
/// evaluation matrix `I - gamma * P` is strictly diagonally dominant for
/// `gamma < 1`, so the system is always solvable.
pub(crate) fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        // Partial pivot.
        let mut pivot = col;
        let mut best = math::abs(a[col * n + col]);
        for row in col + 1..n {
            let cand = math::abs(a[row * n + col]);
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        debug_assert!(diag != 0.0, "singular system");
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}
