//! Instance configuration and validation.

use thiserror::Error;

/// Configuration of a budgeted restless-bandit instance.
///
/// Actions are fixed to the binary passive/active pair; `budget` caps the
/// number of simultaneously active arms per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RmabConfig {
    /// Number of arms `N`.
    pub num_arms: usize,
    /// Shared per-arm state-space size `|S|`.
    pub num_states: usize,
    /// Activation budget `K`, `0 <= K <= N`.
    pub budget: usize,
    /// Discount factor, in `[0, 1)`.
    pub discount: f64,
    /// Horizon `T` in steps.
    pub horizon: usize,
    /// Failure probability `delta` for the confidence radii, in `(0, 1)`.
    pub failure_prob: f64,
    /// Upper bound on the activation multiplier searched over.
    pub lambda_cap: f64,
    /// Floor on non-zero true transition probabilities, in `(0, 1]`.
    pub p_min_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("num_arms must be positive")]
    NoArms,
    #[error("num_states must be positive")]
    NoStates,
    #[error("budget {budget} exceeds num_arms {num_arms}")]
    BudgetExceedsArms { budget: usize, num_arms: usize },
    #[error("discount {0} outside [0, 1)")]
    BadDiscount(f64),
    #[error("horizon must be positive")]
    NoHorizon,
    #[error("failure_prob {0} outside (0, 1)")]
    BadFailureProb(f64),
    #[error("lambda_cap {0} must be nonnegative and finite")]
    BadLambdaCap(f64),
    #[error("p_min_floor {0} outside (0, 1]")]
    BadPMinFloor(f64),
}

impl RmabConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_arms == 0 {
            return Err(ConfigError::NoArms);
        }
        if self.num_states == 0 {
            return Err(ConfigError::NoStates);
        }
        if self.budget > self.num_arms {
            return Err(ConfigError::BudgetExceedsArms {
                budget: self.budget,
                num_arms: self.num_arms,
            });
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(ConfigError::BadDiscount(self.discount));
        }
        if self.horizon == 0 {
            return Err(ConfigError::NoHorizon);
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(ConfigError::BadFailureProb(self.failure_prob));
        }
        if !(self.lambda_cap >= 0.0 && self.lambda_cap.is_finite()) {
            return Err(ConfigError::BadLambdaCap(self.lambda_cap));
        }
        if !(self.p_min_floor > 0.0 && self.p_min_floor <= 1.0) {
            return Err(ConfigError::BadPMinFloor(self.p_min_floor));
        }
        Ok(())
    }

    /// Default multiplier cap: comfortably above any useful multiplier for
    /// rewards in `[0, 1]`.
    pub fn default_lambda_cap(discount: f64) -> f64 {
        2.0 / (1.0 - discount)
    }
}
