//! Seeded generation of non-stationary environments and joint stepping.
//!
//! Three generator modes cover the interesting drift regimes: `stationary`
//! (no drift), `abrupt` (piecewise-constant kernels with seeded change
//! points), and `drift` (per-step linear interpolation along a polyline of
//! anchor kernels, rescaled so the realized variation consumes the target
//! budget exactly). All randomness is drawn from named streams derived from
//! the schedule seed, so regeneration is bit-identical.

use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RmabConfig};
use crate::kernel::{
    renormalize_row_floored, KernelError, RewardTable, TransitionKernel, NUM_ACTIONS,
};
use crate::rng::{self, purpose};
use crate::variation::{variation_budget, VariationBudget};

/// Nominal per-jump size for the abrupt generator; the jump count is chosen
/// so each jump consumes roughly this much of the target budget.
const NOMINAL_JUMP: f64 = 0.5;

/// Drift schedules aim for this much slack below the target so float dust
/// from row renormalisation cannot push the realized total above it.
const DRIFT_HAIRCUT: f64 = 2.5e-10;

/// Tolerance window for the drift generator's realized total.
pub const DRIFT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMode {
    Stationary,
    Abrupt,
    Drift,
}

impl EnvMode {
    pub fn name(self) -> &'static str {
        match self {
            EnvMode::Stationary => "stationary",
            EnvMode::Abrupt => "abrupt",
            EnvMode::Drift => "drift",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("kernel error: {0}")]
    Kernel(#[from] KernelError),
    #[error("target variation {target} infeasible for {mode} mode over horizon {horizon}")]
    InfeasibleBudget {
        target: f64,
        mode: &'static str,
        horizon: usize,
    },
    #[error("p_min floor {floor} exceeds 1/|S| = {limit}; rows unconstructible")]
    PMinInfeasible { floor: f64, limit: f64 },
    #[error("step at time {time} beyond horizon {horizon}")]
    HorizonExceeded { time: usize, horizon: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionLengthMismatch { expected: usize, got: usize },
    #[error("drift budget scaling failed to converge (measured {measured}, target {target})")]
    BudgetScalingFailed { measured: f64, target: f64 },
}

/// Concatenated per-arm states plus the current time, `time in [1, T]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointState {
    pub states: Vec<usize>,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: JointState,
    pub per_arm_rewards: Vec<f64>,
    pub total_reward: f64,
}

/// A fully materialised non-stationary instance: per-arm kernel schedules,
/// stationary rewards, and the measured variation of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSchedule {
    num_arms: usize,
    num_states: usize,
    horizon: usize,
    mode: EnvMode,
    seed: u64,
    p_min: f64,
    target_variation: f64,
    // kernels[arm][t-1] is the kernel in force at time t.
    kernels: Vec<Vec<TransitionKernel>>,
    rewards: Vec<RewardTable>,
    budget: VariationBudget,
}

impl EnvironmentSchedule {
    /// Assemble a schedule from explicit parts, validating shapes, row
    /// stochasticity, and the floor.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        num_states: usize,
        horizon: usize,
        mode: EnvMode,
        seed: u64,
        p_min: f64,
        target_variation: f64,
        kernels: Vec<Vec<TransitionKernel>>,
        rewards: Vec<RewardTable>,
    ) -> Result<Self, EnvError> {
        let num_arms = kernels.len();
        if rewards.len() != num_arms {
            return Err(KernelError::DimensionMismatch {
                left: rewards.len(),
                right: num_arms,
            }
            .into());
        }
        for sched in &kernels {
            if sched.len() != horizon {
                return Err(KernelError::DimensionMismatch {
                    left: sched.len(),
                    right: horizon,
                }
                .into());
            }
            for k in sched {
                if k.num_states() != num_states {
                    return Err(KernelError::DimensionMismatch {
                        left: k.num_states(),
                        right: num_states,
                    }
                    .into());
                }
                k.validate(p_min)?;
            }
        }
        for r in &rewards {
            if r.num_states() != num_states {
                return Err(KernelError::DimensionMismatch {
                    left: r.num_states(),
                    right: num_states,
                }
                .into());
            }
        }
        let budget = variation_budget(&kernels)?;
        Ok(Self {
            num_arms,
            num_states,
            horizon,
            mode,
            seed,
            p_min,
            target_variation,
            kernels,
            rewards,
            budget,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn target_variation(&self) -> f64 {
        self.target_variation
    }

    /// Kernel in force for `arm` at time `t` (1-based).
    #[inline]
    pub fn kernel_at(&self, arm: usize, time: usize) -> &TransitionKernel {
        &self.kernels[arm][time - 1]
    }

    pub fn kernels(&self) -> &[Vec<TransitionKernel>] {
        &self.kernels
    }

    pub fn reward_table(&self, arm: usize) -> &RewardTable {
        &self.rewards[arm]
    }

    pub fn reward_tables(&self) -> &[RewardTable] {
        &self.rewards
    }

    /// Variation measured at generation time.
    pub fn budget(&self) -> &VariationBudget {
        &self.budget
    }

    /// Re-measure the schedule's variation from scratch; the audit oracle
    /// for the generator.
    pub fn realized_variation(&self) -> VariationBudget {
        variation_budget(&self.kernels).expect("schedule shapes are validated on construction")
    }

    /// Hash of all kernels in force at time `t`; keys oracle caches.
    pub fn kernel_hash_at(&self, time: usize) -> u64 {
        let mut h = 0x9e37_79b9_u64;
        for arm in 0..self.num_arms {
            h = self.kernel_at(arm, time).content_hash(h);
        }
        h
    }

    /// Uniformly random initial joint state at time 1.
    pub fn initial_state(&self, rng: &mut ChaCha8Rng) -> JointState {
        let states = (0..self.num_arms)
            .map(|_| rng::uniform_usize(rng, self.num_states))
            .collect();
        JointState { states, time: 1 }
    }

    /// Advance the joint system one step: each arm's next state is drawn
    /// independently from its kernel row at the current time, rewards come
    /// from the stationary tables, and time advances by one.
    pub fn step(
        &self,
        state: &JointState,
        actions: &[bool],
        rngs: &mut [ChaCha8Rng],
    ) -> Result<StepOutcome, EnvError> {
        if state.time == 0 || state.time > self.horizon {
            return Err(EnvError::HorizonExceeded {
                time: state.time,
                horizon: self.horizon,
            });
        }
        if actions.len() != self.num_arms {
            return Err(EnvError::ActionLengthMismatch {
                expected: self.num_arms,
                got: actions.len(),
            });
        }
        debug_assert_eq!(rngs.len(), self.num_arms);
        let mut next = Vec::with_capacity(self.num_arms);
        let mut per_arm_rewards = Vec::with_capacity(self.num_arms);
        let mut total_reward = 0.0;
        for arm in 0..self.num_arms {
            let s = state.states[arm];
            let a = usize::from(actions[arm]);
            let row = self.kernel_at(arm, state.time).row(s, a);
            next.push(sample_row(row, &mut rngs[arm]));
            let r = self.rewards[arm].get(s, a);
            per_arm_rewards.push(r);
            total_reward += r;
        }
        Ok(StepOutcome {
            next_state: JointState {
                states: next,
                time: state.time + 1,
            },
            per_arm_rewards,
            total_reward,
        })
    }
}

#[inline]
fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = rng::uniform_f64(rng);
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}

/// Draw a full-support distribution with entries `>= p_min`: a symmetric
/// Dirichlet(1) sample shrunk affinely toward uniform.
fn sample_floored_row(rng: &mut ChaCha8Rng, num_states: usize, p_min: f64) -> Vec<f64> {
    let slack = 1.0 - p_min * num_states as f64;
    let mut raw: Vec<f64> = (0..num_states)
        .map(|_| -crate::math::ln(1.0 - rng::uniform_f64(rng)))
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 || slack <= 0.0 {
        for v in raw.iter_mut() {
            *v = 1.0 / num_states as f64;
        }
        if slack <= 0.0 {
            return raw;
        }
    } else {
        for v in raw.iter_mut() {
            *v /= sum;
        }
    }
    raw.iter_mut().for_each(|v| *v = p_min + slack * *v);
    raw
}

fn sample_anchor(rng: &mut ChaCha8Rng, num_states: usize, p_min: f64) -> TransitionKernel {
    let mut flat = Vec::with_capacity(num_states * NUM_ACTIONS * num_states);
    for _ in 0..num_states * NUM_ACTIONS {
        flat.extend(sample_floored_row(rng, num_states, p_min));
    }
    TransitionKernel::from_flat(num_states, flat).expect("shape is correct by construction")
}

/// Interpolate `from + frac * (to - from)` entrywise and re-floor each row.
fn interpolate(
    from: &TransitionKernel,
    to: &TransitionKernel,
    frac: f64,
    p_min: f64,
) -> TransitionKernel {
    let n = from.num_states();
    let flat: Vec<f64> = from
        .flat()
        .iter()
        .zip(to.flat())
        .map(|(a, b)| a + frac * (b - a))
        .collect();
    let mut k = TransitionKernel::from_flat(n, flat).expect("shape preserved");
    for s in 0..n {
        for a in 0..NUM_ACTIONS {
            renormalize_row_floored(k.row_mut(s, a), p_min);
        }
    }
    k
}

fn generate_rewards(config: &RmabConfig, seed: u64) -> Vec<RewardTable> {
    (0..config.num_arms)
        .map(|arm| {
            let mut rng = rng::stream(seed, &[purpose::REWARDS, arm as u64]);
            let flat: Vec<f64> = (0..config.num_states * NUM_ACTIONS)
                .map(|_| rng::uniform_f64(&mut rng))
                .collect();
            RewardTable::from_flat(config.num_states, flat).expect("uniform draws are in range")
        })
        .collect()
}

/// Generate a complete schedule respecting `target_variation` and the
/// probability floor; deterministic in `(config, target, mode, seed)`.
pub fn generate_environment(
    config: &RmabConfig,
    target_variation: f64,
    mode: EnvMode,
    seed: u64,
) -> Result<EnvironmentSchedule, EnvError> {
    config.validate()?;
    let p_min = config.p_min_floor;
    let limit = 1.0 / config.num_states as f64;
    if p_min > limit + 1e-12 {
        return Err(EnvError::PMinInfeasible { floor: p_min, limit });
    }
    if target_variation > 0.0 && (mode == EnvMode::Stationary || config.horizon < 2) {
        return Err(EnvError::InfeasibleBudget {
            target: target_variation,
            mode: mode.name(),
            horizon: config.horizon,
        });
    }

    let kernels = match mode {
        EnvMode::Stationary => generate_stationary(config, seed),
        EnvMode::Abrupt => generate_abrupt(config, target_variation, seed)?,
        EnvMode::Drift => generate_drift(config, target_variation, seed)?,
    };
    let rewards = generate_rewards(config, seed);
    let env = EnvironmentSchedule::from_parts(
        config.num_states,
        config.horizon,
        mode,
        seed,
        p_min,
        target_variation,
        kernels,
        rewards,
    )?;
    debug_assert!(env.budget.total <= target_variation + DRIFT_TOL);
    Ok(env)
}

fn generate_stationary(config: &RmabConfig, seed: u64) -> Vec<Vec<TransitionKernel>> {
    (0..config.num_arms)
        .map(|arm| {
            let mut rng = rng::stream(seed, &[purpose::ANCHOR_KERNELS, arm as u64]);
            let anchor = sample_anchor(&mut rng, config.num_states, config.p_min_floor);
            vec![anchor; config.horizon]
        })
        .collect()
}

fn generate_abrupt(
    config: &RmabConfig,
    target: f64,
    seed: u64,
) -> Result<Vec<Vec<TransitionKernel>>, EnvError> {
    if target == 0.0 {
        return Ok(generate_stationary(config, seed));
    }
    let num_jumps = crate::math::ceil(target / NOMINAL_JUMP).max(1.0) as usize;
    if num_jumps > config.horizon - 1 {
        return Err(EnvError::InfeasibleBudget {
            target,
            mode: EnvMode::Abrupt.name(),
            horizon: config.horizon,
        });
    }
    let jump_size = target / num_jumps as f64;
    let mut cp_rng = rng::stream(seed, &[purpose::CHANGE_POINTS]);
    // Jump positions index into the schedule: a jump at position tau makes
    // kernels[tau..] differ from kernels[tau - 1].
    let positions = rng::sample_distinct(&mut cp_rng, config.horizon - 1, num_jumps);
    let mut jumps_per_arm: Vec<Vec<usize>> = vec![Vec::new(); config.num_arms];
    for (j, &pos) in positions.iter().enumerate() {
        jumps_per_arm[j % config.num_arms].push(pos + 1);
    }

    let mut kernels = Vec::with_capacity(config.num_arms);
    for arm in 0..config.num_arms {
        let mut rng = rng::stream(seed, &[purpose::ANCHOR_KERNELS, arm as u64]);
        let mut current = sample_anchor(&mut rng, config.num_states, config.p_min_floor);
        let mut sched = Vec::with_capacity(config.horizon);
        let mut next_jump = jumps_per_arm[arm].iter().copied().peekable();
        for t in 0..config.horizon {
            if next_jump.peek() == Some(&t) {
                next_jump.next();
                let anchor = sample_anchor(&mut rng, config.num_states, config.p_min_floor);
                let dist = anchor.max_row_l1(&current)?;
                if dist > 1e-12 {
                    let frac = (jump_size / dist).min(1.0);
                    current = interpolate(&current, &anchor, frac, config.p_min_floor);
                }
            }
            sched.push(current.clone());
        }
        kernels.push(sched);
    }
    Ok(kernels)
}

struct DriftSegment {
    anchor: TransitionKernel,
    fraction: f64,
    consumed: f64,
}

fn generate_drift(
    config: &RmabConfig,
    target: f64,
    seed: u64,
) -> Result<Vec<Vec<TransitionKernel>>, EnvError> {
    if target == 0.0 {
        return Ok(generate_stationary(config, seed));
    }
    let steps = config.horizon - 1;
    let per_arm_target = target / config.num_arms as f64;
    // Slight overshoot so the exactness rescale below always shrinks.
    let plan_target = per_arm_target * (1.0 + 1e-6);

    let mut paths: Vec<Vec<TransitionKernel>> = Vec::with_capacity(config.num_arms);
    for arm in 0..config.num_arms {
        let mut anchor_rng = rng::stream(seed, &[purpose::ANCHOR_KERNELS, arm as u64]);
        let mut plan_rng = rng::stream(seed, &[purpose::DRIFT_PLAN, arm as u64]);
        let start = sample_anchor(&mut anchor_rng, config.num_states, config.p_min_floor);

        // Greedy polyline through fresh anchors until the plan consumes the
        // per-arm share of the budget.
        let mut segments: Vec<DriftSegment> = Vec::new();
        let mut cursor = start.clone();
        let mut remaining = plan_target;
        let mut dead_draws = 0usize;
        while remaining > plan_target * 1e-12 {
            if segments.len() >= steps || dead_draws > 256 {
                return Err(EnvError::InfeasibleBudget {
                    target,
                    mode: EnvMode::Drift.name(),
                    horizon: config.horizon,
                });
            }
            let anchor = sample_anchor(&mut plan_rng, config.num_states, config.p_min_floor);
            let dist = anchor.max_row_l1(&cursor)?;
            if dist <= 1e-9 {
                dead_draws += 1;
                continue;
            }
            dead_draws = 0;
            let fraction = (remaining / dist).min(1.0);
            let consumed = fraction * dist;
            cursor = interpolate(&cursor, &anchor, fraction, config.p_min_floor);
            segments.push(DriftSegment {
                anchor,
                fraction,
                consumed,
            });
            remaining -= consumed;
        }

        let counts = apportion_steps(&segments, steps);
        let mut path = Vec::with_capacity(config.horizon);
        path.push(start.clone());
        let mut from = start;
        for (seg, &n) in segments.iter().zip(&counts) {
            for j in 1..=n {
                let frac = seg.fraction * (j as f64 / n as f64);
                path.push(interpolate(&from, &seg.anchor, frac, config.p_min_floor));
            }
            from = path.last().expect("segment emitted at least one step").clone();
        }
        // Segments may be exhausted before all steps are allotted only when
        // there are no segments at all; pad with the final kernel.
        while path.len() < config.horizon {
            path.push(from.clone());
        }
        paths.push(path);
    }

    // Rescale every path affinely toward its start so the re-measured total
    // lands in [target - DRIFT_TOL, target]. The measured total is linear in
    // the scale factor up to re-flooring dust, so this converges immediately.
    let aim = if target > 1e-6 {
        target - DRIFT_HAIRCUT
    } else {
        target * (1.0 - 1e-9)
    };
    let mut scale = 1.0f64;
    let mut scaled = paths.clone();
    for _ in 0..64 {
        let measured = variation_budget(&scaled)?.total;
        if measured <= target && measured >= target - DRIFT_TOL {
            return Ok(scaled);
        }
        if measured <= 0.0 {
            break;
        }
        scale *= aim / measured;
        scale = scale.min(1.0);
        for (arm, path) in paths.iter().enumerate() {
            let start = &path[0];
            for (t, k) in path.iter().enumerate() {
                scaled[arm][t] = interpolate(start, k, scale, config.p_min_floor);
            }
        }
    }
    let measured = variation_budget(&scaled)?.total;
    Err(EnvError::BudgetScalingFailed {
        measured,
        target,
    })
}

/// Distribute `steps` across segments proportionally to consumed budget,
/// at least one step each, by largest remainder; deterministic.
fn apportion_steps(segments: &[DriftSegment], steps: usize) -> Vec<usize> {
    if segments.is_empty() {
        return Vec::new();
    }
    let total: f64 = segments.iter().map(|s| s.consumed).sum();
    let mut counts = vec![1usize; segments.len()];
    let mut spare = steps - segments.len();
    if total > 0.0 && spare > 0 {
        let mut fractional: Vec<(usize, f64)> = Vec::with_capacity(segments.len());
        let mut assigned = 0usize;
        for (k, seg) in segments.iter().enumerate() {
            let quota = spare as f64 * seg.consumed / total;
            let whole = crate::math::floor(quota) as usize;
            counts[k] += whole;
            assigned += whole;
            fractional.push((k, quota - whole as f64));
        }
        // Ties broken toward earlier segments.
        fractional.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        spare -= assigned;
        for &(k, _) in fractional.iter().take(spare) {
            counts[k] += 1;
        }
    }
    counts
}
