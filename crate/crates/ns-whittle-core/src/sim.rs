//! Per-replication simulation of a policy against an environment schedule.
//!
//! The loop per step: build per-arm confidence sets from the sliding-window
//! statistics, decide actions, account regret against the exact oracle at
//! the true kernels, then step the environment and fold the observed
//! transitions back into the statistics. Everything downstream of the seeds
//! is deterministic; instrumentation draws no randomness.

use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dual::{select_actions, solve_dual, whittle_indices, ArmInput};
use crate::env::{EnvError, EnvironmentSchedule, JointState};
use crate::estimator::{EstimatorError, SlidingWindowStats, TrueRowWindow};
use crate::evi::{ConfidenceSets, EviError, EviStop, QTable};
use crate::kernel::{l1_distance, TransitionKernel, NUM_ACTIONS};
use crate::oracle::{evaluate_policy_value, OracleSolver};
use crate::regret::{
    bad_event_audit, optimism_audit, regret_step, BadEventAudit, OptimismRecord, RegretRecord,
    ValueBoundAudit,
};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    NsWhittle,
    Oracle,
    Random,
    StationaryWhittle,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::NsWhittle => "ns_whittle",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Random => "random",
            PolicyKind::StationaryWhittle => "stationary_whittle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error("estimator error: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("value iteration error: {0}")]
    Evi(#[from] EviError),
    #[error("expected {expected} per-arm parameters, got {got}")]
    ArmParamMismatch { expected: usize, got: usize },
    #[error("solve_every must be at least 1")]
    BadSolveEvery,
}

/// Resolved per-run parameters. Windows and exploration bonuses are per
/// arm; `solve_every > 1` reuses the last converged dual solution for that
/// many steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub budget: usize,
    pub discount: f64,
    pub failure_prob: f64,
    pub lambda_cap: f64,
    pub dual_tolerance: f64,
    pub evi_stop: EviStop,
    pub windows: Vec<usize>,
    pub etas: Vec<f64>,
    pub solve_every: usize,
    /// Debug mode: replace every confidence set with a point mass at the
    /// true current kernel row.
    pub collapse_sets: bool,
    /// Compute oracle values and per-step regret records.
    pub compute_regret: bool,
    /// Evaluate the optimism inequality per step (needs optimistic kernels).
    pub track_optimism: bool,
}

impl RunParams {
    pub fn baseline(budget: usize, discount: f64, failure_prob: f64, num_arms: usize, horizon: usize) -> Self {
        let lambda_cap = crate::config::RmabConfig::default_lambda_cap(discount);
        Self {
            budget,
            discount,
            failure_prob,
            lambda_cap,
            dual_tolerance: crate::dual::default_dual_tolerance(lambda_cap),
            evi_stop: EviStop::for_discount(discount),
            windows: vec![horizon; num_arms],
            etas: vec![1.0 / horizon as f64; num_arms],
            solve_every: 1,
            collapse_sets: false,
            compute_regret: true,
            track_optimism: true,
        }
    }
}

/// Everything a replication produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: &'static str,
    pub records: Vec<RegretRecord>,
    pub optimism: Vec<OptimismRecord>,
    pub bad_events: BadEventAudit,
    /// Whether the windowed-average good event held for every arm over the
    /// whole run (restricted to observed pairs).
    pub good_event: bool,
    pub value_bound: ValueBoundAudit,
    pub final_cum_regret: f64,
    /// Final frontier counts per arm: `(visit counts, joint counts)`.
    pub final_counts: Vec<(Vec<usize>, Vec<usize>)>,
}

struct SolveArtifacts {
    lambda: f64,
    q: Vec<QTable>,
    optimistic: Vec<TransitionKernel>,
    age: usize,
}

/// Run one policy over one environment replication.
pub fn run_policy(
    env: &EnvironmentSchedule,
    policy: PolicyKind,
    params: &RunParams,
    rep_seed: u64,
) -> Result<RunRecord, SimError> {
    let num_arms = env.num_arms();
    let num_states = env.num_states();
    let horizon = env.horizon();
    if params.windows.len() != num_arms || params.etas.len() != num_arms {
        return Err(SimError::ArmParamMismatch {
            expected: num_arms,
            got: params.windows.len().min(params.etas.len()),
        });
    }
    if params.solve_every == 0 {
        return Err(SimError::BadSolveEvery);
    }

    let mut stats: Vec<SlidingWindowStats> = params
        .windows
        .iter()
        .map(|&w| SlidingWindowStats::new(num_states, w.max(1)))
        .collect();
    let mut true_rows: Vec<TrueRowWindow> = params
        .windows
        .iter()
        .map(|&w| TrueRowWindow::new(num_states, w.max(1)))
        .collect();
    let mut traj_rngs: Vec<ChaCha8Rng> = (0..num_arms)
        .map(|arm| rng::stream(rep_seed, &[purpose::TRAJECTORY, arm as u64]))
        .collect();
    let mut random_rng = rng::stream(rep_seed, &[purpose::RANDOM_POLICY]);
    let mut init_rng = rng::stream(rep_seed, &[purpose::INIT_STATE]);
    let mut joint = env.initial_state(&mut init_rng);

    let needs_oracle = params.compute_regret || policy == PolicyKind::Oracle;
    let mut oracle = OracleSolver::new(
        params.discount,
        params.budget,
        params.lambda_cap,
        params.dual_tolerance,
        params.evi_stop,
        num_arms,
    );
    let mut value_bound = ValueBoundAudit::new(num_arms, params.lambda_cap, params.discount);

    let mut records = Vec::with_capacity(if params.compute_regret { horizon } else { 0 });
    let mut optimism = Vec::new();
    let mut bad_flags = Vec::with_capacity(horizon);
    let mut good_event = true;
    let mut cum_regret = 0.0;
    let mut artifacts: Option<SolveArtifacts> = None;

    for t in 1..=horizon {
        let kernels_t: Vec<&TransitionKernel> =
            (0..num_arms).map(|arm| env.kernel_at(arm, t)).collect();

        // Confidence sets for this step; the estimator frontier is exactly t.
        let sets_t: Vec<ConfidenceSets> = if params.collapse_sets {
            kernels_t
                .iter()
                .map(|k| ConfidenceSets::point_mass(k))
                .collect()
        } else {
            let mut all = Vec::with_capacity(num_arms);
            for arm in 0..num_arms {
                let mut list = Vec::with_capacity(num_states * NUM_ACTIONS);
                for s in 0..num_states {
                    for a in 0..NUM_ACTIONS {
                        list.push(stats[arm].confidence_set(
                            t,
                            s,
                            a,
                            params.etas[arm],
                            horizon,
                            params.failure_prob,
                        )?);
                    }
                }
                all.push(ConfidenceSets::new(num_states, list)?);
            }
            all
        };

        // Good event: windowed averages of true rows stay inside the
        // eta-free sets on every observed pair.
        if good_event && !params.collapse_sets {
            'xi: for arm in 0..num_arms {
                for s in 0..num_states {
                    for a in 0..NUM_ACTIONS {
                        if let Some(mean) = true_rows[arm].mean_row(s, a) {
                            let set = sets_t[arm].get(s, a);
                            let d = l1_distance(&mean, &set.center)
                                .expect("dimensions agree by construction");
                            if d > set.radius + 1e-12 {
                                good_event = false;
                                break 'xi;
                            }
                        }
                    }
                }
            }
        }

        // Bad event: some true row escapes its eta-inflated set.
        let bad_event = {
            let mut escaped = false;
            'bad: for arm in 0..num_arms {
                for s in 0..num_states {
                    for a in 0..NUM_ACTIONS {
                        if !sets_t[arm].get(s, a).contains(kernels_t[arm].row(s, a)) {
                            escaped = true;
                            break 'bad;
                        }
                    }
                }
            }
            escaped
        };
        bad_flags.push(bad_event);

        // Decide actions and the per-arm policy maps used for evaluation.
        let (actions, active_count, lambda_alg, policies): (Vec<bool>, usize, f64, Vec<Vec<usize>>) =
            match policy {
                PolicyKind::NsWhittle | PolicyKind::StationaryWhittle => {
                    if t == 1 {
                        // Initial multiplier 0 and all-passive start.
                        (vec![false; num_arms], 0, 0.0, vec![vec![0; num_states]; num_arms])
                    } else {
                        let refresh = match &artifacts {
                            None => true,
                            Some(a) => a.age + 1 >= params.solve_every,
                        };
                        if refresh {
                            let arm_inputs: Vec<ArmInput<'_>> = (0..num_arms)
                                .map(|arm| ArmInput {
                                    sets: &sets_t[arm],
                                    rewards: env.reward_table(arm),
                                    state: joint.states[arm],
                                })
                                .collect();
                            let sol = solve_dual(
                                &arm_inputs,
                                params.discount,
                                params.budget,
                                &params.evi_stop,
                                params.lambda_cap,
                                params.dual_tolerance,
                            )?;
                            artifacts = Some(SolveArtifacts {
                                lambda: sol.state.lambda,
                                q: sol.per_arm.iter().map(|o| o.q.clone()).collect(),
                                optimistic: sol
                                    .per_arm
                                    .into_iter()
                                    .map(|o| o.optimistic)
                                    .collect(),
                                age: 0,
                            });
                        } else if let Some(a) = artifacts.as_mut() {
                            a.age += 1;
                        }
                        let art = artifacts.as_ref().expect("artifacts just ensured");
                        let indices = whittle_indices(&art.q, &joint.states);
                        let decision = select_actions(&indices, params.budget);
                        let maps: Vec<Vec<usize>> = art
                            .q
                            .iter()
                            .map(|q| (0..num_states).map(|s| q.greedy_action(s)).collect())
                            .collect();
                        (decision.actions, decision.active_count, art.lambda, maps)
                    }
                }
                PolicyKind::Oracle => {
                    let sol = oracle.solve(
                        &kernels_t,
                        env.reward_tables(),
                        &joint.states,
                        env.kernel_hash_at(t),
                    )?;
                    let decision = select_actions(&sol.indices, params.budget);
                    (
                        decision.actions,
                        decision.active_count,
                        sol.dual.lambda,
                        sol.policies,
                    )
                }
                PolicyKind::Random => {
                    let picks = rng::sample_distinct(&mut random_rng, num_arms, params.budget);
                    let mut actions = vec![false; num_arms                    ];
                    for &arm in &picks {
                        actions[arm] = true;
                    }
                    let maps = actions
                        .iter()
                        .map(|&a| vec![usize::from(a); num_states])
                        .collect();
                    (actions, params.budget, 0.0, maps)
                }
            };

        // Regret accounting at the oracle's multiplier.
        if params.compute_regret && needs_oracle {
            let oracle_sol = oracle.solve(
                &kernels_t,
                env.reward_tables(),
                &joint.states,
                env.kernel_hash_at(t),
            )?;
            let gap = regret_step(
                &oracle_sol,
                &policies,
                &kernels_t,
                env.reward_tables(),
                &joint.states,
                params.discount,
                params.budget,
            );
            value_bound.observe(gap.v_opt);
            value_bound.observe(gap.v_alg);
            cum_regret += gap.gap;

            if params.track_optimism {
                if let Some(art) = artifacts.as_ref() {
                    let opt_kernels: Vec<&TransitionKernel> = art.optimistic.iter().collect();
                    let v_optimistic = evaluate_policy_value(
                        &policies,
                        &opt_kernels,
                        env.reward_tables(),
                        &joint.states,
                        oracle_sol.dual.lambda,
                        params.discount,
                        params.budget,
                    );
                    value_bound.observe(v_optimistic);
                    optimism.push(optimism_audit(t, v_optimistic, gap.v_opt, !bad_event));
                }
            }

            records.push(RegretRecord {
                time: t,
                v_opt: gap.v_opt,
                v_alg: gap.v_alg,
                gap: gap.gap,
                cum_regret,
                lambda_alg,
                active_count,
                constraint_violation: params.budget - active_count,
                bad_event,
            });
        }

        // Step the environment and fold the transitions back in.
        let outcome = env.step(&joint, &actions, &mut traj_rngs)?;
        for arm in 0..num_arms {
            let s = joint.states[arm];
            let a = usize::from(actions[arm]);
            let next = outcome.next_state.states[arm];
            stats[arm].record_transition(t, s, a, next)?;
            true_rows[arm].record(t, s, a, kernels_t[arm].row(s, a));
        }
        joint = outcome.next_state;
    }

    let window = params.windows.iter().copied().min().unwrap_or(1);
    let eta = params.etas.iter().copied().fold(f64::INFINITY, f64::min);
    let bad_events = bad_event_audit(&bad_flags, window, env.budget().total, eta);
    let final_counts = stats.iter().map(|s| s.counts_snapshot()).collect();

    Ok(RunRecord {
        policy: policy.name(),
        records,
        optimism,
        bad_events,
        good_event,
        value_bound,
        final_cum_regret: cum_regret,
        final_counts,
    })
}

/// Start state for a replication, exposed so callers can reproduce
/// trajectories without running the loop.
pub fn initial_state(env: &EnvironmentSchedule, rep_seed: u64) -> JointState {
    let mut init_rng = rng::stream(rep_seed, &[purpose::INIT_STATE]);
    env.initial_state(&mut init_rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RmabConfig;
    use crate::env::{generate_environment, EnvMode};

    fn small_config() -> RmabConfig {
        RmabConfig {
            num_arms: 2,
            num_states: 2,
            budget: 1,
            discount: 0.9,
            horizon: 40,
            failure_prob: 0.1,
            lambda_cap: 20.0,
            p_min_floor: 0.05,
        }
    }

    fn params_for(cfg: &RmabConfig) -> RunParams {
        RunParams::baseline(
            cfg.budget,
            cfg.discount,
            cfg.failure_prob,
            cfg.num_arms,
            cfg.horizon,
        )
    }

    #[test]
    fn oracle_policy_has_zero_regret() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 0.0, EnvMode::Stationary, 3).unwrap();
        let rec = run_policy(&env, PolicyKind::Oracle, &params_for(&cfg), 17).unwrap();
        assert_eq!(rec.records.len(), cfg.horizon);
        for r in &rec.records {
            assert_eq!(r.gap, 0.0, "oracle gap must be exactly zero at t={}", r.time);
        }
        assert_eq!(rec.final_cum_regret, 0.0);
    }

    #[test]
    fn collapsed_sets_on_stationary_env_give_zero_regret() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 0.0, EnvMode::Stationary, 5).unwrap();
        let mut params = params_for(&cfg);
        params.collapse_sets = true;
        let rec = run_policy(&env, PolicyKind::NsWhittle, &params, 17).unwrap();
        // The first step is forced passive and may pay a gap; thereafter the
        // learner sees the truth and matches the oracle.
        for r in rec.records.iter().skip(1) {
            assert!(
                r.gap.abs() <= 1e-6,
                "informed learner gap {} at t={}",
                r.gap,
                r.time
            );
        }
    }

    #[test]
    fn budget_is_respected_every_step() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 0.5, EnvMode::Drift, 7).unwrap();
        for policy in [PolicyKind::NsWhittle, PolicyKind::Random, PolicyKind::Oracle] {
            let rec = run_policy(&env, policy, &params_for(&cfg), 23).unwrap();
            for r in &rec.records {
                assert!(r.active_count <= cfg.budget);
                assert_eq!(r.constraint_violation, cfg.budget - r.active_count);
            }
        }
    }

    #[test]
    fn runs_are_deterministic_in_the_seed() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 0.5, EnvMode::Abrupt, 9).unwrap();
        let a = run_policy(&env, PolicyKind::NsWhittle, &params_for(&cfg), 31).unwrap();
        let b = run_policy(&env, PolicyKind::NsWhittle, &params_for(&cfg), 31).unwrap();
        assert_eq!(a, b);
        let c = run_policy(&env, PolicyKind::NsWhittle, &params_for(&cfg), 32).unwrap();
        assert!(a.records != c.records || a.final_cum_regret != c.final_cum_regret);
    }

    #[test]
    fn cumulative_regret_is_prefix_sum_of_gaps() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 1.0, EnvMode::Drift, 13).unwrap();
        let rec = run_policy(&env, PolicyKind::Random, &params_for(&cfg), 5).unwrap();
        let mut acc = 0.0;
        for r in &rec.records {
            acc += r.gap;
            assert!((r.cum_regret - acc).abs() <= 1e-9);
        }
    }

    #[test]
    fn value_bound_holds_over_runs() {
        let cfg = small_config();
        let env = generate_environment(&cfg, 1.0, EnvMode::Abrupt, 21).unwrap();
        for policy in [PolicyKind::NsWhittle, PolicyKind::Random] {
            let rec = run_policy(&env, policy, &params_for(&cfg), 3).unwrap();
            assert_eq!(rec.value_bound.violations, 0);
            assert!(rec.value_bound.max_abs <= rec.value_bound.bound + 1e-6);
        }
    }
}
