//! Differential-evolution search over reward tables for instances that
//! stress the metric's guarantees.

use serde::Serialize;

use super::config::{AdversarialConfig, AdversarialObjective};
use super::de::{differential_evolution, DeSettings};
use crate::error::Result;
use crate::mdp::FiniteMdp;
use crate::metric::{estimate_contraction, solve_metric, TRIANGLE_SLACK};
use crate::planning::{value_loss_report_with_metric, PlanTolerances, LOSS_SLACK};

/// Accepted excess in the contraction inequality.
pub const CONTRACTION_SLACK: f64 = 1e-9;
/// Accepted excess in the value Lipschitz inequality.
pub const LIPSCHITZ_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateEvaluation {
    pub diameter: f64,
    pub epsilon: f64,
    pub classes: usize,
    pub value_loss: f64,
    pub bound_eps: f64,
    pub bound_diam: f64,
    pub lipschitz_excess: f64,
}

impl CandidateEvaluation {
    pub fn objective(&self, objective: AdversarialObjective) -> f64 {
        match objective {
            AdversarialObjective::LossMinusDiameterBound => self.value_loss - self.bound_diam,
            AdversarialObjective::LossMinusEpsilonBound => self.value_loss - self.bound_eps,
            AdversarialObjective::ValueLoss => self.value_loss,
            AdversarialObjective::LipschitzExcess => self.lipschitz_excess,
            AdversarialObjective::Constant => 0.0,
        }
    }
}

/// The full pipeline for one reward table: metric, ε-quotient at
/// `epsilon_fraction · diameter`, abstract planning and the loss report.
pub fn evaluate_rewards(
    base: &FiniteMdp,
    rewards: &[f64],
    epsilon_fraction: f64,
    tolerance: f64,
) -> Result<CandidateEvaluation> {
    let m = base.with_rewards(rewards.to_vec())?;
    let d = solve_metric(&m, tolerance)?.final_metric;
    let diameter = d.max_entry();
    let epsilon = epsilon_fraction * diameter;
    let tol = PlanTolerances {
        metric: tolerance,
        value: tolerance,
    };
    let r = value_loss_report_with_metric(&m, &d, epsilon, &tol)?;
    Ok(CandidateEvaluation {
        diameter,
        epsilon,
        classes: r.classes,
        value_loss: r.value_loss,
        bound_eps: r.bound_eps,
        bound_diam: r.bound_diam,
        lipschitz_excess: r.lipschitz_excess,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub contraction_ratio: f64,
    pub contraction_excess: f64,
    pub contraction_ok: bool,
    pub pseudometric_ok: bool,
    pub lipschitz_excess: f64,
    pub lipschitz_ok: bool,
    pub value_loss: f64,
    pub bound_diam: f64,
    pub diameter_bound_ok: bool,
    /// `bound_diam − value_loss`.
    pub bound_slack: f64,
    pub bound_eps: f64,
    /// Informational: the ε-form of the bound.
    pub eps_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialReport {
    pub objective: AdversarialObjective,
    pub settings: DeSettings,
    pub reward_bound: f64,
    pub epsilon_fraction: f64,
    pub dimension: usize,
    /// `best_rewards[s][a]`.
    pub best_rewards: Vec<Vec<f64>>,
    pub best_objective: f64,
    pub objective_trace: Vec<f64>,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub worst: CandidateEvaluation,
    pub invariants: InvariantReport,
    pub passed: bool,
}

/// Searches rewards in `[−bound, bound]^{n×m}` for `base`'s dynamics.
pub fn adversarial_search(
    base: &FiniteMdp,
    cfg: &AdversarialConfig,
    tolerance: f64,
    seed: u64,
    parallel: bool,
) -> Result<AdversarialReport> {
    let dim = base.n_states() * base.n_actions();
    let settings = DeSettings {
        generations: cfg.iterations,
        population: cfg
            .population
            .unwrap_or_else(|| DeSettings::default_population(dim, cfg.population_cap)),
        mutation: cfg.mutation,
        crossover: cfg.crossover,
        seed,
        parallel,
    };
    let bounds = vec![(-cfg.reward_bound, cfg.reward_bound); dim];
    let failures = std::sync::atomic::AtomicUsize::new(0);
    let result = differential_evolution(&bounds, &settings, |r| {
        match evaluate_rewards(base, r, cfg.epsilon_fraction, tolerance) {
            Ok(e) => e.objective(cfg.objective),
            Err(_) => {
                failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                f64::NEG_INFINITY
            }
        }
    });

    let worst_mdp = base.with_rewards(result.best.clone())?;
    let worst = evaluate_rewards(base, &result.best, cfg.epsilon_fraction, tolerance)?;
    let d = solve_metric(&worst_mdp, tolerance)?.final_metric;
    let contraction = estimate_contraction(&worst_mdp, 10, seed, None)?;
    let invariants = InvariantReport {
        contraction_ratio: contraction.random_pair,
        contraction_excess: contraction.max_excess,
        contraction_ok: contraction.max_excess <= CONTRACTION_SLACK,
        pseudometric_ok: d.is_pseudometric(TRIANGLE_SLACK),
        lipschitz_excess: worst.lipschitz_excess,
        lipschitz_ok: worst.lipschitz_excess <= LIPSCHITZ_SLACK,
        value_loss: worst.value_loss,
        bound_diam: worst.bound_diam,
        diameter_bound_ok: worst.value_loss <= worst.bound_diam + LOSS_SLACK,
        bound_slack: worst.bound_diam - worst.value_loss,
        bound_eps: worst.bound_eps,
        eps_bound_ok: worst.value_loss <= worst.bound_eps + LOSS_SLACK,
    };
    let passed = invariants.contraction_ok
        && invariants.pseudometric_ok
        && invariants.lipschitz_ok
        && invariants.diameter_bound_ok;
    let n_actions = base.n_actions();
    Ok(AdversarialReport {
        objective: cfg.objective,
        reward_bound: cfg.reward_bound,
        epsilon_fraction: cfg.epsilon_fraction,
        dimension: dim,
        best_rewards: result.best.chunks(n_actions).map(|c| c.to_vec()).collect(),
        best_objective: result.best_value,
        objective_trace: result.trace,
        evaluations: result.evaluations,
        failed_evaluations: failures.into_inner(),
        worst,
        invariants,
        passed,
        settings,
    })
}
