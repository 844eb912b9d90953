//! Value iteration, greedy policies, policy evaluation and planning through
//! an ε-quotient.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metric::{solve_metric, PseudoMetricMatrix};
use crate::quotient::{build_abstract_mdp, EpsilonQuotient, Weighting};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,value\n");
        for (s, v) in self.0.iter().enumerate() {
            writeln!(out, "{s},{v}").unwrap();
        }
        out
    }
}

/// A deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action\n");
        for (s, a) in self.0.iter().enumerate() {
            writeln!(out, "{s},{a}").unwrap();
        }
        out
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if tolerance > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )))
    }
}

fn q_value(m: &FiniteMdp, s: usize, a: usize, v: &[f64]) -> f64 {
    let expected: f64 = m
        .transition_row(s, a)
        .iter()
        .zip(v)
        .map(|(p, x)| p * x)
        .sum();
    m.reward(s, a) + m.gamma() * expected
}

/// Iterates the Bellman optimality operator from zero until the sup-norm
/// change is at most `tolerance`.
pub fn value_iteration(m: &FiniteMdp, tolerance: f64) -> Result<ValueFunction> {
    check_tolerance(tolerance)?;
    let n = m.n_states();
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..m.n_actions())
                    .map(|a| q_value(m, s, a, &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change <= tolerance {
            return Ok(ValueFunction(v));
        }
    }
}

/// Greedy policy with respect to `v`; ties go to the lowest action index.
pub fn greedy_policy(m: &FiniteMdp, v: &ValueFunction) -> Result<Policy> {
    if v.0.len() != m.n_states() {
        return Err(Error::Dimension(format!(
            "value function has {} entries, MDP has {} states",
            v.0.len(),
            m.n_states()
        )));
    }
    Ok(Policy(
        (0..m.n_states())
            .map(|s| {
                let mut best = 0;
                let mut best_q = q_value(m, s, 0, &v.0);
                for a in 1..m.n_actions() {
                    let q = q_value(m, s, a, &v.0);
                    if q > best_q {
                        best = a;
                        best_q = q;
                    }
                }
                best
            })
            .collect(),
    ))
}

/// `V^π` by fixed-point iteration of the policy Bellman operator.
pub fn policy_value(m: &FiniteMdp, p: &Policy, tolerance: f64) -> Result<ValueFunction> {
    check_tolerance(tolerance)?;
    let n = m.n_states();
    if p.0.len() != n || p.0.iter().any(|&a| a >= m.n_actions()) {
        return Err(Error::InvalidArgument(format!(
            "policy must assign one of {} actions to each of {n} states",
            m.n_actions()
        )));
    }
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n).map(|s| q_value(m, s, p.0[s], &v)).collect();
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change <= tolerance {
            return Ok(ValueFunction(v));
        }
    }
}

/// `lifted[s] = abstract[class(s)]`.
pub fn lift_policy(q: &EpsilonQuotient, abstract_policy: &Policy) -> Result<Policy> {
    if abstract_policy.0.len() != q.n_classes() {
        return Err(Error::Dimension(format!(
            "abstract policy has {} entries, quotient has {} classes",
            abstract_policy.0.len(),
            q.n_classes()
        )));
    }
    Ok(Policy(
        q.partition
            .assignment()
            .iter()
            .map(|&c| abstract_policy.0[c])
            .collect(),
    ))
}

/// Largest amount by which `|V(s) - V(t)|` exceeds `d(s, t)`; nonpositive
/// when `V` is 1-Lipschitz for `d`.
pub fn lipschitz_excess(v: &ValueFunction, d: &PseudoMetricMatrix) -> f64 {
    let n = d.n();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..n {
        for t in s + 1..n {
            worst = worst.max((v.0[s] - v.0[t]).abs() - d.get(s, t));
        }
    }
    if n < 2 {
        0.0
    } else {
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanTolerances {
    pub metric: f64,
    pub value: f64,
}

impl Default for PlanTolerances {
    fn default() -> Self {
        Self {
            metric: 1e-9,
            value: 1e-9,
        }
    }
}

/// Slack applied to the diameter bound for the value-iteration error.
pub const LOSS_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueLossReport {
    pub epsilon: f64,
    pub classes: usize,
    /// `max_s |V*(s) - V^{π'}(s)|` for the lifted greedy abstract policy.
    pub value_loss: f64,
    /// `2ε / (1 − γ)`.
    pub bound_eps: f64,
    /// `2 · max intra-class diameter / (1 − γ)`.
    pub bound_diam: f64,
    pub max_intra_diameter: f64,
    pub within_eps_bound: bool,
    pub within_diam_bound: bool,
    /// Worst `|V*(s) - V*(t)| - d_M(s, t)` over pairs.
    pub lipschitz_excess: f64,
    pub lifted_policy: Policy,
}

/// Plans in the ε-quotient of `m` under `d` (the behavioral metric of `m`)
/// and measures the value lost by lifting the abstract greedy policy.
pub fn value_loss_report_with_metric(
    m: &FiniteMdp,
    d: &PseudoMetricMatrix,
    epsilon: f64,
    tol: &PlanTolerances,
) -> Result<ValueLossReport> {
    let q = EpsilonQuotient::build(d, epsilon)?;
    let abstract_mdp = build_abstract_mdp(m, &q.partition, &Weighting::Uniform)?;
    let abstract_v = value_iteration(&abstract_mdp, tol.value)?;
    let abstract_policy = greedy_policy(&abstract_mdp, &abstract_v)?;
    let lifted = lift_policy(&q, &abstract_policy)?;

    let v_star = value_iteration(m, tol.value)?;
    let v_lifted = policy_value(m, &lifted, tol.value)?;
    let value_loss = v_star.sup_distance(&v_lifted);

    let horizon = 1.0 - m.gamma();
    let bound_eps = 2.0 * epsilon / horizon;
    let max_intra_diameter = q.max_intra_diameter();
    let bound_diam = 2.0 * max_intra_diameter / horizon;
    Ok(ValueLossReport {
        epsilon,
        classes: q.n_classes(),
        value_loss,
        bound_eps,
        bound_diam,
        max_intra_diameter,
        within_eps_bound: value_loss <= bound_eps + LOSS_SLACK,
        within_diam_bound: value_loss <= bound_diam + LOSS_SLACK,
        lipschitz_excess: lipschitz_excess(&v_star, d),
        lifted_policy: lifted,
    })
}

/// Computes `d_M` and runs [`value_loss_report_with_metric`].
pub fn value_loss_report(m: &FiniteMdp, epsilon: f64, tol: &PlanTolerances) -> Result<ValueLossReport> {
    let run = solve_metric(m, tol.metric)?;
    value_loss_report_with_metric(m, &run.final_metric, epsilon, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_chain_example, make_random_mdp};
    use crate::quotient::Partition;

    #[test]
    fn chain_values() {
        let m = make_chain_example();
        let v = value_iteration(&m, 1e-12).unwrap();
        assert!((v.0[0] - 0.9).abs() < 1e-9);
        assert!((v.0[1] - 1.0).abs() < 1e-9);
        assert!(v.0[2].abs() < 1e-9);
        let p = greedy_policy(&m, &v).unwrap();
        assert_eq!(p, Policy(vec![0, 0, 0]));
        let vp = policy_value(&m, &p, 1e-12).unwrap();
        assert!((vp.0[0] - 0.9).abs() < 1e-9 && (vp.0[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let m = make_random_mdp(5, 3, 0.9, 0).unwrap().with_rewards(vec![0.0; 15]).unwrap();
        assert!(value_iteration(&m, 1e-9).unwrap().0.iter().all(|&x| x == 0.0));
        let p = Policy(vec![1; 5]);
        assert!(policy_value(&m, &p, 1e-9).unwrap().0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn absorbing_state_geometric_series() {
        let m = FiniteMdp::new(1, 1, vec![1.0], vec![0.5], 0.8).unwrap();
        let tol = 1e-10;
        let v = value_iteration(&m, tol).unwrap();
        assert!((v.0[0] - 0.5 / 0.2).abs() <= tol / 0.2);
    }

    #[test]
    fn dominating_action_is_chosen() {
        let mut t = Vec::new();
        let mut r = Vec::new();
        for s in 0..3 {
            for a in 0..2 {
                t.extend([1.0 / 3.0; 3]);
                r.push(if a == 1 { 1.0 } else { 0.0 } + s as f64 * 0.1);
            }
        }
        let m = FiniteMdp::from_parts(3, 2, t, r, 0.9).unwrap();
        let v = value_iteration(&m, 1e-9).unwrap();
        assert_eq!(greedy_policy(&m, &v).unwrap(), Policy(vec![1, 1, 1]));
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let m = crate::mdp::reindex_actions(&make_random_mdp(4, 1, 0.9, 2).unwrap(), &[0, 0, 0]).unwrap();
        let v = value_iteration(&m, 1e-9).unwrap();
        assert_eq!(greedy_policy(&m, &v).unwrap(), Policy(vec![0; 4]));
    }

    #[test]
    fn greedy_policy_attains_optimal_value() {
        for seed in 0..20 {
            let m = make_random_mdp(6, 3, 0.9, seed).unwrap();
            let tol = 1e-10;
            let v = value_iteration(&m, tol).unwrap();
            let pv = policy_value(&m, &greedy_policy(&m, &v).unwrap(), tol).unwrap();
            assert!(pv.sup_distance(&v) <= 2.0 * tol / (1.0 - m.gamma()));
        }
    }

    #[test]
    fn lifting() {
        let d = PseudoMetricMatrix::from_upper(3, &[1.9, 0.9, 1.0]).unwrap();
        let q = EpsilonQuotient::build(&d, 0.95).unwrap();
        let lifted = lift_policy(&q, &Policy(vec![4, 7])).unwrap();
        assert_eq!(lifted, Policy(vec![4, 7, 4]));
        assert!(crate::quotient::check_factorization(&q, lifted.actions()));
        let one = EpsilonQuotient::build(&d, 3.0).unwrap();
        assert_eq!(lift_policy(&one, &Policy(vec![2])).unwrap(), Policy(vec![2, 2, 2]));
        let id = EpsilonQuotient::build(&d, 0.0).unwrap();
        assert_eq!(id.partition, Partition::singletons(3));
        assert_eq!(lift_policy(&id, &Policy(vec![0, 1, 2])).unwrap(), Policy(vec![0, 1, 2]));
        assert!(lift_policy(&id, &Policy(vec![0])).is_err());
    }

    #[test]
    fn identity_abstraction_loses_nothing() {
        let m = make_random_mdp(6, 3, 0.9, 4).unwrap();
        let tol = PlanTolerances::default();
        let r = value_loss_report(&m, 0.0, &tol).unwrap();
        assert_eq!(r.classes, 6);
        assert!(r.value_loss <= 2.0 * tol.value / (1.0 - m.gamma()));
        assert!(r.lipschitz_excess <= 1e-7);
    }

    #[test]
    fn single_action_models_lose_nothing() {
        let m = make_random_mdp(6, 1, 0.9, 4).unwrap();
        let r = value_loss_report(&m, 0.5, &PlanTolerances::default()).unwrap();
        assert!(r.value_loss <= 1e-8);
    }
}
