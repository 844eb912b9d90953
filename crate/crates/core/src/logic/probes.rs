use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::eval::eval_closed;
use super::formula::Formula;
use super::generate::SafeGrammar;
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metric::{MetricEngine, PseudoMetricMatrix};

/// Allowed excess of a formula deviation over the metric.
pub const SOUNDNESS_SLACK: f64 = 1e-7;

/// `d_depth(s1, ·)`: the depth-`depth` evaluation of the formula that mimics
/// `s1`, obtained by unrolling the metric recursion from zero.
pub fn mimic_deviation(m: &FiniteMdp, s1: usize, depth: usize) -> Result<Vec<f64>> {
    if s1 >= m.n_states() {
        return Err(Error::InvalidArgument(format!(
            "state {s1} out of range for {} states",
            m.n_states()
        )));
    }
    let d = MetricEngine::new(m).iterate(depth)?;
    Ok(d.row(s1).to_vec())
}

/// Largest `|φ(s) - φ(t)| - d(s, t)` over state pairs.
pub fn deviation_excess(values: &[f64], d: &PseudoMetricMatrix) -> f64 {
    let n = d.n();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..n {
        for t in s + 1..n {
            worst = worst.max((values[s] - values[t]).abs() - d.get(s, t));
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessReport {
    pub formulas: usize,
    /// Largest deviation minus metric over all formulas and pairs.
    pub max_excess: f64,
    /// Largest deviation observed, for scale.
    pub max_deviation: f64,
    pub violations: usize,
    pub worst_formula: Option<String>,
    pub passed: bool,
}

/// Evaluates `count` random safe-grammar formulas and compares every pairwise
/// deviation with `d`.
pub fn soundness_probe(m: &FiniteMdp, d: &PseudoMetricMatrix, seed: u64, count: usize) -> Result<SoundnessReport> {
    if d.n() != m.n_states() {
        return Err(Error::Dimension(format!(
            "metric is {}x{}, MDP has {} states",
            d.n(),
            d.n(),
            m.n_states()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grammar = SafeGrammar::new(m.n_actions(), m.reward_bound());
    let formulas: Vec<Formula> = (0..count).map(|_| grammar.sample(&mut rng)).collect();
    soundness_of(m, d, &formulas)
}

/// As [`soundness_probe`] for a given list of closed formulas.
pub fn soundness_of(m: &FiniteMdp, d: &PseudoMetricMatrix, formulas: &[Formula]) -> Result<SoundnessReport> {
    let results: Vec<(f64, f64)> = formulas
        .par_iter()
        .map(|f| {
            let v = eval_closed(m, f)?;
            let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok((deviation_excess(&v, d), spread))
        })
        .collect::<Result<_>>()?;
    let mut report = SoundnessReport {
        formulas: formulas.len(),
        max_excess: f64::NEG_INFINITY,
        max_deviation: 0.0,
        violations: 0,
        worst_formula: None,
        passed: true,
    };
    for (f, (excess, spread)) in formulas.iter().zip(results) {
        report.max_deviation = report.max_deviation.max(spread);
        if excess > SOUNDNESS_SLACK {
            report.violations += 1;
        }
        if excess > report.max_excess {
            report.max_excess = excess;
            report.worst_formula = Some(f.to_string());
        }
    }
    if m.n_states() < 2 || formulas.is_empty() {
        report.max_excess = 0.0;
    }
    report.passed = report.violations == 0;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompletenessProbe {
    pub depth: usize,
    /// `|d_depth(s1, s2)|`.
    pub lower_bound: f64,
    /// `d(s1, s2) - lower_bound`.
    pub gap: f64,
    /// `γ^depth · max d`.
    pub bound: f64,
}

impl CompletenessProbe {
    pub fn within(&self, below: f64, above: f64) -> bool {
        self.gap >= -below && self.gap <= self.bound + above
    }
}

/// Compares the depth-`depth` mimicking evaluation with `d(s1, s2)`.
pub fn completeness_probe(
    m: &FiniteMdp,
    d: &PseudoMetricMatrix,
    s1: usize,
    s2: usize,
    depth: usize,
) -> Result<CompletenessProbe> {
    if s2 >= m.n_states() || d.n() != m.n_states() {
        return Err(Error::InvalidArgument(format!(
            "state {s2} or metric size {} inconsistent with {} states",
            d.n(),
            m.n_states()
        )));
    }
    let lower_bound = mimic_deviation(m, s1, depth)?[s2].abs();
    Ok(CompletenessProbe {
        depth,
        lower_bound,
        gap: d.get(s1, s2) - lower_bound,
        bound: m.gamma().powi(depth as i32) * d.max_entry(),
    })
}
