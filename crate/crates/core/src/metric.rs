//! The behavioral metric operator and its fixed point.
//!
//! For a candidate pseudometric `d` the operator produces
//! `K(d)(s, t) = max_a |R(s,a) - R(t,a)| + γ · W1^d(P(s,a), P(t,a))`.
//! It is a γ-contraction in the sup norm, so Picard iteration from the zero
//! pseudometric converges monotonically to the unique fixed point `d_M`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::transport::{TransportSimplex, WarmBasis};

/// Default Picard stopping tolerance on the sup-norm change between sweeps.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Slack allowed on the triangle inequality.
pub const TRIANGLE_SLACK: f64 = 1e-9;

/// A symmetric, nonnegative, zero-diagonal matrix satisfying the triangle
/// inequality. Stored densely, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoMetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PseudoMetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Wraps a dense matrix after checking shape, symmetry, the zero diagonal
    /// and nonnegativity. The triangle inequality is checked separately by
    /// [`PseudoMetricMatrix::triangle_violation`] since it is O(n³).
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "matrix has {} entries, expected {}",
                data.len(),
                n * n
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} is {}",
                    data[i * n + i]
                )));
            }
            for j in 0..n {
                let x = data[i * n + j];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidArgument(format!("entry ({i},{j}) is {x}")));
                }
                if x != data[j * n + i] {
                    return Err(Error::Asymmetric {
                        i,
                        j,
                        gap: (x - data[j * n + i]).abs(),
                    });
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Builds from the strict upper triangle, row by row.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Dimension("upper triangle length".into()));
        }
        let mut d = Self::zeros(n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                d.set(i, j, *it.next().expect("length checked"));
            }
        }
        Self::from_vec(n, d.data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Off-diagonal upper-triangle entries in row order.
    pub fn upper_entries(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| self.get(i, j)))
    }

    /// `d_∞(self, other)`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "sup distance between different sizes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Worst triangle excess `d[i,k] - d[i,j] - d[j,k]` above `slack`, if any.
    pub fn triangle_violation(&self, slack: f64) -> Option<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let dij = self.get(i, j);
                for k in 0..n {
                    let excess = self.get(i, k) - dij - self.get(j, k);
                    if excess > slack && worst.is_none_or(|w| excess > w.3) {
                        worst = Some((i, j, k, excess));
                    }
                }
            }
        }
        worst
    }

    /// Checks every pseudometric axiom within `slack`.
    pub fn is_pseudometric(&self, slack: f64) -> bool {
        let n = self.n;
        (0..n).all(|i| self.get(i, i) == 0.0)
            && (0..n).all(|i| {
                (0..n).all(|j| {
                    let x = self.get(i, j);
                    x >= 0.0 && x.is_finite() && x == self.get(j, i)
                })
            })
            && self.triangle_violation(slack).is_none()
    }

    /// CSV: a header line with `n`, then `n` comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.n).unwrap();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::InvalidArgument("missing matrix size header".into()))?;
        let mut data = Vec::with_capacity(n * n);
        for line in lines {
            for cell in line.split(',') {
                data.push(cell.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("bad matrix entry `{cell}`: {e}"))
                })?);
            }
        }
        Self::from_vec(n, data)
    }
}

/// Result of a Picard run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRun {
    pub final_metric: PseudoMetricMatrix,
    pub iterations: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
    /// `last_residual · γ / (1 − γ)`: a-posteriori distance to the fixed point.
    pub certified_error: f64,
}

impl MetricRun {
    pub fn residuals_csv(&self) -> String {
        let mut out = String::from("sweep,residual\n");
        for (k, r) in self.residuals.iter().enumerate() {
            writeln!(out, "{},{}", k + 1, r).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub tolerance: f64,
    /// Overrides the default sweep cap `10 · ⌈ln(tol) / ln(γ)⌉`.
    pub max_sweeps: Option<usize>,
    /// Evaluate state pairs on the rayon pool. Results are bit-identical
    /// either way because entries are computed independently.
    pub parallel: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: None,
            parallel: false,
        }
    }
}

impl MetricOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

/// Default sweep cap for a tolerance and discount.
pub fn default_sweep_cap(tolerance: f64, gamma: f64) -> usize {
    let per_decade = (tolerance.ln() / gamma.ln()).ceil();
    (10.0 * per_decade.max(1.0)) as usize
}

/// Sparse successor distribution.
#[derive(Debug, Clone, PartialEq)]
struct SparseRow {
    support: Vec<usize>,
    weights: Vec<f64>,
}

#[derive(Default)]
struct SweepScratch {
    simplex: TransportSimplex,
    cost: Vec<f64>,
}

/// Precomputed operator for one MDP: sparse successor rows, the list of
/// state pairs, and warm-start bases carried between sweeps.
pub struct MetricEngine<'a> {
    mdp: &'a FiniteMdp,
    rows: Vec<SparseRow>,
    pairs: Vec<(usize, usize)>,
    warm: Vec<WarmBasis>,
}

impl<'a> MetricEngine<'a> {
    pub fn new(mdp: &'a FiniteMdp) -> Self {
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        let rows = (0..n)
            .flat_map(|s| (0..m).map(move |a| (s, a)))
            .map(|(s, a)| {
                let row = mdp.transition_row(s, a);
                let support: Vec<usize> = (0..n).filter(|&t| row[t] > 0.0).collect();
                let weights = support.iter().map(|&t| row[t]).collect();
                SparseRow { support, weights }
            })
            .collect();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (s + 1..n).map(move |t| (s, t)))
            .collect();
        let warm = vec![WarmBasis::default(); pairs.len() * m];
        Self {
            mdp,
            rows,
            pairs,
            warm,
        }
    }

    pub fn mdp(&self) -> &FiniteMdp {
        self.mdp
    }

    /// One application of the operator. Warm-start bases are updated.
    pub fn apply(&mut self, d: &PseudoMetricMatrix, parallel: bool) -> Result<PseudoMetricMatrix> {
        let n = self.mdp.n_states();
        if d.n() != n {
            return Err(Error::Dimension(format!(
                "metric has size {}, MDP has {} states",
                d.n(),
                n
            )));
        }
        let m = self.mdp.n_actions();
        let mdp = self.mdp;
        let rows = &self.rows;
        let eval = |scratch: &mut SweepScratch, (&(s, t), warm): (&(usize, usize), &mut [WarmBasis])| {
            let mut best = 0.0_f64;
            for (a, basis) in warm.iter_mut().enumerate() {
                let reward_gap = (mdp.reward(s, a) - mdp.reward(t, a)).abs();
                let w = wasserstein(scratch, &rows[s * m + a], &rows[t * m + a], d, basis);
                best = best.max(reward_gap + mdp.gamma() * w);
            }
            best
        };
        let values: Vec<f64> = if parallel {
            self.pairs
                .par_iter()
                .zip(self.warm.par_chunks_mut(m))
                .map_init(SweepScratch::default, eval)
                .collect()
        } else {
            let mut scratch = SweepScratch::default();
            self.pairs
                .iter()
                .zip(self.warm.chunks_mut(m))
                .map(|item| eval(&mut scratch, item))
                .collect()
        };
        let mut next = PseudoMetricMatrix::zeros(n);
        for (&(s, t), v) in self.pairs.iter().zip(values) {
            next.set(s, t, v);
        }
        Ok(next)
    }

    /// Picard iteration from the zero pseudometric.
    pub fn solve(&mut self, opts: &MetricOptions) -> Result<MetricRun> {
        if !(opts.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                opts.tolerance
            )));
        }
        let gamma = self.mdp.gamma();
        let cap = opts
            .max_sweeps
            .unwrap_or_else(|| default_sweep_cap(opts.tolerance, gamma));
        let mut current = PseudoMetricMatrix::zeros(self.mdp.n_states());
        let mut residuals = Vec::new();
        loop {
            let next = self.apply(&current, opts.parallel)?;
            let change = next.sup_distance(&current);
            debug_assert!(
                next.triangle_violation(TRIANGLE_SLACK * (1.0 + next.max_entry())).is_none(),
                "iterate violates the triangle inequality"
            );
            residuals.push(change);
            current = next;
            if change <= opts.tolerance {
                break;
            }
            if residuals.len() >= cap {
                return Err(Error::IterationCap {
                    cap,
                    last_change: change,
                });
            }
        }
        let last = *residuals.last().expect("at least one sweep");
        Ok(MetricRun {
            final_metric: current,
            iterations: residuals.len(),
            residuals,
            certified_error: last * gamma / (1.0 - gamma),
        })
    }

    /// The first `depth` Picard iterates' endpoint `K^depth(0)`.
    pub fn iterate(&mut self, depth: usize) -> Result<PseudoMetricMatrix> {
        let mut d = PseudoMetricMatrix::zeros(self.mdp.n_states());
        for _ in 0..depth {
            d = self.apply(&d, false)?;
        }
        Ok(d)
    }
}

fn wasserstein(
    scratch: &mut SweepScratch,
    mu: &SparseRow,
    nu: &SparseRow,
    d: &PseudoMetricMatrix,
    basis: &mut WarmBasis,
) -> f64 {
    if mu == nu {
        return 0.0;
    }
    // A Dirac side admits exactly one coupling.
    if mu.support.len() == 1 {
        let x = mu.support[0];
        return nu.support.iter().zip(&nu.weights).map(|(&y, w)| w * d.get(x, y)).sum();
    }
    if nu.support.len() == 1 {
        let y = nu.support[0];
        return mu.support.iter().zip(&mu.weights).map(|(&x, w)| w * d.get(x, y)).sum();
    }
    scratch.cost.clear();
    for &x in &mu.support {
        let row = d.row(x);
        scratch.cost.extend(nu.support.iter().map(|&y| row[y]));
    }
    scratch
        .simplex
        .solve(&mu.weights, &nu.weights, &scratch.cost, Some(basis))
}

/// One application of the metric operator to `d`.
pub fn apply_operator(m: &FiniteMdp, d: &PseudoMetricMatrix) -> Result<PseudoMetricMatrix> {
    MetricEngine::new(m).apply(d, false)
}

/// The behavioral pseudometric of `m` to within `tolerance · γ / (1 − γ)`.
pub fn solve_metric(m: &FiniteMdp, tolerance: f64) -> Result<MetricRun> {
    solve_metric_with(m, &MetricOptions::with_tolerance(tolerance))
}

pub fn solve_metric_with(m: &FiniteMdp, opts: &MetricOptions) -> Result<MetricRun> {
    MetricEngine::new(m).solve(opts)
}

/// A random pseudometric on `n` points: Euclidean distances between random
/// points in the unit cube, scaled by `scale`, with some points duplicated so
/// that zero distances between distinct indices occur.
pub fn random_pseudometric(n: usize, scale: f64, rng: &mut impl Rng) -> PseudoMetricMatrix {
    let mut points: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    for i in 1..n {
        if rng.gen::<f64>() < 0.15 {
            points[i] = points[rng.gen_range(0..i)];
        }
    }
    let mut d = PseudoMetricMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let dist = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.set(i, j, scale * dist);
        }
    }
    d
}

/// Two empirical estimates of the operator's contraction factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// max over random pairs of `d_∞(K d1, K d2) / d_∞(d1, d2)`.
    pub random_pair: f64,
    /// max over random pairs of `d_∞(K d1, K d2) − γ·d_∞(d1, d2)`.
    pub max_excess: f64,
    pub pairs_used: usize,
    /// Geometric mean ratio of successive Picard residuals over the tail of
    /// a run, when a run was supplied and has enough nonzero residuals.
    pub residual_ratio: Option<f64>,
}

const MAX_DRAWS_PER_PAIR: usize = 100;

/// Estimates the contraction factor from `trials` random pseudometric pairs
/// and, when `run` is given, from its residual history.
pub fn estimate_contraction(
    m: &FiniteMdp,
    trials: usize,
    seed: u64,
    run: Option<&MetricRun>,
) -> Result<ContractionEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = m.n_states();
    let scale = {
        let bound = 2.0 * m.reward_bound() / (1.0 - m.gamma());
        if bound > 0.0 {
            bound
        } else {
            1.0
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut engine = MetricEngine::new(m);
    let mut best = 0.0_f64;
    let mut excess = f64::NEG_INFINITY;
    let mut used = 0;
    // Coincident pairs carry no information and are redrawn.
    for _ in 0..trials * MAX_DRAWS_PER_PAIR {
        if used == trials {
            break;
        }
        let d1 = random_pseudometric(n, rng.gen_range(0.0..scale), &mut rng);
        let d2 = random_pseudometric(n, rng.gen_range(0.0..scale), &mut rng);
        let denom = d1.sup_distance(&d2);
        if denom == 0.0 {
            continue;
        }
        let k1 = engine.apply(&d1, false)?;
        let k2 = engine.apply(&d2, false)?;
        let image = k1.sup_distance(&k2);
        best = best.max(image / denom);
        excess = excess.max(image - m.gamma() * denom);
        used += 1;
    }
    Ok(ContractionEstimate {
        random_pair: best,
        max_excess: if used == 0 { 0.0 } else { excess },
        pairs_used: used,
        residual_ratio: run.and_then(residual_ratio),
    })
}

/// `(r_end / r_start)^(1 / (end − start))` over the second half of the
/// strictly positive residuals.
pub fn residual_ratio(run: &MetricRun) -> Option<f64> {
    let positive: Vec<f64> = run.residuals.iter().copied().filter(|&r| r > 0.0).collect();
    if positive.len() < 2 {
        return None;
    }
    let start = (positive.len() - 1) / 2;
    let end = positive.len() - 1;
    let span = (end - start) as f64;
    Some((positive[end] / positive[start]).powf(1.0 / span))
}
