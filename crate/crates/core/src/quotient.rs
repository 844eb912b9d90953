//! Canonical ε-quotients.
//!
//! States are grouped by the equivalence closure of `d(s, t) <= ε`, classes
//! are numbered by their smallest member, and the quotient metric is the
//! shortest-path closure of the between-class minimum distances.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metric::{solve_metric, PseudoMetricMatrix, DEFAULT_TOLERANCE};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if the two sets were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Assignment of states to classes `0..k`, numbered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    /// Canonicalizes arbitrary labels: classes are renumbered in order of
    /// their smallest member.
    pub fn from_labels<T: PartialEq>(labels: &[T]) -> Self {
        let mut class_of = vec![usize::MAX; labels.len()];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for s in 0..labels.len() {
            if class_of[s] != usize::MAX {
                continue;
            }
            let id = members.len();
            let group: Vec<usize> = (s..labels.len()).filter(|&t| labels[t] == labels[s]).collect();
            for &t in &group {
                class_of[t] = id;
            }
            members.push(group);
        }
        Self { class_of, members }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            class_of: (0..n).collect(),
            members: (0..n).map(|s| vec![s]).collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.class_of.len()
    }

    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    pub fn class_of(&self, s: usize) -> usize {
        self.class_of[s]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.class_of
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// `k / n`.
    pub fn compression_ratio(&self) -> f64 {
        self.n_classes() as f64 / self.n_states() as f64
    }

    /// Whether every class of `self` lies inside a class of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.n_states() == coarser.n_states()
            && self.members.iter().all(|group| {
                let c = coarser.class_of(group[0]);
                group.iter().all(|&s| coarser.class_of(s) == c)
            })
    }
}

/// Connected components of the graph `{(s, t) : d(s, t) <= ε}`.
pub fn epsilon_classes(d: &PseudoMetricMatrix, epsilon: f64) -> Result<Partition> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let n = d.n();
    let mut uf = UnionFind::new(n);
    for s in 0..n {
        for t in s + 1..n {
            if d.get(s, t) <= epsilon {
                uf.union(s, t);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|s| uf.find(s)).collect();
    Ok(Partition::from_labels(&roots))
}

/// BFS certificate for a partition: each class is connected by ε-steps and no
/// ε-step crosses classes.
pub fn verify_partition(d: &PseudoMetricMatrix, partition: &Partition, epsilon: f64) -> bool {
    let n = d.n();
    if partition.n_states() != n {
        return false;
    }
    for s in 0..n {
        for t in 0..n {
            if d.get(s, t) <= epsilon && partition.class_of(s) != partition.class_of(t) {
                return false;
            }
        }
    }
    partition.classes().iter().all(|group| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([group[0]]);
        seen[group[0]] = true;
        let mut reached = 1;
        while let Some(x) = queue.pop_front() {
            for &y in group {
                if !seen[y] && d.get(x, y) <= epsilon {
                    seen[y] = true;
                    reached += 1;
                    queue.push_back(y);
                }
            }
        }
        reached == group.len()
    })
}

/// Between-class minimum distances and their shortest-path closure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientMetric {
    /// `D_min[c1, c2] = min_{x ∈ c1, y ∈ c2} d(x, y)`, row-major `k x k`.
    pub d_min: Vec<f64>,
    /// Shortest-path closure of `d_min`; always a pseudometric.
    pub closure: PseudoMetricMatrix,
}

pub fn quotient_metric(d: &PseudoMetricMatrix, partition: &Partition) -> Result<QuotientMetric> {
    if partition.n_states() != d.n() {
        return Err(Error::Dimension(format!(
            "partition covers {} states, metric has {}",
            partition.n_states(),
            d.n()
        )));
    }
    let k = partition.n_classes();
    let mut d_min = vec![f64::INFINITY; k * k];
    for c in 0..k {
        d_min[c * k + c] = 0.0;
    }
    let n = d.n();
    for x in 0..n {
        let cx = partition.class_of(x);
        for y in x + 1..n {
            let cy = partition.class_of(y);
            if cx == cy {
                continue;
            }
            let v = d.get(x, y);
            if v < d_min[cx * k + cy] {
                d_min[cx * k + cy] = v;
                d_min[cy * k + cx] = v;
            }
        }
    }
    let mut closed = d_min.clone();
    for via in 0..k {
        for i in 0..k {
            let a = closed[i * k + via];
            for j in 0..k {
                let through = a + closed[via * k + j];
                if through < closed[i * k + j] {
                    closed[i * k + j] = through;
                }
            }
        }
    }
    // Symmetrize against rounding in the relaxation order.
    for i in 0..k {
        for j in i + 1..k {
            let v = closed[i * k + j].min(closed[j * k + i]);
            closed[i * k + j] = v;
            closed[j * k + i] = v;
        }
    }
    Ok(QuotientMetric {
        d_min,
        closure: PseudoMetricMatrix::from_vec(k, closed)?,
    })
}

/// The canonical ε-quotient of a pseudometric state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonQuotient {
    pub epsilon: f64,
    pub partition: Partition,
    pub d_min: Vec<f64>,
    pub d_q: PseudoMetricMatrix,
    pub intra_diameters: Vec<f64>,
}

impl EpsilonQuotient {
    pub fn build(d: &PseudoMetricMatrix, epsilon: f64) -> Result<Self> {
        let partition = epsilon_classes(d, epsilon)?;
        let QuotientMetric { d_min, closure } = quotient_metric(d, &partition)?;
        let intra_diameters = intra_diameters(d, &partition);
        Ok(Self {
            epsilon,
            partition,
            d_min,
            d_q: closure,
            intra_diameters,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.partition.n_classes()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.partition.compression_ratio()
    }

    pub fn max_intra_diameter(&self) -> f64 {
        self.intra_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// JSON export: epsilon, classes, d_q, intra-class diameters and the
    /// compression ratio.
    pub fn to_json(&self) -> serde_json::Value {
        let k = self.n_classes();
        serde_json::json!({
            "epsilon": self.epsilon,
            "classes": self.partition.classes(),
            "d_q": (0..k).map(|c| self.d_q.row(c).to_vec()).collect::<Vec<_>>(),
            "d_min": (0..k).map(|c| self.d_min[c * k..(c + 1) * k].to_vec()).collect::<Vec<_>>(),
            "intra_diameters": self.intra_diameters,
            "compression_ratio": self.compression_ratio(),
        })
    }
}

/// Per-class maximum of `d` between members.
pub fn intra_diameters(d: &PseudoMetricMatrix, partition: &Partition) -> Vec<f64> {
    partition
        .classes()
        .iter()
        .map(|group| {
            let mut diam = 0.0_f64;
            for (i, &x) in group.iter().enumerate() {
                for &y in &group[i + 1..] {
                    diam = diam.max(d.get(x, y));
                }
            }
            diam
        })
        .collect()
}

/// Matrix on states: `p[s, t] = d_q[class(s), class(t)]`.
pub fn pullback_metric(q: &EpsilonQuotient, n: usize) -> Result<PseudoMetricMatrix> {
    if q.partition.n_states() != n {
        return Err(Error::Dimension(format!(
            "quotient covers {} states, asked for {n}",
            q.partition.n_states()
        )));
    }
    let mut p = PseudoMetricMatrix::zeros(n);
    for s in 0..n {
        for t in s + 1..n {
            p.set(
                s,
                t,
                q.d_q.get(q.partition.class_of(s), q.partition.class_of(t)),
            );
        }
    }
    Ok(p)
}

/// How members of a class are weighted when aggregating.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    Uniform,
    /// Nonnegative per-state weights; normalized within each class.
    Custom(Vec<f64>),
}

/// The aggregated MDP over classes: rewards and class-to-class transition
/// masses are weighted means over members.
pub fn build_abstract_mdp(
    m: &FiniteMdp,
    partition: &Partition,
    weighting: &Weighting,
) -> Result<FiniteMdp> {
    let n = m.n_states();
    if partition.n_states() != n {
        return Err(Error::Dimension(format!(
            "partition covers {} states, MDP has {n}",
            partition.n_states()
        )));
    }
    let weights: Vec<f64> = match weighting {
        Weighting::Uniform => partition
            .assignment()
            .iter()
            .map(|&c| 1.0 / partition.members(c).len() as f64)
            .collect(),
        Weighting::Custom(w) => {
            if w.len() != n || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument(
                    "custom weights must be finite, nonnegative, one per state".into(),
                ));
            }
            let mut out = vec![0.0; n];
            for group in partition.classes() {
                let total: f64 = group.iter().map(|&s| w[s]).sum();
                if total <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "class {:?} has zero total weight",
                        group
                    )));
                }
                for &s in group {
                    out[s] = w[s] / total;
                }
            }
            out
        }
    };
    let k = partition.n_classes();
    let actions = m.n_actions();
    let mut rewards = vec![0.0; k * actions];
    let mut transitions = vec![0.0; k * actions * k];
    for (c, group) in partition.classes().iter().enumerate() {
        for a in 0..actions {
            let row = &mut transitions[(c * actions + a) * k..(c * actions + a + 1) * k];
            for &x in group {
                let w = weights[x];
                rewards[c * actions + a] += w * m.reward(x, a);
                for (y, &p) in m.transition_row(x, a).iter().enumerate() {
                    row[partition.class_of(y)] += w * p;
                }
            }
        }
    }
    FiniteMdp::from_parts(k, actions, transitions, rewards, m.gamma())
}

/// True iff `phi` is constant on every class, i.e. it factors through the
/// canonical projection.
pub fn check_factorization<T: PartialEq>(q: &EpsilonQuotient, phi: &[T]) -> bool {
    phi.len() == q.partition.n_states()
        && q.partition
            .classes()
            .iter()
            .all(|group| group.iter().all(|&s| phi[s] == phi[group[0]]))
}

/// Outcome of re-quotienting the quotient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdempotenceReport {
    pub epsilon: f64,
    pub classes: usize,
    /// Re-quotienting `(S_ε, d_q)` at ε keeps every class separate.
    pub bijective: bool,
    /// `d_∞` between `d_q` and the re-quotiented metric.
    pub drift: f64,
    pub passed: bool,
    /// Aggregated-model round trip, reported for information.
    pub model_roundtrip: ModelRoundTrip,
}

/// Quotient → aggregated MDP → its own metric → quotient again.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRoundTrip {
    pub classes_after: usize,
    pub partition_stable: bool,
    /// `d_∞` between the aggregated model's behavioral metric and `d_q`.
    pub metric_deviation: f64,
}

/// Quotients `d` at ε, quotients the result at ε again, and compares.
/// Also runs the aggregated-model round trip on `m`.
pub fn idempotence_check_with_metric(
    m: &FiniteMdp,
    d: &PseudoMetricMatrix,
    epsilon: f64,
    tolerance: f64,
) -> Result<IdempotenceReport> {
    let first = EpsilonQuotient::build(d, epsilon)?;
    let second = EpsilonQuotient::build(&first.d_q, epsilon)?;
    let k = first.n_classes();
    let bijective = second.n_classes() == k
        && (0..k).all(|c| second.partition.class_of(c) == c);
    let drift = if bijective {
        second.d_q.sup_distance(&first.d_q)
    } else {
        f64::INFINITY
    };

    let abstract_mdp = build_abstract_mdp(m, &first.partition, &Weighting::Uniform)?;
    let abstract_run = solve_metric(&abstract_mdp, DEFAULT_TOLERANCE)?;
    let requotient = EpsilonQuotient::build(&abstract_run.final_metric, epsilon)?;
    let model_roundtrip = ModelRoundTrip {
        classes_after: requotient.n_classes(),
        partition_stable: requotient.n_classes() == k,
        metric_deviation: abstract_run.final_metric.sup_distance(&first.d_q),
    };

    Ok(IdempotenceReport {
        epsilon,
        classes: k,
        bijective,
        drift,
        passed: bijective && drift <= tolerance,
        model_roundtrip,
    })
}

/// Computes the behavioral metric of `m` and runs
/// [`idempotence_check_with_metric`].
pub fn idempotence_check(m: &FiniteMdp, epsilon: f64, tolerance: f64) -> Result<IdempotenceReport> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let run = solve_metric(m, DEFAULT_TOLERANCE)?;
    idempotence_check_with_metric(m, &run.final_metric, epsilon, tolerance)
}

/// Pull the quotient metric back to states, quotient that again, pull back
/// once more, and compare the two pulled-back metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackwardStabilityReport {
    pub epsilon: f64,
    pub classes: usize,
    pub partition_preserved: bool,
    /// `d_∞` between the first and second pull-backs.
    pub drift: f64,
    /// `d_∞` between the pull-back and `d`, for information.
    pub reconstruction_error: f64,
    /// `min_{x∈c1,y∈c2} d(x, y) >= d_q[c1, c2]` on every class pair.
    pub non_expansive: bool,
    pub passed: bool,
}

pub fn backward_stability_check(
    d: &PseudoMetricMatrix,
    epsilon: f64,
    tolerance: f64,
) -> Result<BackwardStabilityReport> {
    let n = d.n();
    let first = EpsilonQuotient::build(d, epsilon)?;
    let p1 = pullback_metric(&first, n)?;
    let second = EpsilonQuotient::build(&p1, epsilon)?;
    let p2 = pullback_metric(&second, n)?;
    let partition_preserved = second.partition == first.partition;
    let drift = p2.sup_distance(&p1);
    let k = first.n_classes();
    let non_expansive = (0..k * k).all(|idx| first.d_q.as_slice()[idx] <= first.d_min[idx] + 1e-9);
    Ok(BackwardStabilityReport {
        epsilon,
        classes: k,
        partition_preserved,
        drift,
        reconstruction_error: p1.sup_distance(d),
        non_expansive,
        passed: partition_preserved && drift <= tolerance && non_expansive,
    })
}
