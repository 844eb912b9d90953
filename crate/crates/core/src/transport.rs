//! Exact discrete optimal transport.
//!
//! The 1-Wasserstein distance between two distributions on a finite support is
//! the optimum of a transportation linear program. [`TransportSimplex`] solves
//! that program with the transportation (MODI / stepping-stone) simplex: a
//! basis is a spanning tree of `m + k - 1` cells of the bipartite
//! source/sink graph, potentials `u_i + v_j = c_ij` are propagated along the
//! tree, and nonbasic cells with negative reduced cost enter one at a time.
//! Pricing is Dantzig's rule until a run of degenerate pivots is observed,
//! after which Bland's smallest-index rule takes over for the rest of the
//! solve, which rules out cycling.
//!
//! Zero-mass support points are dropped before the simplex runs and their
//! coupling rows/columns are zero. Dual potentials for them are recovered
//! afterwards so that the full dual vector stays feasible.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on distribution weights summing to one.
pub const DISTRIBUTION_TOL: f64 = 1e-12;
/// Primal feasibility tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Accepted primal/dual objective gap.
pub const GAP_TOL: f64 = 1e-7;

const PRICING_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {i} is {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn dirac(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::InvalidDistribution(format!(
                "dirac point {at} outside support of size {n}"
            )));
        }
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Optimal coupling with its dual certificate. Matrices are row-major `n x n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportSolution {
    pub value: f64,
    pub coupling: Vec<f64>,
    pub dual_f: Vec<f64>,
    pub dual_g: Vec<f64>,
    pub gap: f64,
}

impl TransportSolution {
    pub fn support_size(&self) -> usize {
        self.dual_f.len()
    }

    /// Pretty JSON dump for failure triage.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transport solution serializes")
    }

    /// `⟨dual_f, mu⟩ + ⟨dual_g, nu⟩`.
    pub fn dual_objective(&self, mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> f64 {
        dot(&self.dual_f, mu.weights()) + dot(&self.dual_g, nu.weights())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// |primal − dual| for a solution produced on `(mu, nu)`.
pub fn kr_gap(sol: &TransportSolution, mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> f64 {
    (sol.value - sol.dual_objective(mu, nu)).abs()
}

/// Closed-form W1 on the line `0..n` with cost `|i - j|`:
/// the L1 distance between the two CDFs. Used as a test oracle.
pub fn w1_line_oracle(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Dimension(format!(
            "supports differ: {} vs {}",
            mu.len(),
            nu.len()
        )));
    }
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for (a, b) in mu.weights().iter().zip(nu.weights()) {
        cdf_gap += a - b;
        total += cdf_gap.abs();
    }
    Ok(total)
}

/// Exact W1 between `mu` and `nu` under the `n x n` row-major `cost`.
pub fn w1_exact(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &[f64],
) -> Result<TransportSolution> {
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::Dimension(format!(
            "supports differ: {} vs {}",
            n,
            nu.len()
        )));
    }
    if cost.len() != n * n {
        return Err(Error::Dimension(format!(
            "cost has {} entries, expected {}",
            cost.len(),
            n * n
        )));
    }
    if let Some((idx, c)) = cost
        .iter()
        .enumerate()
        .find(|(_, c)| !c.is_finite() || **c < 0.0)
    {
        return Err(Error::InvalidArgument(format!(
            "cost[{}, {}] = {c} is not a finite nonnegative number",
            idx / n,
            idx % n
        )));
    }

    let src: Vec<usize> = (0..n).filter(|&i| mu.weights()[i] > 0.0).collect();
    let dst: Vec<usize> = (0..n).filter(|&j| nu.weights()[j] > 0.0).collect();
    let supply: Vec<f64> = src.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = dst.iter().map(|&j| nu.weights()[j]).collect();
    let reduced: Vec<f64> = src
        .iter()
        .flat_map(|&i| dst.iter().map(move |&j| cost[i * n + j]))
        .collect();

    let mut simplex = TransportSimplex::new();
    let value = simplex.solve(&supply, &demand, &reduced, None);

    let mut coupling = vec![0.0; n * n];
    for (&(i, j), &f) in simplex.cells().iter().zip(simplex.flows()) {
        coupling[src[i] * n + dst[j]] += f;
    }

    let mut dual_f = vec![f64::NAN; n];
    let mut dual_g = vec![f64::NAN; n];
    for (r, &i) in src.iter().enumerate() {
        dual_f[i] = simplex.source_potentials()[r];
    }
    for (c, &j) in dst.iter().enumerate() {
        dual_g[j] = simplex.sink_potentials()[c];
    }
    // Zero-mass rows take the tightest value against the supported columns,
    // then zero-mass columns against every row. Both carry zero weight in the
    // dual objective and keep f_i + g_j <= c_ij everywhere.
    for i in 0..n {
        if dual_f[i].is_nan() {
            dual_f[i] = dst
                .iter()
                .map(|&j| cost[i * n + j] - dual_g[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..n {
        if dual_g[j].is_nan() {
            dual_g[j] = (0..n)
                .map(|i| cost[i * n + j] - dual_f[i])
                .fold(f64::INFINITY, f64::min);
        }
    }

    let gap = value - (dot(&dual_f, mu.weights()) + dot(&dual_g, nu.weights()));
    Ok(TransportSolution {
        value,
        coupling,
        dual_f,
        dual_g,
        gap,
    })
}

/// A basis of the transportation simplex in reduced (positive-mass)
/// coordinates. An optimal basis stays primal feasible when only the costs
/// change, so it is a valid warm start for the next solve on the same
/// marginals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WarmBasis {
    cells: Vec<(u32, u32)>,
}

impl WarmBasis {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn clear(&mut self) {
        self.cells.clear();
    }
}

/// Reusable working memory for transportation simplex solves. One instance
/// per thread; each call is independent.
#[derive(Debug, Default)]
pub struct TransportSimplex {
    m: usize,
    k: usize,
    cost: Vec<f64>,
    cells: Vec<(usize, usize)>,
    flows: Vec<f64>,
    in_basis: Vec<bool>,
    u: Vec<f64>,
    v: Vec<f64>,
    // Tree over nodes 0..m (sources) and m..m+k (sinks).
    adj_head: Vec<usize>,
    adj_next: Vec<usize>,
    adj_to: Vec<usize>,
    adj_edge: Vec<usize>,
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    visited: Vec<bool>,
    queue: Vec<usize>,
    residual: Vec<f64>,
    degree: Vec<usize>,
    edge_done: Vec<bool>,
    cycle: Vec<usize>,
    scratch: Vec<usize>,
    pivots: usize,
    used_bland: bool,
    value: f64,
    dual_value: f64,
}

const NONE: usize = usize::MAX;

impl TransportSimplex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves the balanced transportation problem with strictly positive
    /// `supply` (length m), `demand` (length k) and row-major `cost` (m x k).
    /// Returns the optimal objective. When `warm` is given it is used as the
    /// starting basis if still feasible, and overwritten with the optimal one.
    pub fn solve(
        &mut self,
        supply: &[f64],
        demand: &[f64],
        cost: &[f64],
        warm: Option<&mut WarmBasis>,
    ) -> f64 {
        let (m, k) = (supply.len(), demand.len());
        assert!(m > 0 && k > 0, "transport problem needs nonempty supports");
        assert_eq!(cost.len(), m * k, "cost shape");
        self.m = m;
        self.k = k;
        self.cost.clear();
        self.cost.extend_from_slice(cost);
        self.pivots = 0;
        self.used_bland = false;

        let warm_ok = match warm.as_deref() {
            Some(w) if !w.is_empty() => self.load_basis(w, supply, demand),
            _ => false,
        };
        if !warm_ok {
            self.northwest_corner(supply, demand);
            let ok = self.compute_flows(supply, demand);
            debug_assert!(ok, "northwest corner basis is a spanning tree");
        }

        self.optimize();

        self.value = self
            .cells
            .iter()
            .zip(&self.flows)
            .map(|(&(i, j), f)| f * self.cost[i * k + j])
            .sum();
        self.dual_value = dot(supply, &self.u) + dot(demand, &self.v);

        if let Some(w) = warm {
            w.cells.clear();
            w.cells
                .extend(self.cells.iter().map(|&(i, j)| (i as u32, j as u32)));
        }
        self.value
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Primal minus dual objective of the last solve.
    pub fn gap(&self) -> f64 {
        self.value - self.dual_value
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    pub fn source_potentials(&self) -> &[f64] {
        &self.u
    }

    pub fn sink_potentials(&self) -> &[f64] {
        &self.v
    }

    /// Pivots performed by the last solve.
    pub fn pivots(&self) -> usize {
        self.pivots
    }

    /// Whether the last solve switched to Bland's rule.
    pub fn used_bland(&self) -> bool {
        self.used_bland
    }

    fn reset_basis_flags(&mut self) {
        self.in_basis.clear();
        self.in_basis.resize(self.m * self.k, false);
    }

    fn northwest_corner(&mut self, supply: &[f64], demand: &[f64]) {
        let (m, k) = (self.m, self.k);
        self.reset_basis_flags();
        self.cells.clear();
        let (mut i, mut j) = (0, 0);
        let (mut rs, mut rd) = (supply[0], demand[0]);
        loop {
            let x = rs.min(rd);
            self.cells.push((i, j));
            self.in_basis[i * k + j] = true;
            if i == m - 1 && j == k - 1 {
                break;
            }
            if (rs <= rd && i < m - 1) || j == k - 1 {
                rd -= x;
                i += 1;
                rs = supply[i];
            } else {
                rs -= x;
                j += 1;
                rd = demand[j];
            }
        }
        debug_assert_eq!(self.cells.len(), m + k - 1);
    }

    fn load_basis(&mut self, warm: &WarmBasis, supply: &[f64], demand: &[f64]) -> bool {
        let (m, k) = (self.m, self.k);
        if warm.cells.len() != m + k - 1 {
            return false;
        }
        self.reset_basis_flags();
        self.cells.clear();
        for &(i, j) in &warm.cells {
            let (i, j) = (i as usize, j as usize);
            if i >= m || j >= k || self.in_basis[i * k + j] {
                return false;
            }
            self.in_basis[i * k + j] = true;
            self.cells.push((i, j));
        }
        self.compute_flows(supply, demand)
    }

    /// Basic flows are determined by the tree: peel leaves, each leaf's
    /// remaining mass goes through its unique edge. Returns false if the
    /// cells do not form a spanning tree or the flows are infeasible.
    fn compute_flows(&mut self, supply: &[f64], demand: &[f64]) -> bool {
        let (m, k) = (self.m, self.k);
        let nodes = m + k;
        self.build_adjacency();
        self.residual.clear();
        self.residual.extend_from_slice(supply);
        self.residual.extend_from_slice(demand);
        self.degree.clear();
        self.degree.resize(nodes, 0);
        for &(i, j) in &self.cells {
            self.degree[i] += 1;
            self.degree[m + j] += 1;
        }
        self.edge_done.clear();
        self.edge_done.resize(self.cells.len(), false);
        self.flows.clear();
        self.flows.resize(self.cells.len(), 0.0);

        self.queue.clear();
        self.queue
            .extend((0..nodes).filter(|&x| self.degree[x] == 1));
        let mut assigned = 0;
        let mut head = 0;
        while head < self.queue.len() {
            let leaf = self.queue[head];
            head += 1;
            if self.degree[leaf] != 1 {
                continue;
            }
            let mut e = self.adj_head[leaf];
            let mut found = NONE;
            while e != NONE {
                if !self.edge_done[self.adj_edge[e]] {
                    found = e;
                    break;
                }
                e = self.adj_next[e];
            }
            if found == NONE {
                return false;
            }
            let edge = self.adj_edge[found];
            let other = self.adj_to[found];
            let f = self.residual[leaf];
            self.flows[edge] = f;
            self.edge_done[edge] = true;
            assigned += 1;
            self.residual[leaf] = 0.0;
            self.residual[other] -= f;
            self.degree[leaf] = 0;
            self.degree[other] -= 1;
            if self.degree[other] == 1 {
                self.queue.push(other);
            }
        }
        if assigned != self.cells.len() {
            return false;
        }
        for f in &mut self.flows {
            if *f < 0.0 {
                if *f < -MARGINAL_TOL {
                    return false;
                }
                *f = 0.0;
            }
        }
        true
    }

    fn build_adjacency(&mut self) {
        let nodes = self.m + self.k;
        self.adj_head.clear();
        self.adj_head.resize(nodes, NONE);
        self.adj_next.clear();
        self.adj_to.clear();
        self.adj_edge.clear();
        for (e, &(i, j)) in self.cells.iter().enumerate() {
            let sink = self.m + j;
            for (from, to) in [(i, sink), (sink, i)] {
                self.adj_next.push(self.adj_head[from]);
                self.adj_to.push(to);
                self.adj_edge.push(e);
                self.adj_head[from] = self.adj_next.len() - 1;
            }
        }
    }

    /// Potentials with `u_0 = 0` plus parent pointers rooted at source 0.
    fn compute_potentials(&mut self) {
        let (m, k) = (self.m, self.k);
        let nodes = m + k;
        self.build_adjacency();
        self.u.clear();
        self.u.resize(m, 0.0);
        self.v.clear();
        self.v.resize(k, 0.0);
        self.parent.clear();
        self.parent.resize(nodes, NONE);
        self.parent_edge.clear();
        self.parent_edge.resize(nodes, NONE);
        self.depth.clear();
        self.depth.resize(nodes, 0);
        self.visited.clear();
        self.visited.resize(nodes, false);
        self.queue.clear();
        self.queue.push(0);
        self.visited[0] = true;
        let mut head = 0;
        while head < self.queue.len() {
            let x = self.queue[head];
            head += 1;
            let mut e = self.adj_head[x];
            while e != NONE {
                let y = self.adj_to[e];
                if !self.visited[y] {
                    self.visited[y] = true;
                    let edge = self.adj_edge[e];
                    let (i, j) = self.cells[edge];
                    let c = self.cost[i * k + j];
                    if x < m {
                        self.v[y - m] = c - self.u[x];
                    } else {
                        self.u[y] = c - self.v[x - m];
                    }
                    self.parent[y] = x;
                    self.parent_edge[y] = edge;
                    self.depth[y] = self.depth[x] + 1;
                    self.queue.push(y);
                }
                e = self.adj_next[e];
            }
        }
        debug_assert!(self.visited.iter().all(|&v| v), "basis is spanning");
    }

    fn optimize(&mut self) {
        let (m, k) = (self.m, self.k);
        let max_cost = self.cost.iter().fold(1.0_f64, |a, &c| a.max(c.abs()));
        let tol = PRICING_REL_TOL * max_cost;
        let degenerate_limit = 2 * (m + k);
        let pivot_cap = 100 * m * k + 1000;
        let mut degenerate_run = 0;
        let mut bland = false;

        loop {
            self.compute_potentials();
            if m == 1 || k == 1 {
                // Only one feasible coupling.
                return;
            }
            let Some((ei, ej)) = self.price(tol, bland) else {
                return;
            };
            if self.pivots >= pivot_cap {
                // Unreachable with Bland's rule in exact arithmetic; the dual
                // certificate exposes any remaining suboptimality.
                return;
            }
            self.pivots += 1;
            let theta = self.pivot(ei, ej);
            if theta <= 0.0 {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit && !bland {
                    bland = true;
                    self.used_bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
    }

    fn price(&self, tol: f64, bland: bool) -> Option<(usize, usize)> {
        let k = self.k;
        let mut best = None;
        let mut best_rc = -tol;
        for i in 0..self.m {
            let ui = self.u[i];
            let row = &self.cost[i * k..(i + 1) * k];
            for (j, &c) in row.iter().enumerate() {
                if self.in_basis[i * k + j] {
                    continue;
                }
                let rc = c - ui - self.v[j];
                if rc < best_rc {
                    if bland {
                        return Some((i, j));
                    }
                    best_rc = rc;
                    best = Some((i, j));
                }
            }
        }
        best
    }

    /// Brings cell `(ei, ej)` into the basis; returns the step length.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let (m, k) = (self.m, self.k);
        // Tree path from sink node m+ej to source node ei.
        self.cycle.clear();
        self.scratch.clear();
        let (mut x, mut y) = (m + ej, ei);
        while self.depth[x] > self.depth[y] {
            self.cycle.push(self.parent_edge[x]);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            self.scratch.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        while x != y {
            self.cycle.push(self.parent_edge[x]);
            x = self.parent[x];
            self.scratch.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        self.cycle.extend(self.scratch.iter().rev());

        // Edges at even positions lose mass, odd positions gain it.
        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        let mut leaving_key = usize::MAX;
        for (pos, &edge) in self.cycle.iter().enumerate() {
            if pos % 2 != 0 {
                continue;
            }
            let f = self.flows[edge];
            let (i, j) = self.cells[edge];
            let key = i * k + j;
            if f < theta || (f == theta && key < leaving_key) {
                theta = f;
                leaving = edge;
                leaving_key = key;
            }
        }
        debug_assert!(leaving != NONE);
        for (pos, &edge) in self.cycle.iter().enumerate() {
            if pos % 2 == 0 {
                self.flows[edge] = (self.flows[edge] - theta).max(0.0);
            } else {
                self.flows[edge] += theta;
            }
        }
        let (li, lj) = self.cells[leaving];
        self.in_basis[li * k + lj] = false;
        self.in_basis[ei * k + ej] = true;
        self.cells[leaving] = (ei, ej);
        self.flows[leaving] = theta;
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(w: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(w.to_vec()).unwrap()
    }

    fn line_cost(n: usize) -> Vec<f64> {
        (0..n * n)
            .map(|x| (x / n).abs_diff(x % n) as f64)
            .collect()
    }

    fn random_dist(rng: &mut impl Rng, n: usize, sparsity: f64) -> DiscreteDistribution {
        let mut w: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[rng.gen_range(0..n)] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        // Renormalization leaves the sum within a few ulps of 1.
        DiscreteDistribution::new(w).unwrap()
    }

    fn check_certificate(sol: &TransportSolution, mu: &DiscreteDistribution, nu: &DiscreteDistribution, cost: &[f64]) {
        let n = mu.len();
        for i in 0..n {
            let row: f64 = sol.coupling[i * n..(i + 1) * n].iter().sum();
            assert!((row - mu.weights()[i]).abs() <= MARGINAL_TOL, "row {i}");
            let col: f64 = (0..n).map(|r| sol.coupling[r * n + i]).sum();
            assert!((col - nu.weights()[i]).abs() <= MARGINAL_TOL, "col {i}");
        }
        assert!(sol.coupling.iter().all(|&p| p >= 0.0));
        for i in 0..n {
            for j in 0..n {
                assert!(sol.dual_f[i] + sol.dual_g[j] <= cost[i * n + j] + 1e-9, "dual ({i},{j})");
            }
        }
        let primal: f64 = sol.coupling.iter().zip(cost).map(|(p, c)| p * c).sum();
        assert!((primal - sol.value).abs() < 1e-9);
        assert!(kr_gap(sol, mu, nu) <= GAP_TOL);
        assert!(sol.gap.abs() <= GAP_TOL);
    }

    #[test]
    fn dirac_to_dirac_is_ground_cost() {
        let cost = vec![0.0, 2.0, 5.0, 2.0, 0.0, 3.0, 5.0, 3.0, 0.0];
        let mu = DiscreteDistribution::dirac(3, 0).unwrap();
        let nu = DiscreteDistribution::dirac(3, 2).unwrap();
        let sol = w1_exact(&mu, &nu, &cost).unwrap();
        assert_eq!(sol.value, 5.0);
        check_certificate(&sol, &mu, &nu, &cost);
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let mu = dist(&[0.2, 0.3, 0.0, 0.5]);
        let cost = line_cost(4);
        let sol = w1_exact(&mu, &mu, &cost).unwrap();
        assert_eq!(sol.value, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { mu.weights()[i] } else { 0.0 };
                assert!((sol.coupling[i * 4 + j] - expect).abs() < 1e-15);
            }
        }
        assert_eq!(sol.dual_objective(&mu, &mu), 0.0);
        check_certificate(&sol, &mu, &mu, &cost);
    }

    #[test]
    fn shifted_half_mass_on_a_line() {
        let mu = dist(&[0.5, 0.5, 0.0]);
        let nu = dist(&[0.0, 0.5, 0.5]);
        let sol = w1_exact(&mu, &nu, &line_cost(3)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((w1_line_oracle(&mu, &nu).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn line_oracle_examples() {
        let mu = dist(&[0.1, 0.6, 0.3]);
        assert_eq!(w1_line_oracle(&mu, &mu).unwrap(), 0.0);
        let a = DiscreteDistribution::dirac(4, 0).unwrap();
        let b = DiscreteDistribution::dirac(4, 3).unwrap();
        assert_eq!(w1_line_oracle(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        let mu = dist(&[0.5, 0.5]);
        assert!(w1_exact(&mu, &mu, &[0.0, -1.0, 1.0, 0.0]).is_err());
        assert!(w1_exact(&mu, &mu, &[0.0, 1.0, 1.0]).is_err());
        assert!(w1_exact(&mu, &dist(&[1.0]), &[0.0; 4]).is_err());
    }

    #[test]
    fn random_eight_point_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let mu = random_dist(&mut rng, 8, 0.3);
            let nu = random_dist(&mut rng, 8, 0.3);
            let cost: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..10.0)).collect();
            let sol = w1_exact(&mu, &nu, &cost).unwrap();
            check_certificate(&sol, &mu, &nu, &cost);
        }
    }

    #[test]
    fn degenerate_integer_instances_terminate() {
        // Uniform marginals with integer costs produce heavy degeneracy.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [5usize, 12, 20] {
            let w = vec![1.0 / n as f64; n];
            let mu = dist(&w);
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0..4) as f64).collect();
                let sol = w1_exact(&mu, &mu, &cost).unwrap();
                check_certificate(&sol, &mu, &mu, &cost);
            }
        }
    }

    #[test]
    fn warm_start_matches_cold_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut warm = WarmBasis::default();
        let mut simplex = TransportSimplex::new();
        let supply = [0.2, 0.3, 0.5];
        let demand = [0.1, 0.1, 0.4, 0.4];
        for _ in 0..50 {
            let cost: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..3.0)).collect();
            let warm_value = simplex.solve(&supply, &demand, &cost, Some(&mut warm));
            let cold_value = TransportSimplex::new().solve(&supply, &demand, &cost, None);
            assert!((warm_value - cold_value).abs() < 1e-12);
            assert!(simplex.gap().abs() < 1e-12);
        }
    }

    #[test]
    fn stale_warm_basis_is_ignored() {
        let mut warm = WarmBasis {
            cells: vec![(0, 0), (0, 1), (5, 5)],
        };
        let v = TransportSimplex::new().solve(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 1.0, 1.0, 0.0], Some(&mut warm));
        assert_eq!(v, 0.0);
        assert_eq!(warm.cells.len(), 3);
    }

    proptest! {
        #[test]
        fn transposed_problem_has_same_value(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = random_dist(&mut rng, n, 0.25);
            let nu = random_dist(&mut rng, n, 0.25);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let transposed: Vec<f64> = (0..n * n).map(|x| cost[(x % n) * n + x / n]).collect();
            let a = w1_exact(&mu, &nu, &cost).unwrap();
            let b = w1_exact(&nu, &mu, &transposed).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-9);
        }

        #[test]
        fn ground_metric_sensitivity(seed in any::<u64>(), n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = random_dist(&mut rng, n, 0.2);
            let nu = random_dist(&mut rng, n, 0.2);
            let c1: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let c2: Vec<f64> = c1.iter().map(|c| (c + rng.gen_range(-1.0..1.0)).max(0.0)).collect();
            let sup = c1.iter().zip(&c2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let w1 = w1_exact(&mu, &nu, &c1).unwrap().value;
            let w2 = w1_exact(&mu, &nu, &c2).unwrap().value;
            prop_assert!((w1 - w2).abs() <= sup + 1e-9);
        }

        #[test]
        fn lifted_metric_triangle(seed in any::<u64>(), n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            let cost: Vec<f64> = (0..n * n)
                .map(|x| {
                    let (a, b) = (pts[x / n], pts[x % n]);
                    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
                })
                .collect();
            let d: Vec<_> = (0..3).map(|_| random_dist(&mut rng, n, 0.3)).collect();
            let w = |a: &DiscreteDistribution, b: &DiscreteDistribution| w1_exact(a, b, &cost).unwrap().value;
            prop_assert!(w(&d[0], &d[2]) <= w(&d[0], &d[1]) + w(&d[1], &d[2]) + 1e-8);
        }
    }
}
