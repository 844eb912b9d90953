//! Finite discounted MDPs: the model type, validation, the standard
//! environments used by the experiments, action reindexing and the JSON
//! file format.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on transition row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite MDP with `n_states` states, `n_actions` actions, a dense
/// transition tensor indexed `(s, a, s')` and rewards indexed `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

impl FiniteMdp {
    /// Builds a model from flat row-major buffers. Only the shape is checked
    /// here; use [`validate_mdp`] for the probabilistic invariants.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(format!(
                "need at least one state and one action, got {n_states}x{n_actions}"
            )));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward matrix has {} entries, expected {}",
                rewards.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    /// Like [`FiniteMdp::from_parts`] but rejects models that fail validation.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let m = Self::from_parts(n_states, n_actions, transitions, rewards, gamma)?;
        let report = validate_mdp(&m);
        if !report.ok {
            return Err(Error::InvalidModel(report.to_string()));
        }
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Successor distribution `P(s, a, .)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// The recorded reward bound `R_max = max |R(s, a)|`.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0_f64, |acc, r| acc.max(r.abs()))
    }

    /// Same dynamics, different reward matrix.
    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            rewards,
            self.gamma,
        )
    }

    /// Same model with discount `gamma`. Not validated; see [`validate_mdp`].
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RowSum,
    NegativeProbability,
    NonFiniteProbability,
    NonFiniteReward,
    Discount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// `(state, action, next_state)` where applicable.
    pub location: (Option<usize>, Option<usize>, Option<usize>),
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(5) {
            write!(f, "; {:?} at {:?} ({:e})", v.kind, v.location, v.magnitude)?;
        }
        Ok(())
    }
}

/// Checks row-stochasticity, nonnegativity, finiteness and the discount range.
pub fn validate_mdp(m: &FiniteMdp) -> ValidationReport {
    let mut violations = Vec::new();
    if !(m.gamma > 0.0 && m.gamma < 1.0) {
        violations.push(Violation {
            kind: ViolationKind::Discount,
            location: (None, None, None),
            magnitude: m.gamma,
        });
    }
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            let row = m.transition_row(s, a);
            let mut sum = 0.0;
            let mut finite = true;
            for (t, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    finite = false;
                    violations.push(Violation {
                        kind: ViolationKind::NonFiniteProbability,
                        location: (Some(s), Some(a), Some(t)),
                        magnitude: p,
                    });
                    continue;
                }
                if p < 0.0 {
                    violations.push(Violation {
                        kind: ViolationKind::NegativeProbability,
                        location: (Some(s), Some(a), Some(t)),
                        magnitude: -p,
                    });
                }
                sum += p;
            }
            if finite && (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation {
                    kind: ViolationKind::RowSum,
                    location: (Some(s), Some(a), None),
                    magnitude: (sum - 1.0).abs(),
                });
            }
            let r = m.reward(s, a);
            if !r.is_finite() {
                violations.push(Violation {
                    kind: ViolationKind::NonFiniteReward,
                    location: (Some(s), Some(a), None),
                    magnitude: r,
                });
            }
        }
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// The three-state, single-action chain `s1 -> s2 -> s3 -> s3` with
/// rewards `(0, 1, 0)` and discount 0.9.
pub fn make_chain_example() -> FiniteMdp {
    #[rustfmt::skip]
    let transitions = vec![
        0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,
        0.0, 0.0, 1.0,
    ];
    FiniteMdp::from_parts(3, 1, transitions, vec![0.0, 1.0, 0.0], 0.9)
        .expect("chain example is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub side: usize,
    pub slip: f64,
    pub gamma: f64,
    pub goal: usize,
    pub goal_reward: f64,
}

impl GridWorldSpec {
    /// Goal in the last cell, unit reward.
    pub fn new(side: usize, slip: f64, gamma: f64) -> Self {
        Self {
            side,
            slip,
            gamma,
            goal: (side * side).saturating_sub(1),
            goal_reward: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::InvalidArgument("grid side must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::InvalidArgument(format!(
                "slip {} outside [0, 1]",
                self.slip
            )));
        }
        if self.goal >= self.side * self.side {
            return Err(Error::InvalidArgument(format!(
                "goal cell {} outside a {}x{} grid",
                self.goal, self.side, self.side
            )));
        }
        if !self.goal_reward.is_finite() {
            return Err(Error::InvalidArgument("goal reward must be finite".into()));
        }
        Ok(())
    }
}

/// Grid move directions, in action-index order.
pub const GRID_ACTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// A `side x side` grid world with actions up/down/left/right. The intended
/// move succeeds with probability `1 - slip`; otherwise the agent lands on a
/// uniformly random adjacent cell. Off-grid moves stay in place. The goal
/// cell pays `goal_reward` under every action.
///
/// `_seed` is accepted for interface stability; the layout is currently a
/// deterministic function of `spec`.
pub fn make_grid_world(spec: &GridWorldSpec, _seed: u64) -> Result<FiniteMdp> {
    spec.validate()?;
    let side = spec.side;
    let n = side * side;
    let m = GRID_ACTIONS.len();
    let mut transitions = vec![0.0; n * m * n];
    let mut rewards = vec![0.0; n * m];

    let step = |cell: usize, (dr, dc): (isize, isize)| -> Option<usize> {
        let r = (cell / side) as isize + dr;
        let c = (cell % side) as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < side && (c as usize) < side)
            .then(|| r as usize * side + c as usize)
    };

    for s in 0..n {
        let adjacent: Vec<usize> = GRID_ACTIONS.iter().filter_map(|&d| step(s, d)).collect();
        for (a, &dir) in GRID_ACTIONS.iter().enumerate() {
            let row = &mut transitions[(s * m + a) * n..(s * m + a + 1) * n];
            let intended = step(s, dir).unwrap_or(s);
            row[intended] += 1.0 - spec.slip;
            if !adjacent.is_empty() {
                let share = spec.slip / adjacent.len() as f64;
                for &t in &adjacent {
                    row[t] += share;
                }
            } else {
                // 1x1 grid: nowhere to slip to.
                row[s] += spec.slip;
            }
            if s == spec.goal {
                rewards[s * m + a] = spec.goal_reward;
            }
        }
    }
    FiniteMdp::from_parts(n, m, transitions, rewards, spec.gamma)
}

/// A random MDP: every transition row is drawn from Dirichlet(1, ..., 1) and
/// every reward from U[-1, 1].
///
/// Sampling procedure (stable across versions): a `ChaCha8Rng` seeded with
/// `seed` via `seed_from_u64`. Transition rows are drawn first, in `(s, a)`
/// row-major order; each row draws `n` values `u` from `[0, 1)`, maps them
/// to exponentials `-ln(1 - u)` and normalizes by their sum. Rewards follow
/// in `(s, a)` row-major order as `gen_range(-1.0..=1.0)`.
pub fn make_random_mdp(n: usize, m: usize, gamma: f64, seed: u64) -> Result<FiniteMdp> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "random MDP needs n >= 1 and m >= 1".into(),
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n * m * n);
    for _ in 0..n * m {
        let draws: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            transitions.extend(draws.iter().map(|x| x / total));
        } else {
            // All-zero exponential draws have probability zero; fall back to uniform.
            transitions.extend(std::iter::repeat_n(1.0 / n as f64, n));
        }
    }
    let rewards = (0..n * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    FiniteMdp::from_parts(n, m, transitions, rewards, gamma)
}

/// Pulls the model back along an action map: new action `a'` behaves like
/// old action `f[a']`.
pub fn reindex_actions(m: &FiniteMdp, f: &[usize]) -> Result<FiniteMdp> {
    if f.is_empty() {
        return Err(Error::InvalidArgument("action map must be non-empty".into()));
    }
    if let Some(&bad) = f.iter().find(|&&a| a >= m.n_actions) {
        return Err(Error::InvalidArgument(format!(
            "action map targets action {bad}, model has {}",
            m.n_actions
        )));
    }
    let n = m.n_states;
    let k = f.len();
    let mut transitions = Vec::with_capacity(n * k * n);
    let mut rewards = Vec::with_capacity(n * k);
    for s in 0..n {
        for &old in f {
            transitions.extend_from_slice(m.transition_row(s, old));
            rewards.push(m.reward(s, old));
        }
    }
    FiniteMdp::from_parts(n, k, transitions, rewards, m.gamma)
}

/// On-disk JSON layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl MdpFile {
    pub fn from_mdp(m: &FiniteMdp, metadata: Option<serde_json::Value>) -> Self {
        let (n, k) = (m.n_states, m.n_actions);
        Self {
            n_states: n,
            n_actions: k,
            gamma: m.gamma,
            rewards: (0..n)
                .map(|s| (0..k).map(|a| m.reward(s, a)).collect())
                .collect(),
            transitions: (0..n)
                .map(|s| (0..k).map(|a| m.transition_row(s, a).to_vec()).collect())
                .collect(),
            metadata,
        }
    }

    /// Flattens and validates.
    pub fn into_mdp(self) -> Result<FiniteMdp> {
        let (n, k) = (self.n_states, self.n_actions);
        if self.rewards.len() != n || self.rewards.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!("rewards must be {n}x{k}")));
        }
        if self.transitions.len() != n
            || self
                .transitions
                .iter()
                .any(|t| t.len() != k || t.iter().any(|row| row.len() != n))
        {
            return Err(Error::Dimension(format!("transitions must be {n}x{k}x{n}")));
        }
        let rewards = self.rewards.into_iter().flatten().collect();
        let transitions = self.transitions.into_iter().flatten().flatten().collect();
        FiniteMdp::new(n, k, transitions, rewards, self.gamma)
    }
}

pub fn mdp_to_json(m: &FiniteMdp, metadata: Option<serde_json::Value>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MdpFile::from_mdp(m, metadata))?)
}

pub fn mdp_from_json(text: &str) -> Result<FiniteMdp> {
    let file: MdpFile = serde_json::from_str(text)?;
    file.into_mdp()
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    mdp_from_json(&text)
}

pub fn save_mdp(m: &FiniteMdp, path: &Path, metadata: Option<serde_json::Value>) -> Result<()> {
    let text = mdp_to_json(m, metadata)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
