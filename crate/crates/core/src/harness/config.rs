use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::SpectralMode;
use crate::error::{Error, Result};
use crate::mdp::{load_mdp, make_chain_example, make_grid_world, make_random_mdp, FiniteMdp, GridWorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    MetricBaseline,
    TransferTest,
    Composition,
    BackwardStability,
    InfoTheory,
    Spectral,
    Scaling,
    CompressionSweep,
    PerturbSweep,
    Adversarial,
}

impl SuiteName {
    pub const ALL: [SuiteName; 10] = [
        SuiteName::MetricBaseline,
        SuiteName::TransferTest,
        SuiteName::Composition,
        SuiteName::BackwardStability,
        SuiteName::InfoTheory,
        SuiteName::Spectral,
        SuiteName::Scaling,
        SuiteName::CompressionSweep,
        SuiteName::PerturbSweep,
        SuiteName::Adversarial,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::MetricBaseline => "metric_baseline",
            SuiteName::TransferTest => "transfer_test",
            SuiteName::Composition => "composition",
            SuiteName::BackwardStability => "backward_stability",
            SuiteName::InfoTheory => "info_theory",
            SuiteName::Spectral => "spectral",
            SuiteName::Scaling => "scaling",
            SuiteName::CompressionSweep => "compression_sweep",
            SuiteName::PerturbSweep => "perturb_sweep",
            SuiteName::Adversarial => "adversarial",
        }
    }
}

impl std::str::FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::config("suite", format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    #[default]
    Grid,
    Random,
    Chain,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialObjective {
    /// Value loss minus `2·diam/(1−γ)`; positive values violate the bound.
    #[default]
    LossMinusDiameterBound,
    /// Value loss minus `2ε/(1−γ)`.
    LossMinusEpsilonBound,
    ValueLoss,
    /// Worst `|V*(s) − V*(t)| − d_M(s, t)`.
    LipschitzExcess,
    /// Zero everywhere; a sanity run of the search machinery.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarialConfig {
    /// Generations.
    pub iterations: usize,
    /// Overrides `min(15·dim, population_cap)`.
    pub population: Option<usize>,
    pub population_cap: usize,
    pub mutation: f64,
    pub crossover: f64,
    /// Rewards range over `[−bound, bound]`.
    pub reward_bound: f64,
    pub objective: AdversarialObjective,
    /// ε as a fraction of the candidate's metric diameter.
    pub epsilon_fraction: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            population: None,
            population_cap: 300,
            mutation: 0.8,
            crossover: 0.9,
            reward_bound: 10.0,
            objective: AdversarialObjective::default(),
            epsilon_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub suite: SuiteName,
    pub environment: EnvironmentKind,
    /// Grid side length.
    pub side: usize,
    /// Grid sides for the scaling suite.
    pub sides: Vec<usize>,
    /// Size of random environments.
    pub n_states: usize,
    pub n_actions: usize,
    /// MDP JSON for `environment = "file"`.
    pub mdp_path: Option<PathBuf>,
    /// Overrides the environment's discount.
    pub gamma: Option<f64>,
    pub slip: f64,
    pub perturbed_slip: f64,
    /// Intermediate slips for the perturbation sweep, between `slip` and
    /// `perturbed_slip`.
    pub sweep_steps: usize,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Metric and value-iteration tolerance.
    pub tolerance: f64,
    /// Accepted drift for the zero-drift checks.
    pub drift_tolerance: f64,
    /// Random pseudometric pairs for the contraction estimate.
    pub contraction_pairs: usize,
    pub spectral_mode: SpectralMode,
    pub output_dir: Option<PathBuf>,
    pub adversarial: AdversarialConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: SuiteName::MetricBaseline,
            environment: EnvironmentKind::Grid,
            side: 5,
            sides: vec![3, 4, 5, 6, 7, 8],
            n_states: 10,
            n_actions: 4,
            mdp_path: None,
            gamma: None,
            slip: 0.07,
            perturbed_slip: 0.10,
            sweep_steps: 4,
            epsilons: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            seeds: vec![0],
            tolerance: 1e-9,
            drift_tolerance: 1e-9,
            contraction_pairs: 10,
            spectral_mode: SpectralMode::Raw,
            output_dir: None,
            adversarial: AdversarialConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.mdp_path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.mdp_path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::config("gamma", format!("must lie in (0, 1), got {g}")));
            }
        }
        for (field, p) in [("slip", self.slip), ("perturbed_slip", self.perturbed_slip)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field, format!("must lie in [0, 1], got {p}")));
            }
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::config("epsilons", "must be finite and nonnegative"));
        }
        if self.epsilons.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("epsilons", "must be sorted ascending"));
        }
        if self.epsilons.is_empty() {
            return Err(Error::config("epsilons", "at least one epsilon is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance", "must be positive"));
        }
        if !(self.drift_tolerance >= 0.0) {
            return Err(Error::config("drift_tolerance", "must be nonnegative"));
        }
        if self.contraction_pairs == 0 {
            return Err(Error::config("contraction_pairs", "must be at least 1"));
        }
        if self.side == 0 || self.sides.contains(&0) {
            return Err(Error::config("side", "grid sides must be positive"));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::config("n_states", "random environments need states and actions"));
        }
        if self.environment == EnvironmentKind::File && self.mdp_path.is_none() {
            return Err(Error::config("mdp_path", "required for a file environment"));
        }
        let slip_suite = matches!(self.suite, SuiteName::TransferTest | SuiteName::PerturbSweep);
        if slip_suite && self.environment != EnvironmentKind::Grid {
            return Err(Error::config(
                "environment",
                format!("suite `{}` perturbs grid slip and needs a grid", self.suite.as_str()),
            ));
        }
        if self.suite == SuiteName::Scaling {
            if self.environment != EnvironmentKind::Grid {
                return Err(Error::config("environment", "suite `scaling` varies the grid side and needs a grid"));
            }
            if self.sides.is_empty() {
                return Err(Error::config("sides", "scaling needs at least one side"));
            }
        }
        let adv = &self.adversarial;
        if !(adv.mutation > 0.0 && adv.mutation <= 2.0) {
            return Err(Error::config("adversarial.mutation", "must lie in (0, 2]"));
        }
        if !(0.0..=1.0).contains(&adv.crossover) {
            return Err(Error::config("adversarial.crossover", "must lie in [0, 1]"));
        }
        if !(adv.reward_bound > 0.0) {
            return Err(Error::config("adversarial.reward_bound", "must be positive"));
        }
        if !(adv.epsilon_fraction >= 0.0) {
            return Err(Error::config("adversarial.epsilon_fraction", "must be nonnegative"));
        }
        if adv.population.is_some_and(|p| p < 4) || adv.population_cap < 4 {
            return Err(Error::config("adversarial.population", "needs at least 4 members"));
        }
        Ok(())
    }

    /// Base MDP for `seed`. Grid and chain environments ignore the seed.
    pub fn environment_mdp(&self, seed: u64) -> Result<FiniteMdp> {
        self.grid_or_base(self.side, self.slip, seed)
    }

    pub(crate) fn grid_or_base(&self, side: usize, slip: f64, seed: u64) -> Result<FiniteMdp> {
        let m = match self.environment {
            EnvironmentKind::Grid => {
                let spec = GridWorldSpec::new(side, slip, self.gamma.unwrap_or(0.95));
                return make_grid_world(&spec, seed);
            }
            EnvironmentKind::Random => {
                return make_random_mdp(self.n_states, self.n_actions, self.gamma.unwrap_or(0.9), seed)
            }
            EnvironmentKind::Chain => make_chain_example(),
            EnvironmentKind::File => load_mdp(self.mdp_path.as_deref().expect("validated"))?,
        };
        Ok(match self.gamma {
            Some(g) => m.with_gamma(g),
            None => m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_toml("suite = \"composition\"\nenvironment = \"chain\"\nepsilons = [0.95]\n").unwrap();
        assert_eq!(cfg.suite, SuiteName::Composition);
        assert_eq!(cfg.environment, EnvironmentKind::Chain);
        assert_eq!(cfg.epsilons, vec![0.95]);
        assert_eq!(cfg.adversarial.iterations, 1000);
        let m = cfg.environment_mdp(0).unwrap();
        assert_eq!(m.n_states(), 3);
    }

    #[test]
    fn invalid_fields_are_named() {
        for (text, field) in [
            ("suite = \"composition\"\nepsilons = [0.5, 0.1]", "epsilons"),
            ("suite = \"composition\"\ngamma = 1.0", "gamma"),
            ("suite = \"composition\"\ntolerance = 0.0", "tolerance"),
            ("suite = \"transfer_test\"\nenvironment = \"random\"", "environment"),
            ("suite = \"composition\"\nenvironment = \"file\"", "mdp_path"),
            ("suite = \"adversarial\"\n[adversarial]\ncrossover = 2.0", "adversarial.crossover"),
        ] {
            match ExperimentConfig::from_toml(text) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(ExperimentConfig::from_toml("suite = \"nope\""), Err(Error::Toml(_))));
        assert!(matches!(ExperimentConfig::from_toml("suite = \"spectral\"\nbogus = 1"), Err(Error::Toml(_))));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig {
            suite: SuiteName::Adversarial,
            gamma: Some(0.9),
            ..Default::default()
        };
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        for s in SuiteName::ALL {
            assert_eq!(s.as_str().parse::<SuiteName>().unwrap(), s);
        }
    }
}
