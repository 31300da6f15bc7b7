//! Experiment configuration as flat `key = value` text.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use bridgelearn_core::chain::ChainGenConfig;
use bridgelearn_core::solver::{PerceptronConfig, SolverConfig};
use bridgelearn_core::tracking::TrackingGenConfig;
use bridgelearn_core::LossSpec;
use sha2::{Digest, Sha256};

/// A rejected configuration; the binary exits with status 2 on these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<bridgelearn_core::Error> for ConfigError {
    fn from(e: bridgelearn_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Chain,
    Tracking,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Chain => "chain",
            ProblemKind::Tracking => "tracking",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "chain" => Ok(ProblemKind::Chain),
            "tracking" => Ok(ProblemKind::Tracking),
            other => Err(ConfigError(format!("unknown problem `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Perturbation of the generator between training and test data.
    pub test_shift: f64,
    /// Annotation fractions of the sweep.
    pub fractions: Vec<f64>,
    /// Annotation fraction of `train`, `compare-losses` and `lesion`.
    pub fraction: f64,
    pub repeats: usize,
    /// Losses of the comparison study.
    pub losses: Vec<LossSpec>,
    pub solver: SolverConfig,
    pub perceptron: PerceptronConfig,
    pub chain: ChainGenConfig,
    pub tracking: TrackingGenConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Chain,
            seed: 0,
            train_size: 50,
            test_size: 200,
            test_shift: 0.1,
            fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            fraction: 0.3,
            repeats: 10,
            losses: LossSpec::comparison_set().to_vec(),
            solver: SolverConfig {
                lambda: 0.1,
                ..SolverConfig::default()
            },
            perceptron: PerceptronConfig::default(),
            chain: ChainGenConfig::default(),
            tracking: TrackingGenConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Every addressable key, in canonical order.
    pub const KEYS: [&'static str; 40] = [
        "problem",
        "seed",
        "train_size",
        "test_size",
        "test_shift",
        "fractions",
        "fraction",
        "repeats",
        "losses",
        "lambda",
        "eta",
        "eps0",
        "eps_min",
        "rho",
        "max_cccp_iters",
        "max_inner_iters",
        "loss",
        "delta_in_reward",
        "recycle_bounds",
        "adaptive_precision",
        "qp_tol_ratio",
        "perceptron_max_passes",
        "perceptron_patience",
        "chain_label_count",
        "chain_length",
        "chain_emission_dim",
        "chain_stay_prob",
        "chain_mean_spread",
        "chain_noise",
        "chain_delta_scale",
        "tracking_min_cells",
        "tracking_max_cells",
        "tracking_max_appear",
        "tracking_p_divide",
        "tracking_p_disappear",
        "tracking_step_sigma",
        "tracking_division_offset",
        "tracking_size_noise",
        "tracking_gate_radius",
        "tracking_delta_scale",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        let (c, t) = (&mut self.chain, &mut self.tracking);
        match key.trim() {
            "problem" => self.problem = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "train_size" => self.train_size = parse(key, value)?,
            "test_size" => self.test_size = parse(key, value)?,
            "test_shift" => self.test_shift = parse(key, value)?,
            "fractions" => self.fractions = parse_list(key, value)?,
            "fraction" => self.fraction = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "losses" => self.losses = parse_list(key, value)?,
            "lambda" => s.lambda = parse(key, value)?,
            "eta" => s.eta = parse(key, value)?,
            "eps0" => s.eps0 = parse(key, value)?,
            "eps_min" => s.eps_min = parse(key, value)?,
            "rho" => s.rho = parse(key, value)?,
            "max_cccp_iters" => s.max_cccp_iters = parse(key, value)?,
            "max_inner_iters" => s.max_inner_iters = parse(key, value)?,
            "loss" => s.loss.kind = parse(key, value)?,
            "delta_in_reward" => s.loss.delta_in_reward = parse(key, value)?,
            "recycle_bounds" => s.recycle_bounds = parse(key, value)?,
            "adaptive_precision" => s.adaptive_precision = parse(key, value)?,
            "qp_tol_ratio" => s.qp_tol_ratio = parse(key, value)?,
            "perceptron_max_passes" => self.perceptron.max_passes = parse(key, value)?,
            "perceptron_patience" => self.perceptron.patience = parse(key, value)?,
            "chain_label_count" => c.label_count = parse(key, value)?,
            "chain_length" => c.length = parse(key, value)?,
            "chain_emission_dim" => c.emission_dim = parse(key, value)?,
            "chain_stay_prob" => c.stay_prob = parse(key, value)?,
            "chain_mean_spread" => c.mean_spread = parse(key, value)?,
            "chain_noise" => c.noise = parse(key, value)?,
            "chain_delta_scale" => c.delta_scale = parse(key, value)?,
            "tracking_min_cells" => t.min_cells = parse(key, value)?,
            "tracking_max_cells" => t.max_cells = parse(key, value)?,
            "tracking_max_appear" => t.max_appear = parse(key, value)?,
            "tracking_p_divide" => t.p_divide = parse(key, value)?,
            "tracking_p_disappear" => t.p_disappear = parse(key, value)?,
            "tracking_step_sigma" => t.step_sigma = parse(key, value)?,
            "tracking_division_offset" => t.division_offset = parse(key, value)?,
            "tracking_size_noise" => t.size_noise = parse(key, value)?,
            "tracking_gate_radius" => t.gate_radius = parse(key, value)?,
            "tracking_delta_scale" => t.delta_scale = parse(key, value)?,
            other => return Err(ConfigError(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (s, c, t) = (&self.solver, &self.chain, &self.tracking);
        Some(match key {
            "problem" => self.problem.to_string(),
            "seed" => self.seed.to_string(),
            "train_size" => self.train_size.to_string(),
            "test_size" => self.test_size.to_string(),
            "test_shift" => self.test_shift.to_string(),
            "fractions" => join(&self.fractions),
            "fraction" => self.fraction.to_string(),
            "repeats" => self.repeats.to_string(),
            "losses" => join(&self.losses),
            "lambda" => s.lambda.to_string(),
            "eta" => s.eta.to_string(),
            "eps0" => s.eps0.to_string(),
            "eps_min" => s.eps_min.to_string(),
            "rho" => s.rho.to_string(),
            "max_cccp_iters" => s.max_cccp_iters.to_string(),
            "max_inner_iters" => s.max_inner_iters.to_string(),
            "loss" => s.loss.kind.to_string(),
            "delta_in_reward" => s.loss.delta_in_reward.to_string(),
            "recycle_bounds" => s.recycle_bounds.to_string(),
            "adaptive_precision" => s.adaptive_precision.to_string(),
            "qp_tol_ratio" => s.qp_tol_ratio.to_string(),
            "perceptron_max_passes" => self.perceptron.max_passes.to_string(),
            "perceptron_patience" => self.perceptron.patience.to_string(),
            "chain_label_count" => c.label_count.to_string(),
            "chain_length" => c.length.to_string(),
            "chain_emission_dim" => c.emission_dim.to_string(),
            "chain_stay_prob" => c.stay_prob.to_string(),
            "chain_mean_spread" => c.mean_spread.to_string(),
            "chain_noise" => c.noise.to_string(),
            "chain_delta_scale" => c.delta_scale.to_string(),
            "tracking_min_cells" => t.min_cells.to_string(),
            "tracking_max_cells" => t.max_cells.to_string(),
            "tracking_max_appear" => t.max_appear.to_string(),
            "tracking_p_divide" => t.p_divide.to_string(),
            "tracking_p_disappear" => t.p_disappear.to_string(),
            "tracking_step_sigma" => t.step_sigma.to_string(),
            "tracking_division_offset" => t.division_offset.to_string(),
            "tracking_size_noise" => t.size_noise.to_string(),
            "tracking_gate_radius" => t.gate_radius.to_string(),
            "tracking_delta_scale" => t.delta_scale.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key, value)
                .map_err(|e| ConfigError(format!("line {}: {}", n + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut config = ExperimentConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// Canonical text: every key in [`Self::KEYS`] order, so that parsing it
    /// back reproduces the configuration.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// SHA-256 of the canonical text without the seed line.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for k in Self::KEYS.iter().filter(|&&k| k != "seed") {
            hasher.update(format!("{k} = {}\n", self.get(k).expect("known key")));
        }
        hex::encode(hasher.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.test_size == 0 {
            return Err(ConfigError("train_size and test_size must be positive".into()));
        }
        if !(self.test_shift >= 0.0 && self.test_shift.is_finite()) {
            return Err(ConfigError(format!(
                "test_shift must be nonnegative, got {}",
                self.test_shift
            )));
        }
        if self.fractions.is_empty() {
            return Err(ConfigError("fractions must not be empty".into()));
        }
        for &f in self.fractions.iter().chain([&self.fraction]) {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ConfigError(format!("fractions must lie in (0, 1], got {f}")));
            }
        }
        if self.repeats == 0 {
            return Err(ConfigError("repeats must be at least 1".into()));
        }
        if self.losses.is_empty() {
            return Err(ConfigError("losses must not be empty".into()));
        }
        if self.perceptron.max_passes == 0 || self.perceptron.patience == 0 {
            return Err(ConfigError("perceptron passes and patience must be positive".into()));
        }
        self.solver.validate()?;
        match self.problem {
            ProblemKind::Chain => self.chain.validate()?,
            ProblemKind::Tracking => self.tracking.validate()?,
        }
        Ok(())
    }
}
