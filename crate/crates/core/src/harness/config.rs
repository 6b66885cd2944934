use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrector::{Grid, DEFAULT_TARGET};
use crate::error::{Error, Result};
use crate::model::{make_problem, registry, CaseTag, Problem, ProblemSpec};

/// `[problem]` is either `preset = "<name>"` or a full problem table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSection {
    Preset(PresetName),
    Spec(ProblemSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetName {
    pub preset: String,
}

impl ProblemSection {
    pub fn preset(name: &str) -> Self {
        ProblemSection::Preset(PresetName {
            preset: name.to_string(),
        })
    }
}

impl ProblemSection {
    pub fn resolve(&self) -> Result<ProblemSpec> {
        match self {
            ProblemSection::Preset(PresetName { preset }) => registry::preset(preset)
                .ok_or_else(|| Error::Config(format!("unknown preset `{preset}`"))),
            ProblemSection::Spec(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceConfig {
    Gibbs1d {
        r_ref: f64,
        n_grid: usize,
    },
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorConfig {
    pub radius: f64,
    /// Nodes per axis; 4097 in 1D and 257 in 2D when unset.
    pub n_per_axis: Option<usize>,
    /// Required `sup |∇u|` for the lambda search.
    pub target: f64,
    pub lambda0: f64,
    /// Corrector file written by `solve-corrector`; used when it exists.
    pub cache: Option<PathBuf>,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig {
            radius: 12.0,
            n_per_axis: None,
            target: DEFAULT_TARGET,
            lambda0: 1.0,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub n_points: usize,
    pub n_draws: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n_points: 9,
            n_draws: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: String,
    pub plot: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            csv: "w1.csv".into(),
            plot: "w1.svg".into(),
            summary: "summary.json".into(),
        }
    }
}

fn default_gamma() -> f64 {
    0.9
}

pub fn default_eta_grid() -> Vec<f64> {
    (4..=9).map(|k| 0.5f64.powi(k)).collect()
}

fn default_chains() -> usize {
    8
}

fn default_t_burn() -> f64 {
    20.0
}

fn default_t_run() -> f64 {
    2000.0
}

fn default_directions() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    /// Target exponent `γ` for Case 1 runs; the fitted exponent is compared
    /// against `γ/2`.
    #[serde(default = "default_gamma")]
    pub gamma_target: f64,
    /// Strictly descending step sizes, each at most 0.5.
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// Physical burn-in time per chain.
    #[serde(default = "default_t_burn")]
    pub t_burn: f64,
    /// Physical run time per chain, burn-in included.
    #[serde(default = "default_t_run")]
    pub t_run: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub reference: ReferenceConfig,
    /// Also run naive Euler-Maruyama on the original coefficients (Case 2).
    #[serde(default)]
    pub baseline: bool,
    /// Projections for sliced W1 in `d >= 2`.
    #[serde(default = "default_directions")]
    pub sliced_directions: usize,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Config with default settings for a registered problem.
    pub fn for_preset(name: &str) -> Self {
        ExperimentConfig {
            problem: ProblemSection::preset(name),
            gamma_target: default_gamma(),
            eta_grid: default_eta_grid(),
            chains: default_chains(),
            t_burn: default_t_burn(),
            t_run: default_t_run(),
            master_seed: 0,
            reference: ReferenceConfig::None,
            baseline: false,
            sliced_directions: default_directions(),
            corrector: CorrectorConfig::default(),
            probe: ProbeConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent() {
            if let Some(cache) = cfg.corrector.cache.as_mut() {
                if cache.is_relative() {
                    *cache = base.join(&*cache);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every invariant and builds the problem. Nothing is computed
    /// beyond coefficient construction.
    pub fn validate(&self) -> Result<Problem> {
        let problem = make_problem(&self.problem.resolve()?)?;
        if problem.name.contains([',', '"', '\n']) {
            return Err(Error::Config(format!(
                "problem name `{}` may not contain commas, quotes or newlines",
                problem.name
            )));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "master_seed {} exceeds the TOML integer range",
                self.master_seed
            )));
        }
        if !(self.gamma_target > 0.0 && self.gamma_target < 1.0) {
            return Err(Error::invalid("gamma_target", self.gamma_target, "must lie in (0, 1)"));
        }
        for &eta in &self.eta_grid {
            if !(eta > 0.0 && eta <= 0.5) {
                return Err(Error::invalid("eta_grid", eta, "step sizes must lie in (0, 0.5]"));
            }
        }
        if self.eta_grid.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Config("eta_grid must be strictly descending".into()));
        }
        if !(self.t_burn > 0.0) {
            return Err(Error::invalid("t_burn", self.t_burn, "must be positive"));
        }
        if !(self.t_run > self.t_burn) {
            return Err(Error::invalid("t_run", self.t_run, "must exceed t_burn"));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.sliced_directions < 8 {
            return Err(Error::Config("sliced_directions must be at least 8".into()));
        }
        if self.probe.n_points < 3 || self.probe.n_draws < 1000 {
            return Err(Error::Config(
                "probe needs at least 3 points and 1000 draws per point".into(),
            ));
        }
        if !(self.corrector.target > 0.0 && self.corrector.target < 0.5) {
            return Err(Error::invalid("corrector.target", self.corrector.target, "must lie in (0, 0.5)"));
        }
        if !(self.corrector.lambda0 > 0.0) {
            return Err(Error::invalid("corrector.lambda0", self.corrector.lambda0, "must be positive"));
        }
        self.grid(problem.dim)?;
        if let ReferenceConfig::Gibbs1d { r_ref, n_grid } = self.reference {
            if problem.dim != 1 {
                return Err(Error::NotOneDimensional(problem.dim));
            }
            if problem.constant_scalar_sigma().is_none() {
                return Err(Error::NonConstantSigma);
            }
            if !(r_ref > 0.0) || n_grid < 1000 {
                return Err(Error::Config("reference needs r_ref > 0 and n_grid >= 1000".into()));
            }
        }
        if self.baseline && problem.case == CaseTag::Case1 {
            return Err(Error::Case1Unsupported);
        }
        Ok(problem)
    }

    pub fn grid(&self, dim: usize) -> Result<Grid> {
        let n = match self.corrector.n_per_axis {
            Some(n) => n,
            None => Grid::default_for(dim)?.n_per_axis,
        };
        Grid::new(dim, self.corrector.radius, n)
    }
}
