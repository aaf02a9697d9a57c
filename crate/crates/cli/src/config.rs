//! Run configuration: a TOML file merged with command-line overrides.
//!
//! ```toml
//! parties = 2
//! r = "optimize"        # or a number
//! m0 = 0.59             # "optimize" or a number
//! m1 = -0.18
//! alpha = 0.0
//! phases = [0.0, 0.0]
//! output = "bell_vs_pds.csv"
//!
//! [noise]
//! eta_p = 0.9
//! eta_s = 0.2
//! eta_d = 1.0
//! sigma_a = 0.03
//! sigma_theta = 0.1
//! p_dark_s = 1e-4
//! p_dark_p = 1e-4
//!
//! [sweep]
//! axis = "p_d_S"        # r, p_d_S, p_d_P, eta_P, eta_S, sigma_A, sigma_theta
//! values = [0.0, 1e-4, 2e-4]
//! # or: start = 0.0, stop = 5e-4, steps = 11
//! parties = [2, 3, 4]
//! policy = "fixed"      # or "reoptimize"
//!
//! [optimizer]
//! grid = 11
//! seeds = 5
//! r_max = 0.5
//! m_max = 1.5
//! mode = "collinear"    # or "general"
//! max_iterations = 500
//! tolerance = 1e-5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use swapbell::optimize::{NoiseAxis, OptimizationProblem, SearchMode, SweepPolicy};
use swapbell::NoiseConfig;

use crate::CliError;

/// A number or the keyword `optimize`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Param {
    Value(f64),
    #[default]
    Optimize,
}

impl Param {
    pub fn value(self) -> Option<f64> {
        match self {
            Param::Value(v) => Some(v),
            Param::Optimize => None,
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("optimize") {
            return Ok(Param::Optimize);
        }
        s.parse::<f64>()
            .map(Param::Value)
            .map_err(|_| format!("expected a number or \"optimize\", got {s:?}"))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Value(v) => write!(f, "{v}"),
            Param::Optimize => f.write_str("optimize"),
        }
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Param::Value(v)),
            Raw::Int(v) => Ok(Param::Value(v as f64)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub eta_p: f64,
    pub eta_s: f64,
    pub eta_d: f64,
    pub sigma_a: f64,
    pub sigma_theta: f64,
    pub p_dark_s: f64,
    pub p_dark_p: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::standard();
        Self {
            eta_p: n.eta_p,
            eta_s: n.eta_s,
            eta_d: n.eta_d,
            sigma_a: n.sigma_a(),
            sigma_theta: n.sigma_theta(),
            p_dark_s: n.p_dark_s,
            p_dark_p: n.p_dark_p,
        }
    }
}

impl NoiseSection {
    pub fn to_noise(&self) -> Result<NoiseConfig, CliError> {
        if !(self.sigma_a >= 0.0 && self.sigma_theta >= 0.0) {
            return Err(CliError::Config("noise sigmas must be non-negative".into()));
        }
        let noise = NoiseConfig {
            eta_p: self.eta_p,
            eta_s: self.eta_s,
            eta_d: self.eta_d,
            p_dark_s: self.p_dark_s,
            p_dark_p: self.p_dark_p,
            amp_variance: self.sigma_a * self.sigma_a,
            phase_variance: self.sigma_theta * self.sigma_theta,
        };
        noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(noise)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub grid: usize,
    pub seeds: usize,
    pub r_max: f64,
    pub m_max: f64,
    pub mode: String,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let p = OptimizationProblem::new(2, NoiseConfig::standard());
        Self {
            grid: p.grid,
            seeds: p.seeds,
            r_max: p.r_max,
            m_max: p.m_max,
            mode: "collinear".into(),
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub steps: Option<usize>,
    pub parties: Option<Vec<usize>>,
    pub policy: Option<String>,
}

/// Sweep variable: squeezing (settings re-optimized per point) or a noise axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    Squeezing,
    Noise(NoiseAxis),
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Squeezing => "r",
            SweepAxis::Noise(a) => a.name(),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "r" {
            return Ok(SweepAxis::Squeezing);
        }
        s.parse::<NoiseAxis>()
            .map(SweepAxis::Noise)
            .map_err(|_| CliError::Config(format!("unknown sweep axis {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub parties: usize,
    pub r: Param,
    pub m0: Param,
    pub m1: Param,
    pub alpha: f64,
    pub phases: Option<Vec<f64>>,
    pub output: Option<PathBuf>,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
    pub optimizer: OptimizerSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parties: 2,
            r: Param::Optimize,
            m0: Param::Optimize,
            m1: Param::Optimize,
            alpha: 0.0,
            phases: None,
            output: None,
            noise: NoiseSection::default(),
            sweep: SweepSection::default(),
            optimizer: OptimizerSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn phases(&self, parties: usize) -> Result<Vec<f64>, CliError> {
        match &self.phases {
            None => Ok(vec![0.0; parties]),
            Some(p) if p.len() == parties => Ok(p.clone()),
            Some(p) => Err(CliError::Config(format!(
                "{} phases given for {parties} parties",
                p.len()
            ))),
        }
    }

    pub fn noise(&self) -> Result<NoiseConfig, CliError> {
        self.noise.to_noise()
    }

    /// Optimization problem for `parties` with this config's noise, phases
    /// and optimizer settings.
    pub fn problem(&self, parties: usize) -> Result<OptimizationProblem, CliError> {
        let mode = match self.optimizer.mode.as_str() {
            "collinear" => SearchMode::Collinear,
            "general" => SearchMode::General,
            other => return Err(CliError::Config(format!("unknown optimizer mode {other:?}"))),
        };
        let problem = OptimizationProblem {
            phases: self.phases(parties)?,
            r_max: self.optimizer.r_max,
            m_max: self.optimizer.m_max,
            mode,
            grid: self.optimizer.grid,
            seeds: self.optimizer.seeds,
            max_iterations: self.optimizer.max_iterations,
            tolerance: self.optimizer.tolerance,
            ..OptimizationProblem::new(parties, self.noise()?)
        };
        problem.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(problem)
    }

    /// Parameters to optimize; partially fixed settings are rejected.
    pub fn search(&self) -> Result<Search, CliError> {
        match (self.r, self.m0, self.m1) {
            (Param::Value(r), Param::Value(m0), Param::Value(m1)) => Ok(Search::Fixed { r, m0, m1 }),
            (Param::Value(r), Param::Optimize, Param::Optimize) => Ok(Search::Settings { r }),
            (Param::Optimize, Param::Optimize, Param::Optimize) => Ok(Search::Full),
            _ => Err(CliError::Config(
                "m0 and m1 must both be numbers or both \"optimize\"; r = \"optimize\" needs both settings optimized".into(),
            )),
        }
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis, CliError> {
        self.sweep
            .axis
            .as_deref()
            .ok_or_else(|| CliError::Config("sweep.axis is required".into()))?
            .parse()
    }

    pub fn sweep_values(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        let values = match (&s.values, s.start, s.stop, s.steps) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => linspace(a, b, n),
            (None, None, None, None) => return Err(CliError::Config("sweep grid is empty".into())),
            _ => {
                return Err(CliError::Config(
                    "give either sweep.values or all of sweep.start, sweep.stop, sweep.steps".into(),
                ))
            }
        };
        if values.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("sweep values must be finite".into()));
        }
        Ok(values)
    }

    pub fn sweep_parties(&self) -> Vec<usize> {
        self.sweep.parties.clone().unwrap_or_else(|| vec![self.parties])
    }

    pub fn sweep_policy(&self) -> Result<SweepPolicy, CliError> {
        match self.sweep.policy.as_deref().unwrap_or("fixed") {
            "fixed" => Ok(SweepPolicy::Fixed(None)),
            "reoptimize" => Ok(SweepPolicy::Reoptimize),
            other => Err(CliError::Config(format!("unknown sweep policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Search {
    Fixed { r: f64, m0: f64, m1: f64 },
    Settings { r: f64 },
    Full,
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_standard_noise() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.parties, 2);
        assert_eq!(cfg.search().unwrap(), Search::Full);
        let noise = cfg.noise().unwrap();
        let std = NoiseConfig::standard();
        assert_eq!((noise.eta_p, noise.eta_s, noise.p_dark_s), (std.eta_p, std.eta_s, std.p_dark_s));
        assert!((noise.phase_variance - std.phase_variance).abs() < 1e-18);
    }

    #[test]
    fn params_accept_numbers_and_keyword() {
        let cfg = RunConfig::from_toml("r = 0.1\nm0 = 1\nm1 = -0.2\n").unwrap();
        assert_eq!(cfg.search().unwrap(), Search::Fixed { r: 0.1, m0: 1.0, m1: -0.2 });
        let cfg = RunConfig::from_toml("r = 0.1\nm0 = \"optimize\"").unwrap();
        assert_eq!(cfg.search().unwrap(), Search::Settings { r: 0.1 });
        assert!(RunConfig::from_toml("r = \"fast\"").is_err());
        let cfg = RunConfig::from_toml("m0 = 0.5").unwrap();
        assert!(cfg.search().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("partys = 3").is_err());
        assert!(RunConfig::from_toml("[noise]\neta = 0.5").is_err());
        assert!(RunConfig::from_toml("[sweep]\naxis = \"r\"\ngrid = 4").is_err());
    }

    #[test]
    fn sweep_grid_forms() {
        let cfg = RunConfig::from_toml("[sweep]\naxis = \"eta_S\"\nstart = 0.2\nstop = 1.0\nsteps = 5").unwrap();
        let v = cfg.sweep_values().unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!((v[0], v[4]), (0.2, 1.0));
        assert_eq!(cfg.sweep_axis().unwrap(), SweepAxis::Noise(NoiseAxis::EtaSwap));
        let cfg = RunConfig::from_toml("[sweep]\nvalues = []").unwrap();
        assert!(cfg.sweep_values().is_err());
        let cfg = RunConfig::from_toml("[sweep]\nvalues = [1.0]\nsteps = 3").unwrap();
        assert!(cfg.sweep_values().is_err());
    }

    #[test]
    fn phases_must_match_parties() {
        let cfg = RunConfig::from_toml("phases = [0.0, 0.1, 0.2]").unwrap();
        assert!(cfg.phases(2).is_err());
        assert_eq!(cfg.phases(3).unwrap().len(), 3);
    }

    #[test]
    fn invalid_noise_is_config_error() {
        let cfg = RunConfig::from_toml("[noise]\neta_p = 1.5").unwrap();
        assert!(matches!(cfg.noise(), Err(CliError::Config(_))));
    }
}
