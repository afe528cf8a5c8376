//! Scenario files.
//!
//! A scenario is a TOML document with these sections:
//!
//! ```text
//! name, case, description, seed       top-level keys
//! [grid]          lower, upper, cells
//! [coefficients]  a, k, b             (a may be replaced by [kernel])
//! [kernel]        family = gaussian | product | tabulated, tau, ...
//! [darcy]         m0, k_bar, g         (replaces coefficients.k and .b)
//! [state_law]     kind = ideal | isentropic | slightly_compressible, ...
//! [initial]       u_star, [initial.profile] kind = constant | sine | bump | gaussian | table
//! [run]           t_end, record_dt, safety, dt, advection
//! [checks]        enabled, x0, c1, windows, decay_mode, delta, rate_profiles
//! [monte_carlo]   particles, record_steps, partitions, drift_mean, slope_tol
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}", render(.message, .key, .line))]
pub struct ConfigError {
    pub message: String,
    pub key: Option<String>,
    pub line: Option<usize>,
}

fn render(message: &str, key: &Option<String>, line: &Option<usize>) -> String {
    let mut s = String::from("config error");
    if let Some(l) = line {
        s.push_str(&format!(" at line {l}"));
    }
    if let Some(k) = key {
        s.push_str(&format!(" in `{k}`"));
    }
    s.push_str(": ");
    s.push_str(message);
    s
}

impl ConfigError {
    pub fn key(key: &str, message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            key: Some(key.to_string()),
            line: None,
        }
    }

    fn from_toml(text: &str, e: toml::de::Error) -> Self {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().to_string();
        let key = message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("missing field") || message.contains("unknown field"))
            .map(str::to_string);
        Self { message, key, line }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Physical case the scenario instantiates, shown by `list-presets`.
    #[serde(default)]
    pub case: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    #[serde(default)]
    pub coefficients: Option<CoefficientConfig>,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub darcy: Option<DarcyConfig>,
    pub state_law: LawConfig,
    pub initial: InitialConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    /// Directory for relative file references (not part of the file).
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cells per axis (nodes = cells + 1).
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        trunc: Option<f64>,
        tau: f64,
    },
    Product {
        marginals: Vec<MarginalConfig>,
        tau: f64,
    },
    Tabulated {
        /// Grid file: `n h_1..h_n N_1..N_n` then the values.
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default)]
        table: Option<String>,
        tau: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalConfig {
    Gaussian {
        mean: f64,
        sd: f64,
        trunc: Option<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Triangular {
        center: f64,
        half_width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DarcyConfig {
    pub m0: Vec<Vec<f64>>,
    pub k_bar: Vec<Vec<f64>>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Ideal {
        c: f64,
        #[serde(default)]
        domain: DomainConfig,
    },
    Isentropic {
        gamma: f64,
        c: f64,
    },
    SlightlyCompressible {
        kappa: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainConfig {
    #[default]
    HalfLine,
    FullLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u_star: f64,
    pub profile: ProfileConfig,
}

/// Interior profile; boundary nodes always take `u*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    /// `u*` plus `value - u*` inside.
    Constant { value: f64 },
    /// `u* + amplitude · Π sin(π (x_d - lo_d)/(hi_d - lo_d))^power`.
    Sine {
        amplitude: f64,
        #[serde(default)]
        power: Option<u32>,
    },
    /// `u* + amplitude · exp(1 - 1/(1 - r²))`, `r = |x - center|/width < 1`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `u* + mass · N(center, sd² I)` density.
    Gaussian {
        mass: f64,
        center: Vec<f64>,
        sd: f64,
    },
    /// Values at every node, row-major (x fastest).
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    /// Spacing of recorded times.
    pub record_dt: f64,
    #[serde(default)]
    pub safety: Option<f64>,
    /// Fixed step instead of the stability rule.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub advection: AdvectionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionConfig {
    #[default]
    Hybrid,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    MaxPrinciple,
    SignTransfer,
    GrowthLemma,
    Barrier,
    Decay,
    RateIndependence,
    MonteCarlo,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::MaxPrinciple => "max_principle",
            CheckKind::SignTransfer => "sign_transfer",
            CheckKind::GrowthLemma => "growth_lemma",
            CheckKind::Barrier => "barrier",
            CheckKind::Decay => "decay",
            CheckKind::RateIndependence => "rate_independence",
            CheckKind::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModeConfig {
    Interior,
    Power,
    OneSided,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub enabled: Vec<CheckKind>,
    /// Exterior reference point; one box diameter left of the box by default.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Larger admissible `c1` than the sampled one.
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub windows: Option<usize>,
    #[serde(default)]
    pub decay_mode: Option<DecayModeConfig>,
    /// Half-width of the tail band around `u*` for the rate check.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rate_profiles: Vec<ProfileConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub particles: Vec<usize>,
    /// Steps of length `τ` between recorded densities.
    pub record_steps: usize,
    #[serde(default)]
    pub partitions: Option<usize>,
    /// Kernel mean for the cloud-center check.
    #[serde(default)]
    pub drift_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub slope_tol: Option<f64>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ConfigError::from_toml(text, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            message: format!("cannot read {}: {e}", path.display()),
            key: None,
            line: None,
        })?;
        let mut s = Self::parse(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn dim(&self) -> usize {
        self.grid.lower.len()
    }

    pub fn has(&self, c: CheckKind) -> bool {
        self.checks.enabled.contains(&c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.dim();
        if n == 0 || n > 2 || self.grid.upper.len() != n || self.grid.cells.len() != n {
            return Err(ConfigError::key(
                "grid",
                "lower, upper and cells need one entry per axis (1 or 2 axes)",
            ));
        }
        if self.grid.cells.iter().any(|&c| c < 2) {
            return Err(ConfigError::key(
                "grid.cells",
                "need at least 2 cells per axis",
            ));
        }
        let square = |key: &str, m: &Vec<Vec<f64>>| {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                Err(ConfigError::key(key, format!("expected a {n}x{n} matrix")))
            } else {
                Ok(())
            }
        };
        let vector = |key: &str, v: &Vec<f64>| {
            if v.len() != n {
                Err(ConfigError::key(key, format!("expected {n} entries")))
            } else {
                Ok(())
            }
        };
        let c = self.coefficients.as_ref();
        let a_direct = c.and_then(|c| c.a.as_ref());
        match (a_direct, &self.kernel) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::key(
                    "coefficients.a",
                    "give either coefficients.a or [kernel], not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::key(
                    "kernel",
                    "missing: give [kernel] or coefficients.a",
                ))
            }
            (Some(a), None) => square("coefficients.a", a)?,
            (None, Some(KernelConfig::Gaussian { mean, cov, .. })) => {
                vector("kernel.mean", mean)?;
                square("kernel.cov", cov)?;
            }
            (None, Some(KernelConfig::Product { marginals, .. })) => {
                if marginals.len() != n {
                    return Err(ConfigError::key(
                        "kernel.marginals",
                        format!("expected {n} marginals"),
                    ));
                }
            }
            (None, Some(KernelConfig::Tabulated { file, table, .. })) => {
                if file.is_some() == table.is_some() {
                    return Err(ConfigError::key(
                        "kernel.file",
                        "give exactly one of file or table",
                    ));
                }
            }
        }
        if let Some(d) = &self.darcy {
            if c.is_some_and(|c| c.k.is_some() || c.b.is_some()) {
                return Err(ConfigError::key(
                    "darcy",
                    "give either [darcy] or coefficients.k/b, not both",
                ));
            }
            square("darcy.m0", &d.m0)?;
            square("darcy.k_bar", &d.k_bar)?;
            vector("darcy.g", &d.g)?;
        }
        if let Some(c) = c {
            if let Some(k) = &c.k {
                square("coefficients.k", k)?;
            }
            if let Some(b) = &c.b {
                vector("coefficients.b", b)?;
            }
        }
        if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
            return Err(ConfigError::key(
                "run.t_end",
                "must be finite and nonnegative",
            ));
        }
        if !(self.run.record_dt > 0.0) {
            return Err(ConfigError::key("run.record_dt", "must be positive"));
        }
        if let Some(x0) = &self.checks.x0 {
            vector("checks.x0", x0)?;
        }
        if self.has(CheckKind::MonteCarlo) {
            let Some(mc) = &self.monte_carlo else {
                return Err(ConfigError::key(
                    "monte_carlo",
                    "missing: the monte_carlo check needs this section",
                ));
            };
            if self.kernel.is_none() {
                return Err(ConfigError::key(
                    "kernel",
                    "the monte_carlo check needs a kernel",
                ));
            }
            if mc.particles.len() < 2 {
                return Err(ConfigError::key(
                    "monte_carlo.particles",
                    "need at least two ensemble sizes",
                ));
            }
            if !matches!(self.initial.profile, ProfileConfig::Gaussian { .. }) {
                return Err(ConfigError::key(
                    "initial.profile",
                    "the monte_carlo check needs a gaussian profile",
                ));
            }
        }
        if self.has(CheckKind::RateIndependence) && self.checks.rate_profiles.len() < 2 {
            return Err(ConfigError::key(
                "checks.rate_profiles",
                "need at least two extra profiles (three with the main one)",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[grid]
lower = [0.0]
upper = [1.0]
cells = [10]
[coefficients]
a = [[1.0]]
[state_law]
kind = "ideal"
c = 1.0
[initial]
u_star = 0.0
[initial.profile]
kind = "sine"
amplitude = 1.0
[run]
t_end = 0.1
record_dt = 0.05
"#;

    #[test]
    fn minimal_parses() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn missing_state_law_names_the_key() {
        let text = MINIMAL.replace("[state_law]\nkind = \"ideal\"\nc = 1.0\n", "");
        let e = Scenario::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("state_law"));
    }

    #[test]
    fn unknown_key_has_a_line() {
        let text = MINIMAL.replace("cells = [10]", "cells = [10]\nspacing = 0.1");
        let e = Scenario::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("spacing"));
        assert_eq!(e.line, Some(7));
    }

    #[test]
    fn shape_errors_are_keyed() {
        let text = MINIMAL.replace("a = [[1.0]]", "a = [[1.0, 0.0]]");
        let e = Scenario::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("coefficients.a"));
    }
}
