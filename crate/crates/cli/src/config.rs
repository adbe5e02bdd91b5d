//! Run configuration: a TOML document (`key = value`, `[section]` headers).
//!
//! Every field has a default, so a file naming only the model and the
//! initial condition is complete. Unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tetramer::analysis::{default_sweep, ClassicalOptions, QuantumOptions, DEFAULT_CRITERION};
use tetramer::hamiltonian::ModelParams;
use tetramer::meanfield::IntegrationOptions;
use tetramer::spectral::DEFAULT_CHAOS_WINDOW;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub evolution: EvolutionConfig,
    pub quantum: QuantumOptions,
    pub classical: ClassicalOptions,
    pub poincare: PoincareConfig,
    pub sweep: SweepConfig,
    pub spectral: SpectralConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Total boson number N.
    pub n: u32,
    /// Interaction in units of the hopping, `UN/Ω`.
    pub un: f64,
    /// Monomer-trimer coupling ω / Ω.
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub x0: f64,
    pub eps0: f64,
}

/// Sampling of the `evolve-*` time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub t_end: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub trajectories: usize,
    pub seed: u64,
    pub t_end: f64,
    pub max_crossings: usize,
    pub integration: IntegrationOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Thermalization criterion on Δρ.
    pub c: f64,
    /// Couplings tried by threshold searches.
    pub omega: Vec<f64>,
    /// Also compute classical thresholds in `threshold` and the scans.
    pub classical: bool,
    pub eps: Vec<f64>,
    pub un: Vec<f64>,
    /// Particle numbers of the scaling study.
    pub n: Vec<u32>,
    /// Common `ωN/Ω` grid of the scaling study.
    pub scaled_omega: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub chaos_window: usize,
    /// ε bin of the plotted chaos-map grid.
    pub eps_bin: f64,
    pub spacing_n: Vec<u32>,
    pub spacing_window: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n: 40,
            un: 10.0,
            omega: 0.1,
        }
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { x0: 0.6, eps0: 0.3 }
    }
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            t_end: 2000.0,
            samples: 401,
        }
    }
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            trajectories: 20,
            seed: 1,
            t_end: 2000.0,
            max_crossings: 400,
            integration: IntegrationOptions::default(),
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c: DEFAULT_CRITERION,
            omega: default_sweep(),
            classical: false,
            eps: vec![0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
            un: vec![2.0, 5.0, 10.0, 15.0, 20.0],
            n: vec![20, 30, 40, 50],
            scaled_omega: vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0],
        }
    }
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            chaos_window: DEFAULT_CHAOS_WINDOW,
            eps_bin: 0.02,
            spacing_n: (20..=60).collect(),
            spacing_window: [0.2, 0.3],
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

/// A rejected configuration; the message carries line numbers when the
/// problem is in the document text.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams::from_un(self.model.n, self.model.un, self.model.omega)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if m.n < 3 {
            return Err(err(format!("model.n = {}: the antisymmetric sector is empty below N = 3", m.n)));
        }
        if !(m.un.is_finite() && m.un > 0.0) {
            return Err(err(format!("model.un = {}: the on-site interaction must be repulsive (> 0)", m.un)));
        }
        if !(m.omega.is_finite() && m.omega >= 0.0) {
            return Err(err(format!("model.omega = {}: the coupling must be finite and >= 0", m.omega)));
        }
        let i = &self.initial;
        if !(0.0..=1.0).contains(&i.x0) || !(0.0..=1.0).contains(&i.eps0) {
            return Err(err(format!("initial.x0 = {}, initial.eps0 = {}: both must lie in [0, 1]", i.x0, i.eps0)));
        }
        let e = &self.evolution;
        if !(e.t_end > 0.0) || e.samples < 2 {
            return Err(err("evolution: t_end must be positive and samples at least 2"));
        }
        let s = &self.sweep;
        if !(s.c > 0.0) {
            return Err(err(format!("sweep.c = {}: must be positive", s.c)));
        }
        if s.omega.len() < 2 || s.omega.iter().any(|w| !(*w > 0.0)) || s.omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("sweep.omega: need at least two positive, strictly increasing couplings"));
        }
        if s.scaled_omega.iter().any(|w| !(*w > 0.0)) || s.scaled_omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("sweep.scaled_omega: values must be positive and strictly increasing"));
        }
        if s.eps.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(err("sweep.eps: values must lie in [0, 1]"));
        }
        if s.un.iter().any(|v| !(*v > 0.0)) {
            return Err(err("sweep.un: values must be positive (repulsive interaction)"));
        }
        if s.n.iter().chain(&self.spectral.spacing_n).any(|&n| n < 3) {
            return Err(err("particle numbers must be at least 3"));
        }
        let sp = &self.spectral;
        if sp.chaos_window < 3 {
            return Err(err("spectral.chaos_window must be at least 3"));
        }
        if !(sp.eps_bin > 0.0 && sp.eps_bin <= 1.0) {
            return Err(err("spectral.eps_bin must lie in (0, 1]"));
        }
        if !(sp.spacing_window[0] < sp.spacing_window[1]) {
            return Err(err("spectral.spacing_window must be [low, high] with low < high"));
        }
        if self.classical.members == 0 || self.poincare.trajectories == 0 {
            return Err(err("classical.members and poincare.trajectories must be positive"));
        }
        self.params().validate().map_err(|e| err(e.to_string()))
    }

    /// Full document with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, &[])
}

/// Parses `text`, then applies `section.key=value` overrides (values in TOML
/// syntax; bare words are taken as strings).
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    // a direct parse reports errors against the document's own lines
    let config: RunConfig = toml::from_str(text).map_err(|e| err(format!("invalid configuration: {e}")))?;
    if overrides.is_empty() {
        config.validate()?;
        return Ok(config);
    }
    let mut table: toml::Table = toml::from_str(text).map_err(|e| err(e.to_string()))?;
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| err(format!("override `{o}`: expected section.key=value")))?;
        let value = parse_value(raw.trim());
        set_path(&mut table, path.trim(), value).map_err(|e| err(format!("override `{o}`: {e}")))?;
    }
    let config = RunConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| err(format!("invalid configuration after overrides: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    parse_with_overrides(&text, overrides).map_err(|e| err(format!("{}: {e}", path.display())))
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), String> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or("empty key")?;
    let mut cur = table;
    for k in keys {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("`{k}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config("[model]\nn = 30\nun = 10.0\n[initial]\nx0 = 0.6\neps0 = 0.3\n").unwrap();
        assert_eq!(c.model.n, 30);
        assert_eq!(c.sweep, SweepConfig::default());
        assert_eq!(c.classical, ClassicalOptions::default());
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.model.n = 70;
        c.sweep.classical = true;
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config("[model]\nn = 30\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("bogus") && e.contains("line 3"), "{e}");
    }

    #[test]
    fn negative_interaction_rejected() {
        let e = parse_config("[model]\nun = -10.0\n").unwrap_err().to_string();
        assert!(e.contains("repulsive"), "{e}");
    }

    #[test]
    fn overrides_apply_and_validate() {
        let c = parse_with_overrides("", &["model.n=25".into(), "sweep.eps=[0.2, 0.3]".into()]).unwrap();
        assert_eq!(c.model.n, 25);
        assert_eq!(c.sweep.eps, vec![0.2, 0.3]);
        assert!(parse_with_overrides("", &["model.nn=25".into()]).is_err());
        assert!(parse_with_overrides("", &["model.omega=-1".into()]).is_err());
    }
}
