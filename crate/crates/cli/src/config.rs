//! Run configuration: a flat TOML key-value file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key a config file may contain.
const KNOWN_KEYS: &[&str] = &[
    "seed", "threads", "out_dir", "bond_dim", "g", "mu", "gamma", "calibrate", "tol", "max_steps", "dt0", "checkpoint", "mode",
    "t_end", "dt", "x1", "x2", "grid_points", "bc", "bc_a", "bc_b", "k_start", "k_stop", "k_count", "omega", "n_modes",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::config(format!("malformed config: {e}")))?;
        if let Some(key) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::config(format!("unknown config key {key:?}")));
        }
        Ok(ConfigFile { table })
    }

    /// `flags` overlaid on the file: a flag that is set wins over the same key in the file.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, flags: &T) -> Result<T, CliError> {
        let mut merged = serde_json::to_value(&self.table).map_err(|e| CliError::config(e.to_string()))?;
        let over = serde_json::to_value(flags).map_err(|e| CliError::config(e.to_string()))?;
        if let (Some(base), Some(over)) = (merged.as_object_mut(), over.as_object()) {
            for (k, v) in over {
                if !v.is_null() {
                    base.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(merged).map_err(|e| CliError::config(format!("invalid config value: {e}")))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Contact coupling g.
    #[arg(long)]
    pub g: Option<f64>,
    /// Chemical potential; alternative to --gamma.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Target dimensionless coupling gamma = g / rho; sets mu from the exact gas.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub g: f64,
    pub mu: f64,
}

impl ModelArgs {
    pub fn model(&self) -> Result<Model, CliError> {
        let g = positive("g", self.g)?;
        let mu = match (self.mu, self.gamma) {
            (Some(_), Some(_)) => return Err(CliError::config("give either mu or gamma, not both")),
            (Some(mu), None) => finite("mu", mu)?,
            (None, Some(gamma)) => {
                let gamma = positive("gamma", Some(gamma))?;
                qgpe::tdvp::mu_for_gamma(g, gamma).map_err(|e| CliError::config(e.to_string()))?
            }
            (None, None) => return Err(CliError::config("missing mu or gamma")),
        };
        Ok(Model { g, mu })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GroundArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Bond dimension D.
    #[arg(long)]
    pub bond_dim: Option<usize>,
    /// Stop once the gradient norm falls below this.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Initial imaginary-time step.
    #[arg(long)]
    pub dt0: Option<f64>,
    /// Adjust mu until the measured gamma matches the target within 1e-3.
    #[arg(long)]
    pub calibrate: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Input state (qgpe-cmps-v1).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Imaginary-time convergence threshold on the gradient norm.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Left end of a box; with --x2, --grid-points and --bc a uniform input is placed on this grid.
    #[arg(long, allow_hyphen_values = true)]
    pub x1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x2: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, value_enum)]
    pub bc: Option<BcKind>,
    /// Dirichlet amplitude at x1 as re,im.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    pub bc_a: Option<Vec<f64>>,
    /// Dirichlet amplitude at x2 as re,im.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    pub bc_b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub k_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_stop: Option<f64>,
    /// Number of grid points; 0 gives an empty table.
    #[arg(long)]
    pub k_count: Option<usize>,
}

impl GridArgs {
    /// Evenly spaced points, both ends included.
    pub fn points(&self, start: f64, stop: f64, count: usize) -> Result<Vec<f64>, CliError> {
        let start = finite("k_start", self.k_start.unwrap_or(start))?;
        let stop = finite("k_stop", self.k_stop.unwrap_or(stop))?;
        let n = self.k_count.unwrap_or(count);
        Ok(match n {
            0 => vec![],
            1 => vec![start],
            _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct RespondArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Wavenumbers in units of k_F.
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Drive frequency.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Number of branches to report.
    #[arg(long)]
    pub n_modes: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Flat TOML key-value file; flags override its entries.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to QGPE_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

pub fn positive<T: Into<f64> + Copy>(name: &str, v: Option<T>) -> Result<f64, CliError> {
    match v.map(Into::into) {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(CliError::config(format!("{name} must be positive and finite, got {x}"))),
        None => Err(CliError::config(format!("missing {name}"))),
    }
}

pub fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::config(format!("{name} must be finite, got {x}")))
    }
}

pub fn positive_count(name: &str, v: Option<usize>, default: usize) -> Result<usize, CliError> {
    match v.unwrap_or(default) {
        0 => Err(CliError::config(format!("{name} must be positive"))),
        n => Ok(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigFile::parse("g = 2.0\nmu = 1.0\nbond_dim = 4\n").unwrap();
        let flags = GroundArgs { bond_dim: Some(8), ..Default::default() };
        let r = file.resolve(&flags).unwrap();
        assert_eq!(r.bond_dim, Some(8));
        assert_eq!(r.model.g, Some(2.0));
        assert_eq!(r.model.mu, Some(1.0));
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        assert!(ConfigFile::parse("bond_dimension = 4").is_err());
        let file = ConfigFile::parse("bond_dim = -1").unwrap();
        assert!(file.resolve(&GroundArgs::default()).is_err());
    }

    #[test]
    fn model_needs_exactly_one_of_mu_and_gamma() {
        let m = ModelArgs { g: Some(1.0), mu: Some(1.0), gamma: Some(1.0) };
        assert!(m.model().is_err());
        let m = ModelArgs { g: Some(1.0), mu: None, gamma: None };
        assert!(m.model().is_err());
        let m = ModelArgs { g: Some(0.0), mu: Some(1.0), gamma: None };
        assert!(m.model().is_err());
        assert_eq!(ModelArgs { g: Some(1.0), mu: Some(0.5), gamma: None }.model().unwrap(), Model { g: 1.0, mu: 0.5 });
    }

    #[test]
    fn grids() {
        let g = GridArgs { k_start: Some(1.0), k_stop: Some(2.0), k_count: Some(3) };
        assert_eq!(g.points(0.0, 0.0, 0).unwrap(), vec![1.0, 1.5, 2.0]);
        let g = GridArgs { k_count: Some(0), ..Default::default() };
        assert!(g.points(0.1, 3.0, 30).unwrap().is_empty());
    }
}
