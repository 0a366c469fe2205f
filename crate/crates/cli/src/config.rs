//! Effective settings: built-in defaults, then the TOML file, then flags.
//!
//! ```toml
//! seed = 7
//! threads = 1
//! fourier_nodes = 2000
//! fourier_umax = 60.0
//!
//! [calibration]
//! max_evaluations = 5000
//! restarts = 2
//!
//! [simulation]
//! paths = 100000
//! steps_per_tenor = 64
//!
//! [filter]
//! max_tenors = 6
//! moneyness_lower = -15.0
//! moneyness_upper = 5.0
//! ```

use serde::{Deserialize, Serialize};
use ustvol::calibration::CalibrationConfig;
use ustvol::market::FilterConfig;
use ustvol::mc::SimConfig;
use ustvol::pricing::QuadratureConfig;

use crate::{CliError, CliResult, Global};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
  seed: Option<u64>,
  threads: Option<usize>,
  fourier_nodes: Option<usize>,
  fourier_umax: Option<f64>,
  #[serde(default)]
  calibration: CalibrationSection,
  #[serde(default)]
  simulation: SimulationSection,
  #[serde(default)]
  filter: FilterSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationSection {
  max_evaluations: Option<usize>,
  restarts: Option<usize>,
  target_rmse: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
  paths: Option<usize>,
  steps_per_tenor: Option<usize>,
  antithetic: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterSection {
  max_tenors: Option<usize>,
  moneyness_lower: Option<f64>,
  moneyness_upper: Option<f64>,
  rate: Option<f64>,
}

/// Settings every command reads.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
  pub seed: u64,
  pub threads: Option<usize>,
  pub quad: QuadratureConfig,
  pub calibration: CalibrationConfig,
  pub simulation: SimConfig,
  pub filter: FilterConfig,
}

impl Settings {
  pub fn resolve(global: &Global) -> CliResult<Self> {
    let file = match &global.config {
      Some(path) => {
        let text = std::fs::read_to_string(path)
          .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        toml::from_str::<FileConfig>(&text)
          .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?
      }
      None => FileConfig::default(),
    };
    let seed = global.seed.or(file.seed).unwrap_or(0);
    let threads = global.threads.or(file.threads);
    if threads == Some(0) {
      return Err(CliError::validation("threads must be at least 1"));
    }
    let mut quad = QuadratureConfig::default();
    if let Some(n) = global.fourier_nodes.or(file.fourier_nodes) {
      quad.node_count = n;
    }
    quad.u_max = global.fourier_umax.or(file.fourier_umax);
    quad.validate()?;

    let mut calibration = CalibrationConfig { rng_seed: seed, ..CalibrationConfig::default() };
    if global.fourier_nodes.or(file.fourier_nodes).is_some() || quad.u_max.is_some() {
      calibration.quad = quad;
    }
    let c = &file.calibration;
    if let Some(v) = c.max_evaluations {
      calibration.max_evaluations = v;
    }
    if let Some(v) = c.restarts {
      calibration.restarts = v;
    }
    if let Some(v) = c.target_rmse {
      calibration.target_rmse = v;
    }

    let mut simulation = SimConfig { rng_seed: seed, ..SimConfig::default() };
    let s = &file.simulation;
    if let Some(v) = s.paths {
      simulation.paths = v;
    }
    if let Some(v) = s.steps_per_tenor {
      simulation.steps_per_tenor = v;
    }
    if let Some(v) = s.antithetic {
      simulation.antithetic = v;
    }

    let mut filter = FilterConfig::default();
    let f = &file.filter;
    if let Some(v) = f.max_tenors {
      filter.max_tenors = v;
    }
    if let Some(v) = f.moneyness_lower {
      filter.moneyness_lower = v;
    }
    if let Some(v) = f.moneyness_upper {
      filter.moneyness_upper = v;
    }
    if let Some(v) = f.rate {
      filter.rate = v;
    }
    Ok(Self { seed, threads, quad, calibration, simulation, filter })
  }
}
