//! The uniform characteristic-function contract and the model registry.
//!
//! Every model is consumed through [`ModelCf`]: the characteristic function
//! of the standardized return `Z = (X_τ − X₀ + σ²τ/2)/(σ√τ)` at a complex
//! frequency, where `σ` is the model's reference volatility. The registry
//! ([`ModelId`], [`ModelSpec`]) maps string ids and flat parameter vectors
//! to concrete models for calibration and the command line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{
  ForwardVariance, HestonMertonModel, HestonMertonParams, MertonJumps, RoughHestonModel, RoughHestonParams,
};
use crate::edgeworth::{ContinuousExpansion, Displacement, EdgeworthParams, JumpFactor};
use crate::{Error, Result, C64};

/// Characteristic function of the standardized log-return.
pub trait ModelCf: Send + Sync {
  /// Volatility used to standardize returns at tenor `tau`.
  fn reference_vol(&self, tau: f64) -> f64;

  /// `E[e^{iuZ_τ}]` for a possibly complex `u`.
  fn standardized_cf(&self, u: C64, tau: f64) -> Result<C64>;

  /// Values over a frequency grid sharing one tenor.
  fn standardized_cf_batch(&self, us: &[C64], tau: f64) -> Result<Vec<C64>> {
    us.iter().map(|&u| self.standardized_cf(u, tau)).collect()
  }
}

/// Edgeworth++ (and BS++) as a pricing model.
///
/// The expansion is evaluated as is, then recentred so that `e^{X}` is a
/// martingale: the displacement changes the drift `−½σ_t²`, and the jump
/// compensator is applied in price units, `k = e^{μ_J + σ_J²/2} − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeworthModel {
  params: EdgeworthParams,
  displacement: Option<Displacement>,
}

/// Tenor-level constants of [`EdgeworthModel`].
#[derive(Debug, Clone, Copy)]
struct EdgeworthTenor {
  continuous: ContinuousExpansion,
  jumps: JumpFactor,
  drift: f64,
}

impl EdgeworthTenor {
  #[inline]
  fn eval(&self, u: C64) -> C64 {
    (C64::i() * u * self.drift).exp() * self.continuous.eval(u) * self.jumps.eval(u)
  }
}

impl EdgeworthModel {
  pub fn new(params: EdgeworthParams, displacement: Option<Displacement>) -> Result<Self> {
    params.validate()?;
    if let Some(d) = &displacement {
      d.validate(params.sigma0)?;
    }
    Ok(Self { params, displacement })
  }

  /// Displaced Black–Scholes: the BS++ model.
  pub fn bs_pp(sigma0: f64, displacement: Displacement) -> Result<Self> {
    Self::new(EdgeworthParams::black_scholes(sigma0), Some(displacement))
  }

  pub fn params(&self) -> &EdgeworthParams {
    &self.params
  }

  pub fn displacement(&self) -> Option<&Displacement> {
    self.displacement.as_ref()
  }

  fn tenor(&self, tau: f64) -> Result<EdgeworthTenor> {
    let p = &self.params;
    let continuous = ContinuousExpansion::new(tau, p, self.displacement.as_ref())?;
    let scale = p.sigma0 * tau.sqrt();
    let price_k = (p.mu_j + 0.5 * p.sigma_j * p.sigma_j).exp_m1();
    Ok(EdgeworthTenor {
      continuous,
      jumps: JumpFactor::with_compensator(tau, p, price_k / scale),
      drift: continuous.integrals.martingale_shift(p.sigma0),
    })
  }
}

impl ModelCf for EdgeworthModel {
  fn reference_vol(&self, _tau: f64) -> f64 {
    self.params.sigma0
  }

  fn standardized_cf(&self, u: C64, tau: f64) -> Result<C64> {
    Ok(self.tenor(tau)?.eval(u))
  }

  fn standardized_cf_batch(&self, us: &[C64], tau: f64) -> Result<Vec<C64>> {
    let t = self.tenor(tau)?;
    Ok(us.iter().map(|&u| t.eval(u)).collect())
  }
}

/// Registered model identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
  Edgeworth,
  EdgeworthPp,
  BsPp,
  HestonMerton1f,
  HestonMerton1fPp,
  HestonMerton2f,
  HestonMerton2fPp,
  RoughHestonPp,
  RoughHestonMertonPp,
}

impl ModelId {
  pub const ALL: [ModelId; 9] = [
    ModelId::Edgeworth,
    ModelId::EdgeworthPp,
    ModelId::BsPp,
    ModelId::HestonMerton1f,
    ModelId::HestonMerton1fPp,
    ModelId::HestonMerton2f,
    ModelId::HestonMerton2fPp,
    ModelId::RoughHestonPp,
    ModelId::RoughHestonMertonPp,
  ];

  pub fn as_str(self) -> &'static str {
    match self {
      ModelId::Edgeworth => "edgeworth",
      ModelId::EdgeworthPp => "edgeworth_pp",
      ModelId::BsPp => "bs_pp",
      ModelId::HestonMerton1f => "heston_merton_1f",
      ModelId::HestonMerton1fPp => "heston_merton_1f_pp",
      ModelId::HestonMerton2f => "heston_merton_2f",
      ModelId::HestonMerton2fPp => "heston_merton_2f_pp",
      ModelId::RoughHestonPp => "rough_heston_pp",
      ModelId::RoughHestonMertonPp => "rough_heston_merton_pp",
    }
  }

  /// Comma-separated list of every id.
  pub fn registry() -> String {
    Self::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
  }

  /// Whether the model carries one free parameter per extra tenor.
  pub fn has_term_structure(self) -> bool {
    !matches!(self, ModelId::Edgeworth | ModelId::HestonMerton1f | ModelId::HestonMerton2f)
  }

  /// Free parameters on an `n`-tenor surface.
  pub fn param_count(self, n_tenors: usize) -> usize {
    self.param_names(n_tenors).len()
  }

  pub fn param_names(self, n_tenors: usize) -> Vec<String> {
    let extra = n_tenors.saturating_sub(1);
    let fixed: &[&str] = match self {
      ModelId::Edgeworth | ModelId::EdgeworthPp => {
        &["sigma0", "beta_tilde0", "rho0", "eta0", "alpha_prime0", "lambda0", "mu_J", "sigma_J"]
      }
      ModelId::BsPp => &["sigma0"],
      ModelId::HestonMerton1f | ModelId::HestonMerton1fPp => &["v0", "kappa", "theta", "zeta", "rho", "c0", "mu_x", "sigma_x"],
      ModelId::HestonMerton2f | ModelId::HestonMerton2fPp => &[
        "v1_0", "v2_0", "kappa1", "kappa2", "theta1", "theta2", "zeta1", "zeta2", "rho1", "rho2", "rho_jump", "mu_x",
        "sigma_x", "m_v", "c0", "c1", "c2",
      ],
      ModelId::RoughHestonPp => &["sigma0", "rho", "nu", "hurst"],
      ModelId::RoughHestonMertonPp => &["sigma0", "rho", "nu", "hurst", "lambda", "mu_J", "sigma_J"],
    };
    let mut names: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    if self.has_term_structure() {
      let prefix = match self {
        ModelId::RoughHestonPp | ModelId::RoughHestonMertonPp => "xi",
        ModelId::HestonMerton1fPp | ModelId::HestonMerton2fPp => "phi_v",
        _ => "a",
      };
      names.extend((1..=extra).map(|k| format!("{prefix}{k}")));
    }
    names
  }

  /// Default box constraints, in the order of [`ModelId::param_names`].
  pub fn default_bounds(self, n_tenors: usize) -> Vec<(f64, f64)> {
    let extra = n_tenors.saturating_sub(1);
    let mut b: Vec<(f64, f64)> = match self {
      ModelId::Edgeworth | ModelId::EdgeworthPp => vec![
        (0.01, 3.0),
        (0.0, 10.0),
        (-1.0, 1.0),
        (-20.0, 20.0),
        (-20.0, 20.0),
        (0.0, 500.0),
        (-0.2, 0.2),
        (0.0, 0.2),
      ],
      ModelId::BsPp => vec![(0.01, 3.0)],
      ModelId::HestonMerton1f | ModelId::HestonMerton1fPp => vec![
        (1e-4, 4.0),
        (0.01, 100.0),
        (1e-4, 4.0),
        (0.01, 10.0),
        (-1.0, 1.0),
        (0.0, 500.0),
        (-0.2, 0.2),
        (0.0, 0.2),
      ],
      ModelId::HestonMerton2f | ModelId::HestonMerton2fPp => vec![
        (1e-4, 4.0),
        (0.0, 4.0),
        (0.01, 100.0),
        (0.01, 100.0),
        (1e-4, 4.0),
        (0.0, 4.0),
        (0.01, 10.0),
        (0.0, 10.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-0.2, 0.2),
        (0.0, 0.2),
        (0.0, 0.5),
        (0.0, 500.0),
        (0.0, 500.0),
        (0.0, 500.0),
      ],
      ModelId::RoughHestonPp => vec![(0.01, 3.0), (-1.0, 1.0), (0.01, 5.0), (0.01, 0.5)],
      ModelId::RoughHestonMertonPp => {
        vec![(0.01, 3.0), (-1.0, 1.0), (0.01, 5.0), (0.01, 0.5), (0.0, 500.0), (-0.2, 0.2), (0.0, 0.2)]
      }
    };
    if self.has_term_structure() {
      let range = match self {
        ModelId::RoughHestonPp | ModelId::RoughHestonMertonPp => (1e-4, 9.0),
        ModelId::HestonMerton1fPp | ModelId::HestonMerton2fPp => (0.0, 4.0),
        // The calibrator additionally keeps a_k above −σ₀.
        _ => (-3.0, 5.0),
      };
      b.extend(std::iter::repeat(range).take(extra));
    }
    b
  }

  /// Builds a model from a flat parameter vector on the given tenor grid.
  pub fn spec_from_vector(self, x: &[f64], tenors: &[f64]) -> Result<ModelSpec> {
    let n = tenors.len().max(1);
    let want = self.param_count(n);
    if x.len() != want {
      return Err(Error::InvalidInput(format!("{} expects {want} parameters, got {}", self.as_str(), x.len())));
    }
    if self.has_term_structure() && tenors.is_empty() {
      return Err(Error::InvalidInput(format!("{} needs a tenor grid", self.as_str())));
    }
    let edgeworth = |x: &[f64]| EdgeworthParams {
      sigma0: x[0],
      beta_tilde0: x[1],
      rho0: x[2],
      eta0: x[3],
      alpha_prime0: x[4],
      lambda0: x[5],
      mu_j: x[6],
      sigma_j: x[7],
    };
    let one_factor = |x: &[f64]| HestonMertonParams::one_factor(x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
    let two_factor = |x: &[f64]| HestonMertonParams {
      v1_0: x[0],
      v2_0: x[1],
      kappa1: x[2],
      kappa2: x[3],
      theta1: x[4],
      theta2: x[5],
      zeta1: x[6],
      zeta2: x[7],
      rho1: x[8],
      rho2: x[9],
      rho_jump: x[10],
      mu_x: x[11],
      sigma_x: x[12],
      m_v: x[13],
      c0: x[14],
      c1: x[15],
      c2: x[16],
      factor_count: 2,
      feller_enforced: false,
      shifts: None,
    };
    let displacement = |shifts: &[f64]| Displacement::new(tenors.to_vec(), shifts.to_vec());
    let rough = |x: &[f64], xi: &[f64], jumps: Option<MertonJumps>| RoughHestonParams {
      hurst: x[3],
      nu: x[2],
      rho: x[1],
      xi0: ForwardVariance {
        tenors: tenors.to_vec(),
        levels: std::iter::once(x[0] * x[0]).chain(xi.iter().copied()).collect(),
      },
      jumps,
    };
    Ok(match self {
      ModelId::Edgeworth => ModelSpec::Edgeworth { params: edgeworth(x) },
      ModelId::EdgeworthPp => ModelSpec::EdgeworthPp { params: edgeworth(x), displacement: displacement(&x[8..])? },
      ModelId::BsPp => ModelSpec::BsPp { sigma0: x[0], displacement: displacement(&x[1..])? },
      ModelId::HestonMerton1f => ModelSpec::HestonMerton1f { params: one_factor(x) },
      ModelId::HestonMerton1fPp => {
        ModelSpec::HestonMerton1fPp { params: HestonMertonParams { shifts: Some(displacement(&x[8..])?), ..one_factor(x) } }
      }
      ModelId::HestonMerton2f => ModelSpec::HestonMerton2f { params: two_factor(x) },
      ModelId::HestonMerton2fPp => {
        ModelSpec::HestonMerton2fPp { params: HestonMertonParams { shifts: Some(displacement(&x[17..])?), ..two_factor(x) } }
      }
      ModelId::RoughHestonPp => ModelSpec::RoughHestonPp { params: rough(x, &x[4..], None) },
      ModelId::RoughHestonMertonPp => ModelSpec::RoughHestonMertonPp {
        params: rough(x, &x[7..], Some(MertonJumps { lambda: x[4], mu_j: x[5], sigma_j: x[6] })),
      },
    })
  }
}

impl fmt::Display for ModelId {
  fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    f.write_str(self.as_str())
  }
}

impl FromStr for ModelId {
  type Err = Error;

  fn from_str(s: &str) -> Result<Self> {
    Self::ALL
      .iter()
      .copied()
      .find(|m| m.as_str() == s)
      .ok_or_else(|| Error::InvalidInput(format!("unknown model '{s}'; registered models: {}", Self::registry())))
  }
}

/// A fully specified model, serialized with a `"model"` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
  Edgeworth { params: EdgeworthParams },
  EdgeworthPp { params: EdgeworthParams, displacement: Displacement },
  BsPp { sigma0: f64, displacement: Displacement },
  #[serde(rename = "heston_merton_1f")]
  HestonMerton1f { params: HestonMertonParams },
  #[serde(rename = "heston_merton_1f_pp")]
  HestonMerton1fPp { params: HestonMertonParams },
  #[serde(rename = "heston_merton_2f")]
  HestonMerton2f { params: HestonMertonParams },
  #[serde(rename = "heston_merton_2f_pp")]
  HestonMerton2fPp { params: HestonMertonParams },
  RoughHestonPp { params: RoughHestonParams },
  RoughHestonMertonPp { params: RoughHestonParams },
}

impl ModelSpec {
  pub fn id(&self) -> ModelId {
    match self {
      ModelSpec::Edgeworth { .. } => ModelId::Edgeworth,
      ModelSpec::EdgeworthPp { .. } => ModelId::EdgeworthPp,
      ModelSpec::BsPp { .. } => ModelId::BsPp,
      ModelSpec::HestonMerton1f { .. } => ModelId::HestonMerton1f,
      ModelSpec::HestonMerton1fPp { .. } => ModelId::HestonMerton1fPp,
      ModelSpec::HestonMerton2f { .. } => ModelId::HestonMerton2f,
      ModelSpec::HestonMerton2fPp { .. } => ModelId::HestonMerton2fPp,
      ModelSpec::RoughHestonPp { .. } => ModelId::RoughHestonPp,
      ModelSpec::RoughHestonMertonPp { .. } => ModelId::RoughHestonMertonPp,
    }
  }

  /// Checks the parameters and the structural constraints of the id.
  pub fn validate(&self) -> Result<()> {
    match self {
      ModelSpec::Edgeworth { params } => params.validate(),
      ModelSpec::EdgeworthPp { params, displacement } => {
        params.validate()?;
        displacement.validate(params.sigma0)
      }
      ModelSpec::BsPp { sigma0, displacement } => {
        EdgeworthParams::black_scholes(*sigma0).validate()?;
        displacement.validate(*sigma0)
      }
      ModelSpec::HestonMerton1f { params } | ModelSpec::HestonMerton1fPp { params } => {
        if params.factor_count != 1 {
          return Err(Error::param("factor_count", "must be 1 for a one-factor model"));
        }
        params.validate()
      }
      ModelSpec::HestonMerton2f { params } | ModelSpec::HestonMerton2fPp { params } => {
        if params.factor_count != 2 {
          return Err(Error::param("factor_count", "must be 2 for a two-factor model"));
        }
        params.validate()
      }
      ModelSpec::RoughHestonPp { params } => {
        if params.jumps.is_some() {
          return Err(Error::param("jumps", "use rough_heston_merton_pp for jumps"));
        }
        params.validate()
      }
      ModelSpec::RoughHestonMertonPp { params } => {
        if params.jumps.is_none() {
          return Err(Error::param("jumps", "rough_heston_merton_pp requires jump parameters"));
        }
        params.validate()
      }
    }
  }

  /// Instantiates the model.
  pub fn build(&self) -> Result<Box<dyn ModelCf>> {
    self.validate()?;
    Ok(match self {
      ModelSpec::Edgeworth { params } => Box::new(EdgeworthModel::new(*params, None)?),
      ModelSpec::EdgeworthPp { params, displacement } => Box::new(EdgeworthModel::new(*params, Some(displacement.clone()))?),
      ModelSpec::BsPp { sigma0, displacement } => Box::new(EdgeworthModel::bs_pp(*sigma0, displacement.clone())?),
      ModelSpec::HestonMerton1f { params }
      | ModelSpec::HestonMerton1fPp { params }
      | ModelSpec::HestonMerton2f { params }
      | ModelSpec::HestonMerton2fPp { params } => Box::new(HestonMertonModel::new(params.clone())?),
      ModelSpec::RoughHestonPp { params } | ModelSpec::RoughHestonMertonPp { params } => {
        Box::new(RoughHestonModel::new(params.clone())?)
      }
    })
  }

  /// Tenor grid carried by the parameters, if any.
  pub fn tenors(&self) -> Option<Vec<f64>> {
    match self {
      ModelSpec::EdgeworthPp { displacement, .. } | ModelSpec::BsPp { displacement, .. } => Some(displacement.tenors.clone()),
      ModelSpec::HestonMerton1fPp { params } | ModelSpec::HestonMerton2fPp { params } => {
        params.shifts.as_ref().map(|d| d.tenors.clone())
      }
      ModelSpec::RoughHestonPp { params } | ModelSpec::RoughHestonMertonPp { params } => Some(params.xi0.tenors.clone()),
      _ => None,
    }
  }

  /// Flat parameter vector in the order of [`ModelId::param_names`].
  pub fn to_vector(&self) -> Vec<f64> {
    let edgeworth = |p: &EdgeworthParams| {
      vec![p.sigma0, p.beta_tilde0, p.rho0, p.eta0, p.alpha_prime0, p.lambda0, p.mu_j, p.sigma_j]
    };
    let one_factor =
      |p: &HestonMertonParams| vec![p.v1_0, p.kappa1, p.theta1, p.zeta1, p.rho1, p.c0, p.mu_x, p.sigma_x];
    let two_factor = |p: &HestonMertonParams| {
      vec![
        p.v1_0, p.v2_0, p.kappa1, p.kappa2, p.theta1, p.theta2, p.zeta1, p.zeta2, p.rho1, p.rho2, p.rho_jump, p.mu_x,
        p.sigma_x, p.m_v, p.c0, p.c1, p.c2,
      ]
    };
    let shifts = |p: &HestonMertonParams| p.shifts.as_ref().map(|d| d.shifts.clone()).unwrap_or_default();
    let rough = |p: &RoughHestonParams| vec![p.xi0.levels[0].sqrt(), p.rho, p.nu, p.hurst];
    match self {
      ModelSpec::Edgeworth { params } => edgeworth(params),
      ModelSpec::EdgeworthPp { params, displacement } => [edgeworth(params), displacement.shifts.clone()].concat(),
      ModelSpec::BsPp { sigma0, displacement } => [vec![*sigma0], displacement.shifts.clone()].concat(),
      ModelSpec::HestonMerton1f { params } => one_factor(params),
      ModelSpec::HestonMerton1fPp { params } => [one_factor(params), shifts(params)].concat(),
      ModelSpec::HestonMerton2f { params } => two_factor(params),
      ModelSpec::HestonMerton2fPp { params } => [two_factor(params), shifts(params)].concat(),
      ModelSpec::RoughHestonPp { params } => [rough(params), params.xi0.levels[1..].to_vec()].concat(),
      ModelSpec::RoughHestonMertonPp { params } => {
        let j = params.jumps.unwrap_or(MertonJumps { lambda: 0.0, mu_j: 0.0, sigma_j: 0.0 });
        [rough(params), vec![j.lambda, j.mu_j, j.sigma_j], params.xi0.levels[1..].to_vec()].concat()
      }
    }
  }
}

#[cfg(test)]
mod tests {
  use super::*;
  use crate::edgeworth::psi_full;

  fn general() -> EdgeworthParams {
    EdgeworthParams {
      sigma0: 0.2,
      beta_tilde0: 0.5,
      rho0: -0.6,
      eta0: 0.3,
      alpha_prime0: 0.4,
      lambda0: 40.0,
      mu_j: -0.01,
      sigma_j: 0.02,
    }
  }

  #[test]
  fn registry_round_trips_ids() {
    for id in ModelId::ALL {
      assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
    }
    let err = "heston".parse::<ModelId>().unwrap_err().to_string();
    assert!(err.contains("rough_heston_merton_pp"));
  }

  #[test]
  fn parameter_counts() {
    let n = 6;
    assert_eq!(ModelId::EdgeworthPp.param_count(n), 7 + n);
    assert_eq!(ModelId::RoughHestonPp.param_count(n), 3 + n);
    assert_eq!(ModelId::HestonMerton2f.param_count(n), 17);
    assert_eq!(ModelId::HestonMerton2fPp.param_count(n), 22);
    assert_eq!(ModelId::RoughHestonMertonPp.param_count(n), 12);
    assert_eq!(ModelId::HestonMerton1fPp.param_count(n), 13);
    assert_eq!(ModelId::HestonMerton1f.param_count(n), 8);
    assert_eq!(ModelId::BsPp.param_count(n), n);
    for id in ModelId::ALL {
      assert_eq!(id.default_bounds(n).len(), id.param_count(n), "{id}");
    }
  }

  #[test]
  fn vectors_round_trip() {
    let tenors = [0.001, 0.003, 0.01];
    for id in ModelId::ALL {
      let x: Vec<f64> = id.default_bounds(3).iter().map(|&(lo, hi)| lo + 0.37 * (hi - lo)).collect();
      let x: Vec<f64> = x.iter().enumerate().map(|(k, &v)| if id.as_str().starts_with("heston") && k == 0 { 0.04 } else { v }).collect();
      let spec = id.spec_from_vector(&x, &tenors).unwrap();
      assert_eq!(spec.id(), id);
      assert_eq!(spec.to_vector(), x, "{id}");
      let json = serde_json::to_string(&spec).unwrap();
      assert!(json.contains(&format!("\"model\":\"{}\"", id.as_str())));
      assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), spec);
    }
  }

  #[test]
  fn edgeworth_model_is_a_martingale_in_price() {
    let d = Displacement::new(vec![0.002, 0.005, 0.01], vec![0.05, -0.04]).unwrap();
    let m = EdgeworthModel::new(general(), Some(d)).unwrap();
    for &tau in &[0.001, 0.004, 0.01] {
      let s = 0.2 * f64::sqrt(tau);
      // E[e^{X_τ − X₀}] = e^{−σ²τ/2} Ψ(−iσ√τ); the expansion is exact up to
      // its own truncation, so only the leading order is pinned.
      let v = m.standardized_cf(C64::new(0.0, -s), tau).unwrap() * (-0.5 * s * s).exp();
      assert!((v - 1.0).norm() < 0.05 * tau.sqrt(), "tau {tau}: {v}");
    }
  }

  #[test]
  fn drift_correction_vanishes_without_shift_or_jumps() {
    let p = EdgeworthParams { lambda0: 0.0, ..general() };
    let m = EdgeworthModel::new(p, None).unwrap();
    for k in -10..=10 {
      let u = C64::new(0.4 * k as f64, 0.0);
      assert_eq!(m.standardized_cf(u, 0.01).unwrap(), psi_full(u, 0.01, &p, None).unwrap());
    }
  }

  #[test]
  fn bs_pp_is_exactly_gaussian_in_total_variance() {
    let d = Displacement::new(vec![0.01, 0.02], vec![0.1]).unwrap();
    let m = EdgeworthModel::bs_pp(0.2, d).unwrap();
    let tau: f64 = 0.02;
    let w = 0.04 * (0.01 + 2.25 * 0.01);
    let s = 0.2 * tau.sqrt();
    for k in 0..20 {
      let u = C64::new(0.5 * k as f64, -0.3);
      // Z = (X + σ₀²τ/2)/s with X ~ N(−w/2, w).
      let mean = (0.5 * s * s - 0.5 * w) / s;
      let var = w / (s * s);
      let r = (C64::i() * u * mean - u * u * (0.5 * var)).exp();
      assert!((m.standardized_cf(u, tau).unwrap() - r).norm() < 1e-14);
    }
  }

  #[test]
  fn spec_validation_checks_structure() {
    let tenors = [0.01, 0.02];
    let x = ModelId::RoughHestonPp.default_bounds(2).iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect::<Vec<_>>();
    let ModelSpec::RoughHestonPp { params } = ModelId::RoughHestonPp.spec_from_vector(&x, &tenors).unwrap() else {
      unreachable!()
    };
    let bad = ModelSpec::RoughHestonMertonPp { params };
    assert!(bad.validate().is_err());
    assert!(ModelId::EdgeworthPp.spec_from_vector(&[0.2; 3], &tenors).is_err());
  }
}
