//! Heston–Merton models with self-exciting jump intensity.
//!
//! Two square-root variance factors drive the log-price
//!
//! ```text
//! dX_t   = (−½v₁ − ½v₂ − k̄ c_t) dt + √v₁ dW₁ + √v₂ dW₂ + J_x dN_t
//! dv_i   = κ_i(θ_i − v_i) dt + ζ_i √v_i dB_i + 1{i=1} J_v dN_t,   d⟨W_i, B_i⟩ = ρ_i dt
//! c_t    = c₀ + c₁v₁ + c₂v₂
//! ```
//!
//! with `J_v ~ Exp(mean m_v)` and `J_x | J_v ~ N(μ_x + ρ_J J_v, σ_x²)`. The
//! compensator is `k̄ = E[e^{J_x}] − 1 = e^{μ_x + σ_x²/2}/(1 − m_v ρ_J) − 1`.
//! The log-price transform is exponential-affine in `(v₁, v₂)` with
//! coefficients solving a Riccati system, integrated numerically.
//!
//! An optional deterministic displacement `φ_v(t) ≥ 0` adds independent
//! Gaussian variance to the price diffusion, which multiplies the transform
//! by `exp(½(φ² − φ)∫₀^τ φ_v)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::ode::{dopri5, OdeTolerance};
use crate::edgeworth::Displacement;
use crate::model::ModelCf;
use crate::{Error, Result, C64};

/// Parameters of the one- or two-factor Heston–Merton model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HestonMertonParams {
  pub v1_0: f64,
  pub v2_0: f64,
  pub kappa1: f64,
  pub kappa2: f64,
  pub theta1: f64,
  pub theta2: f64,
  pub zeta1: f64,
  pub zeta2: f64,
  pub rho1: f64,
  pub rho2: f64,
  pub rho_jump: f64,
  pub mu_x: f64,
  pub sigma_x: f64,
  pub m_v: f64,
  pub c0: f64,
  pub c1: f64,
  pub c2: f64,
  pub factor_count: u8,
  #[serde(default)]
  pub feller_enforced: bool,
  /// Variance displacement; levels are variance units.
  #[serde(default, skip_serializing_if = "Option::is_none")]
  pub shifts: Option<Displacement>,
}

impl HestonMertonParams {
  /// A one-factor model with Gaussian price jumps at constant intensity.
  #[allow(clippy::too_many_arguments)]
  pub fn one_factor(v0: f64, kappa: f64, theta: f64, zeta: f64, rho: f64, c0: f64, mu_x: f64, sigma_x: f64) -> Self {
    Self {
      v1_0: v0,
      v2_0: 0.0,
      kappa1: kappa,
      kappa2: 0.0,
      theta1: theta,
      theta2: 0.0,
      zeta1: zeta,
      zeta2: 0.0,
      rho1: rho,
      rho2: 0.0,
      rho_jump: 0.0,
      mu_x,
      sigma_x,
      m_v: 0.0,
      c0,
      c1: 0.0,
      c2: 0.0,
      factor_count: 1,
      feller_enforced: false,
      shifts: None,
    }
  }

  pub fn validate(&self) -> Result<()> {
    let fields = [
      ("v1_0", self.v1_0),
      ("v2_0", self.v2_0),
      ("kappa1", self.kappa1),
      ("kappa2", self.kappa2),
      ("theta1", self.theta1),
      ("theta2", self.theta2),
      ("zeta1", self.zeta1),
      ("zeta2", self.zeta2),
      ("rho1", self.rho1),
      ("rho2", self.rho2),
      ("rho_jump", self.rho_jump),
      ("mu_x", self.mu_x),
      ("sigma_x", self.sigma_x),
      ("m_v", self.m_v),
      ("c0", self.c0),
      ("c1", self.c1),
      ("c2", self.c2),
    ];
    for (name, v) in fields {
      if !v.is_finite() {
        return Err(Error::param(name, "must be finite"));
      }
    }
    for (name, v) in [
      ("v1_0", self.v1_0),
      ("v2_0", self.v2_0),
      ("theta1", self.theta1),
      ("theta2", self.theta2),
      ("c0", self.c0),
      ("c1", self.c1),
      ("c2", self.c2),
      ("m_v", self.m_v),
      ("sigma_x", self.sigma_x),
      ("zeta1", self.zeta1),
      ("zeta2", self.zeta2),
    ] {
      if v < 0.0 {
        return Err(Error::param(name, "must be non-negative"));
      }
    }
    for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2)] {
      if !(-1.0..=1.0).contains(&v) {
        return Err(Error::param(name, "must lie in [-1, 1]"));
      }
    }
    if !matches!(self.factor_count, 1 | 2) {
      return Err(Error::param("factor_count", "must be 1 or 2"));
    }
    if self.m_v * self.rho_jump >= 1.0 {
      return Err(Error::param("m_v", "m_v * rho_jump must be below 1 for a finite jump compensator"));
    }
    if self.feller_enforced {
      if 2.0 * self.kappa1 * self.theta1 < self.zeta1 * self.zeta1 {
        return Err(Error::param("zeta1", "Feller condition 2 kappa1 theta1 >= zeta1^2 violated"));
      }
      if self.factor_count == 2 && 2.0 * self.kappa2 * self.theta2 < self.zeta2 * self.zeta2 {
        return Err(Error::param("zeta2", "Feller condition 2 kappa2 theta2 >= zeta2^2 violated"));
      }
    }
    if let Some(d) = &self.shifts {
      d.validate_grid()?;
      if d.shifts.iter().any(|&a| a < 0.0) {
        return Err(Error::param("shifts", "variance displacement levels must be non-negative"));
      }
    }
    Ok(())
  }

  /// Jump compensator `E[e^{J_x}] − 1`.
  pub fn jump_compensator(&self) -> f64 {
    (self.mu_x + 0.5 * self.sigma_x * self.sigma_x).exp() / (1.0 - self.m_v * self.rho_jump) - 1.0
  }

  fn active(&self) -> Self {
    if self.factor_count == 2 {
      return self.clone();
    }
    Self { v2_0: 0.0, kappa2: 0.0, theta2: 0.0, zeta2: 0.0, rho2: 0.0, c2: 0.0, ..self.clone() }
  }

  /// Spot total variance, falling back to long-run levels when it is zero.
  pub fn reference_variance(&self) -> f64 {
    let p = self.active();
    let v = p.v1_0 + p.v2_0;
    if v > 1e-10 {
      v
    } else if p.theta1 + p.theta2 > 1e-10 {
      p.theta1 + p.theta2
    } else {
      0.04
    }
  }
}

fn displacement_integral(d: &Displacement, tau: f64) -> Result<f64> {
  Ok(d.segments(tau)?.iter().map(|&(lo, hi, a)| a * (hi - lo)).sum())
}

/// Log-price transform `E[e^{iu(X_τ − X₀)}]` for a possibly complex `u`.
pub fn heston_merton_cf(u: C64, tau: f64, params: &HestonMertonParams) -> Result<C64> {
  params.validate()?;
  if !(tau > 0.0 && tau.is_finite()) {
    return Err(Error::param("tau", "must be positive and finite"));
  }
  cf_unchecked(u, tau, &params.active(), &OdeTolerance::default())
}

fn cf_unchecked(u: C64, tau: f64, p: &HestonMertonParams, tol: &OdeTolerance) -> Result<C64> {
  let phi = C64::i() * u;
  let kbar = p.jump_compensator();
  let diffusion = (phi * phi - phi) * 0.5;
  let jumps = p.c0 > 0.0 || p.c1 > 0.0 || p.c2 > 0.0;
  let price_jump = (phi * p.mu_x + phi * phi * (0.5 * p.sigma_x * p.sigma_x)).exp();
  let two = p.factor_count == 2;
  let rhs = |t: f64, y: &[C64; 3]| -> Result<[C64; 3]> {
    let (b1, b2) = (y[1], y[2]);
    let jt = if jumps {
      let denom = 1.0 - (phi * p.rho_jump + b1) * p.m_v;
      if denom.norm() < 1e-12 {
        return Err(Error::Explosion { t, reason: "pole of the variance-jump transform".into() });
      }
      price_jump / denom - 1.0
    } else {
      C64::new(0.0, 0.0)
    };
    let db1 = diffusion - phi * (kbar * p.c1) - b1 * p.kappa1
      + b1 * b1 * (0.5 * p.zeta1 * p.zeta1)
      + phi * b1 * (p.rho1 * p.zeta1)
      + jt * p.c1;
    let db2 = if two {
      diffusion - phi * (kbar * p.c2) - b2 * p.kappa2
        + b2 * b2 * (0.5 * p.zeta2 * p.zeta2)
        + phi * b2 * (p.rho2 * p.zeta2)
        + jt * p.c2
    } else {
      C64::new(0.0, 0.0)
    };
    let da = b1 * (p.kappa1 * p.theta1) + b2 * (p.kappa2 * p.theta2) - phi * (kbar * p.c0) + jt * p.c0;
    Ok([da, db1, db2])
  };
  let zero = C64::new(0.0, 0.0);
  let y = dopri5(rhs, [zero; 3], 0.0, &[tau], tol)?[0];
  let mut log_cf = y[0] + y[1] * p.v1_0 + y[2] * p.v2_0;
  if let Some(d) = &p.shifts {
    log_cf += diffusion * displacement_integral(d, tau)?;
  }
  Ok(log_cf.exp())
}

/// Heston–Merton model as a standardized characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub struct HestonMertonModel {
  params: HestonMertonParams,
  tol: OdeTolerance,
}

impl HestonMertonModel {
  pub fn new(params: HestonMertonParams) -> Result<Self> {
    params.validate()?;
    Ok(Self { params: params.active(), tol: OdeTolerance::default() })
  }

  pub fn params(&self) -> &HestonMertonParams {
    &self.params
  }

  pub fn log_cf(&self, u: C64, tau: f64) -> Result<C64> {
    cf_unchecked(u, tau, &self.params, &self.tol)
  }
}

impl ModelCf for HestonMertonModel {
  fn reference_vol(&self, _tau: f64) -> f64 {
    self.params.reference_variance().sqrt()
  }

  fn standardized_cf(&self, u: C64, tau: f64) -> Result<C64> {
    let s = self.reference_vol(tau) * tau.sqrt();
    Ok((C64::i() * u * (0.5 * s)).exp() * self.log_cf(u / s, tau)?)
  }

  fn standardized_cf_batch(&self, us: &[C64], tau: f64) -> Result<Vec<C64>> {
    us.par_iter().map(|&u| self.standardized_cf(u, tau)).collect()
  }
}

#[cfg(test)]
mod tests {
  use super::*;

  fn two_factor() -> HestonMertonParams {
    HestonMertonParams {
      v1_0: 0.03,
      v2_0: 0.01,
      kappa1: 3.0,
      kappa2: 0.5,
      theta1: 0.03,
      theta2: 0.02,
      zeta1: 0.6,
      zeta2: 0.2,
      rho1: -0.7,
      rho2: -0.3,
      rho_jump: -0.5,
      mu_x: -0.02,
      sigma_x: 0.03,
      m_v: 0.02,
      c0: 5.0,
      c1: 100.0,
      c2: 50.0,
      factor_count: 2,
      feller_enforced: false,
      shifts: None,
    }
  }

  #[test]
  fn deterministic_variance_is_gaussian() {
    let p = HestonMertonParams {
      zeta1: 0.0,
      zeta2: 0.0,
      kappa1: 0.0,
      kappa2: 0.0,
      c0: 0.0,
      c1: 0.0,
      c2: 0.0,
      ..two_factor()
    };
    let tau = 0.05;
    for k in -20..=20 {
      let u = C64::new(0.7 * k as f64, 0.0);
      let v = heston_merton_cf(u, tau, &p).unwrap();
      let exact = (-(u * u + C64::i() * u) * (0.5 * (p.v1_0 + p.v2_0) * tau)).exp();
      assert!((v - exact).norm() < 1e-14, "u {u}");
    }
  }

  #[test]
  fn one_factor_nests_in_two_factor() {
    let p = two_factor();
    let one = HestonMertonParams { factor_count: 1, ..p.clone() };
    let two = HestonMertonParams { v2_0: 0.0, theta2: 0.0, zeta2: 0.0, c2: 0.0, ..p };
    for &u in &[0.5, 3.0, -7.0] {
      let a = heston_merton_cf(C64::new(u, 0.0), 0.02, &one).unwrap();
      let b = heston_merton_cf(C64::new(u, 0.0), 0.02, &two).unwrap();
      assert!((a - b).norm() < 1e-13);
    }
  }

  #[test]
  fn martingale_normalization() {
    let p = two_factor();
    let v = heston_merton_cf(C64::new(0.0, -1.0), 0.1, &p).unwrap();
    assert!((v - 1.0).norm() < 1e-9, "{v}");
    assert_eq!(heston_merton_cf(C64::new(0.0, 0.0), 0.1, &p).unwrap(), C64::new(1.0, 0.0));
  }

  #[test]
  fn conjugate_symmetry() {
    let p = two_factor();
    for &u in &[0.3, 2.0, 11.0] {
      let a = heston_merton_cf(C64::new(u, 0.0), 0.03, &p).unwrap();
      let b = heston_merton_cf(C64::new(-u, 0.0), 0.03, &p).unwrap();
      assert!((a - b.conj()).norm() < 1e-12);
    }
  }

  #[test]
  fn factor_additivity_with_jumps_on_first_factor() {
    let p = HestonMertonParams { c2: 0.0, ..two_factor() };
    let f1 = HestonMertonParams { v2_0: 0.0, theta2: 0.0, zeta2: 0.0, ..p.clone() };
    let f2 = HestonMertonParams {
      v1_0: 0.0,
      theta1: 0.0,
      zeta1: 0.0,
      c0: 0.0,
      c1: 0.0,
      ..p.clone()
    };
    for &u in &[0.8, 4.0] {
      let u = C64::new(u, 0.0);
      let full = heston_merton_cf(u, 0.05, &p).unwrap().ln();
      let parts = heston_merton_cf(u, 0.05, &f1).unwrap().ln() + heston_merton_cf(u, 0.05, &f2).unwrap().ln();
      assert!((full - parts).norm() < 1e-10);
    }
  }

  #[test]
  fn feller_toggle() {
    let p = HestonMertonParams { kappa1: 1.0, theta1: 0.02, zeta1: 0.5, ..two_factor() };
    assert!(p.validate().is_ok());
    assert!(HestonMertonParams { feller_enforced: true, ..p }.validate().is_err());
  }

  #[test]
  fn variance_displacement_adds_gaussian_variance() {
    let base = HestonMertonParams::one_factor(0.04, 2.0, 0.04, 0.5, -0.6, 0.0, 0.0, 0.0);
    let d = Displacement::new(vec![0.01, 0.02], vec![0.03]).unwrap();
    let shifted = HestonMertonParams { shifts: Some(d), ..base.clone() };
    let u = C64::new(2.0, 0.0);
    let ratio = heston_merton_cf(u, 0.02, &shifted).unwrap() / heston_merton_cf(u, 0.02, &base).unwrap();
    let expect = (-(u * u + C64::i() * u) * (0.5 * 0.03 * 0.01)).exp();
    assert!((ratio - expect).norm() < 1e-13);
  }
}
