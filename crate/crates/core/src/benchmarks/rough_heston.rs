//! Rough Heston with a piecewise forward-variance curve.
//!
//! ```text
//! dX_t = −½σ_t² dt + σ_t dW_t
//! σ_t² = ξ₀(t) + ν/Γ(H+½) ∫₀^t (t−s)^{H−½} σ_s dB_s,   d⟨W, B⟩ = ρ dt
//! ```
//!
//! The log-price transform is `exp(∫₀^τ F(a, h(s)) ξ₀(τ−s) ds)` where `h`
//! solves the fractional Riccati equation `D^α h = F(a, h)`, `h(0) = 0`,
//! `α = H + ½`, with `F(a, x) = ½(−a² − ia) + iρνa x + ½ν²x²`. The equation
//! is solved by the fractional Adams predictor–corrector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::model::ModelCf;
use crate::{Error, Result, C64};

/// Cap on the adaptive Riccati resolution.
const MAX_STEPS: usize = 1 << 14;

/// Piecewise-constant forward variance: `levels[k]` on `[τ_k, τ_{k+1})`
/// with `τ₀ = 0`, so `levels` and `tenors` have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardVariance {
  pub tenors: Vec<f64>,
  pub levels: Vec<f64>,
}

impl ForwardVariance {
  /// Constant curve up to `horizon`.
  pub fn flat(level: f64, horizon: f64) -> Self {
    Self { tenors: vec![horizon], levels: vec![level] }
  }

  pub fn validate(&self) -> Result<()> {
    if self.tenors.is_empty() || self.tenors.len() != self.levels.len() {
      return Err(Error::param("xi0", "tenors and levels must be non-empty and of equal length"));
    }
    let mut prev = 0.0;
    for (&t, &l) in self.tenors.iter().zip(&self.levels) {
      if !(t > prev && t.is_finite()) {
        return Err(Error::param("xi0", "tenors must be positive and strictly increasing"));
      }
      if !(l > 0.0 && l.is_finite()) {
        return Err(Error::param("xi0", "levels must be positive"));
      }
      prev = t;
    }
    Ok(())
  }

  pub fn value(&self, t: f64) -> f64 {
    let k = self.tenors.partition_point(|&tk| tk <= t);
    self.levels[k.min(self.levels.len() - 1)]
  }

  /// `(start, end, level)` segments covering `[0, τ]`.
  pub fn segments(&self, tau: f64) -> Result<Vec<(f64, f64, f64)>> {
    let last = *self.tenors.last().expect("validated");
    if tau > last * (1.0 + 1e-10) {
      return Err(Error::TenorBeyondGrid { tau, last });
    }
    let mut out = Vec::new();
    let mut start = 0.0;
    for (&end, &l) in self.tenors.iter().zip(&self.levels) {
      let stop = if end >= tau * (1.0 - 1e-10) { tau } else { end };
      out.push((start, stop, l));
      if stop == tau {
        break;
      }
      start = end;
    }
    Ok(out)
  }

  pub fn integral(&self, tau: f64) -> Result<f64> {
    Ok(self.segments(tau)?.iter().map(|&(a, b, l)| l * (b - a)).sum())
  }
}

/// Independent Gaussian (Merton) price jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonJumps {
  pub lambda: f64,
  pub mu_j: f64,
  pub sigma_j: f64,
}

impl MertonJumps {
  pub fn validate(&self) -> Result<()> {
    if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
      return Err(Error::param("lambda", "must be non-negative"));
    }
    if !self.mu_j.is_finite() {
      return Err(Error::param("mu_j", "must be finite"));
    }
    if !(self.sigma_j >= 0.0 && self.sigma_j.is_finite()) {
      return Err(Error::param("sigma_j", "must be non-negative"));
    }
    Ok(())
  }

  /// Price-martingale compensator `E[e^J] − 1`.
  pub fn compensator(&self) -> f64 {
    (self.mu_j + 0.5 * self.sigma_j * self.sigma_j).exp_m1()
  }

  /// Log of the compensated compound-Poisson transform at log frequency `a`.
  pub fn log_cf(&self, a: C64, tau: f64) -> C64 {
    let i = C64::i();
    let jump = (i * a * self.mu_j - a * a * (0.5 * self.sigma_j * self.sigma_j)).exp();
    (jump - 1.0 - i * a * self.compensator()) * (self.lambda * tau)
  }
}

/// Parameters of Rough Heston++ (with optional Merton jumps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughHestonParams {
  pub hurst: f64,
  pub nu: f64,
  pub rho: f64,
  pub xi0: ForwardVariance,
  #[serde(default, skip_serializing_if = "Option::is_none")]
  pub jumps: Option<MertonJumps>,
}

impl RoughHestonParams {
  pub fn validate(&self) -> Result<()> {
    if !(self.hurst > 0.0 && self.hurst <= 0.5) {
      return Err(Error::param("hurst", "must lie in (0, 0.5]"));
    }
    if !(self.nu > 0.0 && self.nu.is_finite()) {
      return Err(Error::param("nu", "must be positive"));
    }
    if !(-1.0..=1.0).contains(&self.rho) {
      return Err(Error::param("rho", "must lie in [-1, 1]"));
    }
    self.xi0.validate()?;
    if let Some(j) = &self.jumps {
      j.validate()?;
    }
    Ok(())
  }
}

/// Fractional Adams predictor–corrector for `D^α h = F(h)`, `h(0) = 0`,
/// on a uniform grid of `steps` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalRiccati {
  alpha: f64,
  steps: usize,
  /// Predictor weights `(m+1)^α − m^α`.
  pred: Vec<f64>,
  /// Corrector weights `(m+2)^{α+1} + m^{α+1} − 2(m+1)^{α+1}`.
  corr: Vec<f64>,
  /// Corrector weight of the initial node, by step index.
  corr0: Vec<f64>,
  gamma1: f64,
  gamma2: f64,
}

impl FractionalRiccati {
  pub fn new(alpha: f64, steps: usize) -> Result<Self> {
    if !(alpha > 0.5 && alpha <= 1.0) {
      return Err(Error::param("alpha", "must lie in (0.5, 1]"));
    }
    if steps < 2 {
      return Err(Error::param("steps", "must be at least 2"));
    }
    let a1 = alpha + 1.0;
    let pred = (0..steps).map(|m| (m as f64 + 1.0).powf(alpha) - (m as f64).powf(alpha)).collect();
    let corr = (0..steps)
      .map(|m| {
        let m = m as f64;
        (m + 2.0).powf(a1) + m.powf(a1) - 2.0 * (m + 1.0).powf(a1)
      })
      .collect();
    let corr0 = (0..steps)
      .map(|k| {
        let k = k as f64;
        k.powf(a1) - (k - alpha) * (k + 1.0).powf(alpha)
      })
      .collect();
    Ok(Self { alpha, steps, pred, corr, corr0, gamma1: gamma(alpha + 1.0), gamma2: gamma(alpha + 2.0) })
  }

  pub fn steps(&self) -> usize {
    self.steps
  }

  pub fn alpha(&self) -> f64 {
    self.alpha
  }

  /// Smallest even step count keeping the explicit scheme stable for a
  /// Riccati linearization of size `ν|a|` on the half-resolution grid:
  /// `ν|a|Δ^α ≤ 1` with `Δ = 2τ/steps`.
  pub fn stable_steps(alpha: f64, nu: f64, a_abs: f64, tau: f64) -> usize {
    let n = 2.0 * tau * (nu * a_abs).powf(1.0 / alpha);
    let n = if n.is_finite() { n.ceil() as usize } else { usize::MAX / 4 };
    n + n % 2
  }

  /// Values of `F(h)` at the grid nodes `kτ/steps`, `k = 0..=steps`.
  pub fn solve<F: Fn(C64) -> C64>(&self, f: F, tau: f64) -> Result<Vec<C64>> {
    self.solve_on(&f, tau, self.steps)
  }

  /// `∫₀^t F(h(s)) ds` at each of `points` (within `[0, τ]`).
  ///
  /// The quadrature error is dominated by the `t^α` behaviour of `h` at the
  /// origin and scales like `Δt^{1+α}`; one Richardson step on a half
  /// resolution grid removes it.
  pub fn integrate<F: Fn(C64) -> C64>(&self, f: F, tau: f64, points: &[f64]) -> Result<Vec<C64>> {
    let fine = self.solve_on(&f, tau, self.steps)?;
    let cf = Cumulative::new(&fine, tau / self.steps as f64);
    if self.steps % 2 != 0 {
      return Ok(points.iter().map(|&t| cf.at(t)).collect());
    }
    let coarse = self.solve_on(&f, tau, self.steps / 2)?;
    let cc = Cumulative::new(&coarse, 2.0 * tau / self.steps as f64);
    let w = 2f64.powf(1.0 + self.alpha);
    Ok(points.iter().map(|&t| (cf.at(t) * w - cc.at(t)) / (w - 1.0)).collect())
  }

  fn solve_on<F: Fn(C64) -> C64>(&self, f: &F, tau: f64, n: usize) -> Result<Vec<C64>> {
    let dt = tau / n as f64;
    let scale = dt.powf(self.alpha);
    let mut fh = Vec::with_capacity(n + 1);
    fh.push(f(C64::new(0.0, 0.0)));
    for k in 0..n {
      let mut p = C64::new(0.0, 0.0);
      let mut c = fh[0] * self.corr0[k];
      for j in 0..=k {
        p += fh[j] * self.pred[k - j];
      }
      for j in 1..=k {
        c += fh[j] * self.corr[k - j];
      }
      let hp = p * (scale / self.gamma1);
      let h = (c + f(hp)) * (scale / self.gamma2);
      let v = f(h);
      if !(v.re.is_finite() && v.im.is_finite()) || h.norm() > 1e50 {
        return Err(Error::Convergence(format!("fractional Riccati solution diverged at t = {}", (k + 1) as f64 * dt)));
      }
      fh.push(v);
    }
    Ok(fh)
  }
}

/// Cumulative integral of nodal values with cubic Hermite interpolation.
struct Cumulative<'a> {
  dt: f64,
  f: &'a [C64],
  g: Vec<C64>,
}

impl<'a> Cumulative<'a> {
  fn new(f: &'a [C64], dt: f64) -> Self {
    let mut g = Vec::with_capacity(f.len());
    g.push(C64::new(0.0, 0.0));
    for k in 1..f.len() {
      let prev = g[k - 1];
      g.push(prev + (f[k - 1] + f[k]) * (0.5 * dt));
    }
    Self { dt, f, g }
  }

  fn at(&self, s: f64) -> C64 {
    let n = self.f.len() - 1;
    let x = (s / self.dt).clamp(0.0, n as f64);
    let k = (x.floor() as usize).min(n.saturating_sub(1));
    let t = x - k as f64;
    if t == 0.0 {
      return self.g[k];
    }
    let (h00, h10, h01, h11) =
      (2.0 * t.powi(3) - 3.0 * t * t + 1.0, t.powi(3) - 2.0 * t * t + t, -2.0 * t.powi(3) + 3.0 * t * t, t.powi(3) - t * t);
    self.g[k] * h00 + self.f[k] * (h10 * self.dt) + self.g[k + 1] * h01 + self.f[k + 1] * (h11 * self.dt)
  }
}

/// Rough Heston log-price transform with a solver of the given resolution.
pub fn rough_heston_cf_with(a: C64, tau: f64, params: &RoughHestonParams, solver: &FractionalRiccati) -> Result<C64> {
  if !(tau > 0.0 && tau.is_finite()) {
    return Err(Error::param("tau", "must be positive and finite"));
  }
  let nu = params.nu;
  let needed = FractionalRiccati::stable_steps(solver.alpha(), nu, a.norm(), tau);
  if needed > solver.steps() {
    if needed > MAX_STEPS {
      return Err(Error::Convergence(format!("frequency {a} needs {needed} Riccati steps")));
    }
    return rough_heston_cf_with(a, tau, params, &FractionalRiccati::new(solver.alpha(), needed)?);
  }
  let i = C64::i();
  let lin = i * a * (params.rho * nu);
  let src = (a * a + i * a) * -0.5;
  let f = |x: C64| src + lin * x + x * x * (0.5 * nu * nu);
  let segments = params.xi0.segments(tau)?;
  let mut points = vec![tau];
  points.extend(segments.iter().map(|&(_, hi, _)| tau - hi));
  let g = solver.integrate(f, tau, &points)?;
  let mut log_cf = C64::new(0.0, 0.0);
  for (k, &(_, _, level)) in segments.iter().enumerate() {
    log_cf += (g[k] - g[k + 1]) * level;
  }
  if let Some(j) = &params.jumps {
    log_cf += j.log_cf(a, tau);
  }
  Ok(log_cf.exp())
}

/// Rough Heston log-price transform `E[e^{ia(X_τ − X₀)}]` with 256 steps.
pub fn rough_heston_cf(a: C64, tau: f64, params: &RoughHestonParams) -> Result<C64> {
  params.validate()?;
  let solver = FractionalRiccati::new(params.hurst + 0.5, RoughHestonModel::DEFAULT_STEPS)?;
  rough_heston_cf_with(a, tau, params, &solver)
}

/// Rough Heston++ as a standardized characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughHestonModel {
  params: RoughHestonParams,
  solver: FractionalRiccati,
}

impl RoughHestonModel {
  pub const DEFAULT_STEPS: usize = 256;

  pub fn new(params: RoughHestonParams) -> Result<Self> {
    Self::with_steps(params, Self::DEFAULT_STEPS)
  }

  pub fn with_steps(params: RoughHestonParams, steps: usize) -> Result<Self> {
    params.validate()?;
    let solver = FractionalRiccati::new(params.hurst + 0.5, steps)?;
    Ok(Self { params, solver })
  }

  pub fn params(&self) -> &RoughHestonParams {
    &self.params
  }

  pub fn log_cf(&self, a: C64, tau: f64) -> Result<C64> {
    rough_heston_cf_with(a, tau, &self.params, &self.solver)
  }
}

impl ModelCf for RoughHestonModel {
  fn reference_vol(&self, _tau: f64) -> f64 {
    self.params.xi0.levels[0].sqrt()
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

  /// Classical Heston transform without mean reversion (closed form).
  fn heston_no_drift(a: C64, tau: f64, v0: f64, nu: f64, rho: f64) -> C64 {
    let i = C64::i();
    let b = -i * a * (rho * nu);
    let d = (b * b + (a * a + i * a) * (nu * nu)).sqrt();
    let g = (b - d) / (b + d);
    let e = (-d * tau).exp();
    let big_d = (b - d) / (nu * nu) * (1.0 - e) / (1.0 - g * e);
    (big_d * v0).exp()
  }

  fn params(h: f64, nu: f64, rho: f64, v: f64, horizon: f64) -> RoughHestonParams {
    RoughHestonParams { hurst: h, nu, rho, xi0: ForwardVariance::flat(v, horizon), jumps: None }
  }

  #[test]
  fn diffusive_case_matches_classical_heston() {
    let p = params(0.5, 0.4, -0.7, 0.04, 1.0);
    for &tau in &[5.0 / 365.0, 1.0 / 12.0] {
      for k in -30..=30 {
        let a = C64::new(k as f64, 0.0);
        let v = rough_heston_cf(a, tau, &p).unwrap();
        let r = if k == 0 { C64::new(1.0, 0.0) } else { heston_no_drift(a, tau, 0.04, 0.4, -0.7) };
        assert!((v - r).norm() < 1e-6, "tau {tau} a {a}: {v} vs {r}");
      }
    }
  }

  #[test]
  fn vanishing_vol_of_vol_is_gaussian() {
    let p = RoughHestonParams {
      hurst: 0.1,
      nu: 1e-8,
      rho: -0.5,
      xi0: ForwardVariance { tenors: vec![0.01, 0.02], levels: vec![0.04, 0.09] },
      jumps: None,
    };
    for &a in &[0.5, 3.0, 10.0] {
      let a = C64::new(a, 0.0);
      let v = rough_heston_cf(a, 0.015, &p).unwrap();
      let w = 0.04 * 0.01 + 0.09 * 0.005;
      let r = (-(a * a + C64::i() * a) * (0.5 * w)).exp();
      assert!((v - r).norm() < 1e-6);
    }
  }

  #[test]
  fn unit_and_martingale() {
    let p = params(0.1, 0.3, -0.6, 0.04, 1.0);
    assert!((rough_heston_cf(C64::new(0.0, 0.0), 0.02, &p).unwrap() - 1.0).norm() < 1e-15);
    assert!((rough_heston_cf(C64::new(0.0, -1.0), 0.02, &p).unwrap() - 1.0).norm() < 1e-12);
  }

  #[test]
  fn grid_refinement_is_stable() {
    let p = RoughHestonParams {
      hurst: 0.1,
      nu: 0.3,
      rho: -0.7,
      xi0: ForwardVariance { tenors: vec![1.0 / 365.0, 7.0 / 365.0], levels: vec![0.02, 0.03] },
      jumps: None,
    };
    let coarse = FractionalRiccati::new(0.6, 256).unwrap();
    let fine = FractionalRiccati::new(0.6, 512).unwrap();
    for &a in &[1.0, 5.0, 15.0, 30.0] {
      let a = C64::new(a, 0.0);
      let x = rough_heston_cf_with(a, 7.0 / 365.0, &p, &coarse).unwrap();
      let y = rough_heston_cf_with(a, 7.0 / 365.0, &p, &fine).unwrap();
      assert!((x - y).norm() < 1e-6, "a {a}: {}", (x - y).norm());
    }
  }

  #[test]
  fn merton_jumps_keep_martingale() {
    let p = RoughHestonParams { jumps: Some(MertonJumps { lambda: 50.0, mu_j: -0.01, sigma_j: 0.02 }), ..params(0.1, 0.3, -0.6, 0.04, 1.0) };
    assert!((rough_heston_cf(C64::new(0.0, -1.0), 0.02, &p).unwrap() - 1.0).norm() < 1e-12);
  }

  #[test]
  fn rejects_invalid() {
    assert!(params(0.6, 0.3, 0.0, 0.04, 1.0).validate().is_err());
    assert!(params(0.1, 0.0, 0.0, 0.04, 1.0).validate().is_err());
    assert!(rough_heston_cf(C64::new(1.0, 0.0), 2.0, &params(0.1, 0.3, 0.0, 0.04, 1.0)).is_err());
  }
}
