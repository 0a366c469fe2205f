use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModelCf;
use crate::pricing::black_scholes::{implied_vol, price_bounds};
use crate::{Error, Result, C64};

/// Lower end of the frequency integral; the integrand is finite at zero.
const U_MIN: f64 = 1e-8;
/// Cap on the adaptive truncation bound.
const U_CAP: f64 = 2000.0;
/// Decay level `|Ψ(U)|/U` that fixes the adaptive truncation bound.
const DECAY: f64 = 1e-12;
/// Raw prices further than this (relative to spot) below intrinsic are errors.
const FLOOR_TOLERANCE: f64 = 1e-3;

/// Discretization of the frequency integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
  pub node_count: usize,
  /// Fixed truncation bound; `None` selects it from the decay of Ψ.
  pub u_max: Option<f64>,
}

impl Default for QuadratureConfig {
  fn default() -> Self {
    Self { node_count: 10_000, u_max: None }
  }
}

impl QuadratureConfig {
  pub fn with_nodes(node_count: usize) -> Self {
    Self { node_count, u_max: None }
  }

  pub fn validate(&self) -> Result<()> {
    if self.node_count < 100 {
      return Err(Error::param("node_count", "must be at least 100"));
    }
    if let Some(u) = self.u_max {
      if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u_max", "must be positive and finite"));
      }
    }
    Ok(())
  }
}

/// One option to price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingRequest {
  pub spot: f64,
  pub strike: f64,
  pub tau: f64,
  pub rate: f64,
  pub is_call: bool,
}

impl PricingRequest {
  pub fn call(spot: f64, strike: f64, tau: f64) -> Self {
    Self { spot, strike, tau, rate: 0.0, is_call: true }
  }

  pub fn put(spot: f64, strike: f64, tau: f64) -> Self {
    Self { spot, strike, tau, rate: 0.0, is_call: false }
  }

  fn validate(&self) -> Result<()> {
    for (name, v) in [("spot", self.spot), ("strike", self.strike), ("tau", self.tau)] {
      if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param(name, "must be positive and finite"));
      }
    }
    if !self.rate.is_finite() {
      return Err(Error::param("rate", "must be finite"));
    }
    Ok(())
  }
}

/// A call price with the unfloored quadrature value kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceDetail {
  pub price: f64,
  pub raw: f64,
  pub floored: bool,
}

/// Characteristic-function values on the frequency grid of one tenor,
/// shared by every strike at that tenor.
#[derive(Debug, Clone)]
pub struct TenorPricer {
  tau: f64,
  sigma: f64,
  step: f64,
  u0: f64,
  /// `w_k Ψ(u_k)/(i u_k)`.
  cash: Vec<C64>,
  /// `w_k Ψ(u_k − iσ√τ)/(i u_k Ψ(−iσ√τ))`.
  share: Vec<C64>,
}

impl TenorPricer {
  pub fn new(model: &dyn ModelCf, tau: f64, quad: &QuadratureConfig) -> Result<Self> {
    quad.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
      return Err(Error::param("tau", "must be positive and finite"));
    }
    let sigma = model.reference_vol(tau);
    if !(sigma > 0.0 && sigma.is_finite()) {
      return Err(Error::Degenerate(format!("reference volatility {sigma} at tau {tau}")));
    }
    let s = sigma * tau.sqrt();
    let norm = model.standardized_cf(C64::new(0.0, -s), tau)?;
    if !(norm.norm() >= 1e-12) || !norm.re.is_finite() {
      return Err(Error::Degenerate(format!("|Psi(-i sigma sqrt(tau))| = {}", norm.norm())));
    }
    let u_max = match quad.u_max {
      Some(u) => u,
      None => adaptive_bound(model, tau, s, norm)?,
    };
    let n = quad.node_count;
    let step = (u_max - U_MIN) / (n - 1) as f64;
    let us: Vec<C64> = (0..n).map(|k| C64::new(U_MIN + k as f64 * step, 0.0)).collect();
    let shifted: Vec<C64> = us.iter().map(|u| u - C64::new(0.0, s)).collect();
    let psi = model.standardized_cf_batch(&us, tau)?;
    let psi_s = model.standardized_cf_batch(&shifted, tau)?;
    let mut cash = Vec::with_capacity(n);
    let mut share = Vec::with_capacity(n);
    for k in 0..n {
      let w = if k == 0 || k == n - 1 { 0.5 * step } else { step };
      let denom = C64::new(0.0, us[k].re);
      let a = psi[k] * w / denom;
      let b = psi_s[k] * w / (denom * norm);
      if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite characteristic function at u = {}", us[k].re)));
      }
      cash.push(a);
      share.push(b);
    }
    Ok(Self { tau, sigma, step, u0: U_MIN, cash, share })
  }

  pub fn tau(&self) -> f64 {
    self.tau
  }

  pub fn reference_vol(&self) -> f64 {
    self.sigma
  }

  /// Exercise probabilities `(P₁, P₂)` under the share and cash measures.
  pub fn probabilities(&self, spot: f64, strike: f64, rate: f64) -> (f64, f64) {
    let s = self.sigma * self.tau.sqrt();
    let d2 = ((spot / strike).ln() + (rate - 0.5 * self.sigma * self.sigma) * self.tau) / s;
    let (mut i1, mut i2) = (0.0, 0.0);
    let rot = C64::from_polar(1.0, self.step * d2);
    let mut z = C64::new(1.0, 0.0);
    for k in 0..self.cash.len() {
      if k % 512 == 0 {
        z = C64::from_polar(1.0, (self.u0 + k as f64 * self.step) * d2);
      }
      i1 += (z * self.share[k]).re;
      i2 += (z * self.cash[k]).re;
      z *= rot;
    }
    (0.5 + i1 / PI, 0.5 + i2 / PI)
  }

  /// Call price with floor/cap details.
  pub fn call_detail(&self, spot: f64, strike: f64, rate: f64) -> Result<PriceDetail> {
    let (p1, p2) = self.probabilities(spot, strike, rate);
    let raw = spot * p1 - strike * (-rate * self.tau).exp() * p2;
    if !raw.is_finite() {
      return Err(Error::Degenerate("non-finite price".into()));
    }
    let (lower, upper) = price_bounds(spot, strike, self.tau, rate, true);
    if raw < lower - FLOOR_TOLERANCE * spot {
      return Err(Error::Degenerate(format!("price {raw} far below intrinsic {lower}; check the quadrature")));
    }
    let price = raw.max(lower).min(upper);
    Ok(PriceDetail { price, raw, floored: price != raw })
  }

  pub fn call(&self, spot: f64, strike: f64, rate: f64) -> Result<f64> {
    Ok(self.call_detail(spot, strike, rate)?.price)
  }

  /// Put by parity from the floored call.
  pub fn put(&self, spot: f64, strike: f64, rate: f64) -> Result<f64> {
    let c = self.call(spot, strike, rate)?;
    let kd = strike * (-rate * self.tau).exp();
    let (lower, _) = price_bounds(spot, strike, self.tau, rate, false);
    Ok((c - spot + kd).max(lower))
  }

  /// Put from its own inversion formula, without the parity shortcut.
  pub fn put_direct(&self, spot: f64, strike: f64, rate: f64) -> f64 {
    let (p1, p2) = self.probabilities(spot, strike, rate);
    strike * (-rate * self.tau).exp() * (1.0 - p2) - spot * (1.0 - p1)
  }

  pub fn price(&self, spot: f64, strike: f64, rate: f64, is_call: bool) -> Result<f64> {
    if is_call {
      self.call(spot, strike, rate)
    } else {
      self.put(spot, strike, rate)
    }
  }
}

fn adaptive_bound(model: &dyn ModelCf, tau: f64, s: f64, norm: C64) -> Result<f64> {
  let mut u = 1.0;
  while u < U_CAP {
    let a = model.standardized_cf(C64::new(u, 0.0), tau)?.norm();
    let b = (model.standardized_cf(C64::new(u, -s), tau)? / norm).norm();
    if a / u < DECAY && b / u < DECAY {
      return Ok(u);
    }
    u *= 1.1;
  }
  Ok(U_CAP)
}

/// Price of a European call from a model characteristic function.
pub fn call_price(req: &PricingRequest, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<f64> {
  req.validate()?;
  TenorPricer::new(model, req.tau, quad)?.call(req.spot, req.strike, req.rate)
}

/// Price of a European put, by parity with the call.
pub fn put_price(req: &PricingRequest, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<f64> {
  req.validate()?;
  TenorPricer::new(model, req.tau, quad)?.put(req.spot, req.strike, req.rate)
}

/// One contract of a surface grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
  pub strike: f64,
  pub tau: f64,
  pub is_call: bool,
}

/// Price and Black–Scholes implied volatility of one contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricedContract {
  pub price: f64,
  pub implied_vol: f64,
}

/// Prices a grid of contracts, reusing the frequency grid across strikes of
/// the same tenor. Errors are reported per contract.
pub fn price_surface(
  grid: &[Contract],
  spot: f64,
  rate: f64,
  model: &dyn ModelCf,
  quad: &QuadratureConfig,
) -> Result<Vec<Result<PricedContract>>> {
  if grid.is_empty() {
    return Err(Error::InvalidInput("empty contract grid".into()));
  }
  let mut tenors: BTreeMap<u64, f64> = BTreeMap::new();
  for c in grid {
    tenors.insert(c.tau.to_bits(), c.tau);
  }
  let slices: BTreeMap<u64, Result<TenorPricer>> =
    tenors.par_iter().map(|(&bits, &tau)| (bits, TenorPricer::new(model, tau, quad))).collect();
  Ok(
    grid
      .par_iter()
      .map(|c| {
        let slice = slices[&c.tau.to_bits()].as_ref().map_err(Clone::clone)?;
        let price = slice.price(spot, c.strike, rate, c.is_call)?;
        let iv = implied_vol(price, spot, c.strike, c.tau, rate, c.is_call)?;
        Ok(PricedContract { price, implied_vol: iv })
      })
      .collect(),
  )
}
