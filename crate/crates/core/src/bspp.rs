//! Displaced Black–Scholes (BS++).
//!
//! With `σ_t = σ₀ + φ(t)` deterministic and piecewise constant, the ATM
//! implied volatility at tenor τ is the root-mean-square volatility
//! `sqrt(σ₀² ∫₀^τ φ̃²/τ)`. The map from shift levels to ATM vols inverts
//! segment by segment, which gives starting values for σ₀ and the shifts
//! straight from a market ATM term structure.

use serde::{Deserialize, Serialize};

use crate::edgeworth::Displacement;
use crate::{Error, Result};

/// Clamp applied to tiny negative forward variances caused by rounding.
const CLAMP: f64 = 1e-12;

/// ATM implied volatilities by tenor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtmTermStructure {
  pub tenors: Vec<f64>,
  pub atm_vols: Vec<f64>,
}

impl AtmTermStructure {
  pub fn new(tenors: Vec<f64>, atm_vols: Vec<f64>) -> Result<Self> {
    let ts = Self { tenors, atm_vols };
    ts.validate()?;
    Ok(ts)
  }

  pub fn validate(&self) -> Result<()> {
    if self.tenors.is_empty() {
      return Err(Error::InvalidInput("empty ATM term structure".into()));
    }
    if self.tenors.len() != self.atm_vols.len() {
      return Err(Error::InvalidInput(format!(
        "{} tenors but {} ATM vols",
        self.tenors.len(),
        self.atm_vols.len()
      )));
    }
    let mut prev = 0.0;
    for (k, (&t, &v)) in self.tenors.iter().zip(&self.atm_vols).enumerate() {
      if !(t > prev) || !t.is_finite() {
        return Err(Error::param("tenors", format!("tenor {k} ({t}) is not increasing and positive")));
      }
      if !(v > 0.0) || !v.is_finite() {
        return Err(Error::param("atm_vols", format!("vol {k} ({v}) is not positive")));
      }
      prev = t;
    }
    Ok(())
  }
}

/// ATM implied volatility of the displaced Black–Scholes model at tenor τ.
pub fn bspp_atm_vol(tau: f64, sigma0: f64, displacement: &Displacement) -> Result<f64> {
  displacement.validate(sigma0)?;
  if !(tau > 0.0 && tau.is_finite()) {
    return Err(Error::param("tau", "must be positive and finite"));
  }
  if tau < displacement.tenors[0] {
    return Ok(sigma0);
  }
  let var: f64 = displacement
    .segments(tau)?
    .iter()
    .map(|&(lo, hi, a)| {
      let c = 1.0 + a / sigma0;
      c * c * (hi - lo)
    })
    .sum();
  Ok(sigma0 * (var / tau).sqrt())
}

/// Recovers `(σ₀, a₁, …, a_{n−1})` from ATM vols; σ₀ is the shortest-tenor vol.
pub fn calibrate_shift_from_atm(ts: &AtmTermStructure) -> Result<(f64, Displacement)> {
  ts.validate()?;
  let sigma0 = ts.atm_vols[0];
  let mut shifts = Vec::with_capacity(ts.tenors.len() - 1);
  for k in 1..ts.tenors.len() {
    let (t0, t1) = (ts.tenors[k - 1], ts.tenors[k]);
    let w0 = ts.atm_vols[k - 1].powi(2) * t0;
    let w1 = ts.atm_vols[k].powi(2) * t1;
    let mut fwd = (w1 - w0) / (t1 - t0);
    if fwd < 0.0 {
      if fwd > -CLAMP {
        fwd = 0.0;
      } else {
        return Err(Error::CalendarArbitrage { index_lo: k - 1, index_hi: k, tau_lo: t0, tau_hi: t1, deficit: w0 - w1 });
      }
    }
    shifts.push(fwd.sqrt() - sigma0);
  }
  Ok((sigma0, Displacement::new(ts.tenors.clone(), shifts)?))
}
