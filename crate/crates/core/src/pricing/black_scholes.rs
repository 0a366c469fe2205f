use statrs::function::erf::erfc;

use crate::roots::brent;
use crate::{Error, Result};

/// Standard normal distribution function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
  0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
  (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn check_domain(spot: f64, strike: f64, tau: f64, rate: f64) -> Result<()> {
  if !(spot > 0.0 && spot.is_finite()) {
    return Err(Error::param("spot", "must be positive and finite"));
  }
  if !(strike > 0.0 && strike.is_finite()) {
    return Err(Error::param("strike", "must be positive and finite"));
  }
  if !(tau > 0.0 && tau.is_finite()) {
    return Err(Error::param("tau", "must be positive and finite"));
  }
  if !rate.is_finite() {
    return Err(Error::param("rate", "must be finite"));
  }
  Ok(())
}

/// Black–Scholes price of a European call or put.
///
/// The out-of-the-money leg is evaluated directly and the other by parity,
/// which keeps deep in-the-money prices free of cancellation.
pub fn bs_price(spot: f64, strike: f64, tau: f64, rate: f64, vol: f64, is_call: bool) -> Result<f64> {
  check_domain(spot, strike, tau, rate)?;
  if !(vol >= 0.0 && vol.is_finite()) {
    return Err(Error::param("vol", "must be non-negative and finite"));
  }
  Ok(bs_unchecked(spot, strike, tau, rate, vol, is_call))
}

pub(crate) fn bs_unchecked(spot: f64, strike: f64, tau: f64, rate: f64, vol: f64, is_call: bool) -> f64 {
  let df = (-rate * tau).exp();
  let fwd = spot / df;
  let sd = vol * tau.sqrt();
  let (call, put) = if sd == 0.0 {
    ((spot - strike * df).max(0.0), (strike * df - spot).max(0.0))
  } else {
    let d1 = (fwd / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if strike >= fwd {
      let c = df * (fwd * norm_cdf(d1) - strike * norm_cdf(d2));
      (c, c - spot + strike * df)
    } else {
      let p = df * (strike * norm_cdf(-d2) - fwd * norm_cdf(-d1));
      (p + spot - strike * df, p)
    }
  };
  if is_call {
    call.max(0.0)
  } else {
    put.max(0.0)
  }
}

/// Black–Scholes vega `∂price/∂vol`.
pub fn bs_vega(spot: f64, strike: f64, tau: f64, rate: f64, vol: f64) -> f64 {
  let df = (-rate * tau).exp();
  let fwd = spot / df;
  let sd = vol * tau.sqrt();
  if sd <= 0.0 {
    return 0.0;
  }
  let d1 = (fwd / strike).ln() / sd + 0.5 * sd;
  spot * norm_pdf(d1) * tau.sqrt()
}

/// Lower and upper no-arbitrage bounds for an option price.
pub fn price_bounds(spot: f64, strike: f64, tau: f64, rate: f64, is_call: bool) -> (f64, f64) {
  let kd = strike * (-rate * tau).exp();
  if is_call {
    ((spot - kd).max(0.0), spot)
  } else {
    ((kd - spot).max(0.0), kd)
  }
}

/// Black–Scholes implied volatility.
///
/// The price must lie strictly inside the no-arbitrage bounds. In-the-money
/// quotes are mapped to the out-of-the-money leg by parity, the root is
/// bracketed in `[1e−6, 10]` by Brent's method and polished by Newton steps.
pub fn implied_vol(price: f64, spot: f64, strike: f64, tau: f64, rate: f64, is_call: bool) -> Result<f64> {
  check_domain(spot, strike, tau, rate)?;
  let (lower, upper) = price_bounds(spot, strike, tau, rate, is_call);
  if !price.is_finite() || price <= lower || price >= upper {
    return Err(Error::PriceBounds { price, lower, upper });
  }
  let kd = strike * (-rate * tau).exp();
  let fwd = spot * (rate * tau).exp();
  let otm_call = strike >= fwd;
  let target = match (is_call, otm_call) {
    (true, true) | (false, false) => price,
    (true, false) => price - spot + kd,
    (false, true) => price + spot - kd,
  };
  let f = |v: f64| bs_unchecked(spot, strike, tau, rate, v, otm_call) - target;
  let (lo, hi) = (1e-6, 10.0);
  let (flo, fhi) = (f(lo), f(hi));
  if flo > 0.0 || fhi < 0.0 {
    return Err(Error::PriceBounds { price, lower: lower + flo.max(0.0), upper: upper.min(price - fhi) });
  }
  let mut v = brent(f, lo, hi, 1e-15, 300).ok_or_else(|| Error::Convergence("implied volatility bracket".into()))?;
  for _ in 0..3 {
    let vega = bs_vega(spot, strike, tau, rate, v);
    let diff = f(v);
    if vega <= 0.0 || diff == 0.0 {
      break;
    }
    let next = v - diff / vega;
    if !(next > lo && next < hi) || f(next).abs() >= diff.abs() {
      break;
    }
    v = next;
  }
  Ok(v)
}
