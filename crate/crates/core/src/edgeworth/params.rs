use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative slack allowed when a tenor is compared with the last grid tenor.
const GRID_SLACK: f64 = 1e-10;

/// Spot values of the Edgeworth++ state vector.
///
/// All rates are annualized. `beta_tilde0 * rho0` is the loading of the
/// volatility on the price Brownian motion and
/// `beta_tilde0 * sqrt(1 - rho0²)` the loading on the orthogonal one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthParams {
  pub sigma0: f64,
  pub beta_tilde0: f64,
  pub rho0: f64,
  pub eta0: f64,
  pub alpha_prime0: f64,
  pub lambda0: f64,
  #[serde(rename = "mu_J")]
  pub mu_j: f64,
  #[serde(rename = "sigma_J")]
  pub sigma_j: f64,
}

impl EdgeworthParams {
  /// Parameters under which the model collapses to Black–Scholes.
  pub fn black_scholes(sigma0: f64) -> Self {
    Self { sigma0, beta_tilde0: 0.0, rho0: 0.0, eta0: 0.0, alpha_prime0: 0.0, lambda0: 0.0, mu_j: 0.0, sigma_j: 0.0 }
  }

  pub fn validate(&self) -> Result<()> {
    let all = [
      ("sigma0", self.sigma0),
      ("beta_tilde0", self.beta_tilde0),
      ("rho0", self.rho0),
      ("eta0", self.eta0),
      ("alpha_prime0", self.alpha_prime0),
      ("lambda0", self.lambda0),
      ("mu_J", self.mu_j),
      ("sigma_J", self.sigma_j),
    ];
    for (name, v) in all {
      if !v.is_finite() {
        return Err(Error::param(name, "must be finite"));
      }
    }
    if self.sigma0 <= 0.0 {
      return Err(Error::param("sigma0", "must be positive"));
    }
    if self.sigma_j < 0.0 {
      return Err(Error::param("sigma_J", "must be non-negative"));
    }
    if self.lambda0 < 0.0 {
      return Err(Error::param("lambda0", "must be non-negative"));
    }
    if !(-1.0..=1.0).contains(&self.rho0) {
      return Err(Error::param("rho0", "must lie in [-1, 1]"));
    }
    Ok(())
  }

  /// β₀ = β̃₀ρ₀, the vol-of-vol loading on the price shock.
  pub fn beta0(&self) -> f64 {
    self.beta_tilde0 * self.rho0
  }

  /// β₀′ = β̃₀√(1−ρ₀²), the loading on the orthogonal shock.
  pub fn beta0_perp(&self) -> f64 {
    self.beta_tilde0 * (1.0 - self.rho0 * self.rho0).max(0.0).sqrt()
  }
}

/// Piecewise-constant volatility displacement.
///
/// `phi(t) = a_k` on `[τ_k, τ_{k+1})` with `τ₀ = 0` and `a₀ = 0`, so
/// `shifts` holds `a₁, …, a_{n−1}` and has one entry fewer than `tenors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
  pub tenors: Vec<f64>,
  pub shifts: Vec<f64>,
}

impl Displacement {
  pub fn new(tenors: Vec<f64>, shifts: Vec<f64>) -> Result<Self> {
    let d = Self { tenors, shifts };
    d.validate_grid()?;
    Ok(d)
  }

  /// Grid with every shift set to zero.
  pub fn flat(tenors: Vec<f64>) -> Result<Self> {
    let n = tenors.len();
    Self::new(tenors, vec![0.0; n.saturating_sub(1)])
  }

  pub fn validate_grid(&self) -> Result<()> {
    if self.tenors.is_empty() {
      return Err(Error::param("tenors", "at least one tenor is required"));
    }
    if self.shifts.len() + 1 != self.tenors.len() {
      return Err(Error::param(
        "shifts",
        format!("expected {} shifts for {} tenors, got {}", self.tenors.len() - 1, self.tenors.len(), self.shifts.len()),
      ));
    }
    let mut prev = 0.0;
    for (k, &t) in self.tenors.iter().enumerate() {
      if !t.is_finite() || t <= prev {
        return Err(Error::param("tenors", format!("tenor {k} ({t}) must be finite and exceed the previous one ({prev})")));
      }
      prev = t;
    }
    if let Some(k) = self.shifts.iter().position(|a| !a.is_finite()) {
      return Err(Error::param("shifts", format!("shift {} is not finite", k + 1)));
    }
    Ok(())
  }

  /// Checks the grid and that `σ₀ + a_k > 0` on every segment.
  pub fn validate(&self, sigma0: f64) -> Result<()> {
    self.validate_grid()?;
    if !(sigma0 > 0.0) {
      return Err(Error::param("sigma0", "must be positive"));
    }
    for (k, a) in self.shifts.iter().enumerate() {
      if 1.0 + a / sigma0 <= 0.0 {
        return Err(Error::param("shifts", format!("1 + a_{}/sigma0 = {} is not positive", k + 1, 1.0 + a / sigma0)));
      }
    }
    Ok(())
  }

  pub fn len(&self) -> usize {
    self.tenors.len()
  }

  pub fn is_empty(&self) -> bool {
    self.tenors.is_empty()
  }

  pub fn last_tenor(&self) -> f64 {
    *self.tenors.last().expect("validated grid is non-empty")
  }

  pub fn is_zero(&self) -> bool {
    self.shifts.iter().all(|&a| a == 0.0)
  }

  /// Shift level `a_k` of segment `k` (`a₀ = 0`).
  pub fn level(&self, k: usize) -> f64 {
    if k == 0 {
      0.0
    } else {
      self.shifts[k - 1]
    }
  }

  /// φ(t): the displacement as a function of time; zero beyond the last tenor.
  pub fn phi(&self, t: f64) -> f64 {
    if t < 0.0 || t >= self.last_tenor() {
      return 0.0;
    }
    let k = self.tenors.partition_point(|&tk| tk <= t);
    self.level(k)
  }

  /// Segments `(start, end, level)` of φ covering `[0, τ]`, the last one
  /// truncated at τ. A τ strictly inside a segment acts as an extra
  /// breakpoint carrying that segment's level.
  pub fn segments(&self, tau: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(tau > 0.0) || !tau.is_finite() {
      return Err(Error::param("tau", "must be positive and finite"));
    }
    let last = self.last_tenor();
    if tau > last * (1.0 + GRID_SLACK) {
      return Err(Error::TenorBeyondGrid { tau, last });
    }
    let mut out = Vec::with_capacity(self.tenors.len());
    let mut start = 0.0;
    for (k, &end) in self.tenors.iter().enumerate() {
      let stop = if end >= tau * (1.0 - GRID_SLACK) { tau } else { end };
      out.push((start, stop, self.level(k)));
      if stop == tau {
        break;
      }
      start = end;
    }
    Ok(out)
  }
}

/// Powers of tenor increments and of shift levels: `ΔT_{j,k} = τ_{k+1}^j − τ_k^j`
/// and `Φ̃_{j,k} = (1 + a_k/σ₀)^j`, rows `j = 1..=m`, columns `k = 0..n−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TenorMatrices {
  pub delta_t: Vec<Vec<f64>>,
  pub phi_tilde: Vec<Vec<f64>>,
}

impl TenorMatrices {
  pub fn max_power(&self) -> usize {
    self.delta_t.len()
  }

  /// `⟨Φ̃_{jp}, ΔT_{jt}⟩` restricted to the first `k` segments.
  pub fn inner(&self, jp: usize, jt: usize, k: usize) -> f64 {
    let p = &self.phi_tilde[jp - 1];
    let t = &self.delta_t[jt - 1];
    p.iter().zip(t).take(k).map(|(a, b)| a * b).sum()
  }
}

/// Builds the tenor matrices up to power `max_power` (at least 4).
pub fn build_tenor_matrices(displacement: &Displacement, sigma0: f64, max_power: usize) -> Result<TenorMatrices> {
  if max_power < 4 {
    return Err(Error::param("max_power", "must be at least 4"));
  }
  displacement.validate(sigma0)?;
  let n = displacement.len();
  let mut delta_t = vec![vec![0.0; n]; max_power];
  let mut phi_tilde = vec![vec![0.0; n]; max_power];
  for k in 0..n {
    let lo = if k == 0 { 0.0 } else { displacement.tenors[k - 1] };
    let hi = displacement.tenors[k];
    let c = 1.0 + displacement.level(k) / sigma0;
    for j in 1..=max_power {
      delta_t[j - 1][k] = hi.powi(j as i32) - lo.powi(j as i32);
      phi_tilde[j - 1][k] = c.powi(j as i32);
    }
  }
  Ok(TenorMatrices { delta_t, phi_tilde })
}
