//! Short-tenor smile analytics, spot-volatility reporting and the pricing
//! speed bench.
//!
//! As τ → 0 the implied volatility at raw log-moneyness `x = ln(K/F)` is
//!
//! ```text
//! I(x) = σ₀ [1 + (θ₃/6σ₀) x + (θ₄/24σ₀² − θ₃²/12σ₀²) x² + O(x³)]
//! θ₃ = 3β̃₀ρ₀/σ₀,   θ₄ = 4(η₀/σ₀ + (β̃₀²/σ₀²)(1 + 2ρ₀²))
//! ```
//!
//! with leading cumulants `κ₂ = σ₀²τ`, `κ₃ = σ₀³θ₃τ²`, `κ₄ = σ₀⁴θ₄τ³`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{ForwardVariance, HestonMertonParams, RoughHestonParams};
use crate::edgeworth::{Displacement, EdgeworthParams};
use crate::model::{EdgeworthModel, ModelId, ModelSpec};
use crate::pricing::{implied_vol, price_surface, Contract, QuadratureConfig, TenorPricer};
use crate::{Error, Result};

/// Level, skew and convexity of the short-tenor smile at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileExpansion {
  pub theta3: f64,
  pub theta4: f64,
  pub iv_level: f64,
  pub iv_skew: f64,
  pub iv_convexity: f64,
}

impl SmileExpansion {
  /// Quadratic approximation `I(x)`.
  pub fn iv(&self, x: f64) -> f64 {
    self.iv_level + self.iv_skew * x + 0.5 * self.iv_convexity * x * x
  }

  /// Leading-order cumulants `(κ₂, κ₃, κ₄)` of the log-return at tenor τ.
  pub fn cumulants(&self, tau: f64) -> (f64, f64, f64) {
    let s = self.iv_level;
    (s * s * tau, s.powi(3) * self.theta3 * tau * tau, s.powi(4) * self.theta4 * tau.powi(3))
  }
}

/// Small-tenor smile coefficients of the continuous model.
pub fn smile_expansion(params: &EdgeworthParams) -> Result<SmileExpansion> {
  params.validate()?;
  let s = params.sigma0;
  let b2 = params.beta_tilde0 * params.beta_tilde0;
  let theta3 = 3.0 * params.beta_tilde0 * params.rho0 / s;
  let theta4 = 4.0 * (params.eta0 / s + (b2 / (s * s)) * (1.0 + 2.0 * params.rho0 * params.rho0));
  Ok(SmileExpansion {
    theta3,
    theta4,
    iv_level: s,
    iv_skew: theta3 / 6.0,
    iv_convexity: theta4 / (12.0 * s) - theta3 * theta3 / (6.0 * s),
  })
}

/// Small-time ATM level, skew and convexity of one-factor Heston
/// (`dv = κ(θ − v)dt + ζ√v dB`, `d⟨W, B⟩ = ρ dt`) in raw log-moneyness.
pub fn affine_small_time_smile(v0: f64, zeta: f64, rho: f64) -> (f64, f64, f64) {
  let s = v0.sqrt();
  (s, rho * zeta / (4.0 * s), zeta * zeta * (2.0 - 5.0 * rho * rho) / (24.0 * s * s * s))
}

/// Finite-difference smile measurements at one tenor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileCheck {
  pub tau: f64,
  pub step: f64,
  pub level: f64,
  pub skew: f64,
  pub convexity: f64,
  pub level_error: f64,
  pub skew_error: f64,
  pub convexity_error: f64,
}

impl SmileCheck {
  /// Largest of the three relative errors (absolute where the target is 0).
  pub fn max_relative(&self, e: &SmileExpansion) -> f64 {
    let rel = |err: f64, t: f64| if t == 0.0 { err } else { err / t.abs() };
    rel(self.level_error, e.iv_level).max(rel(self.skew_error, e.iv_skew)).max(rel(self.convexity_error, e.iv_convexity))
  }
}

/// Prices the smile through the Fourier pricer under the closed-form
/// expansion and measures level, skew and convexity at `x = 0` by central
/// differences with step `0.01σ₀√τ` in raw log-moneyness.
pub fn verify_smile_against_pricer(
  params: &EdgeworthParams,
  taus: &[f64],
  quad: &QuadratureConfig,
) -> Result<(SmileExpansion, Vec<SmileCheck>)> {
  if params.lambda0 != 0.0 {
    return Err(Error::param("lambda0", "the smile expansion covers the continuous model only"));
  }
  let e = smile_expansion(params)?;
  let model = EdgeworthModel::new(*params, None)?;
  let spot = 100.0;
  let mut out = Vec::with_capacity(taus.len());
  for &tau in taus {
    let h = 0.01 * params.sigma0 * tau.sqrt();
    let pricer = TenorPricer::new(&model, tau, quad)?;
    let iv = |x: f64| -> Result<f64> {
      let k = spot * x.exp();
      let is_call = x >= 0.0;
      let p = pricer.price(spot, k, 0.0, is_call)?;
      implied_vol(p, spot, k, tau, 0.0, is_call)
    };
    let (lo, mid, hi) = (iv(-h)?, iv(0.0)?, iv(h)?);
    let level = mid;
    let skew = (hi - lo) / (2.0 * h);
    let convexity = (hi - 2.0 * mid + lo) / (h * h);
    out.push(SmileCheck {
      tau,
      step: h,
      level,
      skew,
      convexity,
      level_error: (level - e.iv_level).abs(),
      skew_error: (skew - e.iv_skew).abs(),
      convexity_error: (convexity - e.iv_convexity).abs(),
    });
  }
  Ok((e, out))
}

/// Spot volatility implied by a fitted model.
pub fn spot_vol(spec: &ModelSpec) -> f64 {
  match spec {
    ModelSpec::Edgeworth { params } | ModelSpec::EdgeworthPp { params, .. } => params.sigma0,
    ModelSpec::BsPp { sigma0, .. } => *sigma0,
    ModelSpec::HestonMerton1f { params } | ModelSpec::HestonMerton1fPp { params } => params.v1_0.sqrt(),
    ModelSpec::HestonMerton2f { params } | ModelSpec::HestonMerton2fPp { params } => (params.v1_0 + params.v2_0).sqrt(),
    ModelSpec::RoughHestonPp { params } | ModelSpec::RoughHestonMertonPp { params } => params.xi0.levels[0].sqrt(),
  }
}

/// Tenors of the bench fixture: the 5.5-hour expiry and five daily ones.
pub fn bench_tenors() -> Vec<f64> {
  let zero_dte = 5.5 / 24.0;
  (0..6).map(|d| (d as f64 + zero_dte) / 365.0).collect()
}

/// Three contracts per tenor: ATM put and the puts/calls at standardized
/// moneyness ∓0.15 with a 20% reference volatility.
pub fn bench_fixture(spot: f64, tenors: &[f64]) -> Vec<Contract> {
  let mut grid = Vec::with_capacity(3 * tenors.len());
  for &tau in tenors {
    let k = |m: f64| spot * (m * 0.2 * tau.sqrt()).exp();
    grid.push(Contract { strike: spot, tau, is_call: false });
    grid.push(Contract { strike: k(-0.15), tau, is_call: false });
    grid.push(Contract { strike: k(0.15), tau, is_call: true });
  }
  grid
}

/// Reference Edgeworth++, two-factor Heston–Merton and Rough Heston++
/// specifications on the bench tenors.
pub fn bench_models() -> Vec<(String, ModelSpec)> {
  let tenors = bench_tenors();
  let edgeworth = EdgeworthParams {
    sigma0: 0.15,
    beta_tilde0: 0.6,
    rho0: -0.6,
    eta0: 0.3,
    alpha_prime0: 0.5,
    lambda0: 5.0,
    mu_j: -0.02,
    sigma_j: 0.03,
  };
  let displacement = Displacement { tenors: tenors.clone(), shifts: vec![0.01, 0.02, 0.015, 0.03, 0.025] };
  let heston = HestonMertonParams {
    v1_0: 0.02,
    v2_0: 0.01,
    kappa1: 5.0,
    kappa2: 0.5,
    theta1: 0.02,
    theta2: 0.01,
    zeta1: 0.5,
    zeta2: 0.2,
    rho1: -0.7,
    rho2: -0.3,
    rho_jump: -0.5,
    mu_x: -0.01,
    sigma_x: 0.02,
    m_v: 0.01,
    c0: 2.0,
    c1: 50.0,
    c2: 10.0,
    factor_count: 2,
    feller_enforced: false,
    shifts: None,
  };
  let rough = RoughHestonParams {
    hurst: 0.1,
    nu: 0.3,
    rho: -0.7,
    xi0: ForwardVariance { tenors, levels: vec![0.0225, 0.025, 0.027, 0.028, 0.03, 0.031] },
    jumps: None,
  };
  vec![
    (ModelId::EdgeworthPp.to_string(), ModelSpec::EdgeworthPp { params: edgeworth, displacement }),
    (ModelId::HestonMerton2f.to_string(), ModelSpec::HestonMerton2f { params: heston }),
    (ModelId::RoughHestonPp.to_string(), ModelSpec::RoughHestonPp { params: rough }),
  ]
}

/// Mean time and 95% half-width of one model on one fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
  pub model: String,
  pub zero_dte_mean: f64,
  pub zero_dte_half_width: f64,
  pub surface_mean: f64,
  pub surface_half_width: f64,
}

/// Output of [`timing_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
  pub trials: usize,
  pub node_count: usize,
  pub rows: Vec<TimingRow>,
}

impl TimingReport {
  pub fn row(&self, model: &str) -> Option<&TimingRow> {
    self.rows.iter().find(|r| r.model == model)
  }

  pub fn to_csv(&self) -> String {
    let mut s = String::from("model,trials,zero_dte_mean,zero_dte_half_width,surface_mean,surface_half_width\n");
    for r in &self.rows {
      s.push_str(&format!(
        "{},{},{:e},{:e},{:e},{:e}\n",
        r.model, self.trials, r.zero_dte_mean, r.zero_dte_half_width, r.surface_mean, r.surface_half_width
      ));
    }
    s
  }
}

fn mean_half_width(xs: &[f64]) -> (f64, f64) {
  let n = xs.len() as f64;
  let mean = xs.iter().sum::<f64>() / n;
  if xs.len() < 2 {
    return (mean, 0.0);
  }
  let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
  (mean, 1.96 * (var / n).sqrt())
}

/// Times full-surface and 0DTE-slice pricing of each model on the bench
/// fixture, single-threaded. Every contract must price successfully.
pub fn timing_bench(models: &[(String, ModelSpec)], trials: usize, quad: &QuadratureConfig) -> Result<TimingReport> {
  if trials == 0 {
    return Err(Error::param("trials", "must be at least 1"));
  }
  let spot = 100.0;
  let tenors = bench_tenors();
  let surface = bench_fixture(spot, &tenors);
  let zero_dte: Vec<Contract> = surface.iter().copied().filter(|c| c.tau == tenors[0]).collect();
  let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| Error::Io(e.to_string()))?;
  let mut rows = Vec::with_capacity(models.len());
  for (name, spec) in models {
    let model = spec.build()?;
    let time = |grid: &[Contract]| -> Result<f64> {
      let start = Instant::now();
      let priced = price_surface(grid, spot, 0.0, model.as_ref(), quad)?;
      let elapsed = start.elapsed().as_secs_f64();
      for p in priced {
        p?;
      }
      Ok(elapsed)
    };
    let (mut a, mut b) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    pool.install(|| -> Result<()> {
      for _ in 0..trials {
        a.push(time(&zero_dte)?);
        b.push(time(&surface)?);
      }
      Ok(())
    })?;
    let (zm, zh) = mean_half_width(&a);
    let (sm, sh) = mean_half_width(&b);
    rows.push(TimingRow {
      model: name.clone(),
      zero_dte_mean: zm,
      zero_dte_half_width: zh,
      surface_mean: sm,
      surface_half_width: sh,
    });
  }
  Ok(TimingReport { trials, node_count: quad.node_count, rows })
}
