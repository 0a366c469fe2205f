//! Surface calibration by minimizing the implied-volatility RMSE.
//!
//! ```text
//! RMSE(Θ) = 100 · sqrt( (1/|T|) Σ_τ (1/|K_τ|) Σ_K (σ_model(K, τ; Θ) − σ_market(K, τ))² )
//! ```
//!
//! Market volatilities come from mid prices. The minimizer is Nelder–Mead
//! on box-normalized coordinates with restarts from perturbed points and a
//! seeded random population when a restart stagnates.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspp::calibrate_shift_from_atm;
use crate::market::{MoneynessBucket, OptionQuote, Surface, TenorSlice};
use crate::model::{ModelCf, ModelId, ModelSpec};
use crate::pricing::{implied_vol, QuadratureConfig, TenorPricer};
use crate::{Error, Result};

/// Volatility assigned to a model price at or above the upper bound.
const VOL_CAP: f64 = 10.0;
/// Objective assigned to parameter vectors the model rejects.
const PENALTY: f64 = 1e6;

/// Box constraints. Equal bounds fix a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
  pub lower: Vec<f64>,
  pub upper: Vec<f64>,
}

impl ParamBounds {
  pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
    let b = Self { lower: pairs.iter().map(|p| p.0).collect(), upper: pairs.iter().map(|p| p.1).collect() };
    b.validate()?;
    Ok(b)
  }

  /// The registry defaults for a model on an `n`-tenor surface.
  pub fn defaults(id: ModelId, n_tenors: usize) -> Self {
    Self::new(&id.default_bounds(n_tenors)).expect("registry bounds are valid")
  }

  pub fn len(&self) -> usize {
    self.lower.len()
  }

  pub fn is_empty(&self) -> bool {
    self.lower.is_empty()
  }

  pub fn validate(&self) -> Result<()> {
    if self.lower.len() != self.upper.len() {
      return Err(Error::InvalidInput("bounds have mismatched lengths".into()));
    }
    for (k, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
      if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::param(format!("bounds[{k}]"), format!("[{lo}, {hi}] is not a valid interval")));
      }
    }
    Ok(())
  }

  pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
    x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(&v, (&lo, &hi))| v.clamp(lo, hi)).collect()
  }
}

/// Market data of a surface prepared for repeated model evaluation.
#[derive(Debug, Clone)]
pub struct CalibrationTarget {
  pub surface: Surface,
  /// Mid implied volatility per quote, slice by slice.
  pub market_vols: Vec<Vec<f64>>,
  pub buckets: Vec<Vec<MoneynessBucket>>,
}

impl CalibrationTarget {
  pub fn new(surface: &Surface) -> Result<Self> {
    if surface.slices.is_empty() {
      return Err(Error::InvalidInput("empty surface".into()));
    }
    let mut market_vols = Vec::with_capacity(surface.slices.len());
    let mut buckets = Vec::with_capacity(surface.slices.len());
    for slice in &surface.slices {
      if slice.quotes.is_empty() {
        return Err(Error::InvalidInput(format!("tenor {} has no quotes", slice.tenor)));
      }
      let vols = slice.quotes.iter().map(|q| surface.mid_vol(slice, q)).collect::<Result<Vec<_>>>()?;
      market_vols.push(vols);
      buckets.push(slice.quotes.iter().map(|q| MoneynessBucket::of(slice.moneyness(q))).collect());
    }
    Ok(Self { surface: surface.clone(), market_vols, buckets })
  }

  /// Model prices, slice by slice.
  pub fn model_prices(&self, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<Vec<Vec<f64>>> {
    let s = &self.surface;
    s.slices
      .par_iter()
      .map(|slice| {
        let pricer = TenorPricer::new(model, slice.tenor, quad)?;
        let spot = s.slice_spot(slice);
        slice.quotes.iter().map(|q| pricer.price(spot, q.strike, s.rate, q.is_call)).collect()
      })
      .collect()
  }

  /// Black–Scholes volatilities of model prices. Prices on the lower
  /// bound map to zero volatility and prices on the upper bound to a cap.
  pub fn model_vols(&self, prices: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = &self.surface;
    s.slices
      .iter()
      .zip(prices)
      .map(|(slice, ps)| {
        let spot = s.slice_spot(slice);
        slice
          .quotes
          .iter()
          .zip(ps)
          .map(|(q, &p)| match implied_vol(p, spot, q.strike, q.tenor, s.rate, q.is_call) {
            Ok(v) => v,
            Err(Error::PriceBounds { lower, .. }) if p <= lower => 0.0,
            Err(_) => VOL_CAP,
          })
          .collect()
      })
      .collect()
  }

  /// RMSE in volatility points of the given model volatilities.
  pub fn rmse_of(&self, model_vols: &[Vec<f64>]) -> f64 {
    let per_tenor: f64 = model_vols
      .iter()
      .zip(&self.market_vols)
      .map(|(m, k)| m.iter().zip(k).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / k.len() as f64)
      .sum();
    100.0 * (per_tenor / self.market_vols.len() as f64).sqrt()
  }

  pub fn rmse(&self, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<f64> {
    Ok(self.rmse_of(&self.model_vols(&self.model_prices(model, quad)?)))
  }

  /// Share of quotes whose model price lies within `[bid, ask]`.
  pub fn bid_ask_fraction_of(&self, prices: &[Vec<f64>]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (slice, ps) in self.surface.slices.iter().zip(prices) {
      for (q, &p) in slice.quotes.iter().zip(ps) {
        total += 1;
        if q.bid <= p && p <= q.ask {
          hit += 1;
        }
      }
    }
    if total == 0 {
      0.0
    } else {
      hit as f64 / total as f64
    }
  }

  /// RMSE per (tenor, moneyness bucket) cell.
  pub fn bucket_rmse_of(&self, model_vols: &[Vec<f64>]) -> Vec<BucketRmse> {
    let mut cells: BTreeMap<(usize, MoneynessBucket), (f64, usize)> = BTreeMap::new();
    for (t, ((m, k), b)) in model_vols.iter().zip(&self.market_vols).zip(&self.buckets).enumerate() {
      for ((a, c), &bucket) in m.iter().zip(k).zip(b) {
        let e = cells.entry((t, bucket)).or_default();
        e.0 += (a - c).powi(2);
        e.1 += 1;
      }
    }
    cells
      .into_iter()
      .map(|((t, bucket), (sq, n))| BucketRmse {
        tenor_index: t,
        tenor: self.surface.slices[t].tenor,
        bucket,
        rmse: 100.0 * (sq / n as f64).sqrt(),
        count: n,
      })
      .collect()
  }
}

/// Implied-volatility RMSE of a model on a surface, in volatility points.
pub fn rmse(surface: &Surface, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<f64> {
  CalibrationTarget::new(surface)?.rmse(model, quad)
}

/// Fraction of quotes priced inside the bid–ask spread.
pub fn bid_ask_fraction(surface: &Surface, model: &dyn ModelCf, quad: &QuadratureConfig) -> Result<f64> {
  let t = CalibrationTarget::new(surface)?;
  Ok(t.bid_ask_fraction_of(&t.model_prices(model, quad)?))
}

/// RMSE of one (tenor, bucket) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRmse {
  pub tenor_index: usize,
  pub tenor: f64,
  pub bucket: MoneynessBucket,
  pub rmse: f64,
  pub count: usize,
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
  pub quad: QuadratureConfig,
  pub max_evaluations: usize,
  pub restarts: usize,
  pub rng_seed: u64,
  /// Stop once the RMSE (vol points) falls below this value.
  pub target_rmse: f64,
  /// Relative spread of simplex values that ends a Nelder–Mead run.
  pub ftol: f64,
  /// Simplex diameter, in normalized coordinates, that ends a run.
  pub xtol: f64,
}

impl Default for CalibrationConfig {
  fn default() -> Self {
    Self {
      quad: QuadratureConfig::with_nodes(1000),
      max_evaluations: 20_000,
      restarts: 3,
      rng_seed: 0,
      target_rmse: 0.0,
      ftol: 1e-10,
      xtol: 1e-9,
    }
  }
}

/// Output of [`calibrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
  pub model: ModelId,
  pub spec: ModelSpec,
  pub param_names: Vec<String>,
  pub params: Vec<f64>,
  pub rmse: f64,
  pub bucket_rmse: Vec<BucketRmse>,
  pub bid_ask_fraction: f64,
  pub iterations: usize,
  pub evaluations: usize,
  pub converged: bool,
  pub wall_time: f64,
  /// Best objective after each iteration.
  pub trace: Vec<f64>,
}

/// Keeps displacement levels above −σ₀ for the volatility-shift models.
fn project(id: ModelId, x: &mut [f64]) {
  let first_shift = match id {
    ModelId::EdgeworthPp => 8,
    ModelId::BsPp => 1,
    _ => return,
  };
  let floor = -0.999 * x[0];
  for a in &mut x[first_shift..] {
    *a = a.max(floor);
  }
}

/// Starting point from the ATM term structure of the surface.
pub fn default_start(id: ModelId, surface: &Surface) -> Vec<f64> {
  let tenors = surface.tenors();
  let n = tenors.len();
  let (sigma0, shifts) = match surface.atm_term_structure().and_then(|ts| calibrate_shift_from_atm(&ts)) {
    Ok((s, d)) => (s, d.shifts),
    Err(_) => (surface.slices[0].atm_vol, vec![0.0; n.saturating_sub(1)]),
  };
  let v0 = sigma0 * sigma0;
  let fwd_var: Vec<f64> = shifts.iter().map(|a| (sigma0 + a).powi(2)).collect();
  let x = match id {
    ModelId::Edgeworth => vec![sigma0, 1.0, -0.5, 0.0, 0.0, 0.0, -0.01, 0.01],
    ModelId::EdgeworthPp => [vec![sigma0, 1.0, -0.5, 0.0, 0.0, 0.0, -0.01, 0.01], shifts].concat(),
    ModelId::BsPp => [vec![sigma0], shifts].concat(),
    ModelId::HestonMerton1f => vec![v0, 5.0, v0, 0.5, -0.6, 5.0, -0.01, 0.01],
    ModelId::HestonMerton1fPp => {
      [vec![v0, 5.0, v0, 0.5, -0.6, 5.0, -0.01, 0.01], fwd_var.iter().map(|w| (w - v0).max(0.0)).collect()].concat()
    }
    ModelId::HestonMerton2f | ModelId::HestonMerton2fPp => {
      let base = vec![
        0.7 * v0,
        0.3 * v0,
        5.0,
        0.5,
        0.7 * v0,
        0.3 * v0,
        0.5,
        0.2,
        -0.6,
        -0.3,
        0.0,
        -0.01,
        0.01,
        0.0,
        5.0,
        0.0,
        0.0,
      ];
      if id == ModelId::HestonMerton2fPp {
        [base, fwd_var.iter().map(|w| (w - v0).max(0.0)).collect()].concat()
      } else {
        base
      }
    }
    ModelId::RoughHestonPp => [vec![sigma0, -0.6, 0.3, 0.1], fwd_var].concat(),
    ModelId::RoughHestonMertonPp => [vec![sigma0, -0.6, 0.3, 0.1, 5.0, -0.01, 0.01], fwd_var].concat(),
  };
  let mut x = ParamBounds::defaults(id, n).clamp(&x);
  project(id, &mut x);
  x
}

struct Objective<'a> {
  id: ModelId,
  target: &'a CalibrationTarget,
  tenors: Vec<f64>,
  bounds: &'a ParamBounds,
  quad: &'a QuadratureConfig,
  evaluations: usize,
}

impl Objective<'_> {
  fn decode(&self, z: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> =
      z.iter().zip(self.bounds.lower.iter().zip(&self.bounds.upper)).map(|(&t, (&lo, &hi))| lo + t.clamp(0.0, 1.0) * (hi - lo)).collect();
    project(self.id, &mut x);
    x
  }

  fn encode(&self, x: &[f64]) -> Vec<f64> {
    x.iter()
      .zip(self.bounds.lower.iter().zip(&self.bounds.upper))
      .map(|(&v, (&lo, &hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
      .collect()
  }

  fn value(&mut self, z: &[f64]) -> f64 {
    self.evaluations += 1;
    let x = self.decode(z);
    let eval = || -> Result<f64> {
      let model = self.id.spec_from_vector(&x, &self.tenors)?.build()?;
      self.target.rmse(model.as_ref(), self.quad)
    };
    match eval() {
      Ok(v) if v.is_finite() => v,
      _ => PENALTY,
    }
  }
}

/// Nelder–Mead state over the free coordinates of the unit box.
struct Simplex {
  points: Vec<Vec<f64>>,
  values: Vec<f64>,
}

impl Simplex {
  fn sort(&mut self) {
    let mut idx: Vec<usize> = (0..self.values.len()).collect();
    idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
    self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
    self.values = idx.iter().map(|&i| self.values[i]).collect();
  }

  fn diameter(&self) -> f64 {
    let best = &self.points[0];
    self.points[1..]
      .iter()
      .map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
      .fold(0.0, f64::max)
  }
}

struct Run {
  best_z: Vec<f64>,
  best_f: f64,
  iterations: usize,
  converged: bool,
}

fn embed(full: &[f64], free: &[usize], sub: &[f64]) -> Vec<f64> {
  let mut z = full.to_vec();
  for (k, &i) in free.iter().enumerate() {
    z[i] = sub[k].clamp(0.0, 1.0);
  }
  z
}

#[allow(clippy::too_many_arguments)]
fn nelder_mead(
  obj: &mut Objective<'_>,
  start: &[f64],
  free: &[usize],
  step: f64,
  budget: usize,
  cfg: &CalibrationConfig,
  trace: &mut Vec<f64>,
  best_so_far: f64,
) -> Run {
  let d = free.len();
  let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
  let mut points = vec![x0.clone()];
  for k in 0..d {
    let mut p = x0.clone();
    // Step inward when the start sits on the upper face.
    p[k] = if p[k] + step <= 1.0 { p[k] + step } else { p[k] - step };
    points.push(p);
  }
  let mut values = Vec::with_capacity(d + 1);
  for p in &points {
    values.push(obj.value(&embed(start, free, p)));
  }
  let mut s = Simplex { points, values };
  let mut iterations = 0;
  let mut converged = false;
  let spent0 = obj.evaluations;
  let mut global = best_so_far;
  loop {
    s.sort();
    global = global.min(s.values[0]);
    trace.push(global);
    let spread = (s.values[d] - s.values[0]).abs();
    if s.values[0] <= cfg.target_rmse
      || (spread <= cfg.ftol * (1.0 + s.values[0].abs()) && s.diameter() <= cfg.xtol.max(1e-3 * step))
      || s.diameter() <= cfg.xtol
    {
      converged = true;
      break;
    }
    if obj.evaluations - spent0 >= budget {
      break;
    }
    iterations += 1;
    let centroid: Vec<f64> = (0..d).map(|j| s.points[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
    let along = |t: f64| -> Vec<f64> {
      centroid.iter().zip(&s.points[d]).map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0)).collect()
    };
    let xr = along(1.0);
    let fr = obj.value(&embed(start, free, &xr));
    if fr < s.values[0] {
      let xe = along(2.0);
      let fe = obj.value(&embed(start, free, &xe));
      if fe < fr {
        s.points[d] = xe;
        s.values[d] = fe;
      } else {
        s.points[d] = xr;
        s.values[d] = fr;
      }
    } else if fr < s.values[d - 1] {
      s.points[d] = xr;
      s.values[d] = fr;
    } else {
      let (xc, fc) = if fr < s.values[d] {
        let xc = along(0.5);
        let fc = obj.value(&embed(start, free, &xc));
        (xc, fc)
      } else {
        let xc = along(-0.5);
        let fc = obj.value(&embed(start, free, &xc));
        (xc, fc)
      };
      if fc < fr.min(s.values[d]) {
        s.points[d] = xc;
        s.values[d] = fc;
      } else {
        let best = s.points[0].clone();
        for k in 1..=d {
          let p: Vec<f64> = best.iter().zip(&s.points[k]).map(|(b, x)| b + 0.5 * (x - b)).collect();
          s.values[k] = obj.value(&embed(start, free, &p));
          s.points[k] = p;
        }
      }
    }
  }
  s.sort();
  Run { best_z: embed(start, free, &s.points[0]), best_f: s.values[0], iterations, converged }
}

/// Fits `id` to `surface` within `bounds`, starting from `seed_params` or
/// from [`default_start`].
pub fn calibrate(
  surface: &Surface,
  id: ModelId,
  bounds: Option<&ParamBounds>,
  seed_params: Option<&[f64]>,
  cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
  let clock = Instant::now();
  let target = CalibrationTarget::new(surface)?;
  let tenors = surface.tenors();
  let n = tenors.len();
  let default_bounds = ParamBounds::defaults(id, n);
  let bounds = bounds.unwrap_or(&default_bounds);
  bounds.validate()?;
  if bounds.len() != id.param_count(n) {
    return Err(Error::InvalidInput(format!("{id} has {} parameters, bounds give {}", id.param_count(n), bounds.len())));
  }
  cfg.quad.validate()?;
  let start = match seed_params {
    Some(x) if x.len() == bounds.len() => bounds.clamp(x),
    Some(x) => return Err(Error::InvalidInput(format!("seed has {} parameters, expected {}", x.len(), bounds.len()))),
    None => bounds.clamp(&default_start(id, surface)),
  };
  let free: Vec<usize> = (0..bounds.len()).filter(|&i| bounds.upper[i] > bounds.lower[i]).collect();
  let mut obj = Objective { id, target: &target, tenors: tenors.clone(), bounds, quad: &cfg.quad, evaluations: 0 };
  let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
  let mut trace = Vec::new();
  let mut best_z = obj.encode(&start);
  let mut best_f = obj.value(&best_z);
  trace.push(best_f);
  let mut iterations = 0;
  let mut converged = false;
  let mut step = 0.1;
  let per_run = cfg.max_evaluations / (cfg.restarts + 1).max(1);
  for run_index in 0..=cfg.restarts {
    if free.is_empty() || best_f <= cfg.target_rmse || obj.evaluations >= cfg.max_evaluations {
      converged = converged || free.is_empty() || best_f <= cfg.target_rmse;
      break;
    }
    let budget = per_run.min(cfg.max_evaluations - obj.evaluations);
    let from = if run_index == 0 {
      best_z.clone()
    } else {
      // Perturbed restart around the incumbent.
      best_z.iter().enumerate().map(|(i, &z)| if free.contains(&i) { (z + rng.random_range(-0.5..0.5) * step).clamp(0.0, 1.0) } else { z }).collect()
    };
    let run = nelder_mead(&mut obj, &from, &free, step, budget, cfg, &mut trace, best_f);
    iterations += run.iterations;
    let improved = run.best_f < best_f * (1.0 - 1e-6);
    if run.best_f < best_f {
      best_f = run.best_f;
      best_z = run.best_z;
    }
    converged = run.converged;
    if !improved && run_index > 0 {
      // Stagnation: sample a population and continue from its best member
      // if it beats the incumbent.
      let size = 10 * free.len().max(2);
      let mut best_member: Option<(Vec<f64>, f64)> = None;
      for _ in 0..size {
        if obj.evaluations >= cfg.max_evaluations {
          break;
        }
        let z: Vec<f64> = best_z
          .iter()
          .enumerate()
          .map(|(i, &z)| if free.contains(&i) { (z + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0) } else { z })
          .collect();
        let f = obj.value(&z);
        if best_member.as_ref().map_or(true, |(_, g)| f < *g) {
          best_member = Some((z, f));
        }
      }
      if let Some((z, f)) = best_member {
        if f < best_f {
          best_f = f;
          best_z = z;
        }
      }
      trace.push(best_f);
    }
    step *= 0.5;
  }
  let params = obj.decode(&best_z);
  let spec = id.spec_from_vector(&params, &tenors)?;
  let model = spec.build()?;
  let prices = target.model_prices(model.as_ref(), &cfg.quad)?;
  let vols = target.model_vols(&prices);
  let rmse = target.rmse_of(&vols);
  Ok(CalibrationResult {
    model: id,
    spec,
    param_names: id.param_names(n),
    params,
    rmse,
    bucket_rmse: target.bucket_rmse_of(&vols),
    bid_ask_fraction: target.bid_ask_fraction_of(&prices),
    iterations,
    evaluations: obj.evaluations,
    converged,
    wall_time: clock.elapsed().as_secs_f64(),
    trace,
  })
}

/// Noise-free quotes generated from a model: out-of-the-money options at
/// standardized moneyness `m` (strike `F e^{mσ_ATM√τ}`) with a relative
/// bid–ask spread of `2·half_spread`. The spot doubles as the forward.
pub fn synthetic_surface(
  spec: &ModelSpec,
  spot: f64,
  tenors: &[f64],
  moneyness: &[f64],
  half_spread: f64,
  quad: &QuadratureConfig,
) -> Result<Surface> {
  if tenors.is_empty() || moneyness.is_empty() {
    return Err(Error::InvalidInput("tenors and moneyness grid must be non-empty".into()));
  }
  if !(0.0..1.0).contains(&half_spread) {
    return Err(Error::param("half_spread", "must lie in [0, 1)"));
  }
  let model = spec.build()?;
  let slices = tenors
    .iter()
    .map(|&tau| {
      let pricer = TenorPricer::new(model.as_ref(), tau, quad)?;
      let atm = pricer.price(spot, spot, 0.0, true)?;
      let atm_vol = implied_vol(atm, spot, spot, tau, 0.0, true)?;
      let quotes = moneyness
        .iter()
        .map(|&m| {
          let k = spot * (m * atm_vol * tau.sqrt()).exp();
          let is_call = k >= spot;
          let p = pricer.price(spot, k, 0.0, is_call)?;
          Ok(OptionQuote::new(k, tau, p * (1.0 - half_spread), p * (1.0 + half_spread), is_call))
        })
        .collect::<Result<Vec<_>>>()?;
      Ok(TenorSlice { tenor: tau, forward: spot, atm_vol, quotes })
    })
    .collect::<Result<Vec<_>>>()?;
  Ok(Surface { spot, rate: 0.0, slices })
}

#[cfg(test)]
mod tests {
  use super::*;
  use crate::model::EdgeworthModel;
  use crate::pricing::bs_price;
  use crate::edgeworth::EdgeworthParams;

  fn bs_surface(vol: f64, tenors: &[f64], strikes: &[f64]) -> Surface {
    let slices = tenors
      .iter()
      .map(|&t| TenorSlice {
        tenor: t,
        forward: 100.0,
        atm_vol: vol,
        quotes: strikes
          .iter()
          .map(|&k| {
            let is_call = k >= 100.0;
            let p = bs_price(100.0, k, t, 0.0, vol, is_call).unwrap();
            OptionQuote::new(k, t, 0.99 * p, 1.01 * p, is_call)
          })
          .collect(),
      })
      .collect();
    Surface { spot: 100.0, rate: 0.0, slices }
  }

  #[test]
  fn rmse_nested_averages() {
    let s = bs_surface(0.2, &[0.01, 0.02], &[98.0, 99.0, 100.0, 101.0]);
    let mut t = CalibrationTarget::new(&s).unwrap();
    t.market_vols = vec![vec![0.2], vec![0.2; 4]];
    let model = vec![vec![0.21], vec![0.22; 4]];
    assert!((t.rmse_of(&model) - 100.0 * (0.5f64 * (0.0001 + 0.0004)).sqrt()).abs() < 1e-12);
    assert!((t.rmse_of(&model) - 1.5811).abs() < 1e-4);
    t.market_vols = vec![vec![0.2]];
    assert!((t.rmse_of(&[vec![0.21]]) - 1.0).abs() < 1e-12);
  }

  #[test]
  fn exact_model_has_zero_rmse_and_full_hit_rate() {
    let s = bs_surface(0.2, &[0.01, 0.02], &[97.0, 100.0, 103.0]);
    let m = EdgeworthModel::new(EdgeworthParams::black_scholes(0.2), None).unwrap();
    let quad = QuadratureConfig::default();
    assert!(rmse(&s, &m, &quad).unwrap() < 1e-6);
    assert_eq!(bid_ask_fraction(&s, &m, &quad).unwrap(), 1.0);
  }

  #[test]
  fn hit_rate_counts() {
    let s = bs_surface(0.2, &[0.01], &[97.0, 100.0, 103.0, 104.0]);
    let t = CalibrationTarget::new(&s).unwrap();
    let mid: Vec<Vec<f64>> = s.slices.iter().map(|sl| sl.quotes.iter().map(|q| q.mid()).collect()).collect();
    assert_eq!(t.bid_ask_fraction_of(&mid), 1.0);
    let doubled: Vec<Vec<f64>> = s.slices.iter().map(|sl| sl.quotes.iter().map(|q| 2.0 * q.ask).collect()).collect();
    assert_eq!(t.bid_ask_fraction_of(&doubled), 0.0);
    let half: Vec<Vec<f64>> =
      s.slices.iter().map(|sl| sl.quotes.iter().enumerate().map(|(k, q)| if k % 2 == 0 { q.mid() } else { 2.0 * q.ask }).collect()).collect();
    assert_eq!(t.bid_ask_fraction_of(&half), 0.5);
  }

  #[test]
  fn flat_surface_calibrates_bs_pp() {
    let strikes: Vec<f64> = (0..7).map(|k| 98.5 + 0.5 * k as f64).collect();
    let s = bs_surface(0.2, &[0.005, 0.01, 0.02], &strikes);
    let r = calibrate(&s, ModelId::BsPp, None, None, &CalibrationConfig::default()).unwrap();
    assert!(r.rmse < 0.01, "{}", r.rmse);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    let again = rmse(&s, r.spec.build().unwrap().as_ref(), &CalibrationConfig::default().quad).unwrap();
    assert_eq!(again, r.rmse);
  }

  #[test]
  fn empty_surface_is_rejected() {
    let s = Surface { spot: 100.0, rate: 0.0, slices: vec![] };
    assert!(calibrate(&s, ModelId::Edgeworth, None, None, &CalibrationConfig::default()).is_err());
  }

  #[test]
  fn bounds_validation() {
    assert!(ParamBounds::new(&[(1.0, 0.0)]).is_err());
    assert_eq!(ParamBounds::new(&[(0.0, 1.0)]).unwrap().clamp(&[2.0]), vec![1.0]);
  }
}
