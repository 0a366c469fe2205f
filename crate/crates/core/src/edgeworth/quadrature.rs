//! Quadrature evaluation of the expansion for an arbitrary displacement.
//!
//! Each coefficient of the expansion is a nested integral of
//! `φ̃(s) = 1 + φ(s)/σ₀`. Here those integrals are accumulated numerically as
//! running sums on a grid, with no use of the closed-form identities of the
//! piecewise-constant case. For a piecewise-constant φ whose breakpoints are
//! grid nodes every integrand is a polynomial of degree ≤ 3 on each cell and
//! the endpoint-corrected trapezoid rule used below is exact.

use crate::edgeworth::{DriftSplit, EdgeworthParams, ExpansionPolynomial};
use crate::{Error, Result, C64};

/// Grid for the quadrature oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrid {
  /// Approximate number of cells on `[0, τ]`.
  pub nodes: usize,
  /// Points that must be grid nodes (discontinuities of φ).
  pub breakpoints: Vec<f64>,
}

impl Default for OracleGrid {
  fn default() -> Self {
    Self { nodes: 20_000, breakpoints: Vec::new() }
  }
}

impl OracleGrid {
  pub fn with_breakpoints(breakpoints: &[f64]) -> Self {
    Self { breakpoints: breakpoints.to_vec(), ..Self::default() }
  }

  fn cells(&self, tau: f64) -> Vec<(f64, f64)> {
    let mut edges: Vec<f64> = self.breakpoints.iter().copied().filter(|&b| b > 0.0 && b < tau).collect();
    edges.push(0.0);
    edges.push(tau);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut cells = Vec::with_capacity(self.nodes + edges.len());
    for w in edges.windows(2) {
      let (lo, hi) = (w[0], w[1]);
      let m = ((self.nodes as f64 * (hi - lo) / tau).round() as usize).max(1);
      let h = (hi - lo) / m as f64;
      for i in 0..m {
        let a = lo + i as f64 * h;
        let b = if i + 1 == m { hi } else { lo + (i + 1) as f64 * h };
        cells.push((a, b));
      }
    }
    cells
  }
}

/// Nested integrals of φ̃ over `[0, τ]`, with `Φ(s) = ∫₀^s φ̃`:
///
/// * `var = ∫φ̃²`
/// * `skew = ∫φ̃Φ`
/// * `third = ∫φ̃(s)∫₀^s φ̃Φ`
/// * `fourth = ∫φ̃(s)∫₀^s φ̃(r)∫₀^r φ̃Φ`
/// * `level_integral = ∫Φ`
/// * `first_moment = ∫ s φ̃(s) ds`
/// * `cross = ∫φ̃(s)∫₀^s r φ̃(r) dr ds`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureIntegrals {
  pub tau: f64,
  pub var: f64,
  pub skew: f64,
  pub third: f64,
  pub fourth: f64,
  pub level_integral: f64,
  pub first_moment: f64,
  pub cross: f64,
}

impl QuadratureIntegrals {
  pub fn compute(tau: f64, sigma0: f64, phi: &dyn Fn(f64) -> f64, grid: &OracleGrid) -> Result<Self> {
    if !(tau > 0.0) || !tau.is_finite() {
      return Err(Error::param("tau", "must be positive and finite"));
    }
    if !(sigma0 > 0.0) {
      return Err(Error::param("sigma0", "must be positive"));
    }
    if grid.nodes < 1 {
      return Err(Error::param("nodes", "must be positive"));
    }
    let (mut f1, mut f2, mut f3, mut f4) = (0.0, 0.0, 0.0, 0.0);
    let (mut var, mut level_integral, mut first_moment, mut cross) = (0.0, 0.0, 0.0, 0.0);
    for (lo, hi) in grid.cells(tau) {
      let mid = 0.5 * (lo + hi);
      let p = phi(mid);
      if !p.is_finite() {
        return Err(Error::InvalidInput(format!("displacement is not finite at t = {mid}")));
      }
      let c = 1.0 + p / sigma0;
      let h = hi - lo;
      let corr = h * h * c * c / 12.0;
      let f1n = f1 + h * c;
      let f2n = f2 + 0.5 * h * c * (f1 + f1n);
      let f3n = f3 + 0.5 * h * c * (f2 + f2n) - corr * (f1n - f1);
      let f4n = f4 + 0.5 * h * c * (f3 + f3n) - corr * (f2n - f2);
      let an = first_moment + 0.5 * h * c * (lo + hi);
      cross += 0.5 * h * c * (first_moment + an) - corr * h;
      level_integral += 0.5 * h * (f1 + f1n);
      var += h * c * c;
      first_moment = an;
      f1 = f1n;
      f2 = f2n;
      f3 = f3n;
      f4 = f4n;
    }
    Ok(Self { tau, var, skew: f2, third: f3, fourth: f4, level_integral, first_moment, cross })
  }

  /// Polynomial form of the expansion built from the nested integrals.
  pub fn polynomial(&self, params: &EdgeworthParams, split: DriftSplit) -> ExpansionPolynomial {
    let tau = self.tau;
    let s0 = params.sigma0;
    let b = params.beta0();
    let bp = params.beta0_perp();
    ExpansionPolynomial {
      variance: self.var / tau,
      c2: -(split.delta0 * self.level_integral + split.alpha0 * self.first_moment) / (s0 * tau)
        - (b * b + bp * bp) * tau / (4.0 * s0 * s0),
      c3: b * self.skew / (s0 * tau * tau.sqrt()),
      c4: params.eta0 * self.third / (s0 * tau * tau)
        + b * b * self.skew / (s0 * s0 * tau)
        + bp * bp * self.cross / (s0 * s0 * tau * tau),
      c6: -3.0 * b * b * self.fourth / (s0 * s0 * tau * tau * tau),
    }
  }
}

/// Quadrature evaluation of the continuous expansion for a general
/// displacement `phi` with `phi(0) = 0`, using the even drift split.
pub fn psi_c_quadrature(
  u: impl Into<C64>,
  tau: f64,
  params: &EdgeworthParams,
  phi: &dyn Fn(f64) -> f64,
  grid: &OracleGrid,
) -> Result<C64> {
  psi_c_quadrature_split(u, tau, params, phi, grid, DriftSplit::even(params))
}

/// As [`psi_c_quadrature`] with an explicit drift split.
pub fn psi_c_quadrature_split(
  u: impl Into<C64>,
  tau: f64,
  params: &EdgeworthParams,
  phi: &dyn Fn(f64) -> f64,
  grid: &OracleGrid,
  split: DriftSplit,
) -> Result<C64> {
  params.validate()?;
  let ints = QuadratureIntegrals::compute(tau, params.sigma0, phi, grid)?;
  Ok(ints.polynomial(params, split).eval(u.into()))
}

#[cfg(test)]
mod tests {
  use super::*;
  use crate::edgeworth::{psi_c_no_shift, psi_c_piecewise, Displacement, DisplacementIntegrals};

  fn general() -> EdgeworthParams {
    EdgeworthParams {
      sigma0: 0.25,
      beta_tilde0: 0.8,
      rho0: -0.6,
      eta0: 0.4,
      alpha_prime0: -0.5,
      lambda0: 0.0,
      mu_j: 0.0,
      sigma_j: 0.0,
    }
  }

  #[test]
  fn zero_displacement_reproduces_no_shift() {
    let p = general();
    let tau = 3.0 / 365.0;
    for k in -30..=30 {
      let u = k as f64 * 0.25;
      let a = psi_c_quadrature(u, tau, &p, &|_| 0.0, &OracleGrid::default()).unwrap();
      let b = psi_c_no_shift(u, tau, &p).unwrap();
      assert!((a - b).norm() < 1e-12, "u {u}");
    }
    let z = psi_c_quadrature(0.0, tau, &p, &|_| 0.0, &OracleGrid::default()).unwrap();
    assert_eq!(z, C64::new(1.0, 0.0));
  }

  #[test]
  fn nested_integrals_of_constant_level_are_powers() {
    let c: f64 = 1.3;
    let q = QuadratureIntegrals::compute(2.0, 1.0, &|_| c - 1.0, &OracleGrid { nodes: 7, breakpoints: vec![] }).unwrap();
    let phi = 2.0 * c;
    assert!((q.skew - phi * phi / 2.0).abs() < 1e-13);
    assert!((q.third - phi.powi(3) / 6.0).abs() < 1e-13);
    assert!((q.fourth - phi.powi(4) / 24.0).abs() < 1e-13);
    assert!((q.cross - c * c * 8.0 / 6.0).abs() < 1e-13);
    assert!((q.level_integral - c * 2.0).abs() < 1e-13);
  }

  #[test]
  fn piecewise_matches_closed_form() {
    let p = general();
    let d = Displacement::new(vec![0.004, 0.009, 0.02], vec![0.07, -0.1]).unwrap();
    let grid = OracleGrid::with_breakpoints(&d.tenors);
    for &tau in &[0.004, 0.009, 0.015, 0.02] {
      for k in -50..=50 {
        let u = k as f64 * 0.3;
        let a = psi_c_quadrature(u, tau, &p, &|t| d.phi(t), &grid).unwrap();
        let b = psi_c_piecewise(u, tau, &p, &d).unwrap();
        assert!((a - b).norm() <= 1e-10 * b.norm().max(1e-3), "tau {tau} u {u}: {a} vs {b}");
      }
    }
  }

  #[test]
  fn smooth_displacement_converges() {
    let p = general();
    let tau = 0.01;
    let phi = |t: f64| 0.05 * (t / tau * std::f64::consts::PI).sin();
    let coarse = psi_c_quadrature(1.7, tau, &p, &phi, &OracleGrid { nodes: 200, breakpoints: vec![] }).unwrap();
    let fine = psi_c_quadrature(1.7, tau, &p, &phi, &OracleGrid { nodes: 20_000, breakpoints: vec![] }).unwrap();
    assert!((coarse - fine).norm() < 1e-5);
  }

  #[test]
  fn only_two_inner_product_identities_hold_with_shifts() {
    // ∫φ̃² and ∫sφ̃ are inner products of the tenor matrices; ∫φ̃Φ = Φ(τ)²/2
    // is not half of the second-power inner product once levels differ.
    let d = Displacement::new(vec![1.0, 2.0], vec![1.0]).unwrap();
    let q = QuadratureIntegrals::compute(2.0, 1.0, &|t| d.phi(t), &OracleGrid::with_breakpoints(&d.tenors)).unwrap();
    let m = crate::edgeworth::build_tenor_matrices(&d, 1.0, 4).unwrap();
    assert!((q.var - m.inner(2, 1, 2)).abs() < 1e-12);
    assert!((q.first_moment - 0.5 * m.inner(1, 2, 2)).abs() < 1e-12);
    assert!((q.skew - 4.5).abs() < 1e-12);
    assert!((0.5 * m.inner(2, 2, 2) - 6.5).abs() < 1e-12);
    let exact = DisplacementIntegrals::piecewise(&d, 1.0, 2.0).unwrap();
    assert!((q.skew - exact.level * exact.level / 2.0).abs() < 1e-12);
  }

  #[test]
  fn rejects_non_finite_displacement() {
    let p = general();
    assert!(psi_c_quadrature(1.0, 0.01, &p, &|_| f64::NAN, &OracleGrid::default()).is_err());
  }
}
