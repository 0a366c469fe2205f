use crate::edgeworth::{Displacement, EdgeworthParams};
use crate::{Error, Result, C64};

/// Exponent below which `exp` underflows to zero in double precision.
const UNDERFLOW: f64 = -745.0;

/// How the combined drift `α′ = (α₀ + δ₀)/2` is split between the
/// volatility drift α₀ and the return-drift loading δ₀.
///
/// Without displacement only the sum matters. With displacement the two
/// load on different functionals of φ, so the split becomes visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSplit {
  pub alpha0: f64,
  pub delta0: f64,
}

impl DriftSplit {
  /// α₀ = δ₀ = α′.
  pub fn even(params: &EdgeworthParams) -> Self {
    Self { alpha0: params.alpha_prime0, delta0: params.alpha_prime0 }
  }
}

/// The expansion in polynomial form:
/// `Ψ^c(u) = exp(−v u²/2)·(1 + c₂u² − i c₃u³ + c₄u⁴ + c₆u⁶)`.
///
/// Every route to the continuous characteristic function (closed form,
/// quadrature) ends here, so evaluation over a `u` grid costs a handful of
/// multiplications per node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionPolynomial {
  /// Leading variance `v = ∫φ̃²/τ`.
  pub variance: f64,
  pub c2: f64,
  pub c3: f64,
  pub c4: f64,
  pub c6: f64,
}

impl ExpansionPolynomial {
  /// Evaluates at a possibly complex frequency. Returns exact zero once the
  /// Gaussian factor underflows.
  #[inline]
  pub fn eval(&self, u: C64) -> C64 {
    let u2 = u * u;
    let expo = u2 * (-0.5 * self.variance);
    if expo.re < UNDERFLOW {
      return C64::new(0.0, 0.0);
    }
    let u3 = u2 * u;
    let u4 = u2 * u2;
    let u6 = u4 * u2;
    let bracket = u2 * self.c2 + u4 * self.c4 + u6 * self.c6 + C64::new(1.0, 0.0) - C64::i() * u3 * self.c3;
    expo.exp() * bracket
  }
}

/// Functionals of `φ̃ = 1 + φ/σ₀` over `[0, τ]` that carry the displacement
/// into the expansion:
///
/// * `var = ∫φ̃²`
/// * `level = Φ(τ) = ∫φ̃`
/// * `first_moment = ∫ s φ̃(s) ds`
/// * `cross = ∫φ̃(s) ∫₀^s r φ̃(r) dr ds = ½∫∫ φ̃(s)φ̃(r) min(s, r)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementIntegrals {
  pub tau: f64,
  pub var: f64,
  pub level: f64,
  pub first_moment: f64,
  pub cross: f64,
}

impl DisplacementIntegrals {
  /// No displacement: `φ̃ ≡ 1`.
  pub fn unit(tau: f64) -> Self {
    Self { tau, var: tau, level: tau, first_moment: 0.5 * tau * tau, cross: tau * tau * tau / 6.0 }
  }

  /// Exact values for a piecewise-constant displacement.
  pub fn piecewise(displacement: &Displacement, sigma0: f64, tau: f64) -> Result<Self> {
    displacement.validate(sigma0)?;
    let mut var = 0.0;
    let mut level = 0.0;
    let mut first_moment = 0.0;
    let mut cross = 0.0;
    for (lo, hi, a) in displacement.segments(tau)? {
      let c = 1.0 + a / sigma0;
      let dt = hi - lo;
      let half_sq = 0.5 * (hi * hi - lo * lo);
      cross += c * first_moment * dt + c * c * ((hi * hi * hi - lo * lo * lo) / 6.0 - 0.5 * lo * lo * dt);
      var += c * c * dt;
      level += c * dt;
      first_moment += c * half_sq;
    }
    Ok(Self { tau, var, level, first_moment, cross })
  }

  /// Builds the polynomial form of the expansion from these functionals.
  pub fn polynomial(&self, params: &EdgeworthParams, split: DriftSplit) -> ExpansionPolynomial {
    let tau = self.tau;
    let s0 = params.sigma0;
    let b = params.beta0();
    let bp = params.beta0_perp();
    let phi = self.level;
    let phi2 = phi * phi;
    let drift = split.delta0 * (tau * phi - self.first_moment) + split.alpha0 * self.first_moment;
    ExpansionPolynomial {
      variance: self.var / tau,
      c2: -drift / (s0 * tau) - (b * b + bp * bp) * tau / (4.0 * s0 * s0),
      c3: b * phi2 / (2.0 * s0 * tau * tau.sqrt()),
      c4: params.eta0 * phi2 * phi / (6.0 * s0 * tau * tau)
        + b * b * phi2 / (2.0 * s0 * s0 * tau)
        + bp * bp * self.cross / (s0 * s0 * tau * tau),
      c6: -b * b * phi2 * phi2 / (8.0 * s0 * s0 * tau * tau * tau),
    }
  }

  /// Mean of the standardized return implied by the risk-neutral drift
  /// `−½(σ₀ + φ)²` relative to the reference drift `−½σ₀²`:
  /// `−σ₀√τ (v − 1)/2` with `v = var/τ`.
  pub fn martingale_shift(&self, sigma0: f64) -> f64 {
    -0.5 * sigma0 * self.tau.sqrt() * (self.var / self.tau - 1.0)
  }
}

fn check_tau(tau: f64) -> Result<()> {
  if tau > 0.0 && tau.is_finite() {
    Ok(())
  } else {
    Err(Error::param("tau", "must be positive and finite"))
  }
}

/// Continuous-part expansion without displacement.
///
/// `e^{−u²/2}(1 − iu³(β̃ρ/2σ₀)√τ − u²(α′/σ₀ + β̃²/4σ₀²)τ
///   + (β̃²/24σ₀²)u²(4u² − ρ²u²(3u² − 8))τ + (η/6σ₀)u⁴τ)`.
pub fn psi_c_no_shift(u: impl Into<C64>, tau: f64, params: &EdgeworthParams) -> Result<C64> {
  check_tau(tau)?;
  params.validate()?;
  Ok(no_shift_value(u.into(), tau, params))
}

#[inline]
pub(crate) fn no_shift_value(u: C64, tau: f64, p: &EdgeworthParams) -> C64 {
  let u2 = u * u;
  let expo = u2 * -0.5;
  if expo.re < UNDERFLOW {
    return C64::new(0.0, 0.0);
  }
  let s0 = p.sigma0;
  let bt2 = p.beta_tilde0 * p.beta_tilde0;
  let rho2 = p.rho0 * p.rho0;
  let skew = C64::i() * u2 * u * (p.beta_tilde0 * p.rho0 / (2.0 * s0)) * tau.sqrt();
  let second = u2 * ((2.0 * p.alpha_prime0) / (2.0 * s0) + bt2 / (4.0 * s0 * s0)) * tau;
  let fourth = u2 * (u2 * 4.0 - u2 * rho2 * (u2 * 3.0 - 8.0)) * (bt2 / (24.0 * s0 * s0)) * tau;
  let eta = u2 * u2 * (p.eta0 / (6.0 * s0)) * tau;
  expo.exp() * (C64::new(1.0, 0.0) - skew - second + fourth + eta)
}

/// Continuous-part expansion with a piecewise displacement, evaluated in
/// closed form at any `τ` up to the last grid tenor.
pub fn psi_c_piecewise(u: impl Into<C64>, tau: f64, params: &EdgeworthParams, displacement: &Displacement) -> Result<C64> {
  psi_c_piecewise_split(u, tau, params, displacement, DriftSplit::even(params))
}

/// As [`psi_c_piecewise`] with an explicit drift split.
pub fn psi_c_piecewise_split(
  u: impl Into<C64>,
  tau: f64,
  params: &EdgeworthParams,
  displacement: &Displacement,
  split: DriftSplit,
) -> Result<C64> {
  check_tau(tau)?;
  params.validate()?;
  let ints = DisplacementIntegrals::piecewise(displacement, params.sigma0, tau)?;
  Ok(ints.polynomial(params, split).eval(u.into()))
}

/// Precomputed continuous expansion for one tenor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousExpansion {
  pub integrals: DisplacementIntegrals,
  pub polynomial: ExpansionPolynomial,
}

impl ContinuousExpansion {
  pub fn new(tau: f64, params: &EdgeworthParams, displacement: Option<&Displacement>) -> Result<Self> {
    check_tau(tau)?;
    params.validate()?;
    let integrals = match displacement {
      Some(d) => DisplacementIntegrals::piecewise(d, params.sigma0, tau)?,
      None => DisplacementIntegrals::unit(tau),
    };
    Ok(Self { integrals, polynomial: integrals.polynomial(params, DriftSplit::even(params)) })
  }

  #[inline]
  pub fn eval(&self, u: C64) -> C64 {
    self.polynomial.eval(u)
  }
}

#[cfg(test)]
mod tests {
  use super::*;

  fn general() -> EdgeworthParams {
    EdgeworthParams {
      sigma0: 0.2,
      beta_tilde0: 0.4,
      rho0: -0.7,
      eta0: 0.1,
      alpha_prime0: 0.3,
      lambda0: 0.0,
      mu_j: 0.0,
      sigma_j: 0.0,
    }
  }

  #[test]
  fn unit_frequency_is_one() {
    let p = general();
    assert_eq!(psi_c_no_shift(0.0, 0.01, &p).unwrap(), C64::new(1.0, 0.0));
    let d = Displacement::new(vec![0.005, 0.01], vec![0.05]).unwrap();
    assert_eq!(psi_c_piecewise(0.0, 0.01, &p, &d).unwrap(), C64::new(1.0, 0.0));
  }

  #[test]
  fn gaussian_reduction() {
    let p = EdgeworthParams::black_scholes(0.3);
    let v = psi_c_no_shift(1.5, 1.0 / 252.0, &p).unwrap();
    assert_eq!(v, C64::new((-1.125f64).exp(), 0.0));
  }

  #[test]
  fn closed_form_matches_independent_evaluation() {
    // Reference from a 50-digit evaluation of the polynomial.
    let p = EdgeworthParams { alpha_prime0: 0.0, ..general() };
    let tau = 5.5 / (24.0 * 365.0);
    let v = psi_c_no_shift(2.0, tau, &p).unwrap();
    let reference = C64::new(0.135_570_935_541_061_22, 0.018_990_148_237_525_807);
    assert!((v - reference).norm() < 1e-15, "{v}");
  }

  #[test]
  fn hand_evaluated_leading_exponent() {
    let p = EdgeworthParams::black_scholes(0.2);
    let d = Displacement::new(vec![0.5, 1.0], vec![0.1]).unwrap();
    let v = psi_c_piecewise(1.0, 1.0, &p, &d).unwrap();
    assert!((v.re - (-0.8125f64).exp()).abs() < 1e-15);
    assert_eq!(v.im, 0.0);
  }

  #[test]
  fn polynomial_form_reproduces_closed_form_without_shift() {
    let p = general();
    for &tau in &[1e-3, 0.02, 0.3] {
      let poly = DisplacementIntegrals::unit(tau).polynomial(&p, DriftSplit::even(&p));
      for k in -40..=40 {
        let u = C64::new(k as f64 * 0.2, 0.0);
        let a = poly.eval(u);
        let b = no_shift_value(u, tau, &p);
        assert!((a - b).norm() < 1e-14, "tau {tau} u {u}: {a} vs {b}");
      }
    }
  }

  #[test]
  fn conjugate_symmetry_is_exact() {
    let p = general();
    let d = Displacement::new(vec![0.002, 0.004, 0.008], vec![0.03, -0.05]).unwrap();
    for k in 1..60 {
      let u = k as f64 * 0.17;
      let a = psi_c_piecewise(u, 0.006, &p, &d).unwrap();
      let b = psi_c_piecewise(-u, 0.006, &p, &d).unwrap();
      assert_eq!(a, b.conj());
    }
  }

  #[test]
  fn underflow_returns_exact_zero() {
    let p = general();
    assert_eq!(psi_c_no_shift(60.0, 0.01, &p).unwrap(), C64::new(0.0, 0.0));
  }

  #[test]
  fn integrals_match_unit_case_on_flat_grid() {
    let d = Displacement::flat(vec![0.1, 0.3, 0.6]).unwrap();
    let a = DisplacementIntegrals::piecewise(&d, 0.2, 0.45).unwrap();
    let b = DisplacementIntegrals::unit(0.45);
    assert!((a.var - b.var).abs() < 1e-16);
    assert!((a.level - b.level).abs() < 1e-16);
    assert!((a.first_moment - b.first_moment).abs() < 1e-16);
    assert!((a.cross - b.cross).abs() < 1e-16);
  }

  #[test]
  fn constant_scaling_matches_exact_gaussian_moments() {
    // With φ̃ ≡ c the price shock is c·W, so the skew and β₀² blocks must
    // scale with c² and c⁴ exactly as for a Gaussian of variance c²τ.
    let d = Displacement::new(vec![1e-12, 1.0], vec![0.1]).unwrap();
    let ints = DisplacementIntegrals::piecewise(&d, 0.2, 1.0).unwrap();
    let c: f64 = 1.5;
    assert!((ints.level - c).abs() < 1e-11);
    assert!((ints.var - c * c).abs() < 1e-11);
    assert!((ints.first_moment - c / 2.0).abs() < 1e-11);
    assert!((ints.cross - c * c / 6.0).abs() < 1e-11);
  }

  #[test]
  fn rejects_tenor_beyond_grid() {
    let p = general();
    let d = Displacement::new(vec![0.01, 0.02], vec![0.01]).unwrap();
    assert!(matches!(psi_c_piecewise(1.0, 0.03, &p, &d), Err(Error::TenorBeyondGrid { .. })));
    assert!(psi_c_no_shift(1.0, 0.0, &p).is_err());
  }

  #[test]
  fn martingale_shift_vanishes_without_displacement() {
    assert_eq!(DisplacementIntegrals::unit(0.3).martingale_shift(0.2), 0.0);
  }
}
