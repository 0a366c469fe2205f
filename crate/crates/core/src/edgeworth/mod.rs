//! Edgeworth++ characteristic-function expansion.
//!
//! For the standardized return `Z_τ = (X_τ − X₀ − μ₀τ)/(σ₀√τ)` the
//! continuous part of the characteristic function is expanded to second
//! order in √τ:
//!
//! ```text
//! Ψ^c(u, τ) = exp(−v u²/2) · (1 + c₂u² − i c₃u³ + c₄u⁴ + c₆u⁶) + O(τ^{3/2})
//! ```
//!
//! where `v` and the `c_j` depend on the spot state (σ₀, β̃₀, ρ₀, η₀, α′₀)
//! and on four functionals of the displacement profile `φ̃ = 1 + φ/σ₀`.
//! Without displacement `v = 1` and the polynomial is the classical
//! second, fourth and sixth moment adjustment of the Gaussian.
//!
//! The jump part is an independent compound-Poisson factor, and the full
//! characteristic function is the product `Ψ = Ψ^c Ψ^J`.

mod expansion;
mod jumps;
mod params;
mod quadrature;

pub use expansion::{
  psi_c_no_shift, psi_c_piecewise, psi_c_piecewise_split, ContinuousExpansion, DisplacementIntegrals, DriftSplit,
  ExpansionPolynomial,
};
pub use jumps::{psi_jump, JumpFactor};
pub use params::{build_tenor_matrices, Displacement, EdgeworthParams, TenorMatrices};
pub use quadrature::{psi_c_quadrature, psi_c_quadrature_split, OracleGrid, QuadratureIntegrals};

use crate::{Result, C64};

/// Full standardized characteristic function `Ψ^c · Ψ^J`.
pub fn psi_full(u: impl Into<C64>, tau: f64, params: &EdgeworthParams, displacement: Option<&Displacement>) -> Result<C64> {
  let u = u.into();
  let c = ContinuousExpansion::new(tau, params, displacement)?;
  Ok(c.eval(u) * JumpFactor::new(tau, params).eval(u))
}

#[cfg(test)]
mod tests {
  use super::*;

  #[test]
  fn full_cf_properties() {
    let p = EdgeworthParams {
      sigma0: 0.15,
      beta_tilde0: 0.6,
      rho0: -0.4,
      eta0: 0.2,
      alpha_prime0: 0.1,
      lambda0: 30.0,
      mu_j: -0.02,
      sigma_j: 0.03,
    };
    let d = Displacement::new(vec![0.002, 0.01], vec![0.02]).unwrap();
    assert_eq!(psi_full(0.0, 0.005, &p, Some(&d)).unwrap(), C64::new(1.0, 0.0));
    for k in 1..40 {
      let u = 0.31 * k as f64;
      let a = psi_full(u, 0.005, &p, Some(&d)).unwrap();
      let b = psi_full(-u, 0.005, &p, Some(&d)).unwrap();
      assert!((a - b.conj()).norm() < 1e-15);
    }
    let bs = EdgeworthParams { lambda0: 0.0, ..p };
    let z = Displacement::flat(vec![0.002, 0.01]).unwrap();
    for k in 0..20 {
      let u = 0.4 * k as f64;
      let a = psi_full(u, 0.01, &bs, Some(&z)).unwrap();
      let b = psi_c_no_shift(u, 0.01, &bs).unwrap();
      assert!((a - b).norm() < 1e-14);
    }
  }
}
