use crate::edgeworth::EdgeworthParams;
use crate::{Error, Result, C64};

/// Jump factor of the standardized characteristic function.
///
/// `exp{τλ(e^{iuμ_J/(σ₀√τ) − u²σ_J²/(2σ₀²τ)} − 1 − iu μ̄_J)}` with
/// `μ̄_J = exp{μ_J/(σ₀√τ) + σ_J²/(2σ₀²τ)} − 1`.
pub fn psi_jump(u: impl Into<C64>, tau: f64, params: &EdgeworthParams) -> Result<C64> {
  if !(tau > 0.0) || !tau.is_finite() {
    return Err(Error::param("tau", "must be positive and finite"));
  }
  params.validate()?;
  Ok(JumpFactor::new(tau, params).eval(u.into()))
}

/// Jump factor with the tenor-dependent constants precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpFactor {
  intensity: f64,
  mean: f64,
  var: f64,
  compensator: f64,
}

impl JumpFactor {
  pub fn new(tau: f64, params: &EdgeworthParams) -> Self {
    let scale = params.sigma0 * tau.sqrt();
    let mean = params.mu_j / scale;
    let var = params.sigma_j * params.sigma_j / (scale * scale);
    let compensator = if params.lambda0 == 0.0 { 0.0 } else { (mean + 0.5 * var).exp_m1() };
    Self { intensity: tau * params.lambda0, mean, var, compensator }
  }

  /// Same transform with the linear term `−iu·compensator` supplied by the
  /// caller, e.g. a price-units compensator `k/(σ₀√τ)`.
  pub fn with_compensator(tau: f64, params: &EdgeworthParams, compensator: f64) -> Self {
    Self { compensator, ..Self::new(tau, params) }
  }

  #[inline]
  pub fn eval(&self, u: C64) -> C64 {
    if self.intensity == 0.0 {
      return C64::new(1.0, 0.0);
    }
    let i = C64::i();
    let jump = (i * u * self.mean - u * u * (0.5 * self.var)).exp();
    (self.intensity * (jump - 1.0 - i * u * self.compensator)).exp()
  }
}
