//! Fourier inversion pricing and Black–Scholes utilities.
//!
//! With `Ψ` the characteristic function of the standardized return and
//! `d₂ = (ln S₀ − ln K + (r − σ²/2)τ)/(σ√τ)`, a call is worth
//!
//! ```text
//! C = S₀(½ + (1/π)∫₀^∞ Re[e^{iud₂} Ψ(u − iσ√τ)/(iu Ψ(−iσ√τ))] du)
//!   − K e^{−rτ}(½ + (1/π)∫₀^∞ Re[e^{iud₂} Ψ(u)/(iu)] du).
//! ```
//!
//! Both integrals are discretized with the composite trapezoid rule on
//! `[10⁻⁸, U]`, where `U` is chosen from the decay of `Ψ` unless fixed.

mod black_scholes;
mod fourier;

pub use black_scholes::{bs_price, bs_vega, implied_vol, norm_cdf, norm_pdf, price_bounds};
pub use fourier::{
  call_price, price_surface, put_price, Contract, PriceDetail, PricedContract, PricingRequest, QuadratureConfig,
  TenorPricer,
};
