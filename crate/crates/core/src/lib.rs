//! Pricing and calibration of ultra-short-tenor implied-volatility surfaces.
//!
//! The centre of the crate is the Edgeworth++ characteristic-function
//! expansion: a closed-form, second-order (in √τ) approximation of the
//! characteristic function of standardized log-returns under a general
//! Itô semimartingale with a piecewise deterministic volatility displacement.
//! Around it sit a Fourier pricer, the displaced Black–Scholes (BS++)
//! bootstrap, benchmark affine and rough models, a calibrator, quote
//! ingestion, short-tenor smile diagnostics and Monte Carlo oracles.
//!
//! ```
//! use ustvol::edgeworth::{EdgeworthParams, psi_c_no_shift};
//!
//! let p = EdgeworthParams::black_scholes(0.2);
//! let v = psi_c_no_shift(1.5, 1.0 / 252.0, &p).unwrap();
//! assert!((v.re - (-1.125f64).exp()).abs() < 1e-15);
//! ```

pub mod benchmarks;
pub mod bspp;
pub mod calibration;
pub mod diagnostics;
pub mod edgeworth;
mod error;
pub mod market;
pub mod mc;
pub mod model;
pub mod pricing;
pub(crate) mod roots;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use num_complex::Complex64 as C64;

#[cfg(doctest)]
mod book {
  #[doc = include_str!("../../../book/src/introduction.md")]
  mod introduction {}
  #[doc = include_str!("../../../book/src/expansion.md")]
  mod expansion {}
  #[doc = include_str!("../../../book/src/displacement.md")]
  mod displacement {}
  #[doc = include_str!("../../../book/src/pricing.md")]
  mod pricing {}
  #[doc = include_str!("../../../book/src/benchmarks.md")]
  mod benchmarks {}
  #[doc = include_str!("../../../book/src/calibration.md")]
  mod calibration {}
  #[doc = include_str!("../../../book/src/market_data.md")]
  mod market_data {}
  #[doc = include_str!("../../../book/src/diagnostics.md")]
  mod diagnostics {}
  #[doc = include_str!("../../../book/src/monte_carlo.md")]
  mod monte_carlo {}
  #[doc = include_str!("../../../book/src/cli.md")]
  mod cli {}
}
