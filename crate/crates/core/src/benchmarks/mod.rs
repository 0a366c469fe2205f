//! Benchmark models: one- and two-factor Heston–Merton with self-exciting
//! jumps, and Rough Heston with a piecewise forward-variance curve.
//!
//! Both expose the log-price transform `E[e^{ia(X_τ − X₀)}]` directly and
//! a [`ModelCf`](crate::model::ModelCf) adapter for pricing.

pub mod ode;
mod heston_merton;
mod rough_heston;

pub use heston_merton::{heston_merton_cf, HestonMertonModel, HestonMertonParams};
pub use rough_heston::{
  rough_heston_cf, rough_heston_cf_with, FractionalRiccati, ForwardVariance, MertonJumps, RoughHestonModel,
  RoughHestonParams,
};
