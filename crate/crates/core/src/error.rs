use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Validation errors (bad inputs) and numerical errors (a computation that
/// could not be completed) are kept apart so front ends can map them to
/// different exit codes; see [`Error::is_validation`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
  #[error("invalid parameter `{name}`: {reason}")]
  InvalidParameter { name: String, reason: String },

  #[error("invalid input: {0}")]
  InvalidInput(String),

  #[error("tenor {tau} lies beyond the last displacement tenor {last}")]
  TenorBeyondGrid { tau: f64, last: f64 },

  #[error(
    "calendar arbitrage between tenors {tau_lo} and {tau_hi} (indices {index_lo}, {index_hi}): total variance decreases by {deficit:e}"
  )]
  CalendarArbitrage { index_lo: usize, index_hi: usize, tau_lo: f64, tau_hi: f64, deficit: f64 },

  #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
  PriceBounds { price: f64, lower: f64, upper: f64 },

  #[error("degenerate characteristic function: {0}")]
  Degenerate(String),

  #[error("Riccati explosion at t = {t}: {reason}")]
  Explosion { t: f64, reason: String },

  #[error("no convergence: {0}")]
  Convergence(String),

  #[error("data error: {0}")]
  Data(String),

  #[error("i/o error: {0}")]
  Io(String),
}

impl Error {
  pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
    Error::InvalidParameter { name: name.into(), reason: reason.into() }
  }

  /// True for errors caused by the caller's inputs rather than by numerics.
  pub fn is_validation(&self) -> bool {
    matches!(
      self,
      Error::InvalidParameter { .. }
        | Error::InvalidInput(_)
        | Error::TenorBeyondGrid { .. }
        | Error::CalendarArbitrage { .. }
        | Error::Data(_)
        | Error::Io(_)
    )
  }

  /// Short machine-readable tag for the variant.
  pub fn kind(&self) -> &'static str {
    match self {
      Error::InvalidParameter { .. } => "invalid_parameter",
      Error::InvalidInput(_) => "invalid_input",
      Error::TenorBeyondGrid { .. } => "tenor_beyond_grid",
      Error::CalendarArbitrage { .. } => "calendar_arbitrage",
      Error::PriceBounds { .. } => "price_bounds",
      Error::Degenerate(_) => "degenerate_cf",
      Error::Explosion { .. } => "explosion",
      Error::Convergence(_) => "convergence",
      Error::Data(_) => "data",
      Error::Io(_) => "io",
    }
  }
}

impl From<std::io::Error> for Error {
  fn from(e: std::io::Error) -> Self {
    Error::Io(e.to_string())
  }
}

impl From<csv::Error> for Error {
  fn from(e: csv::Error) -> Self {
    Error::Data(e.to_string())
  }
}

impl From<serde_json::Error> for Error {
  fn from(e: serde_json::Error) -> Self {
    Error::Data(e.to_string())
  }
}
