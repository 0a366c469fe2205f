//! Option-quote ingestion: implied forwards, log-moneyness, filters and
//! surface assembly.
//!
//! Quotes are grouped by tenor. Per tenor the forward is implied from
//! put–call parity at the strike where call and put mids are closest, and
//! the ATM volatility is the implied volatility of the out-of-the-money
//! quote nearest the forward. Standardized log-moneyness is
//! `m = ln(K/F)/(σ_ATM √τ)`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspp::AtmTermStructure;
use crate::pricing::implied_vol;
use crate::{Error, Result};

/// Seconds in an ACT/365 year.
const YEAR_SECONDS: f64 = 365.0 * 86_400.0;

/// A single bid/ask quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
  pub strike: f64,
  /// Year fraction, ACT/365.
  pub tenor: f64,
  pub bid: f64,
  pub ask: f64,
  pub is_call: bool,
  #[serde(default, skip_serializing_if = "Option::is_none")]
  pub timestamp: Option<NaiveDateTime>,
}

impl OptionQuote {
  pub fn new(strike: f64, tenor: f64, bid: f64, ask: f64, is_call: bool) -> Self {
    Self { strike, tenor, bid, ask, is_call, timestamp: None }
  }

  pub fn mid(&self) -> f64 {
    0.5 * (self.bid + self.ask)
  }

  pub fn validate(&self) -> Result<()> {
    if !(self.strike > 0.0 && self.strike.is_finite()) {
      return Err(Error::Data(format!("strike {} is not positive", self.strike)));
    }
    if !(self.tenor > 0.0 && self.tenor.is_finite()) {
      return Err(Error::Data(format!("tenor {} is not positive", self.tenor)));
    }
    if !(self.bid >= 0.0 && self.ask >= self.bid && self.ask.is_finite()) {
      return Err(Error::Data(format!("quote bid {} ask {} violates 0 <= bid <= ask", self.bid, self.ask)));
    }
    Ok(())
  }
}

/// Standardized log-moneyness buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MoneynessBucket {
  /// `m < −1`
  Dotmp,
  /// `−1 ≤ m < −0.35`
  Otmp,
  /// `−0.35 ≤ m ≤ 0.35`
  Atm,
  /// `0.35 < m ≤ 1`
  Otmc,
  /// `m > 1`
  Dotmc,
}

impl MoneynessBucket {
  pub const ALL: [MoneynessBucket; 5] =
    [MoneynessBucket::Dotmp, MoneynessBucket::Otmp, MoneynessBucket::Atm, MoneynessBucket::Otmc, MoneynessBucket::Dotmc];

  pub fn of(m: f64) -> Self {
    if m < -1.0 {
      MoneynessBucket::Dotmp
    } else if m < -0.35 {
      MoneynessBucket::Otmp
    } else if m <= 0.35 {
      MoneynessBucket::Atm
    } else if m <= 1.0 {
      MoneynessBucket::Otmc
    } else {
      MoneynessBucket::Dotmc
    }
  }

  pub fn label(self) -> &'static str {
    match self {
      MoneynessBucket::Dotmp => "DOTMP",
      MoneynessBucket::Otmp => "OTMP",
      MoneynessBucket::Atm => "ATM",
      MoneynessBucket::Otmc => "OTMC",
      MoneynessBucket::Dotmc => "DOTMC",
    }
  }
}

/// `m = ln(K/F)/(σ√τ)`.
pub fn log_moneyness(strike: f64, forward: f64, sigma_bs: f64, tau: f64) -> f64 {
  (strike / forward).ln() / (sigma_bs * tau.sqrt())
}

/// Forward implied by put–call parity at the strike where `|C − P|` is
/// smallest: `F = K* + e^{rτ}(C − P)`.
pub fn implied_forward(quotes: &[OptionQuote], rate: f64) -> Result<f64> {
  let mut calls: BTreeMap<u64, &OptionQuote> = BTreeMap::new();
  let mut puts: BTreeMap<u64, &OptionQuote> = BTreeMap::new();
  for q in quotes {
    let side = if q.is_call { &mut calls } else { &mut puts };
    side.insert(q.strike.to_bits(), q);
  }
  let mut best: Option<(f64, f64)> = None;
  for (bits, c) in &calls {
    if let Some(p) = puts.get(bits) {
      let diff = c.mid() - p.mid();
      if best.map_or(true, |(d, _)| diff.abs() < d) {
        best = Some((diff.abs(), c.strike + (rate * c.tenor).exp() * diff));
      }
    }
  }
  best.map(|(_, f)| f).ok_or_else(|| Error::Data("no strike with both a call and a put quote".into()))
}

/// Quotes of one tenor with their forward and ATM volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenorSlice {
  pub tenor: f64,
  pub forward: f64,
  pub atm_vol: f64,
  pub quotes: Vec<OptionQuote>,
}

impl TenorSlice {
  pub fn moneyness(&self, q: &OptionQuote) -> f64 {
    log_moneyness(q.strike, self.forward, self.atm_vol, self.tenor)
  }
}

/// A filtered option surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
  pub spot: f64,
  #[serde(default)]
  pub rate: f64,
  pub slices: Vec<TenorSlice>,
}

impl Surface {
  pub fn tenors(&self) -> Vec<f64> {
    self.slices.iter().map(|s| s.tenor).collect()
  }

  pub fn quote_count(&self) -> usize {
    self.slices.iter().map(|s| s.quotes.len()).sum()
  }

  pub fn is_empty(&self) -> bool {
    self.quote_count() == 0
  }

  /// All quotes, tenor by tenor.
  pub fn quotes(&self) -> Vec<OptionQuote> {
    self.slices.iter().flat_map(|s| s.quotes.iter().cloned()).collect()
  }

  /// Per-tenor ATM volatilities.
  pub fn atm_term_structure(&self) -> Result<AtmTermStructure> {
    AtmTermStructure::new(self.tenors(), self.slices.iter().map(|s| s.atm_vol).collect())
  }

  /// Spot consistent with the slice forward, `F e^{−rτ}`.
  pub fn slice_spot(&self, slice: &TenorSlice) -> f64 {
    slice.forward * (-self.rate * slice.tenor).exp()
  }

  /// Mid-price implied volatility of a quote.
  pub fn mid_vol(&self, slice: &TenorSlice, q: &OptionQuote) -> Result<f64> {
    implied_vol(q.mid(), self.slice_spot(slice), q.strike, q.tenor, self.rate, q.is_call)
  }
}

/// Filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
  pub max_tenors: usize,
  pub moneyness_lower: f64,
  pub moneyness_upper: f64,
  pub rate: f64,
  /// Snapshot dates to drop entirely.
  #[serde(default)]
  pub exclude_dates: Vec<NaiveDate>,
}

impl Default for FilterConfig {
  fn default() -> Self {
    Self { max_tenors: 6, moneyness_lower: -15.0, moneyness_upper: 5.0, rate: 0.0, exclude_dates: Vec::new() }
  }
}

/// Counts of dropped quotes by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
  pub input: usize,
  pub retained: usize,
  pub dropped: BTreeMap<String, usize>,
}

impl FilterReport {
  fn drop(&mut self, reason: &str, n: usize) {
    if n > 0 {
      *self.dropped.entry(reason.to_string()).or_default() += n;
    }
  }

  pub fn count(&self, reason: &str) -> usize {
    self.dropped.get(reason).copied().unwrap_or(0)
  }

  pub fn total_dropped(&self) -> usize {
    self.dropped.values().sum()
  }
}

fn slice_for(
  tenor: f64,
  quotes: Vec<OptionQuote>,
  rate: f64,
  spot: Option<f64>,
) -> std::result::Result<TenorSlice, &'static str> {
  let forward = match (implied_forward(&quotes, rate), spot) {
    (Ok(f), _) => f,
    (Err(_), Some(s)) => s * (rate * tenor).exp(),
    (Err(_), None) => return Err("no forward"),
  };
  if !(forward > 0.0) {
    return Err("no forward");
  }
  let spot = forward * (-rate * tenor).exp();
  let mut order: Vec<&OptionQuote> = quotes.iter().collect();
  order.sort_by(|a, b| {
    let key = |q: &OptionQuote| ((q.strike - forward).abs(), (q.is_call != (q.strike >= forward)) as u8);
    key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)
  });
  let atm_vol = order
    .iter()
    .find_map(|q| implied_vol(q.mid(), spot, q.strike, q.tenor, rate, q.is_call).ok())
    .ok_or("no ATM volatility")?;
  Ok(TenorSlice { tenor, forward, atm_vol, quotes })
}

/// Applies, in order: positive bid and ask; per-tenor forward (put–call
/// parity, or `spot·e^{rτ}` when no strike has both sides) and ATM
/// volatility; the mid implied volatility must exist; the moneyness
/// window; the shortest `max_tenors` tenors.
///
/// `spot` defaults to the discounted forward of the shortest tenor.
pub fn filter_surface(raw: &[OptionQuote], spot: Option<f64>, config: &FilterConfig) -> Result<(Surface, FilterReport)> {
  let mut report = FilterReport { input: raw.len(), ..FilterReport::default() };
  let mut by_tenor: BTreeMap<u64, Vec<OptionQuote>> = BTreeMap::new();
  for q in raw {
    if q.validate().is_err() {
      report.drop("malformed", 1);
    } else if q.bid <= 0.0 {
      report.drop("zero bid", 1);
    } else if q.ask <= 0.0 {
      report.drop("zero ask", 1);
    } else if q.timestamp.is_some_and(|t| config.exclude_dates.contains(&t.date())) {
      report.drop("excluded date", 1);
    } else {
      by_tenor.entry(q.tenor.to_bits()).or_default().push(q.clone());
    }
  }
  // Positive floats order like their bit patterns.
  let groups: Vec<(f64, Vec<OptionQuote>)> = by_tenor.into_iter().map(|(b, v)| (f64::from_bits(b), v)).collect();
  let built: Vec<_> = groups
    .into_par_iter()
    .map(|(tenor, quotes)| {
      let n = quotes.len();
      (n, slice_for(tenor, quotes, config.rate, spot))
    })
    .collect();
  let mut slices = Vec::new();
  for (n, s) in built {
    match s {
      Ok(s) => slices.push(s),
      Err(reason) => report.drop(reason, n),
    }
  }
  for slice in &mut slices {
    let spot_t = slice.forward * (-config.rate * slice.tenor).exp();
    let before = slice.quotes.len();
    slice.quotes.retain(|q| implied_vol(q.mid(), spot_t, q.strike, q.tenor, config.rate, q.is_call).is_ok());
    report.drop("implied volatility", before - slice.quotes.len());
    let before = slice.quotes.len();
    let (lo, hi) = (config.moneyness_lower, config.moneyness_upper);
    let (f, v, t) = (slice.forward, slice.atm_vol, slice.tenor);
    slice.quotes.retain(|q| {
      let m = log_moneyness(q.strike, f, v, t);
      m > lo && m < hi
    });
    report.drop("moneyness window", before - slice.quotes.len());
    slice.quotes.sort_by(|a, b| a.strike.total_cmp(&b.strike).then(a.is_call.cmp(&b.is_call)));
  }
  slices.retain(|s| !s.quotes.is_empty());
  if slices.len() > config.max_tenors {
    let extra: usize = slices[config.max_tenors..].iter().map(|s| s.quotes.len()).sum();
    report.drop("tenor limit", extra);
    slices.truncate(config.max_tenors);
  }
  if slices.is_empty() {
    return Err(Error::Data("no tenor survives the filters".into()));
  }
  report.retained = slices.iter().map(|s| s.quotes.len()).sum();
  let spot = spot.unwrap_or_else(|| slices[0].forward * (-config.rate * slices[0].tenor).exp());
  Ok((Surface { spot, rate: config.rate, slices }, report))
}

/// One row of the quote CSV.
///
/// Either `tenor` (years) or both `timestamp` and `expiry_datetime` must
/// be present.
#[derive(Debug, Clone, Deserialize)]
struct CsvRow {
  #[serde(default)]
  timestamp: Option<String>,
  #[serde(default)]
  expiry_datetime: Option<String>,
  #[serde(default)]
  tenor: Option<f64>,
  strike: f64,
  cp_flag: String,
  bid: f64,
  ask: f64,
  #[serde(default)]
  underlying: Option<f64>,
}

/// A parsed quote with its snapshot context.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuote {
  pub quote: OptionQuote,
  pub underlying: Option<f64>,
}

/// Parses `YYYY-MM-DD HH:MM[:SS[.f]]`, the `T`-separated variant, or a
/// bare date (midnight).
pub fn parse_datetime(s: &str) -> Result<NaiveDateTime> {
  let s = s.trim();
  for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
    if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
      return Ok(t);
    }
  }
  NaiveDate::parse_from_str(s, "%Y-%m-%d")
    .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
    .map_err(|_| Error::Data(format!("unparseable date-time '{s}'")))
}

/// ACT/365 year fraction between two instants.
pub fn year_fraction(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
  (to - from).num_milliseconds() as f64 / 1000.0 / YEAR_SECONDS
}

fn parse_flag(s: &str) -> Result<bool> {
  match s.trim().to_ascii_uppercase().as_str() {
    "C" | "CALL" => Ok(true),
    "P" | "PUT" => Ok(false),
    other => Err(Error::Data(format!("unknown cp_flag '{other}'"))),
  }
}

/// Reads quotes from CSV with columns `timestamp, expiry_datetime, strike,
/// cp_flag, bid, ask, underlying` (or `tenor` in place of the two dates).
pub fn read_quotes_csv(path: &Path) -> Result<Vec<RawQuote>> {
  let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
  read_quotes(file)
}

/// As [`read_quotes_csv`] from any reader.
pub fn read_quotes<R: std::io::Read>(reader: R) -> Result<Vec<RawQuote>> {
  let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
  let mut out = Vec::new();
  for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
    let row = row.map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
    let timestamp = row.timestamp.as_deref().filter(|s| !s.is_empty()).map(parse_datetime).transpose()?;
    let tenor = match (row.tenor, timestamp, row.expiry_datetime.as_deref().filter(|s| !s.is_empty())) {
      (Some(t), _, _) => t,
      (None, Some(ts), Some(exp)) => year_fraction(ts, parse_datetime(exp)?),
      _ => return Err(Error::Data(format!("row {}: need `tenor` or both `timestamp` and `expiry_datetime`", line + 1))),
    };
    out.push(RawQuote {
      quote: OptionQuote { strike: row.strike, tenor, bid: row.bid, ask: row.ask, is_call: parse_flag(&row.cp_flag)?, timestamp },
      underlying: row.underlying,
    });
  }
  Ok(out)
}

/// Writes quotes in the `tenor` CSV layout accepted by [`read_quotes`].
pub fn write_quotes<W: std::io::Write>(writer: W, spot: f64, quotes: &[OptionQuote]) -> Result<()> {
  let mut w = csv::Writer::from_writer(writer);
  w.write_record(["tenor", "strike", "cp_flag", "bid", "ask", "underlying"])?;
  for q in quotes {
    w.write_record([
      q.tenor.to_string(),
      q.strike.to_string(),
      if q.is_call { "C" } else { "P" }.to_string(),
      q.bid.to_string(),
      q.ask.to_string(),
      spot.to_string(),
    ])?;
  }
  w.flush()?;
  Ok(())
}

/// One snapshot of an ingested file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
  pub timestamp: Option<NaiveDateTime>,
  pub surface: Surface,
  pub report: FilterReport,
}

/// Groups raw quotes by snapshot timestamp and filters each group.
/// Snapshots that lose every tenor are reported as errors in place.
pub fn ingest(raw: &[RawQuote], config: &FilterConfig) -> Vec<(Option<NaiveDateTime>, Result<Snapshot>)> {
  let mut groups: BTreeMap<Option<NaiveDateTime>, Vec<&RawQuote>> = BTreeMap::new();
  for r in raw {
    groups.entry(r.quote.timestamp).or_default().push(r);
  }
  groups
    .into_iter()
    .map(|(ts, rows)| {
      let quotes: Vec<OptionQuote> = rows.iter().map(|r| r.quote.clone()).collect();
      let spot = rows.iter().find_map(|r| r.underlying);
      let res = filter_surface(&quotes, spot, config).map(|(surface, report)| Snapshot { timestamp: ts, surface, report });
      (ts, res)
    })
    .collect()
}

/// Reads one date per line (`YYYY-MM-DD`), ignoring blanks and `#` comments.
pub fn read_date_list(text: &str) -> Result<Vec<NaiveDate>> {
  text
    .lines()
    .map(str::trim)
    .filter(|l| !l.is_empty() && !l.starts_with('#'))
    .map(|l| NaiveDate::parse_from_str(l, "%Y-%m-%d").map_err(|_| Error::Data(format!("bad date '{l}'"))))
    .collect()
}
