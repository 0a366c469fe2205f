use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};
use ustvol::bspp::{bspp_atm_vol, calibrate_shift_from_atm, AtmTermStructure};
use ustvol::calibration::{calibrate, CalibrationResult, ParamBounds};
use ustvol::diagnostics::{bench_models, smile_expansion, spot_vol, timing_bench, verify_smile_against_pricer};
use ustvol::edgeworth::EdgeworthParams;
use ustvol::market::{ingest, log_moneyness, read_date_list, read_quotes_csv, MoneynessBucket, Snapshot};
use ustvol::mc::simulate_benchmark;
use ustvol::model::{ModelId, ModelSpec};
use ustvol::pricing::{implied_vol, Contract, TenorPricer};

use crate::config::Settings;
use crate::manifest::Recorder;
use crate::{Cli, CliError, CliResult, Command};

#[derive(Debug, Args)]
pub struct PriceArgs {
  /// Model id from the registry.
  #[arg(long)]
  pub model: String,
  /// Parameters: a JSON file or inline JSON (specification object or flat vector).
  #[arg(long)]
  pub params: String,
  /// CSV with columns tenor, strike, cp_flag.
  #[arg(long, conflicts_with_all = ["tenors", "strikes"])]
  pub grid: Option<PathBuf>,
  /// Comma-separated tenors in years (with --strikes).
  #[arg(long, value_delimiter = ',', requires = "strikes")]
  pub tenors: Vec<f64>,
  /// Comma-separated strikes; out-of-the-money side is priced.
  #[arg(long, value_delimiter = ',', requires = "tenors")]
  pub strikes: Vec<f64>,
  #[arg(long, default_value_t = 100.0)]
  pub spot: f64,
  #[arg(long, default_value_t = 0.0)]
  pub rate: f64,
  /// Output CSV (stdout when absent).
  #[arg(long)]
  pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
  #[arg(long)]
  pub model: String,
  /// Quote CSV.
  #[arg(long)]
  pub quotes: PathBuf,
  /// JSON array of [lower, upper] pairs.
  #[arg(long)]
  pub bounds: Option<String>,
  /// JSON array with the starting parameter vector.
  #[arg(long)]
  pub start: Option<String>,
  /// Result JSON (stdout when absent).
  #[arg(long)]
  pub out: Option<PathBuf>,
  /// Per-bucket RMSE grid CSV (buckets by tenor).
  #[arg(long)]
  pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
  /// Quote CSV; the ATM term structure of the first snapshot is used.
  #[arg(long, conflicts_with = "atm", required_unless_present = "atm")]
  pub quotes: Option<PathBuf>,
  /// Inline term structure `tau:vol,tau:vol,...`.
  #[arg(long, value_delimiter = ',')]
  pub atm: Vec<String>,
  #[arg(long)]
  pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
  /// Raw quote CSV.
  #[arg(long)]
  pub quotes: PathBuf,
  /// File with one excluded date (YYYY-MM-DD) per line.
  #[arg(long)]
  pub exclude_dates: Option<PathBuf>,
  /// Filtered quote CSV.
  #[arg(long)]
  pub out: PathBuf,
  /// Filter report JSON.
  #[arg(long)]
  pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
  #[arg(long, default_value_t = 100)]
  pub trials: usize,
  /// Comma-separated subset of the bench models.
  #[arg(long, value_delimiter = ',')]
  pub models: Vec<String>,
  #[arg(long)]
  pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
  #[arg(long)]
  pub model: String,
  #[arg(long)]
  pub params: String,
  /// Horizon in years.
  #[arg(long)]
  pub tau: f64,
  #[arg(long)]
  pub paths: Option<usize>,
  #[arg(long)]
  pub steps: Option<usize>,
  #[arg(long)]
  pub antithetic: bool,
  /// Binary output: u64 count, then little-endian f64 log-returns.
  #[arg(long)]
  pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SmileArgs {
  /// Edgeworth parameters (JSON file or inline).
  #[arg(long)]
  pub params: String,
  /// Tenors at which to check the expansion against the pricer.
  #[arg(long, value_delimiter = ',')]
  pub verify: Vec<f64>,
  #[arg(long)]
  pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TermArgs {
  #[arg(long)]
  pub quotes: PathBuf,
  /// Fitted model: specification or calibration result JSON. Repeatable.
  #[arg(long = "spec")]
  pub specs: Vec<String>,
  #[arg(long)]
  pub out: Option<PathBuf>,
}

pub fn dispatch(cli: &Cli, settings: &Settings) -> CliResult<()> {
  let name = match &cli.command {
    Command::Price(_) => "price",
    Command::Calibrate(_) => "calibrate",
    Command::Bootstrap(_) => "bootstrap",
    Command::Ingest(_) => "ingest",
    Command::Bench(_) => "bench",
    Command::Simulate(_) => "simulate",
    Command::SmileExpand(_) => "smile-expand",
    Command::Termstructure(_) => "termstructure",
  };
  let mut rec = Recorder::new(name);
  match &cli.command {
    Command::Price(a) => price(a, settings, &mut rec)?,
    Command::Calibrate(a) => calibrate_cmd(a, settings, &mut rec)?,
    Command::Bootstrap(a) => bootstrap(a, settings, &mut rec)?,
    Command::Ingest(a) => ingest_cmd(a, settings, &mut rec)?,
    Command::Bench(a) => bench(a, settings, &mut rec)?,
    Command::Simulate(a) => simulate(a, settings, &mut rec)?,
    Command::SmileExpand(a) => smile(a, settings, &mut rec)?,
    Command::Termstructure(a) => termstructure(a, settings, &mut rec)?,
  }
  rec.finish(settings, cli.global.manifest.as_deref())?;
  Ok(())
}

fn parse_model(s: &str) -> CliResult<ModelId> {
  Ok(s.parse::<ModelId>()?)
}

/// Inline JSON when the argument starts like JSON, otherwise a file path.
fn json_arg(arg: &str, rec: &mut Recorder) -> CliResult<Value> {
  let t = arg.trim_start();
  if t.starts_with('{') || t.starts_with('[') {
    return Ok(serde_json::from_str(t)?);
  }
  let path = Path::new(arg);
  let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
  rec.input(path);
  Ok(serde_json::from_str(&text)?)
}

/// Accepts a specification object (the `model` tag is optional), a
/// calibration result (its `spec` is used) or a flat parameter vector.
fn spec_from_value(id: Option<ModelId>, value: Value, tenors: &[f64]) -> CliResult<ModelSpec> {
  let spec = match value {
    Value::Array(items) => {
      let id = id.ok_or_else(|| CliError::validation("a parameter vector needs --model"))?;
      let x = items
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| CliError::validation("parameter vectors must hold numbers")))
        .collect::<CliResult<Vec<f64>>>()?;
      id.spec_from_vector(&x, tenors)?
    }
    Value::Object(mut map) => {
      if let Some(inner) = map.remove("spec") {
        return spec_from_value(id, inner, tenors);
      }
      if let (Some(id), false) = (id, map.contains_key("model")) {
        map.insert("model".into(), Value::String(id.as_str().into()));
      }
      serde_json::from_value::<ModelSpec>(Value::Object(map))?
    }
    _ => return Err(CliError::validation("parameters must be a JSON object or array")),
  };
  if let Some(id) = id {
    if spec.id() != id {
      return Err(CliError::validation(format!("--model {id} but the parameters describe {}", spec.id())));
    }
  }
  spec.validate()?;
  Ok(spec)
}

/// Opens `path`, or stdout when absent, and registers the output.
fn sink(path: Option<&Path>, rec: &mut Recorder) -> CliResult<Box<dyn Write>> {
  Ok(match path {
    Some(p) => {
      rec.output(p);
      Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))
    }
    None => Box::new(std::io::stdout().lock()),
  })
}

fn write_json(path: Option<&Path>, value: &Value, rec: &mut Recorder) -> CliResult<()> {
  let mut w = sink(path, rec)?;
  writeln!(w, "{}", serde_json::to_string_pretty(value)?)?;
  w.flush()?;
  Ok(())
}

#[derive(serde::Deserialize)]
struct GridRow {
  tenor: f64,
  strike: f64,
  cp_flag: String,
}

fn read_grid(path: &Path) -> CliResult<Vec<Contract>> {
  let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
  rdr
    .deserialize::<GridRow>()
    .map(|row| {
      let row = row?;
      let is_call = match row.cp_flag.to_ascii_uppercase().as_str() {
        "C" | "CALL" => true,
        "P" | "PUT" => false,
        other => return Err(CliError::validation(format!("unknown cp_flag '{other}'"))),
      };
      Ok(Contract { strike: row.strike, tau: row.tenor, is_call })
    })
    .collect()
}

fn price(a: &PriceArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let id = parse_model(&a.model)?;
  let grid = match &a.grid {
    Some(p) => {
      rec.input(p);
      read_grid(p)?
    }
    None => a
      .tenors
      .iter()
      .flat_map(|&tau| a.strikes.iter().map(move |&k| Contract { strike: k, tau, is_call: k >= a.spot }))
      .collect(),
  };
  if grid.is_empty() {
    return Err(CliError::validation("empty contract grid: pass --grid or --tenors with --strikes"));
  }
  let mut tenors: Vec<f64> = grid.iter().map(|c| c.tau).collect();
  tenors.sort_by(f64::total_cmp);
  tenors.dedup();
  let spec = spec_from_value(Some(id), json_arg(&a.params, rec)?, &tenors)?;
  let model = spec.build()?;
  let mut pricers: BTreeMap<u64, TenorPricer> = BTreeMap::new();
  for &tau in &tenors {
    pricers.insert(tau.to_bits(), TenorPricer::new(model.as_ref(), tau, &s.quad)?);
  }
  let mut w = csv::Writer::from_writer(sink(a.out.as_deref(), rec)?);
  w.write_record(["tenor", "strike", "cp_flag", "price", "iv"])?;
  for c in &grid {
    let p = pricers[&c.tau.to_bits()].price(a.spot, c.strike, a.rate, c.is_call)?;
    // Prices below the resolution of the inversion carry no volatility.
    let iv = implied_vol(p, a.spot, c.strike, c.tau, a.rate, c.is_call).map(|v| v.to_string()).unwrap_or_default();
    let flag = if c.is_call { "C" } else { "P" };
    w.write_record([c.tau.to_string(), c.strike.to_string(), flag.into(), p.to_string(), iv])?;
  }
  w.flush()?;
  Ok(())
}

fn load_snapshots(path: &Path, s: &Settings, rec: &mut Recorder) -> CliResult<Vec<Snapshot>> {
  rec.input(path);
  let raw = read_quotes_csv(path)?;
  if raw.is_empty() {
    return Err(CliError::validation(format!("{}: no quotes", path.display())));
  }
  let mut out = Vec::new();
  let mut first_err = None;
  for (_, res) in ingest(&raw, &s.filter) {
    match res {
      Ok(snap) => out.push(snap),
      Err(e) => {
        first_err.get_or_insert(e);
      }
    }
  }
  match (out.is_empty(), first_err) {
    (true, Some(e)) => Err(e.into()),
    (true, None) => Err(CliError::validation("no snapshot survives the filters")),
    _ => Ok(out),
  }
}

fn parse_pairs(v: Value) -> CliResult<Vec<(f64, f64)>> {
  let bad = || CliError::validation("bounds must be a JSON array of [lower, upper] pairs");
  v.as_array()
    .ok_or_else(bad)?
    .iter()
    .map(|p| match p.as_array().map(|x| x.as_slice()) {
      Some([lo, hi]) => Ok((lo.as_f64().ok_or_else(bad)?, hi.as_f64().ok_or_else(bad)?)),
      _ => Err(bad()),
    })
    .collect()
}

fn parse_vector(v: Value) -> CliResult<Vec<f64>> {
  let bad = || CliError::validation("expected a JSON array of numbers");
  v.as_array().ok_or_else(bad)?.iter().map(|x| x.as_f64().ok_or_else(bad)).collect()
}

/// Result as JSON without the run time, which belongs to the manifest.
fn result_json(r: &CalibrationResult) -> CliResult<Value> {
  let mut v = serde_json::to_value(r)?;
  if let Some(m) = v.as_object_mut() {
    m.remove("wall_time");
  }
  Ok(v)
}

fn calibrate_cmd(a: &CalibrateArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let id = parse_model(&a.model)?;
  let snapshots = load_snapshots(&a.quotes, s, rec)?;
  let bounds = a.bounds.as_deref().map(|b| json_arg(b, rec).and_then(parse_pairs)).transpose()?;
  let bounds = bounds.map(|p| ParamBounds::new(&p)).transpose()?;
  let start = a.start.as_deref().map(|b| json_arg(b, rec).and_then(parse_vector)).transpose()?;
  let mut results = Vec::with_capacity(snapshots.len());
  for snap in &snapshots {
    results.push(calibrate(&snap.surface, id, bounds.as_ref(), start.as_deref(), &s.calibration)?);
  }
  let value = if results.len() == 1 {
    result_json(&results[0])?
  } else {
    let rows = snapshots
      .iter()
      .zip(&results)
      .map(|(snap, r)| {
        Ok(json!({
          "timestamp": snap.timestamp.map(|t| t.to_string()),
          "spot_vol": spot_vol(&r.spec),
          "result": result_json(r)?,
        }))
      })
      .collect::<CliResult<Vec<Value>>>()?;
    Value::Array(rows)
  };
  write_json(a.out.as_deref(), &value, rec)?;
  if let Some(path) = &a.report {
    write_bucket_report(path, &results, rec)?;
  }
  Ok(())
}

/// Mean RMSE by moneyness bucket (rows) and tenor index (columns), averaged
/// over snapshots; empty cells have no quotes.
fn write_bucket_report(path: &Path, results: &[CalibrationResult], rec: &mut Recorder) -> CliResult<()> {
  let buckets = [MoneynessBucket::Dotmp, MoneynessBucket::Otmp, MoneynessBucket::Atm, MoneynessBucket::Otmc, MoneynessBucket::Dotmc];
  let columns = results.iter().flat_map(|r| r.bucket_rmse.iter().map(|b| b.tenor_index + 1)).max().unwrap_or(0).max(6);
  let mut cells: BTreeMap<(MoneynessBucket, usize), Vec<f64>> = BTreeMap::new();
  for r in results {
    for b in &r.bucket_rmse {
      cells.entry((b.bucket, b.tenor_index)).or_default().push(b.rmse);
    }
  }
  let mut w = csv::Writer::from_writer(sink(Some(path), rec)?);
  let mut header = vec!["bucket".to_string()];
  header.extend((1..=columns).map(|k| format!("tenor_{k}")));
  w.write_record(&header)?;
  for b in buckets {
    let mut row = vec![b.label().to_string()];
    for k in 0..columns {
      row.push(cells.get(&(b, k)).map(|v| (v.iter().sum::<f64>() / v.len() as f64).to_string()).unwrap_or_default());
    }
    w.write_record(&row)?;
  }
  w.flush()?;
  Ok(())
}

fn bootstrap(a: &BootstrapArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let ts = match &a.quotes {
    Some(p) => load_snapshots(p, s, rec)?[0].surface.atm_term_structure()?,
    None => {
      let mut tenors = Vec::new();
      let mut vols = Vec::new();
      for item in &a.atm {
        let (t, v) = item.split_once(':').ok_or_else(|| CliError::validation(format!("expected tau:vol, got '{item}'")))?;
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| CliError::validation(format!("not a number: '{x}'")));
        tenors.push(parse(t)?);
        vols.push(parse(v)?);
      }
      AtmTermStructure::new(tenors, vols)?
    }
  };
  let (sigma0, displacement) = calibrate_shift_from_atm(&ts)?;
  let fitted = ts.tenors.iter().map(|&t| bspp_atm_vol(t, sigma0, &displacement)).collect::<ustvol::Result<Vec<_>>>()?;
  let value = json!({
    "model": ModelId::BsPp.as_str(),
    "sigma0": sigma0,
    "displacement": displacement,
    "market_atm_vols": ts.atm_vols,
    "fitted_atm_vols": fitted,
  });
  write_json(a.out.as_deref(), &value, rec)
}

fn ingest_cmd(a: &IngestArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let mut settings = s.clone();
  if let Some(p) = &a.exclude_dates {
    rec.input(p);
    settings.filter.exclude_dates = read_date_list(&std::fs::read_to_string(p)?)?;
  }
  let snapshots = load_snapshots(&a.quotes, &settings, rec)?;
  let mut w = csv::Writer::from_writer(sink(Some(&a.out), rec)?);
  w.write_record([
    "timestamp", "tenor", "strike", "cp_flag", "bid", "ask", "underlying", "forward", "mid_iv", "moneyness", "bucket",
  ])?;
  for snap in &snapshots {
    let ts = snap.timestamp.map(|t| t.format("%Y-%m-%d %H:%M:%S").to_string()).unwrap_or_default();
    for slice in &snap.surface.slices {
      for q in &slice.quotes {
        let iv = snap.surface.mid_vol(slice, q)?;
        let m = log_moneyness(q.strike, slice.forward, slice.atm_vol, slice.tenor);
        w.write_record([
          ts.clone(),
          slice.tenor.to_string(),
          q.strike.to_string(),
          if q.is_call { "C" } else { "P" }.to_string(),
          q.bid.to_string(),
          q.ask.to_string(),
          snap.surface.spot.to_string(),
          slice.forward.to_string(),
          iv.to_string(),
          m.to_string(),
          MoneynessBucket::of(m).label().to_string(),
        ])?;
      }
    }
  }
  w.flush()?;
  drop(w);
  if let Some(p) = &a.report {
    let reports: Vec<Value> = snapshots
      .iter()
      .map(|s| json!({ "timestamp": s.timestamp.map(|t| t.to_string()), "report": s.report }))
      .collect();
    write_json(Some(p), &Value::Array(reports), rec)?;
  }
  Ok(())
}

fn bench(a: &BenchArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let mut models = bench_models();
  if !a.models.is_empty() {
    for m in &a.models {
      let id = parse_model(m)?;
      if !models.iter().any(|(name, _)| name == id.as_str()) {
        return Err(CliError::validation(format!("{id} is not part of the bench fixture")));
      }
    }
    models.retain(|(name, _)| a.models.iter().any(|m| m == name));
  }
  let report = timing_bench(&models, a.trials, &s.quad)?;
  let mut w = sink(a.out.as_deref(), rec)?;
  w.write_all(report.to_csv().as_bytes())?;
  w.flush()?;
  Ok(())
}

fn simulate(a: &SimulateArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let id = parse_model(&a.model)?;
  let spec = spec_from_value(Some(id), json_arg(&a.params, rec)?, &[a.tau])?;
  let mut cfg = s.simulation;
  if let Some(p) = a.paths {
    cfg.paths = p;
  }
  if let Some(n) = a.steps {
    cfg.steps_per_tenor = n;
  }
  cfg.antithetic |= a.antithetic;
  let out = simulate_benchmark(&spec, a.tau, &cfg)?;
  let mut bytes = Vec::with_capacity(8 * (out.log_returns.len() + 1));
  bytes.extend_from_slice(&(out.log_returns.len() as u64).to_le_bytes());
  for x in &out.log_returns {
    bytes.extend_from_slice(&x.to_le_bytes());
  }
  std::fs::write(&a.out, bytes)?;
  rec.output(&a.out);
  Ok(())
}

fn smile(a: &SmileArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let v = json_arg(&a.params, rec)?;
  let params: EdgeworthParams = match v.get("params") {
    Some(inner) => serde_json::from_value(inner.clone())?,
    None => serde_json::from_value(v)?,
  };
  let expansion = smile_expansion(&params)?;
  let value = if a.verify.is_empty() {
    json!({ "expansion": expansion })
  } else {
    let (_, checks) = verify_smile_against_pricer(&params, &a.verify, &s.quad)?;
    json!({ "expansion": expansion, "checks": checks })
  };
  write_json(a.out.as_deref(), &value, rec)
}

fn termstructure(a: &TermArgs, s: &Settings, rec: &mut Recorder) -> CliResult<()> {
  let snap = load_snapshots(&a.quotes, s, rec)?.remove(0);
  let surface = &snap.surface;
  let mut specs = Vec::with_capacity(a.specs.len());
  for arg in &a.specs {
    specs.push(spec_from_value(None, json_arg(arg, rec)?, &surface.tenors())?);
  }
  let mut names: Vec<String> = Vec::new();
  for spec in &specs {
    let base = spec.id().as_str().to_string();
    let mut name = base.clone();
    let mut k = 2;
    while names.contains(&name) {
      name = format!("{base}_{k}");
      k += 1;
    }
    names.push(name);
  }
  let models = specs.iter().map(|m| m.build()).collect::<ustvol::Result<Vec<_>>>()?;
  let mut w = csv::Writer::from_writer(sink(a.out.as_deref(), rec)?);
  let mut header = vec!["tenor".to_string(), "market".to_string()];
  header.extend(names);
  w.write_record(&header)?;
  for slice in &surface.slices {
    let spot = surface.slice_spot(slice);
    let mut row = vec![slice.tenor.to_string(), slice.atm_vol.to_string()];
    for (spec, m) in specs.iter().zip(&models) {
      // BS++ has its ATM volatility in closed form.
      let vol = if let ModelSpec::BsPp { sigma0, displacement } = spec {
        bspp_atm_vol(slice.tenor, *sigma0, displacement)?
      } else {
        let pricer = TenorPricer::new(m.as_ref(), slice.tenor, &s.quad)?;
        let p = pricer.price(spot, slice.forward, surface.rate, true)?;
        implied_vol(p, spot, slice.forward, slice.tenor, surface.rate, true)?
      };
      row.push(vol.to_string());
    }
    w.write_record(&row)?;
  }
  w.flush()?;
  Ok(())
}
