use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TENORS: &str = "0.0006278538812785388,0.003367579908675799,0.006107305936073059,0.00884703196347032";
const BSPP: &str = r#"{"sigma0":0.15,"displacement":{"tenors":[0.0006278538812785388,0.003367579908675799,0.006107305936073059,0.00884703196347032],"shifts":[0.02,0.01,0.03]}}"#;

fn ustvol(dir: &Path, args: &[&str]) -> Output {
  Command::new(env!("CARGO_BIN_EXE_ustvol")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
  serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

fn strikes() -> String {
  (0..41).map(|i| format!("{}", 90.0 + 0.5 * i as f64)).collect::<Vec<_>>().join(",")
}

/// Prices a BS++ grid with the binary and turns it into a quote file with a
/// 2% relative spread.
fn synthetic_quotes(dir: &Path) -> PathBuf {
  let k = strikes();
  let out = ustvol(dir, &["price", "--model", "bs_pp", "--params", BSPP, "--tenors", TENORS, "--strikes", &k, "--out", "gen.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let mut rdr = csv::Reader::from_path(dir.join("gen.csv")).unwrap();
  let mut text = String::from("timestamp,tenor,strike,cp_flag,bid,ask,underlying\n");
  for row in rdr.records() {
    let row = row.unwrap();
    let p: f64 = row[3].parse().unwrap();
    if p < 0.005 {
      continue;
    }
    text += &format!("2024-03-01 10:30:00,{},{},{},{},{},100\n", &row[0], &row[1], &row[2], p * 0.98, p * 1.02);
  }
  let path = dir.join("quotes.csv");
  std::fs::write(&path, text).unwrap();
  path
}

#[test]
fn price_grid_writes_csv_and_manifest() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["price", "--model", "bs_pp", "--params", "[0.2]", "--tenors", "0.01", "--strikes", "95,100,105", "--out", "p.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
  let lines: Vec<&str> = text.lines().collect();
  assert_eq!(lines[0], "tenor,strike,cp_flag,price,iv");
  assert_eq!(lines.len(), 4);
  for line in &lines[1..] {
    let iv: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((iv - 0.2).abs() < 1e-5, "{line}");
  }
  let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("p.csv.manifest.json")).unwrap()).unwrap();
  assert_eq!(manifest["command"], "price");
  assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
  assert!(manifest["wall_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn price_grid_from_csv() {
  let dir = TempDir::new().unwrap();
  std::fs::write(dir.path().join("grid.csv"), "tenor,strike,cp_flag\n0.01,95,P\n0.01,105,C\n").unwrap();
  let out = ustvol(dir.path(), &["price", "--model", "bs_pp", "--params", "{\"sigma0\":0.2,\"displacement\":{\"tenors\":[0.01],\"shifts\":[]}}", "--grid", "grid.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
  let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("ustvol-manifest.json")).unwrap()).unwrap();
  assert_eq!(manifest["inputs"][0]["path"], "grid.csv");
}

#[test]
fn malformed_json_is_a_validation_error() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["price", "--model", "bs_pp", "--params", "{sigma0:", "--tenors", "0.01", "--strikes", "100"]);
  assert_eq!(out.status.code(), Some(2));
  assert_eq!(stderr_json(&out)["exit_code"], 2);
}

#[test]
fn unknown_model_lists_the_registry() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["price", "--model", "sabr", "--params", "[0.2]", "--tenors", "0.01", "--strikes", "100"]);
  assert_eq!(out.status.code(), Some(2));
  let msg = stderr_json(&out)["message"].as_str().unwrap().to_string();
  for id in ["edgeworth_pp", "bs_pp", "heston_merton_2f", "rough_heston_pp"] {
    assert!(msg.contains(id), "{msg}");
  }
}

#[test]
fn invalid_parameters_exit_2() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["price", "--model", "bs_pp", "--params", "[-0.2]", "--tenors", "0.01", "--strikes", "100"]);
  assert_eq!(out.status.code(), Some(2));
  let out = ustvol(dir.path(), &["price", "--model", "bs_pp", "--params", "[0.2, 0.1]", "--tenors", "0.01", "--strikes", "100"]);
  assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_are_json() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["price", "--bogus"]);
  assert_eq!(out.status.code(), Some(2));
  assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn missing_quote_file_exits_2() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["calibrate", "--model", "bs_pp", "--quotes", "absent.csv"]);
  assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_surface_exits_2() {
  let dir = TempDir::new().unwrap();
  std::fs::write(dir.path().join("q.csv"), "timestamp,tenor,strike,cp_flag,bid,ask,underlying\n").unwrap();
  let out = ustvol(dir.path(), &["termstructure", "--quotes", "q.csv", "--spec", BSPP]);
  assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_round_trip_with_bucket_report() {
  let dir = TempDir::new().unwrap();
  synthetic_quotes(dir.path());
  let out = ustvol(dir.path(), &["calibrate", "--model", "bs_pp", "--quotes", "quotes.csv", "--out", "cal.json", "--report", "grid.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let result: Value = serde_json::from_slice(&std::fs::read(dir.path().join("cal.json")).unwrap()).unwrap();
  assert!(result["rmse"].as_f64().unwrap() <= 0.05, "{}", result["rmse"]);
  assert!(result.get("wall_time").is_none());
  assert!((result["params"][0].as_f64().unwrap() - 0.15).abs() < 1e-3);

  let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
  let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split(',').collect()).collect();
  assert_eq!(rows.len(), 6);
  assert_eq!(rows[0], ["bucket", "tenor_1", "tenor_2", "tenor_3", "tenor_4", "tenor_5", "tenor_6"]);
  let labels: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
  assert_eq!(labels, ["DOTMP", "OTMP", "ATM", "OTMC", "DOTMC"]);
  assert!(rows[1..].iter().all(|r| r.len() == 7));
}

#[test]
fn termstructure_matches_exact_fit() {
  let dir = TempDir::new().unwrap();
  synthetic_quotes(dir.path());
  let out = ustvol(dir.path(), &["bootstrap", "--quotes", "quotes.csv", "--out", "boot.json"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let boot: Value = serde_json::from_slice(&std::fs::read(dir.path().join("boot.json")).unwrap()).unwrap();

  let tagged = BSPP.replacen('{', r#"{"model":"bs_pp","#, 1);
  let out = ustvol(dir.path(), &["termstructure", "--quotes", "quotes.csv", "--spec", "boot.json", "--spec", &tagged, "--out", "ts.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let text = std::fs::read_to_string(dir.path().join("ts.csv")).unwrap();
  let mut lines = text.lines();
  assert_eq!(lines.next().unwrap(), "tenor,market,bs_pp,bs_pp_2");
  let mut n = 0;
  for line in lines {
    let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
    assert!((v[1] - v[2]).abs() < 1e-10, "{line}");
    n += 1;
  }
  assert_eq!(n, 4);
  assert_eq!(boot["market_atm_vols"].as_array().unwrap().len(), 4);
}

#[test]
fn bootstrap_rejects_calendar_arbitrage() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["bootstrap", "--atm", "0.01:0.3,0.02:0.1"]);
  assert_eq!(out.status.code(), Some(2));
  assert_eq!(stderr_json(&out)["error"], "calendar_arbitrage");
}

#[test]
fn ingest_writes_clean_quotes_and_report() {
  let dir = TempDir::new().unwrap();
  synthetic_quotes(dir.path());
  let out = ustvol(dir.path(), &["ingest", "--quotes", "quotes.csv", "--out", "clean.csv", "--report", "rep.json"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let clean = std::fs::read_to_string(dir.path().join("clean.csv")).unwrap();
  assert!(clean.starts_with("timestamp,tenor,strike,cp_flag,bid,ask,underlying,forward,mid_iv,moneyness,bucket\n"));
  let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("rep.json")).unwrap()).unwrap();
  assert_eq!(report[0]["report"]["retained"].as_u64().unwrap() as usize, clean.lines().count() - 1);
}

#[test]
fn simulate_writes_counted_binary() {
  let dir = TempDir::new().unwrap();
  let params = r#"{"params":{"sigma0":0.2,"beta_tilde0":0.3,"rho0":-0.5,"eta0":0,"alpha_prime0":0,"lambda0":0,"mu_J":0,"sigma_J":0}}"#;
  let out = ustvol(dir.path(), &["simulate", "--model", "edgeworth", "--params", params, "--tau", "0.01", "--paths", "1000", "--out", "s.bin", "--seed", "3"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let bytes = std::fs::read(dir.path().join("s.bin")).unwrap();
  let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
  assert_eq!(n, 1000);
  assert_eq!(bytes.len(), 8 * (n + 1));
}

#[test]
fn smile_expand_reports_coefficients() {
  let dir = TempDir::new().unwrap();
  let params = r#"{"sigma0":0.2,"beta_tilde0":0.3,"rho0":-0.5,"eta0":0,"alpha_prime0":0,"lambda0":0,"mu_J":0,"sigma_J":0}"#;
  let out = ustvol(dir.path(), &["smile-expand", "--params", params, "--verify", "0.001"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let v: Value = serde_json::from_slice(&out.stdout).unwrap();
  assert!((v["expansion"]["iv_skew"].as_f64().unwrap() + 0.375).abs() < 1e-12);
  assert!(v["checks"][0]["skew_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn bench_rejects_models_outside_the_fixture() {
  let dir = TempDir::new().unwrap();
  let out = ustvol(dir.path(), &["bench", "--trials", "1", "--models", "bs_pp"]);
  assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
  let dir = TempDir::new().unwrap();
  synthetic_quotes(dir.path());
  let runs = [
    vec!["calibrate", "--model", "bs_pp", "--quotes", "quotes.csv", "--seed", "11", "--out", "OUT"],
    vec!["simulate", "--model", "bs_pp", "--params", BSPP, "--tau", "0.005", "--paths", "5000", "--seed", "11", "--out", "OUT"],
    vec!["ingest", "--quotes", "quotes.csv", "--out", "OUT"],
  ];
  for (i, args) in runs.iter().enumerate() {
    let mut digests = Vec::new();
    for rep in 0..2 {
      let name = format!("out_{i}_{rep}");
      let args: Vec<&str> = args.iter().map(|a| if *a == "OUT" { name.as_str() } else { a }).collect();
      let out = ustvol(dir.path(), &args);
      assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
      digests.push(std::fs::read(dir.path().join(&name)).unwrap());
    }
    assert_eq!(digests[0], digests[1], "run {i} differs");
  }
}

#[test]
fn config_file_and_flag_precedence() {
  let dir = TempDir::new().unwrap();
  std::fs::write(dir.path().join("cfg.toml"), "seed = 5\nfourier_nodes = 1024\n").unwrap();
  let out = ustvol(dir.path(), &["price", "--config", "cfg.toml", "--seed", "9", "--model", "bs_pp", "--params", "[0.2]", "--tenors", "0.01", "--strikes", "100", "--out", "p.csv"]);
  assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
  let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("p.csv.manifest.json")).unwrap()).unwrap();
  assert_eq!(manifest["rng_seed"], 9);

  std::fs::write(dir.path().join("bad.toml"), "colour = 1\n").unwrap();
  let out = ustvol(dir.path(), &["price", "--config", "bad.toml", "--model", "bs_pp", "--params", "[0.2]", "--tenors", "0.01", "--strikes", "100"]);
  assert_eq!(out.status.code(), Some(2));
}
