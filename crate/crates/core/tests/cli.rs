use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drlpm::analytics::DayRange;
use drlpm::baseline_factor::{run_factor_backtest, FactorPanel, FactorStrategy};
use drlpm::config::RunConfig;
use drlpm::market_data::AlignedMarket;
use drlpm::neural::{ActorNet, Checkpoint, CriticNet};
use drlpm::synthetic::{drifting_market, random_factor_panel, random_market, write_market_csvs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn drlpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drlpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn market_dir(market: &AlignedMarket) -> TempDir {
    let dir = TempDir::new().unwrap();
    write_market_csvs(market, dir.path()).unwrap();
    dir
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect()
}

/// Checkpoint whose actor ignores its input and always emits `bias`.
fn constant_checkpoint(market: &AlignedMarket, window: usize, bias: &[f64], path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = market.num_assets();
    let mut actor = ActorNet::new(m, window, &mut rng).unwrap();
    for p in actor.net.params_mut() {
        p.fill(0.0);
    }
    actor.net.params_mut().last_mut().unwrap().data_mut().copy_from_slice(bias);
    let critic = CriticNet::new(m, window, &mut rng).unwrap();
    let ids = market.asset_ids().iter().map(|s| s.to_string()).collect();
    Checkpoint::new(ids, window, true, &actor, &critic).save(path).unwrap();
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn ingest_summarizes_five_assets() {
    let market = random_market(&[0.0; 5], 0.01, 30, 1);
    let dir = market_dir(&market);
    let before = snapshot(dir.path());
    let out = drlpm(&["ingest", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("assets: 5"), "{text}");
    assert!(text.contains("30 common days"));
    assert!(stderr(&out).contains("buffer = 600"));
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn ingest_reports_disjoint_assets() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("AAA.csv"), "date,open,high,low,close\n2020-01-02,1,1,1,1\n").unwrap();
    std::fs::write(dir.path().join("IDX.csv"), "date,open,high,low,close\n2021-01-04,1,1,1,1\n").unwrap();
    let out = drlpm(&["ingest", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("AAA") && stderr(&out).contains("IDX"));
}

#[test]
fn ingest_of_empty_dir_is_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(drlpm(&["ingest", s(dir.path())]).status.code(), Some(2));
    assert_eq!(drlpm(&["ingest"]).status.code(), Some(2));
    assert_eq!(drlpm(&["bogus"]).status.code(), Some(2));
}

fn train_args<'a>(market: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "train",
        "--market",
        s(market),
        "--out",
        s(out),
        "--seed",
        "5",
        "--window",
        "5",
        "--set",
        "total_steps=504",
        "--set",
        "train_fraction=0.9",
        "--checkpoint-every",
        "1",
    ]
}

#[test]
fn tiny_training_run_is_reproducible() {
    let market = random_market(&[0.001, 0.0, -0.0005], 0.01, 320, 2);
    let data = market_dir(&market);
    let before = snapshot(data.path());
    let a = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = drlpm(&train_args(data.path(), a.path()));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("training_slope"));
        runs.push(snapshot(a.path()));
    }
    let log = std::fs::read_to_string(a.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
    assert!(a.path().join("checkpoint_ep1.json").exists());
    assert!(a.path().join("checkpoint_ep2.json").exists());
    for (path, bytes) in &runs[0] {
        assert!(runs[1][path] == *bytes, "{} differs between runs", path.display());
    }
    assert_eq!(snapshot(data.path()), before);
}

#[test]
fn overlapping_ranges_are_refused() {
    let market = random_market(&[0.001, 0.0, -0.0005], 0.01, 320, 2);
    let data = market_dir(&market);
    let out = TempDir::new().unwrap();
    let train_end = format!("train_end={}", market.dates()[300]);
    let test_start = format!("test_start={}", market.dates()[290]);
    let mut args = train_args(data.path(), out.path());
    args.extend(["--set", &train_end, "--set", &test_start]);
    let o = drlpm(&args);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("out-of-sample"));
}

#[test]
fn all_cash_checkpoint_backtests_flat() {
    let market = random_market(&[0.002, -0.001, 0.0], 0.02, 120, 3);
    let data = market_dir(&market);
    let out = TempDir::new().unwrap();
    let ckpt = out.path().join("cash.json");
    constant_checkpoint(&market, 5, &[0.0; 4], &ckpt);
    let o = drlpm(&["backtest", "--market", s(data.path()), "--checkpoint", s(&ckpt), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let values = csv_column(&out.path().join("drl_daily.csv"), "value");
    assert!(!values.is_empty());
    assert!(values.iter().all(|&v| v == 1.0));
    let cash = csv_column(&out.path().join("drl_weights.csv"), "cash");
    assert!(cash.iter().all(|&c| c == 1.0));
}

#[test]
fn full_investment_pays_one_cost_unit_on_day_one() {
    let market = random_market(&[0.002, -0.001, 0.0], 0.02, 120, 4);
    let data = market_dir(&market);
    let out = TempDir::new().unwrap();
    let ckpt = out.path().join("invest.json");
    constant_checkpoint(&market, 5, &[-1.0, 1.0, 0.0, 0.0], &ckpt);
    let o = drlpm(&["backtest", "--market", s(data.path()), "--checkpoint", s(&ckpt), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let costs = csv_column(&out.path().join("drl_daily.csv"), "cost");
    assert!((costs[0] - 0.0025).abs() < 1e-12);

    let text = std::fs::read_to_string(out.path().join("drl_weights.csv")).unwrap();
    for line in text.lines().skip(1) {
        let total: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap().abs()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("drl_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["conventions"]["annualization_days"], 252.0);
}

#[test]
fn checkpoint_for_other_assets_is_a_data_error() {
    let market = random_market(&[0.0, 0.0, 0.0], 0.02, 120, 4);
    let other = random_market(&[0.0, 0.0], 0.02, 120, 4);
    let data = market_dir(&market);
    let out = TempDir::new().unwrap();
    let ckpt = out.path().join("other.json");
    constant_checkpoint(&other, 5, &[0.0; 3], &ckpt);
    let o = drlpm(&["backtest", "--market", s(data.path()), "--checkpoint", s(&ckpt), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compare_on_flat_market() {
    let market = drifting_market(&[0.0; 5], 150);
    let data = market_dir(&market);
    let out = TempDir::new().unwrap();
    let ckpt = out.path().join("ckpt.json");
    constant_checkpoint(&market, 5, &[0.0, 0.3, -0.2, 0.1, 0.5, -0.4], &ckpt);
    let panel = random_factor_panel(&market, 9);
    let factors = out.path().join("factors.csv");
    std::fs::write(&factors, panel.to_csv()).unwrap();
    let args = [
        "compare",
        "--market",
        s(data.path()),
        "--checkpoint",
        s(&ckpt),
        "--factors",
        s(&factors),
        "--out",
        s(out.path()),
        "--mu",
        "0",
        "--set",
        "long_n=2",
        "--set",
        "short_n=2",
    ];
    let o = drlpm(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.path().join("compare.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "group,strategy,log_daily_return,log_annual_sharpe,log_annual_sortino,mdd"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[2].parse::<f64>().unwrap(), 0.0, "{line}");
        assert_eq!(cells[3], "", "{line}");
        assert_eq!(cells[4], "", "{line}");
        assert_eq!(cells[5].parse::<f64>().unwrap(), 0.0, "{line}");
    }
}

#[test]
fn compare_matches_standalone_runs() {
    let market = random_market(&[0.002, -0.001, 0.001, 0.0, 0.0005], 0.02, 150, 6);
    let data = market_dir(&market);
    let work = TempDir::new().unwrap();
    let ckpt = work.path().join("ckpt.json");
    constant_checkpoint(&market, 5, &[0.0, 0.3, -0.2, 0.1, 0.5, -0.4], &ckpt);
    let panel = random_factor_panel(&market, 9);
    let factors = work.path().join("factors.csv");
    std::fs::write(&factors, panel.to_csv()).unwrap();
    let (cmp_out, bt_out) = (work.path().join("cmp"), work.path().join("bt"));
    let common = ["--market", s(data.path()), "--checkpoint", s(&ckpt), "--set", "long_n=2", "--set", "short_n=2"];

    let mut args = vec!["compare", "--factors", s(&factors), "--out", s(&cmp_out)];
    args.extend(common);
    assert_eq!(drlpm(&args).status.code(), Some(0));
    let mut args = vec!["backtest", "--out", s(&bt_out)];
    args.extend(common);
    assert_eq!(drlpm(&args).status.code(), Some(0));

    for file in ["drl_daily.csv", "drl_weights.csv", "drl_summary.json"] {
        assert_eq!(
            std::fs::read(cmp_out.join(file)).unwrap(),
            std::fs::read(bt_out.join(file)).unwrap(),
            "{file}"
        );
    }

    let (_, test) = RunConfig::default().split(&market).unwrap();
    let reloaded = FactorPanel::load_csv(&factors).unwrap();
    let factor = run_factor_backtest(
        &market,
        &reloaded,
        DayRange::new(test.start, test.end).unwrap(),
        FactorStrategy { long_n: 2, short_n: 2 },
    )
    .unwrap();
    let text = std::fs::read_to_string(cmp_out.join("compare.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[1], "multi-factor");
    assert_eq!(row[2].parse::<f64>().unwrap(), factor.summary.log_daily_return.unwrap());
    assert_eq!(row[5].parse::<f64>().unwrap(), factor.summary.mdd.unwrap());
}

#[test]
fn config_file_and_missing_paths() {
    let work = TempDir::new().unwrap();
    let cfg = work.path().join("run.cfg");
    std::fs::write(&cfg, "window = 5\nmarket_dir = /no/such/dir\n").unwrap();
    let o = drlpm(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(4));
    std::fs::write(&cfg, "window = five\n").unwrap();
    assert_eq!(drlpm(&["train", "--config", s(&cfg)]).status.code(), Some(4));
}
