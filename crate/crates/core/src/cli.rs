//! Command-line front end: `ingest`, `train`, `backtest` and `compare`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytics::{run_backtest, training_slope, write_report, BacktestReport, DayRange, GreedyActor, Metrics};
use crate::baseline_factor::{run_factor_backtest, FactorPanel};
use crate::config::{DateSpan, RunConfig};
use crate::ddpg::train_with;
use crate::error::{Error, Result};
use crate::market_data::{align, load_csv, AlignedMarket};
use crate::neural::Checkpoint;
use crate::trading_env::EnvConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

pub const COMPARE_HEADER: &str = "group,strategy,log_daily_return,log_annual_sharpe,log_annual_sortino,mdd";

#[derive(Debug, Parser)]
#[command(name = "drlpm", version, about = "Long-short portfolio management with DDPG")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Observation window in trading days.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Proportional transaction cost rate.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Save a checkpoint every K completed episodes.
    #[arg(long, global = true, value_name = "K")]
    pub checkpoint_every: Option<usize>,
    /// Directory of per-asset `date,open,high,low,close` CSVs.
    #[arg(long, global = true)]
    pub market: Option<PathBuf>,
    #[arg(long, global = true)]
    pub benchmark: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// `date,asset,ep_ratio,turnover` CSV.
    #[arg(long, global = true)]
    pub factors: Option<PathBuf>,
    /// Stock universe for the factor baseline.
    #[arg(long, global = true)]
    pub factor_market: Option<PathBuf>,
    /// Any configuration key, e.g. `--set total_steps=504`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, align and summarize a market directory.
    Ingest {
        /// Market directory; overrides `--market`.
        dir: Option<PathBuf>,
    },
    /// Train an agent on the training range.
    Train,
    /// Greedy back-test of a checkpoint on the test range.
    Backtest,
    /// Back-test a checkpoint and the factor baseline side by side.
    Compare,
}

/// A failed command and its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Io { .. }
            | Error::Format(_)
            | Error::Alignment(_)
            | Error::Window { .. }
            | Error::OutOfRange { .. }
            | Error::InsufficientUniverse { .. }
            | Error::Checkpoint(_) => EXIT_DATA,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Resolves the configuration: defaults, then the file, then flags.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(v) = common.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = common.window {
        cfg.env.window = v;
    }
    if let Some(v) = common.mu {
        cfg.env.mu = v;
    }
    if let Some(v) = common.checkpoint_every {
        cfg.checkpoint_every = Some(v);
    }
    if let Some(v) = &common.market {
        cfg.market_dir = Some(v.clone());
    }
    if let Some(v) = &common.benchmark {
        cfg.benchmark = v.clone();
    }
    if let Some(v) = &common.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if let Some(v) = &common.factors {
        cfg.factor_csv = Some(v.clone());
    }
    if let Some(v) = &common.factor_market {
        cfg.factor_market_dir = Some(v.clone());
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = resolve_config(&cli.common)?;
    if let Command::Ingest { dir: Some(dir) } = &cli.command {
        cfg.market_dir = Some(dir.clone());
    }
    let _ = write!(err, "# effective configuration\n{}", cfg.to_text());
    cfg.validate()?;
    match cli.command {
        Command::Ingest { .. } => cmd_ingest(&cfg, out),
        Command::Train => cmd_train(&cfg, out),
        Command::Backtest => cmd_backtest(&cfg, out).map(|_| ()),
        Command::Compare => cmd_compare(&cfg, out),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> std::result::Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::usage(format!("missing required {flag}")))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Error::io(path, e).into()
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn market_files(dir: &Path) -> std::result::Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv && path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Failure::usage(format!("no CSV files in {}", dir.display())));
    }
    files.sort();
    Ok(files)
}

/// Loads and aligns a market directory. Without `strict` a missing benchmark
/// falls back to the last asset id.
pub fn load_market(dir: &Path, benchmark: &str, strict: bool) -> std::result::Result<AlignedMarket, Failure> {
    let series = market_files(dir)?
        .iter()
        .map(load_csv)
        .collect::<Result<Vec<_>>>()?;
    let bench = if strict || series.iter().any(|s| s.asset_id == benchmark) {
        benchmark.to_string()
    } else {
        series.iter().map(|s| s.asset_id.clone()).max().unwrap_or_default()
    };
    Ok(align(series, &bench)?)
}

fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let dir = require(&cfg.market_dir, "market directory")?;
    let series = market_files(dir)?
        .iter()
        .map(load_csv)
        .collect::<Result<Vec<_>>>()?;
    let missing: Vec<(String, usize, usize)> = series
        .iter()
        .map(|s| (s.asset_id.clone(), s.len(), s.missing_days()))
        .collect();
    let market = align(series, &cfg.benchmark)?;
    let dates = market.dates();
    let mut text = format!(
        "assets: {}\nbenchmark: {}\ndates: {} .. {} ({} common days)\nasset,rows,missing_days\n",
        market.num_assets(),
        cfg.benchmark,
        dates[0],
        dates[dates.len() - 1],
        market.len()
    );
    for (id, rows, miss) in missing {
        text.push_str(&format!("{id},{rows},{miss}\n"));
    }
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

fn create_out(cfg: &RunConfig) -> std::result::Result<&Path, Failure> {
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let market = load_market(require(&cfg.market_dir, "--market")?, &cfg.benchmark, true)?;
    let (train_range, _) = cfg.split(&market)?;
    let train_market = market.slice(train_range.start, train_range.end)?;
    let dir = create_out(cfg)?;
    let ids: Vec<String> = market.asset_ids().iter().map(|s| s.to_string()).collect();
    let every = cfg.checkpoint_every;
    let env = &cfg.env;

    let outcome = train_with(&train_market, env, &cfg.train, |record, agent| {
        let n = record.episode + 1;
        if every.is_some_and(|k| n % k == 0) {
            Checkpoint::new(ids.clone(), env.window, env.arbitrage_enabled, &agent.actor, &agent.critic)
                .save(&dir.join(format!("checkpoint_ep{n}.json")))?;
        }
        Ok(())
    })?;
    Checkpoint::new(ids, env.window, env.arbitrage_enabled, &outcome.actor, &outcome.critic)
        .save(&dir.join("checkpoint.json"))?;
    write_file(&dir.join("train_log.csv"), &outcome.log.to_csv())?;
    write_file(&dir.join("run_config.txt"), &cfg.to_text())?;

    let slope = match training_slope(&outcome.log) {
        Ok((slope, _)) => slope.to_string(),
        Err(_) => "undefined".to_string(),
    };
    let text = format!(
        "episodes: {}\ntraining_slope: {slope}\ncheckpoint: {}\n",
        outcome.log.episodes.len(),
        dir.join("checkpoint.json").display()
    );
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

struct DrlRun {
    market: AlignedMarket,
    test: DayRange,
    report: BacktestReport,
}

fn drl_backtest(cfg: &RunConfig) -> std::result::Result<DrlRun, Failure> {
    let ckpt = Checkpoint::load(require(&cfg.checkpoint, "--checkpoint")?)?;
    let market = load_market(require(&cfg.market_dir, "--market")?, &cfg.benchmark, true)?;
    if market.asset_ids() != ckpt.asset_ids {
        return Err(Error::Checkpoint(format!(
            "checkpoint trades [{}] but the market holds [{}]",
            ckpt.asset_ids.join(", "),
            market.asset_ids().join(", ")
        ))
        .into());
    }
    let actor = ckpt.actor()?;
    let env = EnvConfig {
        window: ckpt.window,
        arbitrage_enabled: ckpt.arbitrage_enabled,
        ..cfg.env.clone()
    };
    let (train, test) = cfg.split(&market)?;
    let policy = GreedyActor {
        actor: &actor,
        arbitrage: env.arbitrage_enabled,
    };
    let report = run_backtest(&policy, "drl", &market, &env, test, Some(train))?;
    Ok(DrlRun { market, test, report })
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_text(name: &str, m: &Metrics) -> String {
    format!(
        "{name}: log_daily_return={} log_annual_sharpe={} log_annual_sortino={} mdd={}\n",
        fmt_metric(m.log_daily_return),
        fmt_metric(m.log_annual_sharpe),
        fmt_metric(m.log_annual_sortino),
        fmt_metric(m.mdd)
    )
}

fn cmd_backtest(cfg: &RunConfig, out: &mut dyn Write) -> std::result::Result<BacktestReport, Failure> {
    let run = drl_backtest(cfg)?;
    let dir = create_out(cfg)?;
    write_report(&run.report, dir, "drl")?;
    out.write_all(metrics_text("drl", &run.report.summary).as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(run.report)
}

/// One `compare.csv` row.
pub fn compare_row(group: &str, strategy: &str, m: &Metrics) -> String {
    format!(
        "{group},{strategy},{},{},{},{}\n",
        fmt_metric(m.log_daily_return),
        fmt_metric(m.log_annual_sharpe),
        fmt_metric(m.log_annual_sortino),
        fmt_metric(m.mdd)
    )
}

fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let factor_csv = require(&cfg.factor_csv, "--factors")?;
    let run = drl_backtest(cfg)?;
    let panel = FactorPanel::load_csv(factor_csv)?;
    let universe_dir = match &cfg.factor_market_dir {
        Some(d) => d.as_path(),
        None => require(&cfg.market_dir, "--market")?,
    };
    let universe = load_market(universe_dir, &cfg.benchmark, false)?;
    let span = DateSpan {
        start: run.market.dates()[run.test.start],
        end: run.market.dates()[run.test.end],
    };
    let factor_range = span.resolve(&universe)?;
    let factor = run_factor_backtest(&universe, &panel, factor_range, cfg.factor)?;

    let dir = create_out(cfg)?;
    write_report(&run.report, dir, "drl")?;
    write_report(&factor, dir, "factor")?;
    let mut csv = String::from(COMPARE_HEADER);
    csv.push('\n');
    csv.push_str(&compare_row(&cfg.group, "drl", &run.report.summary));
    csv.push_str(&compare_row(&cfg.group, "multi-factor", &factor.summary));
    write_file(&dir.join("compare.csv"), &csv)?;
    let text = metrics_text("drl", &run.report.summary) + &metrics_text("multi-factor", &factor.summary);
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let cli = parse(&["drlpm", "train", "--seed", "7", "--window", "12", "--mu", "0", "--set", "total_steps=504"]);
        let cfg = resolve_config(&cli.common).unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.env.window, 12);
        assert_eq!(cfg.env.mu, 0.0);
        assert_eq!(cfg.train.total_steps, 504);
    }

    #[test]
    fn bad_set_is_config_error() {
        let cli = parse(&["drlpm", "train", "--set", "total_steps"]);
        assert!(matches!(resolve_config(&cli.common), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_from_args(["drlpm", "frobnicate"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run_from_args(["drlpm", "train"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::Format("x".into())).code, EXIT_DATA);
    }

    #[test]
    fn compare_row_leaves_undefined_empty() {
        let row = compare_row("g", "drl", &Metrics::default());
        assert_eq!(row, "g,drl,,,,\n");
        assert_eq!(COMPARE_HEADER.split(',').count(), 6);
    }
}
