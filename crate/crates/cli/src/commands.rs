//! Subcommand execution. Each command returns a JSON document plus side files.

use std::fmt;

use notrade_core::asymptotics::{
    ce_loss, crra_band_fraction, no_trade_band, turnover_forecast, GrowthReport, NoTradeBand, Parametrization,
};
use notrade_core::simulator::growth_rate_measurement;
use notrade_core::{
    compare_report, mean_variance_experiment, run_frictional, run_sweep, simulate_paths, solve_frictionless, Error,
    FrictionalRun, FrictionlessModel, FrictionlessSolution, PathBundle,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Band,
    Welfare,
    Turnover,
    Simulate,
    Sweep,
    Meanvar,
    Growth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Band => "band",
            Command::Welfare => "welfare",
            Command::Turnover => "turnover",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Meanvar => "meanvar",
            Command::Growth => "growth",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::Domain(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

/// Result document, extra files for the output directory, and an optional
/// failure that is reported after the outputs are written.
#[derive(Debug)]
pub struct Outcome {
    pub result: Value,
    pub files: Vec<(String, String)>,
    pub stderr: Option<String>,
    pub failure: Option<Failure>,
}

impl Outcome {
    fn plain<T: Serialize>(v: &T) -> Self {
        Outcome {
            result: serde_json::to_value(v).expect("result serializes"),
            files: Vec::new(),
            stderr: None,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandSummary {
    pub parametrization: Parametrization,
    pub midpoint_t0: f64,
    pub halfwidth_t0: f64,
    pub halfwidth_mean: f64,
    pub halfwidth_min: f64,
    pub halfwidth_max: f64,
    pub shares_midpoint_t0: f64,
    pub shares_halfwidth_t0: f64,
}

fn summarize(band: &NoTradeBand, shares: &NoTradeBand) -> BandSummary {
    let all = band.halfwidth.iter().flatten();
    let n = band.halfwidth.iter().map(Vec::len).sum::<usize>().max(1);
    BandSummary {
        parametrization: band.parametrization,
        midpoint_t0: band.midpoint[0][0],
        halfwidth_t0: band.halfwidth[0][0],
        halfwidth_mean: all.clone().sum::<f64>() / n as f64,
        halfwidth_min: all.clone().cloned().fold(f64::INFINITY, f64::min),
        halfwidth_max: all.cloned().fold(f64::NEG_INFINITY, f64::max),
        shares_midpoint_t0: shares.midpoint[0][0],
        shares_halfwidth_t0: shares.halfwidth[0][0],
    }
}

struct Solved {
    fm: FrictionlessModel,
    bundle: PathBundle,
    sol: FrictionlessSolution,
}

fn solve(cfg: &RunConfig, seed: u64) -> Result<Solved, Failure> {
    let base = cfg.base(seed).map_err(Failure::Config)?;
    let fm = FrictionlessModel::new(base.model, base.pref, base.x0, base.grid.horizon)?;
    let bundle = simulate_paths(base.model, base.spread, base.grid)?;
    let sol = solve_frictionless(base.model, base.pref, &bundle, base.x0)?;
    Ok(Solved { fm, bundle, sol })
}

fn bankruptcy_check(n_bankrupt: usize, n_paths: usize, limit: f64) -> Option<Failure> {
    let rate = n_bankrupt as f64 / n_paths.max(1) as f64;
    (rate > limit).then(|| Failure::Numerical(format!("bankruptcy rate {rate} exceeds {limit}")))
}

pub fn execute(cmd: Command, cfg: &RunConfig, seed: u64) -> Result<Outcome, Failure> {
    cfg.validate().map_err(Failure::Config)?;
    match cmd {
        Command::Band => {
            let s = solve(cfg, seed)?;
            let shares = no_trade_band(&s.fm, &s.sol, &s.bundle, None)?;
            let band = if s.fm.crra_gamma().is_some() {
                crra_band_fraction(&s.fm, &s.sol, &s.bundle)?
            } else {
                shares.clone()
            };
            Ok(Outcome::plain(&summarize(&band, &shares)))
        }
        Command::Welfare => {
            let s = solve(cfg, seed)?;
            let band = no_trade_band(&s.fm, &s.sol, &s.bundle, None)?;
            Ok(Outcome::plain(&ce_loss(&s.fm, &s.sol, &band, &s.bundle)?))
        }
        Command::Turnover => {
            let s = solve(cfg, seed)?;
            let band = no_trade_band(&s.fm, &s.sol, &s.bundle, None)?;
            Ok(Outcome::plain(&turnover_forecast(&s.fm, &s.sol, &band, &s.bundle)?))
        }
        Command::Simulate => {
            let b = cfg.base(seed).map_err(Failure::Config)?;
            let run = FrictionalRun {
                model: b.model,
                pref: b.pref,
                spread: b.spread,
                grid: b.grid,
                x0: b.x0,
                options: b.options,
            };
            let res = run_frictional(&run)?;
            let mut out = Outcome::plain(&res);
            if !res.trace.is_empty() {
                let mut buf = Vec::new();
                res.write_trace_csv(&mut buf).expect("in-memory write");
                out.files.push(("trace.csv".into(), String::from_utf8(buf).expect("ascii csv")));
            }
            out.failure = bankruptcy_check(res.n_bankrupt, res.n_paths, cfg.tolerances.max_bankruptcy_rate);
            Ok(out)
        }
        Command::Sweep => {
            let spec = cfg.sweep_spec(seed).map_err(Failure::Config)?;
            let sweep = run_sweep(&spec)?;
            let report = compare_report(&sweep, &cfg.tolerances);
            let regressions = serde_json::to_string_pretty(&sweep.regressions).expect("serializes");
            let sweep_json = serde_json::to_string_pretty(&sweep).expect("serializes");
            let failure = sweep
                .rows
                .iter()
                .filter_map(|r| r.realized.as_ref())
                .find_map(|q| bankruptcy_check(q.n_bankrupt, spec.base.grid.n_paths, cfg.tolerances.max_bankruptcy_rate));
            Ok(Outcome {
                result: json!({ "sweep": sweep, "compare": report }),
                files: vec![
                    ("sweep.csv".into(), sweep.csv()),
                    ("sweep.json".into(), sweep_json),
                    ("regressions.json".into(), regressions),
                    ("compare.csv".into(), report.csv()),
                ],
                stderr: Some(report.table(&sweep)),
                failure,
            })
        }
        Command::Meanvar => {
            let b = cfg.base(seed).map_err(Failure::Config)?;
            let e = mean_variance_experiment(b.model, b.spread, b.grid, b.x0, &cfg.experiment.target_means, b.options)?;
            let failure = e
                .runs
                .iter()
                .find_map(|r| bankruptcy_check(r.n_bankrupt, b.grid.n_paths, cfg.tolerances.max_bankruptcy_rate));
            let mut out = Outcome::plain(&e);
            out.failure = failure;
            Ok(out)
        }
        Command::Growth => {
            let b = cfg.base(seed).map_err(Failure::Config)?;
            if !b.pref.is_log() {
                return Err(Failure::Config(format!("growth needs log preferences, got {}", b.pref.name())));
            }
            let m = growth_rate_measurement(b.model, b.spread, b.grid, b.options)?;
            let report = GrowthReport {
                rate_reduction: m.predicted_reduction,
            };
            Ok(Outcome::plain(&json!({ "report": report, "measurement": m })))
        }
    }
}

/// The JSON document written for a command: result, resolved configuration and
/// seed, and a metadata block that is the only part allowed to differ between runs.
pub fn document(cmd: Command, cfg: &RunConfig, seed: u64, result: Value, metadata: Value) -> String {
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed);
    let doc = json!({
        "command": cmd.name(),
        "seed": seed,
        "config": resolved,
        "result": result,
        "metadata": metadata,
    });
    serde_json::to_string_pretty(&doc).expect("document serializes")
}
