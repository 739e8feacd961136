//! Command-line front end: parameter sweeps to CSV and config validation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 unstable Monte
//! Carlo estimate, 4 fixed-point failure, 1 anything else.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::load_config;
use crate::detequiv::{mrt_det_sinr, rzf_det_sinr_solved, FixedPointOptions};
use crate::error::{Error, Result};
use crate::limits::{mrt_limit_sinr, rzf_limit_sinr};
use crate::montecarlo::{simulate, McOptions, RateReport};
use crate::precoding::Scheme;
use crate::scenario::{KappaRule, LambdaRule, Scenario, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "rician-mimo", version, about = "Multicell massive MIMO downlink rates over Rician fading")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep N or kappa and write per-UE SINRs and rates as CSV.
    Sweep(SweepArgs),
    /// Check a scenario file and print what it resolves to.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub sweep: SweepVar,
    /// Comma-separated, strictly ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum)]
    pub engine: EngineArg,
    /// Monte Carlo trials; required with the mc engine.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    #[value(name = "N")]
    Antennas,
    #[value(name = "kappa")]
    Kappa,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::Antennas => "N",
            SweepVar::Kappa => "kappa",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Mrt,
    Rzf,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Mc,
    De,
    Limits,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    Mc,
    De,
    Limits,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Mc => "mc",
            Engine::De => "de",
            Engine::Limits => "limits",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub engines: Vec<Engine>,
    pub trials: Option<usize>,
    pub out_path: PathBuf,
}

impl SweepSpec {
    pub fn from_args(args: &SweepArgs) -> Result<Self> {
        let schemes = match args.scheme {
            SchemeArg::Mrt => vec![Scheme::Mrt],
            SchemeArg::Rzf => vec![Scheme::Rzf],
            SchemeArg::Both => vec![Scheme::Mrt, Scheme::Rzf],
        };
        let engines = match args.engine {
            EngineArg::Mc => vec![Engine::Mc],
            EngineArg::De => vec![Engine::De],
            EngineArg::Limits => vec![Engine::Limits],
            EngineArg::All => vec![Engine::Mc, Engine::De, Engine::Limits],
        };
        let spec = Self {
            variable: args.sweep,
            values: args.values.clone(),
            schemes,
            engines,
            trials: args.trials,
            out_path: args.out.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.values.is_empty() {
            return bad("sweep values must not be empty");
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("sweep values must be strictly ascending");
        }
        if self.schemes.is_empty() || self.engines.is_empty() {
            return bad("need at least one scheme and one engine");
        }
        if self.engines.contains(&Engine::Mc) && !self.trials.is_some_and(|t| t >= 2) {
            return bad("the mc engine needs --trials of at least 2");
        }
        if self.variable == SweepVar::Antennas
            && self.values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0))
        {
            return bad("N values must be positive integers");
        }
        Ok(())
    }
}

/// One CSV record. Empty strings stand for fields that do not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub engine: Engine,
    pub cell: String,
    pub ue: String,
    pub sinr: String,
    pub rate: String,
    pub stderr: String,
    pub trials: String,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 11] = [
    "sweep_var",
    "sweep_value",
    "scheme",
    "engine",
    "cell",
    "ue",
    "sinr",
    "rate",
    "stderr",
    "trials",
    "seed",
];

fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

/// Scenario at one sweep point.
pub fn scenario_at(config: &ScenarioConfig, variable: SweepVar, value: f64) -> Result<Scenario> {
    let mut c = config.clone();
    match variable {
        SweepVar::Antennas => c.antennas = value as usize,
        SweepVar::Kappa => c.kappa = KappaRule::Uniform(value),
    }
    Scenario::build(c)
}

fn engine_report(scenario: &Scenario, scheme: Scheme, engine: Engine, trials: Option<usize>) -> Result<RateReport> {
    Ok(match (engine, scheme) {
        (Engine::Mc, _) => {
            let options = McOptions {
                trials: trials.unwrap_or(0),
                ..McOptions::default()
            };
            simulate(scenario, scheme, &options)?
        }
        (Engine::De, Scheme::Mrt) => mrt_det_sinr(scenario).to_rate_report(),
        (Engine::De, Scheme::Rzf) => rzf_det_sinr_solved(scenario, &FixedPointOptions::default())?.to_rate_report(),
        (Engine::Limits, Scheme::Mrt) => mrt_limit_sinr(scenario).to_rate_report(),
        (Engine::Limits, Scheme::Rzf) => rzf_limit_sinr(scenario)?.to_rate_report(),
    })
}

fn point_rows(config: &ScenarioConfig, spec: &SweepSpec, value: f64) -> Result<Vec<Row>> {
    let scenario = scenario_at(config, spec.variable, value)?;
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        for &engine in &spec.engines {
            let report = engine_report(&scenario, scheme, engine, spec.trials)?;
            let trials = report.n_trials.map(|t| t.to_string()).unwrap_or_default();
            let row = |cell: String, ue: String, sinr: String, rate: String, stderr: String| Row {
                sweep_var: spec.variable.to_string(),
                sweep_value: value,
                scheme,
                engine,
                cell,
                ue,
                sinr,
                rate,
                stderr,
                trials: trials.clone(),
                seed: config.seed,
            };
            for u in &report.users {
                rows.push(row(
                    u.cell.to_string(),
                    u.ue.to_string(),
                    fmt_value(u.sinr),
                    fmt_value(u.rate),
                    fmt_opt(u.rate_stderr),
                ));
            }
            rows.push(row(
                "all".into(),
                "all".into(),
                String::new(),
                fmt_value(report.average_rate),
                fmt_opt(report.average_rate_stderr),
            ));
        }
    }
    Ok(rows)
}

/// Rows of a whole sweep in `(sweep_value, scheme, engine, cell, ue)` order.
pub fn sweep_rows(config: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let per_point = spec
        .values
        .par_iter()
        .map(|v| point_rows(config, spec, *v))
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let out = |e: csv::Error| Error::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(out)?;
    w.write_record(CSV_HEADER).map_err(out)?;
    for r in rows {
        w.write_record([
            r.sweep_var.clone(),
            r.sweep_value.to_string(),
            r.scheme.to_string(),
            r.engine.to_string(),
            r.cell.clone(),
            r.ue.clone(),
            r.sinr.clone(),
            r.rate.clone(),
            r.stderr.clone(),
            r.trials.clone(),
            r.seed.to_string(),
        ])
        .map_err(out)?;
    }
    w.flush().map_err(|e| Error::Output(format!("{}: {e}", path.display())))
}

pub fn run_sweep(config_path: &Path, spec: &SweepSpec, seed: Option<u64>) -> Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let rows = sweep_rows(&config, spec)?;
    write_csv(&spec.out_path, &rows)
}

/// Human-readable checks of a config. The flag is true iff the config is usable.
pub fn validation_report(config: &ScenarioConfig) -> (String, bool) {
    let mut out = String::new();
    let (k, n) = (config.users, config.antennas);
    out.push_str(&format!(
        "scenario: L = {}, K = {k}, N = {n}, rho_tr = {} dB, rho_dl = {} dB\n",
        config.cells, config.rho_tr_db, config.rho_dl_db
    ));
    let ratio = k as f64 / n as f64;
    let load_ok = k >= 1 && k < n;
    out.push_str(&format!(
        "K/N = {ratio}\nload check (0 < K/N < 1): {}\n",
        if load_ok { "ok" } else { "VIOLATED" }
    ));
    let rule = match &config.lambda {
        LambdaRule::KOverNRho => "k_over_n_rho".to_string(),
        LambdaRule::Fixed(v) => format!("fixed {v}"),
        LambdaRule::PerCell(v) => format!("per-cell {v:?}"),
    };
    let lambdas = config.resolved_lambda();
    out.push_str(&format!(
        "lambda: {rule} -> {}\n",
        lambdas.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
    ));
    match Scenario::build(config.clone()) {
        Ok(s) => {
            let norms = s.los_spectral_norms();
            let max = norms.iter().copied().fold(0.0, f64::max);
            out.push_str(&format!(
                "LOS norm check (max ||Hbar_jj|| / sqrt(N) = {max}): {}\n",
                if max.is_finite() { "ok" } else { "VIOLATED" }
            ));
            let ok = load_ok && max.is_finite();
            out.push_str(if ok { "OK\n" } else { "INVALID\n" });
            (out, ok)
        }
        Err(e) => {
            out.push_str(&format!("INVALID: {e}\n"));
            (out, false)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Parse { .. } | Error::InvalidArgument(_) => 2,
        Error::UnstableEstimate { .. } => 3,
        Error::NonConvergence { .. } | Error::DegenerateDelta { .. } => 4,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Sweep(args) => {
            let result = SweepSpec::from_args(&args).and_then(|spec| run_sweep(&args.config, &spec, args.seed));
            match result {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(c) => {
                let (text, ok) = validation_report(&c);
                print!("{text}");
                if ok {
                    0
                } else {
                    2
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
    }
}
