use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pev_core::oracle::mc_pev;
use pev_core::power::{curve_data, retest};
use pev_core::regression::delta_distribution_reg;
use pev_core::simple::delta_distribution_pi;
use pev_core::solvers::{bound_pev, evaluate_regression, evaluate_simple, sweep, FocalParameter, RowOutcome};
use pev_core::{DeltaPosterior, RegressionScenario};
use serde::Serialize;

mod config;
mod report;

use config::{Config, Setup};
use report::{Format, PointReport};

/// Probability of invalidating an inference under limited external validity.
#[derive(Debug, Parser)]
#[command(name = "pev", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the PEV at the configured scenario.
    Pev(PevArgs),
    /// Sweep the PEV grid and report focal-parameter thresholds as CSV.
    Analyze(Common),
    /// Export null and ideal-sample density curves as CSV.
    Curves(CurveArgs),
    /// Bound the PEV over an interval of the focal parameter.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decimal places for every number in the output.
    #[arg(long)]
    precision: Option<usize>,
}

#[derive(Debug, Args)]
struct PevArgs {
    #[command(flatten)]
    common: Common,
    /// Unobserved sample size (regression estimator).
    #[arg(long = "n-un")]
    n_un: Option<u64>,
    /// Also estimate the PEV by simulation; needs --seed.
    #[arg(long = "mc-draws")]
    mc_draws: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2048)]
    points: usize,
    /// Standard deviations covered on either side of both means.
    #[arg(long, default_value_t = 6.0)]
    span: f64,
    /// Unobserved sizes, one curve pair each (regression estimator).
    #[arg(long = "n-un", value_delimiter = ',')]
    n_un: Vec<u64>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi: f64,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Numeric(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Errors raised while building a scenario from the document.
    pub fn from_build(e: pev_core::Error) -> Self {
        CliError::Config(e.to_string())
    }

    /// Errors raised during evaluation: bad inputs are configuration errors,
    /// the rest are numeric failures.
    fn from_eval(e: pev_core::Error) -> Self {
        use pev_core::Error as E;
        match e {
            E::InvalidInput { .. } | E::DimensionMismatch { .. } | E::RoleMismatch(_) | E::NotPositiveSemidefinite { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pev(args) => cmd_pev(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Curves(args) => cmd_curves(args),
        Command::Bound(args) => cmd_bound(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pev: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

/// Text to stdout, or to `--out` when given.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PointRecord {
    pev: f64,
    delta_id: f64,
    se_ideal: f64,
    t_ratio: Option<f64>,
    power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_pev: Option<f64>,
}

/// Unobserved size for a regression point: flag, then custom focal, then the
/// size recorded on the unobserved moments.
fn point_n_un(flag: Option<u64>, cfg: &Config, scn: &RegressionScenario) -> u64 {
    flag.or(match &cfg.focal {
        Some(FocalParameter::Custom { n_un, .. }) => Some(*n_un),
        _ => None,
    })
    .unwrap_or(scn.unobserved().n())
}

fn cmd_pev(args: PevArgs) -> Result<(), CliError> {
    let cfg = Config::load(&args.common.config)?;
    let fmt = Format {
        precision: args.common.precision,
    };
    let mc_seed = match (args.mc_draws, args.seed) {
        (Some(draws), Some(seed)) => Some((draws, seed)),
        (Some(_), None) => return Err(CliError::config("--mc-draws needs an explicit --seed")),
        (None, _) => None,
    };
    let (eval, dist) = match &cfg.setup {
        Setup::Simple(s) => {
            if args.n_un.is_some() {
                return Err(CliError::config("--n-un applies to the regression estimator"));
            }
            let scn = s.point()?;
            let eval = evaluate_simple(&scn, &cfg.rule).map_err(CliError::from_eval)?;
            (eval, delta_distribution_pi(&scn).map_err(CliError::from_eval)?)
        }
        Setup::Regression(r) => {
            let n_un = point_n_un(args.n_un, &cfg, r);
            let eval = evaluate_regression(r, n_un, &cfg.rule).map_err(CliError::from_eval)?;
            (eval, delta_distribution_reg(r, n_un).map_err(CliError::from_eval)?)
        }
    };
    let retest = cfg.rule.z().map(|_| retest(&dist, &cfg.rule)).transpose().map_err(CliError::from_eval)?;
    let mc = match mc_seed {
        Some((draws, seed)) => {
            let p = mc_pev(&dist, &cfg.rule, Some(eval.se_ideal), draws, seed).map_err(CliError::from_eval)?;
            Some((p, draws, seed))
        }
        None => None,
    };
    let report = PointReport {
        pev: eval.pev,
        delta_id: eval.delta_id,
        se_ideal: eval.se_ideal,
        retest: retest.map(|r| (r.t_ratio, r.power)),
        mc,
    };
    print!("{}", report::point(&fmt, &report));
    if let Some(path) = &args.common.out {
        let record = PointRecord {
            pev: report.pev,
            delta_id: report.delta_id,
            se_ideal: report.se_ideal,
            t_ratio: retest.map(|r| r.t_ratio),
            power: retest.map(|r| r.power),
            mc_pev: mc.map(|m| m.0),
        };
        let json = serde_json::to_string_pretty(&record).expect("record serializes");
        write_file(path, &(json + "\n"))?;
    }
    Ok(())
}

fn cmd_analyze(args: Common) -> Result<(), CliError> {
    let cfg = Config::load(&args.config)?;
    let fmt = Format {
        precision: args.precision,
    };
    let (focal, scenario) = cfg.focal_scenario()?;
    let rows = sweep(&cfg.grid, &focal, &scenario, &cfg.rule);
    emit(&args.out, &report::sweep_csv(&fmt, &focal, &rows))?;

    if let Some(e) = rows.iter().find_map(|r| match &r.outcome {
        RowOutcome::Failed(e) => Some(e.clone()),
        _ => None,
    }) {
        return Err(CliError::Numeric(e.to_string()));
    }
    if !rows.is_empty() && rows.iter().all(|r| matches!(r.outcome, RowOutcome::Infeasible(_))) {
        return Err(CliError::Infeasible("no target in the grid is reachable".into()));
    }
    Ok(())
}

fn cmd_curves(args: CurveArgs) -> Result<(), CliError> {
    let cfg = Config::load(&args.common.config)?;
    let fmt = Format {
        precision: args.common.precision,
    };
    if args.points < 2 {
        return Err(CliError::config("--points: need at least 2"));
    }
    if !(args.span > 0.0 && args.span.is_finite()) {
        return Err(CliError::config("--span: must be positive"));
    }
    let scenarios: Vec<(String, DeltaPosterior)> = match &cfg.setup {
        Setup::Simple(s) => {
            if !args.n_un.is_empty() {
                return Err(CliError::config("--n-un applies to the regression estimator"));
            }
            let scn = s.point()?;
            let label = format!("alpha={} pi_r={}", scn.alpha(), scn.pi_r());
            vec![(label, delta_distribution_pi(&scn).map_err(CliError::from_eval)?)]
        }
        Setup::Regression(r) => {
            let sizes = if args.n_un.is_empty() {
                vec![point_n_un(None, &cfg, r)]
            } else {
                args.n_un.clone()
            };
            sizes
                .into_iter()
                .map(|n| Ok((format!("n_un={n}"), delta_distribution_reg(r, n).map_err(CliError::from_eval)?)))
                .collect::<Result<_, CliError>>()?
        }
    };
    let mut text = String::from(report::CURVE_HEADER);
    for (id, (label, dist)) in scenarios.iter().enumerate() {
        let curves = curve_data(0.0, dist, &cfg.rule, args.points, args.span).map_err(CliError::from_eval)?;
        text.push_str(&report::curve_block(&fmt, id, label, &curves));
    }
    emit(&args.common.out, &text)
}

#[derive(Serialize)]
struct BoundRecord {
    pev: (f64, f64),
    delta_id: (f64, f64),
    monotone: bool,
}

fn cmd_bound(args: BoundArgs) -> Result<(), CliError> {
    let cfg = Config::load(&args.common.config)?;
    let fmt = Format {
        precision: args.common.precision,
    };
    if args.lo.is_nan() || args.hi.is_nan() || args.lo >= args.hi {
        return Err(CliError::config(format!(
            "--lo must be below --hi (got {} and {})",
            args.lo, args.hi
        )));
    }
    let (focal, scenario) = cfg.focal_scenario()?;
    let b = bound_pev((args.lo, args.hi), &focal, &scenario, &cfg.rule).map_err(CliError::from_eval)?;
    print!("{}", report::bound(&fmt, &b));
    if let Some(path) = &args.common.out {
        let record = BoundRecord {
            pev: b.pev,
            delta_id: b.delta_id,
            monotone: b.monotone,
        };
        let json = serde_json::to_string_pretty(&record).expect("record serializes");
        write_file(path, &(json + "\n"))?;
    }
    Ok(())
}
