//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a run completed but a certificate failed or
//! a numerical method gave up, 2 on malformed input.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::error_bound::error_bound;
use crate::experiments::{reproduce_table, TableId};
use crate::linalg::{Matrix, Vector};
use crate::model::{self, classify, from_rates_with_notes, validate_mbt, DeathScale, MbtRates, Qve};
use crate::perturbation::{analyze, random_perturbation, structured_perturbation, Perturbation, PerturbationKind};
use crate::simulation::{Schedule, Simulator};
use crate::solvers::{self, solve, Method};
use crate::tolerances::Tolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mbt-qve", version, about = "Extinction probabilities of Markovian binary trees")]
pub struct Cli {
    /// Print numbers rounded to this many significant digits instead of full precision.
    #[arg(long, global = true)]
    pub digits: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral radius of R and the criticality regime.
    Classify { instance: PathBuf },
    /// Minimal nonnegative solution.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Newton)]
        method: Method,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long = "max-it", default_value_t = 100)]
        max_it: usize,
        /// Write the full iterate trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Perturbation and a posteriori error bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Monte Carlo estimate of the extinction probabilities.
    Simulate {
        instance: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long = "max-pop")]
        max_pop: u64,
        #[arg(long, env = "MBT_QVE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Schedule::Generation)]
        schedule: Schedule,
    },
    /// Emit a member of the nine-phase reference family.
    Family {
        #[arg(long)]
        p: f64,
        #[arg(long = "death-scale", value_enum, default_value_t = model::CANONICAL_DEATH_SCALE)]
        death_scale: DeathScale,
        #[arg(long)]
        emit: PathBuf,
        /// Emit the continuous-time rates rather than the equation coefficients.
        #[arg(long)]
        rates: bool,
    },
    /// Regenerate one of the benchmark tables as CSV.
    Reproduce {
        #[arg(long)]
        table: u8,
        #[arg(long, env = "MBT_QVE_SEED", default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BoundsCommand {
    /// Bound the change of x* under a coefficient perturbation.
    Perturb(PerturbArgs),
    /// Bound the distance from an approximate solution to x*.
    Error {
        instance: PathBuf,
        /// JSON array holding the approximate solution.
        #[arg(long)]
        xhat: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("kind").required(true).args(["structured", "random", "delta_b"])))]
pub struct PerturbArgs {
    pub instance: PathBuf,
    /// ΔB = ηB.
    #[arg(long, value_name = "ETA")]
    pub structured: Option<f64>,
    /// Uniform random ΔB with ‖ΔB‖ = η‖B‖.
    #[arg(long, value_name = "ETA", requires = "seed")]
    pub random: Option<f64>,
    #[arg(long, env = "MBT_QVE_SEED")]
    pub seed: Option<u64>,
    /// Explicit ΔB as a JSON array of n rows of length n².
    #[arg(long = "delta-b")]
    pub delta_b: Option<PathBuf>,
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidDimension(_)
        | Error::InvalidInput(_)
        | Error::InvalidRates(_)
        | Error::InvalidDistribution { .. }
        | Error::PerturbationTooLarge(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => EXIT_INPUT,
        _ => EXIT_CERTIFICATE,
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    n: usize,
    rho_r: f64,
    regime: model::Regime,
    positive_regular: bool,
    diagnostics: Vec<model::Diagnostic>,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    method: Method,
    converged: bool,
    iterations: usize,
    residual: f64,
    x: &'a Vector,
}

pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<i32> {
    let tol = Tolerances::default();
    match &cli.command {
        Command::Classify { instance } => {
            let (q, mut diagnostics) = load_instance(instance)?;
            diagnostics.extend(validate_mbt(&q, tol.validation));
            let c = classify(&q, tol.critical)?;
            emit(
                out,
                cli.digits,
                &ClassifyOutput {
                    n: q.n(),
                    rho_r: c.rho_r,
                    regime: c.regime,
                    positive_regular: c.positive_regular,
                    diagnostics,
                },
            )?;
            Ok(EXIT_OK)
        }
        Command::Solve {
            instance,
            method,
            tol: stop,
            max_it,
            trace,
        } => {
            let (q, _) = load_instance(instance)?;
            let rep = match solve(&q, *method, *stop, *max_it) {
                Ok(rep) => rep,
                Err(Error::NoConvergence { report, .. }) => {
                    if let Some(path) = trace {
                        fs::write(path, serde_json::to_string_pretty(&report)?)?;
                    }
                    emit(out, cli.digits, &solve_output(&report))?;
                    eprintln!("error: {:?} iteration did not converge", report.method);
                    return Ok(EXIT_CERTIFICATE);
                }
                Err(e) => return Err(e),
            };
            if let Some(path) = trace {
                fs::write(path, serde_json::to_string_pretty(&rep)?)?;
            }
            emit(out, cli.digits, &solve_output(&rep))?;
            Ok(EXIT_OK)
        }
        Command::Bounds(BoundsCommand::Perturb(args)) => {
            let (q, _) = load_instance(&args.instance)?;
            let pert = if let Some(eta) = args.structured {
                structured_perturbation(&q, eta)?
            } else if let Some(eta) = args.random {
                random_perturbation(&q, eta, args.seed.unwrap_or(0))?
            } else {
                let path = args.delta_b.as_ref().expect("clap enforces one perturbation kind");
                let db: Matrix = serde_json::from_str(&fs::read_to_string(path)?)?;
                Perturbation::from_db(&q, db, PerturbationKind::Explicit)?
            };
            let xstar = solvers::solve_minimal(&q)?.x;
            let rep = analyze(&q, &xstar, &pert)?;
            emit(out, cli.digits, &rep)?;
            Ok(if rep.certified() { EXIT_OK } else { EXIT_CERTIFICATE })
        }
        Command::Bounds(BoundsCommand::Error { instance, xhat }) => {
            let (q, _) = load_instance(instance)?;
            let xhat: Vector = serde_json::from_str(&fs::read_to_string(xhat)?)?;
            if xhat.len() != q.n() {
                return Err(Error::InvalidDimension(format!(
                    "xhat has length {} but the instance has n = {}",
                    xhat.len(),
                    q.n()
                )));
            }
            let rep = error_bound(&q, &xhat)?;
            emit(out, cli.digits, &rep)?;
            Ok(if rep.certified() { EXIT_OK } else { EXIT_CERTIFICATE })
        }
        Command::Simulate {
            instance,
            trials,
            max_pop,
            seed,
            schedule,
        } => {
            let (q, _) = load_instance(instance)?;
            let rep = Simulator::new(&q, *trials, *max_pop, *seed, *schedule)?.run()?;
            emit(out, cli.digits, &rep)?;
            Ok(EXIT_OK)
        }
        Command::Family {
            p,
            death_scale,
            emit: path,
            rates,
        } => {
            let m = model::reference_family(*p, *death_scale)?;
            let q = model::from_rates(&m)?;
            let json = if *rates { m.to_json()? } else { q.to_json()? };
            fs::write(path, json)?;
            let c = classify(&q, tol.critical)?;
            emit(
                out,
                cli.digits,
                &ClassifyOutput {
                    n: q.n(),
                    rho_r: c.rho_r,
                    regime: c.regime,
                    positive_regular: c.positive_regular,
                    diagnostics: validate_mbt(&q, tol.validation),
                },
            )?;
            Ok(EXIT_OK)
        }
        Command::Reproduce { table, seed, out: path } => {
            let t = reproduce_table(TableId::try_from(*table)?, *seed)?;
            match path {
                Some(p) => t.write_csv(fs::File::create(p)?)?,
                None => t.write_csv(&mut *out)?,
            }
            if t.violations() > 0 {
                eprintln!("error: {} certified rows violate their bound", t.violations());
            }
            Ok(if t.all_certified() && t.violations() == 0 {
                EXIT_OK
            } else {
                EXIT_CERTIFICATE
            })
        }
    }
}

fn solve_output(rep: &solvers::SolveReport) -> SolveOutput<'_> {
    SolveOutput {
        method: rep.method,
        converged: rep.converged,
        iterations: rep.iterations(),
        residual: rep.final_residual(),
        x: &rep.x,
    }
}

/// Reads either an equation (`n`, `a`, `B`) or rate matrices (`D0`, `D1_diag`, ...).
pub fn load_instance(path: &Path) -> Result<(Qve, Vec<model::Diagnostic>)> {
    let text = fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    if value.get("D0").is_some() {
        let m: MbtRates = serde_json::from_value(value)?;
        from_rates_with_notes(&m)
    } else {
        Ok((serde_json::from_value(value)?, Vec::new()))
    }
}

fn emit<W: Write, T: Serialize>(out: &mut W, digits: Option<usize>, v: &T) -> Result<()> {
    let mut value = serde_json::to_value(v)?;
    if let Some(d) = digits {
        round_numbers(&mut value, d.max(1));
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

fn round_numbers(v: &mut Value, digits: usize) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let rounded: f64 = format!("{x:.*e}", digits - 1).parse().expect("formatted float");
            if let Some(r) = serde_json::Number::from_f64(rounded) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| round_numbers(x, digits)),
        Value::Object(map) => map.values_mut().for_each(|x| round_numbers(x, digits)),
        _ => {}
    }
}
