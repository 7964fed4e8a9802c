use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dosr_cli::commands::{check_path, oracle_report, run, sweep_eps, synthesize_report, SWEEP_TOLERANCE};
use dosr_cli::output::write_json;
use dosr_cli::scenario::{load_scenario, parse_poles, prepare, Overrides};
use dosr_cli::{CliError, CliResult};
use dosr_core::numerics::Complex64;

/// Distributed optimal steady-state regulation: synthesis, simulation and
/// checks for scenario files.
#[derive(Parser)]
#[command(name = "dosr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise, integrate and evaluate; writes CSV and a metrics file.
    Simulate {
        /// Scenario file, or the name of a bundled one (example1..example3).
        scenario: PathBuf,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Run even if an assumption check fails.
        #[arg(long)]
        force: bool,
        /// Concurrent parameter sweep, e.g. `eps=1,0.5,0.2,0.1`.
        #[arg(long, value_name = "PARAM=V1,V2,..")]
        sweep: Option<String>,
    },
    /// Print gains, regulator solutions, residuals and loop abscissas as JSON.
    Synthesize {
        scenario: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Report each standing assumption as PASS or FAIL.
    Check { scenario: PathBuf },
    /// Solve the allocation problem directly.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    tend: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for the random initial outputs.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    decimate: Option<usize>,
    /// Comma-separated poles, complex as `-1+2i`.
    #[arg(long, value_parser = poles_arg, allow_hyphen_values = true)]
    poles_k1: Option<PoleList>,
    #[arg(long, value_parser = poles_arg, allow_hyphen_values = true)]
    poles_lbar: Option<PoleList>,
    #[arg(long, value_parser = poles_arg, allow_hyphen_values = true)]
    poles_lhat: Option<PoleList>,
}

/// One `--poles-*` value; a newtype so clap reads it as a single argument.
#[derive(Clone)]
struct PoleList(Vec<Complex64>);

fn poles_arg(s: &str) -> Result<PoleList, String> {
    parse_poles(s).map(PoleList)
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            t_end: a.tend,
            dt: a.dt,
            seed: a.seed,
            eps: a.eps,
            decimate: a.decimate,
            poles_k1: a.poles_k1.map(|p| p.0),
            poles_lbar: a.poles_lbar.map(|p| p.0),
            poles_lhat: a.poles_lhat.map(|p| p.0),
        }
    }
}

fn parse_sweep(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Config(format!("--sweep expects eps=V1,V2,.., got '{spec}'"));
    let (param, values) = spec.split_once('=').ok_or_else(bad)?;
    if param.trim() != "eps" {
        return Err(CliError::Config(format!("only eps can be swept, got '{param}'")));
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn execute(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Simulate {
            scenario,
            out_dir,
            overrides,
            force,
            sweep,
        } => {
            let overrides: Overrides = overrides.into();
            if let Some(spec) = sweep {
                let values = parse_sweep(&spec)?;
                for e in sweep_eps(&scenario, &overrides, &values, &out_dir, force)? {
                    match &e.outcome {
                        Ok(o) => println!(
                            "eps = {:<6} dt = {:.1e}  worst gap {:.3e}  {}",
                            e.eps,
                            e.dt,
                            o.worst_gap,
                            if e.converged(SWEEP_TOLERANCE) {
                                "converged"
                            } else {
                                "not converged"
                            }
                        ),
                        Err(err) => println!("eps = {:<6} dt = {:.1e}  {err}", e.eps, e.dt),
                    }
                }
                return Ok(0);
            }
            let prep = prepare(&load_scenario(&scenario)?, &overrides)?;
            let stem = prep.name.clone();
            let outcome = run(&prep, &out_dir, &stem, force)?;
            for p in &outcome.csv {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", outcome.metrics_path.display());
            println!("worst optimality gap {:.3e}", outcome.worst_gap);
            Ok(0)
        }
        Command::Synthesize {
            scenario,
            out,
            overrides,
        } => {
            let prep = prepare(&load_scenario(&scenario)?, &overrides.into())?;
            let report = synthesize_report(&prep)?;
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("report serialises")),
            }
            Ok(0)
        }
        Command::Check { scenario } => {
            let report = match check_path(&scenario) {
                Ok(r) => r,
                Err(CliError::Assumption(msg)) => {
                    println!("FAIL  {msg}");
                    return Ok(3);
                }
                Err(e) => return Err(e),
            };
            print!("{report}");
            Ok(if report.passed() { 0 } else { 3 })
        }
        Command::Oracle { scenario, seed } => {
            let prep = prepare(
                &load_scenario(&scenario)?,
                &Overrides {
                    seed,
                    ..Overrides::default()
                },
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&oracle_report(&prep)?).expect("report serialises")
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
