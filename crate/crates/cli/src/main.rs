use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use qconnect_cli::{cmd_check, cmd_connect, cmd_identities, cmd_monodromy, cmd_solve, At, CliError, Options, Report, SystemFile};

#[derive(Parser, Debug)]
#[command(name = "qconnect", version, about = "Connection and confluence of fuchsian q-difference systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AtArg {
    Zero,
    Infinity,
}

#[derive(clap::Args, Debug, Default)]
struct Common {
    /// System file (JSON).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Complex number as RE,IM.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    tau0: Option<Complex64>,
    /// Also write the machine-readable report to this file (`-` for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuchsian and resonance analysis, singular set.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Canonical solution at 0 or infinity.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "zero")]
        at: AtArg,
        /// Evaluation points, each RE,IM. A point with a leading minus needs `--eval=-RE,IM`.
        #[arg(long, num_args = 1.., value_parser = parse_complex)]
        eval: Vec<Complex64>,
    },
    /// Connection matrix samples, ellipticity and triplet code.
    Connect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Confluence pipeline and monodromy.
    Monodromy {
        #[command(flatten)]
        common: Common,
        /// Ladder E1,E2,... (strictly decreasing).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        tol: Option<f64>,
        /// Cross-check with the differential-equation oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Special-function identity battery and scalar limits.
    Identities {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected RE,IM, got {s:?}")),
    }
}

fn load(common: &Common) -> Result<SystemFile, CliError> {
    let path = common.input.as_ref().ok_or_else(|| CliError::Parse("--input FILE is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    SystemFile::parse(&text)
}

fn emit(report: &Report, json: Option<&PathBuf>) -> Result<(), CliError> {
    match json {
        Some(p) if p.as_os_str() == "-" => print!("{}", report.to_json()),
        Some(p) => {
            print!("{}", report.render_text());
            std::fs::write(p, report.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
        None => print!("{}", report.render_text()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut opts = Options::default();
    let common = match &cli.command {
        Command::Check { common }
        | Command::Solve { common, .. }
        | Command::Connect { common, .. }
        | Command::Monodromy { common, .. }
        | Command::Identities { common, .. } => common,
    };
    opts.epsilon = common.epsilon;
    opts.tau0 = common.tau0;
    let report = match &cli.command {
        Command::Check { .. } => cmd_check(&load(common)?, &opts)?,
        Command::Solve { at, eval, .. } => {
            opts.at = match at {
                AtArg::Zero => At::Zero,
                AtArg::Infinity => At::Infinity,
            };
            opts.eval = eval.clone();
            cmd_solve(&load(common)?, &opts)?
        }
        Command::Connect { samples, .. } => {
            opts.samples = *samples;
            cmd_connect(&load(common)?, &opts)?
        }
        Command::Monodromy { epsilons, tol, oracle, .. } => {
            opts.epsilons = epsilons.clone();
            opts.tol = *tol;
            opts.oracle = *oracle;
            cmd_monodromy(&load(common)?, &opts)?
        }
        Command::Identities { seed, .. } => {
            opts.seed = *seed;
            cmd_identities(&opts)?
        }
    };
    emit(&report, common.json.as_ref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qconnect: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
