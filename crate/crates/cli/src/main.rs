use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conestab::constraint_system::Route;
use conestab::Tol;
use conestab_cli::commands::{self, InputError};
use conestab_cli::report::Report;
use conestab_cli::{repro, seed_from_env};

#[derive(Parser)]
#[command(
    name = "conestab",
    version,
    about = "Stability certificates for conic constraint systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Membership tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    report: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    A,
    B,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Feasibility, multipliers, SRCQ, nondegeneracy, strict complementarity.
    Analyze {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: Option<PathBuf>,
    },
    /// Graphical-derivative membership of a pair (d, w).
    Gderiv {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        pair: PathBuf,
        #[arg(long, value_enum, default_value_t = RouteArg::Both)]
        route: RouteArg,
    },
    /// Reruns a named scenario and compares verdicts with the expected table.
    Repro { name: String },
}

fn run(cli: &Cli) -> Result<(Report, bool), InputError> {
    let mut tol = Tol::default();
    if let Some(t) = cli.tol {
        tol.membership = t;
    }
    tol.validate()?;
    let seed = seed_from_env()?;
    Ok(match &cli.cmd {
        Cmd::Analyze { problem, point } => (
            commands::analyze(problem, point.as_deref(), &tol, seed)?,
            true,
        ),
        Cmd::Gderiv {
            problem,
            pair,
            route,
        } => {
            let route = match route {
                RouteArg::A => Route::A,
                RouteArg::B => Route::B,
                RouteArg::Both => Route::Both,
            };
            (commands::gderiv(problem, pair, route, &tol)?, true)
        }
        Cmd::Repro { name } => {
            let r = repro::run(name, &tol, seed)?;
            let ok = r.all_match();
            (r, ok)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, ok)) => {
            match cli.report {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("verdict mismatch against the expected table");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
