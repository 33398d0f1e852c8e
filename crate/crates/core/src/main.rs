use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ellipflow::cli::{self, Outcome, VerifyOptions};
use ellipflow::config::load_config;
use ellipflow::timestepper::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "ellipflow",
    version,
    about = "Galerkin flow solver for precessing ellipsoids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the admissible basis and check it.
    Basis(ConfigArg),
    /// Viscous kernels and the discrete Korn constant.
    Eig(ConfigArg),
    /// Steady residuals of the Poincaré flow family.
    Steady(ConfigArg),
    /// Time integration with CSV diagnostics.
    Run(ConfigArg),
    /// Invariant battery on sphere, spheroid and triaxial domains.
    Verify {
        /// Also check the fields stored in this basis file.
        #[arg(long)]
        basis_file: Option<PathBuf>,
        /// Add this value to one advection tensor entry (negative control).
        #[arg(long)]
        perturb_advection: Option<f64>,
    },
}

type Handler = fn(&ScenarioConfig, &mut dyn Write) -> io::Result<Outcome>;

fn with_config(arg: &ConfigArg, out: &mut dyn Write, f: Handler) -> io::Result<Outcome> {
    match load_config(&arg.config) {
        Ok(cfg) => f(&cfg, out),
        Err(e) => cli::report_config_error(&e, out),
    }
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &args.command {
        Command::Basis(c) => with_config(c, &mut out, cli::cmd_basis),
        Command::Eig(c) => with_config(c, &mut out, cli::cmd_eig),
        Command::Steady(c) => with_config(c, &mut out, cli::cmd_steady),
        Command::Run(c) => with_config(c, &mut out, cli::cmd_run),
        Command::Verify {
            basis_file,
            perturb_advection,
        } => cli::cmd_verify(
            &VerifyOptions {
                basis_file: basis_file.clone(),
                advection_perturbation: *perturb_advection,
            },
            &mut out,
        ),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("io error: {e}");
            ExitCode::from(1)
        }
    }
}
