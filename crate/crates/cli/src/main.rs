mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ValidationError;
use output::Output;

/// Discrete void-lattice energies and their continuum limits.
#[derive(Parser, Debug)]
#[command(name = "voidlattice", version, about)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Elastic energy of a void set and displacement.
    Energy(commands::EnergyArgs),
    /// Discrete perimeter against the anisotropic perimeter of the cubes.
    Perimeter(commands::PerimeterArgs),
    /// Curvature energy and the count of non-flat sites.
    Curvature(commands::CurvatureArgs),
    /// Good/bad classification of the η-cubes.
    Flatness(commands::FlatnessArgs),
    /// η-scale replacement with its perimeter check.
    Replace(commands::ReplaceArgs),
    /// Smooth set built from the cubes of a void set.
    Smooth(commands::SmoothArgs),
    /// Minimizes the elastic energy under an affine boundary condition.
    Minimize(commands::MinimizeArgs),
    /// Limsup experiment along a scaling regime.
    Gamma(commands::GammaArgs),
    /// Checks the EAM curvature identity and neighbourhood lemma.
    #[command(name = "eam-check")]
    EamCheck(commands::EamArgs),
    /// Prints a scaling regime with its monitored quantities.
    Regime(commands::RegimeArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out = Output::new(&cli.out, cli.quiet)?;
    match &cli.command {
        Command::Energy(a) => commands::energy(a, &out),
        Command::Perimeter(a) => commands::perimeter(a, &out),
        Command::Curvature(a) => commands::curvature(a, &out),
        Command::Flatness(a) => commands::flatness(a, &out),
        Command::Replace(a) => commands::replace(a, &out),
        Command::Smooth(a) => commands::smooth(a, &out),
        Command::Minimize(a) => commands::minimize(a, &out),
        Command::Gamma(a) => commands::gamma(a, &out),
        Command::EamCheck(a) => commands::eam_check(a, &out),
        Command::Regime(a) => commands::regime(a, &out),
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ValidationError>().is_some()
            || c.downcast_ref::<voidlattice::Error>().is_some_and(|v| v.is_validation())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
