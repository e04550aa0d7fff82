use std::path::PathBuf;

use bsrd_core::cli_io::{run, Command};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsrd", version, about = "Bulk-surface reaction-diffusion on the disk")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Classify a model against the structural hypotheses.
    Check(Common),
    /// Integrate the coupled system and log monitors.
    Simulate(Common),
    /// Solve the Neumann heat problem with a layer potential.
    Potential(Common),
    /// Run a refinement study and fit an order.
    Converge(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Check(a) => (Command::Check, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Potential(a) => (Command::Potential, a),
        Sub::Converge(a) => (Command::Converge, a),
    };
    let result = run(command, &args.config, args.out.as_deref(), args.seed);
    if result.exit_code == 2 {
        eprintln!("{}", result.summary);
    } else {
        println!("{}", result.summary);
    }
    println!("manifest: {}", result.out_dir.join("manifest.json").display());
    std::process::exit(result.exit_code);
}
