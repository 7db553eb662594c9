//! `rgbps`: single-image RGB photometric stereo tools.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod commands;
mod errors;

use clap::{Parser, Subcommand};

use errors::CliError;

#[derive(Parser)]
#[command(
    name = "rgbps",
    about = "Single-image RGB photometric stereo with piecewise-constant albedo",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic benchmark instances.
    Synth(commands::synth::SynthArgs),
    /// Render an image from normals, albedo and a lighting rig.
    Render(commands::render::RenderArgs),
    /// Recover a normal map from a single RGB-PS image.
    Reconstruct(commands::reconstruct::ReconstructArgs),
    /// Classical three-light photometric stereo with known albedo.
    BaselinePs(commands::baseline::BaselineArgs),
    /// Integrate a normal map into a depth map.
    Integrate(commands::integrate::IntegrateArgs),
    /// Compare an estimated normal map against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Full synthetic benchmark: generate, reconstruct, aggregate.
    Bench(commands::bench::BenchArgs),
}

fn configure_threads() {
    if let Ok(value) = std::env::var("RGBPS_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n > 0 {
                // Ignore the error if a pool already exists.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() {
    configure_threads();
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Render(args) => commands::render::run(args),
        Command::Reconstruct(args) => commands::reconstruct::run(args),
        Command::BaselinePs(args) => commands::baseline::run(args),
        Command::Integrate(args) => commands::integrate::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Bench(args) => commands::bench::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}
