use std::path::PathBuf;

use clap::Args;

use rgbps_core::eval::angular_error;
use rgbps_io::{csvout, pfm};

use crate::commands::{ensure_dir, require_file};
use crate::errors::CliError;

#[derive(Args)]
pub struct EvalArgs {
    /// Estimated normal map (PFM).
    #[arg(long)]
    pub estimate: PathBuf,
    /// Ground-truth normal map (PFM).
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory (report.csv, error_map.pfm, cdf.csv).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    require_file(&args.estimate, "estimated normal map")?;
    require_file(&args.truth, "ground-truth normal map")?;
    ensure_dir(&args.out)?;
    let est = pfm::read_normals::<f64>(&args.estimate)?;
    let truth = pfm::read_normals::<f64>(&args.truth)?;
    let report = angular_error(&est, &truth)?;
    csvout::write_report(args.out.join("report.csv"), &report)?;
    csvout::write_cdf(args.out.join("cdf.csv"), &report.cdf)?;
    pfm::write_gray(args.out.join("error_map.pfm"), &report.errors)?;
    eprintln!(
        "angular error over {} pixels: median {:.3} deg, mean {:.3} deg",
        report.pixels, report.median_deg, report.mean_deg
    );
    Ok(())
}
