use std::path::PathBuf;

use clap::Args;

use rgbps_core::integrate::integrate_normals;
use rgbps_io::pfm;

use crate::commands::require_file;
use crate::errors::CliError;

#[derive(Args)]
pub struct IntegrateArgs {
    /// Normal map (3-channel PFM; zero vectors are masked out).
    #[arg(long)]
    pub normals: PathBuf,
    /// Output depth map (1-channel PFM, zero-mean per component).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: IntegrateArgs) -> Result<(), CliError> {
    require_file(&args.normals, "normal map")?;
    let normals = pfm::read_normals::<f64>(&args.normals)?;
    let result = integrate_normals(&normals)?;
    pfm::write_gray(&args.out, &result.depth)?;
    eprintln!(
        "integrated depth: edge residual rms {:.3e} ({} cg iterations)",
        result.residual_rms, result.cg_iterations
    );
    Ok(())
}
