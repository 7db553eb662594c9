use std::path::PathBuf;

use clap::Args;

use rgbps_core::{render, AlbedoMap};
use rgbps_io::{pfm, rig};

use crate::commands::require_file;
use crate::errors::CliError;

#[derive(Args)]
pub struct RenderArgs {
    /// Normal map (3-channel PFM).
    #[arg(long)]
    pub normals: PathBuf,
    /// Albedo map (3-channel PFM).
    #[arg(long)]
    pub albedo: PathBuf,
    /// Lighting rig file (9 numbers, column-major).
    #[arg(long)]
    pub rig: PathBuf,
    /// Output image path.
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian observation noise std.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: RenderArgs) -> Result<(), CliError> {
    require_file(&args.normals, "normal map")?;
    require_file(&args.albedo, "albedo map")?;
    require_file(&args.rig, "rig file")?;
    let normals = pfm::read_normals::<f64>(&args.normals)?;
    let albedo_rgb = pfm::read_rgb::<f64>(&args.albedo)?;
    let albedo = AlbedoMap::with_mask(
        albedo_rgb.width(),
        albedo_rgb.height(),
        albedo_rgb.data().to_vec(),
        albedo_rgb.mask().to_vec(),
    )?;
    let light_rig = rig::read_rig::<f64>(&args.rig)?;
    let image = render(&normals, &albedo, &light_rig, args.noise_sigma, args.seed)?;
    pfm::write_rgb(&args.out, &image)?;
    Ok(())
}
