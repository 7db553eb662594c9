use std::path::PathBuf;

use clap::Args;

use rgbps_core::eval::classical_ps;
use rgbps_core::AlbedoMap;
use rgbps_io::{pfm, rig};

use crate::commands::require_file;
use crate::errors::CliError;

#[derive(Args)]
pub struct BaselineArgs {
    /// The three white-light captures (PFM), ordered by rig column.
    #[arg(long, num_args = 3)]
    pub captures: Vec<PathBuf>,
    /// Known albedo map (3-channel PFM).
    #[arg(long)]
    pub albedo: PathBuf,
    /// Lighting rig file.
    #[arg(long)]
    pub rig: PathBuf,
    /// Output normal map path.
    #[arg(long)]
    pub out: PathBuf,
    /// Residual tolerance for flagging unreliable pixels.
    #[arg(long, default_value_t = 0.02)]
    pub residual_tol: f64,
    /// Optional flagged-pixel visualization (PNG).
    #[arg(long)]
    pub flags_png: Option<PathBuf>,
}

pub fn run(args: BaselineArgs) -> Result<(), CliError> {
    if args.captures.len() != 3 {
        return Err(CliError::input("exactly three captures required"));
    }
    for c in &args.captures {
        require_file(c, "capture")?;
    }
    require_file(&args.albedo, "albedo map")?;
    require_file(&args.rig, "rig file")?;

    let caps = [
        pfm::read_rgb::<f64>(&args.captures[0])?,
        pfm::read_rgb::<f64>(&args.captures[1])?,
        pfm::read_rgb::<f64>(&args.captures[2])?,
    ];
    let albedo_rgb = pfm::read_rgb::<f64>(&args.albedo)?;
    let albedo = AlbedoMap::with_mask(
        albedo_rgb.width(),
        albedo_rgb.height(),
        albedo_rgb.data().to_vec(),
        albedo_rgb.mask().to_vec(),
    )?;
    let light_rig = rig::read_rig::<f64>(&args.rig)?;
    let out = classical_ps(&caps, &albedo, &light_rig, args.residual_tol)?;
    pfm::write_normals(&args.out, &out.normals)?;
    if let Some(path) = &args.flags_png {
        let flags = rgbps_core::ScalarField::new(
            out.normals.width(),
            out.normals.height(),
            out.flagged
                .iter()
                .map(|&f| if f { 1.0f64 } else { 0.0 })
                .collect(),
            vec![true; out.flagged.len()],
        )?;
        rgbps_io::pngout::write_gray_png(path, &flags)?;
    }
    let flagged = out.flagged.iter().filter(|&&f| f).count();
    eprintln!("classical baseline: {flagged} flagged pixels");
    Ok(())
}
