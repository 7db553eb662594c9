use std::path::PathBuf;

use clap::Args;

use rgbps_core::pipeline::{reconstruct, ReconstructOptions};
use rgbps_io::csvout::{self, CsvTable};
use rgbps_io::preprocess::{preprocess_real, RealInput};
use rgbps_io::{pfm, pngout, rig};

use crate::commands::{ensure_dir, load_config, require_file};
use crate::errors::CliError;

#[derive(Args)]
pub struct ReconstructArgs {
    /// Input image: 3-channel PFM, or 1-channel RGGB mosaic with --bayer.
    #[arg(long)]
    pub image: PathBuf,
    /// Lighting rig file.
    #[arg(long)]
    pub rig: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Histogram vote clip override (1e-4 synthetic, 1e-2 real captures).
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Albedo set size override.
    #[arg(long)]
    pub k: Option<usize>,
    /// Input is a raw RGGB Bayer mosaic: blur, aggregate 2x2 blocks, mask
    /// and white-balance before reconstruction.
    #[arg(long, conflicts_with = "no_demosaic")]
    pub bayer: bool,
    /// Input is already RGB but still needs masking and white balance.
    #[arg(long)]
    pub no_demosaic: bool,
    /// Object mask threshold relative to max luminance.
    #[arg(long)]
    pub mask_threshold: Option<f64>,
    /// Additionally write the albedo histogram as CSV.
    #[arg(long)]
    pub dump_histogram: bool,
    /// Additionally write the per-iteration objective log.
    #[arg(long)]
    pub trace_objective: bool,
}

pub fn run(args: ReconstructArgs) -> Result<(), CliError> {
    require_file(&args.image, "image")?;
    require_file(&args.rig, "rig file")?;
    let mut config = load_config(args.config.as_ref())?;
    if let Some(h) = args.h_max {
        config.pipeline.score_clip = h;
    }
    if let Some(k) = args.k {
        config.pipeline.albedo_set_size = k;
    }
    if let Some(t) = args.mask_threshold {
        config.mask_threshold = t;
    }
    config.validate()?;
    ensure_dir(&args.out)?;

    let light_rig = rig::read_rig::<f64>(&args.rig)?;
    let (image, gains) = if args.bayer {
        let mosaic = pfm::read_gray::<f64>(&args.image)?;
        let pre = preprocess_real(RealInput::BayerRggb(&mosaic), config.mask_threshold)?;
        (pre.image, Some(pre.gains))
    } else if args.no_demosaic {
        let raw = pfm::read_rgb::<f64>(&args.image)?;
        let pre = preprocess_real(RealInput::Rgb(&raw), config.mask_threshold)?;
        (pre.image, Some(pre.gains))
    } else {
        (pfm::read_rgb::<f64>(&args.image)?, None)
    };

    let options = ReconstructOptions {
        keep_histogram: args.dump_histogram,
        trace_objective: args.trace_objective,
    };
    let rec = reconstruct(&image, &light_rig, &config.pipeline, options)?;

    pfm::write_normals(args.out.join("normals.pfm"), &rec.normals)?;
    pngout::write_normals_png(args.out.join("normals_vis.png"), &rec.normals)?;
    pngout::write_gray_png(args.out.join("outliers.png"), &rec.outlier_fraction)?;
    csvout::write_albedo_set(args.out.join("albedos.csv"), &rec.albedo_set)?;
    if let Some(gains) = gains {
        let mut t = CsvTable::create(args.out.join("gains.csv"), "channel,gain")?;
        for (name, g) in ["r", "g", "b"].iter().zip(gains.iter()) {
            t.row(&[name.to_string(), format!("{g}")])?;
        }
        t.finish()?;
    }
    if let Some(hist) = &rec.histogram {
        csvout::write_histogram(args.out.join("histogram.csv"), hist)?;
    }
    if args.trace_objective {
        csvout::write_trace(args.out.join("objective.csv"), &rec.trace)?;
    }
    eprintln!(
        "reconstructed {}x{}: {} albedo candidates, {}/{} outlier patches",
        rec.normals.width(),
        rec.normals.height(),
        rec.albedo_set.len(),
        rec.outlier_count,
        rec.n_patches
    );
    Ok(())
}
