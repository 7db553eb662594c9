use std::path::PathBuf;

use clap::Args;

use rgbps_core::synth::{benchmark_rig, gen_instance, instance_seed};
use rgbps_io::csvout::CsvTable;
use rgbps_io::{pfm, rig};

use crate::commands::{ensure_dir, load_config};
use crate::errors::CliError;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (one subdirectory per instance plus index.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of instances (overrides n_surfaces).
    #[arg(long)]
    pub n: Option<usize>,
    /// Image side in pixels (overrides image_size).
    #[arg(long)]
    pub size: Option<usize>,
    /// Master seed (overrides seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Observation noise std (overrides noise_sigma).
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_ref())?;
    if let Some(n) = args.n {
        config.synth.n_surfaces = n;
    }
    if let Some(s) = args.size {
        config.synth.image_size = s;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(sigma) = args.noise_sigma {
        config.synth.noise_sigma = sigma;
    }
    config.synth.validate()?;

    ensure_dir(&args.out)?;
    let light_rig = benchmark_rig::<f64>();
    let mut index = CsvTable::create(args.out.join("index.csv"), "instance,seed,directory")?;
    for i in 0..config.synth.n_surfaces {
        let seed = instance_seed(config.master_seed, i as u64);
        let inst = gen_instance(&config.synth, &light_rig, seed)?;
        let dir = args.out.join(format!("instance_{i:04}"));
        ensure_dir(&dir)?;
        pfm::write_rgb(dir.join("image.pfm"), &inst.image)?;
        pfm::write_normals(dir.join("gt_normals.pfm"), &inst.normals)?;
        pfm::write_rgb(
            dir.join("gt_albedo.pfm"),
            &rgbps_core::RgbImage::with_mask(
                inst.albedo.width(),
                inst.albedo.height(),
                inst.albedo.data().to_vec(),
                inst.albedo.mask().to_vec(),
            )?,
        )?;
        rig::write_rig(dir.join("rig.txt"), &light_rig)?;
        index.row(&[
            i.to_string(),
            seed.to_string(),
            format!("instance_{i:04}"),
        ])?;
    }
    index.finish()?;
    eprintln!(
        "wrote {} instances to {}",
        config.synth.n_surfaces,
        args.out.display()
    );
    Ok(())
}
