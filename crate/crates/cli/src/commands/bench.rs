use std::path::PathBuf;

use clap::Args;

use rgbps_core::eval::{angular_error, median_of, CDF_STEP_DEG};
use rgbps_core::pipeline::{reconstruct, ReconstructOptions};
use rgbps_core::synth::{benchmark_rig, gen_instance, instance_seed};
use rgbps_core::ScalarField;
use rgbps_io::csvout::{write_cdf, CsvTable};
use rgbps_io::pfm;

use crate::commands::{ensure_dir, load_config};
use crate::errors::CliError;

#[derive(Args)]
pub struct BenchArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of instances (overrides n_surfaces).
    #[arg(long)]
    pub n: Option<usize>,
    /// Image side in pixels (overrides image_size).
    #[arg(long)]
    pub size: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Histogram vote clip override.
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Keep per-instance outputs (normals and error maps).
    #[arg(long)]
    pub keep_instances: bool,
}

pub fn run(args: BenchArgs) -> Result<(), CliError> {
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
    if let Some(h) = args.h_max {
        config.pipeline.score_clip = h;
    }
    config.validate()?;
    ensure_dir(&args.out)?;

    let light_rig = benchmark_rig::<f64>();
    let n_instances = config.synth.n_surfaces;
    let mut report = CsvTable::create(
        args.out.join("report.csv"),
        "instance,seed,pixels,median_deg,mean_deg,p95_deg,outlier_patches",
    )?;
    let mut pooled: Vec<f64> = Vec::new();
    let mut error_maps: Vec<ScalarField<f64>> = Vec::new();
    let mut failures: Vec<(usize, String)> = Vec::new();

    for i in 0..n_instances {
        let seed = instance_seed(config.master_seed, i as u64);
        let outcome = (|| -> Result<(), CliError> {
            let inst = gen_instance(&config.synth, &light_rig, seed)?;
            let rec = reconstruct(
                &inst.image,
                &light_rig,
                &config.pipeline,
                ReconstructOptions::default(),
            )?;
            let r = angular_error(&rec.normals, &inst.normals)?;
            report.row(&[
                i.to_string(),
                seed.to_string(),
                r.pixels.to_string(),
                format!("{}", r.median_deg),
                format!("{}", r.mean_deg),
                format!("{}", r.p95_deg),
                rec.outlier_count.to_string(),
            ])?;
            pooled.extend(r.errors.valid_values());
            if args.keep_instances {
                let dir = args.out.join(format!("instance_{i:04}"));
                ensure_dir(&dir)?;
                pfm::write_normals(dir.join("normals.pfm"), &rec.normals)?;
                pfm::write_normals(dir.join("gt_normals.pfm"), &inst.normals)?;
                pfm::write_gray(dir.join("error_map.pfm"), &r.errors)?;
            }
            error_maps.push(r.errors);
            eprintln!(
                "instance {i}: median {:.3} deg, mean {:.3} deg",
                r.median_deg, r.mean_deg
            );
            Ok(())
        })();
        if let Err(err) = outcome {
            eprintln!("instance {i} failed: {}", err.message);
            failures.push((i, err.message));
        }
    }
    report.finish()?;

    if !failures.is_empty() {
        let mut t = CsvTable::create(args.out.join("failures.csv"), "instance,error")?;
        for (i, msg) in &failures {
            t.row(&[i.to_string(), format!("{:?}", msg)])?;
        }
        t.finish()?;
    }
    if pooled.is_empty() {
        return Err(CliError::runtime("every benchmark instance failed"));
    }

    // Pooled cumulative distribution over all pixels of all instances.
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cdf = Vec::new();
    let mut threshold = 0.0f64;
    let max = *pooled.last().unwrap();
    let mut idx = 0usize;
    loop {
        while idx < pooled.len() && pooled[idx] <= threshold {
            idx += 1;
        }
        cdf.push((threshold, idx as f64 / pooled.len() as f64));
        if threshold > max {
            break;
        }
        threshold += CDF_STEP_DEG;
    }
    write_cdf(args.out.join("cdf.csv"), &cdf)?;

    // Location-wise median across instances (over the mask intersection).
    if let Some(first) = error_maps.first() {
        let (w, h) = (first.width(), first.height());
        let consistent = error_maps.iter().all(|m| m.width() == w && m.height() == h);
        if consistent {
            let mut data = vec![0.0f64; w * h];
            let mut mask = vec![false; w * h];
            let mut stack = Vec::with_capacity(error_maps.len());
            for p in 0..w * h {
                stack.clear();
                if error_maps.iter().all(|m| m.mask()[p]) {
                    stack.extend(error_maps.iter().map(|m| m.data()[p]));
                    data[p] = median_of(&mut stack);
                    mask[p] = true;
                }
            }
            let median_map = ScalarField::new(w, h, data, mask)?;
            pfm::write_gray(args.out.join("median_map.pfm"), &median_map)?;
        }
    }

    let pooled_median = pooled[pooled.len() / 2];
    let mut summary = CsvTable::create(
        args.out.join("summary.csv"),
        "instances,failed,pixels,pooled_median_deg",
    )?;
    summary.row(&[
        n_instances.to_string(),
        failures.len().to_string(),
        pooled.len().to_string(),
        format!("{pooled_median}"),
    ])?;
    summary.finish()?;
    eprintln!(
        "benchmark complete: {} instances, pooled median {:.3} deg",
        n_instances - failures.len(),
        pooled_median
    );
    Ok(())
}
