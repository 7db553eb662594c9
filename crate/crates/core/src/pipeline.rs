//! Full reconstruction pipeline: local inference followed by the global
//! consensus solve, under one hyperparameter bundle.

use crate::albedo::AlbedoGrid;
use crate::basis::{build_basis, PatchGeometry};
use crate::error::{Error, Result};
use crate::field::{NormalField, RgbImage, ScalarField};
use crate::lighting::LightingRig;
use crate::local::{
    compute_histogram, local_distributions, select_albedo_set, AlbedoHistogram, DiscoveryParams,
    GlobalAlbedoSet, InversionParams,
};
use crate::num::{cast, Scalar};
use crate::patches::PatchGrid;
use crate::solver::{solve, SolverConfig, TraceRow};

/// Every pipeline hyperparameter with its benchmark default.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig<T: Scalar> {
    pub patch_side: usize,
    pub degree: usize,
    pub chroma_elev_bins: usize,
    pub chroma_azim_bins: usize,
    pub lum_bins: usize,
    pub luminance_max: T,
    /// Size of the global albedo set.
    pub albedo_set_size: usize,
    /// Histogram vote clip; 1e-4 suits clean synthetic renders, 1e-2 noisy
    /// real captures.
    pub score_clip: T,
    pub inversion: InversionParams<T>,
    pub solver: SolverConfig<T>,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            patch_side: 8,
            degree: 5,
            chroma_elev_bins: 64,
            chroma_azim_bins: 64,
            lum_bins: 100,
            luminance_max: cast(3.0),
            albedo_set_size: 100,
            score_clip: cast(1e-4),
            inversion: InversionParams::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        PatchGeometry::new(self.patch_side, self.degree)?;
        AlbedoGrid::new(
            self.chroma_elev_bins,
            self.chroma_azim_bins,
            self.lum_bins,
            crate::num::to_f64(self.luminance_max),
        )?;
        if self.albedo_set_size == 0 {
            return Err(Error::config("albedo set size must be >= 1"));
        }
        if !(self.score_clip > T::zero()) {
            return Err(Error::config("score_clip must be > 0"));
        }
        self.solver.validate()
    }

    pub fn albedo_grid(&self) -> AlbedoGrid {
        AlbedoGrid {
            n_elev: self.chroma_elev_bins,
            n_azim: self.chroma_azim_bins,
            n_lum: self.lum_bins,
            luminance_max: crate::num::to_f64(self.luminance_max),
        }
    }
}

/// Reconstruction result with per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct Reconstruction<T: Scalar> {
    pub normals: NormalField<T>,
    pub gradients: crate::field::GradientField<T>,
    pub albedo_set: GlobalAlbedoSet<T>,
    /// Kept only when requested through [`ReconstructOptions::keep_histogram`].
    pub histogram: Option<AlbedoHistogram<T>>,
    /// Per-patch outlier flags after the final iteration.
    pub patch_outliers: Vec<bool>,
    pub outlier_count: usize,
    pub n_patches: usize,
    /// Fraction of covering patches marked outlier, per pixel.
    pub outlier_fraction: ScalarField<T>,
    pub trace: Vec<TraceRow<T>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReconstructOptions {
    pub keep_histogram: bool,
    /// Record the objective around every solver iteration.
    pub trace_objective: bool,
}

/// Rasterize per-patch outlier flags into a per-pixel fraction map.
pub fn outlier_fraction_map<T: Scalar>(
    patches: &PatchGrid,
    outliers: &[bool],
) -> ScalarField<T> {
    let n = patches.image_width() * patches.image_height();
    let mut hits = vec![0u32; n];
    let mut total = vec![0u32; n];
    for m in 0..patches.len() {
        let bad = outliers[m];
        for idx in patches.pixel_indices(m) {
            total[idx] += 1;
            if bad {
                hits[idx] += 1;
            }
        }
    }
    let data = hits
        .iter()
        .zip(&total)
        .map(|(&h, &t)| {
            if t > 0 {
                cast::<T>(h as f64 / t as f64)
            } else {
                T::zero()
            }
        })
        .collect();
    let mask = total.iter().map(|&t| t > 0).collect();
    ScalarField::new_unchecked(patches.image_width(), patches.image_height(), data, mask)
}

/// Run the full pipeline on one image.
pub fn reconstruct<T: Scalar>(
    image: &RgbImage<T>,
    rig: &LightingRig<T>,
    config: &PipelineConfig<T>,
    options: ReconstructOptions,
) -> Result<Reconstruction<T>> {
    config.validate()?;
    let geom = PatchGeometry::new(config.patch_side, config.degree)?;
    let basis = build_basis::<T>(geom)?;
    let patches = PatchGrid::build(
        image.width(),
        image.height(),
        image.mask(),
        config.patch_side,
    );
    if patches.is_empty() {
        return Err(Error::EmptyMask {
            context: "no fully masked-in patches",
        });
    }
    let grid = config.albedo_grid();
    let discovery = DiscoveryParams {
        score_clip: config.score_clip,
        inversion: config.inversion,
    };
    let histogram = compute_histogram(image, rig, grid, &patches, &basis, discovery)?;
    let albedo_set = select_albedo_set(&histogram, config.albedo_set_size)?;
    let dists = local_distributions(image, rig, &albedo_set, &patches, &basis, config.inversion)?;
    let mut solver_config = config.solver;
    solver_config.trace = options.trace_objective;
    let out = solve(&dists, &patches, &basis, &solver_config)?;
    let patch_outliers: Vec<bool> = out.selection.iter().map(|&s| s == 0).collect();
    let outlier_fraction = outlier_fraction_map(&patches, &patch_outliers);
    Ok(Reconstruction {
        normals: out.normals,
        gradients: out.gradients,
        albedo_set,
        histogram: options.keep_histogram.then_some(histogram),
        patch_outliers,
        outlier_count: out.outlier_count,
        n_patches: patches.len(),
        outlier_fraction,
        trace: out.trace,
    })
}
