//! Single-image RGB photometric stereo with spatially-varying piecewise
//! constant albedo.
//!
//! A scene is lit by three directional monochromatic lights, one per color
//! channel, so a single RGB image multiplexes three shading measurements per
//! pixel. This crate provides the Lambertian forward model, patch-based
//! local shape inference under a discretized albedo space, global albedo-set
//! discovery, a consensus solver that harmonizes overlapping patch estimates
//! into one normal map, plus synthetic benchmark generation, evaluation
//! metrics, a classical three-light baseline, and normal integration.
//!
//! All numeric code is generic over the scalar type ([`Scalar`]: `f32` or
//! `f64`); concrete aliases for the common instantiations live at the crate
//! root.

pub mod albedo;
pub mod basis;
pub mod error;
pub mod eval;
pub mod field;
pub mod integrate;
pub mod lighting;
pub mod local;
pub mod num;
pub mod patches;
pub mod pipeline;
pub mod render;
pub mod solver;
pub mod synth;

pub use albedo::{AlbedoCandidate, AlbedoGrid};
pub use basis::{build_basis, BasisMatrix, PatchGeometry, ShapeCoefficients};
pub use error::{Error, Result};
pub use eval::{angular_error, classical_ps, ClassicalPsOutput, ErrorReport};
pub use field::{AlbedoMap, GradientField, NormalField, RgbImage, ScalarField};
pub use integrate::{integrate_gradients, integrate_normals, IntegrationResult};
pub use lighting::LightingRig;
pub use local::{
    build_histogram, compute_histogram, degeneracy_rank, fit_patches, invert_pixels,
    local_distributions, select_albedo_set, AlbedoHistogram, DiscoveryParams, GlobalAlbedoSet,
    InversionParams, LocalDistributions, PixelInversion,
};
pub use num::Scalar;
pub use patches::PatchGrid;
pub use pipeline::{reconstruct, PipelineConfig, Reconstruction, ReconstructOptions};
pub use render::{gradients_to_normals, normals_to_gradients, render};
pub use solver::{solve, SelectionRule, SolveOutput, SolverConfig, TraceRow};
pub use synth::{benchmark_rig, gen_albedo, gen_instance, gen_surface, SynthConfig, SynthInstance};

/// `f32` instantiations.
pub type RgbImage32 = RgbImage<f32>;
pub type NormalField32 = NormalField<f32>;
pub type GradientField32 = GradientField<f32>;
pub type AlbedoMap32 = AlbedoMap<f32>;
pub type ScalarField32 = ScalarField<f32>;
pub type LightingRig32 = LightingRig<f32>;

/// `f64` instantiations (used by the CLI).
pub type RgbImage64 = RgbImage<f64>;
pub type NormalField64 = NormalField<f64>;
pub type GradientField64 = GradientField<f64>;
pub type AlbedoMap64 = AlbedoMap<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type LightingRig64 = LightingRig<f64>;
