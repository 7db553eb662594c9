//! Flat `key = value` configuration files.
//!
//! One file carries reconstruction, synthesis, and preprocessing settings;
//! `#` starts a comment; unknown keys are rejected. Key names follow the
//! conventional symbols where one exists (`h_max`, `gamma`, `k`, `tau_max`,
//! `lambda_*`); the full table lives in the README.

use std::path::Path;

use rgbps_core::pipeline::PipelineConfig;
use rgbps_core::solver::SelectionRule;
use rgbps_core::synth::SynthConfig;

use crate::error::{IoError, Result};

/// Default object-mask threshold relative to the maximum luminance.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.02;

/// Everything a pipeline run can configure from a file.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub pipeline: PipelineConfig<f64>,
    pub synth: SynthConfig<f64>,
    pub mask_threshold: f64,
    pub master_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            synth: SynthConfig::default(),
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            master_seed: 0,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| IoError::config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| IoError::config(format!("{key}: expected a count, got {value:?}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| IoError::config(format!("{key}: expected an integer, got {value:?}")))
}

impl RunConfig {
    /// Apply one key/value pair; unknown keys are an error.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            // Patch model
            "patch_side" => self.pipeline.patch_side = parse_usize(key, value)?,
            "degree" => self.pipeline.degree = parse_usize(key, value)?,
            // Albedo grid
            "chroma_elev_bins" => self.pipeline.chroma_elev_bins = parse_usize(key, value)?,
            "chroma_azim_bins" => self.pipeline.chroma_azim_bins = parse_usize(key, value)?,
            "lum_bins" => self.pipeline.lum_bins = parse_usize(key, value)?,
            "tau_max" => self.pipeline.luminance_max = parse_f64(key, value)?,
            // Local inference
            "k" => self.pipeline.albedo_set_size = parse_usize(key, value)?,
            "h_max" => self.pipeline.score_clip = parse_f64(key, value)?,
            "eps_tau" => self.pipeline.inversion.eps_luminance = parse_f64(key, value)?,
            // Global solver
            "gamma" => self.pipeline.solver.gamma = parse_f64(key, value)?,
            "lambda_init" => self.pipeline.solver.lambda_init = parse_f64(key, value)?,
            "lambda_factor" => self.pipeline.solver.lambda_factor = parse_f64(key, value)?,
            "lambda_final" => self.pipeline.solver.lambda_final = parse_f64(key, value)?,
            "iterations" => self.pipeline.solver.iterations = parse_usize(key, value)?,
            "early_stop_rel" => {
                self.pipeline.solver.early_stop_rel = Some(parse_f64(key, value)?)
            }
            "selection" => {
                self.pipeline.solver.selection = match value {
                    "full" => SelectionRule::FullObjective,
                    "score" => SelectionRule::ScoreOnly,
                    other => {
                        return Err(IoError::config(format!(
                            "selection: expected full|score, got {other:?}"
                        )))
                    }
                }
            }
            // Synthesis
            "image_size" => self.synth.image_size = parse_usize(key, value)?,
            "coarse_size" => self.synth.coarse_size = parse_usize(key, value)?,
            "noise_sigma" => self.synth.noise_sigma = parse_f64(key, value)?,
            "amplitude" => self.synth.perturbation_amplitude = parse_f64(key, value)?,
            "tilt_max_deg" => self.synth.tilt_max_deg = parse_f64(key, value)?,
            "n_surfaces" => self.synth.n_surfaces = parse_usize(key, value)?,
            "albedo_min" => self.synth.albedo_min = parse_f64(key, value)?,
            "albedo_max" => self.synth.albedo_max = parse_f64(key, value)?,
            // Preprocessing / runs
            "mask_threshold" => self.mask_threshold = parse_f64(key, value)?,
            "seed" => self.master_seed = parse_u64(key, value)?,
            other => {
                return Err(IoError::config(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IoError::config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            config.apply(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.synth.validate()?;
        if !(self.mask_threshold >= 0.0 && self.mask_threshold < 1.0) {
            return Err(IoError::config("mask_threshold must be in [0, 1)"));
        }
        Ok(())
    }
}
