//! Synthetic benchmark instances: piecewise-constant albedo over four
//! triangles, random smooth surfaces, and noisy renders.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{AlbedoMap, GradientField, NormalField, RgbImage, ScalarField};
use crate::lighting::LightingRig;
use crate::num::{cast, Scalar};
use crate::render::{gradient_to_normal, render};

/// Zenith angle of the three benchmark lights, degrees.
const RIG_ZENITH_DEG: f64 = 35.0;
/// Azimuths of the three benchmark lights, degrees.
const RIG_AZIMUTH_DEG: [f64; 3] = [90.0, 210.0, 330.0];

/// The fixed lighting rig used for synthetic benchmarks: three unit-intensity
/// lights at 35 degrees zenith, azimuths 120 degrees apart.
pub fn benchmark_rig<T: Scalar>() -> LightingRig<T> {
    let zen = RIG_ZENITH_DEG.to_radians();
    let mut cols = [Vector3::zeros(); 3];
    for (i, az_deg) in RIG_AZIMUTH_DEG.iter().enumerate() {
        let az = az_deg.to_radians();
        cols[i] = Vector3::new(
            cast::<T>(zen.sin() * az.cos()),
            cast::<T>(zen.sin() * az.sin()),
            cast::<T>(zen.cos()),
        );
    }
    LightingRig::from_lights(cols[0], cols[1], cols[2]).expect("benchmark rig is invertible")
}

/// Configuration for synthetic instance generation.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig<T: Scalar> {
    pub image_size: usize,
    /// Side of the coarse Gaussian field that is upsampled to `image_size`.
    pub coarse_size: usize,
    /// Observation noise std in linear intensity.
    pub noise_sigma: T,
    /// Coarse-field std in units of one coarse cell width. Depth scales with
    /// resolution so surface slopes are resolution independent; the default
    /// is calibrated for a median gradient magnitude near 0.3.
    pub perturbation_amplitude: T,
    /// Maximum base-plane tilt from the view axis, degrees.
    pub tilt_max_deg: T,
    /// Number of instances a benchmark run generates.
    pub n_surfaces: usize,
    /// Per-channel albedo range.
    pub albedo_min: T,
    pub albedo_max: T,
}

/// Default coarse-field amplitude; see `SynthConfig::perturbation_amplitude`.
pub const DEFAULT_AMPLITUDE: f64 = 0.47;

impl<T: Scalar> Default for SynthConfig<T> {
    fn default() -> Self {
        Self {
            image_size: 256,
            coarse_size: 16,
            noise_sigma: cast(0.001),
            perturbation_amplitude: cast(DEFAULT_AMPLITUDE),
            tilt_max_deg: cast(25.0),
            n_surfaces: 1000,
            albedo_min: cast(0.2),
            albedo_max: cast(1.0),
        }
    }
}

impl<T: Scalar> SynthConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 2 || self.coarse_size < 2 {
            return Err(Error::config("image and coarse sizes must be >= 2"));
        }
        if self.image_size % self.coarse_size != 0 {
            return Err(Error::config(
                "coarse_size must divide image_size for clean upsampling",
            ));
        }
        if !(self.perturbation_amplitude > T::zero()) {
            return Err(Error::config("perturbation amplitude must be > 0"));
        }
        if !(self.noise_sigma >= T::zero()) {
            return Err(Error::config("noise sigma must be >= 0"));
        }
        if !(self.albedo_min > T::zero() && self.albedo_max >= self.albedo_min) {
            return Err(Error::config("albedo range must satisfy 0 < min <= max"));
        }
        if !(self.tilt_max_deg >= T::zero() && self.tilt_max_deg < cast(90.0)) {
            return Err(Error::config("tilt range must be in [0, 90) degrees"));
        }
        Ok(())
    }
}

/// Derive the per-instance seed from a master seed (stream separation for
/// parallel instance generation).
pub fn instance_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 over the combined words.
    let mut z = master_seed
        .wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_ALBEDO: u64 = 0;
const STREAM_SURFACE: u64 = 1;
const STREAM_NOISE: u64 = 2;
/// Streams 3..6 are reserved for the three white-light captures.
pub const STREAM_CAPTURE_BASE: u64 = 3;

/// The four triangular regions cut by the two image diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Top = 0,
    Right = 1,
    Bottom = 2,
    Left = 3,
}

/// Region of a pixel. Pixels exactly on a diagonal go to the upper region,
/// then to the left one.
pub fn triangle_region(x: usize, y: usize, width: usize, height: usize) -> Region {
    let u = (x as f64 + 0.5) / width as f64;
    let v = (y as f64 + 0.5) / height as f64;
    let du = v - u; // positive below the main diagonal
    let dv = u + v - 1.0; // positive below the anti-diagonal
    if du <= 0.0 && dv <= 0.0 {
        Region::Top
    } else if du >= 0.0 && dv <= 0.0 {
        Region::Left
    } else if du <= 0.0 && dv >= 0.0 {
        Region::Right
    } else {
        Region::Bottom
    }
}

/// Piecewise-constant albedo: four triangles cut by the image diagonals, one
/// random albedo vector per triangle, channels uniform in the configured
/// range.
pub fn gen_albedo<T: Scalar>(size: usize, seed: u64, lo: T, hi: T) -> Result<AlbedoMap<T>> {
    if size < 2 {
        return Err(Error::config("albedo size must be >= 2"));
    }
    let mut rng = stream_rng(seed, STREAM_ALBEDO);
    let span = hi - lo;
    let mut region_albedo = [Vector3::zeros(); 4];
    for region in region_albedo.iter_mut() {
        for c in 0..3 {
            let u: f64 = rng.random();
            region[c] = lo + span * cast::<T>(u);
        }
    }
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            data.push(region_albedo[triangle_region(x, y, size, size) as usize]);
        }
    }
    AlbedoMap::new(size, size, data)
}

/// A generated surface: depth plus its analytic gradients and normals.
#[derive(Debug, Clone)]
pub struct Surface<T: Scalar> {
    pub depth: ScalarField<T>,
    pub gradients: GradientField<T>,
    pub normals: NormalField<T>,
}

/// Uniform cubic B-spline weights and derivatives at fraction `f`.
fn bspline_weights(f: f64) -> ([f64; 4], [f64; 4]) {
    let f2 = f * f;
    let f3 = f2 * f;
    let w = [
        (1.0 - f).powi(3) / 6.0,
        (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
        (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
        f3 / 6.0,
    ];
    let d = [
        -(1.0 - f) * (1.0 - f) / 2.0,
        (3.0 * f2 - 4.0 * f) / 2.0,
        (-3.0 * f2 + 2.0 * f + 1.0) / 2.0,
        f2 / 2.0,
    ];
    (w, d)
}

/// Random smooth surface: a tilted base plane (resampled until it is lit by
/// every benchmark light with margin) plus a coarse Gaussian field smoothly
/// upsampled with a cubic B-spline. Gradients come from the analytic
/// derivative of the interpolant, not finite differences.
pub fn gen_surface<T: Scalar>(
    config: &SynthConfig<T>,
    rig: &LightingRig<T>,
    seed: u64,
) -> Result<Surface<T>> {
    config.validate()?;
    let mut rng = stream_rng(seed, STREAM_SURFACE);
    let size = config.image_size;
    let coarse = config.coarse_size;

    // Base plane: tilt uniform in [0, tilt_max], azimuth uniform. Reject
    // planes that are shadowed (or nearly so) under any light.
    let tilt_max = crate::num::to_f64(config.tilt_max_deg).to_radians();
    let mut plane_grad = Vector2::<T>::zeros();
    let mut accepted = false;
    for _ in 0..1000 {
        let tilt = tilt_max * rng.random::<f64>();
        let azim = std::f64::consts::TAU * rng.random::<f64>();
        let normal = Vector3::new(
            cast::<T>(tilt.sin() * azim.cos()),
            cast::<T>(tilt.sin() * azim.sin()),
            cast::<T>(tilt.cos()),
        );
        let shading = rig.shading(&normal);
        if shading.min() > cast(0.1) {
            plane_grad = Vector2::new(normal.x / normal.z, normal.y / normal.z);
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::RejectionLimit { attempts: 1000 });
    }

    // Coarse i.i.d. Gaussian field, row-major.
    let mut field = vec![0.0f64; coarse * coarse];
    for v in field.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }

    let cell = size as f64 / coarse as f64; // fine pixels per coarse cell
    let depth_scale = crate::num::to_f64(config.perturbation_amplitude) * cell;
    let half = size as f64 / 2.0;
    let clamp_idx = |i: i64| -> usize { i.clamp(0, coarse as i64 - 1) as usize };

    let n = size * size;
    let mut depth = vec![T::zero(); n];
    let mut grads = vec![Vector2::zeros(); n];
    let mut normals = vec![Vector3::zeros(); n];
    for y in 0..size {
        let vy = (y as f64 + 0.5) / cell - 0.5;
        let jy = vy.floor();
        let (wy, dy) = bspline_weights(vy - jy);
        for x in 0..size {
            let ux = (x as f64 + 0.5) / cell - 0.5;
            let jx = ux.floor();
            let (wx, dx) = bspline_weights(ux - jx);

            let mut z = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for (b, (&wyb, &dyb)) in wy.iter().zip(&dy).enumerate() {
                let row = clamp_idx(jy as i64 + b as i64 - 1) * coarse;
                for (a, (&wxa, &dxa)) in wx.iter().zip(&dx).enumerate() {
                    let g = field[row + clamp_idx(jx as i64 + a as i64 - 1)];
                    z += g * wxa * wyb;
                    gx += g * dxa * wyb;
                    gy += g * wxa * dyb;
                }
            }
            // d/dpixel = d/dcoarse * (1/cell); depth carries a factor cell,
            // so pixel-space slopes scale with the amplitude alone.
            let idx = y * size + x;
            let px = x as f64 + 0.5 - half;
            let py = y as f64 + 0.5 - half;
            depth[idx] = plane_grad.x * cast::<T>(px)
                + plane_grad.y * cast::<T>(py)
                + cast::<T>(depth_scale * z);
            let g = Vector2::new(
                plane_grad.x + cast::<T>(depth_scale * gx / cell),
                plane_grad.y + cast::<T>(depth_scale * gy / cell),
            );
            grads[idx] = g;
            normals[idx] = gradient_to_normal(&g);
        }
    }

    let mask = vec![true; n];
    Ok(Surface {
        depth: ScalarField::new(size, size, depth, mask.clone())?,
        gradients: GradientField::new(size, size, grads, mask.clone())?,
        normals: NormalField::new(size, size, normals, mask)?,
    })
}

/// One synthetic benchmark instance.
#[derive(Debug, Clone)]
pub struct SynthInstance<T: Scalar> {
    pub seed: u64,
    pub image: RgbImage<T>,
    pub normals: NormalField<T>,
    pub gradients: GradientField<T>,
    pub depth: ScalarField<T>,
    pub albedo: AlbedoMap<T>,
}

/// Generate a full instance: albedo, surface, and a noisy render under the
/// given rig. Bit-deterministic per `(config, rig, seed)`.
pub fn gen_instance<T: Scalar>(
    config: &SynthConfig<T>,
    rig: &LightingRig<T>,
    seed: u64,
) -> Result<SynthInstance<T>> {
    config.validate()?;
    let albedo = gen_albedo(
        config.image_size,
        seed,
        config.albedo_min,
        config.albedo_max,
    )?;
    let surface = gen_surface(config, rig, seed)?;
    let noise_seed = stream_rng(seed, STREAM_NOISE).random::<u64>();
    let image = render(&surface.normals, &albedo, rig, config.noise_sigma, noise_seed)?;
    Ok(SynthInstance {
        seed,
        image,
        normals: surface.normals,
        gradients: surface.gradients,
        depth: surface.depth,
        albedo,
    })
}

/// Render the three white-light captures used by the classical baseline:
/// capture `i` lights the scene with column `i` of the rig only, and all
/// three channels share that shading. Noise is seeded per capture.
pub fn render_white_captures<T: Scalar>(
    normals: &NormalField<T>,
    albedo: &AlbedoMap<T>,
    rig: &LightingRig<T>,
    noise_sigma: T,
    seed: u64,
) -> Result<[RgbImage<T>; 3]> {
    let mut out = Vec::with_capacity(3);
    for i in 0..3 {
        let l = rig.light(i);
        let mask = crate::field::mask_and(normals.mask(), albedo.mask());
        let mut data = Vec::with_capacity(normals.len());
        for p in 0..normals.len() {
            if mask[p] {
                let s = l.dot(&normals.data()[p]).max(T::zero());
                data.push(albedo.data()[p] * s);
            } else {
                data.push(Vector3::zeros());
            }
        }
        if noise_sigma > T::zero() {
            let capture_seed = stream_rng(seed, STREAM_CAPTURE_BASE + i as u64).random::<u64>();
            let mut rng = ChaCha8Rng::seed_from_u64(capture_seed);
            for v in data.iter_mut() {
                for c in 0..3 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    v[c] += noise_sigma * cast::<T>(g);
                }
            }
        }
        out.push(RgbImage::with_mask(
            normals.width(),
            normals.height(),
            data,
            mask,
        )?);
    }
    Ok(out.try_into().map_err(|_| Error::input("capture count"))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> SynthConfig<f64> {
        SynthConfig {
            image_size: 64,
            coarse_size: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn benchmark_rig_is_well_separated() {
        let rig = benchmark_rig::<f64>();
        assert!(rig.matrix().determinant().abs() > 0.1);
        let up = Vector3::new(0.0, 0.0, 1.0);
        assert!(rig.shading(&up).min() > 0.5);
    }

    #[test]
    fn albedo_has_four_triangle_regions() {
        let albedo = gen_albedo::<f64>(32, 3, 0.2, 1.0).unwrap();
        let mut distinct: Vec<Vector3<f64>> = Vec::new();
        for v in albedo.data() {
            if !distinct.iter().any(|d| d == v) {
                distinct.push(*v);
            }
        }
        assert_eq!(distinct.len(), 4);
        // Region values sit where the construction puts them.
        let s = 32;
        assert_eq!(albedo.get(s / 2, 1), albedo.get(s / 2 + 3, 1)); // top
        assert_eq!(albedo.get(1, s / 2), albedo.get(1, s / 2 + 3)); // left
        // Boundary pixels align with the diagonals: crossing the main
        // diagonal changes the region.
        let r_top = triangle_region(20, 2, s, s);
        let r_right = triangle_region(29, 12, s, s);
        assert_ne!(r_top, r_right);
    }

    #[test]
    fn albedo_range_respected() {
        let albedo = gen_albedo::<f64>(16, 11, 0.2, 1.0).unwrap();
        for v in albedo.data() {
            for c in 0..3 {
                assert!(v[c] >= 0.2 && v[c] <= 1.0);
            }
        }
    }

    #[test]
    fn zero_amplitude_limit_is_flat() {
        // Amplitude must be positive by contract; a tiny value approximates
        // the pure-plane limit.
        let config = SynthConfig::<f64> {
            perturbation_amplitude: 1e-12,
            ..small_config()
        };
        let rig = benchmark_rig();
        let surface = gen_surface(&config, &rig, 5).unwrap();
        let n0 = surface.normals.get(0, 0);
        for n in surface.normals.data() {
            assert!((n - n0).norm() < 1e-9);
        }
    }

    #[test]
    fn up_plane_under_benchmark_rig_never_rejected() {
        // Every benchmark light sees the up-facing plane at cos(35 deg),
        // comfortably above the 0.1 rejection margin.
        let config = SynthConfig::<f64> {
            tilt_max_deg: 0.0,
            ..small_config()
        };
        let rig = benchmark_rig();
        for seed in 0..50 {
            assert!(gen_surface(&config, &rig, seed).is_ok());
        }
    }

    #[test]
    fn instances_are_deterministic() {
        let config = small_config();
        let rig = benchmark_rig();
        let a = gen_instance(&config, &rig, 42).unwrap();
        let b = gen_instance(&config, &rig, 42).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.albedo.data(), b.albedo.data());
        assert_eq!(a.normals.data(), b.normals.data());
        let c = gen_instance(&config, &rig, 43).unwrap();
        assert_ne!(a.image.data(), c.image.data());
    }

    #[test]
    fn noiseless_render_inverts_exactly() {
        let config = SynthConfig::<f64> {
            noise_sigma: 0.0,
            ..small_config()
        };
        let rig = benchmark_rig();
        let inst = gen_instance(&config, &rig, 17).unwrap();
        // At unshadowed pixels, inverting with the true albedo recovers the
        // true normal.
        let mut checked = 0;
        for i in 0..inst.image.len() {
            let shading = rig.shading(&inst.normals.data()[i]);
            if shading.min() <= 1e-6 {
                continue;
            }
            let kappa = inst.albedo.data()[i];
            let cand = crate::albedo::AlbedoCandidate::from_vector(&kappa).unwrap();
            let w = rig.inverse_transpose()
                * Vector3::new(
                    inst.image.data()[i].x / cand.chroma.x,
                    inst.image.data()[i].y / cand.chroma.y,
                    inst.image.data()[i].z / cand.chroma.z,
                );
            assert_relative_eq!(w.norm(), cand.luminance, epsilon = 1e-9);
            assert!((w / w.norm() - inst.normals.data()[i]).norm() < 1e-9);
            checked += 1;
        }
        assert!(checked > 3000, "too few unshadowed pixels: {checked}");
    }

    #[test]
    fn gradient_magnitudes_are_moderate() {
        // The default amplitude is calibrated so the median gradient
        // magnitude lands near 0.3 at any resolution.
        let rig = benchmark_rig::<f64>();
        let mut mags = Vec::new();
        for seed in 0..20 {
            let config = SynthConfig::<f64> {
                tilt_max_deg: 0.0,
                ..small_config()
            };
            let surface = gen_surface(&config, &rig, seed).unwrap();
            for g in surface.gradients.data() {
                mags.push(g.norm());
            }
        }
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = mags[mags.len() / 2];
        assert!(
            (0.2..=0.4).contains(&median),
            "median gradient {median} outside calibration window"
        );
    }

    #[test]
    fn surfaces_are_mostly_unshadowed() {
        let rig = benchmark_rig::<f64>();
        let config = small_config();
        let mut unshadowed = 0usize;
        let mut total = 0usize;
        for i in 0..100 {
            let seed = instance_seed(1234, i);
            let surface = gen_surface(&config, &rig, seed).unwrap();
            for n in surface.normals.data() {
                total += 1;
                if rig.shading(n).min() > 0.0 {
                    unshadowed += 1;
                }
            }
        }
        let frac = unshadowed as f64 / total as f64;
        assert!(frac >= 0.99, "unshadowed fraction {frac} below 0.99");
    }

    #[test]
    fn thousand_default_instances_generate_cleanly() {
        // The full benchmark protocol generates 1000 surfaces at defaults;
        // none may hit the base-plane rejection limit.
        use rayon::prelude::*;
        let rig = benchmark_rig::<f64>();
        let config = SynthConfig::<f64>::default();
        let ok: usize = (0..1000u64)
            .into_par_iter()
            .map(|i| {
                let seed = instance_seed(0x5EED, i);
                gen_instance(&config, &rig, seed).map(|_| 1usize).unwrap_or(0)
            })
            .sum();
        assert_eq!(ok, 1000);
    }

    #[test]
    fn white_captures_match_shading() {
        let config = SynthConfig::<f64> {
            noise_sigma: 0.0,
            ..small_config()
        };
        let rig = benchmark_rig();
        let inst = gen_instance(&config, &rig, 3).unwrap();
        let caps =
            render_white_captures(&inst.normals, &inst.albedo, &rig, 0.0, 3).unwrap();
        let i = inst.image.index(10, 12);
        for (c, cap) in caps.iter().enumerate() {
            let s = rig.light(c).dot(&inst.normals.data()[i]).max(0.0);
            assert_relative_eq!(cap.data()[i], inst.albedo.data()[i] * s, epsilon = 1e-12);
        }
    }
}
