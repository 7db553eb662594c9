//! Lambertian forward model: shading with attached shadows, plus the
//! gradient/normal parameterization used everywhere downstream.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{mask_and, AlbedoMap, GradientField, NormalField, RgbImage};
use crate::lighting::LightingRig;
use crate::num::{cast, to_f64, Scalar};

/// Default minimum `n_z` for the normal -> gradient direction.
pub const EPS_NZ: f64 = 1e-6;

/// Render an image of a surface: `v = diag(albedo) * max(L^T n, 0) + noise`.
///
/// Attached shadows are simulated by clipping negative shading to zero before
/// the albedo product. Observation noise is additive Gaussian per channel
/// (std `noise_sigma`), seeded and applied after clipping; noisy values are
/// not re-clipped, so the output can be slightly negative.
///
/// The noise stream is consumed in scanline order for every pixel regardless
/// of the mask, so a given seed produces the same noise pattern for any mask.
pub fn render<T: Scalar>(
    normals: &NormalField<T>,
    albedo: &AlbedoMap<T>,
    rig: &LightingRig<T>,
    noise_sigma: T,
    seed: u64,
) -> Result<RgbImage<T>> {
    normals.same_dims(albedo, "render albedo")?;
    if !(noise_sigma >= T::zero()) {
        return Err(Error::input("noise_sigma must be >= 0"));
    }
    let mask = mask_and(normals.mask(), albedo.mask());
    let mut data = Vec::with_capacity(normals.len());
    for i in 0..normals.len() {
        if mask[i] {
            let shading = rig.shading(&normals.data()[i]).map(|s| s.max(T::zero()));
            data.push(albedo.data()[i].component_mul(&shading));
        } else {
            data.push(Vector3::zeros());
        }
    }
    if noise_sigma > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in data.iter_mut() {
            for c in 0..3 {
                let g: f64 = StandardNormal.sample(&mut rng);
                v[c] += noise_sigma * cast::<T>(g);
            }
        }
    }
    RgbImage::with_mask(normals.width(), normals.height(), data, mask)
}

/// Convert a single normal to its depth-gradient coordinates.
///
/// Returns `None` when `n_z <= eps`.
#[inline]
pub fn normal_to_gradient<T: Scalar>(n: &Vector3<T>, eps: T) -> Option<Vector2<T>> {
    if n.z <= eps {
        return None;
    }
    Some(Vector2::new(n.x / n.z, n.y / n.z))
}

/// Convert depth gradients to the unit normal `[g, 1] / |[g, 1]|`.
#[inline]
pub fn gradient_to_normal<T: Scalar>(g: &Vector2<T>) -> Vector3<T> {
    let inv = (g.x * g.x + g.y * g.y + T::one()).sqrt().recip();
    Vector3::new(g.x * inv, g.y * inv, inv)
}

/// Per-pixel normal -> gradient conversion with the default epsilon.
pub fn normals_to_gradients<T: Scalar>(normals: &NormalField<T>) -> Result<GradientField<T>> {
    normals_to_gradients_eps(normals, cast(EPS_NZ))
}

/// Per-pixel normal -> gradient conversion.
///
/// Fails listing the offending pixels when any masked-in normal has
/// `n_z <= eps` (near-horizontal: its gradient is unbounded).
pub fn normals_to_gradients_eps<T: Scalar>(
    normals: &NormalField<T>,
    eps: T,
) -> Result<GradientField<T>> {
    let mut data = vec![Vector2::zeros(); normals.len()];
    let mut offenders = 0usize;
    let mut first = None;
    for y in 0..normals.height() {
        for x in 0..normals.width() {
            let i = normals.index(x, y);
            if !normals.mask()[i] {
                continue;
            }
            match normal_to_gradient(&normals.data()[i], eps) {
                Some(g) => data[i] = g,
                None => {
                    offenders += 1;
                    if first.is_none() {
                        first = Some((x, y));
                    }
                }
            }
        }
    }
    if let Some((x, y)) = first {
        return Err(Error::HorizontalNormals {
            count: offenders,
            eps: to_f64(eps),
            x,
            y,
        });
    }
    Ok(GradientField::new_unchecked(
        normals.width(),
        normals.height(),
        data,
        normals.mask().to_vec(),
    ))
}

/// Per-pixel gradient -> normal conversion; total on finite gradients.
pub fn gradients_to_normals<T: Scalar>(gradients: &GradientField<T>) -> NormalField<T> {
    let data = gradients
        .data()
        .iter()
        .zip(gradients.mask())
        .map(|(g, &m)| {
            if m {
                gradient_to_normal(g)
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    NormalField::new_unchecked(
        gradients.width(),
        gradients.height(),
        data,
        gradients.mask().to_vec(),
    )
}
