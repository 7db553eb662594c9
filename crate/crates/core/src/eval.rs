//! Evaluation: angular error statistics and the classical three-light
//! photometric-stereo baseline.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::field::{mask_and, AlbedoMap, NormalField, RgbImage, ScalarField};
use crate::lighting::LightingRig;
use crate::num::{cast, to_f64, Scalar};

/// Spacing of the sampled cumulative distribution, degrees.
pub const CDF_STEP_DEG: f64 = 0.25;

/// Angular error statistics between two normal fields.
#[derive(Debug, Clone)]
pub struct ErrorReport<T: Scalar> {
    /// Per-pixel angular error in degrees over the mask intersection.
    pub errors: ScalarField<T>,
    pub pixels: usize,
    pub median_deg: T,
    pub mean_deg: T,
    pub p95_deg: T,
    pub max_deg: T,
    /// `(threshold_deg, fraction of pixels with error <= threshold)` sampled
    /// every [`CDF_STEP_DEG`] degrees up to the maximum error.
    pub cdf: Vec<(T, T)>,
}

/// Median with the midpoint convention for even counts. `values` is consumed
/// and sorted.
pub fn median_of<T: Scalar>(values: &mut [T]) -> T {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / cast::<T>(2.0)
    }
}

/// Per-pixel angle `acos(est . gt)` in degrees plus summary statistics over
/// the mask intersection. Symmetric in its arguments.
pub fn angular_error<T: Scalar>(
    est: &NormalField<T>,
    gt: &NormalField<T>,
) -> Result<ErrorReport<T>> {
    est.same_dims(gt, "angular_error")?;
    let mask = mask_and(est.mask(), gt.mask());
    let rad_to_deg = cast::<T>(180.0 / std::f64::consts::PI);
    let mut data = vec![T::zero(); est.len()];
    let mut values = Vec::new();
    for i in 0..est.len() {
        if !mask[i] {
            continue;
        }
        let dot = est.data()[i]
            .dot(&gt.data()[i])
            .clamp(-T::one(), T::one());
        let deg = dot.acos() * rad_to_deg;
        data[i] = deg;
        values.push(deg);
    }
    if values.is_empty() {
        return Err(Error::EmptyMask {
            context: "angular_error mask intersection",
        });
    }
    let pixels = values.len();
    let mut sum = T::zero();
    for &v in &values {
        sum += v;
    }
    let mean = sum / cast::<T>(pixels as f64);
    let mut sorted = values;
    let median = median_of(&mut sorted);
    let p95 = sorted[((pixels - 1) as f64 * 0.95) as usize];
    let max = sorted[pixels - 1];

    let mut cdf = Vec::new();
    let mut threshold = 0.0f64;
    let max_f = to_f64(max);
    let mut idx = 0usize;
    loop {
        let t = cast::<T>(threshold);
        while idx < pixels && to_f64(sorted[idx]) <= threshold {
            idx += 1;
        }
        cdf.push((t, cast::<T>(idx as f64 / pixels as f64)));
        if threshold > max_f {
            break;
        }
        threshold += CDF_STEP_DEG;
    }

    Ok(ErrorReport {
        errors: ScalarField::new_unchecked(est.width(), est.height(), data, mask),
        pixels,
        median_deg: median,
        mean_deg: mean,
        p95_deg: p95,
        max_deg: max,
        cdf,
    })
}

/// Classical photometric stereo output.
#[derive(Debug, Clone)]
pub struct ClassicalPsOutput<T: Scalar> {
    pub normals: NormalField<T>,
    /// Pixels whose least-squares residual exceeded the tolerance (biased by
    /// shadowing or other non-idealities) or that could not be solved.
    pub flagged: Vec<bool>,
    /// Per-pixel RMS residual of the stacked equations.
    pub residual: ScalarField<T>,
}

/// Minimum albedo for a channel's equations to be usable.
pub const CHANNEL_ALBEDO_EPS: f64 = 1e-6;

/// Classical three-light photometric stereo with known albedo.
///
/// `captures[i]` is the RGB image captured under a white light along rig
/// column `i`. For every channel `c` with `albedo_c` above threshold, each
/// capture contributes one equation `albedo_c * (l_i . n) = v_ic`; the
/// stacked system (up to 9 equations) is solved by least squares and the
/// solution normalized. Pixels with fewer than three usable equations, a
/// rank-deficient system, or a non-camera-facing solution are masked out;
/// pixels whose residual exceeds `residual_tol` stay in the output but are
/// flagged.
pub fn classical_ps<T: Scalar>(
    captures: &[RgbImage<T>; 3],
    albedo: &AlbedoMap<T>,
    rig: &LightingRig<T>,
    residual_tol: T,
) -> Result<ClassicalPsOutput<T>> {
    for cap in captures.iter() {
        cap.same_dims(albedo, "classical_ps albedo")?;
    }
    let mut mask = mask_and(captures[0].mask(), captures[1].mask());
    mask = mask_and(&mask, captures[2].mask());
    mask = mask_and(&mask, albedo.mask());

    let n_px = albedo.len();
    let eps = cast::<T>(CHANNEL_ALBEDO_EPS);
    let mut normals = vec![Vector3::zeros(); n_px];
    let mut out_mask = vec![false; n_px];
    let mut flagged = vec![false; n_px];
    let mut residual = vec![T::zero(); n_px];

    for p in 0..n_px {
        if !mask[p] {
            continue;
        }
        let kappa = albedo.data()[p];
        // Accumulate normal equations A^T A and A^T b over usable rows.
        let mut ata = Matrix3::<T>::zeros();
        let mut atb = Vector3::<T>::zeros();
        let mut rows = 0usize;
        for c in 0..3 {
            if kappa[c] <= eps {
                continue;
            }
            for (i, cap) in captures.iter().enumerate() {
                let row = rig.light(i) * kappa[c];
                let rhs = cap.data()[p][c];
                ata += row * row.transpose();
                atb += row * rhs;
                rows += 1;
            }
        }
        if rows < 3 {
            flagged[p] = true;
            continue;
        }
        let det = ata.determinant();
        let scale = ata.norm();
        if det.abs() <= cast::<T>(1e-12) * scale * scale * scale {
            flagged[p] = true;
            continue;
        }
        let Some(inv) = ata.try_inverse() else {
            flagged[p] = true;
            continue;
        };
        let n_unnorm = inv * atb;
        let norm = n_unnorm.norm();
        if !(norm > T::zero()) || n_unnorm.z <= T::zero() {
            flagged[p] = true;
            continue;
        }
        let n = n_unnorm / norm;
        // RMS residual over the stacked equations.
        let mut ss = T::zero();
        for c in 0..3 {
            if kappa[c] <= eps {
                continue;
            }
            for (i, cap) in captures.iter().enumerate() {
                let d = kappa[c] * rig.light(i).dot(&n_unnorm) - cap.data()[p][c];
                ss += d * d;
            }
        }
        let rms = (ss / cast::<T>(rows as f64)).sqrt();
        normals[p] = n;
        out_mask[p] = true;
        residual[p] = rms;
        if rms > residual_tol {
            flagged[p] = true;
        }
    }

    if out_mask.iter().all(|&m| !m) {
        return Err(Error::EmptyMask {
            context: "classical_ps produced no solvable pixels",
        });
    }

    Ok(ClassicalPsOutput {
        normals: NormalField::new_unchecked(
            albedo.width(),
            albedo.height(),
            normals,
            out_mask.clone(),
        ),
        flagged,
        residual: ScalarField::new_unchecked(albedo.width(), albedo.height(), residual, out_mask),
    })
}
