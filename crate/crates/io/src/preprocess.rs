//! Real-capture preprocessing: anti-alias blur and 2x2 Bayer-block
//! aggregation, object masking by thresholding, and per-channel white
//! balance.

use nalgebra::Vector3;
use rgbps_core::num::{cast, Scalar};
use rgbps_core::{Error as CoreError, RgbImage, ScalarField};

use crate::error::{IoError, Result};

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur<T: Scalar>(field: &ScalarField<T>, sigma: f64) -> ScalarField<T> {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for k in -radius..=radius {
        let w = (-(k as f64) * (k as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(w);
        sum += w;
    }
    for w in kernel.iter_mut() {
        *w /= sum;
    }
    let (w, h) = (field.width(), field.height());
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut horizontal = vec![T::zero(); w * h];
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kw) in kernel.iter().enumerate() {
                let sx = clamp(x as i64 + i as i64 - radius, w);
                acc += cast::<T>(kw) * field.data()[y * w + sx];
            }
            horizontal[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kw) in kernel.iter().enumerate() {
                let sy = clamp(y as i64 + i as i64 - radius, h);
                acc += cast::<T>(kw) * horizontal[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    ScalarField::new(w, h, out, field.mask().to_vec()).expect("blur preserves finiteness")
}

/// Aggregate an RGGB mosaic into one RGB pixel per 2x2 block after a 1-pixel
/// Gaussian anti-alias blur of the raw mosaic plane: R from the top-left
/// site, G as the mean of the two green sites, B from the bottom-right.
pub fn bayer_rggb_to_rgb<T: Scalar>(mosaic: &ScalarField<T>) -> Result<RgbImage<T>> {
    if mosaic.width() % 2 != 0 || mosaic.height() % 2 != 0 {
        return Err(IoError::Core(CoreError::input(
            "Bayer mosaic dimensions must be even",
        )));
    }
    let blurred = gaussian_blur(mosaic, 1.0);
    let (w, h) = (mosaic.width() / 2, mosaic.height() / 2);
    let half = cast::<T>(0.5);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let r = blurred.get(2 * x, 2 * y);
            let g1 = blurred.get(2 * x + 1, 2 * y);
            let g2 = blurred.get(2 * x, 2 * y + 1);
            let b = blurred.get(2 * x + 1, 2 * y + 1);
            data.push(Vector3::new(r, (g1 + g2) * half, b));
        }
    }
    Ok(RgbImage::new(w, h, data)?)
}

/// Object mask: pixels whose luminance (channel mean) exceeds `threshold`
/// times the maximum luminance.
pub fn threshold_mask<T: Scalar>(image: &RgbImage<T>, threshold: T) -> Result<Vec<bool>> {
    let third = cast::<T>(1.0 / 3.0);
    let lum: Vec<T> = image
        .data()
        .iter()
        .map(|v| (v.x + v.y + v.z) * third)
        .collect();
    let max = lum.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if !(max > T::zero()) {
        return Err(IoError::Core(CoreError::EmptyMask {
            context: "thresholding an all-black image",
        }));
    }
    let cut = threshold * max;
    Ok(lum
        .iter()
        .zip(image.mask())
        .map(|(&l, &m)| m && l > cut)
        .collect())
}

/// White-balance gains and result: each channel divided by its mean over the
/// mask, so masked channel means become exactly one. `gains` holds the
/// multipliers applied (reciprocal masked means); divide estimated albedos
/// by them to report in the un-balanced space.
#[derive(Debug, Clone)]
pub struct Preprocessed<T: Scalar> {
    pub image: RgbImage<T>,
    pub gains: Vector3<T>,
}

pub fn white_balance<T: Scalar>(image: &RgbImage<T>, mask: Vec<bool>) -> Result<Preprocessed<T>> {
    let masked = RgbImage::with_mask(
        image.width(),
        image.height(),
        image.data().to_vec(),
        mask,
    )?;
    let means = masked.channel_means()?;
    for c in 0..3 {
        if !(means[c] > T::zero()) {
            return Err(IoError::Core(CoreError::input(
                "white balance: non-positive channel mean over the mask",
            )));
        }
    }
    let gains = Vector3::new(
        T::one() / means.x,
        T::one() / means.y,
        T::one() / means.z,
    );
    let image = masked.map_pixels(|v| v.component_mul(&gains));
    Ok(Preprocessed { image, gains })
}

/// Input flavor for [`preprocess_real`].
pub enum RealInput<'a, T: Scalar> {
    /// Raw RGGB mosaic plane: blurred, aggregated, masked, balanced.
    BayerRggb(&'a ScalarField<T>),
    /// Already-RGB linear image: blur/downsample skipped, only masking and
    /// white balance applied.
    Rgb(&'a RgbImage<T>),
}

/// Full preprocessing pipeline for real captures.
pub fn preprocess_real<T: Scalar>(
    input: RealInput<'_, T>,
    mask_threshold: T,
) -> Result<Preprocessed<T>> {
    let rgb = match input {
        RealInput::BayerRggb(mosaic) => bayer_rggb_to_rgb(mosaic)?,
        RealInput::Rgb(image) => image.clone(),
    };
    let mask = threshold_mask(&rgb, mask_threshold)?;
    white_balance(&rgb, mask)
}
