//! 8-bit PNG visualizations (lossy; PFM is the data format).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rgbps_core::num::{to_f64, Scalar};
use rgbps_core::{NormalField, ScalarField};

use crate::error::{IoError, Result};

fn encode_png(path: &Path, width: usize, height: usize, rgb: bool, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(if rgb {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(data)?;
    Ok(())
}

fn to_u8(x: f64) -> u8 {
    (x * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Normal map visualization: each channel maps `(n + 1) / 2` to 8 bits;
/// masked-out pixels are black.
pub fn write_normals_png<T: Scalar>(
    path: impl AsRef<Path>,
    normals: &NormalField<T>,
) -> Result<()> {
    let mut data = Vec::with_capacity(normals.len() * 3);
    for (n, &m) in normals.data().iter().zip(normals.mask()) {
        if m {
            for c in 0..3 {
                data.push(to_u8((to_f64(n[c]) + 1.0) / 2.0));
            }
        } else {
            data.extend_from_slice(&[0, 0, 0]);
        }
    }
    encode_png(path.as_ref(), normals.width(), normals.height(), true, &data)
}

/// Scalar map visualization over `[0, 1]` (values clamped); masked-out
/// pixels are black.
pub fn write_gray_png<T: Scalar>(path: impl AsRef<Path>, field: &ScalarField<T>) -> Result<()> {
    let data: Vec<u8> = field
        .data()
        .iter()
        .zip(field.mask())
        .map(|(&v, &m)| if m { to_u8(to_f64(v)) } else { 0 })
        .collect();
    encode_png(path.as_ref(), field.width(), field.height(), false, &data)
}
