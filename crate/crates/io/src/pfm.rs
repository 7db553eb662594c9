//! Portable float map (PFM) reading and writing.
//!
//! The canonical float-image format of this project: header `PF` (3-channel)
//! or `Pf` (1-channel), ASCII `width height`, then a scale line whose sign
//! encodes endianness (negative = little-endian, which is what we write),
//! followed by raw 32-bit floats. Scanlines are stored bottom-to-top per the
//! PFM convention, pixels left-to-right, channels interleaved.
//!
//! Masked-out pixels are written as NaN (gray and RGB maps) or the zero
//! vector (normal maps); readers reconstruct the mask from those encodings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rgbps_core::num::{cast, to_f64, Scalar};
use rgbps_core::{NormalField, RgbImage, ScalarField};

use crate::error::{IoError, Result};

fn read_token(reader: &mut impl Read, path: &Path) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte).map_err(|e| IoError::file(path, e))? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    if token.is_empty() {
        return Err(IoError::format(path, "unexpected end of header"));
    }
    String::from_utf8(token).map_err(|_| IoError::format(path, "non-UTF8 header token"))
}

struct PfmData {
    width: usize,
    height: usize,
    channels: usize,
    /// Scanline order already flipped to top-down.
    data: Vec<f32>,
}

fn read_pfm(path: &Path) -> Result<PfmData> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    let mut reader = BufReader::new(file);
    let magic = read_token(&mut reader, path)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(IoError::format(path, format!("bad magic {other:?}"))),
    };
    let width: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| IoError::format(path, "bad width"))?;
    let height: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| IoError::format(path, "bad height"))?;
    let scale: f32 = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| IoError::format(path, "bad scale"))?;
    if width == 0 || height == 0 {
        return Err(IoError::format(path, "zero dimension"));
    }
    let little_endian = scale < 0.0;
    let count = width * height * channels;
    let mut buf = vec![0u8; count * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| IoError::file(path, e))?;

    // Flip bottom-up storage to top-down while decoding.
    let mut data = vec![0f32; count];
    let row_len = width * channels;
    for row in 0..height {
        let src_row = height - 1 - row;
        for i in 0..row_len {
            let o = (src_row * row_len + i) * 4;
            let bytes = [buf[o], buf[o + 1], buf[o + 2], buf[o + 3]];
            data[row * row_len + i] = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
        }
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}

fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    debug_assert_eq!(data.len(), width * height * channels);
    let file = File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut w = BufWriter::new(file);
    let magic = if channels == 3 { "PF" } else { "Pf" };
    write!(w, "{magic}\n{width} {height}\n-1.0\n").map_err(|e| IoError::file(path, e))?;
    let row_len = width * channels;
    for row in (0..height).rev() {
        for v in &data[row * row_len..(row + 1) * row_len] {
            w.write_all(&v.to_le_bytes())
                .map_err(|e| IoError::file(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Write an RGB image; masked-out pixels become NaN.
pub fn write_rgb<T: Scalar>(path: impl AsRef<Path>, image: &RgbImage<T>) -> Result<()> {
    let mut data = Vec::with_capacity(image.len() * 3);
    for (v, &m) in image.data().iter().zip(image.mask()) {
        for c in 0..3 {
            data.push(if m { to_f64(v[c]) as f32 } else { f32::NAN });
        }
    }
    write_pfm(path.as_ref(), image.width(), image.height(), 3, &data)
}

/// Read an RGB image; non-finite pixels are masked out.
pub fn read_rgb<T: Scalar>(path: impl AsRef<Path>) -> Result<RgbImage<T>> {
    let path = path.as_ref();
    let pfm = read_pfm(path)?;
    if pfm.channels != 3 {
        return Err(IoError::format(path, "expected 3-channel PFM"));
    }
    let mut data = Vec::with_capacity(pfm.width * pfm.height);
    let mut mask = Vec::with_capacity(pfm.width * pfm.height);
    for px in pfm.data.chunks_exact(3) {
        let finite = px.iter().all(|v| v.is_finite());
        mask.push(finite);
        data.push(if finite {
            Vector3::new(
                cast::<T>(px[0] as f64),
                cast::<T>(px[1] as f64),
                cast::<T>(px[2] as f64),
            )
        } else {
            Vector3::zeros()
        });
    }
    Ok(RgbImage::with_mask(pfm.width, pfm.height, data, mask)?)
}

/// Write a scalar map as 1-channel PFM; masked-out pixels become NaN.
pub fn write_gray<T: Scalar>(path: impl AsRef<Path>, field: &ScalarField<T>) -> Result<()> {
    let data: Vec<f32> = field
        .data()
        .iter()
        .zip(field.mask())
        .map(|(&v, &m)| if m { to_f64(v) as f32 } else { f32::NAN })
        .collect();
    write_pfm(path.as_ref(), field.width(), field.height(), 1, &data)
}

/// Read a scalar map; non-finite samples are masked out.
pub fn read_gray<T: Scalar>(path: impl AsRef<Path>) -> Result<ScalarField<T>> {
    let path = path.as_ref();
    let pfm = read_pfm(path)?;
    if pfm.channels != 1 {
        return Err(IoError::format(path, "expected 1-channel PFM"));
    }
    let mut data = Vec::with_capacity(pfm.data.len());
    let mut mask = Vec::with_capacity(pfm.data.len());
    for &v in &pfm.data {
        mask.push(v.is_finite());
        data.push(if v.is_finite() {
            cast::<T>(v as f64)
        } else {
            T::zero()
        });
    }
    Ok(ScalarField::new(pfm.width, pfm.height, data, mask)?)
}

/// Write a normal map; masked-out pixels become the zero vector.
pub fn write_normals<T: Scalar>(path: impl AsRef<Path>, normals: &NormalField<T>) -> Result<()> {
    let mut data = Vec::with_capacity(normals.len() * 3);
    for (v, &m) in normals.data().iter().zip(normals.mask()) {
        for c in 0..3 {
            data.push(if m { to_f64(v[c]) as f32 } else { 0.0 });
        }
    }
    write_pfm(path.as_ref(), normals.width(), normals.height(), 3, &data)
}

/// Read a normal map: zero vectors are masked out, everything else is
/// renormalized (the f32 roundtrip costs a few ulps) and must be
/// camera-facing.
pub fn read_normals<T: Scalar>(path: impl AsRef<Path>) -> Result<NormalField<T>> {
    let path = path.as_ref();
    let pfm = read_pfm(path)?;
    if pfm.channels != 3 {
        return Err(IoError::format(path, "expected 3-channel PFM"));
    }
    let n = pfm.width * pfm.height;
    let mut data = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for px in pfm.data.chunks_exact(3) {
        if !px.iter().all(|v| v.is_finite()) {
            return Err(IoError::format(path, "non-finite normal sample"));
        }
        let v = Vector3::new(
            cast::<T>(px[0] as f64),
            cast::<T>(px[1] as f64),
            cast::<T>(px[2] as f64),
        );
        let norm = v.norm();
        if to_f64(norm) < 1e-6 {
            data.push(Vector3::zeros());
            mask.push(false);
            continue;
        }
        if (to_f64(norm) - 1.0).abs() > 1e-2 {
            return Err(IoError::format(path, "normal sample far from unit length"));
        }
        let unit = v / norm;
        if unit.z <= T::zero() {
            return Err(IoError::format(path, "normal sample not camera-facing"));
        }
        data.push(unit);
        mask.push(true);
    }
    Ok(NormalField::new(pfm.width, pfm.height, data, mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rgbps_core::render::gradient_to_normal;
    use tempfile::tempdir;

    #[test]
    fn rgb_roundtrip_is_bit_exact_for_f32() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        let data: Vec<Vector3<f32>> = (0..12)
            .map(|i| {
                Vector3::new(
                    (i as f32 * 0.37).sin(),
                    -(i as f32) * 0.001,
                    1.0 / (i as f32 + 1.0),
                )
            })
            .collect();
        let img = RgbImage::new(4, 3, data).unwrap();
        write_rgb(&path, &img).unwrap();
        let back: RgbImage<f32> = read_rgb(&path).unwrap();
        assert_eq!(img.data(), back.data());
        assert_eq!(img.mask(), back.mask());
    }

    #[test]
    fn mask_survives_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("masked.pfm");
        let data = vec![Vector3::new(0.5f32, 0.25, 0.125); 4];
        let mask = vec![true, false, true, false];
        let img = RgbImage::with_mask(2, 2, data, mask.clone()).unwrap();
        write_rgb(&path, &img).unwrap();
        let back: RgbImage<f32> = read_rgb(&path).unwrap();
        assert_eq!(back.mask(), &mask[..]);
    }

    #[test]
    fn normals_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("n.pfm");
        let mut data = vec![
            gradient_to_normal(&nalgebra::Vector2::new(0.3f32, -0.7)),
            gradient_to_normal(&nalgebra::Vector2::new(0.0, 0.0)),
            gradient_to_normal(&nalgebra::Vector2::new(1.5, 0.2)),
            Vector3::zeros(),
        ];
        data[3] = Vector3::zeros();
        let field =
            NormalField::new(2, 2, data.clone(), vec![true, true, true, false]).unwrap();
        write_normals(&path, &field).unwrap();
        let back: NormalField<f32> = read_normals(&path).unwrap();
        assert_eq!(back.mask(), field.mask());
        for (a, b) in back.data().iter().zip(field.data()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn gray_roundtrip_with_nan_mask() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        let field = ScalarField::new(
            3,
            1,
            vec![1.25f32, 0.0, -7.5],
            vec![true, false, true],
        )
        .unwrap();
        write_gray(&path, &field).unwrap();
        let back: ScalarField<f32> = read_gray(&path).unwrap();
        assert_eq!(back.mask(), field.mask());
        assert_eq!(back.data()[0], 1.25);
        assert_eq!(back.data()[2], -7.5);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        let field = ScalarField::new(2, 2, vec![0.0f32; 4], vec![true; 4]).unwrap();
        write_gray(&path, &field).unwrap();
        assert!(read_rgb::<f32>(&path).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_rgb::<f64>("/nonexistent/x.pfm"),
            Err(IoError::File { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn value_roundtrip(vals in proptest::collection::vec(-1e6f32..1e6, 6)) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("p.pfm");
            let data: Vec<Vector3<f32>> = vals.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            let img = RgbImage::new(1, 2, data).unwrap();
            write_rgb(&path, &img).unwrap();
            let back: RgbImage<f32> = read_rgb(&path).unwrap();
            prop_assert_eq!(img.data(), back.data());
        }
    }
}
