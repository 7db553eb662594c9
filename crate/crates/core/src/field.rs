//! Per-pixel grid types: RGB images, normal fields, gradient fields, albedo
//! maps and scalar maps.
//!
//! All grids are stored row-major (`index = y * width + x`) with an explicit
//! per-pixel validity mask. Coordinates follow image convention: `x` grows
//! right, `y` grows down, and pixel `(x, y)` samples the continuous point
//! `(x + 0.5, y + 0.5)`.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::num::{cast, Scalar};

/// Unit-norm tolerance accepted by [`NormalField::new`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

fn check_dims(what: &'static str, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch {
            what,
            expected_w: 1,
            expected_h: 1,
            got_w: width,
            got_h: height,
        });
    }
    Ok(())
}

fn check_len<E>(what: &'static str, data: &[E], mask: &[bool], n: usize) -> Result<()> {
    if data.len() != n {
        return Err(Error::BufferLength {
            what,
            expected: n,
            got: data.len(),
        });
    }
    if mask.len() != n {
        return Err(Error::BufferLength {
            what: "mask",
            expected: n,
            got: mask.len(),
        });
    }
    Ok(())
}

macro_rules! grid_common {
    ($ty:ident, $elem:ty) => {
        impl<T: Scalar> $ty<T> {
            #[inline]
            pub fn width(&self) -> usize {
                self.width
            }

            #[inline]
            pub fn height(&self) -> usize {
                self.height
            }

            #[inline]
            pub fn len(&self) -> usize {
                self.data.len()
            }

            #[inline]
            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            #[inline]
            pub fn index(&self, x: usize, y: usize) -> usize {
                debug_assert!(x < self.width && y < self.height);
                y * self.width + x
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize) -> $elem {
                self.data[self.index(x, y)]
            }

            #[inline]
            pub fn is_valid(&self, x: usize, y: usize) -> bool {
                self.mask[self.index(x, y)]
            }

            #[inline]
            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            #[inline]
            pub fn mask(&self) -> &[bool] {
                &self.mask
            }

            /// Number of masked-in pixels.
            pub fn valid_count(&self) -> usize {
                self.mask.iter().filter(|&&m| m).count()
            }

            pub fn same_dims<O>(&self, other: &O, what: &'static str) -> Result<()>
            where
                O: GridDims,
            {
                if self.width != other.grid_width() || self.height != other.grid_height() {
                    return Err(Error::DimensionMismatch {
                        what,
                        expected_w: self.width,
                        expected_h: self.height,
                        got_w: other.grid_width(),
                        got_h: other.grid_height(),
                    });
                }
                Ok(())
            }
        }

        impl<T: Scalar> GridDims for $ty<T> {
            fn grid_width(&self) -> usize {
                self.width
            }
            fn grid_height(&self) -> usize {
                self.height
            }
        }
    };
}

/// Width/height pair, used for dimension checks across grid types.
pub trait GridDims {
    fn grid_width(&self) -> usize;
    fn grid_height(&self) -> usize;
}

/// Intersection of two masks.
pub fn mask_and(a: &[bool], b: &[bool]) -> Vec<bool> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x && y).collect()
}

// ---------------------------------------------------------------------------
// RgbImage
// ---------------------------------------------------------------------------

/// Per-pixel RGB intensities in linear units, nominal range `[0, 1]`.
///
/// Masked-in values must be finite. Intensities are nominally nonnegative,
/// but rendered images carry unclipped observation noise, so small negative
/// values are tolerated and left untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T: Scalar> {
    width: usize,
    height: usize,
    data: Vec<Vector3<T>>,
    mask: Vec<bool>,
}

grid_common!(RgbImage, Vector3<T>);

impl<T: Scalar> RgbImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<Vector3<T>>) -> Result<Self> {
        let mask = vec![true; data.len()];
        Self::with_mask(width, height, data, mask)
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        data: Vec<Vector3<T>>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_dims("RgbImage", width, height)?;
        check_len("RgbImage", &data, &mask, width * height)?;
        for (v, &m) in data.iter().zip(&mask) {
            if m && !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::NonFinite { what: "RgbImage" });
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    pub fn constant(width: usize, height: usize, value: Vector3<T>) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Mean intensity per channel over masked-in pixels.
    pub fn channel_means(&self) -> Result<Vector3<T>> {
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        for (v, &m) in self.data.iter().zip(&self.mask) {
            if m {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyMask {
                context: "channel means",
            });
        }
        Ok(sum / cast::<T>(n as f64))
    }

    pub fn map_pixels(&self, f: impl Fn(Vector3<T>) -> Vector3<T>) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// NormalField
// ---------------------------------------------------------------------------

/// Per-pixel unit surface normals with the camera-facing convention
/// `n_z > 0`. Masked-in normals must be unit length within [`UNIT_NORM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField<T: Scalar> {
    width: usize,
    height: usize,
    data: Vec<Vector3<T>>,
    mask: Vec<bool>,
}

grid_common!(NormalField, Vector3<T>);

impl<T: Scalar> NormalField<T> {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<Vector3<T>>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_dims("NormalField", width, height)?;
        check_len("NormalField", &data, &mask, width * height)?;
        let tol = cast::<T>(UNIT_NORM_TOL).max(T::default_epsilon() * cast::<T>(16.0));
        for (v, &m) in data.iter().zip(&mask) {
            if !m {
                continue;
            }
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::NonFinite {
                    what: "NormalField",
                });
            }
            if (v.norm() - T::one()).abs() > tol {
                return Err(Error::input(format!(
                    "normal not unit length: |n| = {}",
                    v.norm()
                )));
            }
            if v.z <= T::zero() {
                return Err(Error::input(
                    "normal has non-positive z component".to_string(),
                ));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    /// Construct without invariant checks. Callers must guarantee unit norm
    /// and positive z on masked-in pixels.
    pub(crate) fn new_unchecked(
        width: usize,
        height: usize,
        data: Vec<Vector3<T>>,
        mask: Vec<bool>,
    ) -> Self {
        Self {
            width,
            height,
            data,
            mask,
        }
    }

    pub fn constant(width: usize, height: usize, normal: Vector3<T>) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![normal; n], vec![true; n])
    }
}

// ---------------------------------------------------------------------------
// GradientField
// ---------------------------------------------------------------------------

/// Per-pixel depth gradients `(dz/dx, dz/dy)`; the normal parameterization is
/// `n = [g, 1] / |[g, 1]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T: Scalar> {
    width: usize,
    height: usize,
    data: Vec<Vector2<T>>,
    mask: Vec<bool>,
}

grid_common!(GradientField, Vector2<T>);

impl<T: Scalar> GradientField<T> {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<Vector2<T>>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_dims("GradientField", width, height)?;
        check_len("GradientField", &data, &mask, width * height)?;
        for (v, &m) in data.iter().zip(&mask) {
            if m && !(v.x.is_finite() && v.y.is_finite()) {
                return Err(Error::NonFinite {
                    what: "GradientField",
                });
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    pub(crate) fn new_unchecked(
        width: usize,
        height: usize,
        data: Vec<Vector2<T>>,
        mask: Vec<bool>,
    ) -> Self {
        Self {
            width,
            height,
            data,
            mask,
        }
    }
}

// ---------------------------------------------------------------------------
// AlbedoMap
// ---------------------------------------------------------------------------

/// Per-pixel RGB albedo, componentwise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoMap<T: Scalar> {
    width: usize,
    height: usize,
    data: Vec<Vector3<T>>,
    mask: Vec<bool>,
}

grid_common!(AlbedoMap, Vector3<T>);

impl<T: Scalar> AlbedoMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<Vector3<T>>) -> Result<Self> {
        let mask = vec![true; data.len()];
        Self::with_mask(width, height, data, mask)
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        data: Vec<Vector3<T>>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_dims("AlbedoMap", width, height)?;
        check_len("AlbedoMap", &data, &mask, width * height)?;
        for (v, &m) in data.iter().zip(&mask) {
            if !m {
                continue;
            }
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::NonFinite { what: "AlbedoMap" });
            }
            if v.x < T::zero() || v.y < T::zero() || v.z < T::zero() {
                return Err(Error::input("albedo component is negative".to_string()));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    pub fn constant(width: usize, height: usize, albedo: Vector3<T>) -> Result<Self> {
        Self::new(width, height, vec![albedo; width * height])
    }
}

// ---------------------------------------------------------------------------
// ScalarField
// ---------------------------------------------------------------------------

/// Per-pixel scalar map (depth, angular error, outlier fraction, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T: Scalar> {
    width: usize,
    height: usize,
    data: Vec<T>,
    mask: Vec<bool>,
}

grid_common!(ScalarField, T);

impl<T: Scalar> ScalarField<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        check_dims("ScalarField", width, height)?;
        check_len("ScalarField", &data, &mask, width * height)?;
        for (v, &m) in data.iter().zip(&mask) {
            if m && !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "ScalarField",
                });
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    pub(crate) fn new_unchecked(
        width: usize,
        height: usize,
        data: Vec<T>,
        mask: Vec<bool>,
    ) -> Self {
        Self {
            width,
            height,
            data,
            mask,
        }
    }

    /// Masked-in values in scanline order.
    pub fn valid_values(&self) -> Vec<T> {
        self.data
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| if m { Some(v) } else { None })
            .collect()
    }
}
