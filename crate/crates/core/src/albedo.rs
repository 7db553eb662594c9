//! Discretized albedo space: luminance times unit chromaticity.
//!
//! An albedo vector factors as `kappa = luminance * chroma` with `chroma` a
//! unit vector in the nonnegative octant of the sphere. Chromaticity is
//! binned uniformly in elevation/azimuth angle over `[0, pi/2]`, luminance
//! uniformly over `(0, luminance_max]`; all bins are center-of-cell, so grid
//! chromaticities stay strictly inside the octant.

use nalgebra::Vector3;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::num::{cast, Scalar};

/// A factored albedo candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlbedoCandidate<T: Scalar> {
    pub luminance: T,
    pub chroma: Vector3<T>,
}

impl<T: Scalar> AlbedoCandidate<T> {
    pub fn new(luminance: T, chroma: Vector3<T>) -> Result<Self> {
        if !(luminance.is_finite() && luminance >= T::zero()) {
            return Err(Error::input("luminance must be finite and >= 0"));
        }
        let tol = cast::<T>(1e-9).max(T::default_epsilon() * cast::<T>(8.0));
        if (chroma.norm() - T::one()).abs() > tol {
            return Err(Error::input("chromaticity must be unit length"));
        }
        if chroma.x < T::zero() || chroma.y < T::zero() || chroma.z < T::zero() {
            return Err(Error::input("chromaticity components must be >= 0"));
        }
        Ok(Self { luminance, chroma })
    }

    /// The full albedo vector `luminance * chroma`.
    pub fn vector(&self) -> Vector3<T> {
        self.chroma * self.luminance
    }

    /// Factor an arbitrary nonnegative albedo vector.
    pub fn from_vector(albedo: &Vector3<T>) -> Result<Self> {
        let lum = albedo.norm();
        if lum == T::zero() {
            return Err(Error::input("cannot factor the zero albedo"));
        }
        Self::new(lum, albedo / lum)
    }
}

/// Bin layout of the discretized albedo space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlbedoGrid {
    pub n_elev: usize,
    pub n_azim: usize,
    pub n_lum: usize,
    pub luminance_max: f64,
}

impl Default for AlbedoGrid {
    fn default() -> Self {
        Self {
            n_elev: 64,
            n_azim: 64,
            n_lum: 100,
            luminance_max: 3.0,
        }
    }
}

impl AlbedoGrid {
    pub fn new(n_elev: usize, n_azim: usize, n_lum: usize, luminance_max: f64) -> Result<Self> {
        if n_elev == 0 || n_azim == 0 || n_lum == 0 {
            return Err(Error::config("albedo grid bin counts must be >= 1"));
        }
        if !(luminance_max > 0.0 && luminance_max.is_finite()) {
            return Err(Error::config("luminance_max must be positive"));
        }
        Ok(Self {
            n_elev,
            n_azim,
            n_lum,
            luminance_max,
        })
    }

    /// Number of chromaticity bins.
    #[inline]
    pub fn n_chroma(&self) -> usize {
        self.n_elev * self.n_azim
    }

    /// Flattened chromaticity index (elevation-major).
    #[inline]
    pub fn chroma_index(&self, elev: usize, azim: usize) -> usize {
        debug_assert!(elev < self.n_elev && azim < self.n_azim);
        elev * self.n_azim + azim
    }

    #[inline]
    pub fn chroma_unindex(&self, chroma: usize) -> (usize, usize) {
        (chroma / self.n_azim, chroma % self.n_azim)
    }

    /// Luminance bin width.
    #[inline]
    pub fn luminance_step(&self) -> f64 {
        self.luminance_max / self.n_lum as f64
    }

    /// Bin-center chromaticity: `(sin t cos p, sin t sin p, cos t)` with
    /// elevation and azimuth at cell centers over `[0, pi/2]`.
    pub fn chroma_center<T: Scalar>(&self, elev: usize, azim: usize) -> Result<Vector3<T>> {
        if elev >= self.n_elev {
            return Err(Error::IndexOutOfRange {
                what: "elevation bin",
                index: elev,
                len: self.n_elev,
            });
        }
        if azim >= self.n_azim {
            return Err(Error::IndexOutOfRange {
                what: "azimuth bin",
                index: azim,
                len: self.n_azim,
            });
        }
        let theta = (elev as f64 + 0.5) * FRAC_PI_2 / self.n_elev as f64;
        let phi = (azim as f64 + 0.5) * FRAC_PI_2 / self.n_azim as f64;
        Ok(Vector3::new(
            cast::<T>(theta.sin() * phi.cos()),
            cast::<T>(theta.sin() * phi.sin()),
            cast::<T>(theta.cos()),
        ))
    }

    pub fn chroma_center_flat<T: Scalar>(&self, chroma: usize) -> Result<Vector3<T>> {
        let (e, a) = self.chroma_unindex(chroma);
        self.chroma_center(e, a)
    }

    /// Bin-center luminance, uniform over `(0, luminance_max]`.
    pub fn luminance_center<T: Scalar>(&self, lum: usize) -> Result<T> {
        if lum >= self.n_lum {
            return Err(Error::IndexOutOfRange {
                what: "luminance bin",
                index: lum,
                len: self.n_lum,
            });
        }
        Ok(cast::<T>((lum as f64 + 0.5) * self.luminance_step()))
    }

    /// Nearest-bin-center luminance index, clamped to the grid. Values on an
    /// exact bin boundary quantize to the lower bin.
    pub fn quantize_luminance<T: Scalar>(&self, luminance: T) -> usize {
        let x = crate::num::to_f64(luminance) / self.luminance_step();
        if !(x > 0.0) {
            return 0;
        }
        let f = x.floor();
        let mut idx = if x == f { f as usize - 1 } else { f as usize };
        if idx >= self.n_lum {
            idx = self.n_lum - 1;
        }
        idx
    }

    /// Candidate at a `(luminance bin, chromaticity bin)` pair.
    pub fn candidate<T: Scalar>(&self, lum: usize, chroma: usize) -> Result<AlbedoCandidate<T>> {
        AlbedoCandidate::new(
            self.luminance_center(lum)?,
            self.chroma_center_flat(chroma)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_bin_grid_center_is_quadrant_midpoint() {
        let grid = AlbedoGrid::new(1, 1, 1, 3.0).unwrap();
        let c: Vector3<f64> = grid.chroma_center(0, 0).unwrap();
        assert_relative_eq!(
            c,
            Vector3::new(0.5, 0.5, 1.0 / 2.0f64.sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn first_luminance_center() {
        let grid = AlbedoGrid::default();
        let t: f64 = grid.luminance_center(0).unwrap();
        assert_relative_eq!(t, 0.015, epsilon = 1e-12);
    }

    #[test]
    fn centers_are_strictly_interior_unit_vectors() {
        let grid = AlbedoGrid::default();
        for e in 0..grid.n_elev {
            for a in 0..grid.n_azim {
                let c: Vector3<f64> = grid.chroma_center(e, a).unwrap();
                assert_relative_eq!(c.norm(), 1.0, epsilon = 1e-12);
                assert!(c.x > 0.0 && c.y > 0.0 && c.z > 0.0);
            }
        }
    }

    #[test]
    fn quantize_roundtrips_centers() {
        let grid = AlbedoGrid::default();
        for i in 0..grid.n_lum {
            let t: f64 = grid.luminance_center(i).unwrap();
            assert_eq!(grid.quantize_luminance(t), i);
        }
    }

    #[test]
    fn quantize_clamps() {
        let grid = AlbedoGrid::default();
        assert_eq!(grid.quantize_luminance(0.015f64), 0);
        assert_eq!(grid.quantize_luminance(10.0f64), 99);
        assert_eq!(grid.quantize_luminance(-1.0f64), 0);
    }

    #[test]
    fn quantize_boundary_goes_to_lower_bin() {
        let grid = AlbedoGrid::default();
        let step = grid.luminance_step();
        // 1 * step is exactly representable as step itself: the boundary
        // between bins 0 and 1 quantizes down.
        assert_eq!(grid.quantize_luminance(step), 0);
        assert_eq!(grid.quantize_luminance(3.0f64), 99);
    }

    #[test]
    fn index_out_of_range_rejected() {
        let grid = AlbedoGrid::default();
        assert!(grid.chroma_center::<f64>(64, 0).is_err());
        assert!(grid.luminance_center::<f64>(100).is_err());
    }
}
