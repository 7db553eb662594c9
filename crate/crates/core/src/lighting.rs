//! Calibrated lighting: three directional monochromatic lights, one per
//! color channel.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::num::{cast, to_f64, Scalar};

/// Relative determinant tolerance: `|det L|` must exceed this times the cube
/// of the Frobenius norm of `L`.
pub const DET_TOL: f64 = 1e-9;

/// The lighting matrix `L = [l_R, l_G, l_B]`, columns holding each light's
/// direction scaled by its intensity, together with its cached inverse
/// transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct LightingRig<T: Scalar> {
    matrix: Matrix3<T>,
    inverse_transpose: Matrix3<T>,
}

impl<T: Scalar> LightingRig<T> {
    /// Build a rig from the lighting matrix, verifying invertibility.
    pub fn new(matrix: Matrix3<T>) -> Result<Self> {
        let det = matrix.determinant();
        let scale = matrix.norm();
        let tol = cast::<T>(DET_TOL) * scale * scale * scale;
        if !det.is_finite() || det.abs() <= tol {
            return Err(Error::SingularLighting {
                det: to_f64(det),
                tol: to_f64(tol),
            });
        }
        let inverse_transpose = matrix
            .transpose()
            .try_inverse()
            .ok_or(Error::SingularLighting {
                det: to_f64(det),
                tol: to_f64(tol),
            })?;
        Ok(Self {
            matrix,
            inverse_transpose,
        })
    }

    /// Build a rig from the three light columns `l_R`, `l_G`, `l_B`.
    pub fn from_lights(l_r: Vector3<T>, l_g: Vector3<T>, l_b: Vector3<T>) -> Result<Self> {
        Self::new(Matrix3::from_columns(&[l_r, l_g, l_b]))
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<T> {
        &self.matrix
    }

    #[inline]
    pub fn inverse_transpose(&self) -> &Matrix3<T> {
        &self.inverse_transpose
    }

    /// Light column for channel 0 (R), 1 (G) or 2 (B).
    pub fn light(&self, channel: usize) -> Vector3<T> {
        self.matrix.column(channel).into()
    }

    /// Shading vector `L^T n`: per-channel dot product of light and normal,
    /// before any shadow clipping.
    #[inline]
    pub fn shading(&self, normal: &Vector3<T>) -> Vector3<T> {
        self.matrix.tr_mul(normal)
    }
}
