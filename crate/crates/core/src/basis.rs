//! Polynomial local shape model.
//!
//! Depth inside a patch is modeled as a bivariate polynomial (constant term
//! excluded) in patch-centered pixel coordinates. The basis matrix `G` maps
//! coefficient vectors to the concatenated per-pixel depth gradients, two
//! rows per pixel; one shared `G` serves every patch.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::num::{cast, Scalar};
use crate::render::gradient_to_normal;

/// Patch layout: square side length and polynomial degree.
///
/// Pixels are enumerated in scanline order within the patch; pixel `(i, j)`
/// has centered coordinates `(i - (side-1)/2, j - (side-1)/2)`, e.g.
/// `-3.5 .. 3.5` for side 8. Coefficients are ordered lexicographically by
/// `(d_x + d_y, d_x)` over `1 <= d_x + d_y <= degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    side: usize,
    degree: usize,
}

impl PatchGeometry {
    pub fn new(side: usize, degree: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::config("patch side must be >= 2"));
        }
        if degree < 1 {
            return Err(Error::config("polynomial degree must be >= 1"));
        }
        let geom = Self { side, degree };
        if 2 * geom.n_pixels() < geom.n_coeff() {
            return Err(Error::config(format!(
                "patch has {} gradient rows but the model needs {} coefficients",
                2 * geom.n_pixels(),
                geom.n_coeff()
            )));
        }
        Ok(geom)
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.side * self.side
    }

    /// Number of model coefficients: `(D+1)(D+2)/2 - 1`.
    #[inline]
    pub fn n_coeff(&self) -> usize {
        (self.degree + 1) * (self.degree + 2) / 2 - 1
    }

    /// Monomial exponents `(d_x, d_y)` in column order.
    pub fn exponents(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.n_coeff());
        for total in 1..=self.degree as u32 {
            for dx in 0..=total {
                out.push((dx, total - dx));
            }
        }
        out
    }

    /// Patch-centered `(x, y)` coordinates per pixel, scanline order.
    pub fn coords<T: Scalar>(&self) -> Vec<(T, T)> {
        let c = cast::<T>((self.side as f64 - 1.0) / 2.0);
        let mut out = Vec::with_capacity(self.n_pixels());
        for j in 0..self.side {
            for i in 0..self.side {
                out.push((cast::<T>(i as f64) - c, cast::<T>(j as f64) - c));
            }
        }
        out
    }
}

/// Model coefficient vector, indexed per [`PatchGeometry::exponents`].
pub type ShapeCoefficients<T> = DVector<T>;

/// The shared gradient basis `G` with its cached least-squares projector
/// `P = (G^T G)^{-1} G^T` and Gram matrix `Q = G^T G`.
#[derive(Debug, Clone)]
pub struct BasisMatrix<T: Scalar> {
    geom: PatchGeometry,
    g: DMatrix<T>,
    projector: DMatrix<T>,
    gram: DMatrix<T>,
}

fn int_pow<T: Scalar>(base: T, exp: u32) -> T {
    let mut acc = T::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Build the basis for a patch geometry.
///
/// Row `2r` of `G` holds the x-derivative of each monomial at pixel `r`, row
/// `2r + 1` the y-derivative: entries `d_x x^(d_x-1) y^(d_y)` and
/// `d_y x^(d_x) y^(d_y-1)`.
pub fn build_basis<T: Scalar>(geom: PatchGeometry) -> Result<BasisMatrix<T>> {
    let n_rows = 2 * geom.n_pixels();
    let n_cols = geom.n_coeff();
    let exps = geom.exponents();
    let coords = geom.coords::<T>();

    let mut g = DMatrix::<T>::zeros(n_rows, n_cols);
    for (r, &(x, y)) in coords.iter().enumerate() {
        for (c, &(dx, dy)) in exps.iter().enumerate() {
            let gx = if dx == 0 {
                T::zero()
            } else {
                cast::<T>(dx as f64) * int_pow(x, dx - 1) * int_pow(y, dy)
            };
            let gy = if dy == 0 {
                T::zero()
            } else {
                cast::<T>(dy as f64) * int_pow(x, dx) * int_pow(y, dy - 1)
            };
            g[(2 * r, c)] = gx;
            g[(2 * r + 1, c)] = gy;
        }
    }

    // Rank check through a column-pivoted factorization, then the projector
    // from a plain QR of the (verified full-rank) basis.
    let piv = g.clone().col_piv_qr();
    let r_piv = piv.r();
    let r00 = r_piv[(0, 0)].abs();
    let rank_tol = r00 * T::default_epsilon() * cast::<T>(n_rows as f64);
    let rank = (0..n_cols)
        .take_while(|&i| r_piv[(i, i)].abs() > rank_tol)
        .count();
    if rank < n_cols {
        return Err(Error::RankDeficientBasis {
            rank,
            expected: n_cols,
        });
    }

    let qr = g.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut projector = q.transpose();
    if !r.solve_upper_triangular_mut(&mut projector) {
        return Err(Error::RankDeficientBasis {
            rank,
            expected: n_cols,
        });
    }

    // The cached operator must invert G on its column space.
    let pg = &projector * &g;
    let tol = cast::<T>(1e-8).max(T::default_epsilon() * cast::<T>(1e5));
    for i in 0..n_cols {
        for j in 0..n_cols {
            let target = if i == j { T::one() } else { T::zero() };
            if (pg[(i, j)] - target).abs() > tol {
                return Err(Error::RankDeficientBasis {
                    rank,
                    expected: n_cols,
                });
            }
        }
    }

    let gram = g.tr_mul(&g);
    Ok(BasisMatrix {
        geom,
        g,
        projector,
        gram,
    })
}

impl<T: Scalar> BasisMatrix<T> {
    #[inline]
    pub fn geometry(&self) -> PatchGeometry {
        self.geom
    }

    /// The `(2 * side^2) x n_coeff` basis matrix.
    #[inline]
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.g
    }

    /// The cached `n_coeff x (2 * side^2)` least-squares projector.
    #[inline]
    pub fn projector(&self) -> &DMatrix<T> {
        &self.projector
    }

    /// `G^T G`.
    #[inline]
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    /// Least-squares fit of a flattened gradient vector (layout: `x` then `y`
    /// gradient per pixel, pixels in patch scanline order).
    pub fn project(&self, gradients: &[T]) -> Result<ShapeCoefficients<T>> {
        if gradients.len() != 2 * self.geom.n_pixels() {
            return Err(Error::BufferLength {
                what: "patch gradients",
                expected: 2 * self.geom.n_pixels(),
                got: gradients.len(),
            });
        }
        if gradients.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "patch gradients",
            });
        }
        let v = DVector::from_column_slice(gradients);
        Ok(&self.projector * v)
    }

    /// Model gradients `G a` per pixel, patch scanline order.
    pub fn evaluate_gradients(&self, coeffs: &ShapeCoefficients<T>) -> Vec<Vector2<T>> {
        let flat = &self.g * coeffs;
        (0..self.geom.n_pixels())
            .map(|r| Vector2::new(flat[2 * r], flat[2 * r + 1]))
            .collect()
    }

    /// Model unit normals per pixel, patch scanline order.
    pub fn evaluate_normals(&self, coeffs: &ShapeCoefficients<T>) -> Vec<Vector3<T>> {
        self.evaluate_gradients(coeffs)
            .iter()
            .map(gradient_to_normal)
            .collect()
    }

    /// `a^T (G^T G) a = |G a|^2` without forming `G a`.
    pub fn gram_quadratic(&self, coeffs: &ShapeCoefficients<T>) -> T {
        coeffs.dot(&(&self.gram * coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_basis() -> BasisMatrix<f64> {
        build_basis(PatchGeometry::new(8, 5).unwrap()).unwrap()
    }

    #[test]
    fn coefficient_counts() {
        assert_eq!(PatchGeometry::new(8, 5).unwrap().n_coeff(), 20);
        assert_eq!(PatchGeometry::new(2, 1).unwrap().n_coeff(), 2);
        // Centered coordinates sum to zero per axis.
        let coords = PatchGeometry::new(8, 5).unwrap().coords::<f64>();
        let sx: f64 = coords.iter().map(|c| c.0).sum();
        let sy: f64 = coords.iter().map(|c| c.1).sum();
        assert_relative_eq!(sx, 0.0);
        assert_relative_eq!(sy, 0.0);
    }

    #[test]
    fn degree_one_rows_are_constant_gradients() {
        // Linear depth has constant gradient: every row pair is (1,0)/(0,1).
        let basis = build_basis::<f64>(PatchGeometry::new(2, 1).unwrap()).unwrap();
        let g = basis.matrix();
        let exps = basis.geometry().exponents();
        assert_eq!(exps, vec![(0, 1), (1, 0)]);
        for r in 0..4 {
            assert_relative_eq!(g[(2 * r, 0)], 0.0); // d/dx of y
            assert_relative_eq!(g[(2 * r + 1, 0)], 1.0); // d/dy of y
            assert_relative_eq!(g[(2 * r, 1)], 1.0); // d/dx of x
            assert_relative_eq!(g[(2 * r + 1, 1)], 0.0); // d/dy of x
        }
    }

    #[test]
    fn quadratic_entry_matches_derivative() {
        // d/dx of x^2 at x = 1 is 2; patch side 3 puts a pixel at (1, 0).
        let geom = PatchGeometry::new(3, 2).unwrap();
        let basis = build_basis::<f64>(geom).unwrap();
        let coords = geom.coords::<f64>();
        let r = coords
            .iter()
            .position(|&(x, y)| x == 1.0 && y == 0.0)
            .unwrap();
        let col = geom.exponents().iter().position(|&e| e == (2, 0)).unwrap();
        assert_relative_eq!(basis.matrix()[(2 * r, col)], 2.0);
        assert_relative_eq!(basis.matrix()[(2 * r + 1, col)], 0.0);
    }

    #[test]
    fn default_basis_shape_and_rank() {
        let basis = default_basis();
        assert_eq!(basis.matrix().nrows(), 128);
        assert_eq!(basis.matrix().ncols(), 20);
        // Independent rank oracle: count singular values of G.
        let svd = basis.matrix().clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax)
            .count();
        assert_eq!(rank, 20);
    }

    #[test]
    fn projector_inverts_basis() {
        let basis = default_basis();
        let pg = basis.projector() * basis.matrix();
        let mut max_err = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                let t = if i == j { 1.0 } else { 0.0 };
                max_err = max_err.max((pg[(i, j)] - t).abs());
            }
        }
        assert!(max_err < 1e-8, "P*G deviates from identity by {max_err}");
    }

    #[test]
    fn project_recovers_exact_member() {
        let basis = default_basis();
        let a = DVector::from_fn(20, |i, _| 0.1 * (i as f64) - 0.7);
        let flat = basis.matrix() * &a;
        let rec = basis.project(flat.as_slice()).unwrap();
        assert!((rec - &a).norm() < 1e-9);
    }

    #[test]
    fn project_zero_is_zero() {
        let basis = default_basis();
        let rec = basis.project(&[0.0; 128]).unwrap();
        assert!(rec.norm() == 0.0);
    }

    #[test]
    fn projection_ignores_orthogonal_residual() {
        // Build a residual orthogonal to col(G) through an independent SVD of
        // G, then check project(G a + r) == a.
        let basis = default_basis();
        let svd = basis.matrix().clone().svd(true, false);
        let u = svd.u.unwrap(); // 128 x 20 orthonormal basis of col(G)
        let mut v = DVector::from_fn(128, |i, _| ((i * 37 + 11) % 101) as f64 / 101.0 - 0.5);
        let proj = &u * (u.tr_mul(&v));
        v -= proj;
        let ortho = basis.matrix().tr_mul(&v).norm();
        assert!(ortho < 1e-10, "oracle residual not orthogonal: {ortho}");

        let a = DVector::from_fn(20, |i, _| (i as f64 * 0.31).sin());
        let flat = basis.matrix() * &a + &v;
        let rec = basis.project(flat.as_slice()).unwrap();
        assert!((rec - &a).norm() < 1e-7);
    }

    #[test]
    fn evaluate_zero_coeffs_gives_up_normals() {
        let basis = default_basis();
        let normals = basis.evaluate_normals(&DVector::zeros(20));
        for n in normals {
            assert_relative_eq!(n, Vector3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn evaluate_unit_x_slope() {
        let basis = default_basis();
        let mut a = DVector::zeros(20);
        let col = basis
            .geometry()
            .exponents()
            .iter()
            .position(|&e| e == (1, 0))
            .unwrap();
        a[col] = 1.0;
        let grads = basis.evaluate_gradients(&a);
        let expect = Vector3::new(1.0, 0.0, 1.0) / 2.0f64.sqrt();
        for (g, n) in grads.iter().zip(basis.evaluate_normals(&a)) {
            assert_relative_eq!(*g, Vector2::new(1.0, 0.0), epsilon = 1e-12);
            assert_relative_eq!(n, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn evaluated_gradients_have_zero_curl() {
        // Integrability by construction: d/dy of the model x-gradient equals
        // d/dx of the model y-gradient. Checked with 5-point central
        // differences, which are exact for the degree <= 4 gradient
        // polynomials on the unit-spaced patch grid.
        let basis = default_basis();
        let a = DVector::from_fn(20, |i, _| ((i as f64) * 0.7).cos());
        let grads = basis.evaluate_gradients(&a);
        let side = 8usize;
        let gx = |i: usize, j: usize| grads[j * side + i].x;
        let gy = |i: usize, j: usize| grads[j * side + i].y;
        let d5 = |f: &dyn Fn(i64) -> f64| (-f(2) + 8.0 * f(1) - 8.0 * f(-1) + f(-2)) / 12.0;
        for j in 2..side - 2 {
            for i in 2..side - 2 {
                let dgx_dy = d5(&|o| gx(i, (j as i64 + o) as usize));
                let dgy_dx = d5(&|o| gy((i as i64 + o) as usize, j));
                assert_relative_eq!(dgx_dy, dgy_dx, epsilon = 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn project_evaluate_idempotent(seed in 0u64..1000) {
            let basis = default_basis();
            let a = DVector::from_fn(20, |i, _| {
                let x = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add((i as u64).wrapping_mul(1442695040888963407))
                    as f64;
                (x / u64::MAX as f64) - 0.5
            });
            let flat = basis.matrix() * &a;
            let rec = basis.project(flat.as_slice()).unwrap();
            prop_assert!((rec - &a).norm() < 1e-9);
        }
    }
}
