//! Global shape estimation: alternating minimization of the consensus
//! objective
//!
//! ```text
//! L(n, {a_m}) = sum_m [ lambda |n_m - G a_m|^2
//!                       + min(gamma, min_k (s_mk + |G(a_m - a_mk)|^2)) ]
//! ```
//!
//! over the pixel-wise gradient map `n` and per-patch model coefficients
//! `{a_m}`. Each iteration sets every `n(p)` to the mean of its covering
//! patch predictions (exact minimizer in `n`), then updates each patch
//! independently (exact minimizer in `a_m` under the full-objective
//! selection rule). `lambda` follows a geometric ramp. Patches whose best
//! candidate cost exceeds `gamma` become outliers: their candidate evidence
//! is ignored, but the polynomial model still ties them to the gradient map,
//! which is what keeps the final field integrable without a separate
//! integrability term.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::field::GradientField;
use crate::local::LocalDistributions;
use crate::num::{cast, to_f64, Scalar};
use crate::patches::PatchGrid;
use crate::render::gradients_to_normals;

/// How the per-patch branch is selected in the coefficient update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// Compare full per-patch objective contributions (including the
    /// coupling to the gradient map). Every update is then an exact block
    /// minimization and the objective cannot increase.
    #[default]
    FullObjective,
    /// Compare candidate scores only (fidelity term without the coupling
    /// term). Kept for fidelity experiments; descent is not guaranteed.
    ScoreOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<T: Scalar> {
    /// Outlier threshold on the per-patch fidelity cost.
    pub gamma: T,
    pub lambda_init: T,
    pub lambda_factor: T,
    pub lambda_final: T,
    pub iterations: usize,
    pub selection: SelectionRule,
    /// Record the objective before/after each half step.
    pub trace: bool,
    /// Optional early stop: end once the lambda ramp has topped out and the
    /// objective's relative change per iteration falls below this. The fixed
    /// iteration count is the contract; this is off by default.
    pub early_stop_rel: Option<T>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            gamma: cast(4.0),
            lambda_init: cast(2f64.powi(-64)),
            lambda_factor: cast(2f64.sqrt()),
            lambda_final: cast(256.0),
            iterations: 145,
            selection: SelectionRule::FullObjective,
            trace: false,
            early_stop_rel: None,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) {
            return Err(Error::config("gamma must be > 0"));
        }
        if !(self.lambda_init > T::zero() && self.lambda_init <= self.lambda_final) {
            return Err(Error::config("lambda schedule must satisfy 0 < init <= final"));
        }
        if !(self.lambda_factor > T::one()) {
            return Err(Error::config("lambda factor must be > 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if let Some(eps) = self.early_stop_rel {
            if !(eps > T::zero()) {
                return Err(Error::config("early_stop_rel must be > 0 when set"));
            }
        }
        // The ramp must reach lambda_final within the iteration budget
        // (checked in log space to avoid overflow).
        let reach = to_f64(self.lambda_init).log2()
            + (self.iterations as f64 - 1.0) * to_f64(self.lambda_factor).log2();
        if reach < to_f64(self.lambda_final).log2() - 1e-9 {
            return Err(Error::config(
                "lambda schedule does not reach lambda_final within the iteration count",
            ));
        }
        Ok(())
    }

    /// Lambda at iteration `i` (clamped ramp).
    pub fn lambda_at(&self, i: usize) -> T {
        let mut l = self.lambda_init;
        for _ in 0..i {
            l = (l * self.lambda_factor).min(self.lambda_final);
        }
        l
    }
}

/// Objective values around one iteration, recorded when tracing.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow<T: Scalar> {
    pub iteration: usize,
    pub lambda: T,
    /// Objective at this lambda before the iteration's updates.
    pub start: T,
    pub after_n_step: T,
    pub after_a_step: T,
    pub outliers: usize,
}

/// Mutable solver state.
#[derive(Debug, Clone)]
pub struct SolverState<T: Scalar> {
    /// Current pixel-wise gradient map (masked to patch-covered pixels).
    pub gradients: GradientField<T>,
    /// Per-patch coefficients, `[m][n_coeff]`.
    pub coeffs: Vec<T>,
    /// Selected branch per patch: 0 = outlier, `k + 1` = candidate `k`.
    pub selection: Vec<u32>,
    coverage: Vec<u32>,
}

impl<T: Scalar> SolverState<T> {
    pub fn outlier_count(&self) -> usize {
        self.selection.iter().filter(|&&s| s == 0).count()
    }

    pub fn outliers(&self) -> Vec<bool> {
        self.selection.iter().map(|&s| s == 0).collect()
    }

    pub fn patch_coeffs(&self, m: usize, n_coeff: usize) -> &[T] {
        &self.coeffs[m * n_coeff..(m + 1) * n_coeff]
    }
}

/// Solver output: the harmonized normal map plus per-patch diagnostics.
#[derive(Debug, Clone)]
pub struct SolveOutput<T: Scalar> {
    pub normals: crate::field::NormalField<T>,
    pub gradients: GradientField<T>,
    /// Final branch selection per patch (0 = outlier).
    pub selection: Vec<u32>,
    pub outlier_count: usize,
    pub trace: Vec<TraceRow<T>>,
}

fn check_shapes<T: Scalar>(
    dists: &LocalDistributions<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
) -> Result<()> {
    if patches.is_empty() {
        return Err(Error::EmptyMask {
            context: "solver needs at least one patch",
        });
    }
    if dists.n_patches() != patches.len() {
        return Err(Error::BufferLength {
            what: "local distributions",
            expected: patches.len(),
            got: dists.n_patches(),
        });
    }
    if dists.n_coeff() != basis.geometry().n_coeff() {
        return Err(Error::BufferLength {
            what: "distribution coefficients",
            expected: basis.geometry().n_coeff(),
            got: dists.n_coeff(),
        });
    }
    if patches.side() != basis.geometry().side() {
        return Err(Error::config("patch grid and basis disagree on side"));
    }
    Ok(())
}

/// Initialize: each patch takes its lowest-score candidate (or the outlier
/// branch with zero coefficients when it has none), and the gradient map is
/// the mean of covering patch predictions.
pub fn initialize<T: Scalar>(
    dists: &LocalDistributions<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
) -> Result<SolverState<T>> {
    check_shapes(dists, patches, basis)?;
    let n_coeff = basis.geometry().n_coeff();
    let m_count = patches.len();
    let mut coeffs = vec![T::zero(); m_count * n_coeff];
    let mut selection = vec![0u32; m_count];
    for m in 0..m_count {
        if let Some((k, _)) = dists.best_candidate(m) {
            selection[m] = k as u32 + 1;
            coeffs[m * n_coeff..(m + 1) * n_coeff].copy_from_slice(dists.coeffs(m, k));
        }
    }
    let coverage = patches.coverage();
    let mask: Vec<bool> = coverage.iter().map(|&c| c > 0).collect();
    let gradients = GradientField::new_unchecked(
        patches.image_width(),
        patches.image_height(),
        vec![nalgebra::Vector2::zeros(); coverage.len()],
        mask,
    );
    let mut state = SolverState {
        gradients,
        coeffs,
        selection,
        coverage,
    };
    n_step(&mut state, patches, basis);
    Ok(state)
}

/// Batched predictions `G a_m` for all patches (one column each).
fn predictions<T: Scalar>(
    coeffs: &[T],
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
) -> DMatrix<T> {
    let n_coeff = basis.geometry().n_coeff();
    let a = DMatrix::from_column_slice(n_coeff, patches.len(), coeffs);
    basis.matrix() * a
}

/// Gather the current gradient map into per-patch columns.
fn gather<T: Scalar>(
    gradients: &GradientField<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
) -> DMatrix<T> {
    let rows = 2 * basis.geometry().n_pixels();
    let mut n = DMatrix::zeros(rows, patches.len());
    let data = gradients.data();
    for m in 0..patches.len() {
        let mut col = n.column_mut(m);
        for (r, idx) in patches.pixel_indices(m).enumerate() {
            col[2 * r] = data[idx].x;
            col[2 * r + 1] = data[idx].y;
        }
    }
    n
}

/// Exact minimization over the gradient map: every pixel becomes the mean of
/// its covering patch predictions. Scatter order is fixed (patch index), so
/// the result is thread-count independent.
pub fn n_step<T: Scalar>(state: &mut SolverState<T>, patches: &PatchGrid, basis: &BasisMatrix<T>) {
    let u = predictions(&state.coeffs, patches, basis);
    let w = patches.image_width();
    let h = patches.image_height();
    let mut acc = vec![nalgebra::Vector2::<T>::zeros(); w * h];
    for m in 0..patches.len() {
        let col = u.column(m);
        for (r, idx) in patches.pixel_indices(m).enumerate() {
            acc[idx].x += col[2 * r];
            acc[idx].y += col[2 * r + 1];
        }
    }
    let data: Vec<nalgebra::Vector2<T>> = acc
        .into_iter()
        .zip(&state.coverage)
        .map(|(v, &c)| {
            if c > 0 {
                v / cast::<T>(c as f64)
            } else {
                nalgebra::Vector2::zeros()
            }
        })
        .collect();
    let mask: Vec<bool> = state.coverage.iter().map(|&c| c > 0).collect();
    state.gradients = GradientField::new_unchecked(w, h, data, mask);
}

/// Exact per-patch minimization over the coefficients at fixed gradients.
///
/// For each patch the projection of its gathered gradients is the outlier
/// optimum; each candidate's optimum is the closed-form blend
/// `(a_mk + lambda * a_proj) / (1 + lambda)`. Branch costs reduce to
/// `gamma` versus `s_mk + lambda/(1+lambda) * |u - G a_mk|^2` (full
/// objective) after dropping the shared residual term; the score-only rule
/// weighs the same distance by `(lambda/(1+lambda))^2` instead.
pub fn a_step<T: Scalar>(
    state: &mut SolverState<T>,
    dists: &LocalDistributions<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    lambda: T,
    gamma: T,
    rule: SelectionRule,
) {
    let m_count = patches.len();
    let n_coeff = basis.geometry().n_coeff();
    let k_count = dists.n_candidates();

    let n = gather(&state.gradients, patches, basis);
    let mut a_proj = DMatrix::zeros(n_coeff, m_count);
    a_proj.gemm(T::one(), basis.projector(), &n, T::zero());
    let mut q = DMatrix::zeros(n_coeff, m_count);
    q.gemm(T::one(), basis.gram(), &a_proj, T::zero());

    // |u|^2 = a_proj^T Q a_proj per patch.
    let uu: Vec<T> = (0..m_count)
        .map(|m| a_proj.column(m).dot(&q.column(m)))
        .collect();

    let blend = lambda / (T::one() + lambda);
    let weight = match rule {
        SelectionRule::FullObjective => blend,
        SelectionRule::ScoreOnly => blend * blend,
    };

    let mut best_cost = vec![gamma; m_count];
    let mut best_k = vec![0u32; m_count];
    let q_slice = q.as_slice();
    for k in 0..k_count {
        let scores = dists.candidate_scores(k);
        let coeffs_k = dists.candidate_coeffs(k);
        let preds_k = dists.candidate_pred_norm_sq(k);
        best_cost
            .par_iter_mut()
            .zip(best_k.par_iter_mut())
            .enumerate()
            .for_each(|(m, (cost, sel))| {
                let s = scores[m];
                if !s.is_finite() {
                    return;
                }
                let a_k = &coeffs_k[m * n_coeff..(m + 1) * n_coeff];
                let q_m = &q_slice[m * n_coeff..(m + 1) * n_coeff];
                let mut dot = T::zero();
                for (av, qv) in a_k.iter().zip(q_m) {
                    dot += *av * *qv;
                }
                // |u - G a_k|^2, clamped against roundoff cancellation.
                let dist = (uu[m] - dot - dot + preds_k[m]).max(T::zero());
                let c = s + weight * dist;
                if c < *cost {
                    *cost = c;
                    *sel = k as u32 + 1;
                }
            });
    }

    // Materialize the winning coefficients.
    let inv_1pl = T::one() / (T::one() + lambda);
    state
        .coeffs
        .par_chunks_mut(n_coeff)
        .enumerate()
        .for_each(|(m, out)| {
            let proj = a_proj.column(m);
            match best_k[m] {
                0 => {
                    for (o, p) in out.iter_mut().zip(proj.iter()) {
                        *o = *p;
                    }
                }
                sel => {
                    let k = sel as usize - 1;
                    let a_k = dists.coeffs(m, k);
                    for ((o, p), a) in out.iter_mut().zip(proj.iter()).zip(a_k) {
                        *o = (*a + lambda * *p) * inv_1pl;
                    }
                }
            }
        });
    state.selection = best_k;
}

/// Evaluate the consensus objective at the current state.
pub fn objective<T: Scalar>(
    state: &SolverState<T>,
    dists: &LocalDistributions<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    lambda: T,
    gamma: T,
) -> T {
    let m_count = patches.len();
    let n_coeff = basis.geometry().n_coeff();
    let n = gather(&state.gradients, patches, basis);
    let u = predictions(&state.coeffs, patches, basis);
    let a = DMatrix::from_column_slice(n_coeff, m_count, &state.coeffs);
    let mut qa = DMatrix::zeros(n_coeff, m_count);
    qa.gemm(T::one(), basis.gram(), &a, T::zero());

    let per_patch: Vec<T> = (0..m_count)
        .into_par_iter()
        .map(|m| {
            // Coupling term, computed directly to avoid cancellation.
            let mut resid = T::zero();
            for (nv, uv) in n.column(m).iter().zip(u.column(m).iter()) {
                let d = *nv - *uv;
                resid += d * d;
            }
            // Fidelity term: min over candidates of s_k + |G(a_m - a_k)|^2.
            let qa_m = qa.column(m);
            let a_m = a.column(m);
            let a_qa = a_m.dot(&qa_m);
            let mut fid = gamma;
            for k in 0..dists.n_candidates() {
                let s = dists.score(m, k);
                if !s.is_finite() {
                    continue;
                }
                let a_k = dists.coeffs(m, k);
                let mut dot = T::zero();
                for (av, qv) in a_k.iter().zip(qa_m.iter()) {
                    dot += *av * *qv;
                }
                let dist = (a_qa - dot - dot + dists.pred_norm_sq(m, k)).max(T::zero());
                fid = fid.min(s + dist);
            }
            lambda * resid + fid
        })
        .collect();
    // Fixed-order reduction.
    let mut total = T::zero();
    for v in per_patch {
        total += v;
    }
    total
}

/// Run the full alternating schedule and return the harmonized normal map.
pub fn solve<T: Scalar>(
    dists: &LocalDistributions<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    config: &SolverConfig<T>,
) -> Result<SolveOutput<T>> {
    config.validate()?;
    check_shapes(dists, patches, basis)?;
    let mut state = initialize(dists, patches, basis)?;
    let mut trace = Vec::new();
    let mut lambda = config.lambda_init;
    let mut previous_objective: Option<T> = None;
    for i in 0..config.iterations {
        let start = if config.trace {
            objective(&state, dists, patches, basis, lambda, config.gamma)
        } else {
            T::zero()
        };
        n_step(&mut state, patches, basis);
        let after_n = if config.trace {
            objective(&state, dists, patches, basis, lambda, config.gamma)
        } else {
            T::zero()
        };
        a_step(
            &mut state,
            dists,
            patches,
            basis,
            lambda,
            config.gamma,
            config.selection,
        );
        if config.trace {
            let after_a = objective(&state, dists, patches, basis, lambda, config.gamma);
            trace.push(TraceRow {
                iteration: i,
                lambda,
                start,
                after_n_step: after_n,
                after_a_step: after_a,
                outliers: state.outlier_count(),
            });
        }
        if let Some(eps) = config.early_stop_rel {
            // Only meaningful once the ramp has topped out; before that the
            // objective moves because lambda does.
            if lambda >= config.lambda_final {
                let current = objective(&state, dists, patches, basis, lambda, config.gamma);
                if let Some(prev) = previous_objective {
                    if (prev - current).abs() <= eps * prev.abs().max(T::one()) {
                        break;
                    }
                }
                previous_objective = Some(current);
            }
        }
        lambda = (lambda * config.lambda_factor).min(config.lambda_final);
    }
    let normals = gradients_to_normals(&state.gradients);
    Ok(SolveOutput {
        normals,
        gradients: state.gradients,
        outlier_count: state.selection.iter().filter(|&&s| s == 0).count(),
        selection: state.selection,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::albedo::AlbedoCandidate;
    use crate::basis::{build_basis, PatchGeometry};
    use crate::field::{AlbedoMap, NormalField};
    use crate::local::{local_distributions, GlobalAlbedoSet, InversionParams, LocalDistributions};
    use crate::render::{gradient_to_normal, render};
    use crate::synth::benchmark_rig;
    use nalgebra::{DVector, Vector2, Vector3};

    fn default_basis() -> BasisMatrix<f64> {
        build_basis(PatchGeometry::new(8, 5).unwrap()).unwrap()
    }

    /// Distributions over a single 8x8 patch from explicit (score, coeffs).
    fn single_patch_dists(
        entries: &[(f64, DVector<f64>)],
        basis: &BasisMatrix<f64>,
    ) -> LocalDistributions<f64> {
        let k = entries.len();
        let scores: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let mut coeffs = Vec::with_capacity(k * 20);
        for e in entries {
            coeffs.extend_from_slice(e.1.as_slice());
        }
        LocalDistributions::from_parts(1, k, scores, coeffs, basis).unwrap()
    }

    fn bounded_coeffs(seed: u64, max_gradient: f64, basis: &BasisMatrix<f64>) -> DVector<f64> {
        let raw = DVector::from_fn(20, |i, _| {
            let x = seed
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add((i as u64).wrapping_mul(0xBF58476D1CE4E5B9));
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let peak = basis
            .evaluate_gradients(&raw)
            .iter()
            .map(|g| g.norm())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        raw * (max_gradient / peak)
    }

    #[test]
    fn initialize_takes_best_candidate() {
        let basis = default_basis();
        let patches = PatchGrid::build(8, 8, &vec![true; 64], 8);
        let a0 = bounded_coeffs(1, 0.3, &basis);
        let a1 = bounded_coeffs(2, 0.3, &basis);
        let dists = single_patch_dists(&[(0.1, a0.clone()), (0.2, a1)], &basis);
        let state = initialize(&dists, &patches, &basis).unwrap();
        assert_eq!(state.selection, vec![1]);
        assert_eq!(state.patch_coeffs(0, 20), a0.as_slice());
        // Single covering patch: n equals the prediction exactly.
        let grads = basis.evaluate_gradients(&a0);
        for (i, g) in state.gradients.data().iter().enumerate() {
            assert!((g - grads[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn initialize_k1_and_empty() {
        let basis = default_basis();
        let patches = PatchGrid::build(8, 8, &vec![true; 64], 8);
        let a0 = bounded_coeffs(3, 0.3, &basis);
        let dists = single_patch_dists(&[(0.5, a0.clone())], &basis);
        let state = initialize(&dists, &patches, &basis).unwrap();
        assert_eq!(state.selection, vec![1]);

        let empty = single_patch_dists(&[(f64::INFINITY, DVector::zeros(20))], &basis);
        let state = initialize(&empty, &patches, &basis).unwrap();
        assert_eq!(state.selection, vec![0]);
        assert!(state.coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn n_step_averages_overlapping_predictions() {
        // 9x8 image: two horizontally overlapping 8x8 patches with constant
        // gradient predictions (1,0) and (0,1); overlap pixels average to
        // (0.5, 0.5).
        let basis = default_basis();
        let patches = PatchGrid::build(9, 8, &vec![true; 72], 8);
        assert_eq!(patches.len(), 2);
        let exps = basis.geometry().exponents();
        let x_col = exps.iter().position(|&e| e == (1, 0)).unwrap();
        let y_col = exps.iter().position(|&e| e == (0, 1)).unwrap();
        let mut coeffs = vec![0.0; 2 * 20];
        coeffs[x_col] = 1.0; // patch 0: gradient (1, 0)
        coeffs[20 + y_col] = 1.0; // patch 1: gradient (0, 1)
        let scores = vec![0.0, f64::INFINITY, f64::INFINITY, 0.0];
        let mut slab = vec![0.0; 2 * 2 * 20];
        slab[0..20].copy_from_slice(&coeffs[0..20]); // k=0, m=0
        slab[3 * 20..4 * 20].copy_from_slice(&coeffs[20..40]); // k=1, m=1
        let dists = LocalDistributions::from_parts(2, 2, scores, slab, &basis).unwrap();
        let state = initialize(&dists, &patches, &basis).unwrap();
        // Pixel (0,0): only patch 0. Pixel (4,0): both.
        assert!((state.gradients.get(0, 0) - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        assert!((state.gradients.get(4, 0) - Vector2::new(0.5, 0.5)).norm() < 1e-15);
        assert!((state.gradients.get(8, 0) - Vector2::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn a_step_selects_outlier_when_scores_exceed_gamma() {
        let basis = default_basis();
        let patches = PatchGrid::build(8, 8, &vec![true; 64], 8);
        let a0 = bounded_coeffs(4, 0.3, &basis);
        let gamma = 4.0;
        let dists = single_patch_dists(&[(gamma + 1.0, a0.clone())], &basis);
        let mut state = initialize(&dists, &patches, &basis).unwrap();
        a_step(
            &mut state,
            &dists,
            &patches,
            &basis,
            1.0,
            gamma,
            SelectionRule::FullObjective,
        );
        assert_eq!(state.selection, vec![0]);
        // Outlier coefficients are the projection of the gradient map, which
        // initialize set to G a0: the projection recovers a0.
        let got = DVector::from_column_slice(state.patch_coeffs(0, 20));
        assert!((got - &a0).norm() < 1e-9);
    }

    #[test]
    fn a_step_large_lambda_blends_to_projection() {
        let basis = default_basis();
        let patches = PatchGrid::build(8, 8, &vec![true; 64], 8);
        let a_proj = bounded_coeffs(5, 0.3, &basis);
        let a_cand = bounded_coeffs(6, 0.3, &basis);
        let dists = single_patch_dists(&[(0.0, a_cand)], &basis);
        let mut state = initialize(&dists, &patches, &basis).unwrap();
        // Overwrite the gradient map with G a_proj.
        let grads = basis.evaluate_gradients(&a_proj);
        state.gradients = GradientField::new(
            8,
            8,
            grads,
            vec![true; 64],
        )
        .unwrap();
        a_step(
            &mut state,
            &dists,
            &patches,
            &basis,
            1e12,
            4.0,
            SelectionRule::FullObjective,
        );
        assert_eq!(state.selection, vec![1]);
        let got = DVector::from_column_slice(state.patch_coeffs(0, 20));
        assert!((got - &a_proj).norm() < 1e-9, "blend should approach the projection");
    }

    #[test]
    fn a_step_consistent_candidate_is_fixed_point() {
        let basis = default_basis();
        let patches = PatchGrid::build(8, 8, &vec![true; 64], 8);
        let a1 = bounded_coeffs(7, 0.3, &basis);
        let dists = single_patch_dists(&[(0.0, a1.clone())], &basis);
        let mut state = initialize(&dists, &patches, &basis).unwrap();
        // n == G a1 after initialize; the update must return a1 exactly and
        // select the candidate with zero cost.
        a_step(
            &mut state,
            &dists,
            &patches,
            &basis,
            0.5,
            4.0,
            SelectionRule::FullObjective,
        );
        assert_eq!(state.selection, vec![1]);
        let got = DVector::from_column_slice(state.patch_coeffs(0, 20));
        assert!((got - &a1).norm() < 1e-12);
        let obj = objective(&state, &dists, &patches, &basis, 0.5, 4.0);
        assert!(obj < 1e-12, "objective {obj}");
    }

    /// Random multi-patch scenario for descent checks.
    fn random_scenario(
        seed: u64,
    ) -> (
        LocalDistributions<f64>,
        PatchGrid,
        BasisMatrix<f64>,
    ) {
        let basis = default_basis();
        let size = 16usize;
        let patches = PatchGrid::build(size, size, &vec![true; size * size], 8);
        let m = patches.len();
        let k = 3usize;
        let mut scores = Vec::with_capacity(k * m);
        let mut coeffs = Vec::with_capacity(k * m * 20);
        for kk in 0..k {
            for mm in 0..m {
                let mix = seed
                    .wrapping_mul(31)
                    .wrapping_add((kk * m + mm) as u64);
                let a = bounded_coeffs(mix, 0.4, &basis);
                // A spread of scores, some above gamma.
                let s = ((mix % 97) as f64) / 97.0 * 6.0;
                scores.push(s);
                coeffs.extend_from_slice(a.as_slice());
            }
        }
        let dists = LocalDistributions::from_parts(m, k, scores, coeffs, &basis).unwrap();
        (dists, patches, basis)
    }

    #[test]
    fn alternation_never_increases_objective() {
        for seed in 0..5u64 {
            let (dists, patches, basis) = random_scenario(seed);
            let gamma = 4.0;
            let mut state = initialize(&dists, &patches, &basis).unwrap();
            let mut lambda = 1e-6f64;
            for _ in 0..12 {
                let l0 = objective(&state, &dists, &patches, &basis, lambda, gamma);
                n_step(&mut state, &patches, &basis);
                let l1 = objective(&state, &dists, &patches, &basis, lambda, gamma);
                assert!(
                    l1 <= l0 * (1.0 + 1e-9) + 1e-12,
                    "n_step increased objective: {l0} -> {l1}"
                );
                a_step(
                    &mut state,
                    &dists,
                    &patches,
                    &basis,
                    lambda,
                    gamma,
                    SelectionRule::FullObjective,
                );
                let l2 = objective(&state, &dists, &patches, &basis, lambda, gamma);
                assert!(
                    l2 <= l1 * (1.0 + 1e-9) + 1e-12,
                    "a_step increased objective: {l1} -> {l2}"
                );
                lambda *= 2.0;
            }
        }
    }

    #[test]
    fn solve_recovers_global_polynomial_surface() {
        // Noiseless image of a global degree-5 surface with constant albedo;
        // the candidate set contains the true albedo. Final normals must
        // match the truth to a small fraction of a degree.
        let rig = benchmark_rig::<f64>();
        let size = 24usize;
        let half = size as f64 / 2.0;
        let gradient = |x: f64, y: f64| {
            Vector2::new(
                0.15 + 0.012 * y + 2e-4 * x * x * x,
                -0.1 + 0.012 * x - 3e-4 * y * y,
            )
        };
        let mut normal_data = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let g = gradient(x as f64 + 0.5 - half, y as f64 + 0.5 - half);
                normal_data.push(gradient_to_normal(&g));
            }
        }
        let normals =
            NormalField::new(size, size, normal_data, vec![true; size * size]).unwrap();
        let albedo_vec = Vector3::new(0.7, 0.55, 0.85);
        let albedo = AlbedoMap::constant(size, size, albedo_vec).unwrap();
        let image = render(&normals, &albedo, &rig, 0.0, 0).unwrap();

        let basis = default_basis();
        let patches = PatchGrid::build(size, size, image.mask(), 8);
        let truth = AlbedoCandidate::from_vector(&albedo_vec).unwrap();
        let decoy =
            AlbedoCandidate::new(1.1, Vector3::new(0.8, 0.5, 0.33).normalize()).unwrap();
        let set = GlobalAlbedoSet::from_candidates(vec![decoy, truth]);
        let dists = local_distributions(
            &image,
            &rig,
            &set,
            &patches,
            &basis,
            InversionParams::default(),
        )
        .unwrap();
        let out = solve(&dists, &patches, &basis, &SolverConfig::default()).unwrap();
        let mut worst: f64 = 0.0;
        for (est, truth) in out.normals.data().iter().zip(normals.data()) {
            let dot = est.dot(truth).clamp(-1.0, 1.0);
            worst = worst.max(dot.acos().to_degrees());
        }
        assert!(worst < 0.5, "worst angular error {worst} deg");
        assert_eq!(out.outlier_count, 0);
    }

    #[test]
    fn solve_terminates_with_all_outliers() {
        let basis = default_basis();
        let patches = PatchGrid::build(12, 12, &vec![true; 144], 8);
        let m = patches.len();
        let dists = LocalDistributions::from_parts(
            m,
            1,
            vec![f64::INFINITY; m],
            vec![0.0; m * 20],
            &basis,
        )
        .unwrap();
        let config = SolverConfig {
            iterations: 30,
            lambda_init: 1e-6,
            lambda_final: 256.0,
            lambda_factor: 2.0,
            ..Default::default()
        };
        let out = solve(&dists, &patches, &basis, &config).unwrap();
        assert_eq!(out.outlier_count, m);
        // Smoothed projection fixed point: flat zero gradients here.
        for g in out.gradients.data() {
            assert!(g.norm() < 1e-12);
        }
    }

    #[test]
    fn solve_trace_is_monotone_within_iterations() {
        let (dists, patches, basis) = random_scenario(11);
        let config = SolverConfig {
            iterations: 25,
            lambda_init: 1e-8,
            lambda_final: 64.0,
            lambda_factor: 3.0,
            trace: true,
            ..Default::default()
        };
        let out = solve(&dists, &patches, &basis, &config).unwrap();
        assert_eq!(out.trace.len(), 25);
        for row in &out.trace {
            let slack = 1e-9 * row.start.abs().max(1.0);
            assert!(row.after_n_step <= row.start + slack);
            assert!(row.after_a_step <= row.after_n_step + slack);
        }
    }

    #[test]
    fn a_step_is_thread_count_invariant() {
        let (dists, patches, basis) = random_scenario(23);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut state = initialize(&dists, &patches, &basis).unwrap();
                for i in 0..6 {
                    n_step(&mut state, &patches, &basis);
                    a_step(
                        &mut state,
                        &dists,
                        &patches,
                        &basis,
                        2f64.powi(i - 3),
                        4.0,
                        SelectionRule::FullObjective,
                    );
                }
                (state.coeffs.clone(), state.selection.clone())
            })
        };
        let (c1, s1) = run(1);
        let (c4, s4) = run(4);
        assert_eq!(s1, s4);
        assert_eq!(c1, c4); // bit-identical
    }

    #[test]
    fn score_only_rule_differs_but_runs() {
        let (dists, patches, basis) = random_scenario(31);
        let mut cfg = SolverConfig::default();
        cfg.iterations = 20;
        cfg.lambda_init = 1e-6;
        cfg.lambda_factor = 3.0;
        cfg.lambda_final = 64.0;
        cfg.selection = SelectionRule::ScoreOnly;
        let out = solve(&dists, &patches, &basis, &cfg).unwrap();
        assert_eq!(out.normals.width(), 16);
    }

    #[test]
    fn early_stop_ends_after_ramp_tops_out() {
        let (dists, patches, basis) = random_scenario(17);
        let base = SolverConfig::<f64> {
            iterations: 60,
            lambda_init: 1e-6,
            lambda_factor: 3.0,
            lambda_final: 64.0,
            trace: true,
            ..Default::default()
        };
        let full = solve(&dists, &patches, &basis, &base).unwrap();
        let stopped = solve(
            &dists,
            &patches,
            &basis,
            &SolverConfig {
                early_stop_rel: Some(1e-10),
                ..base
            },
        )
        .unwrap();
        assert!(stopped.trace.len() < full.trace.len());
        // At the fixed point the results agree.
        for (a, b) in stopped.gradients.data().iter().zip(full.gradients.data()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        // Default schedule reaches exactly 256 on the last iteration.
        assert!((cfg.lambda_at(144) - 256.0).abs() < 1e-9);
        cfg.iterations = 100; // ramp cannot reach 256 in 100 steps
        assert!(cfg.validate().is_err());
        cfg = SolverConfig::default();
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
    }
}
