//! Local patch-wise inference.
//!
//! Stage one of the pipeline: invert every pixel under an assumed albedo
//! chromaticity, project each patch's pixel-wise gradients onto the
//! polynomial shape model, score the fit by normalized rendering error,
//! pool scores over the discretized albedo space into a histogram, pick the
//! global albedo set as its non-maxima-suppressed peaks, and finally emit a
//! per-patch distribution of candidate shapes over that set.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::albedo::{AlbedoCandidate, AlbedoGrid};
use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::field::RgbImage;
use crate::lighting::LightingRig;
use crate::num::{cast, to_f64, Scalar};
use crate::patches::PatchGrid;

/// Default minimum `|w|` below which a pixel inversion is invalid.
pub const EPS_LUMINANCE: f64 = 1e-8;
/// Minimum allowed chromaticity component for inversion.
pub const MIN_CHROMA: f64 = 1e-6;
/// Minimum `w_z / |w|` for a pixel inversion to count as camera-facing.
pub const EPS_INV_NZ: f64 = 1e-6;

/// Thresholds for pixel-wise inversion.
#[derive(Debug, Clone, Copy)]
pub struct InversionParams<T: Scalar> {
    /// Pixels with `|w| < eps_luminance` are flagged invalid.
    pub eps_luminance: T,
    /// Pixels with `w_z <= eps_nz * |w|` are flagged invalid (shadowed or
    /// physically inconsistent under the assumed chromaticity).
    pub eps_nz: T,
}

impl<T: Scalar> Default for InversionParams<T> {
    fn default() -> Self {
        Self {
            eps_luminance: cast(EPS_LUMINANCE),
            eps_nz: cast(EPS_INV_NZ),
        }
    }
}

/// Pixel-wise inversion results for one assumed chromaticity.
#[derive(Debug, Clone)]
pub struct PixelInversion<T: Scalar> {
    width: usize,
    height: usize,
    luminance: Vec<T>,
    gradient: Vec<Vector2<T>>,
    valid: Vec<bool>,
}

impl<T: Scalar> PixelInversion<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Per-pixel luminance `|w|`.
    #[inline]
    pub fn luminance(&self) -> &[T] {
        &self.luminance
    }

    /// Per-pixel depth gradient of the inverted normal.
    #[inline]
    pub fn gradients(&self) -> &[Vector2<T>] {
        &self.gradient
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Inverted unit normal at a flat pixel index, `None` if invalid.
    pub fn normal(&self, index: usize) -> Option<Vector3<T>> {
        if !self.valid[index] {
            return None;
        }
        Some(crate::render::gradient_to_normal(&self.gradient[index]))
    }
}

/// Invert every pixel under an assumed albedo chromaticity:
/// `w = L^-T diag(chroma)^-1 v`, so `luminance = |w|` and the normal is
/// `w / |w|`.
///
/// The sign convention `luminance >= 0` forces the normal's z component to
/// carry the sign of `w_z`; pixels with `w_z <= 0` (or `|w|` below threshold)
/// cannot be camera-facing and are flagged invalid.
pub fn invert_pixels<T: Scalar>(
    image: &RgbImage<T>,
    rig: &LightingRig<T>,
    chroma: &Vector3<T>,
    params: InversionParams<T>,
) -> Result<PixelInversion<T>> {
    let min_c = cast::<T>(MIN_CHROMA);
    if chroma.x < min_c || chroma.y < min_c || chroma.z < min_c {
        return Err(Error::ChromaticityTooSmall {
            value: to_f64(chroma.min()),
            min: MIN_CHROMA,
        });
    }
    let n = image.len();
    let mut out = PixelInversion {
        width: image.width(),
        height: image.height(),
        luminance: vec![T::zero(); n],
        gradient: vec![Vector2::zeros(); n],
        valid: vec![false; n],
    };
    invert_pixels_into(image, rig, chroma, params, &mut out);
    Ok(out)
}

fn invert_pixels_into<T: Scalar>(
    image: &RgbImage<T>,
    rig: &LightingRig<T>,
    chroma: &Vector3<T>,
    params: InversionParams<T>,
    out: &mut PixelInversion<T>,
) {
    let inv_chroma = Matrix3::from_diagonal(&Vector3::new(
        T::one() / chroma.x,
        T::one() / chroma.y,
        T::one() / chroma.z,
    ));
    let w_matrix = rig.inverse_transpose() * inv_chroma;
    let data = image.data();
    let mask = image.mask();
    for i in 0..image.len() {
        if !mask[i] {
            out.luminance[i] = T::zero();
            out.gradient[i] = Vector2::zeros();
            out.valid[i] = false;
            continue;
        }
        let w = &w_matrix * data[i];
        let norm = w.norm();
        let ok = norm >= params.eps_luminance && w.z > params.eps_nz * norm;
        if ok {
            out.luminance[i] = norm;
            out.gradient[i] = Vector2::new(w.x / w.z, w.y / w.z);
        } else {
            out.luminance[i] = T::zero();
            out.gradient[i] = Vector2::zeros();
        }
        out.valid[i] = ok;
    }
}

/// Normalized rendering error of a modeled patch:
/// `sum |v - diag(albedo) L^T n|^2 / sum |v|^2`.
///
/// The prediction is deliberately unclipped: shadowed observations inflate
/// the score, which is the robustness signal the histogram voting relies on.
/// Returns an error when the patch is all black (zero denominator).
pub fn rendering_score<T: Scalar>(
    observed: &[Vector3<T>],
    normals: &[Vector3<T>],
    rig: &LightingRig<T>,
    albedo: &Vector3<T>,
) -> Result<T> {
    if observed.len() != normals.len() {
        return Err(Error::BufferLength {
            what: "rendering_score normals",
            expected: observed.len(),
            got: normals.len(),
        });
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for (v, n) in observed.iter().zip(normals) {
        let pred = albedo.component_mul(&rig.shading(n));
        num += (v - pred).norm_squared();
        den += v.norm_squared();
    }
    if den <= T::zero() {
        return Err(Error::input("all-black patch has no rendering score"));
    }
    Ok(num / den)
}

/// `sum |v|^2` per patch; patches with zero norm are skipped downstream.
pub fn patch_intensity_norms<T: Scalar>(image: &RgbImage<T>, patches: &PatchGrid) -> Vec<T> {
    let data = image.data();
    (0..patches.len())
        .map(|m| {
            let mut s = T::zero();
            for idx in patches.pixel_indices(m) {
                s += data[idx].norm_squared();
            }
            s
        })
        .collect()
}

/// One patch's fit under an assumed chromaticity.
#[derive(Debug, Clone)]
pub struct PatchFit<T: Scalar> {
    /// Patch luminance estimate (mean of pixel luminances, or the snapped
    /// candidate value in the restricted stage).
    pub luminance: T,
    /// Polynomial shape coefficients.
    pub coeffs: Vec<T>,
    /// Normalized rendering error of the modeled patch.
    pub score: T,
}

/// How the patch luminance entering the score is chosen.
enum LuminanceRule<T> {
    /// Mean of the per-pixel luminances (albedo-set discovery stage).
    PatchMean,
    /// Snap to a fixed candidate luminance (restricted local distributions).
    Fixed(T),
}

/// Scratch buffers and batched results for fitting all patches under one
/// chromaticity. The heavy steps are two matrix products shared across the
/// whole patch set.
struct FitBatch<T: Scalar> {
    /// Concatenated pixel gradients, one column per patch.
    n: DMatrix<T>,
    /// Model coefficients, one column per patch.
    a: DMatrix<T>,
    /// Model gradients `G a`, one column per patch.
    u: DMatrix<T>,
    lum: Vec<T>,
    score: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Scalar> FitBatch<T> {
    fn new(rows: usize, n_coeff: usize, n_patches: usize) -> Self {
        Self {
            n: DMatrix::zeros(rows, n_patches),
            a: DMatrix::zeros(n_coeff, n_patches),
            u: DMatrix::zeros(rows, n_patches),
            lum: vec![T::zero(); n_patches],
            score: vec![T::zero(); n_patches],
            valid: vec![false; n_patches],
        }
    }
}

fn fit_all_patches<T: Scalar>(
    image: &RgbImage<T>,
    inv: &PixelInversion<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    rig: &LightingRig<T>,
    chroma: &Vector3<T>,
    norms: &[T],
    rule: LuminanceRule<T>,
    batch: &mut FitBatch<T>,
) {
    let m_count = patches.len();
    let n_px = basis.geometry().n_pixels();
    let inv_npx = T::one() / cast::<T>(n_px as f64);

    // Gather pixel gradients and mean luminances; a patch is usable for this
    // chromaticity only if every pixel inverted validly and it is not black.
    for m in 0..m_count {
        let mut ok = norms[m] > T::zero();
        let mut lum_sum = T::zero();
        let col = &mut batch.n.column_mut(m);
        for (r, idx) in patches.pixel_indices(m).enumerate() {
            if !inv.valid[idx] {
                ok = false;
                break;
            }
            let g = inv.gradient[idx];
            col[2 * r] = g.x;
            col[2 * r + 1] = g.y;
            lum_sum += inv.luminance[idx];
        }
        batch.valid[m] = ok;
        if !ok {
            batch.n.column_mut(m).fill(T::zero());
        }
        batch.lum[m] = match rule {
            LuminanceRule::PatchMean => lum_sum * inv_npx,
            LuminanceRule::Fixed(t) => t,
        };
    }

    // Shared least-squares projection and model evaluation.
    batch.a.gemm(T::one(), basis.projector(), &batch.n, T::zero());
    batch.u.gemm(T::one(), basis.matrix(), &batch.a, T::zero());

    // Normalized rendering error per patch against the modeled normals.
    let data = image.data();
    for m in 0..m_count {
        if !batch.valid[m] {
            batch.score[m] = cast(f64::INFINITY);
            continue;
        }
        let albedo = chroma * batch.lum[m];
        let ucol = batch.u.column(m);
        let mut num = T::zero();
        for (r, idx) in patches.pixel_indices(m).enumerate() {
            let normal = crate::render::gradient_to_normal(&Vector2::new(ucol[2 * r], ucol[2 * r + 1]));
            let pred = albedo.component_mul(&rig.shading(&normal));
            num += (data[idx] - pred).norm_squared();
        }
        batch.score[m] = num / norms[m];
    }
}

/// Fit every patch under one assumed chromaticity.
///
/// Returns one entry per patch in patch order; `None` marks patches skipped
/// for this chromaticity (some pixel failed inversion, or the patch is all
/// black).
pub fn fit_patches<T: Scalar>(
    image: &RgbImage<T>,
    inv: &PixelInversion<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    rig: &LightingRig<T>,
    chroma: &Vector3<T>,
) -> Vec<Option<PatchFit<T>>> {
    let norms = patch_intensity_norms(image, patches);
    let mut batch = FitBatch::new(
        2 * basis.geometry().n_pixels(),
        basis.geometry().n_coeff(),
        patches.len(),
    );
    fit_all_patches(
        image,
        inv,
        patches,
        basis,
        rig,
        chroma,
        &norms,
        LuminanceRule::PatchMean,
        &mut batch,
    );
    (0..patches.len())
        .map(|m| {
            if !batch.valid[m] {
                return None;
            }
            Some(PatchFit {
                luminance: batch.lum[m],
                coeffs: batch.a.column(m).iter().copied().collect(),
                score: batch.score[m],
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Histogram over the albedo grid
// ---------------------------------------------------------------------------

/// Histogram of clipped patch scores over the full discrete albedo set.
///
/// Stored chromaticity-major: `data[chroma * n_lum + lum]`.
#[derive(Debug, Clone)]
pub struct AlbedoHistogram<T: Scalar> {
    grid: AlbedoGrid,
    data: Vec<T>,
}

impl<T: Scalar> AlbedoHistogram<T> {
    pub fn zeros(grid: AlbedoGrid) -> Self {
        Self {
            data: vec![T::zero(); grid.n_lum * grid.n_chroma()],
            grid,
        }
    }

    #[inline]
    pub fn grid(&self) -> &AlbedoGrid {
        &self.grid
    }

    #[inline]
    pub fn value(&self, lum: usize, chroma: usize) -> T {
        self.data[chroma * self.grid.n_lum + lum]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Sum of all bin values.
    pub fn total_mass(&self) -> T {
        let mut s = T::zero();
        for &v in &self.data {
            s += v;
        }
        s
    }
}

fn accumulate_column<T: Scalar>(
    column: &mut [T],
    grid: &AlbedoGrid,
    score_clip: T,
    fits: impl Iterator<Item = Option<(T, T)>>,
) {
    for fit in fits {
        let Some((lum, score)) = fit else { continue };
        let w = (score_clip - score).max(T::zero());
        if w > T::zero() {
            column[grid.quantize_luminance(lum)] += w;
        }
    }
}

/// Build the histogram from per-chromaticity patch fits.
///
/// `fits_by_chroma` yields `(chromaticity index, per-patch (luminance,
/// score))`; `None` entries are skipped patches and contribute nothing. Each
/// usable patch adds `max(0, score_clip - score)` to exactly one luminance
/// bin of the chromaticity it was fit under.
pub fn build_histogram<T: Scalar>(
    grid: AlbedoGrid,
    score_clip: T,
    fits_by_chroma: impl IntoIterator<Item = (usize, Vec<Option<(T, T)>>)>,
) -> Result<AlbedoHistogram<T>> {
    if !(score_clip > T::zero()) {
        return Err(Error::config("score_clip must be > 0"));
    }
    let mut hist = AlbedoHistogram::zeros(grid);
    let n_lum = grid.n_lum;
    for (c, fits) in fits_by_chroma {
        if c >= grid.n_chroma() {
            return Err(Error::IndexOutOfRange {
                what: "chromaticity bin",
                index: c,
                len: grid.n_chroma(),
            });
        }
        let column = &mut hist.data[c * n_lum..(c + 1) * n_lum];
        accumulate_column(column, &grid, score_clip, fits.into_iter());
    }
    Ok(hist)
}

// ---------------------------------------------------------------------------
// Global albedo set selection
// ---------------------------------------------------------------------------

/// The restricted set of albedo candidates: peak bins of the histogram.
#[derive(Debug, Clone)]
pub struct GlobalAlbedoSet<T: Scalar> {
    pub candidates: Vec<AlbedoCandidate<T>>,
    /// `(luminance bin, chromaticity bin)` of each candidate.
    pub bins: Vec<(usize, usize)>,
    /// Histogram value at each peak.
    pub values: Vec<T>,
}

impl<T: Scalar> GlobalAlbedoSet<T> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Build a set directly from candidates (tests and diagnostics; bins are
    /// synthesized from the grid by quantization).
    pub fn from_candidates(candidates: Vec<AlbedoCandidate<T>>) -> Self {
        let n = candidates.len();
        Self {
            candidates,
            bins: vec![(0, 0); n],
            values: vec![T::zero(); n],
        }
    }
}

/// Select the `k` highest-valued local maxima of the histogram under 3x3x3
/// non-maxima suppression in `(luminance, elevation, azimuth)` index space.
///
/// Azimuth does not wrap. Plateau ties go to the lexicographically smallest
/// `(luminance, elevation, azimuth)` cell. Fewer than `k` peaks returns all
/// of them; an all-zero histogram is an error.
pub fn select_albedo_set<T: Scalar>(
    hist: &AlbedoHistogram<T>,
    k: usize,
) -> Result<GlobalAlbedoSet<T>> {
    if k == 0 {
        return Err(Error::config("albedo set size must be >= 1"));
    }
    let grid = *hist.grid();
    let (nl, ne, na) = (grid.n_lum, grid.n_elev, grid.n_azim);
    let value = |l: usize, e: usize, a: usize| hist.value(l, grid.chroma_index(e, a));
    let rank = |l: usize, e: usize, a: usize| (l, e, a);

    let mut peaks: Vec<(T, (usize, usize, usize))> = Vec::new();
    for l in 0..nl {
        for e in 0..ne {
            for a in 0..na {
                let v = value(l, e, a);
                if !(v > T::zero()) {
                    continue;
                }
                let mut is_peak = true;
                'nbrs: for dl in -1i64..=1 {
                    for de in -1i64..=1 {
                        for da in -1i64..=1 {
                            if dl == 0 && de == 0 && da == 0 {
                                continue;
                            }
                            let (ql, qe, qa) =
                                (l as i64 + dl, e as i64 + de, a as i64 + da);
                            if ql < 0
                                || qe < 0
                                || qa < 0
                                || ql >= nl as i64
                                || qe >= ne as i64
                                || qa >= na as i64
                            {
                                continue;
                            }
                            let (ql, qe, qa) = (ql as usize, qe as usize, qa as usize);
                            let qv = value(ql, qe, qa);
                            if qv > v || (qv == v && rank(ql, qe, qa) < rank(l, e, a)) {
                                is_peak = false;
                                break 'nbrs;
                            }
                        }
                    }
                }
                if is_peak {
                    peaks.push((v, (l, e, a)));
                }
            }
        }
    }
    if peaks.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    peaks.sort_by(|(va, ka), (vb, kb)| {
        vb.partial_cmp(va)
            .expect("histogram values are finite")
            .then_with(|| ka.cmp(kb))
    });
    peaks.truncate(k);

    let mut candidates = Vec::with_capacity(peaks.len());
    let mut bins = Vec::with_capacity(peaks.len());
    let mut values = Vec::with_capacity(peaks.len());
    for (v, (l, e, a)) in peaks {
        let c = grid.chroma_index(e, a);
        candidates.push(grid.candidate(l, c)?);
        bins.push((l, c));
        values.push(v);
    }
    Ok(GlobalAlbedoSet {
        candidates,
        bins,
        values,
    })
}

// ---------------------------------------------------------------------------
// Albedo-set discovery driver
// ---------------------------------------------------------------------------

/// Parameters for albedo-set discovery.
#[derive(Debug, Clone, Copy)]
pub struct DiscoveryParams<T: Scalar> {
    /// Histogram vote clip (`max(0, clip - score)` per patch).
    pub score_clip: T,
    pub inversion: InversionParams<T>,
}

/// Sweep the full chromaticity grid, fit all patches per chromaticity, and
/// vote into a histogram. Chromaticities are processed in parallel; each one
/// owns its histogram column and accumulates in fixed patch order, so the
/// result is identical for any thread count or chromaticity order.
pub fn compute_histogram<T: Scalar>(
    image: &RgbImage<T>,
    rig: &LightingRig<T>,
    grid: AlbedoGrid,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    params: DiscoveryParams<T>,
) -> Result<AlbedoHistogram<T>> {
    if !(params.score_clip > T::zero()) {
        return Err(Error::config("score_clip must be > 0"));
    }
    let norms = patch_intensity_norms(image, patches);
    let mut hist = AlbedoHistogram::zeros(grid);
    let n_lum = grid.n_lum;
    let rows = 2 * basis.geometry().n_pixels();
    let n_coeff = basis.geometry().n_coeff();

    hist.data
        .par_chunks_mut(n_lum)
        .enumerate()
        .try_for_each(|(c, column)| -> Result<()> {
            let chroma = grid.chroma_center_flat::<T>(c)?;
            let inv = invert_pixels(image, rig, &chroma, params.inversion)?;
            let mut batch = FitBatch::new(rows, n_coeff, patches.len());
            fit_all_patches(
                image,
                &inv,
                patches,
                basis,
                rig,
                &chroma,
                &norms,
                LuminanceRule::PatchMean,
                &mut batch,
            );
            accumulate_column(
                column,
                &grid,
                params.score_clip,
                (0..patches.len()).map(|m| {
                    if batch.valid[m] {
                        Some((batch.lum[m], batch.score[m]))
                    } else {
                        None
                    }
                }),
            );
            Ok(())
        })?;
    Ok(hist)
}

// ---------------------------------------------------------------------------
// Local shape distributions over the global albedo set
// ---------------------------------------------------------------------------

/// Per-patch candidate shapes and scores over the global albedo set.
///
/// Stored candidate-major so both construction and the solver's candidate
/// sweeps touch contiguous memory: `scores[k * n_patches + m]`,
/// `coeffs[(k * n_patches + m) * n_coeff ..]`. Invalid `(patch, candidate)`
/// pairs carry an infinite score.
#[derive(Debug, Clone)]
pub struct LocalDistributions<T: Scalar> {
    n_patches: usize,
    n_candidates: usize,
    n_coeff: usize,
    scores: Vec<T>,
    coeffs: Vec<T>,
    /// `|G a|^2` cached per entry.
    pred_norm_sq: Vec<T>,
}

impl<T: Scalar> LocalDistributions<T> {
    /// Assemble distributions from raw candidate-major score and coefficient
    /// slabs (`scores[k * n_patches + m]`, coefficients likewise). Invalid
    /// entries are marked by non-finite scores. `|G a|^2` is cached from the
    /// basis Gram matrix.
    pub fn from_parts(
        n_patches: usize,
        n_candidates: usize,
        scores: Vec<T>,
        coeffs: Vec<T>,
        basis: &BasisMatrix<T>,
    ) -> Result<Self> {
        let n_coeff = basis.geometry().n_coeff();
        if scores.len() != n_patches * n_candidates {
            return Err(Error::BufferLength {
                what: "distribution scores",
                expected: n_patches * n_candidates,
                got: scores.len(),
            });
        }
        if coeffs.len() != n_patches * n_candidates * n_coeff {
            return Err(Error::BufferLength {
                what: "distribution coefficients",
                expected: n_patches * n_candidates * n_coeff,
                got: coeffs.len(),
            });
        }
        let mut pred_norm_sq = vec![T::zero(); scores.len()];
        for e in 0..scores.len() {
            if scores[e].is_finite() {
                let a = nalgebra::DVector::from_column_slice(
                    &coeffs[e * n_coeff..(e + 1) * n_coeff],
                );
                pred_norm_sq[e] = basis.gram_quadratic(&a);
            }
        }
        Ok(Self {
            n_patches,
            n_candidates,
            n_coeff,
            scores,
            coeffs,
            pred_norm_sq,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    pub fn n_coeff(&self) -> usize {
        self.n_coeff
    }

    #[inline]
    pub fn score(&self, m: usize, k: usize) -> T {
        self.scores[k * self.n_patches + m]
    }

    #[inline]
    pub fn is_valid(&self, m: usize, k: usize) -> bool {
        self.score(m, k).is_finite()
    }

    #[inline]
    pub fn coeffs(&self, m: usize, k: usize) -> &[T] {
        let s = (k * self.n_patches + m) * self.n_coeff;
        &self.coeffs[s..s + self.n_coeff]
    }

    #[inline]
    pub fn pred_norm_sq(&self, m: usize, k: usize) -> T {
        self.pred_norm_sq[k * self.n_patches + m]
    }

    /// Candidate-major slices for one candidate index.
    #[inline]
    pub fn candidate_scores(&self, k: usize) -> &[T] {
        &self.scores[k * self.n_patches..(k + 1) * self.n_patches]
    }

    #[inline]
    pub fn candidate_coeffs(&self, k: usize) -> &[T] {
        let s = k * self.n_patches * self.n_coeff;
        &self.coeffs[s..s + self.n_patches * self.n_coeff]
    }

    #[inline]
    pub fn candidate_pred_norm_sq(&self, k: usize) -> &[T] {
        &self.pred_norm_sq[k * self.n_patches..(k + 1) * self.n_patches]
    }

    /// Lowest-score candidate for a patch, `None` when every candidate is
    /// invalid (the patch is an outlier from the start).
    pub fn best_candidate(&self, m: usize) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for k in 0..self.n_candidates {
            let s = self.score(m, k);
            if !s.is_finite() {
                continue;
            }
            match best {
                Some((_, bs)) if bs <= s => {}
                _ => best = Some((k, s)),
            }
        }
        best
    }

    /// Number of valid candidates for a patch.
    pub fn valid_count(&self, m: usize) -> usize {
        (0..self.n_candidates)
            .filter(|&k| self.is_valid(m, k))
            .count()
    }
}

/// Recompute shape estimates and scores for every patch, restricted to the
/// global albedo set. The patch luminance snaps to each candidate's bin
/// value, and the score is evaluated at the candidate's full albedo.
pub fn local_distributions<T: Scalar>(
    image: &RgbImage<T>,
    rig: &LightingRig<T>,
    set: &GlobalAlbedoSet<T>,
    patches: &PatchGrid,
    basis: &BasisMatrix<T>,
    inversion: InversionParams<T>,
) -> Result<LocalDistributions<T>> {
    if set.is_empty() {
        return Err(Error::input("global albedo set is empty"));
    }
    let m_count = patches.len();
    let k_count = set.len();
    let n_coeff = basis.geometry().n_coeff();
    let rows = 2 * basis.geometry().n_pixels();
    let norms = patch_intensity_norms(image, patches);

    let mut dists = LocalDistributions {
        n_patches: m_count,
        n_candidates: k_count,
        n_coeff,
        scores: vec![cast(f64::INFINITY); k_count * m_count],
        coeffs: vec![T::zero(); k_count * m_count * n_coeff],
        pred_norm_sq: vec![T::zero(); k_count * m_count],
    };

    let score_chunks = dists.scores.par_chunks_mut(m_count);
    let coeff_chunks = dists.coeffs.par_chunks_mut(m_count * n_coeff);
    let pred_chunks = dists.pred_norm_sq.par_chunks_mut(m_count);

    score_chunks
        .zip(coeff_chunks)
        .zip(pred_chunks)
        .enumerate()
        .try_for_each(|(k, ((scores, coeffs), preds))| -> Result<()> {
            let cand = &set.candidates[k];
            let inv = invert_pixels(image, rig, &cand.chroma, inversion)?;
            let mut batch = FitBatch::new(rows, n_coeff, m_count);
            fit_all_patches(
                image,
                &inv,
                patches,
                basis,
                rig,
                &cand.chroma,
                &norms,
                LuminanceRule::Fixed(cand.luminance),
                &mut batch,
            );
            // Coefficients: column-major nc x M matches the [m][coeff] slab.
            coeffs.copy_from_slice(batch.a.as_slice());
            // |G a|^2 via the Gram matrix, batched.
            let qa = basis.gram() * &batch.a;
            for m in 0..m_count {
                if batch.valid[m] {
                    scores[m] = batch.score[m];
                    preds[m] = batch.a.column(m).dot(&qa.column(m));
                } else {
                    scores[m] = cast(f64::INFINITY);
                    preds[m] = T::zero();
                }
            }
            Ok(())
        })?;
    Ok(dists)
}

// ---------------------------------------------------------------------------
// Degeneracy diagnostic
// ---------------------------------------------------------------------------

/// Numerical rank of the span of normal outer products over a patch, in
/// `[1, 6]`.
///
/// Constant-albedo recovery is unique only when the outer products
/// `n n^T` span the full 6-dimensional space of symmetric 3x3 matrices;
/// a perfect plane gives rank 1.
pub fn degeneracy_rank<T: Scalar>(normals: &[Vector3<T>]) -> Result<usize> {
    if normals.len() < 6 {
        return Err(Error::input("degeneracy rank needs at least 6 normals"));
    }
    let mut rows = DMatrix::<T>::zeros(normals.len(), 6);
    for (i, n) in normals.iter().enumerate() {
        rows[(i, 0)] = n.x * n.x;
        rows[(i, 1)] = n.y * n.y;
        rows[(i, 2)] = n.z * n.z;
        rows[(i, 3)] = n.x * n.y;
        rows[(i, 4)] = n.x * n.z;
        rows[(i, 5)] = n.y * n.z;
    }
    let svd = rows.svd(false, false);
    let smax = svd.singular_values.max();
    if !(smax > T::zero()) {
        return Ok(1);
    }
    let tol = cast::<T>(1e-8).max(T::default_epsilon() * cast::<T>(64.0));
    Ok(svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count()
        .max(1))
}
