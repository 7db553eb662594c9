//! Least-squares depth from a normal (or gradient) field.
//!
//! Every pair of adjacent masked-in pixels contributes one equation
//! `z(q) - z(p) = d`, with `d` obtained by integrating the sampled gradient
//! across the edge using a moment-fitted quadrature over up to six samples
//! along the row or column. The rule is exact for polynomial gradients up to
//! degree five, so depth from an analytic polynomial surface is recovered
//! exactly (up to the additive constant). The resulting normal equations form
//! a graph Laplacian per connected mask component, solved by conjugate
//! gradients; each component is normalized to zero mean.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{GradientField, NormalField, ScalarField};
use crate::num::{cast, Scalar};
use crate::render::normals_to_gradients;

/// Max quadrature stencil width (exact for integrand degree `<=` width-1).
const MAX_STENCIL: usize = 6;

/// Integration output.
#[derive(Debug, Clone)]
pub struct IntegrationResult<T: Scalar> {
    /// Zero-mean depth per connected component; masked-out elsewhere.
    pub depth: ScalarField<T>,
    /// RMS of `z(q) - z(p) - d` over all edges (zero for integrable input).
    pub residual_rms: T,
    /// Total conjugate-gradient iterations across components.
    pub cg_iterations: usize,
}

/// Quadrature weights for integrating a sampled function over `[0, 1]` given
/// samples at integer offsets `start..start + len` (relative to the left
/// edge endpoint). Moment-fitted: exact for polynomials of degree < len.
fn edge_weights(start: i64, len: usize) -> Vec<f64> {
    let mut vandermonde = DMatrix::<f64>::zeros(len, len);
    let mut moments = DVector::<f64>::zeros(len);
    for d in 0..len {
        moments[d] = 1.0 / (d as f64 + 1.0); // integral of t^d over [0,1]
        for (j, col) in (0..len).enumerate() {
            vandermonde[(d, j)] = ((start + col as i64) as f64).powi(d as i32);
        }
    }
    vandermonde
        .lu()
        .solve(&moments)
        .expect("Vandermonde with distinct nodes is invertible")
        .iter()
        .copied()
        .collect()
}

/// Cache of edge weights keyed by (start offset, stencil length).
struct WeightTable {
    table: HashMap<(i64, usize), Vec<f64>>,
}

impl WeightTable {
    fn new() -> Self {
        Self {
            table: HashMap::new(),
        }
    }

    fn get(&mut self, start: i64, len: usize) -> &[f64] {
        self.table
            .entry((start, len))
            .or_insert_with(|| edge_weights(start, len))
    }
}

/// Integrate gradients across the edge from run position `pos` to `pos + 1`
/// within a contiguous run of `run_len` samples; `sample(i)` returns the
/// gradient component at run index `i`.
fn edge_target<T: Scalar>(
    weights: &mut WeightTable,
    run_len: usize,
    pos: usize,
    sample: impl Fn(usize) -> T,
) -> T {
    let len = run_len.min(MAX_STENCIL);
    // Center the stencil on the edge, clamped inside the run.
    let ideal = pos as i64 - (len as i64 - 2) / 2 - 1 + 1;
    let start_in_run = ideal.clamp(0, (run_len - len) as i64);
    let w = weights.get(start_in_run - pos as i64, len);
    let mut acc = T::zero();
    for (j, &wj) in w.iter().enumerate() {
        acc += cast::<T>(wj) * sample(start_in_run as usize + j);
    }
    acc
}

struct EdgeSystem<T> {
    /// `(from index, to index, target difference)` in compact numbering.
    edges: Vec<(u32, u32, T)>,
    /// Compact index per masked pixel.
    compact: Vec<i64>,
    n_unknowns: usize,
}

fn build_edges<T: Scalar>(g: &GradientField<T>) -> EdgeSystem<T> {
    let (w, h) = (g.width(), g.height());
    let mask = g.mask();
    let mut compact = vec![-1i64; w * h];
    let mut n_unknowns = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            compact[i] = n_unknowns as i64;
            n_unknowns += 1;
        }
    }
    let mut weights = WeightTable::new();
    let mut edges = Vec::new();

    // Horizontal runs.
    for y in 0..h {
        let mut x0 = 0usize;
        while x0 < w {
            if !mask[y * w + x0] {
                x0 += 1;
                continue;
            }
            let mut x1 = x0;
            while x1 + 1 < w && mask[y * w + x1 + 1] {
                x1 += 1;
            }
            let run_len = x1 - x0 + 1;
            for pos in 0..run_len.saturating_sub(1) {
                let d = edge_target(&mut weights, run_len, pos, |i| {
                    g.data()[y * w + x0 + i].x
                });
                let a = compact[y * w + x0 + pos] as u32;
                let b = compact[y * w + x0 + pos + 1] as u32;
                edges.push((a, b, d));
            }
            x0 = x1 + 1;
        }
    }
    // Vertical runs.
    for x in 0..w {
        let mut y0 = 0usize;
        while y0 < h {
            if !mask[y0 * w + x] {
                y0 += 1;
                continue;
            }
            let mut y1 = y0;
            while y1 + 1 < h && mask[(y1 + 1) * w + x] {
                y1 += 1;
            }
            let run_len = y1 - y0 + 1;
            for pos in 0..run_len.saturating_sub(1) {
                let d = edge_target(&mut weights, run_len, pos, |i| {
                    g.data()[(y0 + i) * w + x].y
                });
                let a = compact[(y0 + pos) * w + x] as u32;
                let b = compact[(y0 + pos + 1) * w + x] as u32;
                edges.push((a, b, d));
            }
            y0 = y1 + 1;
        }
    }
    EdgeSystem {
        edges,
        compact,
        n_unknowns,
    }
}

/// Sparse symmetric Laplacian in adjacency-list form.
struct Laplacian<T> {
    degree: Vec<T>,
    neighbors: Vec<Vec<(u32, T)>>, // (other, -1) entries folded into weights
}

fn build_laplacian<T: Scalar>(n: usize, edges: &[(u32, u32, T)]) -> (Laplacian<T>, Vec<T>) {
    let mut degree = vec![T::zero(); n];
    let mut neighbors: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
    let mut rhs = vec![T::zero(); n];
    for &(a, b, d) in edges {
        let (a, b) = (a as usize, b as usize);
        degree[a] += T::one();
        degree[b] += T::one();
        neighbors[a].push((b as u32, T::one()));
        neighbors[b].push((a as u32, T::one()));
        rhs[a] -= d;
        rhs[b] += d;
    }
    (Laplacian { degree, neighbors }, rhs)
}

fn laplacian_apply<T: Scalar>(lap: &Laplacian<T>, x: &[T], out: &mut [T]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut acc = lap.degree[i] * x[i];
        for &(j, w) in &lap.neighbors[i] {
            acc -= w * x[j as usize];
        }
        *o = acc;
    });
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

/// Connected components over the edge graph (union-find with path halving).
fn component_labels<T>(n: usize, edges: &[(u32, u32, T)]) -> Vec<u32> {
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for &(a, b, _) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
    (0..n as u32)
        .map(|i| find(&mut parent, i))
        .collect()
}

/// Conjugate gradients on the (singular, consistent-per-component) Laplacian
/// system. Deterministic: all reductions are serial.
fn solve_cg<T: Scalar>(lap: &Laplacian<T>, rhs: &[T], tol_rel: T, max_iter: usize) -> (Vec<T>, usize) {
    let n = rhs.len();
    let mut x = vec![T::zero(); n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let rhs_norm = dot(rhs, rhs).sqrt();
    if !(rhs_norm > T::zero()) {
        return (x, 0);
    }
    let tol = tol_rel * rhs_norm;
    let mut rr = dot(&r, &r);
    let mut iterations = 0usize;
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            break;
        }
        laplacian_apply(lap, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        iterations += 1;
    }
    (x, iterations)
}

/// Integrate a gradient field into zero-mean depth per connected component.
pub fn integrate_gradients<T: Scalar>(g: &GradientField<T>) -> Result<IntegrationResult<T>> {
    let sys = build_edges(g);
    if sys.n_unknowns == 0 {
        return Err(Error::EmptyMask {
            context: "integration mask",
        });
    }
    let (lap, rhs) = build_laplacian(sys.n_unknowns, &sys.edges);
    let tol = cast::<T>(1e-13).max(T::default_epsilon() * cast::<T>(64.0));
    let max_iter = 40 * (g.width() + g.height()) + 200;
    let (mut z, cg_iterations) = solve_cg(&lap, &rhs, tol, max_iter);

    // Zero-mean per connected component (isolated pixels stay zero).
    let labels = component_labels(sys.n_unknowns, &sys.edges);
    let mut sums: HashMap<u32, (T, usize)> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let e = sums.entry(l).or_insert((T::zero(), 0));
        e.0 += z[i];
        e.1 += 1;
    }
    for (i, &l) in labels.iter().enumerate() {
        let (s, c) = sums[&l];
        z[i] -= s / cast::<T>(c as f64);
    }

    let mut ss = T::zero();
    for &(a, b, d) in &sys.edges {
        let r = z[b as usize] - z[a as usize] - d;
        ss += r * r;
    }
    let residual_rms = if sys.edges.is_empty() {
        T::zero()
    } else {
        (ss / cast::<T>(sys.edges.len() as f64)).sqrt()
    };

    let mut depth = vec![T::zero(); g.len()];
    for (i, &ci) in sys.compact.iter().enumerate() {
        if ci >= 0 {
            depth[i] = z[ci as usize];
        }
    }
    Ok(IntegrationResult {
        depth: ScalarField::new_unchecked(g.width(), g.height(), depth, g.mask().to_vec()),
        residual_rms,
        cg_iterations,
    })
}

/// Integrate a normal field into depth (`n_z` must clear the conversion
/// epsilon on the mask).
pub fn integrate_normals<T: Scalar>(normals: &NormalField<T>) -> Result<IntegrationResult<T>> {
    let g = normals_to_gradients(normals)?;
    integrate_gradients(&g)
}

/// Relative depth error up to an additive constant: both fields are
/// re-centered on the mask before comparing (L2 over L2).
pub fn relative_depth_error<T: Scalar>(est: &ScalarField<T>, truth: &ScalarField<T>) -> Result<T> {
    est.same_dims(truth, "relative_depth_error")?;
    let mask = crate::field::mask_and(est.mask(), truth.mask());
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyMask {
            context: "relative_depth_error",
        });
    }
    let count = cast::<T>(n as f64);
    let mut mean_e = T::zero();
    let mut mean_t = T::zero();
    for i in 0..mask.len() {
        if mask[i] {
            mean_e += est.data()[i];
            mean_t += truth.data()[i];
        }
    }
    mean_e /= count;
    mean_t /= count;
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..mask.len() {
        if mask[i] {
            let d = (est.data()[i] - mean_e) - (truth.data()[i] - mean_t);
            num += d * d;
            let t = truth.data()[i] - mean_t;
            den += t * t;
        }
    }
    if !(den > T::zero()) {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}
