//! Sine-process sampling on a window: Nyström discretization of the kernel
//! and sequential projection-DPP sampling on the quadrature nodes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// sin(π r)/(π r) with the removable singularity filled in.
pub fn sine_kernel(x: f64, y: f64) -> f64 {
    let r = x - y;
    if r == 0.0 {
        1.0
    } else {
        (PI * r).sin() / (PI * r)
    }
}

/// Eigenvalues may leave [0, 1] by this much before the build aborts.
pub const CLIP_TOL: f64 = 1e-8;
/// Conditional densities below −this abort sampling.
pub const DENSITY_TOL: f64 = 1e-10;
/// Default resolution: nodes per unit length of the window.
pub const DEFAULT_NODES_PER_UNIT: f64 = 3.0;
/// Replicates advanced together in one sampling pass.
pub const BATCH: usize = 32;

pub fn default_nodes(half_width: f64) -> usize {
    ((2.0 * half_width * DEFAULT_NODES_PER_UNIT).ceil() as usize).max(16)
}

#[derive(Clone, Debug)]
pub struct KernelEigensystem {
    pub half_width: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Clipped to [0, 1], descending.
    pub eigenvalues: Vec<f64>,
    /// Column k holds √w_i·φ_k(x_i), orthonormal in the Euclidean sense.
    pub vectors: DMatrix<f64>,
    /// Extremes before clipping.
    pub raw_min: f64,
    pub raw_max: f64,
}

impl KernelEigensystem {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// φ_k at the nodes; orthonormal under Σ_i w_i φ_j(x_i) φ_k(x_i).
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().zip(&self.weights).map(|(v, w)| v / w.sqrt()).collect()
    }

    /// max |Σ_i w_i φ_j φ_k − δ_jk|.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let n = g.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - target).abs());
            }
        }
        worst
    }
}

/// Gauss–Legendre Nyström matrix √w_i K(x_i, x_j) √w_j on [−L, L] and its
/// full eigendecomposition.
pub fn build_kernel_eigensystem(half_width: f64, n_nodes: usize) -> Result<KernelEigensystem> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::Domain(format!("window half-width must be positive, got {half_width}")));
    }
    if (n_nodes as f64) < 4.0 * half_width || n_nodes < 2 {
        return Err(Error::Resolution(format!(
            "{n_nodes} nodes on [-{half_width}, {half_width}] is below the guard of 4 per unit half-width"
        )));
    }
    let (nodes, weights) = quad::gauss_legendre(n_nodes, -half_width, half_width);
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n_nodes, n_nodes, |i, j| sw[i] * sine_kernel(nodes[i], nodes[j]) * sw[j]);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let raw: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let raw_max = raw[0];
    let raw_min = raw[n_nodes - 1];
    if raw_min < -CLIP_TOL || raw_max > 1.0 + CLIP_TOL {
        return Err(Error::Degeneracy(format!(
            "Nyström eigenvalues span [{raw_min:.3e}, {raw_max:.12}], outside [0, 1] by more than {CLIP_TOL:.0e}"
        )));
    }
    let eigenvalues = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let vectors = DMatrix::from_fn(n_nodes, n_nodes, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok(KernelEigensystem { half_width, nodes, weights, eigenvalues, vectors, raw_min, raw_max })
}

/// E[#points] = Σ eigenvalues.
pub fn expected_count(es: &KernelEigensystem) -> f64 {
    es.eigenvalues.iter().sum()
}

/// Var[#points] of the discretized process, Σ λ(1 − λ).
pub fn count_variance(es: &KernelEigensystem) -> f64 {
    es.eigenvalues.iter().map(|l| l * (1.0 - l)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// Strictly increasing, inside the window.
    pub points: Vec<f64>,
    pub seed: u64,
    pub replicate: u64,
}

impl Configuration {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x"])?;
        for p in &self.points {
            out.serialize(p)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Independent stream for one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Dot product with independent partial sums so that it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

struct Walker {
    replicate: u64,
    rng: ChaCha8Rng,
    /// Positions in the batch union of the selected eigenvectors.
    selected: Vec<usize>,
    /// Residual diagonal of the conditional projection kernel.
    resid: Vec<f64>,
    /// Orthonormal directions chosen so far, in the coordinates of the
    /// selected eigenvectors, stored back to back.
    dirs: Vec<f64>,
    /// u_m = E q_m at every node, one column of length n per direction;
    /// entry i of column m is the coefficient of node i's row on q_m.
    proj: Vec<f64>,
    picked: Vec<usize>,
}

/// Samples the replicates `[first, first + BATCH)` together. Every replicate
/// belongs to exactly one such aligned batch, so its configuration depends
/// only on (seed, replicate index).
fn sample_aligned_batch(es: &KernelEigensystem, seed: u64, first: u64) -> Result<Vec<Configuration>> {
    let n = es.n_nodes();
    let mut walkers: Vec<Walker> = (first..first + BATCH as u64)
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let chosen: Vec<usize> = es
                .eigenvalues
                .iter()
                .enumerate()
                .filter_map(|(k, &lam)| (rng.gen::<f64>() < lam).then_some(k))
                .collect();
            Walker { replicate: r, rng, selected: chosen, resid: vec![], dirs: vec![], proj: vec![], picked: vec![] }
        })
        .collect();

    let mut union: Vec<usize> = walkers.iter().flat_map(|w| w.selected.iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let m = union.len();
    let mut slot = vec![usize::MAX; n];
    for (p, &k) in union.iter().enumerate() {
        slot[k] = p;
    }
    // columns of the union (n × m) and their transpose for row access
    let e = DMatrix::from_fn(n, m, |i, p| es.vectors[(i, union[p])]);
    let et = e.transpose();
    for w in walkers.iter_mut() {
        w.selected = w.selected.iter().map(|&k| slot[k]).collect();
        w.resid = (0..n).map(|i| w.selected.iter().map(|&p| e[(i, p)] * e[(i, p)]).sum()).collect();
        let k = w.selected.len();
        w.dirs = Vec::with_capacity(k * k);
        w.proj = Vec::with_capacity(n * k);
        w.picked = Vec::with_capacity(k);
    }

    let steps = walkers.iter().map(|w| w.selected.len()).max().unwrap_or(0);
    let mut v = Vec::new();
    let mut coef = Vec::new();
    for step in 0..steps {
        let active: Vec<usize> = (0..walkers.len()).filter(|&b| walkers[b].selected.len() > step).collect();
        let mut block = DMatrix::<f64>::zeros(m, active.len());
        for (col, &b) in active.iter().enumerate() {
            let w = &mut walkers[b];
            let k = w.selected.len();
            let total: f64 = w.resid.iter().map(|d| d.max(0.0)).sum();
            if !(total > 0.0) {
                return Err(Error::Degeneracy(format!(
                    "replicate {}: conditional density vanished with {} points left",
                    w.replicate,
                    k - step
                )));
            }
            let target = w.rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, d) in w.resid.iter().enumerate() {
                if *d > 0.0 {
                    acc += d;
                    last_positive = i;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            let i = pick.unwrap_or(last_positive);
            let row = et.column(i);
            v.clear();
            v.extend(w.selected.iter().map(|&p| row[p]));
            // coefficients of row i on the previous directions are u_m(i)
            coef.clear();
            coef.extend((0..step).map(|j| w.proj[j * n + i]));
            for (c, q) in coef.iter().zip(w.dirs.chunks_exact(k)) {
                axpy(-c, q, &mut v);
            }
            // the residual diagonal is the squared norm the projection must
            // have; a mismatch means the directions lost orthogonality
            if (dot(&v, &v) - w.resid[i]).abs() > 1e-8 * w.resid[i].max(1e-300) {
                for q in w.dirs.chunks_exact(k) {
                    let c = dot(q, &v);
                    axpy(-c, q, &mut v);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if !(norm > 1e-300) {
                return Err(Error::Degeneracy(format!("replicate {}: null direction at node {i}", w.replicate)));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let mut dst = block.column_mut(col);
            for (&p, x) in w.selected.iter().zip(&v) {
                dst[p] = *x;
            }
            w.dirs.extend_from_slice(&v);
            w.picked.push(i);
        }
        let u = &e * &block;
        for (col, &b) in active.iter().enumerate() {
            let w = &mut walkers[b];
            let ucol = u.column(col);
            w.proj.extend_from_slice(ucol.as_slice());
            for (d, x) in w.resid.iter_mut().zip(ucol.iter()) {
                *d -= x * x;
                if *d < -DENSITY_TOL {
                    return Err(Error::Degeneracy(format!(
                        "replicate {}: conditional density {d:.3e} below -{DENSITY_TOL:.0e}",
                        w.replicate
                    )));
                }
            }
            let last = *w.picked.last().expect("picked this step");
            w.resid[last] = 0.0;
        }
    }

    Ok(walkers
        .into_iter()
        .map(|w| {
            let mut idx = w.picked;
            idx.sort_unstable();
            Configuration {
                points: idx.into_iter().map(|i| es.nodes[i]).collect(),
                seed,
                replicate: w.replicate,
            }
        })
        .collect())
}

/// One configuration for (seed, replicate).
pub fn sample_configuration(es: &KernelEigensystem, seed: u64, replicate: u64) -> Result<Configuration> {
    let first = replicate - replicate % BATCH as u64;
    let batch = sample_aligned_batch(es, seed, first)?;
    Ok(batch.into_iter().nth((replicate - first) as usize).expect("replicate inside its batch"))
}

/// Configurations for replicates 0..count, reduced by `f` as they are drawn.
/// Output order follows the replicate index whatever the thread count.
pub fn sample_map<T, F>(es: &KernelEigensystem, seed: u64, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Configuration) -> T + Sync,
{
    let batches = count.div_ceil(BATCH as u64);
    let per_batch: Vec<Result<Vec<T>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let cfgs = sample_aligned_batch(es, seed, b * BATCH as u64)?;
            Ok(cfgs.iter().filter(|c| c.replicate < count).map(&f).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(count as usize);
    for r in per_batch {
        out.extend(r?);
    }
    Ok(out)
}

pub fn sample_many(es: &KernelEigensystem, seed: u64, count: u64) -> Result<Vec<Configuration>> {
    sample_map(es, seed, count, |c| c.clone())
}

/// Parameters of a batch run, written next to the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesManifest {
    pub half_width: f64,
    pub n_nodes: usize,
    pub count: u64,
    pub seed: u64,
    pub batch: usize,
    pub expected_count: f64,
    pub raw_eigenvalue_min: f64,
    pub raw_eigenvalue_max: f64,
    pub mean_count: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(sine_kernel(0.0, 0.0), 1.0);
        assert!(sine_kernel(0.0, 1.0).abs() < 1e-16);
    }

    #[test]
    fn trace_identity() {
        for (l, n) in [(0.5, 16), (5.0, 200), (20.0, 160)] {
            let es = build_kernel_eigensystem(l, n).unwrap();
            assert!((expected_count(&es) - 2.0 * l).abs() < 1e-6 * 2.0 * l, "L={l}: {}", expected_count(&es));
        }
    }

    #[test]
    fn eigensystem_checks() {
        let es = build_kernel_eigensystem(5.0, 200).unwrap();
        assert!(es.orthonormality_defect() < 1e-8);
        assert!(es.raw_min > -CLIP_TOL && es.raw_max < 1.0 + CLIP_TOL);
        let phi = es.eigenfunction(0);
        let norm: f64 = phi.iter().zip(&es.weights).map(|(p, w)| w * p * p).sum();
        assert!((norm - 1.0).abs() < 1e-10);
        assert!(matches!(build_kernel_eigensystem(5.0, 19), Err(Error::Resolution(_))));
    }

    #[test]
    fn degenerate_eigensystem_gives_empty_configurations() {
        let mut es = build_kernel_eigensystem(1.0, 16).unwrap();
        es.eigenvalues.iter_mut().for_each(|l| *l = 0.0);
        assert_eq!(expected_count(&es), 0.0);
        let c = sample_configuration(&es, 1, 3).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn configurations_are_valid_and_reproducible() {
        let es = build_kernel_eigensystem(4.0, 48).unwrap();
        let all = sample_many(&es, 7, 40).unwrap();
        for c in &all {
            assert!(c.points.windows(2).all(|p| p[0] < p[1]));
            assert!(c.points.iter().all(|x| x.abs() <= 4.0));
        }
        let single = sample_configuration(&es, 7, 37).unwrap();
        assert_eq!(single, all[37]);
        let other = sample_many(&es, 8, 40).unwrap();
        assert_ne!(other, all);
    }

    #[test]
    fn projection_kernel_gives_fixed_count() {
        let mut es = build_kernel_eigensystem(3.0, 36).unwrap();
        for (k, l) in es.eigenvalues.iter_mut().enumerate() {
            *l = if k < 5 { 1.0 } else { 0.0 };
        }
        for c in sample_many(&es, 3, 64).unwrap() {
            assert_eq!(c.len(), 5);
        }
    }
}
