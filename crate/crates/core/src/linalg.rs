//! Small dense helpers for nonnegative matrices.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

const MAX_POWER_ITERS: usize = 1_000_000;

/// Strongly connected components of the positivity pattern of `m`, each
/// sorted, ordered by smallest member.
pub fn strong_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let k = m.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(k, k * k);
    let nodes: Vec<_> = (0..k).map(|_| g.add_node(())).collect();
    for i in 0..k {
        for j in 0..k {
            if m[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    blocks.sort();
    blocks
}

pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    m.nrows() == 1 || strong_components(m).len() == 1
}

/// Dominant eigenpair of a nonnegative matrix by power iteration on
/// `m + I`, which is primitive whenever `m` is irreducible.
///
/// Returns `(rho, v)` with `v` positive and summing to 1, or `None` when the
/// Collatz-Wielandt bounds fail to close to `tol` (relative).
pub fn power_iteration(m: &DMatrix<f64>, tol: f64) -> Option<(f64, DVector<f64>)> {
    let k = m.nrows();
    let shifted = m + DMatrix::identity(k, k);
    let mut v = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..MAX_POWER_ITERS {
        let w = &shifted * &v;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..k {
            let ratio = w[i] / v[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let total = w.sum();
        if !total.is_finite() || total <= 0.0 {
            return None;
        }
        v = w / total;
        if v.iter().any(|&x| x <= 0.0) {
            return None;
        }
        if hi - lo <= tol * hi {
            // Rayleigh-like estimate from the final iterate
            let rho = (&shifted * &v).sum() - 1.0;
            return Some((rho.max(0.0), v));
        }
    }
    None
}

/// Spectral radius of a nonnegative matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    if is_irreducible(m) {
        if let Some((rho, _)) = power_iteration(m, 1e-13) {
            return rho;
        }
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
