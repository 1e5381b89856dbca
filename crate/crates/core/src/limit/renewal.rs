//! Time-marching solver for the renewal (Volterra) form of the limit:
//!
//! ```text
//! ln s_nu(t) = -sum_i (p_i/p_nu) int_0^inf (1 - s_i(t - u)) g_{i,nu}(u) du
//! ```
//!
//! with `g_{i,nu}` the pair kernel (mass `R0_{i,nu}`). The convolution
//! treats `1 - s` as piecewise linear between grid nodes and integrates the
//! kernel exactly against each hat function by Gauss-Legendre quadrature
//! per cell, so kernels with a jump at a node are handled without loss of
//! order.

use nalgebra::DVector;

use super::{Grid, LimitCurves, Provenance};
use crate::branching::{malthusian_hat, perron_vectors};
use crate::contact::{Kernel, KernelMatrix};
use crate::{Error, Result};

const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfectiousPeriod {
    Exponential(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalOptions {
    pub grid: Grid,
    /// Size of `1 - s` at the first grid point.
    pub amplitude: f64,
    /// Kernels are cut where their remaining mass falls below this.
    pub tail_tol: f64,
}

impl RenewalOptions {
    pub fn new(grid: Grid) -> Self {
        RenewalOptions { grid, amplitude: 1e-6, tail_tol: 1e-10 }
    }
}

/// Hat-function weights `W_0..=W_len` with
/// `int_0^{len h} f(t - u) g(u) du ~ sum_m W_m f(t - m h)`.
pub(super) fn cell_weights<G: Fn(f64) -> f64>(g: G, h: f64, len: usize) -> Vec<f64> {
    let mut w = vec![0.0; len + 1];
    for m in 0..len {
        let a = m as f64 * h;
        for (node, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let theta = 0.5 * (node + 1.0);
            let val = g(a + theta * h) * wt * 0.5 * h;
            w[m] += val * (1.0 - theta);
            w[m + 1] += val * theta;
        }
    }
    w
}

/// Discretized kernels of every pair, reversed for contiguous dot
/// products: `rev[j] = W_{len - j}` for `j < len`; `self_weight = W_0`.
pub(super) struct PairWeights {
    rev: Vec<f64>,
    self_weight: f64,
}

impl PairWeights {
    pub(super) fn new(w: Vec<f64>) -> Self {
        let len = w.len() - 1;
        PairWeights { rev: (0..len).map(|j| w[len - j]).collect(), self_weight: w[0] }
    }

    pub(super) fn len(&self) -> usize {
        self.rev.len()
    }
}

/// Marches `phi = 1 - s` over `nodes` grid points. `history[i][m - 1]` is
/// `phi_i` at index `-m` and must cover the longest kernel.
pub(super) fn march(p: &[f64], weights: &[Option<PairWeights>], history: &[Vec<f64>], nodes: usize) -> Result<Vec<Vec<f64>>> {
    let k = p.len();
    let hist_len = history.iter().map(Vec::len).min().unwrap_or(0);
    let longest = weights.iter().flatten().map(PairWeights::len).max().unwrap_or(0);
    if hist_len < longest {
        return Err(Error::Numerical("history shorter than the kernel horizon".into()));
    }
    let mut bufs: Vec<Vec<f64>> = history
        .iter()
        .map(|h| {
            let mut b: Vec<f64> = h[..hist_len].iter().rev().copied().collect();
            b.reserve(nodes);
            b
        })
        .collect();
    let off = hist_len;
    let mut known = vec![0.0; k];
    let mut coupling = vec![0.0; k * k];
    for (idx, w) in weights.iter().enumerate() {
        if let Some(w) = w {
            let (i, v) = (idx / k, idx % k);
            coupling[i * k + v] = p[i] / p[v] * w.self_weight;
        }
    }
    let mut cur = vec![0.0; k];
    for n in 0..nodes {
        for v in 0..k {
            let mut a = 0.0;
            for i in 0..k {
                if let Some(w) = &weights[i * k + v] {
                    let len = w.len();
                    let slice = &bufs[i][off + n - len..off + n];
                    let dot: f64 = slice.iter().zip(&w.rev).map(|(x, y)| x * y).sum();
                    a += p[i] / p[v] * dot;
                }
            }
            known[v] = a;
        }
        for v in 0..k {
            cur[v] = bufs[v][off + n - 1];
        }
        let mut converged = false;
        for _ in 0..200 {
            let mut change: f64 = 0.0;
            for v in 0..k {
                let self_part: f64 = (0..k).map(|i| coupling[i * k + v] * cur[i]).sum();
                let next = -(-(known[v] + self_part)).exp_m1();
                change = change.max((next - cur[v]).abs());
                cur[v] = next;
            }
            if change <= 1e-16 {
                converged = true;
                break;
            }
        }
        if !converged || cur.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("renewal step {n} failed to converge; reduce the grid step")));
        }
        for v in 0..k {
            bufs[v].push(cur[v]);
        }
    }
    Ok(bufs.into_iter().map(|b| b[off..].to_vec()).collect())
}

/// Splits `phi = 1 - s` into `i` and `r` by convolving with the
/// infectious-period distribution. Before the first node `phi` is
/// extrapolated as `phi(t0) e^{growth (t - t0)}`.
pub(super) fn compartments(phi: &[Vec<f64>], periods: &[InfectiousPeriod], h: f64, growth: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut inf = Vec::with_capacity(phi.len());
    let mut rec = Vec::with_capacity(phi.len());
    for (ty, ph) in phi.iter().enumerate() {
        let at = |idx: isize| -> f64 {
            if idx >= 0 {
                ph[idx as usize]
            } else {
                ph[0] * (growth * idx as f64 * h).exp()
            }
        };
        let r: Vec<f64> = match periods[ty] {
            InfectiousPeriod::Exponential(gamma) => {
                if !(gamma > 0.0) {
                    return Err(Error::InvalidSpec("recovery rate must be positive".into()));
                }
                let len = ((-(1e-13f64).ln() / gamma) / h).ceil() as usize;
                let w = cell_weights(|a| gamma * (-gamma * a).exp(), h, len);
                (0..ph.len())
                    .map(|n| w.iter().enumerate().map(|(m, wm)| wm * at(n as isize - m as isize)).sum())
                    .collect()
            }
            InfectiousPeriod::Fixed(d) => {
                if !(d >= 0.0) {
                    return Err(Error::InvalidSpec("infectious period must be nonnegative".into()));
                }
                let pos = d / h;
                let m = pos.floor();
                let frac = pos - m;
                let m = m as isize;
                (0..ph.len() as isize)
                    .map(|n| (1.0 - frac) * at(n - m) + frac * at(n - m - 1))
                    .collect()
            }
        };
        inf.push(ph.iter().zip(&r).map(|(a, b)| a - b).collect());
        rec.push(r);
    }
    Ok((inf, rec))
}

/// Normalized backward growth direction and rate of the linearized
/// equation: `eta_hat` (summing to 1) and the backward Malthusian
/// parameter.
pub(super) fn backward_mode(km: &KernelMatrix) -> Result<(f64, DVector<f64>)> {
    let growth = malthusian_hat(km)?;
    let (_, eta_hat) = perron_vectors(&km.laplace_ml_hat(growth))?;
    let sum = eta_hat.sum();
    Ok((growth, eta_hat / sum))
}

/// Solves the renewal equation on `opts.grid` with the given infectious
/// periods (one per type) for the `i`/`r` split.
pub fn renewal_solve(km: &KernelMatrix, periods: &[InfectiousPeriod], opts: &RenewalOptions) -> Result<LimitCurves> {
    let k = km.k;
    if periods.len() != k {
        return Err(Error::InvalidSpec("need one infectious period per type".into()));
    }
    let h = opts.grid.h;
    let nodes = opts.grid.steps() + 1;
    let (growth, eta_hat) = backward_mode(km)?;
    let mut weights = Vec::with_capacity(k * k);
    let mut longest = 0;
    for kern in &km.kernels {
        if matches!(kern, Kernel::Zero) {
            weights.push(None);
            continue;
        }
        let horizon = kern.truncation_horizon(opts.tail_tol);
        let len = (horizon / h).ceil() as usize;
        if len + 1 > nodes {
            return Err(Error::Numerical(format!(
                "kernel truncation horizon {horizon:.3} exceeds the grid span {:.3}",
                opts.grid.t1 - opts.grid.t0
            )));
        }
        longest = longest.max(len);
        weights.push(Some(PairWeights::new(cell_weights(|u| kern.density(u), h, len))));
    }
    let history: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (1..=longest.max(1))
                .map(|m| opts.amplitude * eta_hat[i] * (-growth * m as f64 * h).exp())
                .collect()
        })
        .collect();
    let phi = march(&km.p, &weights, &history, nodes)?;
    let (i, r) = compartments(&phi, periods, h, growth)?;
    Ok(LimitCurves {
        provenance: Provenance::Renewal,
        times: opts.grid.times(),
        p: km.p.clone(),
        s: phi.iter().map(|ph| ph.iter().map(|x| 1.0 - x).collect()).collect(),
        i,
        r,
        pairs: Vec::new(),
        lc: Vec::new(),
        ld: Vec::new(),
    })
}

/// [`renewal_solve`] with exponential infectious periods at the model's
/// recovery rates.
pub fn renewal_solve_model(km: &KernelMatrix, opts: &RenewalOptions) -> Result<LimitCurves> {
    let periods: Vec<InfectiousPeriod> = km.gamma.iter().map(|&g| InfectiousPeriod::Exponential(g)).collect();
    renewal_solve(km, &periods, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{ode_strong_single, ode_weak, optimal_shift, Compartment, Init};
    use crate::params::ModelSpec;

    fn homogeneous() -> KernelMatrix {
        KernelMatrix::new(vec![1.0], vec![1.0], vec![Kernel::Homogeneous { gamma: 1.0, r0: 2.0 }]).unwrap()
    }

    #[test]
    fn cell_weights_integrate_exactly_for_linear_data() {
        let g = |u: f64| (-u).exp();
        let w = cell_weights(g, 0.1, 50);
        // f = 1 gives the kernel mass on [0, 5]
        let total: f64 = w.iter().sum();
        assert!((total - (1.0 - (-5.0f64).exp())).abs() < 1e-12);
        // f(t - u) = u at t = 0 gives int u e^{-u}
        let first: f64 = w.iter().enumerate().map(|(m, wm)| wm * m as f64 * 0.1).sum();
        let exact = 1.0 - 6.0 * (-5.0f64).exp();
        assert!((first - exact).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_matches_weak_ode() {
        let grid = Grid::new(0.0, 40.0, 1e-3).unwrap();
        let ren = renewal_solve_model(&homogeneous(), &RenewalOptions::new(grid)).unwrap().pin(0.01).unwrap();
        let r0 = nalgebra::DMatrix::from_element(1, 1, 2.0);
        let ode = ode_weak(&r0, &[1.0], &[1.0], &Init::default(), &grid).unwrap().pin(0.01).unwrap();
        for c in [Compartment::S, Compartment::I] {
            let (_, gap) = optimal_shift(|u| ode.value_at(c, 0, u), |u| ren.value_at(c, 0, u), (-5.0, 20.0), 0.5);
            assert!(gap < 1e-3, "{c:?} {gap}");
        }
        assert!(ren.conservation_error() < 1e-12);
    }

    #[test]
    fn six_b_matches_strong_ode() {
        let spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
        let km = KernelMatrix::limit(&spec).unwrap();
        let grid = Grid::new(0.0, 40.0, 1e-3).unwrap();
        let ren = renewal_solve_model(&km, &RenewalOptions::new(grid)).unwrap().pin(0.01).unwrap();
        let ode = ode_strong_single(3.0, 1.0, 1.0, 1.0, &Init::default(), &grid).unwrap().pin(0.01).unwrap();
        let (_, gap) = optimal_shift(|u| ode.value_at(Compartment::I, 0, u), |u| ren.value_at(Compartment::I, 0, u), (-5.0, 20.0), 0.5);
        assert!(gap < 1e-3, "{gap}");
    }

    #[test]
    fn fixed_period_split_matches_quadrature() {
        // Poisson contacts at rate 2 over a period of length 1: R0 = 2
        let km = KernelMatrix::new(vec![1.0], vec![1.0], vec![Kernel::FixedPeriodPoisson { rate: 2.0, period: 1.0 }]).unwrap();
        let h = 1e-3;
        let grid = Grid::new(0.0, 30.0, h).unwrap();
        let c = renewal_solve(&km, &[InfectiousPeriod::Fixed(1.0)], &RenewalOptions::new(grid)).unwrap();
        let s = &c.s[0];
        // i(t) = int_{t-1}^{t} -s'(v) dv with s' by central differences, trapezoid in v
        let deriv = |n: usize| -> f64 {
            if n == 0 {
                (s[1] - s[0]) / h
            } else if n + 1 == s.len() {
                (s[n] - s[n - 1]) / h
            } else {
                (s[n + 1] - s[n - 1]) / (2.0 * h)
            }
        };
        let width = (1.0 / h).round() as usize;
        let mut worst: f64 = 0.0;
        for n in (width..s.len()).step_by(37) {
            let mut acc = 0.0;
            for m in n - width..n {
                acc += 0.5 * h * (-deriv(m) - deriv(m + 1));
            }
            worst = worst.max((acc - c.i[0][n]).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        // attack matches the final-size relation, R0 = 2
        assert!((s.last().unwrap() - 0.2031878699).abs() < 1e-4);
    }

    #[test]
    fn horizon_beyond_grid_is_an_error() {
        let grid = Grid::new(0.0, 5.0, 1e-2).unwrap();
        assert!(matches!(renewal_solve_model(&homogeneous(), &RenewalOptions::new(grid)), Err(Error::Numerical(_))));
    }
}
