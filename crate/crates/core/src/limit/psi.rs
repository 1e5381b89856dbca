//! The Laplace-type fixed point
//!
//! ```text
//! psi_nu(s) = exp(-sum_i (p_i/p_nu) int_0^inf (1 - psi_i(s e^{-M u})) g_{i,nu}(u) du)
//! ```
//!
//! with `M` the backward Malthusian parameter. In `x = ln s` this is a
//! renewal equation whose kernel is `g(v/M)/M`, so it is solved by the same
//! marching scheme, on a uniform `x`-grid. Below the grid `1 - psi_i(s)` is
//! continued linearly as `a_i s`. Solutions form a one-parameter family
//! `psi(h s)`; the member with `psi_{nu0}(1) = 1/2` is selected.

use super::renewal::{backward_mode, cell_weights, compartments, march, InfectiousPeriod, PairWeights};
use super::{first_crossing, Grid, LimitCurves, Provenance};
use crate::contact::{Kernel, KernelMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiOptions {
    pub s_min: f64,
    pub s_max: f64,
    /// Step in `ln s`.
    pub dx: f64,
    /// Type whose value at `s = 1` is pinned to `1/2`.
    pub pin_type: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub tail_tol: f64,
}

impl Default for PsiOptions {
    fn default() -> Self {
        PsiOptions { s_min: 1e-6, s_max: 1e3, dx: 2e-3, pin_type: 0, tol: 1e-10, max_sweeps: 10_000, tail_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution {
    /// `ln s` at the grid nodes.
    pub x: Vec<f64>,
    /// `psi[type][node]`.
    pub psi: Vec<Vec<f64>>,
    /// Linear-tail coefficients: `1 - psi_i(s) ~ tail[i] * s` below the grid.
    pub tail: Vec<f64>,
    pub malthusian_hat: f64,
    pub sweeps: usize,
}

impl PsiSolution {
    /// `psi_ty(s)`, linear in `ln s` between nodes.
    pub fn value(&self, ty: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        let x = s.ln();
        let (x0, n) = (self.x[0], self.x.len());
        if x < x0 {
            return 1.0 - self.tail[ty] * s;
        }
        let dx = self.x[1] - x0;
        let pos = (x - x0) / dx;
        if pos >= (n - 1) as f64 {
            return self.psi[ty][n - 1];
        }
        let idx = pos.floor() as usize;
        let frac = pos - idx as f64;
        self.psi[ty][idx] + frac * (self.psi[ty][idx + 1] - self.psi[ty][idx])
    }

    /// `s_ty(u) = psi_ty(e^{M u} m_star)`.
    pub fn s_curve(&self, ty: usize, m_star: f64, u: f64) -> f64 {
        self.value(ty, (self.malthusian_hat * u).exp() * m_star)
    }

    /// Limit curves on a time grid, with `i` and `r` from exponential
    /// infectious periods.
    pub fn to_curves(&self, km: &KernelMatrix, m_star: f64, grid: &Grid) -> Result<LimitCurves> {
        let times = grid.times();
        let s: Vec<Vec<f64>> =
            (0..km.k).map(|ty| times.iter().map(|&t| self.s_curve(ty, m_star, t)).collect()).collect();
        let phi: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|x| 1.0 - x).collect()).collect();
        let periods: Vec<InfectiousPeriod> = km.gamma.iter().map(|&g| InfectiousPeriod::Exponential(g)).collect();
        let (i, r) = compartments(&phi, &periods, grid.h, self.malthusian_hat)?;
        Ok(LimitCurves {
            provenance: Provenance::Psi,
            times,
            p: km.p.clone(),
            s,
            i,
            r,
            pairs: Vec::new(),
            lc: Vec::new(),
            ld: Vec::new(),
        })
    }
}

/// Solves the fixed point by repeated marching sweeps, each followed by the
/// pin rescaling, until the sup-change between sweeps drops below
/// `opts.tol`.
pub fn psi_fixed_point(km: &KernelMatrix, opts: &PsiOptions) -> Result<PsiSolution> {
    let k = km.k;
    if opts.pin_type >= k {
        return Err(Error::InvalidSpec(format!("pin type {} out of range", opts.pin_type + 1)));
    }
    if !(opts.s_min > 0.0 && opts.s_max > 1.0 && opts.s_min < 1.0 && opts.dx > 0.0) {
        return Err(Error::InvalidSpec("psi grid must straddle s = 1".into()));
    }
    let (growth, eta_hat) = backward_mode(km)?;
    let x_min = opts.s_min.ln();
    let nodes = ((opts.s_max.ln() - x_min) / opts.dx).round() as usize + 1;
    let dx = opts.dx;
    let x: Vec<f64> = (0..nodes).map(|n| x_min + n as f64 * dx).collect();
    let mut weights = Vec::with_capacity(k * k);
    let mut longest = 1;
    for kern in &km.kernels {
        if matches!(kern, Kernel::Zero) {
            weights.push(None);
            continue;
        }
        let len = (kern.truncation_horizon(opts.tail_tol) * growth / dx).ceil() as usize;
        longest = longest.max(len);
        weights.push(Some(PairWeights::new(cell_weights(|v| kern.density(v / growth) / growth, dx, len))));
    }
    let mut tail: Vec<f64> = (0..k).map(|i| 0.5 * eta_hat[i] / eta_hat[opts.pin_type]).collect();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for sweep in 1..=opts.max_sweeps {
        let history: Vec<Vec<f64>> = (0..k)
            .map(|i| (1..=longest).map(|m| tail[i] * (x_min - m as f64 * dx).exp()).collect())
            .collect();
        let phi = march(&km.p, &weights, &history, nodes)?;
        let psi: Vec<Vec<f64>> = phi.iter().map(|c| c.iter().map(|v| 1.0 - v).collect()).collect();
        let x_star = first_crossing(&x, &phi[opts.pin_type], 0.5).ok_or_else(|| {
            Error::Numerical("psi never reaches 1/2 on the grid; widen s_max".into())
        })?;
        let change = prev.as_ref().map(|old| {
            old.iter()
                .zip(&psi)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max)
        });
        let shift = x_star.exp();
        let next_tail: Vec<f64> = (0..k).map(|i| phi[i][0] / opts.s_min * shift).collect();
        if change.is_some_and(|c| c < opts.tol) {
            return Ok(PsiSolution { x, psi, tail, malthusian_hat: growth, sweeps: sweep });
        }
        tail = next_tail;
        prev = Some(psi);
    }
    Err(Error::Numerical(format!("psi iteration did not converge in {} sweeps", opts.max_sweeps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{final_size, optimal_shift, renewal_solve_model, Compartment, RenewalOptions};
    use crate::params::ModelSpec;

    fn homogeneous() -> KernelMatrix {
        KernelMatrix::new(vec![1.0], vec![1.0], vec![Kernel::Homogeneous { gamma: 1.0, r0: 2.0 }]).unwrap()
    }

    #[test]
    fn shape_and_pin() {
        let sol = psi_fixed_point(&homogeneous(), &PsiOptions::default()).unwrap();
        assert!((sol.value(0, 1.0) - 0.5).abs() < 1e-6);
        assert!(sol.value(0, 1e-9) > 1.0 - 1e-8);
        for w in sol.psi[0].windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let plateau = *sol.psi[0].last().unwrap();
        let s_inf = final_size(&nalgebra::DMatrix::from_element(1, 1, 2.0)).unwrap().s_inf[0];
        assert!((plateau - 0.2032).abs() < 0.01, "{plateau}");
        assert!(plateau >= s_inf);
    }

    #[test]
    fn wide_grid_plateau_is_final_size() {
        let opts = PsiOptions { s_max: 1e8, dx: 4e-3, ..PsiOptions::default() };
        let sol = psi_fixed_point(&homogeneous(), &opts).unwrap();
        let plateau = *sol.psi[0].last().unwrap();
        assert!((plateau - 0.2031878699).abs() < 1e-4, "{plateau}");
    }

    #[test]
    fn s_curve_matches_renewal() {
        let spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
        let km = KernelMatrix::limit(&spec).unwrap();
        let sol = psi_fixed_point(&km, &PsiOptions::default()).unwrap();
        let grid = Grid::new(0.0, 40.0, 1e-3).unwrap();
        let ren = renewal_solve_model(&km, &RenewalOptions::new(grid)).unwrap();
        // psi is known up to s = 1e3, i.e. u up to ln(1e3)/M past s = 1/2
        let (_, gap) = optimal_shift(
            |u| sol.s_curve(0, 1.0, u),
            |u| ren.value_at(Compartment::S, 0, u),
            (-8.0, 5.0),
            20.0,
        );
        assert!(gap < 1e-2, "{gap}");
    }

    #[test]
    fn two_type_symmetric_solutions_agree() {
        let kern = Kernel::Homogeneous { gamma: 1.0, r0: 1.0 };
        let km = KernelMatrix::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![kern; 4]).unwrap();
        let sol = psi_fixed_point(&km, &PsiOptions { s_max: 10.0, ..PsiOptions::default() }).unwrap();
        for n in 0..sol.x.len() {
            assert!((sol.psi[0][n] - sol.psi[1][n]).abs() < 1e-12);
        }
    }
}
