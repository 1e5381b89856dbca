//! Experiment orchestration: limit-system selection, trajectory alignment
//! and convergence reports.

mod config;
mod convergence;

pub use config::{ExperimentConfig, LimitSystem};
pub use convergence::{
    align_trajectory, aligned_curves, run_convergence, ConvergenceReport, SeriesDistance, SizeReport,
};

use crate::contact::{Kernel, KernelMatrix};
use crate::limit::{
    ode_mixed, ode_strong_multi, ode_weak, renewal_solve_model, Grid, Init, LimitCurves, OdeModel, RenewalOptions,
};
use crate::{Error, Result};

/// Resolves [`LimitSystem::Auto`] for a kernel matrix.
pub fn resolve_system(km: &KernelMatrix, system: LimitSystem) -> LimitSystem {
    if system != LimitSystem::Auto {
        return system;
    }
    let Ok(model) = OdeModel::from_kernels(km) else {
        return LimitSystem::Renewal;
    };
    let dynamic = model.dynamic_pairs().len();
    let active = km.kernels.iter().filter(|k| !matches!(k, Kernel::Zero)).count();
    if dynamic == 0 {
        LimitSystem::Weak
    } else if dynamic == active {
        LimitSystem::Strong
    } else {
        LimitSystem::Mixed
    }
}

/// Solves the chosen limit system on `[0, t1]`.
pub fn solve_limit(km: &KernelMatrix, system: LimitSystem, t1: f64, h: f64) -> Result<LimitCurves> {
    let grid = Grid::new(0.0, t1, h)?;
    let init = Init::default();
    match resolve_system(km, system) {
        LimitSystem::Weak => {
            if !km.all_homogeneous() {
                return Err(Error::Regime("weak system requires every pair to be homogeneous".into()));
            }
            ode_weak(&km.r0(), &km.gamma, &km.p, &init, &grid)
        }
        LimitSystem::Strong => ode_strong_multi(km, &init, &grid),
        LimitSystem::Mixed => {
            let pairs = OdeModel::from_kernels(km)?.dynamic_pairs();
            ode_mixed(km, &pairs, &init, &grid)
        }
        LimitSystem::Renewal => renewal_solve_model(km, &RenewalOptions::new(grid)),
        LimitSystem::Auto => unreachable!("resolved above"),
    }
}

/// Limit curves pinned at `pin_level` and covering `window` in pinned time.
/// The horizon is doubled until the window fits.
pub fn pinned_limit(km: &KernelMatrix, system: LimitSystem, pin_level: f64, window: (f64, f64), h: f64) -> Result<LimitCurves> {
    let mut t1 = 40.0_f64.max(4.0 * (window.1 - window.0));
    for _ in 0..8 {
        let curves = solve_limit(km, system, t1, h)?.pin(pin_level)?;
        let (first, last) = (curves.times[0], *curves.times.last().unwrap());
        if first > window.0 {
            return Err(Error::Numerical(format!(
                "limit curve reaches the pin level only {:.3} after its start; window begins at {}",
                -first, window.0
            )));
        }
        if last >= window.1 {
            return Ok(curves);
        }
        t1 *= 2.0;
    }
    Err(Error::Numerical("limit curve too slow to cover the comparison window".into()))
}
