//! Deterministic large-population limits.
//!
//! All curves live on a uniform time grid and are defined only up to time
//! translation; [`LimitCurves::pin`] fixes the translation by a level
//! crossing of the total infected fraction.

mod final_size;
pub(crate) mod ode;
mod psi;
mod renewal;

pub use final_size::{final_size, i_max_closed_form, peak_thresholds, FinalSize};
pub use ode::{
    constraint_residual_single, ode_mixed, ode_strong_multi, ode_strong_single, ode_weak, unstable_direction,
    Init, OdeModel, PairTerm,
};
pub use psi::{psi_fixed_point, PsiOptions, PsiSolution};
pub use renewal::{renewal_solve, renewal_solve_model, InfectiousPeriod, RenewalOptions};

use serde::{Deserialize, Serialize};

use crate::output::csv_table;
use crate::{Error, Result};

/// Uniform grid `t0, t0 + h, ..., t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
}

impl Grid {
    pub fn new(t0: f64, t1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(t1 > t0) || !(t0.is_finite() && t1.is_finite()) {
            return Err(Error::InvalidSpec(format!("bad grid [{t0}, {t1}] step {h}")));
        }
        Ok(Grid { t0, t1, h })
    }

    pub fn steps(&self) -> usize {
        ((self.t1 - self.t0) / self.h).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|n| self.t0 + n as f64 * self.h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    WeakOde,
    StrongOde,
    MixedOde,
    Renewal,
    Psi,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::WeakOde => "weak_ode",
            Provenance::StrongOde => "strong_ode",
            Provenance::MixedOde => "mixed_ode",
            Provenance::Renewal => "renewal",
            Provenance::Psi => "psi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compartment {
    S,
    I,
    R,
}

/// Limit solution on a uniform grid. Arrays are indexed `[type][time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurves {
    pub provenance: Provenance,
    pub times: Vec<f64>,
    pub p: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Non-homogeneous `(source, target)` pairs carrying `l_c`, `l_d`.
    pub pairs: Vec<(usize, usize)>,
    pub lc: Vec<Vec<f64>>,
    pub ld: Vec<Vec<f64>>,
}

/// Linear interpolation on a uniform grid, constant beyond both ends.
pub fn interp_uniform(times: &[f64], values: &[f64], t: f64) -> f64 {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return values[0];
    }
    if t >= times[n - 1] {
        return values[n - 1];
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let pos = (t - times[0]) / h;
    let idx = (pos.floor() as usize).min(n - 2);
    let frac = pos - idx as f64;
    values[idx] + frac * (values[idx + 1] - values[idx])
}

/// First time a sampled curve reaches `level`, linearly interpolated.
pub fn first_crossing(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    if values.first().is_some_and(|&v| v >= level) {
        return Some(times[0]);
    }
    values.windows(2).zip(times.windows(2)).find_map(|(v, t)| {
        (v[0] < level && v[1] >= level).then(|| t[0] + (level - v[0]) / (v[1] - v[0]) * (t[1] - t[0]))
    })
}

impl LimitCurves {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, c: Compartment, ty: usize) -> &[f64] {
        match c {
            Compartment::S => &self.s[ty],
            Compartment::I => &self.i[ty],
            Compartment::R => &self.r[ty],
        }
    }

    /// Population-weighted total of a compartment, `sum_nu p_nu x_nu`.
    pub fn total(&self, c: Compartment) -> Vec<f64> {
        (0..self.len())
            .map(|n| (0..self.k()).map(|ty| self.p[ty] * self.series(c, ty)[n]).sum())
            .collect()
    }

    pub fn value_at(&self, c: Compartment, ty: usize, t: f64) -> f64 {
        interp_uniform(&self.times, self.series(c, ty), t)
    }

    pub fn total_at(&self, c: Compartment, t: f64) -> f64 {
        (0..self.k()).map(|ty| self.p[ty] * self.value_at(c, ty, t)).sum()
    }

    /// Translates time so that the total infected fraction first reaches
    /// `level` at time 0.
    pub fn pin(mut self, level: f64) -> Result<Self> {
        let t_star = first_crossing(&self.times, &self.total(Compartment::I), level)
            .ok_or(Error::PinNotReached { level })?;
        for t in &mut self.times {
            *t -= t_star;
        }
        Ok(self)
    }

    /// Largest `|s + i + r - 1|` over types and times.
    pub fn conservation_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ty in 0..self.k() {
            for n in 0..self.len() {
                worst = worst.max((self.s[ty][n] + self.i[ty][n] + self.r[ty][n] - 1.0).abs());
            }
        }
        worst
    }

    pub fn peak(&self, ty: usize) -> (f64, f64) {
        let (idx, &imax) = self.i[ty]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty curves");
        (self.times[idx], imax)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for ty in 1..=self.k() {
            h.extend([format!("s_{ty}"), format!("i_{ty}"), format!("r_{ty}")]);
        }
        for &(u, v) in &self.pairs {
            h.extend([format!("lc_{}_{}", u + 1, v + 1), format!("ld_{}_{}", u + 1, v + 1)]);
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let rows = (0..self.len()).map(|n| {
            let mut row = vec![self.times[n]];
            for ty in 0..self.k() {
                row.extend([self.s[ty][n], self.i[ty][n], self.r[ty][n]]);
            }
            for q in 0..self.pairs.len() {
                row.extend([self.lc[q][n], self.ld[q][n]]);
            }
            row
        });
        csv_table(&self.header(), rows)
    }
}

/// `sup_{u in window} |a(u) - b(u + delta)|`, sampled at `samples` points.
pub fn sup_gap<A: Fn(f64) -> f64, B: Fn(f64) -> f64>(a: A, b: B, window: (f64, f64), delta: f64, samples: usize) -> f64 {
    let (lo, hi) = window;
    (0..=samples)
        .map(|q| {
            let u = lo + (hi - lo) * q as f64 / samples as f64;
            (a(u) - b(u + delta)).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimizes [`sup_gap`] over the shift `delta` in `[-range, range]` by a
/// coarse scan followed by golden-section refinement. Returns
/// `(delta, gap)`.
pub fn optimal_shift<A: Fn(f64) -> f64, B: Fn(f64) -> f64>(a: A, b: B, window: (f64, f64), range: f64) -> (f64, f64) {
    let samples = (((window.1 - window.0) / 0.005).ceil() as usize).max(100);
    let f = |d: f64| sup_gap(&a, &b, window, d, samples);
    let coarse = 200;
    let mut best = (0.0, f(0.0));
    for q in 0..=coarse {
        let d = -range + 2.0 * range * q as f64 / coarse as f64;
        let g = f(d);
        if g < best.1 {
            best = (d, g);
        }
    }
    let step = 2.0 * range / coarse as f64;
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let (d, g) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    if g < best.1 {
        (d, g)
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_crossing() {
        let t = [0.0, 1.0, 2.0];
        let v = [0.0, 0.5, 1.0];
        assert_eq!(interp_uniform(&t, &v, 1.5), 0.75);
        assert_eq!(interp_uniform(&t, &v, -3.0), 0.0);
        assert_eq!(interp_uniform(&t, &v, 9.0), 1.0);
        assert_eq!(first_crossing(&t, &v, 0.25), Some(0.5));
        assert_eq!(first_crossing(&t, &v, 2.0), None);
    }

    #[test]
    fn optimal_shift_recovers_translation() {
        let a = |u: f64| 1.0 / (1.0 + (-u).exp());
        let b = |u: f64| a(u - 0.37);
        let (d, g) = optimal_shift(a, b, (-5.0, 5.0), 2.0);
        assert!((d - 0.37).abs() < 1e-6, "{d}");
        assert!(g < 1e-6);
    }
}
