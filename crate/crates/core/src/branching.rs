//! Forward and backward branching-process quantities of the limit model.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::{Kernel, KernelMatrix};
use crate::linalg::{is_irreducible, power_iteration, spectral_radius, strong_components};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingSummary {
    /// Row-major `R0[i][j]`.
    pub r0: Vec<Vec<f64>>,
    pub r0_hat: Vec<Vec<f64>>,
    pub malthusian: f64,
    pub malthusian_hat: f64,
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub m_star: f64,
    pub extinction: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Root of `rho(f(s)) = 1` for a family of nonnegative matrices whose
/// spectral radius decreases in `s`.
pub fn malthusian_root<F: Fn(f64) -> DMatrix<f64>>(f: F) -> Result<f64> {
    let g = |s: f64| spectral_radius(&f(s)) - 1.0;
    let g0 = g(0.0);
    if !(g0 > 0.0) {
        return Err(Error::Subcritical(format!(
            "no positive Malthusian parameter: spectral radius of R0 is {}",
            g0 + 1.0
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut g_hi = g(hi);
    while g_hi >= 0.0 {
        lo = hi;
        hi *= 2.0;
        g_hi = g(hi);
        if hi > 1e12 {
            return Err(Error::Numerical("Malthusian bracket diverged".into()));
        }
    }
    let mut g_lo = g(lo);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm >= 0.0 {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    let (mut a, mut fa, mut b, mut fb) = (lo, g_lo, hi, g_hi);
    for _ in 0..100 {
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        let fc = g(c);
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        if (b - a).abs() <= 1e-12 * b.abs().max(1.0) || fb == 0.0 {
            break;
        }
    }
    if !(b.is_finite() && b > 0.0) || (b - 0.5 * (lo + hi)).abs() > 1e-5 {
        return Err(Error::Numerical("Malthusian secant polish left the bracket".into()));
    }
    Ok(b)
}

pub fn malthusian(km: &KernelMatrix) -> Result<f64> {
    malthusian_root(|s| km.laplace_ml(s))
}

pub fn malthusian_hat(km: &KernelMatrix) -> Result<f64> {
    malthusian_root(|s| km.laplace_ml_hat(s))
}

/// Left and right Perron vectors `(zeta, eta)` of an irreducible nonnegative
/// matrix, normalized so that `zeta^T 1 = zeta^T eta = 1`.
pub fn perron_vectors(m: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if !is_irreducible(m) {
        return Err(Error::Reducible { blocks: strong_components(m) });
    }
    if m.nrows() == 1 {
        let one = DVector::from_element(1, 1.0);
        return Ok((one.clone(), one));
    }
    let fail = || Error::Numerical("Perron power iteration did not converge".into());
    let (_, right) = power_iteration(m, 1e-15).ok_or_else(fail)?;
    let (_, left) = power_iteration(&m.transpose(), 1e-15).ok_or_else(fail)?;
    let zeta = &left / left.sum();
    let eta = &right / zeta.dot(&right);
    Ok((zeta, eta))
}

pub fn m_star(zeta: &[f64], zeta_hat: &[f64], p: &[f64]) -> f64 {
    zeta.iter().zip(zeta_hat).zip(p).map(|((z, zh), pl)| z * zh / pl).sum()
}

/// Nodes and weights of `n`-point Gauss-Laguerre quadrature for
/// `int_0^inf e^{-x} f(x) dx`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n {
        if i == 0 {
            z = 3.0 / (1.0 + 2.4 * nf);
        } else if i == 1 {
            z += 15.0 / (1.0 + 2.5 * nf);
        } else {
            let ai = (i - 1) as f64;
            z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2]);
        }
        let mut p2 = 0.0;
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
            }
            pp = (nf * p1 - nf * p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

fn laguerre_64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_laguerre(64))
}

/// Expected number of contacts by time `t` of an infective that is still
/// infectious, i.e. the integrated contact intensity of the kernel with the
/// survival factor `e^{-gamma t}` removed.
fn cumulative_intensity(kernel: &Kernel, t: f64) -> Result<f64> {
    match *kernel {
        Kernel::Zero => Ok(0.0),
        Kernel::Homogeneous { gamma, r0 } => Ok(r0 * gamma * t),
        Kernel::CaseSixB { lambda, mu, beta, .. } => {
            let mb = mu + beta;
            Ok(beta * beta * lambda * -(-mb * t).exp_m1() / (mu * mb * mb) + lambda * beta * t / mb)
        }
        Kernel::FiniteN { .. } | Kernel::FixedPeriodPoisson { .. } => Err(Error::InvalidSpec(
            "extinction probabilities need limiting kernels with exponential infectious periods".into(),
        )),
    }
}

/// Extinction probabilities of the forward branching process started from
/// one individual of each type.
///
/// Offspring counts are Poisson given the infectious period `Q_i ~ Exp(gamma_i)`;
/// the generating function is closed-form when a type's kernels are all
/// homogeneous and is otherwise averaged over `Q_i` by 64-point
/// Gauss-Laguerre quadrature. The smallest fixed point of `q = Phi(q)` is
/// reached by monotone iteration from zero.
pub fn extinction_probabilities(km: &KernelMatrix) -> Result<Vec<f64>> {
    let k = km.k;
    let r0 = km.r0();
    if spectral_radius(&r0) <= 1.0 {
        return Err(Error::Subcritical("extinction is certain when R0 <= 1".into()));
    }
    let (nodes, weights) = laguerre_64();
    // per type: either None (closed form) or the cumulative intensities at the nodes
    let mut tables: Vec<Option<Vec<Vec<f64>>>> = Vec::with_capacity(k);
    for i in 0..k {
        let row: Vec<&Kernel> = (0..k).map(|j| km.kernel(i, j)).collect();
        if row.iter().all(|kern| kern.is_homogeneous()) {
            tables.push(None);
        } else {
            let mut t = Vec::with_capacity(nodes.len());
            for &x in nodes {
                let q = x / km.gamma[i];
                t.push(row.iter().map(|kern| cumulative_intensity(kern, q)).collect::<Result<Vec<f64>>>()?);
            }
            tables.push(Some(t));
        }
    }
    let phi = |z: &[f64], i: usize| -> f64 {
        match &tables[i] {
            None => {
                let s: f64 = (0..k).map(|j| r0[(i, j)] * (1.0 - z[j])).sum();
                1.0 / (1.0 + s)
            }
            Some(t) => t
                .iter()
                .zip(weights)
                .map(|(lam, w)| {
                    let s: f64 = lam.iter().zip(z).map(|(l, zj)| l * (1.0 - zj)).sum();
                    w * (-s).exp()
                })
                .sum(),
        }
    };
    let mut z = vec![0.0; k];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..k).map(|i| phi(&z, i)).collect();
        let change = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next;
        if change < 1e-15 {
            return Ok(z);
        }
    }
    Err(Error::Numerical("extinction iteration did not converge in 1e5 steps".into()))
}

/// All branching quantities of a supercritical irreducible model.
pub fn summarize(km: &KernelMatrix) -> Result<BranchingSummary> {
    let r0 = km.r0();
    let r0_hat = km.r0_hat();
    let mal = malthusian(km)?;
    let mal_hat = malthusian_hat(km)?;
    let (zeta, eta) = perron_vectors(&km.laplace_ml(mal))?;
    let (zeta_hat, eta_hat) = perron_vectors(&km.laplace_ml_hat(mal_hat))?;
    let ms = m_star(zeta.as_slice(), zeta_hat.as_slice(), &km.p);
    Ok(BranchingSummary {
        r0: rows(&r0),
        r0_hat: rows(&r0_hat),
        malthusian: mal,
        malthusian_hat: mal_hat,
        zeta: zeta.iter().copied().collect(),
        eta: eta.iter().copied().collect(),
        zeta_hat: zeta_hat.iter().copied().collect(),
        eta_hat: eta_hat.iter().copied().collect(),
        m_star: ms,
        extinction: extinction_probabilities(km)?,
    })
}
