//! Interrupted Poisson contact processes and the intensity kernels they
//! induce.
//!
//! An edge switches on at rate `lambda` and off at rate `mu`; while on, it
//! carries contacts at rate `beta`. Interarrival times are a two-phase
//! hyperexponential with rates `r1 >= r2` and mixing weight `p_mix`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::params::{classify_regime, ModelSpec, RealizedRates, RegimeCase, RegimeReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IppParams {
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub r1: f64,
    pub r2: f64,
    pub p_mix: f64,
}

/// Builds the hyperexponential representation of an IPP.
///
/// `mu = 0` gives an always-on edge, i.e. a Poisson process of rate `beta`.
/// When `r1 = r2` (only possible with `beta = lambda`, `mu = 0`) the mixing
/// weight is taken as 1.
pub fn ipp_params(beta: f64, lambda: f64, mu: f64) -> Result<IppParams> {
    if !(beta > 0.0 && lambda > 0.0 && mu >= 0.0) || !(beta + lambda + mu).is_finite() {
        return Err(Error::InvalidSpec(format!(
            "IPP needs beta > 0, lambda > 0, mu >= 0 (got {beta}, {lambda}, {mu})"
        )));
    }
    let sum = beta + lambda + mu;
    // (beta + lambda + mu)^2 - 4 beta lambda without cancellation
    let disc = (beta - lambda).powi(2) + mu * (2.0 * beta + 2.0 * lambda + mu);
    let root = disc.sqrt();
    let r1 = 0.5 * (sum + root);
    let r2 = beta * lambda / r1;
    let p_mix = if root <= 1e-14 * sum {
        1.0
    } else {
        ((beta - r2) / (r1 - r2)).clamp(0.0, 1.0)
    };
    Ok(IppParams { beta, lambda, mu, r1, r2, p_mix })
}

impl IppParams {
    /// Mixture weights of the equilibrium excess lifetime over `Exp(r1)` and
    /// `Exp(r2)`.
    pub fn excess_weights(&self) -> (f64, f64) {
        let denom = self.p_mix * self.r2 + (1.0 - self.p_mix) * self.r1;
        let w1 = self.p_mix * self.r2 / denom;
        (w1, 1.0 - w1)
    }

    pub fn excess_pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let (r1, r2, p) = (self.r1, self.r2, self.p_mix);
        r1 * r2 * (p * (-r1 * t).exp() + (1.0 - p) * (-r2 * t).exp()) / (p * r2 + (1.0 - p) * r1)
    }

    pub fn excess_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (w1, w2) = self.excess_weights();
        (w1 * -(-self.r1 * t).exp_m1() + w2 * -(-self.r2 * t).exp_m1()).min(1.0)
    }

    pub fn excess_mean(&self) -> f64 {
        let (w1, w2) = self.excess_weights();
        w1 / self.r1 + w2 / self.r2
    }

    pub fn sample_excess<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (w1, _) = self.excess_weights();
        let rate = if rng.random::<f64>() < w1 { self.r1 } else { self.r2 };
        let e: f64 = rng.sample(Exp1);
        e / rate
    }

    /// Draws from the excess lifetime conditioned to lie in `[0, q]`.
    pub fn sample_excess_truncated<R: Rng + ?Sized>(&self, q: f64, rng: &mut R) -> f64 {
        let (w1, w2) = self.excess_weights();
        let c1 = -(-self.r1 * q).exp_m1();
        let c2 = -(-self.r2 * q).exp_m1();
        let a1 = w1 * c1;
        let (rate, c) = if rng.random::<f64>() * (a1 + w2 * c2) < a1 {
            (self.r1, c1)
        } else {
            (self.r2, c2)
        };
        let u: f64 = rng.random();
        (-(-u * c).ln_1p() / rate).min(q)
    }
}

/// Mean time between contacts, `(lambda + mu) / (beta lambda)`.
pub fn mean_interarrival(beta: f64, lambda: f64, mu: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidSpec("edge never forms (lambda = 0)".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidSpec("no contacts on edges (beta = 0)".into()));
    }
    Ok((lambda + mu) / (beta * lambda))
}

/// Expected number of type-`j` individuals contacted during an `Exp(gamma)`
/// infectious period, at realized rates.
pub fn r0_n(beta: f64, lambda: f64, mu: f64, gamma: f64, n_j: u64) -> f64 {
    let lm = lambda + mu;
    n_j as f64 * beta * lambda * (lm + gamma)
        / (lm * (gamma * gamma + gamma * (beta + lm) + beta * lambda))
}

/// Intensity kernel `g(t)`: the rate at age `t` of infectious contacts made by
/// one infective. Its total mass is the pair's reproduction number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Zero,
    /// `r0 * gamma * exp(-gamma t)`.
    Homogeneous { gamma: f64, r0: f64 },
    /// `(lambda/mu) beta e^{-(mu+beta+gamma)t} + (lambda beta/(mu+beta))(1 - e^{-(mu+beta)t}) e^{-gamma t}`.
    CaseSixB { lambda: f64, mu: f64, beta: f64, gamma: f64 },
    /// `n_j * f_excess(t) * e^{-gamma t}` at realized rates.
    FiniteN { ipp: IppParams, gamma: f64, n_j: u64 },
    /// Poisson contacts at `rate` during a fixed period.
    FixedPeriodPoisson { rate: f64, period: f64 },
}

impl Kernel {
    /// `(A, a, B)` with `g = A e^{-a t} + B (e^{-gamma t} - e^{-a t})`.
    fn six_b_terms(lambda: f64, mu: f64, beta: f64, gamma: f64) -> (f64, f64, f64) {
        (lambda * beta / mu, mu + beta + gamma, lambda * beta / (mu + beta))
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Homogeneous { gamma, r0 } => r0 * gamma * (-gamma * t).exp(),
            Kernel::CaseSixB { lambda, mu, beta, gamma } => {
                let (a_coef, a, b_coef) = Self::six_b_terms(lambda, mu, beta, gamma);
                a_coef * (-a * t).exp() - b_coef * (-(mu + beta) * t).exp_m1() * (-gamma * t).exp()
            }
            Kernel::FiniteN { ipp, gamma, n_j } => {
                n_j as f64 * ipp.excess_pdf(t) * (-gamma * t).exp()
            }
            Kernel::FixedPeriodPoisson { rate, period } => {
                if t < period {
                    rate
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_t^inf g(u) du`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Homogeneous { gamma, r0 } => r0 * (-gamma * t).exp(),
            Kernel::CaseSixB { lambda, mu, beta, gamma } => {
                let (a_coef, a, b_coef) = Self::six_b_terms(lambda, mu, beta, gamma);
                let ea = (-a * t).exp() / a;
                a_coef * ea + b_coef * ((-gamma * t).exp() / gamma - ea)
            }
            Kernel::FiniteN { ipp, gamma, n_j } => {
                let (w1, w2) = ipp.excess_weights();
                let term = |w: f64, r: f64| w * r * (-(gamma + r) * t).exp() / (gamma + r);
                n_j as f64 * (term(w1, ipp.r1) + term(w2, ipp.r2))
            }
            Kernel::FixedPeriodPoisson { rate, period } => rate * (period - t).max(0.0),
        }
    }

    pub fn mass(&self) -> f64 {
        self.tail_mass(0.0)
    }

    /// Laplace transform `int_0^inf e^{-s t} g(t) dt`.
    pub fn laplace(&self, s: f64) -> f64 {
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Homogeneous { gamma, r0 } => r0 * gamma / (s + gamma),
            Kernel::CaseSixB { lambda, mu, beta, gamma } => {
                let (a_coef, a, b_coef) = Self::six_b_terms(lambda, mu, beta, gamma);
                a_coef / (s + a) + b_coef * (1.0 / (s + gamma) - 1.0 / (s + a))
            }
            Kernel::FiniteN { ipp, gamma, n_j } => {
                let (w1, w2) = ipp.excess_weights();
                n_j as f64
                    * (w1 * ipp.r1 / (s + gamma + ipp.r1) + w2 * ipp.r2 / (s + gamma + ipp.r2))
            }
            Kernel::FixedPeriodPoisson { rate, period } => {
                if s == 0.0 {
                    rate * period
                } else {
                    rate * -(-s * period).exp_m1() / s
                }
            }
        }
    }

    /// Smallest `t` with `tail_mass(t) <= tol` (to within bisection
    /// precision).
    pub fn truncation_horizon(&self, tol: f64) -> f64 {
        if self.tail_mass(0.0) <= tol {
            return 0.0;
        }
        if let Kernel::FixedPeriodPoisson { period, .. } = *self {
            return period;
        }
        let mut hi = 1.0;
        while self.tail_mass(hi) > tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Kernel::Zero | Kernel::Homogeneous { .. })
    }
}

/// Limiting kernel of the pair `(i, j)`.
pub fn limit_kernel(spec: &ModelSpec, i: usize, j: usize) -> Result<Kernel> {
    let report = classify_regime(spec)?;
    kernel_from_report(spec, &report, i, j)
}

fn kernel_from_report(spec: &ModelSpec, report: &RegimeReport, i: usize, j: usize) -> Result<Kernel> {
    let pair = report.pair(i, j);
    if !pair.constraints_ok {
        return Err(Error::Regime(format!(
            "pair ({}, {}): {}",
            i + 1,
            j + 1,
            pair.diagnostics().join("; ")
        )));
    }
    let r0 = pair.limit_r0.finite().ok_or_else(|| {
        Error::Regime(format!("pair ({}, {}) has a degenerate limit", i + 1, j + 1))
    })?;
    if pair.zero_channel || r0 == 0.0 {
        return Ok(Kernel::Zero);
    }
    Ok(if pair.case == RegimeCase::C6b {
        Kernel::CaseSixB {
            lambda: spec.lambda_coef[i][j],
            mu: spec.mu_coef[i][j],
            beta: spec.beta_coef[i][j],
            gamma: spec.gamma[i],
        }
    } else {
        Kernel::Homogeneous { gamma: spec.gamma[i], r0 }
    })
}

/// Finite-`n` kernel of the pair `(i, j)` at realized rates.
pub fn finite_kernel(spec: &ModelSpec, rates: &RealizedRates, i: usize, j: usize) -> Result<Kernel> {
    let (beta, lambda, mu) = (rates.beta_n[i][j], rates.lambda_n[i][j], rates.mu_n[i][j]);
    if beta == 0.0 || lambda == 0.0 {
        return Ok(Kernel::Zero);
    }
    Ok(Kernel::FiniteN {
        ipp: ipp_params(beta, lambda, mu)?,
        gamma: spec.gamma[i],
        n_j: rates.n_per_type[j],
    })
}

/// All pair kernels of a model, with the type fractions and recovery rates
/// needed for the forward and backward branching processes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub k: usize,
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major over `(source, target)`.
    pub kernels: Vec<Kernel>,
}

impl KernelMatrix {
    pub fn new(p: Vec<f64>, gamma: Vec<f64>, kernels: Vec<Kernel>) -> Result<Self> {
        let k = p.len();
        if k == 0 || gamma.len() != k || kernels.len() != k * k {
            return Err(Error::InvalidSpec("kernel matrix dimensions disagree".into()));
        }
        Ok(KernelMatrix { k, p, gamma, kernels })
    }

    /// Limiting kernels; fails if any pair lacks a finite limit.
    pub fn limit(spec: &ModelSpec) -> Result<Self> {
        let report = classify_regime(spec)?;
        let mut kernels = Vec::with_capacity(spec.k * spec.k);
        for i in 0..spec.k {
            for j in 0..spec.k {
                kernels.push(kernel_from_report(spec, &report, i, j)?);
            }
        }
        Self::new(spec.p.clone(), spec.gamma.clone(), kernels)
    }

    /// Finite-`n` kernels, with `p` replaced by the realized type fractions.
    pub fn finite(spec: &ModelSpec, rates: &RealizedRates) -> Result<Self> {
        let mut kernels = Vec::with_capacity(spec.k * spec.k);
        for i in 0..spec.k {
            for j in 0..spec.k {
                kernels.push(finite_kernel(spec, rates, i, j)?);
            }
        }
        let n = rates.n as f64;
        let p = rates.n_per_type.iter().map(|&c| c as f64 / n).collect();
        Self::new(p, spec.gamma.clone(), kernels)
    }

    pub fn kernel(&self, source: usize, target: usize) -> &Kernel {
        &self.kernels[source * self.k + target]
    }

    pub fn r0(&self) -> DMatrix<f64> {
        self.laplace_ml(0.0)
    }

    /// Forward Laplace matrix, `M^L[i][j](s)`: type-`i` parents, type-`j`
    /// children.
    pub fn laplace_ml(&self, s: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |i, j| self.kernel(i, j).laplace(s))
    }

    /// Backward Laplace matrix: a type-`j` individual bears type-`i`
    /// children with intensity `(p_i/p_j) R0_ij G_ij`, so entry `[j][i]` is
    /// `(p_i/p_j) M^L[i][j](s)`.
    pub fn laplace_ml_hat(&self, s: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |j, i| {
            self.p[i] / self.p[j] * self.kernel(i, j).laplace(s)
        })
    }

    /// Backward reproduction matrix, `laplace_ml_hat(0)`.
    pub fn r0_hat(&self) -> DMatrix<f64> {
        self.laplace_ml_hat(0.0)
    }

    pub fn all_homogeneous(&self) -> bool {
        self.kernels.iter().all(Kernel::is_homogeneous)
    }
}

/// `M^L(s)` of the limiting model.
pub fn laplace_ml(spec: &ModelSpec, s: f64) -> Result<DMatrix<f64>> {
    Ok(KernelMatrix::limit(spec)?.laplace_ml(s))
}

/// Backward counterpart of [`laplace_ml`].
pub fn laplace_ml_hat(spec: &ModelSpec, s: f64) -> Result<DMatrix<f64>> {
    Ok(KernelMatrix::limit(spec)?.laplace_ml_hat(s))
}
