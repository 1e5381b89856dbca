//! Model parameterization and scaling-regime classification.
//!
//! Rates are power laws in the target type's size:
//! `lambda_n[i][j] = lambda[i][j] * n_j^kappa_lambda[i][j]`, and likewise for
//! `mu` and `beta`; recovery rates `gamma` do not scale. Which limit the
//! epidemic has depends on the sign pattern of `(kappa_lambda, kappa_mu)`
//! per type pair, giving nine cases (some with sub-cases); see
//! [`classify_regime`].

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exponents closer than this are treated as equal.
pub const EXPONENT_TOL: f64 = 1e-12;

/// Full parameterization of the dynamic-graph SIR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    /// Asymptotic type fractions.
    pub p: Vec<f64>,
    #[serde(rename = "lambda")]
    pub lambda_coef: Vec<Vec<f64>>,
    #[serde(rename = "mu")]
    pub mu_coef: Vec<Vec<f64>>,
    #[serde(rename = "beta")]
    pub beta_coef: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub kappa_lambda: Vec<Vec<f64>>,
    pub kappa_mu: Vec<Vec<f64>>,
    pub kappa_beta: Vec<Vec<f64>>,
}

impl ModelSpec {
    /// Single-type model.
    #[allow(clippy::too_many_arguments)]
    pub fn single(
        lambda: f64,
        mu: f64,
        beta: f64,
        gamma: f64,
        kappa_lambda: f64,
        kappa_mu: f64,
        kappa_beta: f64,
    ) -> Self {
        ModelSpec {
            k: 1,
            p: vec![1.0],
            lambda_coef: vec![vec![lambda]],
            mu_coef: vec![vec![mu]],
            beta_coef: vec![vec![beta]],
            gamma: vec![gamma],
            kappa_lambda: vec![vec![kappa_lambda]],
            kappa_mu: vec![vec![kappa_mu]],
            kappa_beta: vec![vec![kappa_beta]],
        }
    }

    /// Checks every structural invariant of the specification.
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if k == 0 {
            return bad("k must be positive".into());
        }
        if self.p.len() != k || self.gamma.len() != k {
            return bad(format!("p and gamma must have length k = {k}"));
        }
        let matrices = [
            ("lambda", &self.lambda_coef),
            ("mu", &self.mu_coef),
            ("beta", &self.beta_coef),
            ("kappa_lambda", &self.kappa_lambda),
            ("kappa_mu", &self.kappa_mu),
            ("kappa_beta", &self.kappa_beta),
        ];
        for (name, m) in matrices {
            if m.len() != k || m.iter().any(|row| row.len() != k) {
                return bad(format!("{name} must be a {k}x{k} matrix"));
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        if self.p.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return bad("every type fraction p_i must be positive".into());
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("type fractions sum to {total}, not 1"));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return bad("recovery rates gamma must be positive".into());
        }
        for i in 0..k {
            for j in 0..k {
                if self.lambda_coef[i][j] < 0.0 || self.beta_coef[i][j] < 0.0 {
                    return bad(format!("negative lambda or beta at ({}, {})", i + 1, j + 1));
                }
                if !(self.mu_coef[i][j] > 0.0) {
                    return bad(format!("mu must be positive at ({}, {})", i + 1, j + 1));
                }
                if self.lambda_coef[i][j] != self.lambda_coef[j][i]
                    || self.mu_coef[i][j] != self.mu_coef[j][i]
                {
                    return bad(format!("lambda and mu must be symmetric at ({}, {})", i + 1, j + 1));
                }
                if self.kappa_beta[i][j] > 0.0 {
                    return bad(format!("kappa_beta must be nonpositive at ({}, {})", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    pub fn pair_exponents(&self, i: usize, j: usize) -> PairExponents {
        PairExponents {
            kappa_lambda: self.kappa_lambda[i][j],
            kappa_mu: self.kappa_mu[i][j],
            kappa_beta: self.kappa_beta[i][j],
        }
    }

    /// A pair with no contact channel: either edges never form or the
    /// transmission rate is zero.
    pub fn is_zero_channel(&self, i: usize, j: usize) -> bool {
        self.beta_coef[i][j] == 0.0 || self.lambda_coef[i][j] == 0.0
    }
}

/// Type counts and realized rates at a given population size.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedRates {
    pub n: u64,
    pub n_per_type: Vec<u64>,
    pub lambda_n: Vec<Vec<f64>>,
    pub mu_n: Vec<Vec<f64>>,
    pub beta_n: Vec<Vec<f64>>,
}

/// Splits `n` into type counts by largest-remainder rounding of `p_i * n`,
/// ties going to the lowest type index.
pub fn type_counts(p: &[f64], n: u64) -> Vec<u64> {
    let nf = n as f64;
    let mut counts: Vec<u64> = p.iter().map(|&pi| (pi * nf).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..p.len()).collect();
    let remainder = |i: usize| p[i] * nf - (p[i] * nf).floor();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Computes the `n`-dependent type counts and rates.
pub fn realize_rates(spec: &ModelSpec, n: u64) -> Result<RealizedRates> {
    spec.validate()?;
    let k = spec.k;
    let n_per_type = type_counts(&spec.p, n);
    if let Some(empty) = n_per_type.iter().position(|&c| c == 0) {
        return Err(Error::PopulationTooSmall { n, k, empty_type: empty + 1 });
    }
    let realize = |coef: &Vec<Vec<f64>>, kappa: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| coef[i][j] * (n_per_type[j] as f64).powf(kappa[i][j]))
                    .collect()
            })
            .collect()
    };
    Ok(RealizedRates {
        n,
        lambda_n: realize(&spec.lambda_coef, &spec.kappa_lambda),
        mu_n: realize(&spec.mu_coef, &spec.kappa_mu),
        beta_n: realize(&spec.beta_coef, &spec.kappa_beta),
        n_per_type,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairExponents {
    pub kappa_lambda: f64,
    pub kappa_mu: f64,
    pub kappa_beta: f64,
}

/// The scaling cases, by sign pattern of `(kappa_lambda, kappa_mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeCase {
    C1a,
    C1b,
    C1c,
    C2,
    C3,
    C4,
    C5a,
    C5b,
    C5c,
    C6a,
    C6b,
    C7,
    C8,
    C9,
}

impl RegimeCase {
    pub fn label(self) -> &'static str {
        use RegimeCase::*;
        match self {
            C1a => "1a",
            C1b => "1b",
            C1c => "1c",
            C2 => "2",
            C3 => "3",
            C4 => "4",
            C5a => "5a",
            C5b => "5b",
            C5c => "5c",
            C6a => "6a",
            C6b => "6b",
            C7 => "7",
            C8 => "8",
            C9 => "9",
        }
    }

    /// Only case 6b has a non-homogeneous limiting contact kernel.
    pub fn is_homogeneous(self) -> bool {
        self != RegimeCase::C6b
    }
}

impl fmt::Display for RegimeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}", self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// Needed for a finite positive limiting reproduction number.
    Scaling,
    /// Needed for the total-variation decay rate of the contact processes.
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub description: String,
    pub kind: ConstraintKind,
    pub satisfied: bool,
}

/// Limit of the reproduction number of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitR0 {
    Finite(f64),
    DegenerateZero,
    DegenerateInfinite,
}

impl LimitR0 {
    pub fn finite(self) -> Option<f64> {
        match self {
            LimitR0::Finite(x) => Some(x),
            _ => None,
        }
    }
}

impl fmt::Display for LimitR0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitR0::Finite(x) => write!(f, "{x:.6}"),
            LimitR0::DegenerateZero => write!(f, "degenerate (0)"),
            LimitR0::DegenerateInfinite => write!(f, "degenerate (inf)"),
        }
    }
}

/// Classification of one ordered type pair `(source, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRegime {
    pub source: usize,
    pub target: usize,
    pub case: RegimeCase,
    /// No contact channel at all (`beta = 0` or `lambda = 0`).
    pub zero_channel: bool,
    pub constraints: Vec<Constraint>,
    pub constraints_ok: bool,
    pub tv_rate_ok: bool,
    pub limit_r0: LimitR0,
    pub homogeneous: bool,
}

impl PairRegime {
    pub fn diagnostics(&self) -> Vec<String> {
        self.constraints
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| format!("{}: violates {}", self.case, c.description))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub k: usize,
    /// Row-major over `(source, target)`.
    pub pairs: Vec<PairRegime>,
    pub overall_ok: bool,
    pub tv_rate_ok: bool,
}

impl RegimeReport {
    pub fn pair(&self, source: usize, target: usize) -> &PairRegime {
        &self.pairs[source * self.k + target]
    }

    pub fn diagnostics(&self) -> Vec<String> {
        self.pairs
            .iter()
            .flat_map(|p| {
                p.diagnostics()
                    .into_iter()
                    .map(move |d| format!("pair ({}, {}) {d}", p.source + 1, p.target + 1))
            })
            .collect()
    }

    /// One line per pair, e.g. `case 6b, non-homogeneous, R0=2.000000`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            if self.k > 1 {
                out.push_str(&format!("pair ({}, {}): ", p.source + 1, p.target + 1));
            }
            let hom = if p.homogeneous { "homogeneous" } else { "non-homogeneous" };
            out.push_str(&format!("{}, {hom}, R0={}", p.case, p.limit_r0));
            if p.zero_channel {
                out.push_str(", no contact channel");
            }
            if !p.constraints_ok {
                out.push_str(", constraints violated");
            }
            out.push('\n');
            for d in p.diagnostics() {
                out.push_str(&format!("  {d}\n"));
            }
        }
        out
    }
}

fn eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXPONENT_TOL
}

fn sign(x: f64) -> i8 {
    if x.abs() <= EXPONENT_TOL {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Rate-constraint threshold: `1/3` for a single type, `17/24` otherwise.
pub fn rate_threshold(k: usize) -> f64 {
    if k == 1 {
        1.0 / 3.0
    } else {
        17.0 / 24.0
    }
}

fn select_case(e: &PairExponents) -> RegimeCase {
    use RegimeCase::*;
    let (kl, km, kb) = (e.kappa_lambda, e.kappa_mu, e.kappa_beta);
    match (sign(kl), sign(km)) {
        (1, 1) => match sign(kl - km) {
            -1 => C1a,
            0 => C1b,
            _ => C1c,
        },
        (1, -1) => C2,
        (1, 0) => C3,
        (-1, 1) => C4,
        (-1, -1) => match sign(kl - km) {
            0 => C5a,
            1 => C5b,
            _ => C5c,
        },
        (-1, 0) => {
            if eq(kb, 0.0) && eq(kl, -1.0) {
                C6b
            } else {
                C6a
            }
        }
        (0, 1) => C7,
        (0, -1) => C8,
        _ => C9,
    }
}

fn case_constraints(case: RegimeCase, e: &PairExponents, theta: f64) -> Vec<Constraint> {
    use ConstraintKind::{Rate, Scaling};
    use RegimeCase::*;
    let (kl, km, kb) = (e.kappa_lambda, e.kappa_mu, e.kappa_beta);
    let th = if eq(theta, 1.0 / 3.0) { "1/3".to_string() } else { "17/24".to_string() };
    let th1 = if eq(theta, 1.0 / 3.0) { "4/3".to_string() } else { "41/24".to_string() };
    let lt = |a: f64, b: f64| a < b - EXPONENT_TOL;
    let c = |description: String, kind, satisfied| Constraint { description, kind, satisfied };
    let beta_minus_one = || c("kappa_beta = -1".into(), Scaling, eq(kb, -1.0));
    match case {
        C1a => vec![
            c(format!("kappa_lambda - kappa_mu < -{th}"), Rate, lt(kl - km, -theta)),
            c("1 + kappa_lambda + kappa_beta - kappa_mu = 0".into(), Scaling, eq(1.0 + kl + kb - km, 0.0)),
        ],
        C1b => vec![beta_minus_one()],
        C1c => vec![
            c(format!("kappa_lambda - {th} > kappa_mu"), Rate, lt(km, kl - theta)),
            beta_minus_one(),
        ],
        C2 => vec![
            beta_minus_one(),
            c(format!("kappa_mu - kappa_lambda < -{th}"), Rate, lt(km - kl, -theta)),
        ],
        C3 => vec![beta_minus_one()],
        C4 => vec![
            c(format!("kappa_lambda < -{th1}"), Rate, lt(kl, -(1.0 + theta))),
            c("1 + kappa_lambda + kappa_beta - kappa_mu = 0".into(), Scaling, eq(1.0 + kl + kb - km, 0.0)),
            c(format!("kappa_beta < -{th1}"), Rate, lt(kb, -(1.0 + theta))),
        ],
        C5a => vec![
            c(format!("kappa_lambda = kappa_mu < -{th}"), Rate, lt(kl, -theta)),
            beta_minus_one(),
        ],
        C5b => vec![
            c(format!("kappa_lambda < -{th}"), Rate, lt(kl, -theta)),
            c(format!("kappa_mu - kappa_lambda < -{th}"), Rate, lt(km - kl, -theta)),
            beta_minus_one(),
        ],
        C5c => vec![
            c(format!("kappa_lambda - kappa_mu < -{th}"), Rate, lt(kl - km, -theta)),
            c(format!("kappa_mu < -{th}"), Rate, lt(km, -theta)),
            c(format!("kappa_beta < -{th}"), Rate, lt(kb, -theta)),
            c("1 + kappa_beta + kappa_lambda - kappa_mu = 0".into(), Scaling, eq(1.0 + kb + kl - km, 0.0)),
        ],
        C6a => vec![
            c(format!("kappa_beta < -{th}"), Rate, lt(kb, -theta)),
            c("kappa_lambda + kappa_beta = -1".into(), Scaling, eq(kl + kb, -1.0)),
            c(format!("kappa_lambda < -{th}"), Rate, lt(kl, -theta)),
        ],
        C6b => vec![
            c("kappa_beta = 0".into(), Scaling, eq(kb, 0.0)),
            c("kappa_lambda = -1".into(), Scaling, eq(kl, -1.0)),
        ],
        C7 => vec![
            c(format!("kappa_mu > {th}"), Rate, lt(theta, km)),
            c("1 + kappa_beta = kappa_mu".into(), Scaling, eq(1.0 + kb, km)),
        ],
        C8 => vec![
            c(format!("kappa_mu < -{th}"), Rate, lt(km, -theta)),
            beta_minus_one(),
        ],
        C9 => vec![beta_minus_one()],
    }
}

/// `gamma * R0` as tabulated for the case.
fn tabulated_gamma_r0(case: RegimeCase, lambda: f64, mu: f64, beta: f64, gamma: f64) -> f64 {
    use RegimeCase::*;
    match case {
        C1a | C4 | C5c | C6a | C7 => lambda * beta / mu,
        C1b | C5a | C9 => lambda * beta / (lambda + mu),
        C1c | C2 | C3 | C5b | C8 => beta,
        C6b => lambda * beta * (mu + gamma) / (mu * (beta + mu + gamma)),
    }
}

/// A sum of power-law terms `coef * n^exp`, used to find the leading
/// behaviour of the finite-`n` reproduction number.
#[derive(Debug, Clone)]
struct PowerSum(Vec<(f64, f64)>);

impl PowerSum {
    fn term(coef: f64, exp: f64) -> Self {
        PowerSum(vec![(coef, exp)])
    }

    fn add(mut self, other: &PowerSum) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    fn mul(&self, other: &PowerSum) -> Self {
        let mut out = Vec::with_capacity(self.0.len() * other.0.len());
        for &(a, x) in &self.0 {
            for &(b, y) in &other.0 {
                out.push((a * b, x + y));
            }
        }
        PowerSum(out)
    }

    /// Leading exponent and the summed coefficient of all terms at it.
    fn leading(&self) -> (f64, f64) {
        let top = self
            .0
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .map(|&(_, e)| e)
            .fold(f64::NEG_INFINITY, f64::max);
        let coef = self
            .0
            .iter()
            .filter(|(c, e)| *c != 0.0 && eq(*e, top))
            .map(|&(c, _)| c)
            .sum();
        (top, coef)
    }
}

/// Limit of `R0_n` as `n -> infinity`, from the leading power-law terms of
///
/// `n_j beta lambda (lambda + mu + gamma) / ((lambda + mu)(gamma^2 + gamma(beta + lambda + mu) + beta lambda))`.
///
/// Independent of the case tables; used to detect degenerate limits.
pub fn asymptotic_r0(spec: &ModelSpec, i: usize, j: usize) -> LimitR0 {
    if spec.is_zero_channel(i, j) {
        return LimitR0::Finite(0.0);
    }
    let e = spec.pair_exponents(i, j);
    let lam = PowerSum::term(spec.lambda_coef[i][j], e.kappa_lambda);
    let mu = PowerSum::term(spec.mu_coef[i][j], e.kappa_mu);
    let beta = PowerSum::term(spec.beta_coef[i][j], e.kappa_beta);
    let g = spec.gamma[i];
    let gam = PowerSum::term(g, 0.0);
    let n = PowerSum::term(1.0, 1.0);
    let lam_mu = lam.clone().add(&mu);
    let num = n.mul(&beta).mul(&lam).mul(&lam_mu.clone().add(&gam));
    let quad = PowerSum::term(g * g, 0.0)
        .add(&gam.mul(&beta.clone().add(&lam).add(&mu)))
        .add(&beta.mul(&lam));
    let den = lam_mu.mul(&quad);
    let (en, cn) = num.leading();
    let (ed, cd) = den.leading();
    match sign(en - ed) {
        1 => LimitR0::DegenerateInfinite,
        -1 => LimitR0::DegenerateZero,
        _ => LimitR0::Finite(cn / cd),
    }
}

/// Classifies every ordered type pair.
///
/// Each pair is assigned a case from the sign pattern of its exponents and
/// checked against the case's constraints (thresholds from the single-type
/// table when `k = 1`, the multi-type table otherwise). The reported limit
/// comes from the tabulated formula when the constraints hold, and from the
/// leading-order asymptotics otherwise, so degenerate limits are reported
/// rather than clamped.
pub fn classify_regime(spec: &ModelSpec) -> Result<RegimeReport> {
    spec.validate()?;
    let k = spec.k;
    let theta = rate_threshold(k);
    let mut pairs = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let e = spec.pair_exponents(i, j);
            let case = select_case(&e);
            let zero_channel = spec.is_zero_channel(i, j);
            let constraints = case_constraints(case, &e, theta);
            let scaling_ok = constraints
                .iter()
                .filter(|c| c.kind == ConstraintKind::Scaling)
                .all(|c| c.satisfied);
            let tv_rate_ok = constraints
                .iter()
                .filter(|c| c.kind == ConstraintKind::Rate)
                .all(|c| c.satisfied);
            let limit_r0 = if zero_channel {
                LimitR0::Finite(0.0)
            } else if scaling_ok {
                let gr0 = tabulated_gamma_r0(
                    case,
                    spec.lambda_coef[i][j],
                    spec.mu_coef[i][j],
                    spec.beta_coef[i][j],
                    spec.gamma[i],
                );
                LimitR0::Finite(gr0 / spec.gamma[i])
            } else {
                asymptotic_r0(spec, i, j)
            };
            pairs.push(PairRegime {
                source: i,
                target: j,
                case,
                zero_channel,
                constraints_ok: zero_channel || (scaling_ok && tv_rate_ok),
                tv_rate_ok: zero_channel || tv_rate_ok,
                constraints,
                limit_r0,
                homogeneous: zero_channel || case.is_homogeneous(),
            });
        }
    }
    let overall_ok = pairs.iter().all(|p| p.constraints_ok);
    let tv_rate_ok = pairs.iter().all(|p| p.tv_rate_ok);
    Ok(RegimeReport { k, pairs, overall_ok, tv_rate_ok })
}

/// Limiting reproduction matrix `R0[i][j]` (source `i`, target `j`).
pub fn limit_r0_matrix(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let report = classify_regime(spec)?;
    limit_r0_from_report(&report)
}

pub fn limit_r0_from_report(report: &RegimeReport) -> Result<DMatrix<f64>> {
    if !report.overall_ok {
        return Err(Error::Regime(report.diagnostics().join("; ")));
    }
    let k = report.k;
    let mut m = DMatrix::zeros(k, k);
    for p in &report.pairs {
        m[(p.source, p.target)] = p
            .limit_r0
            .finite()
            .ok_or_else(|| Error::Regime(format!("pair ({}, {}) has a degenerate limit", p.source + 1, p.target + 1)))?;
    }
    Ok(m)
}
