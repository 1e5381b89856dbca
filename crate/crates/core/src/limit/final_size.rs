use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::spectral_radius;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSize {
    pub s_inf: Vec<f64>,
    pub attack_rate: Vec<f64>,
    /// False when only the trivial root exists.
    pub supercritical: bool,
}

/// Solves `-ln s_j = sum_i R0_ij (1 - s_i)` by monotone iteration from
/// `s = 0`, which converges to the nontrivial root.
pub fn final_size(r0: &DMatrix<f64>) -> Result<FinalSize> {
    let k = r0.nrows();
    if r0.ncols() != k || k == 0 {
        return Err(Error::InvalidSpec("R0 matrix must be square".into()));
    }
    if spectral_radius(r0) <= 1.0 {
        log::warn!("R0 spectral radius <= 1: only the trivial final size exists");
        return Ok(FinalSize { s_inf: vec![1.0; k], attack_rate: vec![0.0; k], supercritical: false });
    }
    let mut s = vec![0.0; k];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..k)
            .map(|j| (-(0..k).map(|i| r0[(i, j)] * (1.0 - s[i])).sum::<f64>()).exp())
            .collect();
        let change = next.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        s = next;
        if change < 1e-14 {
            let attack_rate = s.iter().map(|x| 1.0 - x).collect();
            return Ok(FinalSize { s_inf: s, attack_rate, supercritical: true });
        }
    }
    Err(Error::Numerical("final-size iteration did not converge".into()))
}

/// Peak infected fraction of the homogeneous single-type epidemic,
/// `1 - 1/R0 + ln(1/R0)/R0`.
pub fn i_max_closed_form(r0: f64) -> Result<f64> {
    if !(r0 > 1.0) {
        return Err(Error::Subcritical(format!("no epidemic peak for R0 = {r0}")));
    }
    Ok(1.0 - 1.0 / r0 + (1.0 / r0).ln() / r0)
}

/// Bracket `(s_hi, s_lo)` for the susceptible fraction at the peak of the
/// strong-form epidemic: `((mu+beta) gamma/(lambda beta), mu gamma/(lambda beta))`.
///
/// Also checks `s_lo = (mu+gamma) / (R0 (mu+beta+gamma))` with `R0` the
/// non-homogeneous reproduction number.
pub fn peak_thresholds(lambda: f64, mu: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && mu > 0.0 && beta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidSpec("peak thresholds need positive rates".into()));
    }
    let s_hi = (mu + beta) * gamma / (lambda * beta);
    let s_lo = mu * gamma / (lambda * beta);
    let r0 = lambda * beta * (mu + gamma) / (mu * (beta + mu + gamma) * gamma);
    if r0 <= 1.0 {
        return Err(Error::Subcritical(format!("strong-form R0 = {r0} <= 1")));
    }
    let identity = (mu + gamma) / (r0 * (mu + beta + gamma));
    if (identity - s_lo).abs() > 1e-12 * s_lo.max(1.0) {
        return Err(Error::Numerical(format!("threshold identity fails: {identity} vs {s_lo}")));
    }
    Ok((s_hi, s_lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Bisection on `ln s + R0 (1 - s) = 0` over `(0, 1/R0)`.
    fn scalar_oracle(r0: f64) -> f64 {
        let f = |s: f64| s.ln() + r0 * (1.0 - s);
        let (mut lo, mut hi) = (1e-300, 1.0 / r0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn r0_two() {
        let fs = final_size(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        let oracle = scalar_oracle(2.0);
        assert!((fs.s_inf[0] - oracle).abs() < 1e-10);
        assert!((fs.attack_rate[0] - 0.796812).abs() < 1e-6);
        assert_eq!(format!("{:.6}", fs.s_inf[0]), "0.203188");
        let residual = -fs.s_inf[0].ln() - 2.0 * (1.0 - fs.s_inf[0]);
        assert!(residual.abs() < 1e-10);
    }

    #[test]
    fn subcritical_is_trivial() {
        let fs = final_size(&DMatrix::from_element(1, 1, 0.9)).unwrap();
        assert_eq!(fs.s_inf, vec![1.0]);
        assert!(!fs.supercritical);
        assert_eq!(final_size(&DMatrix::from_element(1, 1, 1.0)).unwrap().s_inf, vec![1.0]);
    }

    #[test]
    fn symmetric_two_type_collapses() {
        let m = DMatrix::from_row_slice(2, 2, &[1.2, 0.8, 0.8, 1.2]);
        let fs = final_size(&m).unwrap();
        let oracle = scalar_oracle(2.0);
        assert!((fs.s_inf[0] - oracle).abs() < 1e-10 && (fs.s_inf[1] - oracle).abs() < 1e-10);
    }

    #[test]
    fn i_max_values() {
        assert_relative_eq!(i_max_closed_form(2.0).unwrap(), 0.5 - 0.5 * 2f64.ln(), max_relative = 1e-15);
        assert!((i_max_closed_form(2.0).unwrap() - 0.153426).abs() < 1e-6);
        assert!(i_max_closed_form(1e9).unwrap() > 0.99);
        assert!(i_max_closed_form(1.0).is_err());
    }

    #[test]
    fn canonical_thresholds() {
        let (hi, lo) = peak_thresholds(3.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(hi, 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(lo, 1.0 / 3.0, max_relative = 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn final_size_residual(entries in proptest::collection::vec(0.3f64..3.0, 4)) {
            let m = DMatrix::from_row_slice(2, 2, &entries);
            let fs = final_size(&m).unwrap();
            if fs.supercritical {
                for j in 0..2 {
                    let rhs: f64 = (0..2).map(|i| m[(i, j)] * (1.0 - fs.s_inf[i])).sum();
                    proptest::prop_assert!((-fs.s_inf[j].ln() - rhs).abs() < 1e-10);
                    proptest::prop_assert!(fs.s_inf[j] > 0.0 && fs.s_inf[j] < 1.0);
                }
            }
        }
    }
}
