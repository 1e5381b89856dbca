use rayon::prelude::*;

use super::{derive_seed, run_rng, simulate_with, ModelTag, SimOptions, Trajectory};
use crate::contact::KernelMatrix;
use crate::linalg::spectral_radius;
use crate::params::{realize_rates, ModelSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    pub model: ModelTag,
    pub threshold_exponent: f64,
    pub max_restarts: u64,
    /// Stop each accepted run at the threshold instead of running it out.
    pub stop_at_threshold: bool,
    pub sim: SimOptions,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            model: ModelTag::M3,
            threshold_exponent: 17.0 / 24.0,
            max_restarts: 1000,
            stop_at_threshold: false,
            sim: SimOptions::default(),
        }
    }
}

/// An accepted run and the number of runs thrown away before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    pub trajectory: Trajectory,
    pub discarded: u64,
}

/// `floor(n^exponent)`, at least 1.
pub fn conditioning_threshold(n: u64, exponent: f64) -> u64 {
    let x = (n as f64).powf(exponent);
    // guard exact integer powers against rounding down
    ((x * (1.0 + 1e-12)).floor() as u64).max(1)
}

/// Simulates with streams `0, 1, 2, ...` of `seed` until a run reaches the
/// threshold.
pub fn condition_on_outbreak(spec: &ModelSpec, n: u64, seed: u64, opts: &ConditionOptions) -> Result<Conditioned> {
    if let Ok(km) = KernelMatrix::limit(spec) {
        if spectral_radius(&km.r0()) <= 1.0 {
            log::warn!("limit R0 spectral radius <= 1; conditioning will rarely succeed");
        }
    }
    let rates = realize_rates(spec, n)?;
    let threshold = conditioning_threshold(n, opts.threshold_exponent);
    let sim = SimOptions {
        threshold: Some(threshold),
        stop_at: if opts.stop_at_threshold { Some(threshold) } else { opts.sim.stop_at },
        ..opts.sim
    };
    for attempt in 0..=opts.max_restarts {
        let trajectory = simulate_with(opts.model, spec, &rates, seed, &sim, &mut run_rng(seed, attempt))?;
        if trajectory.outbreak {
            return Ok(Conditioned { trajectory, discarded: attempt });
        }
    }
    Err(Error::ConditioningFailed { discarded: opts.max_restarts + 1, threshold })
}

/// Conditioned runs `0..runs`, run `r` seeded with `derive_seed(master, r)`.
/// Results come back in run order whatever the thread scheduling.
pub fn conditioned_ensemble(
    spec: &ModelSpec,
    n: u64,
    master_seed: u64,
    runs: u64,
    opts: &ConditionOptions,
) -> Result<Vec<Conditioned>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            condition_on_outbreak(spec, n, derive_seed(master_seed, r), opts)
                .map_err(|e| Error::Run { n, run: r, source: Box::new(e) })
        })
        .collect()
}

/// Number of single, unconditioned runs out of `runs` that reach the
/// threshold. Each run stops at the threshold.
pub fn outbreak_count(spec: &ModelSpec, n: u64, master_seed: u64, runs: u64, opts: &ConditionOptions) -> Result<u64> {
    let rates = realize_rates(spec, n)?;
    let threshold = conditioning_threshold(n, opts.threshold_exponent);
    let sim = SimOptions { threshold: Some(threshold), stop_at: Some(threshold), ..opts.sim };
    let hits: Result<Vec<bool>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, r);
            simulate_with(opts.model, spec, &rates, seed, &sim, &mut run_rng(seed, 0)).map(|t| t.outbreak)
        })
        .collect();
    Ok(hits?.into_iter().filter(|&h| h).count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(conditioning_threshold(300, 17.0 / 24.0), 56);
        assert_eq!(conditioning_threshold(100_000, 17.0 / 24.0), 3480);
        assert_eq!(conditioning_threshold(1 << 24, 17.0 / 24.0), 1 << 17);
        assert_eq!(conditioning_threshold(1, 17.0 / 24.0), 1);
    }

    #[test]
    fn accepted_run_has_crossing() {
        let spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
        let c = condition_on_outbreak(&spec, 1000, 3, &ConditionOptions::default()).unwrap();
        let t = &c.trajectory;
        assert!(t.outbreak);
        let crossing = t.crossing_time.unwrap();
        assert_eq!(t.time_to_reach(conditioning_threshold(1000, 17.0 / 24.0)), Some(crossing));
        assert!(!t.stopped_early);
    }

    #[test]
    fn subcritical_exhausts_restarts() {
        let spec = ModelSpec::single(1.0, 1.0, 1.0, 1.0, 0.0, 0.0, -1.0);
        let km = KernelMatrix::limit(&spec).unwrap();
        assert!(km.r0()[(0, 0)] < 1.0);
        let opts = ConditionOptions { max_restarts: 200, ..ConditionOptions::default() };
        match condition_on_outbreak(&spec, 10_000, 1, &opts) {
            Err(Error::ConditioningFailed { discarded, threshold }) => {
                assert_eq!(discarded, 201);
                assert_eq!(threshold, 681);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn ensemble_is_order_independent() {
        let spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
        let opts = ConditionOptions { stop_at_threshold: true, ..ConditionOptions::default() };
        let all = conditioned_ensemble(&spec, 500, 42, 8, &opts).unwrap();
        let sixth = condition_on_outbreak(&spec, 500, derive_seed(42, 5), &opts).unwrap();
        assert_eq!(all[5], sixth);
    }
}
