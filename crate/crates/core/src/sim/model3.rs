use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

use super::queue::EventQueue;
use super::{run_rng, EventKind, ModelTag, Population, SimOptions, Status, Trajectory};
use crate::contact::{ipp_params, IppParams};
use crate::params::{realize_rates, ModelSpec, RealizedRates};
use crate::Result;

enum Item {
    Contact(u32),
    Recovery(u32),
}

/// Model 3 with a fresh generator seeded from `seed`.
pub fn simulate_model3(spec: &ModelSpec, n: u64, seed: u64) -> Result<Trajectory> {
    let rates = realize_rates(spec, n)?;
    simulate_model3_with(spec, &rates, seed, &SimOptions::default(), &mut run_rng(seed, 0))
}

/// Model 3 on a caller-supplied generator. `seed` is only recorded.
pub fn simulate_model3_with<R: Rng + ?Sized>(
    spec: &ModelSpec,
    rates: &RealizedRates,
    seed: u64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    let pop = Population::new(&rates.n_per_type, opts.seed_type)?;
    let k = pop.k();
    let mut ipp: Vec<Option<IppParams>> = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let (l, m, b) = (rates.lambda_n[i][j], rates.mu_n[i][j], rates.beta_n[i][j]);
            ipp.push(if spec.is_zero_channel(i, j) || l == 0.0 || b == 0.0 {
                None
            } else {
                Some(ipp_params(b, l, m)?)
            });
        }
    }
    let mut traj = Trajectory::new(rates.n, seed, ModelTag::M3, rates.n_per_type.clone(), opts);
    let mut status = vec![Status::Susceptible; pop.size()];
    let mut queue = EventQueue::new();
    let mut ever = 0u64;

    let first = pop.uniform_member(opts.seed_type, rng);
    let mut pending = Some((0.0, first));
    loop {
        if let Some((t, who)) = pending.take() {
            // infection of `who` at time `t`
            let ty = pop.type_of(who);
            status[who as usize] = Status::Infected;
            traj.push(t, EventKind::Infection, ty);
            ever += 1;
            if opts.stop_at.is_some_and(|s| ever >= s) {
                traj.stopped_early = true;
                break;
            }
            let e: f64 = rng.sample(Exp1);
            let q = e / spec.gamma[ty];
            queue.push(t + q, Item::Recovery(who));
            for j in 0..k {
                let Some(pair) = &ipp[ty * k + j] else { continue };
                let nj = rates.n_per_type[j];
                let prob = pair.excess_cdf(q);
                if prob <= 0.0 {
                    continue;
                }
                let count = Binomial::new(nj, prob).expect("valid binomial").sample(rng);
                if count == 0 {
                    continue;
                }
                for local in sample(rng, nj as usize, count as usize) {
                    let target = pop.member(j, local);
                    let dt = pair.sample_excess_truncated(q, rng);
                    if target != who {
                        queue.push(t + dt, Item::Contact(target));
                    }
                }
            }
        }
        let Some((t, item)) = queue.pop() else { break };
        if t > opts.horizon {
            traj.stopped_early = true;
            break;
        }
        match item {
            Item::Recovery(who) => {
                status[who as usize] = Status::Recovered;
                traj.push(t, EventKind::Recovery, pop.type_of(who));
            }
            Item::Contact(target) => {
                if status[target as usize] == Status::Susceptible {
                    pending = Some((t, target));
                }
            }
        }
    }
    traj.finish();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::r0_n;
    use crate::sim::EventKind;

    fn six_b() -> ModelSpec {
        ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0)
    }

    #[test]
    fn single_individual() {
        let t = simulate_model3(&six_b(), 1, 5).unwrap();
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].time, 0.0);
        assert_eq!(t.events[0].kind, EventKind::Infection);
        assert_eq!(t.events[1].kind, EventKind::Recovery);
        assert_eq!(t.final_fraction(), 1.0);
    }

    #[test]
    fn no_contacts_without_beta() {
        let mut spec = six_b();
        spec.beta_coef[0][0] = 0.0;
        let t = simulate_model3(&spec, 500, 1).unwrap();
        assert_eq!(t.ever_infected(), 1);
        assert_eq!(t.events.len(), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_model3(&six_b(), 2000, 11).unwrap();
        let b = simulate_model3(&six_b(), 2000, 11).unwrap();
        let c = simulate_model3(&six_b(), 2000, 12).unwrap();
        assert_eq!(a.event_log_csv(0, true), b.event_log_csv(0, true));
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn stop_at_cuts_run() {
        let spec = six_b();
        let rates = realize_rates(&spec, 10_000).unwrap();
        let opts = SimOptions { stop_at: Some(5), threshold: Some(5), ..SimOptions::default() };
        for seed in 0..50 {
            let t = simulate_model3_with(&spec, &rates, seed, &opts, &mut run_rng(seed, 0)).unwrap();
            assert!(t.ever_infected() <= 5);
            assert_eq!(t.stopped_early, t.ever_infected() == 5);
            assert_eq!(t.outbreak, t.ever_infected() == 5);
        }
    }

    /// Per-infective contact counts against the closed-form mean.
    #[test]
    fn mean_contacts_match_r0_n() {
        let (l, m, b, g, n) = (3.0 / 1000.0, 1.0, 1.0, 1.0, 1000u64);
        let pair = ipp_params(b, l, m).unwrap();
        let mut rng = run_rng(99, 0);
        let draws = 100_000;
        let mut total = 0u64;
        for _ in 0..draws {
            let e: f64 = rng.sample(Exp1);
            let q = e / g;
            total += Binomial::new(n, pair.excess_cdf(q)).unwrap().sample(&mut rng);
        }
        let mean = total as f64 / draws as f64;
        let expected = r0_n(b, l, m, g, n);
        assert!((mean / expected - 1.0).abs() < 0.01, "{mean} vs {expected}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn conservation_and_order(seed in 0u64..1000, n in 1u64..400, p0 in 0.2f64..0.8) {
            let mut spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
            spec.k = 2;
            spec.p = vec![p0, 1.0 - p0];
            for m in [&mut spec.lambda_coef, &mut spec.mu_coef, &mut spec.beta_coef,
                      &mut spec.kappa_lambda, &mut spec.kappa_mu, &mut spec.kappa_beta] {
                let v = m[0][0];
                *m = vec![vec![v; 2]; 2];
            }
            spec.gamma = vec![1.0, 1.5];
            let Ok(rates) = realize_rates(&spec, n) else { return Ok(()) };
            let t = simulate_model3_with(&spec, &rates, seed, &SimOptions::default(), &mut run_rng(seed, 0)).unwrap();
            let times: Vec<f64> = t.events.iter().map(|e| e.time).collect();
            proptest::prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
            let infections = t.ever_infected();
            let recoveries = t.events.len() as u64 - infections;
            proptest::prop_assert_eq!(infections, recoveries);
            let c = t.curves_at(&times);
            for ty in 0..2 {
                for x in 0..times.len() {
                    let sum = c.s[ty][x] + c.i[ty][x] + c.r[ty][x];
                    proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
