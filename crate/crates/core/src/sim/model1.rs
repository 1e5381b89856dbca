//! Edge-resolved simulation.
//!
//! Only edges at an infectious individual matter. When `x` becomes infected
//! its edge to each other individual is drawn from equilibrium (on with
//! probability `lambda/(lambda+mu)`) and then evolves as a two-state chain
//! while `x` is infectious. Off edges are memoryless, so they are kept as a
//! count: `x` switches one on at rate `lambda` times the number of off
//! edges, picking the partner uniformly among them. On edges are listed
//! explicitly; each carries contacts at rate `beta` and switches off at rate
//! `mu`. An edge between two infectives is simulated separately from each
//! end; neither copy can infect anyone, so this changes nothing.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

use super::queue::EventQueue;
use super::{run_rng, EventKind, ModelTag, Population, SimOptions, Status, Trajectory};
use crate::params::{realize_rates, ModelSpec, RealizedRates};
use crate::{Error, Result};

pub const DEFAULT_EXACT_CAP: u64 = 2000;

enum Item {
    Edge(u32),
    Recovery(u32),
}

struct Star {
    ty: usize,
    recover_at: f64,
    /// Partners on an on edge, by partner type (local indices).
    on: Vec<Vec<u32>>,
}

struct PairRates {
    lambda: f64,
    mu: f64,
    beta: f64,
}

/// Model 1 (or the reset variant, Model 2) from `seed`.
pub fn simulate_model1(
    spec: &ModelSpec,
    n: u64,
    seed: u64,
    horizon: f64,
    reset_on_infection: bool,
) -> Result<Trajectory> {
    let rates = realize_rates(spec, n)?;
    let opts = SimOptions { horizon, ..SimOptions::default() };
    simulate_model1_with(spec, &rates, seed, reset_on_infection, &opts, &mut run_rng(seed, 0))
}

/// Uniform `amount`-subset of `0..len` minus the sorted `excluded` indices.
fn sample_excluding<R: Rng + ?Sized>(rng: &mut R, len: usize, amount: usize, excluded: &[usize]) -> Vec<u32> {
    sample(rng, len - excluded.len(), amount)
        .into_iter()
        .map(|mut v| {
            for &e in excluded {
                if v >= e {
                    v += 1;
                }
            }
            v as u32
        })
        .collect()
}

pub fn simulate_model1_with<R: Rng + ?Sized>(
    spec: &ModelSpec,
    rates: &RealizedRates,
    seed: u64,
    reset_on_infection: bool,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    if rates.n > opts.exact_cap {
        return Err(Error::ExactModelCap { n: rates.n, cap: opts.exact_cap });
    }
    let pop = Population::new(&rates.n_per_type, opts.seed_type)?;
    let k = pop.k();
    let pair: Vec<Option<PairRates>> = (0..k * k)
        .map(|ij| {
            let (i, j) = (ij / k, ij % k);
            let (lambda, mu, beta) = (rates.lambda_n[i][j], rates.mu_n[i][j], rates.beta_n[i][j]);
            (!spec.is_zero_channel(i, j) && lambda > 0.0 && beta > 0.0).then_some(PairRates { lambda, mu, beta })
        })
        .collect();
    let model = if reset_on_infection { ModelTag::M2 } else { ModelTag::M1 };
    let mut traj = Trajectory::new(rates.n, seed, model, rates.n_per_type.clone(), opts);
    let mut status = vec![Status::Susceptible; pop.size()];
    let mut stars: Vec<Option<Star>> = (0..pop.size()).map(|_| None).collect();
    let mut queue = EventQueue::new();
    let mut ever = 0u64;

    let total_rate = |star: &Star| -> f64 {
        (0..k)
            .filter_map(|j| {
                let r = pair[star.ty * k + j].as_ref()?;
                let others = pop.count(j) - usize::from(j == star.ty);
                let on = star.on[j].len();
                Some(r.lambda * (others - on) as f64 + (r.mu + r.beta) * on as f64)
            })
            .sum()
    };

    let first = pop.uniform_member(opts.seed_type, rng);
    let mut pending = Some((0.0, first, None::<u32>));
    loop {
        if let Some((t, who, infector)) = pending.take() {
            let ty = pop.type_of(who);
            status[who as usize] = Status::Infected;
            traj.push(t, EventKind::Infection, ty);
            ever += 1;
            if opts.stop_at.is_some_and(|s| ever >= s) {
                traj.stopped_early = true;
                break;
            }
            let e: f64 = rng.sample(Exp1);
            let recover_at = t + e / spec.gamma[ty];
            queue.push(recover_at, Item::Recovery(who));
            let mut on = vec![Vec::new(); k];
            for j in 0..k {
                let Some(r) = &pair[ty * k + j] else { continue };
                let mut excluded = Vec::new();
                if j == ty {
                    excluded.push(pop.local(who));
                }
                // the edge that carried the infection is on, unless reset
                let known_on = infector.filter(|&z| !reset_on_infection && pop.type_of(z) == j);
                if let Some(z) = known_on {
                    excluded.push(pop.local(z));
                    excluded.sort_unstable();
                }
                let candidates = pop.count(j) - excluded.len();
                let pi = r.lambda / (r.lambda + r.mu);
                let count = Binomial::new(candidates as u64, pi).expect("valid binomial").sample(rng) as usize;
                on[j] = sample_excluding(rng, pop.count(j), count, &excluded);
                if let Some(z) = known_on {
                    on[j].push(pop.local(z) as u32);
                }
            }
            let star = Star { ty, recover_at, on };
            let rate = total_rate(&star);
            if rate > 0.0 {
                let e: f64 = rng.sample(Exp1);
                if t + e / rate < recover_at {
                    queue.push(t + e / rate, Item::Edge(who));
                }
            }
            stars[who as usize] = Some(star);
        }
        let Some((t, item)) = queue.pop() else { break };
        if t > opts.horizon {
            traj.stopped_early = true;
            break;
        }
        match item {
            Item::Recovery(who) => {
                status[who as usize] = Status::Recovered;
                stars[who as usize] = None;
                traj.push(t, EventKind::Recovery, pop.type_of(who));
            }
            Item::Edge(who) => {
                let star = stars[who as usize].as_mut().expect("edge event of an infective");
                let x_local = pop.local(who);
                // (type, switches an edge on?, rate)
                let mut channels: Vec<(usize, bool, f64)> = Vec::with_capacity(2 * k);
                for j in 0..k {
                    let Some(r) = &pair[star.ty * k + j] else { continue };
                    let on = star.on[j].len();
                    let off = pop.count(j) - usize::from(j == star.ty) - on;
                    channels.push((j, true, r.lambda * off as f64));
                    channels.push((j, false, (r.mu + r.beta) * on as f64));
                }
                let mut pick = rng.random::<f64>() * channels.iter().map(|c| c.2).sum::<f64>();
                let last = channels.iter().rposition(|c| c.2 > 0.0).expect("event scheduled with zero rate");
                let chosen = channels.iter().position(|c| {
                    pick -= c.2;
                    pick < 0.0 && c.2 > 0.0
                });
                let (j, switch_on, _) = channels[chosen.unwrap_or(last)];
                let r = pair[star.ty * k + j].as_ref().unwrap();
                if switch_on {
                    // uniform partner among the off edges, by rejection
                    loop {
                        let y = rng.random_range(0..pop.count(j));
                        if (j == star.ty && y == x_local) || star.on[j].contains(&(y as u32)) {
                            continue;
                        }
                        star.on[j].push(y as u32);
                        break;
                    }
                } else {
                    let slot = rng.random_range(0..star.on[j].len());
                    if rng.random::<f64>() * (r.mu + r.beta) < r.beta {
                        let target = pop.member(j, star.on[j][slot] as usize);
                        if status[target as usize] == Status::Susceptible {
                            pending = Some((t, target, Some(who)));
                        }
                    } else {
                        star.on[j].swap_remove(slot);
                    }
                }
                let rate = total_rate(star);
                if rate > 0.0 {
                    let e: f64 = rng.sample(Exp1);
                    if t + e / rate < star.recover_at {
                        queue.push(t + e / rate, Item::Edge(who));
                    }
                }
            }
        }
    }
    traj.finish();
    Ok(traj)
}


/// Two types; type 1 can only infect type 2, which cannot infect anyone, so
/// the final size minus one is the seed's offspring count.
#[cfg(test)]
pub(crate) fn one_way_spec() -> ModelSpec {
    let mut spec = ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0);
    spec.k = 2;
    spec.p = vec![0.5, 0.5];
    for m in [&mut spec.lambda_coef, &mut spec.mu_coef, &mut spec.kappa_lambda, &mut spec.kappa_mu, &mut spec.kappa_beta] {
        let v = m[0][0];
        *m = vec![vec![v; 2]; 2];
    }
    spec.beta_coef = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
    spec.gamma = vec![1.0, 1.0];
    spec
}
