//! Stochastic simulation of the epidemic.
//!
//! [`simulate_model1`] resolves every relevant edge explicitly; it is exact
//! but limited to small populations. [`simulate_model3`] draws each
//! infective's contact list up front from the equilibrium excess-lifetime
//! distribution and has the same law for the infection counts.

mod conditioning;
mod model1;
mod model3;
mod queue;
mod rng;

pub use conditioning::{
    condition_on_outbreak, conditioned_ensemble, conditioning_threshold, outbreak_count, ConditionOptions, Conditioned,
};
pub use model1::{simulate_model1, simulate_model1_with, DEFAULT_EXACT_CAP};
pub use model3::{simulate_model3, simulate_model3_with};
pub use rng::{derive_seed, run_rng, splitmix64};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::output::fmt_g12;
use crate::params::{ModelSpec, RealizedRates};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTag {
    M1,
    M2,
    M3,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::M1 => "M1",
            ModelTag::M2 => "M2",
            ModelTag::M3 => "M3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Infection,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Zero-based type index.
    pub ty: usize,
}

/// Per-run knobs shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Zero-based type of the initial infective.
    pub seed_type: usize,
    /// Ever-infected count that marks an outbreak (sets `crossing_time`).
    pub threshold: Option<u64>,
    /// Stop as soon as the ever-infected count reaches this.
    pub stop_at: Option<u64>,
    /// Events after this time are not processed.
    pub horizon: f64,
    /// Largest population the edge-resolved model accepts.
    pub exact_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { seed_type: 0, threshold: None, stop_at: None, horizon: f64::INFINITY, exact_cap: DEFAULT_EXACT_CAP }
    }
}

/// Runs the simulator selected by `model` on `rng`.
pub fn simulate_with<R: Rng + ?Sized>(
    model: ModelTag,
    spec: &ModelSpec,
    rates: &RealizedRates,
    seed: u64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    match model {
        ModelTag::M1 => simulate_model1_with(spec, rates, seed, false, opts, rng),
        ModelTag::M2 => simulate_model1_with(spec, rates, seed, true, opts, rng),
        ModelTag::M3 => simulate_model3_with(spec, rates, seed, opts, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Susceptible,
    Infected,
    Recovered,
}

/// Individuals numbered type block by type block.
pub(crate) struct Population {
    offset: Vec<u32>,
}

impl Population {
    pub(crate) fn new(counts: &[u64], seed_type: usize) -> Result<Self> {
        if seed_type >= counts.len() {
            return Err(Error::InvalidSpec(format!("seed type {} out of range", seed_type + 1)));
        }
        let total: u64 = counts.iter().sum();
        if total > u32::MAX as u64 {
            return Err(Error::InvalidSpec(format!("population {total} too large")));
        }
        let mut offset = vec![0u32];
        for &c in counts {
            offset.push(offset.last().unwrap() + c as u32);
        }
        Ok(Population { offset })
    }

    pub(crate) fn k(&self) -> usize {
        self.offset.len() - 1
    }

    pub(crate) fn size(&self) -> usize {
        *self.offset.last().unwrap() as usize
    }

    pub(crate) fn count(&self, ty: usize) -> usize {
        (self.offset[ty + 1] - self.offset[ty]) as usize
    }

    pub(crate) fn member(&self, ty: usize, local: usize) -> u32 {
        self.offset[ty] + local as u32
    }

    pub(crate) fn local(&self, who: u32) -> usize {
        (who - self.offset[self.type_of(who)]) as usize
    }

    pub(crate) fn type_of(&self, who: u32) -> usize {
        self.offset.partition_point(|&o| o <= who) - 1
    }

    pub(crate) fn uniform_member<R: Rng + ?Sized>(&self, ty: usize, rng: &mut R) -> u32 {
        self.member(ty, rng.random_range(0..self.count(ty)))
    }
}

/// One simulated epidemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: u64,
    pub seed: u64,
    pub model: ModelTag,
    pub n_per_type: Vec<u64>,
    pub seed_type: usize,
    pub events: Vec<Event>,
    /// Events sharing their time with the previous event.
    pub ties: usize,
    pub threshold: Option<u64>,
    pub outbreak: bool,
    pub crossing_time: Option<f64>,
    /// True when the run was cut short by `stop_at` or the horizon.
    pub stopped_early: bool,
}

/// Fractions per type at each requested time, indexed `[type][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeCurves {
    pub s: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

impl Trajectory {
    pub(crate) fn new(n: u64, seed: u64, model: ModelTag, n_per_type: Vec<u64>, opts: &SimOptions) -> Self {
        Trajectory {
            n,
            seed,
            model,
            n_per_type,
            seed_type: opts.seed_type,
            events: Vec::new(),
            ties: 0,
            threshold: opts.threshold,
            outbreak: false,
            crossing_time: None,
            stopped_early: false,
        }
    }

    pub(crate) fn push(&mut self, time: f64, kind: EventKind, ty: usize) {
        if self.events.last().is_some_and(|e| e.time == time) {
            self.ties += 1;
        }
        self.events.push(Event { time, kind, ty });
    }

    pub fn k(&self) -> usize {
        self.n_per_type.len()
    }

    pub fn ever_infected(&self) -> u64 {
        self.events.iter().filter(|e| e.kind == EventKind::Infection).count() as u64
    }

    pub fn final_fraction(&self) -> f64 {
        self.ever_infected() as f64 / self.n as f64
    }

    /// Time at which the ever-infected count first reaches `level`.
    pub fn time_to_reach(&self, level: u64) -> Option<f64> {
        let mut count = 0;
        for e in &self.events {
            if e.kind == EventKind::Infection {
                count += 1;
                if count >= level {
                    return Some(e.time);
                }
            }
        }
        None
    }

    /// Sets `outbreak` and `crossing_time` from the threshold.
    pub(crate) fn finish(&mut self) {
        self.crossing_time = self.threshold.and_then(|th| self.time_to_reach(th));
        self.outbreak = self.crossing_time.is_some();
    }

    /// `(S, I, R)` counts per type at each time of a sorted grid,
    /// right-continuous. Times before 0 see the state at time 0.
    pub fn counts_at(&self, times: &[f64]) -> Vec<Vec<(u64, u64, u64)>> {
        let k = self.k();
        let mut s = self.n_per_type.clone();
        let mut i = vec![0u64; k];
        let mut r = vec![0u64; k];
        let mut out = vec![Vec::with_capacity(times.len()); k];
        let mut next = 0;
        for &t in times {
            let t = t.max(0.0);
            while next < self.events.len() && self.events[next].time <= t {
                let e = self.events[next];
                match e.kind {
                    EventKind::Infection => {
                        s[e.ty] -= 1;
                        i[e.ty] += 1;
                    }
                    EventKind::Recovery => {
                        i[e.ty] -= 1;
                        r[e.ty] += 1;
                    }
                }
                next += 1;
            }
            for ty in 0..k {
                out[ty].push((s[ty], i[ty], r[ty]));
            }
        }
        out
    }

    /// Per-type fractions `S/n_nu`, `I/n_nu`, `R/n_nu` on a sorted grid.
    pub fn curves_at(&self, times: &[f64]) -> TypeCurves {
        let counts = self.counts_at(times);
        let frac = |f: fn(&(u64, u64, u64)) -> u64| -> Vec<Vec<f64>> {
            counts
                .iter()
                .zip(&self.n_per_type)
                .map(|(c, &nv)| c.iter().map(|x| f(x) as f64 / nv as f64).collect())
                .collect()
        };
        TypeCurves { s: frac(|c| c.0), i: frac(|c| c.1), r: frac(|c| c.2) }
    }

    /// Total infected fraction `I(t)/n` just after each event, with times.
    pub fn infected_path(&self) -> Vec<(f64, f64)> {
        let mut cur: i64 = 0;
        self.events
            .iter()
            .map(|e| {
                cur += if e.kind == EventKind::Infection { 1 } else { -1 };
                (e.time, cur as f64 / self.n as f64)
            })
            .collect()
    }

    /// CSV rows `run_id,time,event_kind,type_index` (1-based types).
    pub fn event_log_csv(&self, run_id: usize, with_header: bool) -> String {
        let mut out = String::new();
        if with_header {
            out.push_str("run_id,time,event_kind,type_index\n");
        }
        for e in &self.events {
            let kind = match e.kind {
                EventKind::Infection => "infection",
                EventKind::Recovery => "recovery",
            };
            out.push_str(&format!("{run_id},{},{kind},{}\n", fmt_g12(e.time), e.ty + 1));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Trajectory {
        let mut t = Trajectory::new(4, 0, ModelTag::M3, vec![4], &SimOptions { threshold: Some(2), ..SimOptions::default() });
        t.push(0.0, EventKind::Infection, 0);
        t.push(0.5, EventKind::Infection, 0);
        t.push(1.0, EventKind::Recovery, 0);
        t.push(2.0, EventKind::Recovery, 0);
        t.finish();
        t
    }

    #[test]
    fn step_functions() {
        let t = toy();
        let c = t.curves_at(&[-1.0, 0.0, 0.7, 1.0, 5.0]);
        assert_eq!(c.s[0], vec![0.75, 0.75, 0.5, 0.5, 0.5]);
        assert_eq!(c.i[0], vec![0.25, 0.25, 0.5, 0.25, 0.0]);
        assert_eq!(c.r[0], vec![0.0, 0.0, 0.0, 0.25, 0.5]);
        assert_eq!(t.crossing_time, Some(0.5));
        assert!(t.outbreak);
        assert_eq!(t.final_fraction(), 0.5);
    }

    #[test]
    fn event_log_format() {
        let log = toy().event_log_csv(3, true);
        assert!(log.starts_with("run_id,time,event_kind,type_index\n3,0,infection,1\n3,0.5,infection,1\n"));
    }
}
