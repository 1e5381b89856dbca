use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::{pinned_limit, resolve_system, ExperimentConfig, LimitSystem};
use crate::contact::KernelMatrix;
use crate::limit::{Compartment, Grid, LimitCurves};
use crate::output::{csv_table, fmt_g12};
use crate::sim::{condition_on_outbreak, derive_seed, ConditionOptions, EventKind, SimOptions, Trajectory, TypeCurves};
use crate::stats::quantile;
use crate::{Error, Result};

const COMPARTMENTS: [Compartment; 3] = [Compartment::S, Compartment::I, Compartment::R];

fn compartment_name(c: Compartment) -> &'static str {
    match c {
        Compartment::S => "s",
        Compartment::I => "i",
        Compartment::R => "r",
    }
}

/// First event time at which the total infected fraction `I/n` reaches
/// `pin_level`.
pub fn align_trajectory(traj: &Trajectory, pin_level: f64) -> Result<f64> {
    if !traj.outbreak {
        return Err(Error::InvalidSpec("only outbreak trajectories can be aligned".into()));
    }
    let mut infected: i64 = 0;
    for e in &traj.events {
        infected += if e.kind == EventKind::Infection { 1 } else { -1 };
        if infected as f64 / traj.n as f64 >= pin_level {
            return Ok(e.time);
        }
    }
    Err(Error::PinNotReached { level: pin_level })
}

/// Per-type fractions at times `t_star + u`.
pub fn aligned_curves(traj: &Trajectory, t_star: f64, u: &[f64]) -> TypeCurves {
    let times: Vec<f64> = u.iter().map(|x| x + t_star).collect();
    traj.curves_at(&times)
}

/// Sup-distance between an ensemble mean and the limit for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDistance {
    pub ty: usize,
    pub compartment: Compartment,
    pub sup: f64,
    /// Standard error of the mean curve where the sup is attained.
    pub se_at_sup: f64,
    pub u_at_sup: f64,
}

/// Results for one population size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeReport {
    pub n: u64,
    pub runs: u64,
    pub discarded: u64,
    /// Accepted runs over all runs attempted.
    pub acceptance_fraction: f64,
    pub mean_events: f64,
    pub ties: usize,
    pub wall_clock_secs: f64,
    /// `mean[type][compartment][u]`, compartments in `s, i, r` order.
    pub mean: Vec<[Vec<f64>; 3]>,
    pub se: Vec<[Vec<f64>; 3]>,
    pub distances: Vec<SeriesDistance>,
    /// 10%, 50%, 90% quantiles of per-run sup-distances of total `i`.
    pub run_distance_quantiles: [f64; 3],
}

impl SizeReport {
    pub fn distance(&self, ty: usize, c: Compartment) -> &SeriesDistance {
        self.distances
            .iter()
            .find(|d| d.ty == ty && d.compartment == c)
            .expect("every series has a distance")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub system: LimitSystem,
    pub u: Vec<f64>,
    /// Pinned limit curves on their own grid.
    pub limit: LimitCurves,
    pub sizes: Vec<SizeReport>,
    /// Distances never grow by more than two standard errors from one size
    /// to the next.
    pub monotone: bool,
    pub violations: Vec<String>,
}

struct RunOutcome {
    curves: TypeCurves,
    discarded: u64,
    events: usize,
    ties: usize,
    total_i_distance: f64,
}

/// Conditioned ensembles for every `n`, aligned at the pin level and compared
/// with the pinned limit.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let km = KernelMatrix::limit(&cfg.spec)?;
    let system = resolve_system(&km, cfg.limit);
    let limit = pinned_limit(&km, system, cfg.pin_level, cfg.window, cfg.grid_step)?;
    let u = Grid::new(cfg.window.0, cfg.window.1, cfg.grid_step)?.times();
    let k = cfg.spec.k;
    let lim: Vec<[Vec<f64>; 3]> = (0..k)
        .map(|ty| COMPARTMENTS.map(|c| u.iter().map(|&x| limit.value_at(c, ty, x)).collect()))
        .collect();
    let lim_total_i: Vec<f64> = u.iter().map(|&x| limit.total_at(Compartment::I, x)).collect();
    let copts = ConditionOptions {
        model: cfg.model,
        threshold_exponent: cfg.threshold_exponent,
        max_restarts: cfg.max_restarts,
        stop_at_threshold: false,
        sim: SimOptions { seed_type: cfg.seed_type, ..SimOptions::default() },
    };

    let mut sizes = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let started = Instant::now();
        let size_seed = derive_seed(cfg.master_seed, n);
        let outcomes: Vec<RunOutcome> = (0..cfg.runs_per_n)
            .into_par_iter()
            .map(|r| {
                let wrap = |e: Error| Error::Run { n, run: r, source: Box::new(e) };
                let c = condition_on_outbreak(&cfg.spec, n, derive_seed(size_seed, r), &copts).map_err(wrap)?;
                let t_star = align_trajectory(&c.trajectory, cfg.pin_level).map_err(wrap)?;
                let curves = aligned_curves(&c.trajectory, t_star, &u);
                let p: Vec<f64> = c.trajectory.n_per_type.iter().map(|&m| m as f64 / n as f64).collect();
                let total_i_distance = (0..u.len())
                    .map(|q| ((0..k).map(|ty| p[ty] * curves.i[ty][q]).sum::<f64>() - lim_total_i[q]).abs())
                    .fold(0.0, f64::max);
                Ok(RunOutcome {
                    curves,
                    discarded: c.discarded,
                    events: c.trajectory.events.len(),
                    ties: c.trajectory.ties,
                    total_i_distance,
                })
            })
            .collect::<Result<_>>()?;
        sizes.push(summarize_size(n, &outcomes, &u, &lim, started.elapsed().as_secs_f64()));
        log::info!("n = {n}: {} runs in {:.1}s", cfg.runs_per_n, started.elapsed().as_secs_f64());
    }

    let mut violations = Vec::new();
    for w in sizes.windows(2) {
        for (a, b) in w[0].distances.iter().zip(&w[1].distances) {
            let slack = 2.0 * (a.se_at_sup.powi(2) + b.se_at_sup.powi(2)).sqrt();
            if b.sup > a.sup + slack {
                violations.push(format!(
                    "{}_{}: {} at n = {} exceeds {} at n = {} by more than {}",
                    compartment_name(a.compartment),
                    a.ty + 1,
                    fmt_g12(b.sup),
                    w[1].n,
                    fmt_g12(a.sup),
                    w[0].n,
                    fmt_g12(slack)
                ));
            }
        }
    }
    Ok(ConvergenceReport { system, u, limit, sizes, monotone: violations.is_empty(), violations })
}

fn summarize_size(n: u64, outcomes: &[RunOutcome], u: &[f64], lim: &[[Vec<f64>; 3]], secs: f64) -> SizeReport {
    let runs = outcomes.len();
    let k = lim.len();
    fn pick(c: &TypeCurves, ty: usize, comp: usize) -> &[f64] {
        match comp {
            0 => &c.s[ty],
            1 => &c.i[ty],
            _ => &c.r[ty],
        }
    }
    let mut mean = Vec::with_capacity(k);
    let mut se = Vec::with_capacity(k);
    let mut distances = Vec::new();
    for ty in 0..k {
        let mut m: [Vec<f64>; 3] = Default::default();
        let mut s: [Vec<f64>; 3] = Default::default();
        for comp in 0..3 {
            for q in 0..u.len() {
                let sum: f64 = outcomes.iter().map(|o| pick(&o.curves, ty, comp)[q]).sum();
                let avg = sum / runs as f64;
                let var = if runs > 1 {
                    outcomes.iter().map(|o| (pick(&o.curves, ty, comp)[q] - avg).powi(2)).sum::<f64>() / (runs - 1) as f64
                } else {
                    0.0
                };
                m[comp].push(avg);
                s[comp].push((var / runs as f64).sqrt());
            }
            let (q, sup) = m[comp]
                .iter()
                .zip(&lim[ty][comp])
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold((0, 0.0), |best, (q, d)| if d > best.1 { (q, d) } else { best });
            distances.push(SeriesDistance {
                ty,
                compartment: COMPARTMENTS[comp],
                sup,
                se_at_sup: s[comp][q],
                u_at_sup: u[q],
            });
        }
        mean.push(m);
        se.push(s);
    }
    let discarded: u64 = outcomes.iter().map(|o| o.discarded).sum();
    let per_run: Vec<f64> = outcomes.iter().map(|o| o.total_i_distance).collect();
    SizeReport {
        n,
        runs: runs as u64,
        discarded,
        acceptance_fraction: runs as f64 / (runs as u64 + discarded) as f64,
        mean_events: outcomes.iter().map(|o| o.events as f64).sum::<f64>() / runs as f64,
        ties: outcomes.iter().map(|o| o.ties).sum(),
        wall_clock_secs: secs,
        mean,
        se,
        distances,
        run_distance_quantiles: [0.1, 0.5, 0.9].map(|q| quantile(&per_run, q)),
    }
}

impl ConvergenceReport {
    /// One row per population size. Timings are left out so that the file
    /// is reproducible.
    pub fn summary_csv(&self) -> String {
        let header: Vec<String> = [
            "n",
            "runs",
            "discarded",
            "acceptance_fraction",
            "mean_events",
            "ties",
            "run_sup_i_q10",
            "run_sup_i_q50",
            "run_sup_i_q90",
        ]
        .map(String::from)
        .to_vec();
        csv_table(
            &header,
            self.sizes.iter().map(|s| {
                let mut row = vec![
                    s.n as f64,
                    s.runs as f64,
                    s.discarded as f64,
                    s.acceptance_fraction,
                    s.mean_events,
                    s.ties as f64,
                ];
                row.extend(s.run_distance_quantiles);
                row
            }),
        )
    }

    pub fn distances_csv(&self) -> String {
        let mut out = String::from("n,type,compartment,sup_distance,se_at_sup,u_at_sup\n");
        for s in &self.sizes {
            for d in &s.distances {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    s.n,
                    d.ty + 1,
                    compartment_name(d.compartment),
                    fmt_g12(d.sup),
                    fmt_g12(d.se_at_sup),
                    fmt_g12(d.u_at_sup)
                );
            }
        }
        out
    }

    /// Mean aligned curves with standard errors next to the limit, for
    /// `self.sizes[index]`.
    pub fn curves_csv(&self, index: usize) -> String {
        let size = &self.sizes[index];
        let k = size.mean.len();
        let mut header = vec!["u".to_string()];
        for ty in 1..=k {
            for c in ["s", "i", "r"] {
                header.extend([format!("{c}_{ty}_limit"), format!("{c}_{ty}_mean"), format!("{c}_{ty}_se")]);
            }
        }
        let rows = (0..self.u.len()).map(|q| {
            let mut row = vec![self.u[q]];
            for ty in 0..k {
                for (comp, c) in COMPARTMENTS.iter().enumerate() {
                    row.extend([
                        self.limit.value_at(*c, ty, self.u[q]),
                        size.mean[ty][comp][q],
                        size.se[ty][comp][q],
                    ]);
                }
            }
            row
        });
        csv_table(&header, rows)
    }

    /// Writes every CSV into `dir` and returns the paths in write order.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            ("convergence_summary.csv".to_string(), self.summary_csv()),
            ("convergence_distances.csv".to_string(), self.distances_csv()),
            (format!("limit_{}.csv", self.limit.provenance.tag()), self.limit.to_csv()),
        ];
        for (index, s) in self.sizes.iter().enumerate() {
            files.push((format!("convergence_curves_n{}.csv", s.n), self.curves_csv(index)));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sizes {
            let _ = writeln!(
                out,
                "n={} runs={} acceptance={:.4} mean_events={:.1} wall_clock={:.2}s",
                s.n, s.runs, s.acceptance_fraction, s.mean_events, s.wall_clock_secs
            );
            for d in &s.distances {
                let _ = writeln!(
                    out,
                    "  {}_{} sup={:.5} se={:.5} at u={:.2}",
                    compartment_name(d.compartment),
                    d.ty + 1,
                    d.sup,
                    d.se_at_sup,
                    d.u_at_sup
                );
            }
        }
        let _ = writeln!(out, "monotone within 2 SE: {}", self.monotone);
        for v in &self.violations {
            let _ = writeln!(out, "  {v}");
        }
        out
    }
}
