use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dynsir::contact::KernelMatrix;
use dynsir::harness::{
    align_trajectory, aligned_curves, pinned_limit, resolve_system, run_convergence, solve_limit, ExperimentConfig,
    LimitSystem,
};
use dynsir::limit::{
    final_size, i_max_closed_form, peak_thresholds, psi_fixed_point, renewal_solve_model, Compartment, Grid,
    PsiOptions, RenewalOptions,
};
use dynsir::output::{csv_table, fmt_g12};
use dynsir::params::{classify_regime, realize_rates};
use dynsir::sim::{condition_on_outbreak, run_rng, simulate_with, ConditionOptions, ModelTag, SimOptions};
use dynsir::{Error, Result};

#[derive(Parser)]
#[command(name = "dynsir", version, about = "SIR epidemics on edge-flipping stochastic block models")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `experiment.master_seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Time step; overrides `experiment.grid_step`.
    #[arg(long, global = true, value_name = "H")]
    grid_step: Option<f64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the scaling regime of every type pair.
    Classify,
    /// Simulate one epidemic and write its event log.
    Simulate {
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Restart until the outbreak threshold is reached.
        #[arg(long)]
        conditioned: bool,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Solve a limit ODE system.
    Ode {
        #[arg(long, value_enum)]
        system: Option<SystemArg>,
        #[arg(long, default_value_t = 40.0)]
        t_end: f64,
    },
    /// Solve the renewal equation.
    Renewal {
        #[arg(long, default_value_t = 40.0)]
        t_end: f64,
    },
    /// Solve the Laplace-type fixed point for psi.
    Psi {
        #[arg(long, default_value_t = 1e3)]
        s_max: f64,
        /// Step in ln s.
        #[arg(long, default_value_t = 2e-3)]
        dx: f64,
    },
    /// Final size of the limit epidemic.
    Finalsize,
    /// Epidemic peak of a single-type model.
    Imax,
    /// One conditioned run next to the limit, aligned at the pin level.
    Compare {
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
    },
    /// Full convergence experiment.
    Convergence,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    M1,
    M2,
    M3,
}

impl From<ModelArg> for ModelTag {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::M1 => ModelTag::M1,
            ModelArg::M2 => ModelTag::M2,
            ModelArg::M3 => ModelTag::M3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Weak,
    Strong,
    Mixed,
}

impl From<SystemArg> for LimitSystem {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Weak => LimitSystem::Weak,
            SystemArg::Strong => LimitSystem::Strong,
            SystemArg::Mixed => LimitSystem::Mixed,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::ConditioningFailed { .. } => 3,
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::PopulationTooSmall { .. }
        | Error::ExactModelCap { .. }
        | Error::Io(_) => 1,
        _ => 2,
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, body)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(h) = cli.grid_step {
        cfg.grid_step = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let ctx = Ctx { cfg, out: cli.out.clone(), quiet: cli.quiet };
    let spec = &ctx.cfg.spec;
    match cli.command {
        Command::Classify => {
            let report = classify_regime(spec)?;
            let mut text = report.to_text();
            for d in report.diagnostics() {
                let _ = writeln!(text, "{d}");
            }
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
            ctx.write("classify.json", &(json + "\n"))?;
            ctx.say(&text);
        }
        Command::Simulate { n, model, conditioned, horizon } => {
            let model = model.map(ModelTag::from).unwrap_or(ctx.cfg.model);
            let sim = SimOptions {
                seed_type: ctx.cfg.seed_type,
                horizon: horizon.unwrap_or(f64::INFINITY),
                ..SimOptions::default()
            };
            let seed = ctx.cfg.master_seed;
            let (traj, discarded) = if conditioned {
                let opts = ConditionOptions {
                    model,
                    threshold_exponent: ctx.cfg.threshold_exponent,
                    max_restarts: ctx.cfg.max_restarts,
                    stop_at_threshold: false,
                    sim,
                };
                let c = condition_on_outbreak(spec, n, seed, &opts)?;
                (c.trajectory, c.discarded)
            } else {
                let rates = realize_rates(spec, n)?;
                let threshold = dynsir::sim::conditioning_threshold(n, ctx.cfg.threshold_exponent);
                let sim = SimOptions { threshold: Some(threshold), ..sim };
                (simulate_with(model, spec, &rates, seed, &sim, &mut run_rng(seed, 0))?, 0)
            };
            ctx.write("simulate_events.csv", &traj.event_log_csv(0, true))?;
            ctx.say(&format!(
                "model={} n={} seed={} infections={} final_fraction={} outbreak={} discarded={} ties={}",
                traj.model,
                traj.n,
                traj.seed,
                traj.ever_infected(),
                fmt_g12(traj.final_fraction()),
                traj.outbreak,
                discarded,
                traj.ties
            ));
        }
        Command::Ode { system, t_end } => {
            let km = KernelMatrix::limit(spec)?;
            let system = system.map(LimitSystem::from).unwrap_or(LimitSystem::Auto);
            let curves = solve_limit(&km, resolve_system(&km, system), t_end, ctx.cfg.grid_step)?;
            let name = format!("{}.csv", curves.provenance.tag());
            ctx.write(&name, &curves.to_csv())?;
            ctx.say(&summary_line(&curves));
        }
        Command::Renewal { t_end } => {
            let km = KernelMatrix::limit(spec)?;
            let grid = Grid::new(0.0, t_end, ctx.cfg.grid_step)?;
            let curves = renewal_solve_model(&km, &RenewalOptions::new(grid))?;
            ctx.write("renewal.csv", &curves.to_csv())?;
            ctx.say(&summary_line(&curves));
        }
        Command::Psi { s_max, dx } => {
            let km = KernelMatrix::limit(spec)?;
            let opts = PsiOptions { s_max, dx, pin_type: ctx.cfg.seed_type, ..PsiOptions::default() };
            let sol = psi_fixed_point(&km, &opts)?;
            let mut header = vec!["s".to_string()];
            header.extend((1..=km.k).map(|t| format!("psi_{t}")));
            let rows = (0..sol.x.len()).map(|q| {
                let mut row = vec![sol.x[q].exp()];
                row.extend(sol.psi.iter().map(|c| c[q]));
                row
            });
            ctx.write("psi.csv", &csv_table(&header, rows))?;
            let plateau: Vec<String> = sol.psi.iter().map(|c| format!("{:.6}", c.last().unwrap())).collect();
            ctx.say(&format!(
                "malthusian_hat={:.6} sweeps={} psi(s_max)={}",
                sol.malthusian_hat,
                sol.sweeps,
                plateau.join(" ")
            ));
        }
        Command::Finalsize => {
            let fs = final_size(&KernelMatrix::limit(spec)?.r0())?;
            if fs.s_inf.len() == 1 {
                ctx.say(&format!("s_inf={:.6}, attack={:.6}", fs.s_inf[0], fs.attack_rate[0]));
            } else {
                let mut text = String::new();
                for (t, (s, a)) in fs.s_inf.iter().zip(&fs.attack_rate).enumerate() {
                    let _ = writeln!(text, "type {}: s_inf={s:.6}, attack={a:.6}", t + 1);
                }
                ctx.say(&text);
            }
        }
        Command::Imax => {
            if spec.k != 1 {
                return Err(Error::Config("imax needs a single-type model".into()));
            }
            let km = KernelMatrix::limit(spec)?;
            let r0 = km.r0()[(0, 0)];
            if km.all_homogeneous() {
                ctx.say(&format!("R0={r0:.6} i_max={:.6}", i_max_closed_form(r0)?));
            } else {
                let dynsir::contact::Kernel::CaseSixB { lambda, mu, beta, gamma } = *km.kernel(0, 0) else {
                    return Err(Error::Regime("no peak formula for this kernel".into()));
                };
                let (s_hi, s_lo) = peak_thresholds(lambda, mu, beta, gamma)?;
                let curves = solve_limit(&km, LimitSystem::Strong, 80.0, ctx.cfg.grid_step)?;
                let (t_peak, i_peak) = curves.peak(0);
                let s_peak = curves.value_at(Compartment::S, 0, t_peak);
                ctx.say(&format!(
                    "R0={r0:.6} i_max={i_peak:.6} s_at_peak={s_peak:.6} s_lo={s_lo:.6} s_hi={s_hi:.6}"
                ));
            }
        }
        Command::Compare { n, model } => compare(&ctx, n, model.map(ModelTag::from).unwrap_or(ctx.cfg.model))?,
        Command::Convergence => {
            let report = run_convergence(&ctx.cfg)?;
            report.write_csvs(&ctx.out)?;
            ctx.say(&report.to_text());
        }
    }
    Ok(())
}

fn summary_line(curves: &dynsir::limit::LimitCurves) -> String {
    let last = curves.len() - 1;
    let finals: Vec<String> = (0..curves.k()).map(|t| format!("{:.6}", curves.s[t][last])).collect();
    let peaks: Vec<String> = (0..curves.k()).map(|t| format!("{:.6}", curves.peak(t).1)).collect();
    format!("{} s_end={} i_max={}", curves.provenance.tag(), finals.join(" "), peaks.join(" "))
}

fn compare(ctx: &Ctx, n: u64, model: ModelTag) -> Result<()> {
    let cfg = &ctx.cfg;
    let km = KernelMatrix::limit(&cfg.spec)?;
    let limit = pinned_limit(&km, cfg.limit, cfg.pin_level, cfg.window, cfg.grid_step)?;
    let opts = ConditionOptions {
        model,
        threshold_exponent: cfg.threshold_exponent,
        max_restarts: cfg.max_restarts,
        stop_at_threshold: false,
        sim: SimOptions { seed_type: cfg.seed_type, ..SimOptions::default() },
    };
    let c = condition_on_outbreak(&cfg.spec, n, cfg.master_seed, &opts)?;
    let t_star = align_trajectory(&c.trajectory, cfg.pin_level)?;
    let u = Grid::new(cfg.window.0, cfg.window.1, cfg.grid_step)?.times();
    let sim = aligned_curves(&c.trajectory, t_star, &u);
    let k = cfg.spec.k;
    let mut header = vec!["u".to_string()];
    for t in 1..=k {
        for c in ["s", "i", "r"] {
            header.push(format!("{c}_{t}_sim"));
        }
        for c in ["s", "i", "r"] {
            header.push(format!("{c}_{t}_limit"));
        }
    }
    let mut gap: f64 = 0.0;
    let rows: Vec<Vec<f64>> = (0..u.len())
        .map(|q| {
            let mut row = vec![u[q]];
            for t in 0..k {
                row.extend([sim.s[t][q], sim.i[t][q], sim.r[t][q]]);
                let li = limit.value_at(Compartment::I, t, u[q]);
                gap = gap.max((sim.i[t][q] - li).abs());
                row.extend([limit.value_at(Compartment::S, t, u[q]), li, limit.value_at(Compartment::R, t, u[q])]);
            }
            row
        })
        .collect();
    let csv = ctx.write("compare.csv", &csv_table(&header, rows))?;
    ctx.write("compare.gp", &plot_script(&csv, k))?;
    ctx.say(&format!(
        "model={model} n={n} t_star={} discarded={} sup_i_gap={}",
        fmt_g12(t_star),
        c.discarded,
        fmt_g12(gap)
    ));
    Ok(())
}

fn plot_script(csv: &Path, k: usize) -> String {
    let name = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = String::from("set datafile separator ','\nset xlabel 'u'\nset ylabel 'fraction'\nset key outside\n");
    let mut parts = Vec::new();
    for t in 0..k {
        let base = 2 + 6 * t;
        parts.push(format!("'{name}' using 1:{} with steps title 'i_{} simulated'", base + 1, t + 1));
        parts.push(format!("'{name}' using 1:{} with lines title 'i_{} limit'", base + 4, t + 1));
    }
    let _ = writeln!(out, "plot {}", parts.join(", \\\n     "));
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
