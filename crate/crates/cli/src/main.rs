//! `zrp`: simulations, reference solutions, canonical-ensemble diagnostics
//! and acceptance checks for the asymmetric zero range process.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod commands;
mod config;
mod error;
mod plot;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use zrp_core::kernel::{Jump, JumpKernel};
use zrp_core::observables::TestFunction;
use zrp_core::thermo::RateFunction;
use zrp_core::trig::{Mode, TrigPolynomial};

use commands::{Context, PlotKind, PlotRequest};
use config::ExperimentConfig;
use error::CliError;
use store::SeedSource;

const SEED_ENV: &str = "ZRP_SEED";

#[derive(Parser)]
#[command(name = "zrp", version, about = "Asymmetric zero range process laboratory")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed (also read from ZRP_SEED when this flag is absent).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for the replica pool.
    #[arg(long, global = true, value_name = "INT")]
    workers: Option<usize>,
    /// Root directory for result folders.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    no_plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate Φ, Φ′, Φ″ and Z(Φ) over a density grid.
    ThermoTable {
        #[arg(long, value_parser = parse_rate)]
        rate: Option<RateFunction>,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        rho_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run replicas and record test-function pairings against the heat equation.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Write raw snapshots for the first this-many replicas.
        #[arg(long)]
        dump_snapshots: Option<usize>,
    },
    /// Repeat `simulate` over a grid of sides, scalings and rates.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_delimiter = ',')]
        sides: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Rate for the grid; repeat the flag for several.
        #[arg(long = "grid-rate", value_parser = parse_rate)]
        grid_rates: Vec<RateFunction>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Exact heat solution plus the nonlinear finite-difference solve.
    Pde {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Size whose deviation scaling the FD run uses; 0 disables it.
        #[arg(long)]
        fd_side: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Spectral gap, equivalence of ensembles, variance, LSI and tail diagnostics.
    Ensembles {
        #[arg(long, value_parser = parse_rate)]
        rate: Option<RateFunction>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        lsi_trials: Option<usize>,
        #[arg(long)]
        tail_fugacity: Option<f64>,
        #[arg(long)]
        tail_threshold: Option<f64>,
    },
    /// Run the acceptance criteria; exits 4 if any fails.
    Verify {
        /// Criterion ids, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
    /// Render an SVG from a result CSV.
    Plot {
        #[arg(value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        /// Destination file (default: `<out>/plots/<stem>_<kind>.svg`).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        group: Option<String>,
    },
}

/// Simulation fields settable from the command line.
#[derive(Args, Default)]
struct SimArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// Torus side N.
    #[arg(long)]
    side: Option<usize>,
    /// `linear`, `indicator`, `power:<exponent>` or `table:<g0>,<g1>,...`.
    #[arg(long, value_parser = parse_rate)]
    rate: Option<RateFunction>,
    /// Jumps as `dx,dy=p;...`.
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<JumpKernel>,
    #[arg(long)]
    rho_star: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Modes as `kx,ky=amp[@phase];...`.
    #[arg(long, value_parser = parse_modes)]
    profile: Option<TrigPolynomial>,
    /// Test function modes, same syntax as `--profile`.
    #[arg(long = "test-function", value_parser = parse_modes)]
    test_functions: Vec<TrigPolynomial>,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
}

impl SimArgs {
    fn apply(self, cfg: &mut config::SimulationSection) {
        let SimArgs {
            dim,
            side,
            rate,
            kernel,
            rho_star,
            alpha,
            profile,
            test_functions,
            snapshot_times,
            horizon,
            replicas,
        } = self;
        set(&mut cfg.dim, dim);
        set(&mut cfg.side, side);
        set(&mut cfg.rate, rate);
        set(&mut cfg.kernel, kernel);
        set(&mut cfg.rho_star, rho_star);
        set(&mut cfg.alpha, alpha);
        set(&mut cfg.profile, profile);
        set(&mut cfg.snapshot_times, snapshot_times);
        set(&mut cfg.replicas, replicas);
        if horizon.is_some() {
            cfg.horizon = horizon;
        }
        if !test_functions.is_empty() {
            cfg.test_functions = test_functions
                .into_iter()
                .enumerate()
                .map(|(i, p)| TestFunction::new(format!("F{i}"), p))
                .collect();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_rate(s: &str) -> Result<RateFunction, String> {
    match s.split_once(':') {
        None if s == "linear" => Ok(RateFunction::Linear),
        None if s == "indicator" => Ok(RateFunction::Indicator),
        Some(("power", e)) => e
            .parse()
            .map(|exponent| RateFunction::Power { exponent })
            .map_err(|e| format!("power exponent: {e}")),
        Some(("table", v)) => {
            let values = v
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("table entry {x:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            RateFunction::table(values).map_err(|e| e.to_string())
        }
        _ => Err(format!("unknown rate {s:?}")),
    }
}

fn parse_ints(s: &str) -> Result<Vec<i64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<i64>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn parse_kernel(s: &str) -> Result<JumpKernel, String> {
    let mut jumps = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (z, p) = part.split_once('=').ok_or_else(|| format!("jump {part:?} lacks '='"))?;
        jumps.push(Jump {
            displacement: parse_ints(z)?,
            prob: p.trim().parse().map_err(|e| format!("probability {p:?}: {e}"))?,
        });
    }
    let dim = jumps.first().map(|j| j.displacement.len()).ok_or("empty kernel")?;
    JumpKernel::new(dim, jumps).map_err(|e| e.to_string())
}

fn parse_modes(s: &str) -> Result<TrigPolynomial, String> {
    let mut modes = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (k, rest) = part.split_once('=').ok_or_else(|| format!("mode {part:?} lacks '='"))?;
        let (amp, phase) = rest.split_once('@').unwrap_or((rest, "0"));
        modes.push(Mode::new(
            parse_ints(k)?,
            amp.trim().parse().map_err(|e| format!("amplitude {amp:?}: {e}"))?,
            phase.trim().parse().map_err(|e| format!("phase {phase:?}: {e}"))?,
        ));
    }
    let dim = modes.first().map(|m| m.k.len()).ok_or("no modes")?;
    TrigPolynomial::new(dim, 0.0, modes).map_err(|e| e.to_string())
}

fn resolve_seed(flag: Option<u64>, config: &ExperimentConfig, in_file: bool) -> Result<(u64, SeedSource), CliError> {
    if let Some(seed) = flag {
        return Ok((seed, SeedSource::Flag));
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        let seed = text
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("{SEED_ENV}={text:?}: {e}")))?;
        warn!(
            "seed {seed} taken from {SEED_ENV}, overriding the configured seed {}",
            config.seed
        );
        return Ok((seed, SeedSource::Environment));
    }
    let source = if in_file {
        SeedSource::Config
    } else {
        SeedSource::Default
    };
    Ok((config.seed, source))
}

fn run(mut cli: Cli) -> Result<(), CliError> {
    let (mut config, seed_in_file) = ExperimentConfig::load(cli.config.as_deref())?;
    let (seed, seed_source) = resolve_seed(cli.seed, &config, seed_in_file)?;
    config.seed = seed;
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    if let Some(out) = cli.out.take() {
        config.out = out;
    }
    if let Some(n) = config.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    info!(
        "seed {seed} ({seed_source:?}), {} workers",
        rayon::current_num_threads()
    );

    let mut plot_request = None;
    match cli.command {
        Command::ThermoTable {
            ref mut rate,
            rho_min,
            rho_max,
            points,
        } => {
            let t = &mut config.thermo_table;
            set(&mut t.rate, rate.take());
            set(&mut t.rho_min, rho_min);
            set(&mut t.rho_max, rho_max);
            set(&mut t.points, points);
        }
        Command::Simulate {
            ref mut sim,
            dump_snapshots,
        } => {
            std::mem::take(sim).apply(&mut config.simulation);
            set(&mut config.simulation.dump_snapshots, dump_snapshots);
        }
        Command::Sweep {
            ref mut sim,
            ref mut sides,
            ref mut alphas,
            ref mut grid_rates,
            resamples,
        } => {
            std::mem::take(sim).apply(&mut config.simulation);
            let s = &mut config.sweep;
            set(&mut s.sides, sides.take());
            set(&mut s.alphas, alphas.take());
            if !grid_rates.is_empty() {
                s.rates = std::mem::take(grid_rates);
            }
            set(&mut s.resamples, resamples);
        }
        Command::Pde {
            ref mut sim,
            points,
            ref mut times,
            fd_side,
            dt,
        } => {
            std::mem::take(sim).apply(&mut config.simulation);
            let p = &mut config.pde;
            set(&mut p.points, points);
            set(&mut p.times, times.take());
            if let Some(side) = fd_side {
                p.side = (side > 0).then_some(side);
            }
            if dt.is_some() {
                p.dt = dt;
            }
        }
        Command::Ensembles {
            ref rate,
            ref mut n_grid,
            density,
            cutoff,
            lsi_trials,
            tail_fugacity,
            tail_threshold,
        } => {
            let e = &mut config.ensembles;
            set(&mut e.rate, rate.clone());
            set(&mut e.n_grid, n_grid.take());
            set(&mut e.density, density);
            set(&mut e.cutoff, cutoff);
            set(&mut e.lsi_trials, lsi_trials);
            set(&mut e.tail_fugacity, tail_fugacity);
            set(&mut e.tail_threshold, tail_threshold);
        }
        Command::Verify { ref mut only } => set(&mut config.verify.only, only.take()),
        Command::Plot {
            kind,
            ref input,
            ref output,
            ref x,
            ref y,
            ref group,
        } => {
            plot_request = Some(PlotRequest {
                kind,
                input: input.clone(),
                output: output.clone(),
                x: x.clone(),
                y: y.clone(),
                group: group.clone(),
            })
        }
    }
    let ctx = Context {
        out: config.out.clone(),
        plot: config.plot && !cli.no_plot,
        seed,
        seed_source,
        config,
    };
    match cli.command {
        Command::ThermoTable { .. } => commands::thermo_table(&ctx),
        Command::Simulate { .. } => commands::simulate(&ctx),
        Command::Sweep { .. } => commands::sweep(&ctx),
        Command::Pde { .. } => commands::pde(&ctx),
        Command::Ensembles { .. } => commands::ensembles(&ctx),
        Command::Verify { .. } => commands::verify(&ctx),
        Command::Plot { .. } => commands::plot(&ctx, plot_request.as_ref().expect("plot request")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zrp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
