//! Subcommand implementations. Each writes into `<out>/<kind>/` and
//! finishes with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use zrp_core::acceptance;
use zrp_core::dynamics::{replica_map, SimulationSpec};
use zrp_core::ensembles::{
    canonical_mean_rate, canonical_variance, enumerate_canonical, lsi_ratio_scan, spectral_gap, tail_probability_exact,
    Block, GapSolver, SymGenerator,
};
use zrp_core::initcond::{check_drift_orthogonal, initial_entropy};
use zrp_core::kernel::SymKernel;
use zrp_core::lattice::{Configuration, Snapshot};
use zrp_core::observables::{convergence_fit, empirical_pairing, TestFunction};
use zrp_core::pde::{solve_parabolic_fd, Grid, HeatSolution};
use zrp_core::stats::{mean, std_error};
use zrp_core::thermo::{RateFunction, Thermo};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::plot::{decay_figure, loglog_figure, Figure, Mark, Series, Table};
use crate::store::{num, ResultStore, SeedSource};

pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub out: PathBuf,
    pub plot: bool,
}

impl Context {
    fn finish(&self, store: ResultStore, summary: serde_json::Value) -> Result<(), CliError> {
        let path = store.finish(&self.config.hash(), self.seed, self.seed_source, summary)?;
        info!("manifest written to {}", path.display());
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableRow {
    pub run_id: String,
    pub replica: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub t: f64,
    pub observable: String,
    pub value: f64,
    pub reference: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct EntropyRow {
    #[serde(rename = "N")]
    n: usize,
    alpha: f64,
    rate: String,
    entropy: f64,
    entropy_per_volume: f64,
}

fn run_id(spec: &SimulationSpec) -> String {
    format!("{}-N{}-a{}", spec.rate.name(), spec.side, spec.alpha)
}

struct Batch {
    rows: Vec<ObservableRow>,
    summary: Vec<ObservableRow>,
    snapshots: Vec<(usize, usize, f64, Configuration)>,
}

fn run_batch(spec: &SimulationSpec, tests: &[TestFunction], dump: usize) -> Result<Batch, CliError> {
    let thermo = Thermo::new(spec.rate.clone());
    let heat = HeatSolution::new(&spec.profile, spec.rho_star, &spec.kernel, &thermo)?;
    let per_replica = replica_map(spec, |id, _, _, eta| {
        let values: Vec<f64> = tests
            .iter()
            .map(|f| empirical_pairing(eta, spec.rho_star, spec.alpha, &f.poly))
            .collect();
        (values, (id < dump).then(|| eta.clone()))
    })?;
    let id = run_id(spec);
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    for (r, snaps) in per_replica.iter().enumerate() {
        for (s, (values, config)) in snaps.iter().enumerate() {
            let t = spec.snapshot_times[s];
            for (f, &v) in tests.iter().zip(values) {
                rows.push(ObservableRow {
                    run_id: id.clone(),
                    replica: r.to_string(),
                    n: spec.side,
                    alpha: spec.alpha,
                    t,
                    observable: f.name.clone(),
                    value: v,
                    reference: heat.pairing(&f.poly, t),
                    std_error: None,
                });
            }
            if let Some(c) = config {
                snapshots.push((r, s, t, c.clone()));
            }
        }
    }
    let mut summary = Vec::new();
    for (s, &t) in spec.snapshot_times.iter().enumerate() {
        for (fi, f) in tests.iter().enumerate() {
            let xs: Vec<f64> = per_replica.iter().map(|snaps| snaps[s].0[fi]).collect();
            let se = std_error(&xs);
            summary.push(ObservableRow {
                run_id: id.clone(),
                replica: "mean".into(),
                n: spec.side,
                alpha: spec.alpha,
                t,
                observable: f.name.clone(),
                value: mean(&xs),
                reference: heat.pairing(&f.poly, t),
                std_error: se.is_finite().then_some(se),
            });
        }
    }
    Ok(Batch {
        rows,
        summary,
        snapshots,
    })
}

fn entropy_row(spec: &SimulationSpec) -> Result<EntropyRow, CliError> {
    let thermo = Thermo::new(spec.rate.clone());
    let report = initial_entropy(spec.torus()?, &spec.initial_condition()?, &thermo)?;
    Ok(EntropyRow {
        n: spec.side,
        alpha: spec.alpha,
        rate: spec.rate.name(),
        entropy: report.total,
        entropy_per_volume: report.per_volume,
    })
}

fn write_figure(store: &mut ResultStore, name: &str, fig: Result<Figure, CliError>) -> Result<(), CliError> {
    match fig.and_then(|f| f.to_svg()) {
        Ok(svg) => {
            store.write_text(name, &svg)?;
        }
        Err(e) => warn!("figure {name} skipped: {e}"),
    }
    Ok(())
}

fn plot_decay(store: &mut ResultStore, summary_path: &Path) -> Result<(), CliError> {
    let fig = Table::read(summary_path).and_then(|t| decay_figure(&t));
    write_figure(store, "decay.svg", fig)
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let sim = &ctx.config.simulation;
    sim.validate()?;
    let spec = sim.spec(ctx.seed);
    let mut store = ResultStore::create(&ctx.out, "simulate")?;
    info!(
        "simulating {} replicas on N={} d={} to t={}",
        spec.replicas, spec.side, spec.dim, spec.horizon
    );
    let batch = run_batch(&spec, &sim.test_functions, sim.dump_snapshots)?;
    store.write_csv("observables.csv", &batch.rows)?;
    let summary_path = store.write_csv("summary.csv", &batch.summary)?;
    store.write_csv("entropy.csv", &[entropy_row(&spec)?])?;
    if !batch.snapshots.is_empty() {
        std::fs::create_dir_all(store.dir().join("snapshots"))?;
        for (r, s, time, config) in batch.snapshots {
            let path = store.path(&format!("snapshots/rep{r:04}_s{s:02}.zrps"));
            let file = std::io::BufWriter::new(std::fs::File::create(path)?);
            Snapshot { time, config }.write_binary(file)?;
        }
    }
    if ctx.plot {
        plot_decay(&mut store, &summary_path)?;
    }
    let summary: Vec<_> = batch
        .summary
        .iter()
        .map(|r| json!({"t": r.t, "observable": r.observable, "mean": r.value, "reference": r.reference, "std_error": r.std_error}))
        .collect();
    ctx.finish(store, json!({ "run_id": run_id(&spec), "pairings": summary }))
}

#[derive(Serialize)]
struct ErrorRow {
    series: String,
    rate: String,
    alpha: f64,
    #[serde(rename = "N")]
    n: usize,
    t: f64,
    observable: String,
    mean_abs_error: f64,
}

#[derive(Serialize)]
struct ConvergenceRow {
    rate: String,
    alpha: f64,
    t: f64,
    observable: String,
    sides: String,
    slope: f64,
    ci_low: f64,
    ci_high: f64,
    strictly_decreasing: bool,
}

/// (rate, alpha, t, observable); maps to side -> |X − ref| per replica.
type SeriesKey = (String, String, String, String);

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let grid = &cfg.sweep;
    for (name, empty) in [
        ("sides", grid.sides.is_empty()),
        ("alphas", grid.alphas.is_empty()),
        ("rates", grid.rates.is_empty()),
    ] {
        if empty {
            return Err(CliError::Config(format!("empty sweep grid: sweep.{name}")));
        }
    }
    let mut jobs = Vec::new();
    for rate in &grid.rates {
        for &alpha in &grid.alphas {
            for &side in &grid.sides {
                let mut sim = cfg.simulation.clone();
                sim.rate = rate.clone();
                sim.alpha = alpha;
                sim.side = side;
                sim.validate()?;
                jobs.push(sim);
            }
        }
    }
    let mut store = ResultStore::create(&ctx.out, "sweep")?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut entropy = Vec::new();
    let mut errors: BTreeMap<SeriesKey, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (k, sim) in jobs.iter().enumerate() {
        let spec = sim.spec(ctx.seed.wrapping_add((k as u64) << 32));
        info!("sweep job {}/{}: {}", k + 1, jobs.len(), run_id(&spec));
        let batch = run_batch(&spec, &sim.test_functions, 0)?;
        for r in &batch.rows {
            errors
                .entry((spec.rate.name(), num(r.alpha), num(r.t), r.observable.clone()))
                .or_default()
                .entry(r.n)
                .or_default()
                .push((r.value - r.reference).abs());
        }
        rows.extend(batch.rows);
        summary.extend(batch.summary);
        entropy.push(entropy_row(&spec)?);
    }
    store.write_csv("observables.csv", &rows)?;
    let summary_path = store.write_csv("summary.csv", &summary)?;
    let entropy_path = store.write_csv("entropy.csv", &entropy)?;
    let mut error_rows = Vec::new();
    let mut conv_rows = Vec::new();
    for ((rate, alpha, t, obs), by_side) in &errors {
        for (&n, v) in by_side {
            error_rows.push(ErrorRow {
                series: format!("{rate} a={alpha} t={t} {obs}"),
                rate: rate.clone(),
                alpha: alpha.parse().unwrap_or(f64::NAN),
                n,
                t: t.parse().unwrap_or(f64::NAN),
                observable: obs.clone(),
                mean_abs_error: mean(v),
            });
        }
        if by_side.len() < 3 {
            continue;
        }
        match convergence_fit(by_side, grid.resamples, ctx.seed) {
            Ok(rep) => conv_rows.push(ConvergenceRow {
                rate: rate.clone(),
                alpha: alpha.parse().unwrap_or(f64::NAN),
                t: t.parse().unwrap_or(f64::NAN),
                observable: obs.clone(),
                sides: rep.sides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
                slope: rep.slope,
                ci_low: rep.ci.0,
                ci_high: rep.ci.1,
                strictly_decreasing: rep.strictly_decreasing,
            }),
            Err(e) => warn!("no convergence fit for {rate} α={alpha} t={t}: {e}"),
        }
    }
    let errors_path = store.write_csv("errors.csv", &error_rows)?;
    if !conv_rows.is_empty() {
        store.write_csv("convergence.csv", &conv_rows)?;
    }
    if ctx.plot {
        plot_decay(&mut store, &summary_path)?;
        let fig = Table::read(&entropy_path).and_then(|t| loglog_figure(&t, "N", "entropy_per_volume", Some("alpha")));
        write_figure(&mut store, "entropy_loglog.svg", fig)?;
        let fig = Table::read(&errors_path).and_then(|t| loglog_figure(&t, "N", "mean_abs_error", Some("series")));
        write_figure(&mut store, "errors_loglog.svg", fig)?;
    }
    ctx.finish(
        store,
        json!({ "jobs": jobs.len(), "convergence": conv_rows.iter().map(|c| json!({
            "rate": c.rate, "alpha": c.alpha, "t": c.t, "slope": c.slope,
            "ci": [c.ci_low, c.ci_high], "strictly_decreasing": c.strictly_decreasing
        })).collect::<Vec<_>>() }),
    )
}

#[derive(Serialize)]
struct ThermoRow {
    rho: f64,
    phi: f64,
    phi_prime: f64,
    phi_double_prime: f64,
    #[serde(rename = "Z_of_phi")]
    z_of_phi: f64,
}

pub fn thermo_table(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config.thermo_table;
    if cfg.points == 0 || !(cfg.rho_min > 0.0) || !(cfg.rho_max >= cfg.rho_min) {
        return Err(CliError::Config(format!(
            "thermo_table grid needs 0 < rho_min <= rho_max and points >= 1 (got {}..{} with {})",
            cfg.rho_min, cfg.rho_max, cfg.points
        )));
    }
    if let RateFunction::Table { values } = &cfg.rate {
        RateFunction::table(values.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let thermo = Thermo::new(cfg.rate.clone());
    let rows: Vec<ThermoRow> = (0..cfg.points)
        .map(|i| {
            let rho = if cfg.points == 1 {
                cfg.rho_min
            } else {
                cfg.rho_min + (cfg.rho_max - cfg.rho_min) * i as f64 / (cfg.points - 1) as f64
            };
            let phi = thermo.fugacity_of_density(rho)?;
            let (d1, d2) = thermo.phi_derivatives(rho)?;
            Ok(ThermoRow {
                rho,
                phi,
                phi_prime: d1,
                phi_double_prime: d2,
                z_of_phi: thermo.partition_function(phi)?,
            })
        })
        .collect::<Result<_, zrp_core::Error>>()?;
    let mut store = ResultStore::create(&ctx.out, "thermo-table")?;
    store.write_csv("thermo_table.csv", &rows)?;
    if ctx.plot {
        let fig = Figure {
            title: format!("Φ and Φ′ for g = {}", cfg.rate.name()),
            x_label: "ρ".into(),
            y_label: "value".into(),
            series: vec![
                Series {
                    label: "Φ(ρ)".into(),
                    points: rows.iter().map(|r| (r.rho, r.phi)).collect(),
                    errors: None,
                    mark: Mark::Line,
                    color: 0,
                },
                Series {
                    label: "Φ′(ρ)".into(),
                    points: rows.iter().map(|r| (r.rho, r.phi_prime)).collect(),
                    errors: None,
                    mark: Mark::Line,
                    color: 1,
                },
            ],
            ..Figure::default()
        };
        write_figure(&mut store, "thermo.svg", Ok(fig))?;
    }
    ctx.finish(store, json!({ "rate": cfg.rate.name(), "points": rows.len() }))
}

pub fn pde(ctx: &Context) -> Result<(), CliError> {
    let sim = &ctx.config.simulation;
    let cfg = &ctx.config.pde;
    if cfg.points < 2 {
        return Err(CliError::Config("pde.points must be at least 2".into()));
    }
    if cfg.times.is_empty() || cfg.times.windows(2).any(|w| w[1] < w[0]) || cfg.times[0] < 0.0 {
        return Err(CliError::Config(
            "pde.times must be nonempty, sorted and nonnegative".into(),
        ));
    }
    let drift = check_drift_orthogonal(&sim.profile, &sim.kernel).map_err(|e| CliError::Config(e.to_string()))?;
    if !drift.orthogonal {
        return Err(CliError::Config(format!(
            "profile modes {:?} are not orthogonal to the drift",
            drift.failing_modes()
        )));
    }
    let thermo = Thermo::new(sim.rate.clone());
    let heat = HeatSolution::new(&sim.profile, sim.rho_star, &sim.kernel, &thermo)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let grid = Grid {
        dim: sim.dim,
        points: cfg.points,
    };
    let torus = zrp_core::lattice::Torus::new(grid.dim, grid.points).map_err(|e| CliError::Config(e.to_string()))?;
    let positions: Vec<Vec<f64>> = (0..grid.len()).map(|i| torus.position(i)).collect();

    let mut fd_state = None;
    let mut fd_scale = 1.0;
    if let Some(side) = cfg.side {
        let amp = (side as f64).powf(-sim.alpha);
        fd_scale = 1.0 / amp;
        fd_state = Some(grid.sample(|u| sim.rho_star + amp * sim.profile.eval(u))?);
    }
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..grid.dim).map(|i| format!("x{i}")));
    header.push("heat".into());
    if fd_state.is_some() {
        header.push("fd_deviation".into());
    }
    let mut rows = Vec::new();
    let mut mode_rows = Vec::new();
    let mut fd_summary = Vec::new();
    let mut clock = 0.0;
    for &t in &cfg.times {
        if let Some(state) = fd_state.as_mut() {
            if t > clock {
                let sol = solve_parabolic_fd(state, grid, &sim.kernel, &thermo, t - clock, cfg.dt)?;
                *state = sol.values;
                clock = t;
                fd_summary.push(json!({"t": t, "dt": sol.dt, "steps": sol.steps}));
            }
        }
        let field = heat.at(t);
        let mut max_gap: f64 = 0.0;
        for (i, u) in positions.iter().enumerate() {
            let h = field.eval(u);
            let mut row = vec![num(t)];
            row.extend(u.iter().map(|&x| num(x)));
            row.push(num(h));
            if let Some(state) = &fd_state {
                let dev = fd_scale * (state[i] - sim.rho_star);
                max_gap = max_gap.max((dev - h).abs());
                row.push(num(dev));
            }
            rows.push(row);
        }
        if fd_state.is_some() {
            info!("t={t}: max |fd deviation − heat| = {max_gap:.3e}");
        }
        for ((m, amp), rate) in heat.modes().iter().zip(heat.amplitudes(t)).zip(heat.decay_rates()) {
            mode_rows.push(vec![
                num(t),
                m.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"),
                num(amp),
                num(*rate),
            ]);
        }
    }
    let mut store = ResultStore::create(&ctx.out, "pde")?;
    store.write_table("heat.csv", &header, &rows)?;
    let mode_header: Vec<String> = ["t", "k", "amplitude", "decay_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    store.write_table("modes.csv", &mode_header, &mode_rows)?;
    ctx.finish(
        store,
        json!({ "diffusivity": heat.diffusivity(), "decay_rates": heat.decay_rates(), "fd": fd_summary }),
    )
}

#[derive(Serialize)]
struct EnsembleRow {
    n: usize,
    j: u32,
    gap: Option<f64>,
    eoe_gap: f64,
    n_times_var: f64,
    lsi_lb: f64,
    tail_ratio: f64,
}

pub fn ensembles(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config.ensembles;
    if cfg.n_grid.is_empty() || cfg.n_grid.contains(&0) {
        return Err(CliError::Config(
            "ensembles.n_grid must be nonempty with positive sizes".into(),
        ));
    }
    if !(cfg.density >= 0.0) {
        return Err(CliError::Config(format!("ensembles.density {}", cfg.density)));
    }
    let thermo = Thermo::new(cfg.rate.clone());
    let mean = thermo
        .density_of_fugacity(cfg.tail_fugacity)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.tail_threshold <= mean {
        return Err(CliError::Config(format!(
            "tail threshold {} is not above the mean density {mean}",
            cfg.tail_threshold
        )));
    }
    let jobs: Vec<(usize, u32)> = cfg
        .n_grid
        .iter()
        .map(|&n| (n, (cfg.density * n as f64).round() as u32))
        .collect();
    if let Some(&(n, j)) = jobs.iter().find(|&&(n, j)| j as f64 > cfg.cutoff * n as f64) {
        return Err(CliError::Config(format!(
            "j={j} exceeds cutoff·n = {} at n={n}",
            cfg.cutoff * n as f64
        )));
    }
    let s = SymKernel::nearest_neighbor(1);
    let rows: Vec<EnsembleRow> = jobs
        .par_iter()
        .map(|&(n, j)| {
            let space = enumerate_canonical(Block::line(n), j, &thermo)?;
            let gen = SymGenerator::build(&space, &thermo, &s)?;
            let gap = spectral_gap(&space, &gen, GapSolver::Auto)?;
            let eoe = (canonical_mean_rate(&space, &thermo) - thermo.fugacity_of_density(j as f64 / n as f64)?).abs();
            let var = canonical_variance(&space, &thermo, cfg.cutoff)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.wrapping_add(n as u64));
            let lsi = lsi_ratio_scan(&space, &gen, &gap, cfg.lsi_trials, &[], &mut rng);
            let tail = tail_probability_exact(&thermo, n, cfg.tail_fugacity, cfg.tail_threshold)?;
            Ok(EnsembleRow {
                n,
                j,
                gap: gap.value(),
                eoe_gap: eoe,
                n_times_var: var.scaled,
                lsi_lb: lsi.lower_bound,
                tail_ratio: tail.ratio,
            })
        })
        .collect::<Result<_, zrp_core::Error>>()?;
    let mut store = ResultStore::create(&ctx.out, "ensembles")?;
    let path = store.write_csv("ensembles.csv", &rows)?;
    if ctx.plot {
        let fig = Table::read(&path).and_then(|t| loglog_figure(&t, "n", "gap", None));
        write_figure(&mut store, "gap_loglog.svg", fig)?;
        let fig = Table::read(&path).and_then(|t| loglog_figure(&t, "n", "eoe_gap", None));
        write_figure(&mut store, "eoe_loglog.svg", fig)?;
    }
    ctx.finish(store, json!({ "rate": cfg.rate.name(), "jobs": rows.len() }))
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    id: u8,
    name: &'a str,
    passed: bool,
    seconds: f64,
    detail: &'a str,
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let only = &ctx.config.verify.only;
    if let Some(bad) = only.iter().find(|&&id| !(1..=10).contains(&id)) {
        return Err(CliError::Config(format!("no acceptance criterion {bad}")));
    }
    let ids: Vec<u8> = if only.is_empty() {
        (1..=10).collect()
    } else {
        only.clone()
    };
    let mut outcomes = Vec::new();
    for id in ids {
        let o = acceptance::run(id, ctx.seed);
        println!("{o}");
        outcomes.push(o);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    let mut store = ResultStore::create(&ctx.out, "verify")?;
    let rows: Vec<VerifyRow> = outcomes
        .iter()
        .map(|o| VerifyRow {
            id: o.id,
            name: o.name,
            passed: o.passed,
            seconds: o.seconds,
            detail: &o.detail,
        })
        .collect();
    store.write_csv("verify.csv", &rows)?;
    let text = serde_json::to_string_pretty(&outcomes).map_err(|e| CliError::Runtime(e.to_string()))?;
    store.write_text("verify.json", &(text + "\n"))?;
    if ctx.plot {
        // closed-form entropy over the criterion-4 grid, with its slope figure
        let mut rows = Vec::new();
        for alpha in [0.25, 0.5, 0.75] {
            for side in [16, 32, 64, 128] {
                let mut spec = acceptance::heat_spec(side, vec![0.0], 1, ctx.seed);
                spec.alpha = alpha;
                rows.push(entropy_row(&spec)?);
            }
        }
        let path = store.write_csv("entropy.csv", &rows)?;
        let fig = Table::read(&path).and_then(|t| loglog_figure(&t, "N", "entropy_per_volume", Some("alpha")));
        write_figure(&mut store, "entropy_loglog.svg", fig)?;
    }
    let total = outcomes.len();
    ctx.finish(store, json!({ "passed": total - failed, "failed": failed }))?;
    if failed > 0 {
        return Err(CliError::Acceptance { failed, total });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// Mean pairing with 3-SE bars against the reference (summary.csv).
    Decay,
    /// Log-log scatter with fitted slopes (any numeric columns).
    Loglog,
}

pub struct PlotRequest {
    pub kind: PlotKind,
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub x: Option<String>,
    pub y: Option<String>,
    pub group: Option<String>,
}

pub fn plot(ctx: &Context, req: &PlotRequest) -> Result<(), CliError> {
    let table = Table::read(&req.input)?;
    let fig = match req.kind {
        PlotKind::Decay => decay_figure(&table)?,
        PlotKind::Loglog => {
            let x = req
                .x
                .as_deref()
                .ok_or_else(|| CliError::Config("loglog needs --x".into()))?;
            let y = req
                .y
                .as_deref()
                .ok_or_else(|| CliError::Config("loglog needs --y".into()))?;
            loglog_figure(&table, x, y, req.group.as_deref())?
        }
    };
    let svg = fig.to_svg()?;
    if let Some(path) = &req.output {
        std::fs::write(path, svg)?;
        info!("figure written to {}", path.display());
        return Ok(());
    }
    let stem = req
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "figure".into());
    let kind = match req.kind {
        PlotKind::Decay => "decay",
        PlotKind::Loglog => "loglog",
    };
    let mut store = ResultStore::create(&ctx.out, "plots")?;
    let name = format!("{stem}_{kind}.svg");
    let path = store.write_text(&name, &svg)?;
    info!("figure written to {}", path.display());
    ctx.finish(store, json!({ "input": req.input.display().to_string(), "kind": kind }))
}
