//! Experiment plans and runners.

use std::path::PathBuf;
use std::time::Instant;

use mavg_core::laguerre::LaguerreBasis;
use mavg_core::lsmc::{price_many, Method, PricingConfig, PricingResult, MAX_HISTORY_DIM};
use mavg_core::market::{exact_moving_average, simulate_paths, PathSet, TimeGrid};
use mavg_core::markovize::propagate_states;
use mavg_core::weighting::{optimize_scale, project, WeightingScheme};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::table::{Cell, Table};

/// Columns of every pricing table, in order.
pub const PRICE_COLUMNS: [&str; 20] = [
    "method",
    "n",
    "N_delta",
    "N_lag",
    "M",
    "bS",
    "bX",
    "price",
    "rel_std",
    "runtime_s",
    "seed_list_hash",
    "N",
    "T",
    "state_dim",
    "price_display",
    "mc_std_error",
    "n_valuations",
    "mean_exercise_step",
    "p",
    "degenerate_cells",
];

/// One pricing run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub config: PricingConfig,
}

/// Output of an experiment: tables plus free-form summary notes.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn grid_with(cfg: &ExperimentConfig, steps: usize, window: usize, lag: usize) -> TimeGrid {
    TimeGrid { maturity: cfg.grid.maturity, steps, window_steps: window, lag_steps: lag }
}

fn methods(cfg: &ExperimentConfig) -> Vec<Method> {
    cfg.sweep.methods.clone().unwrap_or_else(|| vec![cfg.method])
}

fn list(values: &Option<Vec<usize>>, name: &str) -> Result<Vec<usize>> {
    match values {
        Some(v) if !v.is_empty() => Ok(v.clone()),
        _ => Err(CliError::config(format!("sweep.{name} must list at least one value"))),
    }
}

/// The pricing runs of `experiment`, in output order. Empty for experiments
/// that do not price.
pub fn plan(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Vec<Run>> {
    let base = cfg.grid;
    let mut runs = Vec::new();
    let mut add = |method: Method, order: usize, grid: TimeGrid, paths: usize| {
        runs.push(Run { config: cfg.pricing(method, order, grid, paths) });
    };
    // Largest admissible order for a window/lag pair, capped at `n`.
    let capped = |window: usize, lag: usize| cfg.n.min((window + lag).saturating_sub(1));
    match experiment {
        Experiment::Table1 | Experiment::ApproxError | Experiment::Trajectory => {}
        Experiment::Price => {
            for m in methods(cfg) {
                add(m, cfg.n, base.time_grid(), cfg.paths);
            }
        }
        Experiment::Table2 => {
            for window in list(&cfg.sweep.N_delta, "N_delta")? {
                for m in methods(cfg) {
                    let grid = grid_with(cfg, base.steps, window, base.lag_steps);
                    if m == Method::MLs && window + base.lag_steps > MAX_HISTORY_DIM {
                        log::info!(
                            "skipping m-ls at N_delta = {window}: history dimension above {MAX_HISTORY_DIM}"
                        );
                        continue;
                    }
                    add(m, cfg.n, grid, cfg.paths);
                }
            }
        }
        Experiment::Table3 => {
            let high = cfg.sweep.M_high_order.unwrap_or(cfg.paths);
            for m in methods(cfg) {
                if m.uses_laguerre() {
                    for n in list(&cfg.sweep.n, "n")? {
                        add(m, n, base.time_grid(), if n >= 4 { high } else { cfg.paths });
                    }
                } else {
                    add(m, cfg.n, base.time_grid(), high);
                }
            }
        }
        Experiment::DeltaSweep | Experiment::LagWindowSweep => {
            for window in list(&cfg.sweep.N_delta, "N_delta")? {
                let grid = grid_with(cfg, base.steps, window, base.lag_steps);
                for m in methods(cfg) {
                    let order = capped(window, base.lag_steps);
                    if m.uses_laguerre() && order == 0 {
                        log::info!("skipping {m} at N_delta = {window}: no admissible Laguerre order");
                        continue;
                    }
                    add(m, order.max(1), grid, cfg.paths);
                }
            }
        }
        Experiment::LagSweep => {
            for lag in list(&cfg.sweep.N_lag, "N_lag")? {
                let grid = grid_with(cfg, base.steps, base.window_steps, lag);
                for m in methods(cfg) {
                    let order = capped(base.window_steps, lag);
                    if m.uses_laguerre() && order == 0 {
                        log::info!("skipping {m} at N_lag = {lag}: no admissible Laguerre order");
                        continue;
                    }
                    add(m, order.max(1), grid, cfg.paths);
                }
            }
        }
        Experiment::BermudanConvergence => {
            // Laguerre runs use the configured grid; history runs keep the
            // window length fixed and refine the step inside it.
            let window_time = base.time_grid().window();
            for m in methods(cfg) {
                if m.uses_laguerre() {
                    for n in list(&cfg.sweep.n, "n")? {
                        add(m, n, base.time_grid(), cfg.paths);
                    }
                } else {
                    for window in list(&cfg.sweep.N_delta, "N_delta")? {
                        let steps = (window as f64 * cfg.grid.maturity / window_time).round() as usize;
                        add(m, cfg.n, grid_with(cfg, steps, window, base.lag_steps), cfg.paths);
                    }
                }
            }
        }
    }
    Ok(runs)
}

/// Runs `experiment` and returns its tables.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    match experiment {
        Experiment::Table1 => table1(cfg),
        Experiment::ApproxError => approx_error(cfg),
        Experiment::Trajectory => trajectory(cfg),
        _ => pricing(experiment, cfg),
    }
}

fn table1(cfg: &ExperimentConfig) -> Result<Report> {
    let scheme = WeightingScheme::uniform(1.0)?;
    let mut table = Table::new("table1", &["n", "p_opt", "p_opt_display", "l2_error", "relative_error"]);
    for &n in cfg.sweep.n.as_deref().unwrap_or_default() {
        let p = optimize_scale(&scheme, n)?;
        let proj = project(&scheme, &LaguerreBasis::new(p, n)?)?;
        table.push(vec![
            n.into(),
            p.into(),
            format!("{p:.3}").into(),
            proj.l2_error.into(),
            proj.relative_error().into(),
        ]);
    }
    Ok(Report { tables: vec![table], notes: Vec::new() })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn power_fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn approx_error(cfg: &ExperimentConfig) -> Result<Report> {
    let schemes = [
        ("uniform", 1.0f64, 0.0f64, WeightingScheme::uniform(1.0)?),
        ("delayed", 1.0, 0.5, WeightingScheme::delayed(1.0, 0.5)?),
    ];
    let orders = cfg.sweep.n.clone().unwrap_or_default();
    let mut errors = Table::new(
        "approx_error",
        &[
            "scheme",
            "delta",
            "lag",
            "n",
            "p_opt",
            "l2_error",
            "survival_norm",
            "relative_error",
            "normalized_error",
        ],
    );
    let mut fits = Table::new("approx_error_fit", &["scheme", "n_min", "n_max", "exponent"]);
    let mut curves =
        Table::new("approx_error_curves", &["scheme", "n", "x", "survival", "approximation"]).quiet();
    for (name, delta, lag, scheme) in &schemes {
        let mut l2 = Vec::with_capacity(orders.len());
        for &n in &orders {
            let p = optimize_scale(scheme, n)?;
            let proj = project(scheme, &LaguerreBasis::new(p, n)?)?;
            let normalized = proj.l2_error / (scheme.total_mass() * delta.sqrt());
            errors.push(vec![
                (*name).into(),
                (*delta).into(),
                (*lag).into(),
                n.into(),
                p.into(),
                proj.l2_error.into(),
                proj.survival_norm.into(),
                proj.relative_error().into(),
                normalized.into(),
            ]);
            l2.push(proj.l2_error);
            if [1, 3, 5, 7].contains(&n) {
                let end = 1.5 * scheme.support_end();
                for j in 0..=300 {
                    let x = end * j as f64 / 300.0;
                    curves.push(vec![
                        (*name).into(),
                        n.into(),
                        x.into(),
                        scheme.survival(x).into(),
                        proj.approx_survival(x).into(),
                    ]);
                }
            }
        }
        if orders.len() >= 2 {
            let ns: Vec<f64> = orders.iter().map(|&n| n as f64).collect();
            fits.push(vec![
                (*name).into(),
                orders[0].into(),
                orders[orders.len() - 1].into(),
                power_fit_exponent(&ns, &l2).into(),
            ]);
        }
    }
    Ok(Report { tables: vec![errors, fits, curves], notes: Vec::new() })
}

fn scheme_for(grid: &TimeGrid) -> Result<WeightingScheme> {
    Ok(if grid.lag_steps == 0 {
        WeightingScheme::uniform(grid.window())?
    } else {
        WeightingScheme::delayed(grid.window(), grid.lag())?
    })
}

fn paths_table(paths: &PathSet) -> Table {
    let mut t = Table::new("paths", &["path_id", "step", "price"]).quiet();
    for (m, row) in paths.prices().outer_iter().enumerate() {
        for (i, s) in row.iter().enumerate() {
            t.push(vec![m.into(), i.into(), (*s).into()]);
        }
    }
    t
}

fn trajectory(cfg: &ExperimentConfig) -> Result<Report> {
    let grid = cfg.grid.time_grid();
    let paths = simulate_paths(&cfg.model(), &grid, cfg.paths, cfg.seeds[0])?;
    let exact = exact_moving_average(&paths, &grid)?;
    let scheme = scheme_for(&grid)?;
    let mut report = Report::default();
    for &n in cfg.sweep.n.as_deref().unwrap_or_default() {
        let p = match cfg.p {
            Some(p) => p,
            None => optimize_scale(&scheme, n)?,
        };
        let states = propagate_states(&paths, &project(&scheme, &LaguerreBasis::new(p, n)?)?, &grid)?;
        let mut columns = vec!["path_id", "step", "price", "exact_ma", "approx_ma"];
        let names: Vec<String> = (0..n).map(|k| format!("state_{k}")).collect();
        columns.extend(names.iter().map(String::as_str));
        let mut t = Table::new(format!("trajectory_n{n}"), &columns).quiet();
        let mut worst = 0.0f64;
        for m in 0..paths.n_paths() {
            for i in 0..=grid.steps {
                let mut row = vec![
                    m.into(),
                    i.into(),
                    paths.prices()[[m, i]].into(),
                    exact[[m, i]].into(),
                    states.approx_ma[[m, i]].into(),
                ];
                row.extend((0..n).map(|k| Cell::Real(states.states[[m, i, k]])));
                t.push(row);
                if i >= grid.first_exercise() {
                    worst = worst.max((exact[[m, i]] - states.approx_ma[[m, i]]).abs());
                }
            }
        }
        report.notes.push(format!(
            "trajectory: n={n} p={p:.4} max|approx_ma - exact_ma| over exercise dates = {worst:.6}"
        ));
        report.tables.push(t);
    }
    if cfg.dump_paths {
        report.tables.push(paths_table(&paths));
    }
    Ok(report)
}

fn price_row(cfg: &PricingConfig, r: &PricingResult) -> Vec<Cell> {
    vec![
        r.method.label().into(),
        cfg.method.uses_laguerre().then_some(cfg.order).into(),
        cfg.grid.window_steps.into(),
        cfg.grid.lag_steps.into(),
        cfg.paths.into(),
        cfg.cells.spot.into(),
        cfg.cells.state.into(),
        r.price.into(),
        r.rel_std.into(),
        r.runtime_seconds.into(),
        r.seed_list_hash.as_str().into(),
        cfg.grid.steps.into(),
        cfg.grid.maturity.into(),
        cfg.state_dim().into(),
        format!("{:.3}", r.price).into(),
        r.mc_std_error.into(),
        r.n_valuations.into(),
        r.mean_exercise_step.into(),
        r.scale.into(),
        r.degenerate_cells.into(),
    ]
}

fn pricing(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    let runs = plan(experiment, cfg)?;
    // Runs that share a simulation (same maturity, steps and path count) are
    // priced together so each seed's paths are drawn once.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let key = |r: &Run| (r.config.grid.steps, r.config.paths);
        match groups.iter_mut().find(|g| key(&runs[g[0]]) == key(run)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let mut results: Vec<Option<PricingResult>> = vec![None; runs.len()];
    for group in &groups {
        let configs: Vec<PricingConfig> = group.iter().map(|&i| runs[i].config.clone()).collect();
        let started = Instant::now();
        let priced = price_many(&configs)?;
        log::info!("priced {} configurations in {:.1}s", configs.len(), started.elapsed().as_secs_f64());
        for (&i, r) in group.iter().zip(priced) {
            results[i] = Some(r);
        }
    }
    let mut table = Table::new(experiment.name(), &PRICE_COLUMNS);
    for (run, r) in runs.iter().zip(results) {
        table.push(price_row(&run.config, &r.expect("every run is priced")));
    }
    let mut report = Report { tables: vec![table], notes: Vec::new() };
    if cfg.dump_paths {
        let first = &runs[0].config;
        report.tables.push(paths_table(&simulate_paths(
            &first.model,
            &first.grid,
            first.paths,
            first.seeds[0],
        )?));
    }
    Ok(report)
}

/// Writes every table of `report` under `cfg.out`, each with the resolved
/// config as a comment header. Returns the written paths.
pub fn write_report(experiment: Experiment, cfg: &ExperimentConfig, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let mut header = vec![format!("mavg-pricer {experiment}")];
    header.extend(cfg.header_lines());
    let mut written = Vec::new();
    for table in &report.tables {
        let path = cfg.out.join(format!("{}.csv", table.name));
        table.write_csv(&path, &header)?;
        written.push(path);
    }
    Ok(written)
}

/// Prints the per-row summaries and notes of `report` to stdout.
pub fn print_summary(report: &Report) {
    for table in report.tables.iter().filter(|t| t.echo) {
        for i in 0..table.rows.len() {
            println!("{}", table.summary(i));
        }
    }
    for note in &report.notes {
        println!("{note}");
    }
}
