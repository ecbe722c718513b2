use std::path::Path;
use std::process::Command;

use mavg_cli::experiments::PRICE_COLUMNS;
use mavg_cli::{plan, run, write_report, Cell, ConfigSources, Experiment, ExperimentConfig, RawCsv, Scale};
use mavg_core::lsmc::Method;

fn sources(overrides: &[&str]) -> ConfigSources {
    ConfigSources { overrides: overrides.iter().map(|s| s.to_string()).collect(), ..Default::default() }
}

fn resolve(experiment: Experiment, overrides: &[&str]) -> mavg_cli::Result<ExperimentConfig> {
    ExperimentConfig::resolve(experiment, &sources(overrides))
}

#[test]
fn table2_defaults() {
    let cfg = resolve(Experiment::Table2, &[]).unwrap();
    assert_eq!((cfg.model.s0, cfg.model.r, cfg.model.sigma), (100.0, 0.05, 0.3));
    assert_eq!((cfg.grid.maturity, cfg.grid.steps, cfg.grid.lag_steps), (0.2, 50, 0));
    assert_eq!((cfg.regression.spot_cells, cfg.regression.state_cells), (2, 2));
    assert_eq!((cfg.paths, cfg.seeds.len(), cfg.scale), (500_000, 3, Scale::Desk));
    // M-LS rows stop where the history no longer fits the regression.
    let runs = plan(Experiment::Table2, &cfg).unwrap();
    let mls: Vec<usize> =
        runs.iter().filter(|r| r.config.method == Method::MLs).map(|r| r.config.grid.window_steps).collect();
    assert_eq!(mls, (2..=8).collect::<Vec<_>>());
    assert_eq!(runs.len(), 9 + 7);
}

#[test]
fn empty_window_is_rejected() {
    let err = resolve(Experiment::Table2, &["--N_delta=0"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("at least one step"), "{err}");
}

#[test]
fn laguerre_order_must_fit_the_window() {
    for experiment in [Experiment::Price, Experiment::Table3] {
        let err = resolve(experiment, &["--n=9", "--N_delta=5"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("n <= N_delta - 1") && msg.contains("n = 9"), "{msg}");
    }
    assert!(resolve(Experiment::Price, &["--n=4", "--N_delta=5"]).is_ok());
}

#[test]
fn malformed_inputs_exit_with_two() {
    for bad in [
        &["--grid.bogus=1"][..],
        &["--M=abc"],
        &["--grid.delta=0.04"],
        &["--method=lag-ls-double"],
        &["--version=2"],
        &["--M=10"],
        &["--sweep.n=0"],
        &["no-equals-sign"],
    ] {
        let err = resolve(Experiment::Price, bad).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{bad:?}: {err}");
    }
    assert_eq!("nonsense".parse::<Experiment>().unwrap_err().exit_code(), 2);
}

#[test]
fn file_then_flags_then_seed() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cfg.json");
    std::fs::write(&file, r#"{"grid": {"N_delta": 4}, "seeds": [5, 6], "method": "nm-ls"}"#).unwrap();
    let mut src = ConfigSources { file: Some(file.clone()), ..Default::default() };
    let cfg = ExperimentConfig::resolve(Experiment::Price, &src).unwrap();
    assert_eq!((cfg.grid.window_steps, cfg.grid.steps), (4, 50));
    assert_eq!(cfg.seeds, vec![5, 6]);
    assert_eq!(cfg.sweep.methods, Some(vec![Method::NmLs]));
    src.overrides = vec!["--grid.N_delta=6".into(), "--sweep.methods=m-ls".into()];
    src.seed = Some(40);
    src.out = Some(dir.path().join("o"));
    let cfg = ExperimentConfig::resolve(Experiment::Price, &src).unwrap();
    assert_eq!(cfg.grid.window_steps, 6);
    assert_eq!(cfg.seeds, vec![40, 41]);
    assert_eq!(cfg.sweep.methods, Some(vec![Method::MLs]));
    assert_eq!(cfg.out, dir.path().join("o"));
    src.file = Some(dir.path().join("missing.json"));
    assert_eq!(ExperimentConfig::resolve(Experiment::Price, &src).unwrap_err().exit_code(), 1);
}

#[test]
fn paper_scale_presets() {
    let src = ConfigSources { scale: Some(Scale::Paper), ..Default::default() };
    let t2 = ExperimentConfig::resolve(Experiment::Table2, &src).unwrap();
    assert_eq!((t2.paths, t2.seeds.len()), (10_000_000, 5));
    let t3 = ExperimentConfig::resolve(Experiment::Table3, &src).unwrap();
    let runs = plan(Experiment::Table3, &t3).unwrap();
    for r in &runs {
        let expected =
            if r.config.method.uses_laguerre() && r.config.order <= 3 { 5_000_000 } else { 10_000_000 };
        assert_eq!(r.config.paths, expected, "{} n={}", r.config.method, r.config.order);
    }
    let bc = ExperimentConfig::resolve(Experiment::BermudanConvergence, &src).unwrap();
    assert_eq!(bc.paths, 20_000_000);
}

#[test]
fn sweep_plans() {
    let cfg = resolve(Experiment::DeltaSweep, &[]).unwrap();
    for r in plan(Experiment::DeltaSweep, &cfg).unwrap() {
        let w = r.config.grid.window_steps;
        if r.config.method.uses_laguerre() {
            assert!(w >= 2);
            assert_eq!(r.config.order, 7.min(w - 1));
        }
    }
    let cfg = resolve(Experiment::LagSweep, &[]).unwrap();
    let lag_rows: Vec<(usize, usize)> = plan(Experiment::LagSweep, &cfg)
        .unwrap()
        .iter()
        .filter(|r| r.config.method == Method::LagLsStar)
        .map(|r| (r.config.grid.lag_steps, r.config.order))
        .collect();
    assert_eq!(lag_rows[0], (0, 4));
    assert!(lag_rows[1..].iter().all(|&(_, n)| n == 7));
    // Window time stays 0.1 while the step inside it shrinks.
    let cfg = resolve(Experiment::BermudanConvergence, &[]).unwrap();
    for r in plan(Experiment::BermudanConvergence, &cfg).unwrap() {
        let g = r.config.grid;
        assert!((g.window() - 0.1).abs() < 1e-12 && g.maturity == 0.5);
        if r.config.method == Method::MLs {
            assert_eq!(g.steps, 5 * g.window_steps);
        } else {
            assert_eq!((g.steps, g.window_steps), (40, 8));
        }
        assert!(r.config.state_dim() <= 8);
    }
}

fn check_round_trip(path: &Path, table: &mavg_cli::Table) {
    let raw = RawCsv::read(path).unwrap();
    assert_eq!(raw.columns, table.columns);
    assert_eq!(raw.rows.len(), table.rows.len());
    assert!(raw.comments.iter().any(|c| c.starts_with("grid: ")), "{:?}", raw.comments);
    for (i, row) in table.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let text = &raw.rows[i][j];
            match cell {
                Cell::Real(x) => assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits()),
                Cell::Int(k) => assert_eq!(text.parse::<i64>().unwrap(), *k),
                Cell::Text(s) => assert_eq!(text, s),
                Cell::Empty => assert!(text.is_empty()),
            }
        }
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = format!("--out={}", dir.path().display());
    for (experiment, overrides) in [
        (Experiment::Table1, vec![out.as_str()]),
        (Experiment::ApproxError, vec![out.as_str()]),
        (Experiment::Trajectory, vec![out.as_str(), "--dump_paths=true"]),
        (Experiment::Table2, vec![out.as_str(), "--M=4000", "--sweep.N_delta=3"]),
    ] {
        let cfg = resolve(experiment, &overrides).unwrap();
        let report = run(experiment, &cfg).unwrap();
        let files = write_report(experiment, &cfg, &report).unwrap();
        assert_eq!(files.len(), report.tables.len());
        for (path, table) in files.iter().zip(&report.tables) {
            check_round_trip(path, table);
        }
    }
    let table2 = RawCsv::read(&dir.path().join("table2.csv")).unwrap();
    assert_eq!(table2.columns, PRICE_COLUMNS);
    assert_eq!(table2.get(0, "n"), Some(""));
    let traj = RawCsv::read(&dir.path().join("trajectory_n3.csv")).unwrap();
    assert_eq!(
        traj.columns,
        ["path_id", "step", "price", "exact_ma", "approx_ma", "state_0", "state_1", "state_2"]
    );
    assert_eq!(traj.rows.len(), 51);
    let paths = RawCsv::read(&dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.columns, ["path_id", "step", "price"]);
    assert_eq!(paths.get(0, "price").unwrap().parse::<f64>().unwrap(), 100.0);
    let t1 = RawCsv::read(&dir.path().join("table1.csv")).unwrap();
    let expected =
        ["2.149", "4.072", "6.002", "4.234", "5.828", "7.473", "9.155", "10.866", "9.153", "10.726"];
    for (i, e) in expected.iter().enumerate() {
        assert_eq!(t1.get(i, "p_opt_display"), Some(*e));
    }
}

/// CSV body with the wall-clock column blanked.
fn body_without_runtime(path: &Path) -> String {
    let raw = RawCsv::read(path).unwrap();
    let j = raw.columns.iter().position(|c| c == "runtime_s").unwrap();
    raw.rows
        .into_iter()
        .map(|mut r| {
            r[j].clear();
            r.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_identical() {
    let experiment = Experiment::Price;
    let mut bodies = Vec::new();
    for threads in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let out = format!("--out={}", dir.path().display());
        let cfg = resolve(
            experiment,
            &[
                out.as_str(),
                "--M=6000",
                "--N_delta=6",
                "--n=3",
                "--sweep.methods=lag-ls,lag-ls-star,nm-ls,m-ls",
            ],
        )
        .unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run(experiment, &cfg)).unwrap();
        let files = write_report(experiment, &cfg, &report).unwrap();
        bodies.push(body_without_runtime(&files[0]));
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0].lines().count(), 4);
}

fn pricer() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mavg-pricer"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let bad = pricer().args(["table2", "--N_delta=0", "--out", &out]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("N_delta >= 1"));
    let bad = pricer().args(["table3", "--n=9", "--N_delta=5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("n <= N_delta - 1"));
    assert_eq!(pricer().args(["unknown-experiment"]).output().unwrap().status.code(), Some(2));
    assert_eq!(pricer().args(["table1", "--scale", "huge"]).output().unwrap().status.code(), Some(2));
    let bad_threads = pricer().args(["table1", "--out", &out]).env("MAVG_THREADS", "zero").output().unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));

    let ok = pricer()
        .args(["table1", "--out", &out, "--sweep.n=1,2,3"])
        .env("MAVG_THREADS", "2")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(stdout.lines().count(), 3);
    assert!(stdout.lines().next().unwrap().contains("p_opt_display=2.149"));
    assert!(dir.path().join("table1.csv").exists());
}

#[test]
fn shipped_example_config_resolves() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table3-desk.json");
    let src = ConfigSources { file: Some(file), ..Default::default() };
    let cfg = ExperimentConfig::resolve(Experiment::Table3, &src).unwrap();
    assert_eq!(cfg.paths, 1_000_000);
    assert_eq!(cfg.grid.window_steps, 10);
}
