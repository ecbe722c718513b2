use mavg_core::lsmc::{
    fit_local_basis, fit_local_basis_in_sample, price, value_paths, CellCounts, Exercise, Method, Payoff,
    PricingConfig, PricingResult, RegressionSpec,
};
use mavg_core::market::{GbmModel, PathSet, TimeGrid};
use mavg_core::Error;
use mavg_testkit::{black_scholes_call, enumerate_two_point_paths, two_point_bermudan_value};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(method: Method, window: usize, paths: usize) -> PricingConfig {
    PricingConfig {
        model: GbmModel { s0: 100.0, rate: 0.05, volatility: 0.3 },
        grid: TimeGrid { maturity: 0.2, steps: 50, window_steps: window, lag_steps: 0 },
        payoff: Payoff::MovingAverageCall,
        method,
        order: 1,
        cells: CellCounts { spot: 2, state: 2 },
        min_points_per_cell: None,
        paths,
        seeds: vec![11, 12],
        exercise: Exercise::Bermudan,
        scale: None,
    }
}

/// Plain normal-equation OLS with Gaussian elimination, intercept first.
fn ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = rows[0].len() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (row, &t) in rows.iter().zip(y) {
        let x: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d] += x[i] * t;
        }
    }
    for c in 0..d {
        let piv = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..d {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

#[test]
fn constant_responses_are_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = Array2::from_shape_fn((500, 3), |_| rng.random::<f64>());
    let spec = RegressionSpec::new(vec![3, 2, 2]);
    let (reg, fitted) = fit_local_basis_in_sample(pts.view(), &[2.5; 500], &spec).unwrap();
    assert!(fitted.iter().all(|v| (v - 2.5).abs() < 1e-12));
    for x in [[0.1, 0.9, 0.3], [2.0, -1.0, 0.5]] {
        assert!((reg.predict(&x) - 2.5).abs() < 1e-12);
    }
}

#[test]
fn affine_responses_are_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = Array2::from_shape_fn((300, 3), |_| 50.0 + 100.0 * rng.random::<f64>());
    let y: Vec<f64> = pts.outer_iter().map(|r| 1.5 - 0.25 * r[0] + 3.0 * r[1] + 0.01 * r[2]).collect();
    let spec = RegressionSpec::new(vec![1, 1, 1]);
    let (reg, fitted) = fit_local_basis_in_sample(pts.view(), &y, &spec).unwrap();
    for (f, t) in fitted.iter().zip(&y) {
        assert!((f - t).abs() < 1e-10);
    }
    let x = [70.0, 60.0, 55.0];
    assert!((reg.predict(&x) - (1.5 - 17.5 + 180.0 + 0.55)).abs() < 1e-10);
}

#[test]
fn indicator_splits_at_the_median() {
    let pts = Array2::from_shape_fn((100, 1), |(i, _)| (i + 1) as f64);
    let y: Vec<f64> = (1..=100).map(|x| if x > 50 { 1.0 } else { 0.0 }).collect();
    let reg = fit_local_basis(pts.view(), &y, &RegressionSpec::new(vec![2])).unwrap();
    assert_eq!(reg.populations(), vec![50, 50]);
    // Each half is constant, so its least-squares line is flat.
    assert!(reg.predict(&[1.0]).abs() < 1e-12);
    assert!(reg.predict(&[50.0]).abs() < 1e-12);
    assert!((reg.predict(&[51.0]) - 1.0).abs() < 1e-12);
    assert!((reg.predict(&[100.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn cells_agree_with_plain_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let pts = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
    let y: Vec<f64> =
        pts.outer_iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1] + 0.1 * r[0] * r[1]).collect();
    let spec = RegressionSpec::new(vec![4, 3]);
    let (reg, fitted) = fit_local_basis_in_sample(pts.view(), &y, &spec).unwrap();
    // Rebuild the partition by sorting, then fit each cell independently.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| pts[[a, 0]].total_cmp(&pts[[b, 0]]));
    for g in 0..4 {
        let mut group: Vec<usize> = idx[g * n / 4..(g + 1) * n / 4].to_vec();
        group.sort_by(|&a, &b| pts[[a, 1]].total_cmp(&pts[[b, 1]]));
        let len = group.len();
        for h in 0..3 {
            let cell = &group[h * len / 3..(h + 1) * len / 3];
            let rows: Vec<Vec<f64>> = cell.iter().map(|&i| pts.row(i).to_vec()).collect();
            let ys: Vec<f64> = cell.iter().map(|&i| y[i]).collect();
            let beta = ols(&rows, &ys);
            for &i in cell {
                let expected = beta[0] + beta[1] * pts[[i, 0]] + beta[2] * pts[[i, 1]];
                assert!((fitted[i] - expected).abs() < 1e-9, "cell ({g},{h})");
                let x = [pts[[i, 0]], pts[[i, 1]]];
                assert_eq!(reg.cell_of(&x), g * 3 + h);
            }
        }
    }
}

#[test]
fn regression_rejects_small_samples() {
    let pts = Array2::<f64>::zeros((20, 2));
    let err = fit_local_basis(pts.view(), &[0.0; 20], &RegressionSpec::new(vec![2, 2])).unwrap_err();
    assert_eq!(err, Error::InsufficientPaths { required: 24, available: 20 });
}

#[test]
fn european_fixed_strike_call_matches_black_scholes() {
    let mut cfg = config(Method::NmLs, 5, 400_000);
    cfg.payoff = Payoff::FixedStrikeCall { strike: 100.0 };
    cfg.exercise = Exercise::European;
    let r = price(&cfg).unwrap();
    let bs = black_scholes_call(100.0, 100.0, 0.05, 0.3, 0.2);
    assert!((r.price - bs).abs() < 3.0 * r.mc_std_error, "{} ± {} vs {bs}", r.price, r.mc_std_error);
    assert_eq!(r.mean_exercise_step, 50.0);
}

#[test]
fn single_point_window_prices_zero() {
    for method in [Method::NmLs, Method::MLs] {
        for exercise in [Exercise::Bermudan, Exercise::European] {
            let mut cfg = config(method, 1, 5000);
            cfg.exercise = exercise;
            let r = price(&cfg).unwrap();
            assert_eq!(r.price, 0.0);
            assert_eq!(r.mc_std_error, 0.0);
        }
    }
}

fn strip_runtime(mut r: PricingResult) -> PricingResult {
    r.runtime_seconds = 0.0;
    r
}

#[test]
fn results_do_not_depend_on_thread_count() {
    for method in [Method::LagLs, Method::LagLsStar, Method::NmLs, Method::MLs] {
        let mut cfg = config(method, 6, 20_000);
        cfg.order = 3;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = strip_runtime(one.install(|| price(&cfg).unwrap()));
        let b = strip_runtime(four.install(|| price(&cfg).unwrap()));
        assert_eq!(a, b, "{method}");
        assert_eq!(a.price.to_bits(), b.price.to_bits());
    }
}

#[test]
fn history_regression_dominates_two_factor_regression() {
    for window in [2, 4] {
        let nm = price(&config(Method::NmLs, window, 100_000)).unwrap();
        let m = price(&config(Method::MLs, window, 100_000)).unwrap();
        let tol = 2.0 * (nm.mc_std_error.powi(2) + m.mc_std_error.powi(2)).sqrt();
        assert!(m.price >= nm.price - tol, "N_δ={window}: {} vs {}", m.price, nm.price);
    }
}

#[test]
fn early_exercise_is_worth_at_least_the_european() {
    for method in [Method::LagLs, Method::LagLsStar, Method::NmLs, Method::MLs] {
        let mut cfg = config(method, 5, 100_000);
        cfg.order = 2;
        let bermudan = price(&cfg).unwrap();
        cfg.exercise = Exercise::European;
        let european = price(&cfg).unwrap();
        let tol = 2.0 * (bermudan.mc_std_error.powi(2) + european.mc_std_error.powi(2)).sqrt();
        assert!(bermudan.price >= european.price - tol, "{method}: {} vs {}", bermudan.price, european.price);
        assert!(bermudan.mean_exercise_step < 50.0);
    }
}

#[test]
fn history_regression_recovers_the_tree_value() {
    // Every tree path carries the same weight, so a cell holding whole
    // groups of identical states averages their continuations exactly. Finer
    // partitions cut such groups by path index, which orders paths by their
    // future moves too, and the in-sample fit then sees the future.
    for (steps, window) in [(12, 3), (12, 2), (10, 3)] {
        let maturity = 0.02 * steps as f64;
        let dt = maturity / steps as f64;
        let rows = enumerate_two_point_paths(100.0, 0.05, 0.3, dt, steps);
        let flat: Vec<f64> = rows.concat();
        let paths =
            PathSet::from_prices(Array2::from_shape_vec((rows.len(), steps + 1), flat).unwrap(), None)
                .unwrap();
        let exact = two_point_bermudan_value(100.0, 0.05, 0.3, dt, steps, window, 0);
        for (spot, state) in [(1, 1), (2, 2), (4, 1)] {
            let cfg = PricingConfig {
                model: GbmModel { s0: 100.0, rate: 0.05, volatility: 0.3 },
                grid: TimeGrid { maturity, steps, window_steps: window, lag_steps: 0 },
                payoff: Payoff::MovingAverageCall,
                method: Method::MLs,
                order: 1,
                cells: CellCounts { spot, state },
                min_points_per_cell: None,
                paths: rows.len(),
                seeds: vec![0],
                exercise: Exercise::Bermudan,
                scale: None,
            };
            let value = value_paths(&cfg, &paths, None).unwrap().price;
            assert!(
                (value - exact).abs() <= 0.005 * exact,
                "N={steps} N_δ={window} b=({spot},{state}): {value} vs {exact}"
            );
        }
    }
}

#[test]
fn laguerre_configs_need_a_valid_order() {
    let mut cfg = config(Method::LagLsStar, 5, 10_000);
    cfg.order = 5;
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("n <= N_delta - 1"), "{msg}");
    cfg.order = 4;
    assert!(cfg.validate().is_ok());
    cfg.grid.lag_steps = 3;
    cfg.order = 7;
    assert!(cfg.validate().is_ok());
}
