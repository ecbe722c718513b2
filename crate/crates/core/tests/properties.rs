use mavg_core::laguerre::{laguerre_definite_integral, LaguerreBasis};
use mavg_core::lsmc::{fit_local_basis_in_sample, RegressionSpec};
use mavg_core::market::{window_average, PathSet, TimeGrid};
use mavg_core::markovize::{propagate_states, StateTransition};
use mavg_core::weighting::{project, DensityPiece, WeightingScheme};
use ndarray::Array2;
use proptest::prelude::*;

fn scheme_strategy() -> impl Strategy<Value = WeightingScheme> {
    (0.0..2.0f64, prop::collection::vec((0.01..1.0f64, 0.01..1.0f64, 0.1..3.0f64), 1..4)).prop_map(
        |(atom, raw)| {
            let mut start = 0.0;
            let pieces = raw
                .into_iter()
                .map(|(gap, len, height)| {
                    let piece = DensityPiece { start: start + gap, end: start + gap + len, height };
                    start = piece.end;
                    piece
                })
                .collect();
            WeightingScheme::new(atom, pieces).unwrap()
        },
    )
}

fn path_strategy(steps: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.05..0.05f64, steps).prop_map(|moves| {
        let mut path = vec![100.0];
        for m in moves {
            let last = *path.last().unwrap();
            path.push(last * m.exp());
        }
        path
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_preserves_mass(scheme in scheme_strategy(), p in 0.05..300.0f64, n in 1usize..15) {
        let proj = project(&scheme, &LaguerreBasis::new(p, n).unwrap()).unwrap();
        prop_assert!((proj.approx_total_mass() - scheme.total_mass()).abs() < 1e-10 * scheme.total_mass().max(1.0));
        let captured: f64 = proj.survival_coeffs.iter().map(|a| a * a).sum();
        prop_assert!(captured <= scheme.survival_norm_sq() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn integrals_are_additive(p in 0.05..50.0f64, k in 0usize..20, a in 0.0..5.0f64, b in 0.0..5.0f64, c in 0.0..5.0f64) {
        let mut xs = [a, b, c];
        xs.sort_by(f64::total_cmp);
        let basis = LaguerreBasis::new(p, 1).unwrap();
        let whole = laguerre_definite_integral(&basis, k, xs[0], xs[2]);
        let parts = laguerre_definite_integral(&basis, k, xs[0], xs[1]) + laguerre_definite_integral(&basis, k, xs[1], xs[2]);
        prop_assert!((whole - parts).abs() < 1e-12 * (2.0 * p).sqrt() / p * (1.0 + k as f64));
    }

    #[test]
    fn constant_paths_are_reproduced(s in 1.0..500.0f64, window in 1usize..12, lag in 0usize..6, n in 1usize..9) {
        let grid = TimeGrid::new(0.2, 20, window, lag.min(20 - window)).unwrap();
        let scheme = if grid.lag_steps == 0 {
            WeightingScheme::uniform(grid.window()).unwrap()
        } else {
            WeightingScheme::delayed(grid.window(), grid.lag()).unwrap()
        };
        let proj = project(&scheme, &LaguerreBasis::new(3.0 / grid.window(), n).unwrap()).unwrap();
        let paths = PathSet::from_prices(Array2::from_elem((1, 21), s), None).unwrap();
        let tensor = propagate_states(&paths, &proj, &grid).unwrap();
        for v in tensor.approx_ma.iter() {
            prop_assert!((v - s).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn states_are_linear(a in path_strategy(15), b in path_strategy(15), alpha in -3.0..3.0f64, n in 1usize..8, p in 1.0..200.0f64) {
        let t = StateTransition::new(LaguerreBasis::new(p, n).unwrap(), 0.004).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let run = |path: &[f64]| {
            let mut out = vec![0.0; path.len() * n];
            t.propagate_path(path, &mut out);
            out
        };
        let (xa, xb, xm) = (run(&a), run(&b), run(&mix));
        let scale = xa.iter().chain(&xb).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..xm.len() {
            prop_assert!((xm[i] - (alpha * xa[i] + xb[i])).abs() <= 1e-12 * scale * (1.0 + alpha.abs()));
        }
    }

    #[test]
    fn window_average_matches_brute_force(path in path_strategy(30), window in 1usize..10, lag in 0usize..10) {
        let brute = mavg_testkit::window_average(&path, window, lag);
        for (i, b) in brute.iter().enumerate() {
            prop_assert!((window_average(&path, i, window, lag) - b).abs() <= 1e-13 * b);
        }
    }

    #[test]
    fn partition_is_balanced_and_consistent(
        values in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 60..400),
        b0 in 1usize..5,
        b1 in 1usize..4,
    ) {
        let n = values.len();
        let pts = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { values[i].0 } else { values[i].1 });
        let y: Vec<f64> = values.iter().map(|(u, v)| u * v + u).collect();
        let spec = RegressionSpec { cells_per_dim: vec![b0, b1], min_points_per_cell: Some(1) };
        let (reg, fitted) = fit_local_basis_in_sample(pts.view(), &y, &spec).unwrap();
        let pops = reg.populations();
        prop_assert_eq!(pops.iter().sum::<usize>(), n);
        let (lo, hi) = (pops.iter().min().unwrap(), pops.iter().max().unwrap());
        prop_assert!(hi - lo <= 2, "{:?}", pops);
        // Without ties, predicting a sample point reproduces its in-sample fit.
        let mut xs: Vec<f64> = values.iter().map(|v| v.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() == n {
            for (i, row) in pts.outer_iter().enumerate() {
                let x = [row[0], row[1]];
                prop_assert!((reg.predict(&x) - fitted[i]).abs() < 1e-9);
            }
        }
    }
}
