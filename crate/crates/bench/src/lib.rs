//! Fixtures shared by the benchmarks in `benches/`.

use mavg_core::lsmc::{CellCounts, Exercise, Method, Payoff, PricingConfig};
use mavg_core::market::{GbmModel, TimeGrid};
use ndarray::Array2;

/// Deterministic low-discrepancy points in `[0, 1)^d`.
pub fn sample_points(rows: usize, dims: usize) -> Array2<f64> {
    const STEPS: [f64; 8] =
        [0.618_034, 0.754_878, 0.569_840, 0.671_044, 0.535_687, 0.612_488, 0.703_511, 0.541_325];
    Array2::from_shape_fn((rows, dims), |(i, j)| (0.5 + i as f64 * STEPS[j % 8]).fract())
}

/// The reference contract (`T = 0.2`, `N = 50`, `N_δ = 10`) at a small path count.
pub fn reference_config(method: Method, order: usize, paths: usize) -> PricingConfig {
    PricingConfig {
        model: GbmModel { s0: 100.0, rate: 0.05, volatility: 0.3 },
        grid: TimeGrid { maturity: 0.2, steps: 50, window_steps: 10, lag_steps: 0 },
        payoff: Payoff::MovingAverageCall,
        method,
        order,
        cells: CellCounts { spot: 4, state: 1 },
        min_points_per_cell: None,
        paths,
        seeds: vec![1],
        exercise: Exercise::Bermudan,
        scale: None,
    }
}
