//! Discrete Black–Scholes asset paths and exact discrete moving averages.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Risk-neutral geometric Brownian motion `dS = S (r dt + σ dW)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub s0: f64,
    pub rate: f64,
    pub volatility: f64,
}

impl GbmModel {
    pub fn new(s0: f64, rate: f64, volatility: f64) -> Result<Self> {
        let model = Self { s0, rate, volatility };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return invalid(format!("s0 must be finite and > 0, got {}", self.s0));
        }
        if !self.rate.is_finite() {
            return invalid("rate must be finite");
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return invalid(format!("volatility must be finite and >= 0, got {}", self.volatility));
        }
        Ok(())
    }
}

/// Equidistant exercise grid. The averaging window and the lag are whole
/// numbers of steps, so `δ = window_steps · Δt` and `l = lag_steps · Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub maturity: f64,
    pub steps: usize,
    pub window_steps: usize,
    pub lag_steps: usize,
}

impl TimeGrid {
    pub fn new(maturity: f64, steps: usize, window_steps: usize, lag_steps: usize) -> Result<Self> {
        let grid = Self { maturity, steps, window_steps, lag_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.maturity();
        if !(t.is_finite() && t > 0.0) {
            return invalid(format!("maturity must be > 0, got {t}"));
        }
        if self.steps == 0 {
            return invalid("grid needs at least one step");
        }
        if self.window_steps == 0 {
            return invalid("averaging window must contain at least one step (N_delta >= 1)");
        }
        if self.window_steps + self.lag_steps > self.steps {
            return invalid(format!(
                "window plus lag ({} + {}) exceeds the number of steps {}",
                self.window_steps, self.lag_steps, self.steps
            ));
        }
        Ok(())
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn dt(&self) -> f64 {
        self.maturity() / self.steps as f64
    }

    /// `δ`.
    pub fn window(&self) -> f64 {
        self.window_steps as f64 * self.dt()
    }

    /// `l`.
    pub fn lag(&self) -> f64 {
        self.lag_steps as f64 * self.dt()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    /// First date on which the (lagged) window is fully inside `[0, T]`.
    pub fn first_exercise(&self) -> usize {
        self.window_steps + self.lag_steps
    }
}

/// Simulated prices, one row per path and one column per date.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    prices: Array2<f64>,
    seed: Option<u64>,
}

impl PathSet {
    /// Wraps externally generated paths. Column 0 must hold the same initial
    /// price on every row and all prices must be positive.
    pub fn from_prices(prices: Array2<f64>, seed: Option<u64>) -> Result<Self> {
        if prices.nrows() == 0 || prices.ncols() < 2 {
            return invalid("a path set needs at least one path and one step");
        }
        let s0 = prices[[0, 0]];
        if prices.column(0).iter().any(|&v| v != s0) {
            return invalid("all paths must start from the same price");
        }
        if prices.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return invalid("prices must be finite and positive");
        }
        Ok(Self { prices, seed })
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn path(&self, m: usize) -> ArrayView1<'_, f64> {
        self.prices.row(m)
    }

    pub fn n_paths(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.prices.ncols() - 1
    }

    pub fn s0(&self) -> f64 {
        self.prices[[0, 0]]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Exact log-normal stepping `S_{i+1} = S_i exp((r − σ²/2)Δt + σ√Δt Z)`.
///
/// Path `m` draws its normals from ChaCha8 stream `m` of `seed`, one draw per
/// step in order, so the result does not depend on the thread count.
pub fn simulate_paths(model: &GbmModel, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathSet> {
    model.validate()?;
    grid.validate()?;
    if n_paths == 0 {
        return invalid("path count must be at least 1");
    }
    let cols = grid.steps + 1;
    let dt = grid.dt();
    let drift = (model.rate - 0.5 * model.volatility * model.volatility) * dt;
    let shock = model.volatility * dt.sqrt();
    let mut data = vec![0.0; n_paths * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(m, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(m as u64);
        let mut log_s = model.s0.ln();
        row[0] = model.s0;
        for value in row.iter_mut().skip(1) {
            let z: f64 = rng.sample(StandardNormal);
            log_s += drift + shock * z;
            *value = log_s.exp();
        }
    });
    let prices = Array2::from_shape_vec((n_paths, cols), data).expect("shape matches buffer");
    Ok(PathSet { prices, seed: Some(seed) })
}

/// `X^π_{t_i} = (1/N_δ) Σ_{j=i−N_lag−N_δ+1}^{i−N_lag} S_j`, with `S_j = S_0`
/// for `j ≤ 0`.
#[inline]
pub fn window_average(path: &[f64], step: usize, window: usize, lag: usize) -> f64 {
    let s0 = path[0];
    let end = step as isize - lag as isize;
    let begin = end - window as isize + 1;
    let mut sum = 0.0;
    for j in begin..=end {
        sum += if j <= 0 { s0 } else { path[j as usize] };
    }
    sum / window as f64
}

/// Exact discrete moving average on every path and date.
pub fn exact_moving_average(paths: &PathSet, grid: &TimeGrid) -> Result<Array2<f64>> {
    if paths.n_steps() != grid.steps {
        return Err(crate::Error::DimensionMismatch(format!(
            "paths have {} steps, grid has {}",
            paths.n_steps(),
            grid.steps
        )));
    }
    let (rows, cols) = paths.prices.dim();
    let mut out = Array2::zeros((rows, cols));
    for (src, mut dst) in paths.prices.outer_iter().zip(out.outer_iter_mut()) {
        let path = src.as_slice().expect("rows are contiguous");
        for (i, v) in dst.iter_mut().enumerate() {
            *v = window_average(path, i, grid.window_steps, grid.lag_steps);
        }
    }
    Ok(out)
}
