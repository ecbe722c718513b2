//! Laguerre state processes `X^{p,k}_t = ∫_0^∞ L^p_k(v) S_{t−v} dv` along
//! discrete paths, and the approximate moving average built from them.
//!
//! The states solve `dX = (√(2p) S 1 − A_p X) dt` with `A_p` lower triangular
//! (`p` on the diagonal, `2p` below). With the price held at `S_{i+1}` on
//! `(t_i, t_{i+1}]` the step is exact:
//! `X_{i+1} = E X_i + (I − E) v S_{i+1}`, `E = exp(−A_p Δt)`,
//! `v_k = (−1)^k √(2p)/p`.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laguerre::{alternating_sign, weighted_laguerre_polys, LaguerreBasis};
use crate::market::{PathSet, TimeGrid};
use crate::weighting::LaguerreProjection;

/// One-step propagator of the Laguerre states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    basis: LaguerreBasis,
    dt: f64,
    /// `E` is lower-triangular Toeplitz; entry `(k, j)` is `band[k − j]`.
    band: Vec<f64>,
    input: Vec<f64>,
    stationary: Vec<f64>,
}

impl StateTransition {
    /// `E = e^{−pΔt} exp(−2pΔt L)` with `L` the strictly-lower all-ones matrix.
    /// Its band follows from the Laguerre generating function:
    /// `e_0 = e^{−pΔt}`, `e_d = e^{−pΔt} (P_d(2pΔt) − P_{d−1}(2pΔt))`.
    pub fn new(basis: LaguerreBasis, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be > 0, got {dt}")));
        }
        let (p, n) = (basis.scale(), basis.order());
        let weighted = weighted_laguerre_polys(n, 2.0 * p * dt);
        let band: Vec<f64> =
            (0..n).map(|d| if d == 0 { weighted[0] } else { weighted[d] - weighted[d - 1] }).collect();
        let stationary: Vec<f64> = (0..n).map(|k| basis.full_integral(k)).collect();
        let input = (0..n)
            .map(|k| {
                let e_v: f64 = (0..=k).map(|j| band[k - j] * stationary[j]).sum();
                stationary[k] - e_v
            })
            .collect();
        Ok(Self { basis, dt, band, input, stationary })
    }

    pub fn basis(&self) -> &LaguerreBasis {
        &self.basis
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Dense `E`.
    pub fn matrix(&self) -> Array2<f64> {
        let n = self.band.len();
        Array2::from_shape_fn((n, n), |(k, j)| if j <= k { self.band[k - j] } else { 0.0 })
    }

    /// `w = (I − E) v`.
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// `v`, the state of a constant unit price.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Initial state `S_0 v`.
    pub fn initial(&self, s0: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.stationary) {
            *o = s0 * v;
        }
    }

    /// `next = E prev + w price`.
    #[inline]
    pub fn step(&self, prev: &[f64], price: f64, next: &mut [f64]) {
        let n = self.band.len();
        for k in 0..n {
            let mut acc = self.input[k] * price;
            for j in 0..=k {
                acc += self.band[k - j] * prev[j];
            }
            next[k] = acc;
        }
    }

    /// Writes the states of one path, `(N + 1) × n` row-major, into `out`.
    pub fn propagate_path(&self, path: &[f64], out: &mut [f64]) {
        let n = self.band.len();
        self.initial(path[0], &mut out[..n]);
        for i in 1..path.len() {
            let (done, rest) = out.split_at_mut(i * n);
            self.step(&done[(i - 1) * n..], path[i], &mut rest[..n]);
        }
    }
}

/// States and approximate moving average on every path and date.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    /// `paths × (N + 1) × n`.
    pub states: Array3<f64>,
    /// `paths × (N + 1)`.
    pub approx_ma: Array2<f64>,
    pub projection: LaguerreProjection,
}

/// Propagates the Laguerre states of `projection.basis` along every path and
/// fills in the approximate moving average.
pub fn propagate_states(
    paths: &PathSet,
    projection: &LaguerreProjection,
    grid: &TimeGrid,
) -> Result<StateTensor> {
    if paths.n_steps() != grid.steps {
        return Err(Error::DimensionMismatch(format!(
            "paths have {} steps, grid has {}",
            paths.n_steps(),
            grid.steps
        )));
    }
    let transition = StateTransition::new(projection.basis, grid.dt())?;
    let n = projection.basis.order();
    let cols = grid.steps + 1;
    let mut data = vec![0.0; paths.n_paths() * cols * n];
    data.par_chunks_mut(cols * n).enumerate().for_each(|(m, chunk)| {
        let row = paths.path(m);
        transition.propagate_path(row.as_slice().expect("rows are contiguous"), chunk);
    });
    let states = Array3::from_shape_vec((paths.n_paths(), cols, n), data).expect("shape matches buffer");
    let approx_ma = assemble_approx_ma(&states, paths, projection)?;
    Ok(StateTensor { states, approx_ma, projection: projection.clone() })
}

/// `M^{n,p,π}_{t_i} = K_n S_{t_i} + Σ_k a_k X^{p,k,π}_{t_i}`.
#[inline]
pub fn approx_average(projection: &LaguerreProjection, price: f64, states: &[f64]) -> f64 {
    projection.correction * price
        + projection.approx_density_coeffs.iter().zip(states).map(|(a, x)| a * x).sum::<f64>()
}

pub fn assemble_approx_ma(
    states: &Array3<f64>,
    paths: &PathSet,
    projection: &LaguerreProjection,
) -> Result<Array2<f64>> {
    let (rows, cols, n) = states.dim();
    if rows != paths.n_paths() || cols != paths.n_steps() + 1 || n != projection.basis.order() {
        return Err(Error::DimensionMismatch(format!(
            "state tensor {rows}×{cols}×{n} does not match {} paths × {} dates × order {}",
            paths.n_paths(),
            paths.n_steps() + 1,
            projection.basis.order()
        )));
    }
    Ok(Array2::from_shape_fn((rows, cols), |(m, i)| {
        let x = states.slice(ndarray::s![m, i, ..]);
        approx_average(projection, paths.prices()[[m, i]], x.as_slice().expect("contiguous"))
    }))
}

/// Backward access to the states of many paths without holding all dates.
///
/// The forward pass keeps the states at every `stride`-th date; a block of
/// `stride` dates is recomputed from its checkpoint when first requested.
/// Memory is `O(paths · n · (N / stride + stride))`.
pub(crate) struct CheckpointedStates<'a> {
    transition: StateTransition,
    paths: &'a PathSet,
    order: usize,
    stride: usize,
    n_checkpoints: usize,
    /// `paths × n_checkpoints × n`.
    checkpoints: Vec<f64>,
    block_index: Option<usize>,
    /// `paths × stride × n`.
    block: Vec<f64>,
}

impl<'a> CheckpointedStates<'a> {
    pub(crate) fn new(transition: StateTransition, paths: &'a PathSet) -> Self {
        let dates = paths.n_steps() + 1;
        let stride = ((dates as f64).sqrt().ceil() as usize).max(1);
        let n_checkpoints = dates.div_ceil(stride);
        let order = transition.basis().order();
        let mut checkpoints = vec![0.0; paths.n_paths() * n_checkpoints * order];
        checkpoints.par_chunks_mut(n_checkpoints * order).enumerate().for_each(|(m, saved)| {
            let row = paths.path(m);
            let path = row.as_slice().expect("rows are contiguous");
            let mut cur = vec![0.0; order];
            let mut next = vec![0.0; order];
            transition.initial(path[0], &mut cur);
            saved[..order].copy_from_slice(&cur);
            for i in 1..dates {
                transition.step(&cur, path[i], &mut next);
                std::mem::swap(&mut cur, &mut next);
                if i % stride == 0 {
                    let c = i / stride;
                    saved[c * order..(c + 1) * order].copy_from_slice(&cur);
                }
            }
        });
        Self {
            transition,
            paths,
            order,
            stride,
            n_checkpoints,
            checkpoints,
            block_index: None,
            block: vec![0.0; paths.n_paths() * stride * order],
        }
    }

    fn load(&mut self, b: usize) {
        let (order, stride, n_cp) = (self.order, self.stride, self.n_checkpoints);
        let dates = self.paths.n_steps() + 1;
        let start = b * stride;
        let end = (start + stride).min(dates);
        let transition = &self.transition;
        let checkpoints = &self.checkpoints;
        let paths = self.paths;
        self.block.par_chunks_mut(stride * order).enumerate().for_each(|(m, out)| {
            let row = paths.path(m);
            let path = row.as_slice().expect("rows are contiguous");
            let base = m * n_cp * order + b * order;
            out[..order].copy_from_slice(&checkpoints[base..base + order]);
            for i in start + 1..end {
                let local = i - start;
                let (done, rest) = out.split_at_mut(local * order);
                transition.step(&done[(local - 1) * order..], path[i], &mut rest[..order]);
            }
        });
        self.block_index = Some(b);
    }

    /// Makes `date` addressable through [`Self::get`].
    pub(crate) fn seek(&mut self, date: usize) {
        let b = date / self.stride;
        if self.block_index != Some(b) {
            self.load(b);
        }
    }

    /// States of path `m` at `date`; `seek(date)` must have been called.
    #[inline]
    pub(crate) fn get(&self, m: usize, date: usize) -> &[f64] {
        debug_assert_eq!(self.block_index, Some(date / self.stride));
        let local = date % self.stride;
        let base = (m * self.stride + local) * self.order;
        &self.block[base..base + self.order]
    }
}

/// `v_k = (−1)^k √(2p)/p` scaled by `s0`.
pub fn initial_states(basis: &LaguerreBasis, s0: f64) -> Vec<f64> {
    let root = (2.0 * basis.scale()).sqrt();
    (0..basis.order()).map(|k| s0 * alternating_sign(k) * root / basis.scale()).collect()
}
