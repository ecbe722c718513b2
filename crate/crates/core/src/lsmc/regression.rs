//! Adaptive local-basis regression.
//!
//! The sample is cut recursively at empirical quantiles: the first coordinate
//! into `b_0` equally populated groups, each group along the second
//! coordinate into `b_1` groups, and so on. Every terminal cell carries its
//! own ordinary least-squares affine fit. Prediction evaluates the fit of the
//! cell containing the point.

use std::cmp::Ordering;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Cells per coordinate, outermost split first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub cells_per_dim: Vec<usize>,
    /// Defaults to `2 (d + 1)`.
    #[serde(default)]
    pub min_points_per_cell: Option<usize>,
}

impl RegressionSpec {
    pub fn new(cells_per_dim: Vec<usize>) -> Self {
        Self { cells_per_dim, min_points_per_cell: None }
    }

    pub fn dims(&self) -> usize {
        self.cells_per_dim.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn min_points(&self) -> usize {
        self.min_points_per_cell.unwrap_or(2 * (self.dims() + 1))
    }

    /// Checks the cell counts against a sample of `n_points`.
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.cells_per_dim.is_empty() {
            return invalid("regression needs at least one coordinate");
        }
        if self.cells_per_dim.iter().any(|&b| b == 0) {
            return invalid("every coordinate needs at least one cell");
        }
        let required = self.min_points().saturating_mul(self.n_cells());
        if n_points < required {
            return Err(Error::InsufficientPaths { required, available: n_points });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CellFit {
    intercept: f64,
    slopes: Vec<f64>,
    population: usize,
    degenerate: bool,
}

impl CellFit {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasisRegressor {
    cells_per_dim: Vec<usize>,
    /// `levels[l]` holds `b_l − 1` breakpoints for each node at depth `l`,
    /// nodes in mixed-radix order of their ancestors' groups.
    levels: Vec<Vec<f64>>,
    cells: Vec<CellFit>,
}

impl LocalBasisRegressor {
    pub fn dims(&self) -> usize {
        self.cells_per_dim.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cells whose design was rank-deficient and lost coordinates.
    pub fn degenerate_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.degenerate).count()
    }

    pub fn populations(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.population).collect()
    }

    /// Terminal cell of `x`; a value equal to a breakpoint belongs to the
    /// upper group.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut node = 0;
        for (l, &b) in self.cells_per_dim.iter().enumerate() {
            let cuts = &self.levels[l][node * (b - 1)..(node + 1) * (b - 1)];
            let group = cuts.partition_point(|&c| c <= x[l]);
            node = node * b + group;
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.cells[self.cell_of(x)].eval(x)
    }
}

/// Fits the regressor; rows of `points` are samples.
pub fn fit_local_basis(
    points: ArrayView2<'_, f64>,
    responses: &[f64],
    spec: &RegressionSpec,
) -> Result<LocalBasisRegressor> {
    fit_local_basis_in_sample(points, responses, spec).map(|(reg, _)| reg)
}

/// Fits the regressor and also returns each sample's prediction from the
/// cell it was assigned to during partitioning (ties at breakpoints are split
/// by sample index, so this can differ from [`LocalBasisRegressor::predict`]
/// on exact ties).
pub fn fit_local_basis_in_sample(
    points: ArrayView2<'_, f64>,
    responses: &[f64],
    spec: &RegressionSpec,
) -> Result<(LocalBasisRegressor, Vec<f64>)> {
    let (n, d) = points.dim();
    if responses.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} points but {} responses", responses.len())));
    }
    if spec.dims() != d {
        return Err(Error::DimensionMismatch(format!(
            "points have {d} coordinates, spec has {}",
            spec.dims()
        )));
    }
    spec.validate(n)?;
    let points = points.as_standard_layout();
    let data = points.as_slice().expect("standard layout");

    // Partition: after level l, `bounds` delimits the nodes of depth l + 1
    // inside `order`.
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut bounds = vec![0, n];
    let mut levels = Vec::with_capacity(d);
    let mut keyed: Vec<(f64, u32)> = Vec::new();
    for (l, &b) in spec.cells_per_dim.iter().enumerate() {
        let mut next_bounds = Vec::with_capacity((bounds.len() - 1) * b + 1);
        let mut cuts = Vec::with_capacity((bounds.len() - 1) * (b - 1));
        next_bounds.push(0);
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let len = hi - lo;
            let splits: Vec<usize> = (1..b).map(|j| j * len / b).collect();
            if !splits.is_empty() {
                keyed.clear();
                keyed.extend(order[lo..hi].iter().map(|&i| (data[i as usize * d + l], i)));
                multi_select(&mut keyed, &splits, &|a: &(f64, u32), c: &(f64, u32)| {
                    a.0.total_cmp(&c.0).then(a.1.cmp(&c.1))
                });
                for (dst, src) in order[lo..hi].iter_mut().zip(&keyed) {
                    *dst = src.1;
                }
            }
            for &s in &splits {
                cuts.push(if s < len { keyed[s].0 } else { f64::INFINITY });
                next_bounds.push(lo + s);
            }
            next_bounds.push(hi);
        }
        levels.push(cuts);
        bounds = next_bounds;
    }

    let n_cells = bounds.len() - 1;
    let mut cell_of = vec![0u32; n];
    for (c, w) in bounds.windows(2).enumerate() {
        for &i in &order[w[0]..w[1]] {
            cell_of[i as usize] = c as u32;
        }
    }
    drop(order);
    let cells = cell_moments(data, d, responses, &cell_of, n_cells)
        .into_iter()
        .map(|m| m.solve())
        .collect::<Vec<_>>();

    let mut fitted = vec![0.0; n];
    fitted.par_chunks_mut(CHUNK).zip(data.par_chunks(CHUNK * d)).zip(cell_of.par_chunks(CHUNK)).for_each(
        |((out, rows), cell)| {
            for ((f, row), &c) in out.iter_mut().zip(rows.chunks_exact(d)).zip(cell) {
                *f = cells[c as usize].eval(row);
            }
        },
    );
    let regressor = LocalBasisRegressor { cells_per_dim: spec.cells_per_dim.clone(), levels, cells };
    Ok((regressor, fitted))
}

/// Points per work unit. Fixed, so partial sums are combined in the same
/// order whatever the thread count.
const CHUNK: usize = 1 << 15;

/// Centred first and second moments of one cell.
struct Moments {
    d: usize,
    count: usize,
    mean_x: Vec<f64>,
    mean_y: f64,
    /// Lower triangle, row-major `d × d`.
    sxx: Vec<f64>,
    sxy: Vec<f64>,
}

/// Two sequential passes over the sample: means, then centred cross sums.
fn cell_moments(data: &[f64], d: usize, responses: &[f64], cell_of: &[u32], n_cells: usize) -> Vec<Moments> {
    let chunks =
        || data.par_chunks(CHUNK * d).zip(responses.par_chunks(CHUNK)).zip(cell_of.par_chunks(CHUNK));

    let firsts: Vec<(Vec<usize>, Vec<f64>)> = chunks()
        .map(|((rows, ys), cells)| {
            let mut count = vec![0usize; n_cells];
            // Per cell: d coordinate sums then the response sum.
            let mut sums = vec![0.0; n_cells * (d + 1)];
            for ((row, &y), &c) in rows.chunks_exact(d).zip(ys).zip(cells) {
                let c = c as usize;
                count[c] += 1;
                let acc = &mut sums[c * (d + 1)..(c + 1) * (d + 1)];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
                acc[d] += y;
            }
            (count, sums)
        })
        .collect();
    let mut count = vec![0usize; n_cells];
    let mut sums = vec![0.0; n_cells * (d + 1)];
    for (c, s) in &firsts {
        count.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let means: Vec<f64> = sums
        .chunks_exact(d + 1)
        .zip(&count)
        .flat_map(|(s, &k)| {
            let inv = if k > 0 { 1.0 / k as f64 } else { 0.0 };
            s.iter().map(move |v| v * inv)
        })
        .collect();

    let width = d * d + d;
    let seconds: Vec<Vec<f64>> = chunks()
        .map(|((rows, ys), cells)| {
            let mut acc = vec![0.0; n_cells * width];
            let mut centred = vec![0.0; d];
            for ((row, &y), &c) in rows.chunks_exact(d).zip(ys).zip(cells) {
                let c = c as usize;
                let mean = &means[c * (d + 1)..(c + 1) * (d + 1)];
                for k in 0..d {
                    centred[k] = row[k] - mean[k];
                }
                let dy = y - mean[d];
                let out = &mut acc[c * width..(c + 1) * width];
                for a in 0..d {
                    let ca = centred[a];
                    for b in 0..=a {
                        out[a * d + b] += ca * centred[b];
                    }
                    out[d * d + a] += ca * dy;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n_cells * width];
    for s in &seconds {
        total.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }

    (0..n_cells)
        .map(|c| {
            let mean = &means[c * (d + 1)..(c + 1) * (d + 1)];
            let block = &total[c * width..(c + 1) * width];
            Moments {
                d,
                count: count[c],
                mean_x: mean[..d].to_vec(),
                mean_y: mean[d],
                sxx: block[..d * d].to_vec(),
                sxy: block[d * d..].to_vec(),
            }
        })
        .collect()
}

/// Rearranges `slice` so that each position in `splits` (ascending) holds
/// the element of that rank and everything left of it compares lower.
fn multi_select<T, F>(slice: &mut [T], splits: &[usize], key: &F)
where
    F: Fn(&T, &T) -> Ordering,
{
    if splits.is_empty() || slice.is_empty() {
        return;
    }
    let mid = splits.len() / 2;
    let s = splits[mid];
    if s >= slice.len() {
        multi_select(slice, &splits[..mid], key);
        return;
    }
    slice.select_nth_unstable_by(s, key);
    let (left, right) = slice.split_at_mut(s);
    multi_select(left, &splits[..mid], key);
    let shifted: Vec<usize> = splits[mid + 1..].iter().filter(|&&x| x > s).map(|&x| x - s - 1).collect();
    multi_select(&mut right[1..], &shifted, key);
}

/// Pivot threshold, relative to a unit-diagonal correlation matrix.
const COLLINEAR_TOL: f64 = 1e-10;

impl Moments {
    /// Affine least squares from the cell's moments.
    ///
    /// Coordinates are centred and scaled to unit variance. A coordinate
    /// with no spread, or whose Cholesky pivot falls below [`COLLINEAR_TOL`]
    /// given the coordinates kept before it, is dropped (slope 0). With
    /// every coordinate dropped the fit is the cell mean.
    fn solve(self) -> CellFit {
        let Moments { d, count, mean_x, mean_y, sxx, sxy } = self;
        if count == 0 {
            return CellFit { intercept: 0.0, slopes: vec![0.0; d], population: 0, degenerate: true };
        }
        let scale: Vec<f64> = (0..d)
            .map(|a| {
                let var = sxx[a * d + a];
                let sd = var.sqrt();
                // Spread below roundoff of the coordinate's magnitude is noise.
                if sd > 1e-12 * mean_x[a].abs() * (count as f64).sqrt() && sd > 0.0 {
                    sd
                } else {
                    0.0
                }
            })
            .collect();

        // Sequential Cholesky of the correlation matrix over kept coordinates.
        let mut kept: Vec<usize> = Vec::with_capacity(d);
        let mut chol: Vec<Vec<f64>> = Vec::with_capacity(d);
        let corr = |a: usize, b: usize| {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            sxx[hi * d + lo] / (scale[a] * scale[b])
        };
        for a in 0..d {
            if scale[a] == 0.0 {
                continue;
            }
            let mut row = Vec::with_capacity(kept.len() + 1);
            for (r, &b) in kept.iter().enumerate() {
                let dot: f64 = row.iter().zip(&chol[r]).map(|(x, y)| x * y).sum();
                row.push((corr(a, b) - dot) / chol[r][r]);
            }
            let pivot = 1.0 - row.iter().map(|x| x * x).sum::<f64>();
            if pivot > COLLINEAR_TOL {
                row.push(pivot.sqrt());
                kept.push(a);
                chol.push(row);
            }
        }
        let degenerate = kept.len() < d;

        // Solve (L Lᵀ) β' = r with r_a = sxy_a / scale_a.
        let k = kept.len();
        let mut z = vec![0.0; k];
        for r in 0..k {
            let rhs = sxy[kept[r]] / scale[kept[r]];
            let dot: f64 = (0..r).map(|c| chol[r][c] * z[c]).sum();
            z[r] = (rhs - dot) / chol[r][r];
        }
        let mut beta = vec![0.0; k];
        for r in (0..k).rev() {
            let dot: f64 = (r + 1..k).map(|c| chol[c][r] * beta[c]).sum();
            beta[r] = (z[r] - dot) / chol[r][r];
        }

        let mut slopes = vec![0.0; d];
        for (r, &a) in kept.iter().enumerate() {
            slopes[a] = beta[r] / scale[a];
        }
        let intercept = mean_y - slopes.iter().zip(&mean_x).map(|(b, m)| b * m).sum::<f64>();
        CellFit { intercept, slopes, population: count, degenerate }
    }
}
