//! Longstaff–Schwartz backward induction for the four state choices.

use std::time::Instant;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::regression::{fit_local_basis_in_sample, RegressionSpec};
use crate::error::{invalid, Error, Result};
use crate::laguerre::LaguerreBasis;
use crate::market::{simulate_paths, window_average, GbmModel, PathSet, TimeGrid};
use crate::markovize::{approx_average, CheckpointedStates, StateTransition};
use crate::weighting::{optimize_scale, project, LaguerreProjection, WeightingScheme};

/// Largest history dimension accepted by [`Method::MLs`].
pub const MAX_HISTORY_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Laguerre states; payoffs use the approximate moving average.
    LagLs,
    /// Laguerre states; payoffs use the exact moving average.
    LagLsStar,
    /// Regression on the price and the exact moving average only.
    NmLs,
    /// Regression on the full price history of the window.
    MLs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LagLs, Method::LagLsStar, Method::NmLs, Method::MLs];

    pub fn label(&self) -> &'static str {
        match self {
            Method::LagLs => "lag-ls",
            Method::LagLsStar => "lag-ls-star",
            Method::NmLs => "nm-ls",
            Method::MLs => "m-ls",
        }
    }

    pub fn uses_laguerre(&self) -> bool {
        matches!(self, Method::LagLs | Method::LagLsStar)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    /// `(s − x)⁺`.
    MovingAverageCall,
    /// `(s − K)⁺`, ignoring the average.
    FixedStrikeCall { strike: f64 },
}

impl Payoff {
    #[inline]
    pub fn value(&self, spot: f64, average: f64) -> f64 {
        match *self {
            Payoff::MovingAverageCall => (spot - average).max(0.0),
            Payoff::FixedStrikeCall { strike } => (spot - strike).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exercise {
    /// Every date from `N_δ + N_lag` to `N`.
    Bermudan,
    /// Maturity only.
    European,
}

/// Cells along the spot direction and along every other state direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub spot: usize,
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub model: GbmModel,
    pub grid: TimeGrid,
    pub payoff: Payoff,
    pub method: Method,
    /// Number of Laguerre functions; ignored by `NmLs` and `MLs`.
    pub order: usize,
    pub cells: CellCounts,
    #[serde(default)]
    pub min_points_per_cell: Option<usize>,
    pub paths: usize,
    pub seeds: Vec<u64>,
    pub exercise: Exercise,
    /// Laguerre scale; optimised for the weighting scheme when absent.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl PricingConfig {
    /// Dimension of the regression state.
    pub fn state_dim(&self) -> usize {
        match self.method {
            Method::LagLs | Method::LagLsStar => self.order + 1,
            Method::NmLs => 2,
            Method::MLs => self.history_dim(),
        }
    }

    fn history_dim(&self) -> usize {
        self.grid.window_steps + self.grid.lag_steps
    }

    pub fn regression_spec(&self) -> RegressionSpec {
        let mut cells = vec![self.cells.spot];
        cells.extend(std::iter::repeat(self.cells.state).take(self.state_dim() - 1));
        RegressionSpec { cells_per_dim: cells, min_points_per_cell: self.min_points_per_cell }
    }

    pub fn weighting_scheme(&self) -> Result<WeightingScheme> {
        if self.grid.lag_steps == 0 {
            WeightingScheme::uniform(self.grid.window())
        } else {
            WeightingScheme::delayed(self.grid.window(), self.grid.lag())
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        if self.paths == 0 {
            return invalid("path count M must be at least 1");
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        if self.cells.spot == 0 || self.cells.state == 0 {
            return invalid("cell counts must be at least 1");
        }
        if let Payoff::FixedStrikeCall { strike } = self.payoff {
            if !strike.is_finite() {
                return invalid("strike must be finite");
            }
        }
        if let Some(p) = self.scale {
            if !(p.is_finite() && p > 0.0) {
                return invalid(format!("Laguerre scale must be > 0, got {p}"));
            }
        }
        if self.method.uses_laguerre() {
            let limit = self.history_dim() - 1;
            if self.order == 0 || self.order > limit {
                let rule = if self.grid.lag_steps == 0 {
                    "n <= N_delta - 1".to_string()
                } else {
                    "n <= N_delta + N_lag - 1".to_string()
                };
                return invalid(format!(
                    "Laguerre order n = {} violates 1 <= {rule} (N_delta = {}, N_lag = {})",
                    self.order, self.grid.window_steps, self.grid.lag_steps
                ));
            }
        }
        if self.method == Method::MLs && self.history_dim() > MAX_HISTORY_DIM {
            return Err(Error::Capacity(format!(
                "m-ls needs a {}-dimensional price history; at most {MAX_HISTORY_DIM} is supported",
                self.history_dim()
            )));
        }
        if self.exercise == Exercise::Bermudan {
            self.regression_spec().validate(self.paths)?;
        }
        Ok(())
    }

    /// Short hash of the full configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        short_hash(&json)
    }

    pub fn seed_list_hash(&self) -> String {
        seed_list_hash(&self.seeds)
    }

    /// Projection of the option's weighting scheme, at the configured scale
    /// or at the optimal one.
    pub fn projection(&self) -> Result<LaguerreProjection> {
        let scheme = self.weighting_scheme()?;
        let scale = match self.scale {
            Some(p) => p,
            None => optimize_scale(&scheme, self.order)?,
        };
        project(&scheme, &LaguerreBasis::new(scale, self.order)?)
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn seed_list_hash(seeds: &[u64]) -> String {
    let text: Vec<String> = seeds.iter().map(u64::to_string).collect();
    short_hash(text.join(",").as_bytes())
}

/// Outcome of one valuation on one path set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub price: f64,
    /// Standard error of the path average.
    pub std_error: f64,
    pub mean_exercise_step: f64,
    pub degenerate_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub method: Method,
    pub order: usize,
    /// Mean of the per-valuation prices.
    pub price: f64,
    /// `√(Σ se_v²) / V`, the standard error of `price`.
    pub mc_std_error: f64,
    /// Sample standard deviation of the per-valuation prices over their mean.
    pub rel_std: f64,
    pub n_valuations: usize,
    pub per_valuation_prices: Vec<f64>,
    pub per_valuation_std_errors: Vec<f64>,
    pub mean_exercise_step: f64,
    pub runtime_seconds: f64,
    pub degenerate_cells: usize,
    /// Laguerre scale used, for the Laguerre methods.
    pub scale: Option<f64>,
    pub fingerprint: String,
    pub seed_list_hash: String,
}

impl PricingResult {
    fn aggregate(cfg: &PricingConfig, scale: Option<f64>, vals: &[Valuation], runtime: f64) -> Self {
        let v = vals.len() as f64;
        let prices: Vec<f64> = vals.iter().map(|x| x.price).collect();
        let ses: Vec<f64> = vals.iter().map(|x| x.std_error).collect();
        let price = prices.iter().sum::<f64>() / v;
        let mc_std_error = ses.iter().map(|s| s * s).sum::<f64>().sqrt() / v;
        let rel_std = if vals.len() > 1 && price != 0.0 {
            let var = prices.iter().map(|p| (p - price).powi(2)).sum::<f64>() / (v - 1.0);
            var.sqrt() / price.abs()
        } else {
            0.0
        };
        Self {
            method: cfg.method,
            order: cfg.order,
            price,
            mc_std_error,
            rel_std,
            n_valuations: vals.len(),
            per_valuation_prices: prices,
            per_valuation_std_errors: ses,
            mean_exercise_step: vals.iter().map(|x| x.mean_exercise_step).sum::<f64>() / v,
            runtime_seconds: runtime,
            degenerate_cells: vals.iter().map(|x| x.degenerate_cells).sum(),
            scale,
            fingerprint: cfg.fingerprint(),
            seed_list_hash: cfg.seed_list_hash(),
        }
    }
}

/// Runs one valuation per seed and aggregates.
pub fn price(cfg: &PricingConfig) -> Result<PricingResult> {
    price_many(std::slice::from_ref(cfg)).map(|mut v| v.remove(0))
}

/// Prices several configurations that share model, maturity, step count,
/// path count and seeds. Each seed's paths are simulated once and reused by
/// every configuration, so differences between the results carry little
/// Monte Carlo noise.
pub fn price_many(configs: &[PricingConfig]) -> Result<Vec<PricingResult>> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    for cfg in configs {
        cfg.validate()?;
        let same = cfg.model == first.model
            && cfg.grid.maturity == first.grid.maturity
            && cfg.grid.steps == first.grid.steps
            && cfg.paths == first.paths
            && cfg.seeds == first.seeds;
        if !same {
            return invalid(
                "configurations priced together must share model, maturity, steps, paths and seeds",
            );
        }
    }
    let projections: Vec<Option<LaguerreProjection>> = configs
        .iter()
        .map(|c| if c.method.uses_laguerre() { c.projection().map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;

    let mut valuations: Vec<Vec<Valuation>> = vec![Vec::new(); configs.len()];
    let mut runtimes = vec![0.0; configs.len()];
    for &seed in &first.seeds {
        let clock = Instant::now();
        let paths = simulate_paths(&first.model, &first.grid, first.paths, seed)?;
        let sim_time = clock.elapsed().as_secs_f64();
        for (k, cfg) in configs.iter().enumerate() {
            let clock = Instant::now();
            let val = value_paths(cfg, &paths, projections[k].as_ref())?;
            log::debug!(
                "{} n={} seed={seed}: {:.6} ± {:.6}, {} degenerate cells",
                cfg.method,
                cfg.order,
                val.price,
                val.std_error,
                val.degenerate_cells
            );
            runtimes[k] += sim_time + clock.elapsed().as_secs_f64();
            valuations[k].push(val);
        }
    }
    Ok(configs
        .iter()
        .zip(&projections)
        .zip(valuations.iter().zip(&runtimes))
        .map(|((cfg, proj), (vals, &rt))| {
            PricingResult::aggregate(cfg, proj.as_ref().map(|p| p.basis.scale()), vals, rt)
        })
        .collect())
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Order,
    Window,
    Lag,
}

/// Prices `base` at every value along `axis`, all on the same seeds.
pub fn convergence_sweep(
    base: &PricingConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<PricingResult>> {
    let configs: Vec<PricingConfig> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Order => cfg.order = v,
                SweepAxis::Window => cfg.grid.window_steps = v,
                SweepAxis::Lag => cfg.grid.lag_steps = v,
            }
            cfg
        })
        .collect();
    price_many(&configs)
}

/// Backward induction on a given path set.
///
/// `projection` is required by the Laguerre methods and ignored otherwise.
/// Cashflows are discounted to time 0; at date `i` the regression response is
/// the realised cashflow discounted to `t_i`. A path is exercised when the
/// payoff is positive and at least the fitted continuation value.
pub fn value_paths(
    cfg: &PricingConfig,
    paths: &PathSet,
    projection: Option<&LaguerreProjection>,
) -> Result<Valuation> {
    cfg.validate()?;
    let grid = &cfg.grid;
    if paths.n_steps() != grid.steps {
        return Err(Error::DimensionMismatch(format!(
            "paths have {} steps, grid has {}",
            paths.n_steps(),
            grid.steps
        )));
    }
    let n_paths = paths.n_paths();
    let spec = cfg.regression_spec();
    if cfg.exercise == Exercise::Bermudan {
        spec.validate(n_paths)?;
    }
    let mut states = match (cfg.method.uses_laguerre(), projection) {
        (false, _) => None,
        (true, None) => return invalid("Laguerre methods need a projection"),
        (true, Some(proj)) => {
            if proj.basis.order() != cfg.order {
                return Err(Error::DimensionMismatch(format!(
                    "projection has order {}, config has {}",
                    proj.basis.order(),
                    cfg.order
                )));
            }
            let transition = StateTransition::new(proj.basis, grid.dt())?;
            Some(CheckpointedStates::new(transition, paths))
        }
    };

    let last = grid.steps;
    let discount: Vec<f64> = (0..=last).map(|i| (-cfg.model.rate * grid.time(i)).exp()).collect();
    let prices = paths.prices();
    let dim = cfg.state_dim();
    let history = cfg.history_dim();

    // Payoff of every path at `date`, optionally with its regression state.
    let evaluate = |date: usize,
                    states: Option<&CheckpointedStates<'_>>,
                    payoffs: &mut [f64],
                    points: Option<&mut [f64]>| {
        let fill = |m: usize, pay: &mut f64, point: Option<&mut [f64]>| {
            let row = prices.row(m);
            let path = row.as_slice().expect("rows are contiguous");
            let spot = path[date];
            let exact = || window_average(path, date, grid.window_steps, grid.lag_steps);
            let lag_states = states.map(|s| s.get(m, date));
            let average = match (cfg.method, lag_states, projection) {
                (Method::LagLs, Some(x), Some(proj)) => approx_average(proj, spot, x),
                _ => exact(),
            };
            *pay = cfg.payoff.value(spot, average);
            if let Some(point) = point {
                point[0] = spot;
                match cfg.method {
                    Method::LagLs | Method::LagLsStar => {
                        point[1..].copy_from_slice(lag_states.expect("states are loaded"))
                    }
                    Method::NmLs => point[1] = exact(),
                    Method::MLs => {
                        for (j, v) in point.iter_mut().enumerate().take(history) {
                            *v = path[date - j];
                        }
                    }
                }
            }
        };
        match points {
            Some(points) => payoffs
                .par_iter_mut()
                .zip(points.par_chunks_mut(dim))
                .enumerate()
                .for_each(|(m, (pay, point))| fill(m, pay, Some(point))),
            None => payoffs.par_iter_mut().enumerate().for_each(|(m, pay)| fill(m, pay, None)),
        }
    };

    let mut payoffs = vec![0.0; n_paths];
    if let Some(s) = states.as_mut() {
        s.seek(last);
    }
    evaluate(last, states.as_ref(), &mut payoffs, None);
    let mut cash: Vec<f64> = payoffs.iter().map(|v| v * discount[last]).collect();
    let mut tau = vec![last as u32; n_paths];
    let mut degenerate = 0;

    if cfg.exercise == Exercise::Bermudan {
        let mut points = vec![0.0; n_paths * dim];
        let mut responses = vec![0.0; n_paths];
        for date in (grid.first_exercise()..last).rev() {
            if let Some(s) = states.as_mut() {
                s.seek(date);
            }
            evaluate(date, states.as_ref(), &mut payoffs, Some(&mut points));
            let to_date = 1.0 / discount[date];
            responses.par_iter_mut().zip(&cash).for_each(|(r, c)| *r = c * to_date);
            let view = ArrayView2::from_shape((n_paths, dim), &points).expect("shape matches buffer");
            let (regressor, fitted) = fit_local_basis_in_sample(view, &responses, &spec)?;
            degenerate += regressor.degenerate_cells();
            let d = discount[date];
            cash.par_iter_mut().zip(tau.par_iter_mut()).zip(payoffs.par_iter().zip(&fitted)).for_each(
                |((c, t), (&pay, &cont))| {
                    if pay > 0.0 && pay >= cont {
                        *c = pay * d;
                        *t = date as u32;
                    }
                },
            );
        }
    }

    let m = n_paths as f64;
    let price = cash.iter().sum::<f64>() / m;
    let std_error = if n_paths > 1 {
        let var = cash.iter().map(|c| (c - price).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    let mean_exercise_step = tau.iter().map(|&t| t as f64).sum::<f64>() / m;
    Ok(Valuation { price, std_error, mean_exercise_step, degenerate_cells: degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(method: Method) -> PricingConfig {
        PricingConfig {
            model: GbmModel { s0: 100.0, rate: 0.05, volatility: 0.3 },
            grid: TimeGrid { maturity: 0.2, steps: 50, window_steps: 5, lag_steps: 0 },
            payoff: Payoff::MovingAverageCall,
            method,
            order: 3,
            cells: CellCounts { spot: 2, state: 2 },
            min_points_per_cell: None,
            paths: 4000,
            seeds: vec![1],
            exercise: Exercise::Bermudan,
            scale: None,
        }
    }

    #[test]
    fn order_constraint_is_reported() {
        let mut cfg = base(Method::LagLsStar);
        cfg.order = 9;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("n <= N_delta - 1"), "{msg}");
    }

    #[test]
    fn long_history_exceeds_capacity() {
        let mut cfg = base(Method::MLs);
        cfg.grid.window_steps = 9;
        assert!(matches!(cfg.validate(), Err(Error::Capacity(_))));
    }

    #[test]
    fn too_few_paths_for_cells() {
        let mut cfg = base(Method::MLs);
        cfg.paths = 100;
        assert!(matches!(cfg.validate(), Err(Error::InsufficientPaths { .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.label()));
        }
    }

    #[test]
    fn all_methods_price_close_on_small_sample() {
        let prices: Vec<f64> = [Method::LagLsStar, Method::NmLs, Method::MLs]
            .into_iter()
            .map(|m| price(&base(m)).unwrap().price)
            .collect();
        for p in &prices {
            assert!((p - 3.53).abs() < 0.3, "{prices:?}");
        }
    }
}
