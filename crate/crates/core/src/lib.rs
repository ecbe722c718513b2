//! Pricing of American and Bermudan options on moving averages.
//!
//! The moving average `X_t = ∫ S_{t−u} μ(du)` is not Markovian. Projecting the
//! survival function of `μ` on `n` scaled Laguerre functions turns it into
//! `K_n S_t + Σ_k a_k X^{p,k}_t`, where the states `X^{p,k}` together with `S`
//! form an `(n + 1)`-dimensional Markov process. The optimal stopping problem
//! in that state is then solved by least-squares Monte Carlo with a local
//! affine regression on a quantile partition.
//!
//! * [`laguerre`]: polynomials, scaled functions, integrals.
//! * [`weighting`]: weighting measures, their projection, the optimal scale.
//! * [`market`]: Black–Scholes paths and exact discrete averages.
//! * [`markovize`]: Laguerre state propagation.
//! * [`lsmc`]: regression and backward induction.

pub mod error;
pub mod laguerre;
pub mod lsmc;
pub mod market;
pub mod markovize;
pub mod weighting;

pub use error::{Error, Result};
pub use laguerre::LaguerreBasis;
pub use lsmc::{
    convergence_sweep, price, price_many, CellCounts, Exercise, Method, Payoff, PricingConfig, PricingResult,
    RegressionSpec, SweepAxis,
};
pub use market::{simulate_paths, GbmModel, PathSet, TimeGrid};
pub use markovize::{propagate_states, StateTensor, StateTransition};
pub use weighting::{optimize_scale, project, LaguerreProjection, WeightingScheme};
