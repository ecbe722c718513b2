//! Least-squares Monte Carlo pricing of moving-average options.

pub mod pricing;
pub mod regression;

pub use pricing::{
    convergence_sweep, price, price_many, seed_list_hash, value_paths, CellCounts, Exercise, Method, Payoff,
    PricingConfig, PricingResult, SweepAxis, Valuation, MAX_HISTORY_DIM,
};
pub use regression::{fit_local_basis, fit_local_basis_in_sample, LocalBasisRegressor, RegressionSpec};
