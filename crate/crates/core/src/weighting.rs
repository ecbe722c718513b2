//! Weighting measures of a moving average and their Laguerre projections.
//!
//! A moving average is `M_t = K_0 S_t + ∫_0^∞ S_{t−u} h(u) du`. The measure
//! `K_0 δ_0 + h(u) du` is represented by a point mass at zero plus a
//! piecewise-constant density. Its survival function `H(x) = μ([x, ∞))` is
//! the object projected onto the Laguerre basis.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::laguerre::{tail_integrals, LaguerreBasis};

/// Constant density `height` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub start: f64,
    pub end: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingScheme {
    point_mass_at_zero: f64,
    pieces: Vec<DensityPiece>,
}

impl WeightingScheme {
    /// Pieces must be finite, non-negative, ordered and disjoint.
    pub fn new(point_mass_at_zero: f64, pieces: Vec<DensityPiece>) -> Result<Self> {
        if !(point_mass_at_zero.is_finite() && point_mass_at_zero >= 0.0) {
            return invalid(format!("point mass must be finite and >= 0, got {point_mass_at_zero}"));
        }
        let mut last_end = 0.0;
        for piece in &pieces {
            if !(piece.start.is_finite() && piece.end.is_finite() && piece.height.is_finite()) {
                return invalid("density pieces must be finite");
            }
            if piece.start < last_end || piece.end <= piece.start {
                return invalid(format!(
                    "density pieces must be ordered, disjoint and non-empty: [{}, {})",
                    piece.start, piece.end
                ));
            }
            if piece.height < 0.0 {
                return invalid("density heights must be non-negative");
            }
            last_end = piece.end;
        }
        let scheme = Self { point_mass_at_zero, pieces };
        if scheme.total_mass() <= 0.0 {
            return invalid("weighting measure has zero mass");
        }
        Ok(scheme)
    }

    /// Uniform weights `1/δ` on `[0, δ)`.
    pub fn uniform(window: f64) -> Result<Self> {
        Self::delayed(window, 0.0)
    }

    /// Uniform weights `1/δ` on `[lag, lag + δ)`.
    pub fn delayed(window: f64, lag: f64) -> Result<Self> {
        if !(window.is_finite() && window > 0.0) {
            return invalid(format!("averaging window must be > 0, got {window}"));
        }
        if !(lag.is_finite() && lag >= 0.0) {
            return invalid(format!("lag must be >= 0, got {lag}"));
        }
        Self::new(0.0, vec![DensityPiece { start: lag, end: lag + window, height: 1.0 / window }])
    }

    pub fn point_mass_at_zero(&self) -> f64 {
        self.point_mass_at_zero
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    /// Mass of the density part, i.e. `H(0+)`.
    pub fn density_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.height * (p.end - p.start)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.point_mass_at_zero + self.density_mass()
    }

    /// Right end of the support; sets the natural scale for `p`.
    pub fn support_end(&self) -> f64 {
        self.pieces.last().map_or(1.0, |p| p.end)
    }

    /// `H(x) = μ([x, ∞))`; the point mass counts only at `x = 0`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.total_mass();
        }
        self.density_tail(x)
    }

    fn density_tail(&self, x: f64) -> f64 {
        self.pieces.iter().map(|p| p.height * (p.end - p.start.max(x)).max(0.0)).sum()
    }

    /// `‖H‖₂²`, exact: `H` is linear between piece endpoints.
    pub fn survival_norm_sq(&self) -> f64 {
        let mut knots: Vec<f64> =
            std::iter::once(0.0).chain(self.pieces.iter().flat_map(|p| [p.start, p.end])).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        knots
            .windows(2)
            .map(|w| {
                let (h1, h2) = (self.density_tail(w[0]), self.density_tail(w[1]));
                (w[1] - w[0]) * (h1 * h1 + h1 * h2 + h2 * h2) / 3.0
            })
            .sum()
    }
}

/// `H(x)` for the scheme.
pub fn survival_function(scheme: &WeightingScheme, x: f64) -> f64 {
    scheme.survival(x)
}

/// Truncated Laguerre expansion of a weighting measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaguerreProjection {
    pub basis: LaguerreBasis,
    /// `A_k = ⟨H, L^p_k⟩`.
    pub survival_coeffs: Vec<f64>,
    /// `c_k = ⟨h, L^p_k⟩`.
    pub density_coeffs: Vec<f64>,
    /// `a_k`, coefficients of `h^p_n = −(H^p_n)'`.
    pub approx_density_coeffs: Vec<f64>,
    /// Point mass at zero of the approximating measure, `H(0) − H^p_n(0)`.
    pub correction: f64,
    /// `‖H − H^p_n‖₂`.
    pub l2_error: f64,
    /// `‖H‖₂`.
    pub survival_norm: f64,
}

impl LaguerreProjection {
    /// `H^p_n(x) = Σ A_k L^p_k(x)`.
    pub fn approx_survival(&self, x: f64) -> f64 {
        self.basis.eval_all(x).iter().zip(&self.survival_coeffs).map(|(l, a)| l * a).sum()
    }

    /// Total mass of `correction · δ_0 + h^p_n(u) du`.
    pub fn approx_total_mass(&self) -> f64 {
        self.correction
            + self
                .approx_density_coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * self.basis.full_integral(k))
                .sum::<f64>()
    }

    pub fn relative_error(&self) -> f64 {
        self.l2_error / self.survival_norm
    }
}

/// Density coefficients `c_k`, exact per piece.
fn density_coeffs(scheme: &WeightingScheme, scale: f64, order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order];
    for piece in &scheme.pieces {
        let lower = tail_integrals(scale, order, piece.start);
        let upper = tail_integrals(scale, order, piece.end);
        for k in 0..order {
            c[k] += piece.height * (lower[k] - upper[k]);
        }
    }
    c
}

/// `A_k` from `c_k = √(2p) H(0+) − 2p Σ_{i<k} A_i − p A_k`.
fn survival_coeffs(scheme: &WeightingScheme, scale: f64, density: &[f64]) -> Vec<f64> {
    let head = (2.0 * scale).sqrt() * scheme.density_mass();
    let mut prefix = 0.0;
    density
        .iter()
        .map(|c| {
            let a = (head - c - 2.0 * scale * prefix) / scale;
            prefix += a;
            a
        })
        .collect()
}

/// Projects the survival function of `scheme` onto `basis`.
pub fn project(scheme: &WeightingScheme, basis: &LaguerreBasis) -> Result<LaguerreProjection> {
    let (p, n) = (basis.scale(), basis.order());
    if n < 1 {
        return invalid("projection order must be at least 1");
    }
    let density = density_coeffs(scheme, p, n);
    let survival = survival_coeffs(scheme, p, &density);

    let mut approx = vec![0.0; n];
    let mut suffix = 0.0;
    for k in (0..n).rev() {
        approx[k] = p * survival[k] + 2.0 * p * suffix;
        suffix += survival[k];
    }
    let approx_at_origin = basis.value_at_origin() * suffix;

    let norm_sq = scheme.survival_norm_sq();
    let captured: f64 = survival.iter().map(|a| a * a).sum();
    Ok(LaguerreProjection {
        basis: *basis,
        survival_coeffs: survival,
        density_coeffs: density,
        approx_density_coeffs: approx,
        correction: scheme.total_mass() - approx_at_origin,
        l2_error: (norm_sq - captured).max(0.0).sqrt(),
        survival_norm: norm_sq.sqrt(),
    })
}

/// `‖H − H^p_n‖₂²` as a function of `p`.
fn squared_error(scheme: &WeightingScheme, norm_sq: f64, scale: f64, order: usize) -> f64 {
    let density = density_coeffs(scheme, scale, order);
    let survival = survival_coeffs(scheme, scale, &density);
    norm_sq - survival.iter().map(|a| a * a).sum::<f64>()
}

/// Search settings for [`optimize_scale_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSearch {
    pub starts: usize,
    pub tolerance: f64,
}

impl Default for ScaleSearch {
    fn default() -> Self {
        Self { starts: 16, tolerance: 1e-4 }
    }
}

/// Scale `p` minimising `‖H − H^p_n‖₂`.
pub fn optimize_scale(scheme: &WeightingScheme, order: usize) -> Result<f64> {
    optimize_scale_with(scheme, order, ScaleSearch::default())
}

/// The objective is multimodal in `p`, so golden-section search runs inside
/// the bracket around every point of a log-spaced grid over
/// `[0.01/ℓ, 40·max(1, n/10)/ℓ]`, `ℓ` being the support end. The best local
/// minimum wins; ties within 1e−12 go to the smaller scale.
pub fn optimize_scale_with(scheme: &WeightingScheme, order: usize, search: ScaleSearch) -> Result<f64> {
    if order < 1 {
        return invalid("projection order must be at least 1");
    }
    if search.starts < 3 {
        return invalid("scale search needs at least 3 starts");
    }
    let length = scheme.support_end();
    let lo = 0.01 / length;
    let hi = 40.0 * (order as f64 / 10.0).max(1.0) / length;
    let norm_sq = scheme.survival_norm_sq();
    let objective = |p: f64| squared_error(scheme, norm_sq, p, order);

    let ratio = (hi / lo).ln() / (search.starts - 1) as f64;
    let grid: Vec<f64> = (0..search.starts).map(|i| lo * (ratio * i as f64).exp()).collect();
    for &p in &grid {
        if !objective(p).is_finite() {
            return Err(Error::NonFiniteObjective { scale: p });
        }
    }

    let mut best: Option<(f64, f64)> = None;
    for i in 0..grid.len() {
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        let p = golden_section(&objective, a, b, search.tolerance);
        let value = objective(p);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { scale: p });
        }
        best = match best {
            None => Some((p, value)),
            Some((bp, bv)) => {
                if value < bv - 1e-12 || ((value - bv).abs() <= 1e-12 && p < bp) {
                    Some((p, value))
                } else {
                    Some((bp, bv))
                }
            }
        };
    }
    Ok(best.expect("grid is non-empty").0)
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // The bracket endpoints can beat the interior on a monotone stretch.
    [a, 0.5 * (a + b), b].into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap()
}
