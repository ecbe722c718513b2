//! Laguerre polynomials and the scaled Laguerre functions
//! `L^p_k(t) = √(2p) P_k(2pt) e^{-pt}`, an orthonormal basis of `L²[0, ∞)`.
//!
//! Polynomials are always evaluated with the upward three-term recurrence.
//! Wherever a polynomial is multiplied by its exponential weight, the weight
//! is carried through the recurrence instead (`e^{-x/2} P_k(x)` obeys the
//! same recurrence), so nothing overflows for large arguments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Scale `p > 0` and truncation order `n ≥ 1` of a Laguerre basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaguerreBasis {
    scale: f64,
    order: usize,
}

impl LaguerreBasis {
    pub fn new(scale: f64, order: usize) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return invalid(format!("Laguerre scale must be finite and > 0, got {scale}"));
        }
        if order == 0 {
            return invalid("Laguerre order must be at least 1");
        }
        Ok(Self { scale, order })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `L^p_k(0) = √(2p)` for every `k`.
    pub fn value_at_origin(&self) -> f64 {
        (2.0 * self.scale).sqrt()
    }

    /// `∫_0^∞ L^p_k = (−1)^k √(2p) / p`.
    pub fn full_integral(&self, k: usize) -> f64 {
        alternating_sign(k) * (2.0 * self.scale).sqrt() / self.scale
    }

    /// `L^p_0(t), …, L^p_{n−1}(t)`.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let root = (2.0 * self.scale).sqrt();
        weighted_laguerre_polys(self.order - 1, 2.0 * self.scale * t).into_iter().map(|v| root * v).collect()
    }

    /// `∫_a^∞ L^p_k` for every `k < order`; `a = +∞` gives zeros.
    pub fn tail_integrals(&self, a: f64) -> Vec<f64> {
        tail_integrals(self.scale, self.order, a)
    }
}

#[inline]
pub(crate) fn alternating_sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `P_k(t)` by the three-term recurrence.
pub fn laguerre_poly(k: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - t);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = ((2 * j + 1) as f64 - t) * cur - j as f64 * prev;
        prev = cur;
        cur = next / (j + 1) as f64;
    }
    cur
}

/// `P_0(t), …, P_{k_max}(t)`.
pub fn laguerre_polys(k_max: usize, t: f64) -> Vec<f64> {
    recurrence(k_max, 1.0, t)
}

/// `e^{−x/2} P_0(x), …, e^{−x/2} P_{k_max}(x)`.
pub fn weighted_laguerre_polys(k_max: usize, x: f64) -> Vec<f64> {
    recurrence(k_max, (-0.5 * x).exp(), x)
}

fn recurrence(k_max: usize, p0: f64, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(p0);
    if k_max == 0 {
        return out;
    }
    out.push((1.0 - t) * p0);
    for j in 1..k_max {
        let next = (((2 * j + 1) as f64 - t) * out[j] - j as f64 * out[j - 1]) / (j + 1) as f64;
        out.push(next);
    }
    out
}

/// `L^p_k(t) = √(2p) P_k(2pt) e^{−pt}`; `k` may exceed the basis order.
pub fn scaled_laguerre(basis: &LaguerreBasis, k: usize, t: f64) -> f64 {
    let p = basis.scale;
    (2.0 * p).sqrt() * weighted_laguerre_polys(k, 2.0 * p * t)[k]
}

/// `∫_a^∞ L^p_k(u) du` for `k < count`.
///
/// With `s = 2pu` this is `G_k(2pa) / √(2p)` where
/// `G_k(x) = ∫_x^∞ e^{−s/2} P_k(s) ds = e^{−x/2} [2 P_k(x) + 4 Σ_{j=1}^k (−1)^j P_{k−j}(x)]`.
/// The alternating tail sum is carried as `Q_k = P_k − Q_{k−1}`.
pub fn tail_integrals(scale: f64, count: usize, a: f64) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    if a == f64::INFINITY {
        return vec![0.0; count];
    }
    let x = 2.0 * scale * a;
    let weighted = weighted_laguerre_polys(count - 1, x);
    let norm = 1.0 / (2.0 * scale).sqrt();
    let mut out = Vec::with_capacity(count);
    // alt = Σ_{i<k} (−1)^{k−1−i} e^{−x/2} P_i(x)
    let mut alt = 0.0;
    for w in weighted {
        out.push(norm * (2.0 * w - 4.0 * alt));
        alt = w - alt;
    }
    out
}

/// `∫_a^b L^p_k(u) du`, `0 ≤ a ≤ b ≤ +∞`.
pub fn laguerre_definite_integral(basis: &LaguerreBasis, k: usize, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let lower = tail_integrals(basis.scale, k + 1, a)[k];
    let upper = tail_integrals(basis.scale, k + 1, b)[k];
    lower - upper
}

/// Laguerre coefficient `c^{δ,p}_k = ⟨δ^{-1} 1_{[0,δ]}, L^p_k⟩` of the uniform
/// density on a window of length `δ`, by the closed form in the values of
/// `P_j(2pδ)`.
pub fn uniform_density_coeff(basis: &LaguerreBasis, window: f64, k: usize) -> f64 {
    let p = basis.scale;
    let x = 2.0 * p * window;
    let weighted = weighted_laguerre_polys(k, x);
    let mut bracket = 1.0 - weighted[k];
    for j in 1..=k {
        bracket += 2.0 * alternating_sign(j) * (1.0 - weighted[k - j]);
    }
    (2.0 * p).sqrt() / (window * p) * bracket
}
