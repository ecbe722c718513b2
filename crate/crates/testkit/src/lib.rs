//! Independent reference computations for the test suites.
//!
//! Nothing in here calls into `mavg-core`. Every routine is a deliberately
//! naive route (explicit sums, adaptive quadrature, brute-force windows,
//! fine-step ODE integration, full tree enumeration) so that agreement with
//! the production code is meaningful.

use statrs::distribution::{ContinuousCDF, Normal};

/// Gauss–Kronrod 7/15 nodes on [-1, 1] (positive half, including 0).
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * KRONROD_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += KRONROD_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(PartialEq)]
struct Piece {
    err: f64,
    lo: f64,
    hi: f64,
    value: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]` to
/// absolute tolerance `tol`: the interval with the largest error estimate is
/// bisected until the summed estimate meets `tol`, falls to the roundoff
/// level of the result, or the interval budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 20_000;
    if a == b {
        return 0.0;
    }
    // Pre-split so that oscillatory integrands are not under-resolved by the
    // first error estimate.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut heap = std::collections::BinaryHeap::new();
    let (mut total_err, mut total_abs) = (0.0, 0.0);
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let (value, err) = gk15(&f, lo, hi);
        total_err += err;
        total_abs += value.abs();
        heap.push(Piece { err, lo, hi, value });
    }
    while heap.len() < MAX_INTERVALS && total_err > tol.max(50.0 * f64::EPSILON * total_abs) {
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.lo, mid);
        let (v2, e2) = gk15(&f, mid, worst.hi);
        total_err += e1 + e2 - worst.err;
        total_abs += v1.abs() + v2.abs() - worst.value.abs();
        heap.push(Piece { err: e1, lo: worst.lo, hi: mid, value: v1 });
        heap.push(Piece { err: e2, lo: mid, hi: worst.hi, value: v2 });
    }
    // Sum in interval order so the result does not depend on heap layout.
    let mut parts: Vec<Piece> = heap.into_vec();
    parts.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    parts.iter().map(|p| p.value).sum()
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Laguerre polynomial from its explicit binomial sum. Loses accuracy to
/// cancellation once `k` and `t` are both large (terms reach `t^k / k!`).
pub fn laguerre_explicit(k: u64, t: f64) -> f64 {
    (0..=k).map(|i| binomial(k, k - i) * (-t).powi(i as i32) / factorial(i)).sum()
}

/// Scaled Laguerre function built on the explicit sum.
pub fn scaled_laguerre_explicit(p: f64, k: u64, t: f64) -> f64 {
    (2.0 * p).sqrt() * laguerre_explicit(k, 2.0 * p * t) * (-p * t).exp()
}

/// `∫_a^b L^p_k(u) du` by quadrature.
pub fn laguerre_integral_quad(p: f64, k: u64, a: f64, b: f64) -> f64 {
    integrate(|u| scaled_laguerre_explicit(p, k, u), a, b, 1e-13)
}

/// Central finite difference.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> f64 {
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slope of the envelope of an oscillating sequence: the index range
/// is cut into `blocks` consecutive blocks and the maximum of `|y|` in each
/// block is fitted.
pub fn envelope_log_log_slope(index: &[f64], y: &[f64], blocks: usize) -> f64 {
    let len = index.len();
    let mut xs = Vec::with_capacity(blocks);
    let mut ys = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let lo = b * len / blocks;
        let hi = (b + 1) * len / blocks;
        let (arg, max) =
            (lo..hi)
                .map(|i| (i, y[i].abs()))
                .fold((lo, f64::MIN), |acc, v| if v.1 > acc.1 { v } else { acc });
        xs.push(index[arg]);
        ys.push(max);
    }
    log_log_slope(&xs, &ys)
}

/// `X^π` by a brute-force window sum: `(1/w) Σ_{j=i-lag-w+1}^{i-lag} S_j`
/// with `S_j = S_0` for `j ≤ 0`.
pub fn window_average(prices: &[f64], window: usize, lag: usize) -> Vec<f64> {
    (0..prices.len())
        .map(|i| {
            let mut sum = 0.0;
            for offset in 0..window {
                let j = i as i64 - lag as i64 - offset as i64;
                sum += if j <= 0 { prices[0] } else { prices[j as usize] };
            }
            sum / window as f64
        })
        .collect()
}

/// Laguerre states by the direct summation over price increments:
/// `X_i^k = Σ_{j=1}^i (S_j − S_{j−1}) ∫_0^{(i−j+1)Δt} L^p_k + S_0 ∫_0^∞ L^p_k`,
/// with every integral evaluated by quadrature.
pub fn laguerre_states_by_summation(p: f64, order: usize, dt: f64, prices: &[f64]) -> Vec<Vec<f64>> {
    let steps = prices.len() - 1;
    // head[k][m] = ∫_0^{m Δt} L_k
    let head: Vec<Vec<f64>> = (0..order)
        .map(|k| {
            let mut acc = vec![0.0; steps + 1];
            for m in 1..=steps {
                acc[m] = acc[m - 1] + laguerre_integral_quad(p, k as u64, (m - 1) as f64 * dt, m as f64 * dt);
            }
            acc
        })
        .collect();
    let full: Vec<f64> = (0..order).map(|k| laguerre_integral_quad(p, k as u64, 0.0, 200.0 / p)).collect();
    (0..=steps)
        .map(|i| {
            (0..order)
                .map(|k| {
                    let mut x = prices[0] * full[k];
                    for j in 1..=i {
                        x += (prices[j] - prices[j - 1]) * head[k][i - j + 1];
                    }
                    x
                })
                .collect()
        })
        .collect()
}

/// Laguerre states by explicit-midpoint integration of
/// `dX_k = (√(2p) S − p X_k − 2p Σ_{i<k} X_i) dt` with `substeps` steps per
/// interval, holding `S` at the right endpoint value on each interval.
pub fn laguerre_states_by_ode(
    p: f64,
    order: usize,
    dt: f64,
    prices: &[f64],
    substeps: usize,
) -> Vec<Vec<f64>> {
    let rhs = |x: &[f64], s: f64| -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        let mut lower = 0.0;
        for k in 0..x.len() {
            out[k] = (2.0 * p).sqrt() * s - p * x[k] - 2.0 * p * lower;
            lower += x[k];
        }
        out
    };
    let mut x: Vec<f64> =
        (0..order).map(|k| prices[0] * if k % 2 == 0 { 1.0 } else { -1.0 } * (2.0 * p).sqrt() / p).collect();
    let h = dt / substeps as f64;
    let mut out = vec![x.clone()];
    for &s in &prices[1..] {
        for _ in 0..substeps {
            let k1 = rhs(&x, s);
            let mid: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = rhs(&mid, s);
            for (a, b) in x.iter_mut().zip(&k2) {
                *a += h * b;
            }
        }
        out.push(x.clone());
    }
    out
}

/// Black–Scholes price of a European call.
pub fn black_scholes_call(s0: f64, strike: f64, rate: f64, sigma: f64, maturity: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let vol = sigma * maturity.sqrt();
    let d1 = ((s0 / strike).ln() + (rate + 0.5 * sigma * sigma) * maturity) / vol;
    let d2 = d1 - vol;
    s0 * normal.cdf(d1) - strike * (-rate * maturity).exp() * normal.cdf(d2)
}

/// Every path of a recombining-free two-point model
/// `S_{i+1} = S_i exp((r − σ²/2)Δt ± σ√Δt)`, one row per path. Bit `i` of the
/// path index (most significant first) selects the sign of step `i + 1`.
pub fn enumerate_two_point_paths(s0: f64, rate: f64, sigma: f64, dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let drift = (rate - 0.5 * sigma * sigma) * dt;
    let shock = sigma * dt.sqrt();
    (0..1usize << steps)
        .map(|code| {
            let mut path = Vec::with_capacity(steps + 1);
            path.push(s0);
            for i in 0..steps {
                let up = (code >> (steps - 1 - i)) & 1 == 1;
                let prev = path[i];
                path.push(prev * (drift + if up { shock } else { -shock }).exp());
            }
            path
        })
        .collect()
}

/// Exact Bermudan value of the moving-average call `(S − X)^+` on the
/// two-point tree, by dynamic programming over every path prefix. Exercise
/// is allowed at steps `window + lag ..= steps`; cashflows are discounted at
/// `rate`.
pub fn two_point_bermudan_value(
    s0: f64,
    rate: f64,
    sigma: f64,
    dt: f64,
    steps: usize,
    window: usize,
    lag: usize,
) -> f64 {
    fn value(
        prefix: &mut Vec<f64>,
        steps: usize,
        window: usize,
        lag: usize,
        drift: f64,
        shock: f64,
        discount: f64,
    ) -> f64 {
        let i = prefix.len() - 1;
        let avg = {
            let mut sum = 0.0;
            for offset in 0..window {
                let j = i as i64 - lag as i64 - offset as i64;
                sum += if j <= 0 { prefix[0] } else { prefix[j as usize] };
            }
            sum / window as f64
        };
        let exercise = if i >= window + lag { (prefix[i] - avg).max(0.0) } else { 0.0 };
        if i == steps {
            return exercise;
        }
        let last = prefix[i];
        let mut cont = 0.0;
        for sign in [1.0, -1.0] {
            prefix.push(last * (drift + sign * shock).exp());
            cont += 0.5 * value(prefix, steps, window, lag, drift, shock, discount);
            prefix.pop();
        }
        exercise.max(discount * cont)
    }
    let mut prefix = vec![s0];
    value(
        &mut prefix,
        steps,
        window,
        lag,
        (rate - 0.5 * sigma * sigma) * dt,
        sigma * dt.sqrt(),
        (-rate * dt).exp(),
    )
}
