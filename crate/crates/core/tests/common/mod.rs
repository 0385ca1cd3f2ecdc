//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

// 15-point Kronrod nodes on [0, 1] half-interval with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over the consecutive intervals
/// defined by `breaks`, refined until each piece's error estimate is below
/// `rel_tol` times the running total.
pub fn integrate(f: &dyn Fn(f64) -> f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut stack: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut total: f64 = stack.iter().map(|s| s.2).sum();
    let mut done = 0.0;
    let mut guard = 0usize;
    while let Some((a, b, v, e)) = stack.pop() {
        guard += 1;
        assert!(guard < 2_000_000, "quadrature did not converge");
        if e <= rel_tol * total.abs().max(f64::MIN_POSITIVE) || b - a < 1e-15 * (1.0 + a.abs()) {
            done += v;
            continue;
        }
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        total += v1 + v2 - v;
        stack.push((a, m, v1, e1));
        stack.push((m, b, v2, e2));
    }
    done
}

/// Regularized incomplete beta `I_x(a, b)` by direct quadrature of the
/// Beta density, with the normalizer integrated over `[0, 1]` rather than
/// taken from a closed form. The smaller side of `x` is integrated so tail
/// values keep relative accuracy.
pub fn reg_inc_beta_quadrature(x: f64, a: f64, b: f64) -> f64 {
    assert!(a >= 1.0 && b >= 1.0 && (0.0..=1.0).contains(&x));
    let mode = if a + b > 2.0 { (a - 1.0) / (a + b - 2.0) } else { 0.5 };
    let log_peak = log_kernel(mode, a, b);
    let f = move |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            let edge = if t <= 0.0 { a == 1.0 } else { b == 1.0 };
            return if edge { (log_kernel(t.clamp(0.0, 1.0), a, b) - log_peak).exp() } else { 0.0 };
        }
        (log_kernel(t, a, b) - log_peak).exp()
    };
    // Break points that resolve the peak: mode, mode +- geometric multiples
    // of the standard deviation, and x itself.
    let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
    let mut breaks = vec![0.0, 1.0, mode, x];
    let mut w = sd / 4.0;
    while w < 1.0 {
        breaks.push(mode - w);
        breaks.push(mode + w);
        w *= 2.0;
    }
    breaks.retain(|t| (0.0..=1.0).contains(t));
    breaks.sort_by(|p, q| p.total_cmp(q));
    breaks.dedup();
    let split = breaks.iter().position(|&t| t == x).unwrap();
    let lower = integrate(&f, &breaks[..=split], 1e-13);
    let upper = integrate(&f, &breaks[split..], 1e-13);
    let total = lower + upper;
    if x <= mode {
        lower / total
    } else {
        1.0 - upper / total
    }
}

fn log_kernel(t: f64, a: f64, b: f64) -> f64 {
    let l = |c: f64, v: f64| if c == 0.0 { 0.0 } else { c * v.ln() };
    l(a - 1.0, t) + l(b - 1.0, 1.0 - t)
}

/// `num / den` for big integers, accurate to double precision.
pub fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let s = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if s >= 0 {
        (num << s as u64) / den
    } else {
        num / (den << (-s) as u64)
    };
    q.to_f64().unwrap() * 2f64.powi(-(s as i32))
}

/// `Pr(Binomial(n, 1/users) <= nu)` in exact integer arithmetic:
/// `sum_k C(n, k) (users-1)^(n-k) / users^n`.
pub fn binomial_cdf_exact(n: u64, users: u64, nu: u64) -> f64 {
    let q = BigUint::from(users - 1);
    let mut num = BigUint::zero();
    let mut choose = BigUint::one();
    for k in 0..=nu.min(n) {
        if k > 0 {
            choose = choose * BigUint::from(n - k + 1) / BigUint::from(k);
        }
        num += &choose * q.pow((n - k) as u32);
    }
    big_ratio(&num, &BigUint::from(users).pow(n as u32))
}

/// Erlang CDF by quadrature of the density `x^(s-1) e^(-x) / (s-1)!`.
pub fn erlang_cdf_quadrature(x: f64, shape: u32) -> f64 {
    let s = shape as f64;
    let ln_fact: f64 = (1..shape).map(|k| (k as f64).ln()).sum();
    let f = move |t: f64| {
        if t <= 0.0 {
            return if shape == 1 { 1.0 } else { 0.0 };
        }
        ((s - 1.0) * t.ln() - t - ln_fact).exp()
    };
    integrate(&f, &[0.0, x], 1e-14)
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}
