//! Closed-form probability and rate machinery.
//!
//! Everything here is a pure function of its arguments: the exponential and
//! Erlang CDFs that govern own-cell gain and inter-cell leakage, the binomial
//! CDF that gives the decoding probability on the discrete rate ladder, the
//! threshold relation that pins the per-user access probability to `p`, and
//! the asymptotic throughput bound with its user-scaling requirement.
//!
//! All channel gains are unit-mean exponentials (`|h|^2` with `h ~ CN(0, 1)`).
//! With a single cell there is no leakage, so its CDF is identically one.

use std::f64::consts::{LN_2, E};

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.1;

/// Relative tolerance used when checking the threshold relation
/// `e^{-phi_g} F_I(phi_i) = 1/N`.
pub const THRESHOLD_RELATION_TOL: f64 = 1e-9;

/// Network shape and operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Number of cells (one AP each), `K`.
    pub cells: usize,
    /// Users per cell, `N`.
    pub users: usize,
    /// Linear transmit SNR, `P_TX / N_0`.
    pub snr: f64,
    /// Per-slot transmission probability. Defaults to `1/N`.
    pub tx_prob: f64,
}

impl NetworkConfig {
    pub fn new(cells: usize, users: usize, snr: f64) -> Result<Self> {
        if cells == 0 {
            return Err(domain("NetworkConfig", "K must be at least 1"));
        }
        if users == 0 {
            return Err(domain("NetworkConfig", "N must be at least 1"));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(domain("NetworkConfig", format!("snr must be positive and finite, got {snr}")));
        }
        Ok(Self {
            cells,
            users,
            snr,
            tx_prob: 1.0 / users as f64,
        })
    }

    pub fn from_db(cells: usize, users: usize, snr_db: f64) -> Result<Self> {
        Self::new(cells, users, db_to_linear(snr_db))
    }

    pub fn with_tx_prob(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain("NetworkConfig", format!("p must lie in (0, 1], got {p}")));
        }
        self.tx_prob = p;
        Ok(self)
    }

    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr)
    }

    /// Noise power relative to transmit power, `snr^-1`.
    pub fn noise(&self) -> f64 {
        1.0 / self.snr
    }

    /// Number of potential other-cell interferers, `(K-1) N`.
    pub fn max_interferers(&self) -> u64 {
        ((self.cells - 1) * self.users) as u64
    }

    /// Shape of the Erlang law of one user's leakage sum.
    pub fn leakage_shape(&self) -> u32 {
        (self.cells - 1) as u32
    }
}

/// Thresholds, common rate and design constants of one IA-ORA instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Own-cell gain threshold, `Phi_G`.
    pub phi_g: f64,
    /// Leakage threshold, `Phi_I`. May be `+inf` (no leakage constraint).
    pub phi_i: f64,
    /// Common PHY rate in bits/s/Hz.
    pub rate: f64,
    /// Tolerable number of interferers indexing the rate ladder.
    pub nu: u64,
    pub epsilon: f64,
    pub delta: f64,
}

impl ProtocolParams {
    pub fn new(
        cfg: &NetworkConfig,
        phi_g: f64,
        phi_i: f64,
        rate: f64,
        nu: u64,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(phi_g >= 0.0) {
            return Err(domain("ProtocolParams", format!("phi_g must be nonnegative, got {phi_g}")));
        }
        if !(phi_i >= 0.0) {
            return Err(domain("ProtocolParams", format!("phi_i must be nonnegative, got {phi_i}")));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(domain("ProtocolParams", format!("rate must be nonnegative, got {rate}")));
        }
        if nu > cfg.max_interferers() {
            return Err(domain(
                "ProtocolParams",
                format!("nu = {nu} exceeds (K-1)N = {}", cfg.max_interferers()),
            ));
        }
        check_open_unit("ProtocolParams", "epsilon", epsilon)?;
        check_open_unit("ProtocolParams", "delta", delta)?;
        Ok(Self {
            phi_g,
            phi_i,
            rate,
            nu,
            epsilon,
            delta,
        })
    }

    /// Parameters of the scaling analysis: `Phi_I = snr^-1`, `Phi_G` from the
    /// threshold relation, `nu = nu*(K, N, epsilon)` and the ladder rate.
    pub fn theorem(cfg: &NetworkConfig, epsilon: f64, delta: f64) -> Result<Self> {
        check_open_unit("ProtocolParams::theorem", "delta", delta)?;
        let nu = select_nu_star(cfg.cells, cfg.users, epsilon)?;
        Self::from_leakage_threshold(cfg, cfg.noise(), nu, epsilon, delta)
    }

    pub fn from_leakage_threshold(
        cfg: &NetworkConfig,
        phi_i: f64,
        nu: u64,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        let phi_g = threshold_relation(phi_i, cfg)?;
        let rate = select_rate(phi_g, phi_i, cfg.snr, nu)?;
        Self::new(cfg, phi_g, phi_i, rate, nu, epsilon, delta)
    }

    /// Parameters for a searched `(Phi_G, R)` pair. `Phi_I` follows from the
    /// threshold relation so that `p = 1/N` is kept; `nu` is the ladder rung
    /// containing `R` (0 when `R` sits above the ladder).
    pub fn from_gain_threshold(cfg: &NetworkConfig, phi_g: f64, rate: f64) -> Result<Self> {
        let phi_i = leakage_threshold(phi_g, cfg)?;
        let nu = ladder_index(phi_g, phi_i, cfg.snr, rate, cfg.max_interferers()).unwrap_or(0);
        Self::new(cfg, phi_g, phi_i, rate, nu, DEFAULT_EPSILON, DEFAULT_DELTA)
    }
}

fn check_open_unit(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(domain(op, format!("{name} must lie in (0, 1), got {v}")))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// CDF of a unit-mean exponential, `1 - e^{-x}`.
pub fn exp_cdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain("exp_cdf", format!("x must be nonnegative, got {x}")));
    }
    Ok(-(-x).exp_m1())
}

/// Inverse of [`exp_cdf`], `ln(1 / (1 - u))`.
pub fn exp_cdf_inv(u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(domain("exp_cdf_inv", format!("u must lie in [0, 1), got {u}")));
    }
    Ok(-(-u).ln_1p())
}

/// CDF of the sum of `shape` i.i.d. unit-mean exponentials.
///
/// `shape = 0` is the empty sum, which is always zero and therefore below any
/// threshold: the CDF is the constant 1.
pub fn erlang_cdf(x: f64, shape: u32) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain("erlang_cdf", format!("x must be nonnegative, got {x}")));
    }
    Ok(erlang_cdf_unchecked(x, shape))
}

fn erlang_cdf_unchecked(x: f64, shape: u32) -> f64 {
    if shape == 0 || x == f64::INFINITY {
        return 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    let s = shape as f64;
    let v = if x < s + 1.0 {
        // Lower-tail series e^{-x} x^s / s! * sum_k x^k / ((s+1)...(s+k)).
        let lead = (s * x.ln() - x - ln_gamma(s + 1.0)).exp();
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= x / (s + k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        lead * sum
    } else {
        let lx = x.ln();
        let upper: f64 = (0..shape)
            .map(|m| {
                let m = m as f64;
                (m * lx - x - ln_gamma(m + 1.0)).exp()
            })
            .sum();
        1.0 - upper
    };
    v.clamp(0.0, 1.0)
}

/// Inverse of [`erlang_cdf`] for `shape >= 1`. Returns `+inf` at `u = 1`.
pub fn erlang_cdf_inv(u: f64, shape: u32) -> Result<f64> {
    if shape == 0 {
        return Err(domain("erlang_cdf_inv", "shape must be at least 1"));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(domain("erlang_cdf_inv", format!("u must lie in [0, 1], got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    if u == 1.0 {
        return Ok(f64::INFINITY);
    }
    if shape == 1 {
        return exp_cdf_inv(u);
    }
    let mut lo = 0.0;
    let mut hi = shape as f64;
    while erlang_cdf_unchecked(hi, shape) < u {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if erlang_cdf_unchecked(mid, shape) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// The constant `c1 = e^{-1} 2^{-(K-1)} / ((K-1) Gamma(K-1))` of the
/// polynomial lower bound on the leakage CDF. Requires `cells >= 2`.
pub fn leakage_bound_constant(cells: usize) -> Result<f64> {
    if cells < 2 {
        return Err(domain("leakage_bound_constant", "K must be at least 2"));
    }
    let m = (cells - 1) as f64;
    // (K-1) Gamma(K-1) = Gamma(K)
    Ok((-1.0 - m * LN_2 - ln_gamma(m + 1.0)).exp())
}

/// Polynomial lower bound `c1 x^{K-1}` on the leakage CDF, valid on `[0, 2)`.
pub fn erlang_cdf_lower_bound(x: f64, cells: usize) -> Result<f64> {
    if !(0.0..2.0).contains(&x) {
        return Err(domain(
            "erlang_cdf_lower_bound",
            format!("x must lie in [0, 2), got {x}"),
        ));
    }
    let c1 = leakage_bound_constant(cells)?;
    Ok(c1 * x.powi((cells - 1) as i32))
}

/// Leakage CDF `F_I` for the given network (identically 1 when `K = 1`).
pub fn leakage_cdf(phi_i: f64, cfg: &NetworkConfig) -> Result<f64> {
    erlang_cdf(phi_i, cfg.leakage_shape())
}

/// Running CDF of `Binomial(n, p)` accumulated in log space.
///
/// Yields `Pr(X <= 0), Pr(X <= 1), ..., Pr(X <= n)` for `0 < p < 1`,
/// accumulating in log space. The log pmf starts at `n ln(1 - p)` and steps
/// by `ln((n - i) / (i + 1)) + ln(p / (1 - p))`, which avoids the cancellation
/// of differencing large log-gamma values.
struct BinomialCdf {
    n: u64,
    next: u64,
    ln_odds: f64,
    ln_term: f64,
    log_acc: f64,
}

impl BinomialCdf {
    fn new(n: u64, p: f64) -> Self {
        let ln_q = (-p).ln_1p();
        Self {
            n,
            next: 0,
            ln_odds: p.ln() - ln_q,
            ln_term: n as f64 * ln_q,
            log_acc: f64::NEG_INFINITY,
        }
    }
}

impl Iterator for BinomialCdf {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.next > self.n {
            return None;
        }
        self.log_acc = log_add_exp(self.log_acc, self.ln_term);
        let i = self.next as f64;
        self.ln_term += ((self.n as f64 - i) / (i + 1.0)).ln() + self.ln_odds;
        self.next += 1;
        if self.next > self.n {
            return Some(1.0);
        }
        Some(self.log_acc.exp().min(1.0))
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Lower bound on the decoding probability on ladder rung `nu`:
/// `Pr(Binomial((K-1)N, 1/N) <= nu)`, equivalently
/// `I_{1-1/N}((K-1)N - nu, nu + 1)`.
pub fn decode_prob_tilde(cells: usize, users: usize, nu: u64) -> Result<f64> {
    if cells == 0 || users == 0 {
        return Err(domain("decode_prob_tilde", "K and N must be at least 1"));
    }
    let n = ((cells - 1) * users) as u64;
    if nu > n {
        return Err(domain(
            "decode_prob_tilde",
            format!("nu = {nu} exceeds (K-1)N = {n}"),
        ));
    }
    if n == 0 || nu == n {
        return Ok(1.0);
    }
    if users == 1 {
        // p = 1: every other-cell user transmits.
        return Ok(0.0);
    }
    let p = 1.0 / users as f64;
    Ok(BinomialCdf::new(n, p)
        .nth(nu as usize)
        .expect("nu is within the support"))
}

/// Smallest `nu` with `decode_prob_tilde(K, N, nu) >= 1 - epsilon`.
pub fn select_nu_star(cells: usize, users: usize, epsilon: f64) -> Result<u64> {
    check_open_unit("select_nu_star", "epsilon", epsilon)?;
    if cells == 0 || users == 0 {
        return Err(domain("select_nu_star", "K and N must be at least 1"));
    }
    let n = ((cells - 1) * users) as u64;
    if n == 0 || users == 1 {
        return Ok(n);
    }
    let target = 1.0 - epsilon;
    let found = BinomialCdf::new(n, 1.0 / users as f64)
        .position(|cdf| cdf >= target)
        .map(|i| i as u64);
    Ok(found.unwrap_or(n))
}

/// Own-cell threshold that keeps the access probability at `1/N` for the
/// given leakage threshold: `Phi_G = ln(F_I(Phi_I) N)`.
pub fn threshold_relation(phi_i: f64, cfg: &NetworkConfig) -> Result<f64> {
    if !(phi_i >= 0.0) {
        return Err(domain(
            "threshold_relation",
            format!("phi_i must be nonnegative, got {phi_i}"),
        ));
    }
    let product = leakage_cdf(phi_i, cfg)? * cfg.users as f64;
    if !(product > 1.0) {
        return Err(Error::InfeasibleThreshold { product });
    }
    Ok(product.ln())
}

/// Inverse of [`threshold_relation`]: the leakage threshold that pairs with a
/// given own-cell threshold. `+inf` when `Phi_G = ln N` (no leakage
/// constraint needed); always `+inf` for a single cell, where only
/// `Phi_G = ln N` is feasible.
pub fn leakage_threshold(phi_g: f64, cfg: &NetworkConfig) -> Result<f64> {
    if !(phi_g >= 0.0) || !phi_g.is_finite() {
        return Err(domain(
            "leakage_threshold",
            format!("phi_g must be nonnegative and finite, got {phi_g}"),
        ));
    }
    let n = cfg.users as f64;
    // F_I(Phi_I) = e^{Phi_G} / N
    let target = phi_g.exp() / n;
    if phi_g == 0.0 {
        return Err(Error::InfeasibleThreshold { product: 1.0 });
    }
    if cfg.cells == 1 {
        if ((target - 1.0).abs()) <= THRESHOLD_RELATION_TOL {
            return Ok(f64::INFINITY);
        }
        return Err(Error::InfeasibleThreshold { product: n });
    }
    if target > 1.0 + THRESHOLD_RELATION_TOL {
        return Err(Error::InfeasibleThreshold { product: n });
    }
    if target >= 1.0 - THRESHOLD_RELATION_TOL {
        return Ok(f64::INFINITY);
    }
    erlang_cdf_inv(target, cfg.leakage_shape())
}

/// Largest rate whose decoding threshold `2^R - 1` lies in ladder rung `nu`:
/// `R = log2(1 + Phi_G / (snr^-1 + nu Phi_I))`.
pub fn select_rate(phi_g: f64, phi_i: f64, snr: f64, nu: u64) -> Result<f64> {
    if !(phi_g >= 0.0) {
        return Err(domain("select_rate", format!("phi_g must be nonnegative, got {phi_g}")));
    }
    if !(phi_i >= 0.0) {
        return Err(domain("select_rate", format!("phi_i must be nonnegative, got {phi_i}")));
    }
    if !(snr > 0.0) {
        return Err(domain("select_rate", format!("snr must be positive, got {snr}")));
    }
    let denom = if nu == 0 { 1.0 / snr } else { 1.0 / snr + nu as f64 * phi_i };
    Ok((phi_g / denom).ln_1p() / LN_2)
}

/// Ladder rung containing the decoding threshold of `rate`: the largest
/// `nu <= max_nu` with `2^R - 1 <= Phi_G / (snr^-1 + nu Phi_I)`. `None` when
/// the rate exceeds the interference-free ceiling `log2(1 + Phi_G snr)`.
pub fn ladder_index(phi_g: f64, phi_i: f64, snr: f64, rate: f64, max_nu: u64) -> Option<u64> {
    // Rates produced by `select_rate` land within a few ulps of a rung edge.
    const EDGE: f64 = 1e-12;
    let thr = rate.exp2() - 1.0;
    if thr > phi_g * snr * (1.0 + EDGE) {
        return None;
    }
    if thr <= 0.0 || phi_i == 0.0 {
        return Some(max_nu);
    }
    if phi_i == f64::INFINITY {
        return Some(0);
    }
    let slack = (phi_g / thr * (1.0 + EDGE) - 1.0 / snr) / phi_i;
    let nu = slack.max(0.0).floor();
    Some(if nu >= max_nu as f64 { max_nu } else { nu as u64 })
}

/// Slotted-ALOHA MAC throughput of one cell, `N p (1-p)^{N-1}`.
pub fn mac_throughput(users: usize, p: f64) -> Result<f64> {
    if users == 0 {
        return Err(domain("mac_throughput", "N must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(domain("mac_throughput", format!("p must lie in [0, 1], got {p}")));
    }
    let n = users as f64;
    Ok(n * p * (1.0 - p).powi(users as i32 - 1))
}

/// Closed-form lower bound on aggregate throughput under the scaling
/// parameterization (`Phi_I = snr^-1`, `nu = nu*(K, N, epsilon)`):
/// `(K/e)(1-eps) log2(1 + delta snr ln N / (nu* + 1))`.
///
/// The bound is only guaranteed when `N >= user_scaling_min_n(K, snr, delta)`.
pub fn throughput_lower_bound(cfg: &NetworkConfig, epsilon: f64, delta: f64) -> Result<f64> {
    check_open_unit("throughput_lower_bound", "delta", delta)?;
    let nu_star = select_nu_star(cfg.cells, cfg.users, epsilon)?;
    let k = cfg.cells as f64;
    let gain = delta * cfg.snr * (cfg.users as f64).ln() / (nu_star as f64 + 1.0);
    Ok(k / E * (1.0 - epsilon) * gain.ln_1p() / LN_2)
}

/// Smallest (real) user count satisfying `c1 snr^{-(K-1)} N >= N^delta`,
/// namely `(snr^{K-1} / c1)^{1/(1-delta)}`. One for a single cell.
pub fn user_scaling_min_n(cells: usize, snr: f64, delta: f64) -> Result<f64> {
    if cells == 0 {
        return Err(domain("user_scaling_min_n", "K must be at least 1"));
    }
    if !(snr > 0.0) {
        return Err(domain("user_scaling_min_n", format!("snr must be positive, got {snr}")));
    }
    check_open_unit("user_scaling_min_n", "delta", delta)?;
    if cells == 1 {
        return Ok(1.0);
    }
    let c1 = leakage_bound_constant(cells)?;
    let ln_n = ((cells - 1) as f64 * snr.ln() - c1.ln()) / (1.0 - delta);
    Ok(ln_n.exp())
}

/// User count used by the scaling experiments: `ceil(snr^{(K-1)/(1-delta)})`.
pub fn scaling_user_count(cells: usize, snr: f64, delta: f64) -> usize {
    let n = snr.powf((cells.saturating_sub(1)) as f64 / (1.0 - delta));
    (n.ceil() as usize).max(1)
}
