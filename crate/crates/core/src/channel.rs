//! Quasi-static Rayleigh fading.
//!
//! Each slot draws an independent `K x N x K` tensor of circularly-symmetric
//! unit-variance complex coefficients `h[j][i][k]` (user `i` of cell `j` to
//! AP `k`) and the matching power gains `g = |h|^2 ~ Exp(1)`. Coefficients are
//! kept because imperfect channel knowledge perturbs `h`, not `g`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::analytics::NetworkConfig;
use crate::error::{domain, Result};
use crate::rng::rng_from_seed;

/// Power gains indexed `[cell j][user i][AP k]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTensor {
    cells: usize,
    users: usize,
    data: Vec<f64>,
}

impl GainTensor {
    pub fn zeros(cells: usize, users: usize) -> Self {
        Self {
            cells,
            users,
            data: vec![0.0; cells * users * cells],
        }
    }

    /// Builds a tensor from row-major data of length `cells * users * cells`.
    pub fn from_vec(cells: usize, users: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != cells * users * cells {
            return Err(domain(
                "GainTensor::from_vec",
                format!("expected {} entries, got {}", cells * users * cells, data.len()),
            ));
        }
        if data.iter().any(|g| !(*g >= 0.0)) {
            return Err(domain("GainTensor::from_vec", "gains must be nonnegative"));
        }
        Ok(Self { cells, users, data })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    fn offset(&self, cell: usize, user: usize) -> usize {
        (cell * self.users + user) * self.cells
    }

    #[inline]
    pub fn get(&self, cell: usize, user: usize, ap: usize) -> f64 {
        self.data[self.offset(cell, user) + ap]
    }

    pub fn set(&mut self, cell: usize, user: usize, ap: usize, g: f64) {
        let o = self.offset(cell, user);
        self.data[o + ap] = g;
    }

    /// Gains from one user to every AP.
    #[inline]
    pub fn row(&self, cell: usize, user: usize) -> &[f64] {
        let o = self.offset(cell, user);
        &self.data[o..o + self.cells]
    }

    #[inline]
    pub fn own(&self, cell: usize, user: usize) -> f64 {
        self.get(cell, user, cell)
    }

    /// Sum of the user's gains to all non-serving APs.
    #[inline]
    pub fn leakage(&self, cell: usize, user: usize) -> f64 {
        self.row(cell, user)
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != cell)
            .map(|(_, g)| g)
            .sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matches(&self, cfg: &NetworkConfig) -> bool {
        self.cells == cfg.cells && self.users == cfg.users
    }
}

/// One slot's channel: complex coefficients and their power gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    coeffs: Vec<Complex64>,
    gains: GainTensor,
}

impl ChannelRealization {
    pub fn empty(cells: usize, users: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); cells * users * cells],
            gains: GainTensor::zeros(cells, users),
        }
    }

    /// Builds a realization from explicit coefficients (row-major `[j][i][k]`).
    pub fn from_coeffs(cells: usize, users: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != cells * users * cells {
            return Err(domain(
                "ChannelRealization::from_coeffs",
                format!("expected {} coefficients, got {}", cells * users * cells, coeffs.len()),
            ));
        }
        let data = coeffs.iter().map(|h| h.norm_sqr()).collect();
        Ok(Self {
            coeffs,
            gains: GainTensor { cells, users, data },
        })
    }

    /// Builds a realization whose gains are exactly `gains`, using real
    /// nonnegative coefficients `sqrt(g)`. Handy for crafted test instances.
    pub fn from_gains(gains: GainTensor) -> Self {
        let coeffs = gains
            .data
            .iter()
            .map(|g| Complex64::new(g.sqrt(), 0.0))
            .collect();
        Self { coeffs, gains }
    }

    pub fn gains(&self) -> &GainTensor {
        &self.gains
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn cells(&self) -> usize {
        self.gains.cells
    }

    pub fn users(&self) -> usize {
        self.gains.users
    }

    /// Redraws every coefficient in place from `seed`.
    pub fn redraw(&mut self, seed: u64) {
        let mut rng = rng_from_seed(seed);
        for (h, g) in self.coeffs.iter_mut().zip(self.gains.data.iter_mut()) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *h = Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
            *g = h.norm_sqr();
        }
    }
}

/// Draws a full `K x N x K` realization, fully determined by `seed`.
pub fn draw_realization(cfg: &NetworkConfig, seed: u64) -> ChannelRealization {
    let mut real = ChannelRealization::empty(cfg.cells, cfg.users);
    real.redraw(seed);
    real
}

/// Channel-knowledge error: the transmitter sees `h + dh` with
/// `dh ~ CN(0, sigma2)`. `sigma2 = 0` is perfect knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaitErrorModel {
    sigma2: f64,
}

impl CaitErrorModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(domain(
                "CaitErrorModel",
                format!("sigma2 must be nonnegative and finite, got {sigma2}"),
            ));
        }
        Ok(Self { sigma2 })
    }

    pub fn perfect() -> Self {
        Self { sigma2: 0.0 }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_perfect(&self) -> bool {
        self.sigma2 == 0.0
    }
}

/// Gains as perceived by the transmitters, `|h + dh|^2`. Returns the true
/// gains unchanged when the error model is perfect.
pub fn perceived_gains(real: &ChannelRealization, err: CaitErrorModel, seed: u64) -> GainTensor {
    let mut out = GainTensor::zeros(real.cells(), real.users());
    perceived_gains_into(real, err, seed, &mut out);
    out
}

pub(crate) fn perceived_gains_into(
    real: &ChannelRealization,
    err: CaitErrorModel,
    seed: u64,
    out: &mut GainTensor,
) {
    if err.is_perfect() {
        out.clone_from(&real.gains);
        return;
    }
    out.cells = real.cells();
    out.users = real.users();
    out.data.resize(real.coeffs.len(), 0.0);
    let scale = (err.sigma2 * 0.5).sqrt();
    let mut rng = rng_from_seed(seed);
    for (h, g) in real.coeffs.iter().zip(out.data.iter_mut()) {
        let dre: f64 = rng.sample(StandardNormal);
        let dim: f64 = rng.sample(StandardNormal);
        *g = Complex64::new(h.re + scale * dre, h.im + scale * dim).norm_sqr();
    }
}
