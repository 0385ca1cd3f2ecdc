//! Monte-Carlo slot simulation under the SINR capture model.
//!
//! In every cell: no transmitter is idle, two or more collide, and a lone
//! transmitter is decoded iff
//! `g_own / (snr^-1 + sum of other-cell transmitters' true gains to this AP)`
//! is strictly greater than `2^R - 1`. Decisions may use perceived gains; the
//! SINR always uses the true ones.
//!
//! Trials are split into fixed-size chunks of slots. Each slot seeds its own
//! random streams from `(master_seed, slot_index)`, and every accumulator is
//! an integer count, so statistics are bit-identical for any worker count.

use rand::Rng;
use rayon::prelude::*;

use crate::analytics::{NetworkConfig, ProtocolParams};
use crate::channel::{perceived_gains_into, CaitErrorModel, ChannelRealization, GainTensor};
use crate::error::{domain, Error, Result};
use crate::protocols::{
    aloha_rate, ia_ora_admits, ora_admits, ora_rate, ora_threshold, Policy, ProtocolKind,
    TransmissionDecision,
};
use crate::rng::{derive_seed, slot_rng, Stream};

const CHUNK_SLOTS: u64 = 64;

/// Whether inter-cell interference enters the SINR. `Disabled` is a test hook
/// that isolates noise-limited decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterferenceModel {
    #[default]
    Full,
    Disabled,
}

/// SINR threshold for decoding at `rate`.
#[inline]
pub fn decoding_threshold(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub transmitters_per_cell: Vec<Vec<usize>>,
    /// Defined only for cells with exactly one transmitter.
    pub sinr_per_cell: Vec<Option<f64>>,
    pub decoded_per_cell: Vec<bool>,
    /// Rate times the number of decoded cells.
    pub delivered_rate: f64,
    /// Number of other-cell transmitters heard at each AP.
    pub interferers_per_cell: Vec<usize>,
}

impl SlotOutcome {
    pub fn decoded_count(&self) -> usize {
        self.decoded_per_cell.iter().filter(|&&d| d).count()
    }

    pub fn total_transmitters(&self) -> usize {
        self.transmitters_per_cell.iter().map(Vec::len).sum()
    }
}

/// SINR of the lone transmitter `user` of `cell`, interference summed over
/// the other cells in ascending `(cell, user)` order.
#[inline]
fn lone_sinr(
    gains: &GainTensor,
    noise: f64,
    cell: usize,
    user: usize,
    tx: &[Vec<usize>],
    model: InterferenceModel,
) -> f64 {
    let signal = gains.get(cell, user, cell);
    let mut interference = 0.0;
    if model == InterferenceModel::Full {
        for (k, list) in tx.iter().enumerate() {
            if k == cell {
                continue;
            }
            for &t in list {
                interference += gains.get(k, t, cell);
            }
        }
    }
    signal / (noise + interference)
}

pub fn simulate_slot(
    real: &ChannelRealization,
    decision: &TransmissionDecision,
    cfg: &NetworkConfig,
) -> Result<SlotOutcome> {
    simulate_slot_with(real, decision, cfg, InterferenceModel::Full)
}

pub fn simulate_slot_with(
    real: &ChannelRealization,
    decision: &TransmissionDecision,
    cfg: &NetworkConfig,
    model: InterferenceModel,
) -> Result<SlotOutcome> {
    if !real.gains().matches(cfg) || decision.cells() != cfg.cells || decision.users() != cfg.users
    {
        return Err(Error::DimensionMismatch {
            expected: format!("{} cells x {} users", cfg.cells, cfg.users),
            got: format!(
                "realization {}x{}, decision {}x{}",
                real.cells(),
                real.users(),
                decision.cells(),
                decision.users()
            ),
        });
    }
    let tx: Vec<Vec<usize>> = (0..cfg.cells)
        .map(|j| decision.transmitters(j).collect())
        .collect();
    let total: usize = tx.iter().map(Vec::len).sum();
    let threshold = decoding_threshold(decision.rate);
    let noise = cfg.noise();

    let mut sinr_per_cell = Vec::with_capacity(cfg.cells);
    let mut decoded_per_cell = Vec::with_capacity(cfg.cells);
    for (j, list) in tx.iter().enumerate() {
        if list.len() == 1 {
            let sinr = lone_sinr(real.gains(), noise, j, list[0], &tx, model);
            sinr_per_cell.push(Some(sinr));
            decoded_per_cell.push(sinr > threshold);
        } else {
            sinr_per_cell.push(None);
            decoded_per_cell.push(false);
        }
    }
    let decoded = decoded_per_cell.iter().filter(|&&d| d).count();
    Ok(SlotOutcome {
        interferers_per_cell: tx.iter().map(|l| total - l.len()).collect(),
        transmitters_per_cell: tx,
        sinr_per_cell,
        decoded_per_cell,
        delivered_rate: decision.rate * decoded as f64,
    })
}

/// Averages over a run of independent slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputStats {
    /// Mean delivered rate per slot summed over cells, bits/s/Hz.
    pub aggregate_phy_throughput: f64,
    /// Fraction of (cell, slot) pairs with exactly one transmitter.
    pub mac_throughput_per_cell: f64,
    /// Per-user transmission frequency.
    pub empirical_p: f64,
    /// Binomial standard error of `empirical_p`.
    pub empirical_p_stderr: f64,
    /// Decoded fraction among lone-transmitter slots, per cell then averaged.
    pub empirical_ps: f64,
    pub slot_count: u64,
    /// Standard error of `aggregate_phy_throughput`.
    pub stderr: f64,
    pub rate: f64,
}

/// A policy evaluated at one or more rates on the same slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub policy: Policy,
    /// Ascending.
    pub rates: Vec<f64>,
}

impl Arm {
    pub fn new(policy: Policy, rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(domain("Arm", "at least one rate is required"));
        }
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(domain("Arm", "rates must be finite and nonnegative"));
        }
        if rates.windows(2).any(|w| w[0] > w[1]) {
            return Err(domain("Arm", "rates must be ascending"));
        }
        Ok(Self { policy, rates })
    }

    pub fn single(policy: Policy, rate: f64) -> Result<Self> {
        Self::new(policy, vec![rate])
    }

    /// Standard arm for `kind`. IA-ORA needs explicit parameters; ORA and
    /// slotted ALOHA use their fixed thresholds and rates.
    pub fn for_kind(
        kind: ProtocolKind,
        params: Option<&ProtocolParams>,
        cfg: &NetworkConfig,
    ) -> Result<Self> {
        match kind {
            ProtocolKind::IaOra => {
                let p = params.ok_or_else(|| domain("Arm::for_kind", "IA-ORA needs protocol parameters"))?;
                Self::single(
                    Policy::IaOra {
                        phi_g: p.phi_g,
                        phi_i: p.phi_i,
                    },
                    p.rate,
                )
            }
            ProtocolKind::Ora => Self::single(
                Policy::Ora {
                    phi_g: ora_threshold(cfg),
                },
                ora_rate(cfg),
            ),
            ProtocolKind::SlottedAloha => {
                Self::single(Policy::Aloha { p: cfg.tx_prob }, aloha_rate(cfg))
            }
        }
    }
}

/// Everything that fixes the random slots of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetup {
    pub cfg: NetworkConfig,
    pub err: CaitErrorModel,
    pub slots: u64,
    pub master_seed: u64,
    pub interference: InterferenceModel,
}

impl TrialSetup {
    pub fn new(cfg: NetworkConfig, err: CaitErrorModel, slots: u64, master_seed: u64) -> Self {
        Self {
            cfg,
            err,
            slots,
            master_seed,
            interference: InterferenceModel::Full,
        }
    }
}

/// Integer tallies of one arm.
#[derive(Debug, Clone)]
struct Tally {
    rates: usize,
    cells: usize,
    transmissions: u64,
    singletons: Vec<u64>,
    /// Difference arrays over the rate index, `[cell][rate]`, length `rates + 1` each.
    decoded_diff: Vec<i64>,
    /// Difference array over the rate index of per-slot decoded-count squares.
    squares_diff: Vec<i64>,
}

impl Tally {
    fn new(rates: usize, cells: usize) -> Self {
        Self {
            rates,
            cells,
            transmissions: 0,
            singletons: vec![0; cells],
            decoded_diff: vec![0; cells * (rates + 1)],
            squares_diff: vec![0; rates + 1],
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.transmissions += other.transmissions;
        for (a, b) in self.singletons.iter_mut().zip(&other.singletons) {
            *a += b;
        }
        for (a, b) in self.decoded_diff.iter_mut().zip(&other.decoded_diff) {
            *a += b;
        }
        for (a, b) in self.squares_diff.iter_mut().zip(&other.squares_diff) {
            *a += b;
        }
    }

    fn finish(&self, rates: &[f64], slots: u64, users: usize) -> Vec<ThroughputStats> {
        let s = slots as f64;
        let trials = s * (self.cells * users) as f64;
        let empirical_p = self.transmissions as f64 / trials;
        let empirical_p_stderr = (empirical_p * (1.0 - empirical_p) / trials).sqrt();
        let singletons: u64 = self.singletons.iter().sum();
        let mac = singletons as f64 / (s * self.cells as f64);

        let mut decoded_running = vec![0i64; self.cells];
        let mut squares_running = 0i64;
        let mut out = Vec::with_capacity(self.rates);
        for (r, &rate) in rates.iter().enumerate() {
            let mut decoded_total = 0i64;
            let mut ps_sum = 0.0;
            let mut ps_cells = 0usize;
            for (j, run) in decoded_running.iter_mut().enumerate() {
                *run += self.decoded_diff[j * (self.rates + 1) + r];
                decoded_total += *run;
                if self.singletons[j] > 0 {
                    ps_sum += *run as f64 / self.singletons[j] as f64;
                    ps_cells += 1;
                }
            }
            squares_running += self.squares_diff[r];
            let sum = decoded_total as f64;
            let sum_sq = squares_running as f64;
            let mean_count = sum / s;
            let stderr = if slots > 1 {
                let var = ((sum_sq - sum * sum / s) / (s - 1.0)).max(0.0);
                rate * (var / s).sqrt()
            } else {
                0.0
            };
            out.push(ThroughputStats {
                aggregate_phy_throughput: rate * mean_count,
                mac_throughput_per_cell: mac,
                empirical_p,
                empirical_p_stderr,
                empirical_ps: if ps_cells > 0 { ps_sum / ps_cells as f64 } else { 0.0 },
                slot_count: slots,
                stderr,
                rate,
            });
        }
        out
    }
}

/// Worker-local buffers reused across slots.
struct Scratch {
    real: ChannelRealization,
    perceived: GainTensor,
    own: Vec<f64>,
    leak: Vec<f64>,
    uniforms: Vec<f64>,
    tx: Vec<Vec<usize>>,
    decoded_idx: Vec<usize>,
    thresholds: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(cfg: &NetworkConfig, arms: &[Arm]) -> Self {
        let n = cfg.cells * cfg.users;
        Self {
            real: ChannelRealization::empty(cfg.cells, cfg.users),
            perceived: GainTensor::zeros(cfg.cells, cfg.users),
            own: vec![0.0; n],
            leak: vec![0.0; n],
            uniforms: vec![0.0; n],
            tx: vec![Vec::new(); cfg.cells],
            decoded_idx: Vec::with_capacity(cfg.cells),
            thresholds: arms
                .iter()
                .map(|a| a.rates.iter().map(|&r| decoding_threshold(r)).collect())
                .collect(),
        }
    }
}

fn run_slot(setup: &TrialSetup, arms: &[Arm], slot: u64, sc: &mut Scratch, tallies: &mut [Tally]) {
    let cfg = &setup.cfg;
    let (cells, users) = (cfg.cells, cfg.users);
    let noise = cfg.noise();
    let needs_gains = arms.iter().any(|a| a.policy.uses_gains());
    let needs_uniforms = arms.iter().any(|a| !a.policy.uses_gains());

    sc.real
        .redraw(derive_seed(setup.master_seed, slot, Stream::Channel));
    if needs_gains {
        let seen: &GainTensor = if setup.err.is_perfect() {
            sc.real.gains()
        } else {
            perceived_gains_into(
                &sc.real,
                setup.err,
                derive_seed(setup.master_seed, slot, Stream::CaitError),
                &mut sc.perceived,
            );
            &sc.perceived
        };
        for j in 0..cells {
            for i in 0..users {
                sc.own[j * users + i] = seen.own(j, i);
                sc.leak[j * users + i] = seen.leakage(j, i);
            }
        }
    }
    if needs_uniforms {
        let mut rng = slot_rng(setup.master_seed, slot, Stream::Aloha);
        for u in sc.uniforms.iter_mut() {
            *u = rng.random::<f64>();
        }
    }

    for (a, arm) in arms.iter().enumerate() {
        let tally = &mut tallies[a];
        for (j, list) in sc.tx.iter_mut().enumerate() {
            list.clear();
            let base = j * users;
            match arm.policy {
                Policy::IaOra { phi_g, phi_i } => {
                    for i in 0..users {
                        if ia_ora_admits(sc.own[base + i], sc.leak[base + i], phi_g, phi_i) {
                            list.push(i);
                        }
                    }
                }
                Policy::Ora { phi_g } => {
                    for i in 0..users {
                        if ora_admits(sc.own[base + i], phi_g) {
                            list.push(i);
                        }
                    }
                }
                Policy::Aloha { p } => {
                    for i in 0..users {
                        if sc.uniforms[base + i] < p {
                            list.push(i);
                        }
                    }
                }
            }
            tally.transmissions += list.len() as u64;
        }

        sc.decoded_idx.clear();
        let thresholds = &sc.thresholds[a];
        let stride = tally.rates + 1;
        for j in 0..cells {
            if sc.tx[j].len() != 1 {
                continue;
            }
            tally.singletons[j] += 1;
            let sinr = lone_sinr(sc.real.gains(), noise, j, sc.tx[j][0], &sc.tx, setup.interference);
            // rates [0, idx) are decoded
            let idx = thresholds.partition_point(|&t| t < sinr);
            if idx > 0 {
                tally.decoded_diff[j * stride] += 1;
                tally.decoded_diff[j * stride + idx] -= 1;
                sc.decoded_idx.push(idx);
            }
        }
        // Decoded count at rate r is #{idx > r}; add its square piecewise.
        sc.decoded_idx.sort_unstable();
        let c = sc.decoded_idx.len();
        let mut start = 0usize;
        for (m, &end) in sc.decoded_idx.iter().enumerate() {
            let count = (c - m) as i64;
            if end > start {
                tally.squares_diff[start] += count * count;
                tally.squares_diff[end] -= count * count;
                start = end;
            }
        }
    }
}

/// Runs every arm on the same `setup.slots` slots (common random numbers)
/// and returns one [`ThroughputStats`] per arm and rate.
pub fn run_arms(setup: &TrialSetup, arms: &[Arm]) -> Result<Vec<Vec<ThroughputStats>>> {
    if setup.slots == 0 {
        return Err(domain("run_trials", "slots must be at least 1"));
    }
    if arms.is_empty() {
        return Ok(Vec::new());
    }
    let chunks = setup.slots.div_ceil(CHUNK_SLOTS);
    let fresh = || {
        arms.iter()
            .map(|a| Tally::new(a.rates.len(), setup.cfg.cells))
            .collect::<Vec<_>>()
    };
    let merge = |mut acc: Vec<Tally>, other: Vec<Tally>| {
        for (a, b) in acc.iter_mut().zip(&other) {
            a.merge(b);
        }
        acc
    };
    let tallies = (0..chunks)
        .into_par_iter()
        .fold(
            || (Scratch::new(&setup.cfg, arms), fresh()),
            |(mut sc, mut tallies), chunk| {
                let start = chunk * CHUNK_SLOTS;
                let end = (start + CHUNK_SLOTS).min(setup.slots);
                for slot in start..end {
                    run_slot(setup, arms, slot, &mut sc, &mut tallies);
                }
                (sc, tallies)
            },
        )
        .map(|(_, t)| t)
        .reduce(fresh, merge);

    Ok(arms
        .iter()
        .zip(&tallies)
        .map(|(arm, t)| t.finish(&arm.rates, setup.slots, setup.cfg.users))
        .collect())
}

/// Monte-Carlo throughput of one protocol over `slots` independent slots.
///
/// `params` is required for IA-ORA and ignored by ORA and slotted ALOHA,
/// which use their standard thresholds and rates.
pub fn run_trials(
    cfg: &NetworkConfig,
    kind: ProtocolKind,
    params: Option<&ProtocolParams>,
    err: CaitErrorModel,
    slots: u64,
    master_seed: u64,
) -> Result<ThroughputStats> {
    let arm = Arm::for_kind(kind, params, cfg)?;
    let setup = TrialSetup::new(*cfg, err, slots, master_seed);
    Ok(run_arms(&setup, std::slice::from_ref(&arm))?[0][0])
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    Ok(pool.install(f))
}
