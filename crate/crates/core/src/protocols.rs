//! Per-user transmission rules.
//!
//! * IA-ORA: transmit iff own-cell gain `>= Phi_G` and leakage sum `<= Phi_I`.
//! * ORA: single-cell opportunistic ALOHA, transmit iff own-cell gain `>= ln N`
//!   at rate `log2(1 + snr ln N)`. Cross-cell gains are ignored.
//! * Slotted ALOHA: transmit with probability `p` at rate `log2(1 + snr)`.
//!
//! Gain-based rules only ever see the perceived gains handed to them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::analytics::{NetworkConfig, ProtocolParams};
use crate::channel::GainTensor;
use crate::error::{domain, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    IaOra,
    Ora,
    SlottedAloha,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [Self::IaOra, Self::Ora, Self::SlottedAloha];

    pub fn name(self) -> &'static str {
        match self {
            Self::IaOra => "ia-ora",
            Self::Ora => "ora",
            Self::SlottedAloha => "aloha",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ia-ora" | "iaora" | "ia_ora" => Ok(Self::IaOra),
            "ora" => Ok(Self::Ora),
            "aloha" | "slotted-aloha" | "slotted_aloha" => Ok(Self::SlottedAloha),
            other => Err(domain("ProtocolKind", format!("unknown protocol `{other}`"))),
        }
    }
}

/// Which users transmit in a slot, and the rate they all share.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionDecision {
    cells: usize,
    users: usize,
    transmits: Vec<bool>,
    pub rate: f64,
}

impl TransmissionDecision {
    pub fn new(cells: usize, users: usize, transmits: Vec<bool>, rate: f64) -> Result<Self> {
        if transmits.len() != cells * users {
            return Err(Error::DimensionMismatch {
                expected: format!("{} decisions", cells * users),
                got: format!("{}", transmits.len()),
            });
        }
        Ok(Self {
            cells,
            users,
            transmits,
            rate,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn transmits(&self, cell: usize, user: usize) -> bool {
        self.transmits[cell * self.users + user]
    }

    /// Indices of the transmitting users of one cell, ascending.
    pub fn transmitters(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.transmits[cell * self.users..(cell + 1) * self.users]
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(i, _)| i)
    }

    pub fn count(&self, cell: usize) -> usize {
        self.transmitters(cell).count()
    }

    pub fn total(&self) -> usize {
        self.transmits.iter().filter(|&&t| t).count()
    }
}

/// A transmission rule with its thresholds fixed, independent of rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    IaOra { phi_g: f64, phi_i: f64 },
    Ora { phi_g: f64 },
    Aloha { p: f64 },
}

impl Policy {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            Policy::IaOra { .. } => ProtocolKind::IaOra,
            Policy::Ora { .. } => ProtocolKind::Ora,
            Policy::Aloha { .. } => ProtocolKind::SlottedAloha,
        }
    }

    pub fn uses_gains(&self) -> bool {
        !matches!(self, Policy::Aloha { .. })
    }
}

/// IA-ORA admission test: gain condition with `>=`, leakage condition with `<=`.
#[inline]
pub fn ia_ora_admits(own: f64, leakage: f64, phi_g: f64, phi_i: f64) -> bool {
    own >= phi_g && leakage <= phi_i
}

#[inline]
pub fn ora_admits(own: f64, phi_g: f64) -> bool {
    own >= phi_g
}

/// ORA threshold `ln N`, which gives `Pr(g >= Phi_G) = 1/N`.
pub fn ora_threshold(cfg: &NetworkConfig) -> f64 {
    (cfg.users as f64).ln()
}

/// ORA rate `log2(1 + Phi_G snr)`.
pub fn ora_rate(cfg: &NetworkConfig) -> f64 {
    (ora_threshold(cfg) * cfg.snr).ln_1p() / std::f64::consts::LN_2
}

/// Slotted-ALOHA rate `log2(1 + snr)`.
pub fn aloha_rate(cfg: &NetworkConfig) -> f64 {
    cfg.snr.ln_1p() / std::f64::consts::LN_2
}

fn check_dims(perceived: &GainTensor, cfg: &NetworkConfig) -> Result<()> {
    if perceived.matches(cfg) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{} x {} x {}", cfg.cells, cfg.users, cfg.cells),
            got: format!(
                "{} x {} x {}",
                perceived.cells(),
                perceived.users(),
                perceived.cells()
            ),
        })
    }
}

pub fn decide_ia_ora(
    perceived: &GainTensor,
    params: &ProtocolParams,
    cfg: &NetworkConfig,
) -> Result<TransmissionDecision> {
    check_dims(perceived, cfg)?;
    let transmits = (0..cfg.cells)
        .flat_map(|j| (0..cfg.users).map(move |i| (j, i)))
        .map(|(j, i)| {
            ia_ora_admits(
                perceived.own(j, i),
                perceived.leakage(j, i),
                params.phi_g,
                params.phi_i,
            )
        })
        .collect();
    TransmissionDecision::new(cfg.cells, cfg.users, transmits, params.rate)
}

pub fn decide_ora(perceived: &GainTensor, cfg: &NetworkConfig) -> Result<TransmissionDecision> {
    check_dims(perceived, cfg)?;
    let phi_g = ora_threshold(cfg);
    let transmits = (0..cfg.cells)
        .flat_map(|j| (0..cfg.users).map(move |i| (j, i)))
        .map(|(j, i)| ora_admits(perceived.own(j, i), phi_g))
        .collect();
    TransmissionDecision::new(cfg.cells, cfg.users, transmits, ora_rate(cfg))
}

/// Channel-blind ALOHA: user `(j, i)` transmits iff its uniform draw is below
/// `cfg.tx_prob`. Draws are taken in `(cell, user)` order from `seed`.
pub fn decide_aloha(cfg: &NetworkConfig, seed: u64) -> TransmissionDecision {
    let mut rng = rng_from_seed(seed);
    let transmits = (0..cfg.cells * cfg.users)
        .map(|_| rng.random::<f64>() < cfg.tx_prob)
        .collect();
    TransmissionDecision {
        cells: cfg.cells,
        users: cfg.users,
        transmits,
        rate: aloha_rate(cfg),
    }
}
