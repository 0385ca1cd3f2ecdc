//! Interference-aware opportunistic random access (IA-ORA) for ultra-dense
//! multi-cell slotted-ALOHA networks.
//!
//! The crate is split along the path a result takes:
//!
//! * [`analytics`]: closed-form CDFs, threshold and rate selection, the
//!   decoding-probability ladder and the asymptotic throughput bound.
//! * [`channel`]: per-slot Rayleigh fading realizations and imperfect
//!   channel-amplitude knowledge.
//! * [`protocols`]: IA-ORA, single-cell ORA and plain slotted-ALOHA
//!   transmission rules.
//! * [`engine`]: SINR-capture slot evaluation and reproducible parallel
//!   Monte-Carlo trials.
//! * [`optimizer`]: exhaustive `(Phi_G, R)` search and protocol crossover scans.
//! * [`cli`]: config-driven experiment runner writing CSV results.

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod protocols;
pub mod rng;

pub use analytics::{NetworkConfig, ProtocolParams};
pub use channel::{CaitErrorModel, ChannelRealization, GainTensor};
pub use engine::{SlotOutcome, ThroughputStats};
pub use error::{Error, Result};
pub use protocols::{ProtocolKind, TransmissionDecision};
