//! Exhaustive `(Phi_G, R)` search and SNR crossover scans between protocols.
//!
//! Every grid point is evaluated on the same slots (common random numbers):
//! one sweep draws each slot once and scores all thresholds and rates on it.

use std::fmt;
use std::str::FromStr;

use crate::analytics::{leakage_threshold, NetworkConfig};
use crate::channel::CaitErrorModel;
use crate::engine::{run_arms, Arm, ThroughputStats, TrialSetup};
use crate::error::{domain, Error, Result};
use crate::protocols::{Policy, ProtocolKind};

/// Fewest slots per grid point accepted by [`GridSpec::new`].
pub const MIN_SLOTS_PER_POINT: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub phi_g_values: Vec<f64>,
    pub rate_values: Vec<f64>,
    pub slots_per_point: u64,
}

impl GridSpec {
    pub fn new(phi_g_values: Vec<f64>, rate_values: Vec<f64>, slots_per_point: u64) -> Result<Self> {
        check_axis("phi_g_values", &phi_g_values)?;
        check_axis("rate_values", &rate_values)?;
        if slots_per_point < MIN_SLOTS_PER_POINT {
            return Err(domain(
                "GridSpec",
                format!("slots_per_point must be at least {MIN_SLOTS_PER_POINT}, got {slots_per_point}"),
            ));
        }
        Ok(Self {
            phi_g_values,
            rate_values,
            slots_per_point,
        })
    }

    /// `Phi_G` in 0.1..=6.0 step 0.1 and `R` in 0.5..=8.0 step 0.05.
    pub fn standard(slots_per_point: u64) -> Result<Self> {
        Self::new(
            linspace_step(0.1, 6.0, 0.1),
            linspace_step(0.5, 8.0, 0.05),
            slots_per_point,
        )
    }

    pub fn len(&self) -> usize {
        self.phi_g_values.len() * self.rate_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(domain("GridSpec", format!("{name} must be nonempty")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(domain("GridSpec", format!("{name} must be finite and nonnegative")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain("GridSpec", format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// `lo, lo + step, ...` up to `hi` inclusive, each value computed as
/// `lo + k * step` and rounded to 10 decimals so grids print cleanly.
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e10).round() / 1e10)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub phi_g: f64,
    pub rate: f64,
    /// `+inf` when no leakage constraint is needed; NaN when infeasible.
    pub phi_i: f64,
    /// `-inf` for infeasible `Phi_G`.
    pub throughput: f64,
    pub stderr: f64,
    pub stats: Option<ThroughputStats>,
}

impl SurfacePoint {
    pub fn is_feasible(&self) -> bool {
        self.stats.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub phi_g_star: f64,
    pub rate_star: f64,
    pub phi_i_star: f64,
    pub throughput_at_star: f64,
    pub stats_at_star: ThroughputStats,
    /// Row-major over `(phi_g, rate)`.
    pub full_surface: Vec<SurfacePoint>,
}

/// Evaluates IA-ORA at every grid point with `Phi_I` tied to `Phi_G` so that
/// the access probability stays at `1/N`; returns the best point.
pub fn grid_search(cfg: &NetworkConfig, grid: &GridSpec, master_seed: u64) -> Result<Optimum> {
    grid_search_with(cfg, grid, CaitErrorModel::perfect(), master_seed)
}

pub fn grid_search_with(
    cfg: &NetworkConfig,
    grid: &GridSpec,
    err: CaitErrorModel,
    master_seed: u64,
) -> Result<Optimum> {
    let mut arms = Vec::new();
    let mut arm_of_row = Vec::with_capacity(grid.phi_g_values.len());
    let mut phi_i_of_row = Vec::with_capacity(grid.phi_g_values.len());
    for &phi_g in &grid.phi_g_values {
        match leakage_threshold(phi_g, cfg) {
            Ok(phi_i) => {
                arm_of_row.push(Some(arms.len()));
                phi_i_of_row.push(phi_i);
                arms.push(Arm::new(Policy::IaOra { phi_g, phi_i }, grid.rate_values.clone())?);
            }
            Err(Error::InfeasibleThreshold { .. }) => {
                arm_of_row.push(None);
                phi_i_of_row.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    if arms.is_empty() {
        return Err(Error::NoFeasiblePoint);
    }
    let setup = TrialSetup::new(*cfg, err, grid.slots_per_point, master_seed);
    let results = run_arms(&setup, &arms)?;

    let mut surface: Vec<SurfacePoint> = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for (row, &phi_g) in grid.phi_g_values.iter().enumerate() {
        for (r, &rate) in grid.rate_values.iter().enumerate() {
            let point = match arm_of_row[row] {
                Some(a) => {
                    let s = results[a][r];
                    SurfacePoint {
                        phi_g,
                        rate,
                        phi_i: phi_i_of_row[row],
                        throughput: s.aggregate_phy_throughput,
                        stderr: s.stderr,
                        stats: Some(s),
                    }
                }
                None => SurfacePoint {
                    phi_g,
                    rate,
                    phi_i: f64::NAN,
                    throughput: f64::NEG_INFINITY,
                    stderr: 0.0,
                    stats: None,
                },
            };
            // first maximum in row-major order wins ties
            if point.is_feasible() && best.is_none_or(|b| point.throughput > surface[b].throughput) {
                best = Some(surface.len());
            }
            surface.push(point);
        }
    }
    let b = best.ok_or(Error::NoFeasiblePoint)?;
    let star = surface[b];
    Ok(Optimum {
        phi_g_star: star.phi_g,
        rate_star: star.rate,
        phi_i_star: star.phi_i,
        throughput_at_star: star.throughput,
        stats_at_star: star.stats.expect("best point is feasible"),
        full_surface: surface,
    })
}

/// Network on which the ORA and slotted-ALOHA baselines are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineNetwork {
    /// The same `K`-cell network as IA-ORA, with inter-cell interference.
    Shared,
    /// A single isolated cell of `N` users.
    #[default]
    SingleCell,
}

impl BaselineNetwork {
    pub fn name(self) -> &'static str {
        match self {
            Self::Shared => "shared",
            Self::SingleCell => "single-cell",
        }
    }

    pub fn network(self, cfg: &NetworkConfig) -> Result<NetworkConfig> {
        match self {
            Self::Shared => Ok(*cfg),
            Self::SingleCell => NetworkConfig::new(1, cfg.users, cfg.snr),
        }
    }
}

impl fmt::Display for BaselineNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineNetwork {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shared" => Ok(Self::Shared),
            "single-cell" => Ok(Self::SingleCell),
            other => Err(Error::Range {
                field: "baseline_network".into(),
                detail: format!("expected `shared` or `single-cell`, got `{other}`"),
            }),
        }
    }
}

/// One protocol's result at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub kind: ProtocolKind,
    /// Network the statistics were measured on.
    pub network: NetworkConfig,
    pub phi_g: f64,
    pub phi_i: f64,
    pub rate: f64,
    pub stats: ThroughputStats,
}

/// Evaluates `kind` at its best (IA-ORA, via [`grid_search`]) or standard
/// (ORA, slotted ALOHA) parameters.
pub fn evaluate_protocol(
    cfg: &NetworkConfig,
    kind: ProtocolKind,
    grid: &GridSpec,
    baseline: BaselineNetwork,
    err: CaitErrorModel,
    master_seed: u64,
) -> Result<Evaluation> {
    match kind {
        ProtocolKind::IaOra => {
            let opt = grid_search_with(cfg, grid, err, master_seed)?;
            Ok(Evaluation {
                kind,
                network: *cfg,
                phi_g: opt.phi_g_star,
                phi_i: opt.phi_i_star,
                rate: opt.rate_star,
                stats: opt.stats_at_star,
            })
        }
        _ => evaluate_baseline(cfg, kind, baseline, err, grid.slots_per_point, master_seed),
    }
}

/// Evaluates ORA or slotted ALOHA at their standard parameters on the
/// `baseline` network derived from `cfg`.
pub fn evaluate_baseline(
    cfg: &NetworkConfig,
    kind: ProtocolKind,
    baseline: BaselineNetwork,
    err: CaitErrorModel,
    slots: u64,
    master_seed: u64,
) -> Result<Evaluation> {
    if kind == ProtocolKind::IaOra {
        return Err(domain("evaluate_baseline", "IA-ORA is not a baseline"));
    }
    let net = baseline.network(cfg)?;
    let arm = Arm::for_kind(kind, None, &net)?;
    let setup = TrialSetup::new(net, err, slots, master_seed);
    let stats = run_arms(&setup, std::slice::from_ref(&arm))?[0][0];
    let (phi_g, phi_i) = match arm.policy {
        Policy::Ora { phi_g } => (phi_g, f64::INFINITY),
        _ => (f64::NAN, f64::NAN),
    };
    Ok(Evaluation {
        kind,
        network: net,
        phi_g,
        phi_i,
        rate: arm.rates[0],
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    pub snr_db: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverOptions {
    /// Search grid for IA-ORA; its `slots_per_point` is overridden by the scan.
    pub grid: GridSpec,
    pub baseline: BaselineNetwork,
}

impl CrossoverOptions {
    pub fn standard(slots: u64) -> Result<Self> {
        Ok(Self {
            grid: GridSpec::standard(slots.max(MIN_SLOTS_PER_POINT))?,
            baseline: BaselineNetwork::default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverScan {
    pub snr_db: Vec<f64>,
    pub first: Vec<Evaluation>,
    pub second: Vec<Evaluation>,
    pub crossover: Option<Crossover>,
}

/// SNR at which the throughput ordering of `kinds` first flips, linearly
/// interpolated between adjacent points; `None` when it never flips.
pub fn crossover_scan(
    cfg_base: &NetworkConfig,
    snr_values_db: &[f64],
    kinds: (ProtocolKind, ProtocolKind),
    slots: u64,
    master_seed: u64,
) -> Result<Option<Crossover>> {
    let opts = CrossoverOptions::standard(slots)?;
    Ok(crossover_scan_with(cfg_base, snr_values_db, kinds, slots, master_seed, &opts)?.crossover)
}

pub fn crossover_scan_with(
    cfg_base: &NetworkConfig,
    snr_values_db: &[f64],
    kinds: (ProtocolKind, ProtocolKind),
    slots: u64,
    master_seed: u64,
    opts: &CrossoverOptions,
) -> Result<CrossoverScan> {
    if snr_values_db.len() < 2 {
        return Err(domain("crossover_scan", "at least two SNR values are required"));
    }
    if snr_values_db.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("crossover_scan", "SNR values must be strictly ascending"));
    }
    let mut grid = opts.grid.clone();
    grid.slots_per_point = slots;
    let mut first = Vec::with_capacity(snr_values_db.len());
    let mut second = Vec::with_capacity(snr_values_db.len());
    for &db in snr_values_db {
        let cfg = NetworkConfig::from_db(cfg_base.cells, cfg_base.users, db)?;
        let err = CaitErrorModel::perfect();
        first.push(evaluate_protocol(&cfg, kinds.0, &grid, opts.baseline, err, master_seed)?);
        second.push(evaluate_protocol(&cfg, kinds.1, &grid, opts.baseline, err, master_seed)?);
    }
    let a: Vec<f64> = first.iter().map(|e| e.stats.aggregate_phy_throughput).collect();
    let b: Vec<f64> = second.iter().map(|e| e.stats.aggregate_phy_throughput).collect();
    Ok(CrossoverScan {
        crossover: first_crossing(snr_values_db, &a, &b),
        snr_db: snr_values_db.to_vec(),
        first,
        second,
    })
}

/// First sign change of `a - b` along `x`, interpolated linearly.
pub fn first_crossing(x: &[f64], a: &[f64], b: &[f64]) -> Option<Crossover> {
    let d: Vec<f64> = a.iter().zip(b).map(|(a, b)| a - b).collect();
    let mut last: Option<usize> = None;
    for i in 0..d.len() {
        if d[i] == 0.0 {
            continue;
        }
        if let Some(l) = last {
            if d[l].signum() != d[i].signum() {
                if i > l + 1 {
                    // curves touch exactly at an interior grid point
                    let m = l + 1;
                    return Some(Crossover {
                        snr_db: x[m],
                        throughput: a[m],
                    });
                }
                let t = d[l] / (d[l] - d[i]);
                return Some(Crossover {
                    snr_db: x[l] + t * (x[i] - x[l]),
                    throughput: a[l] + t * (a[i] - a[l]),
                });
            }
        }
        last = Some(i);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::ProtocolParams;
    use crate::engine::run_trials;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(vec![], vec![1.0], 1000).is_err());
        assert!(GridSpec::new(vec![1.0], vec![2.0, 1.0], 1000).is_err());
        assert!(GridSpec::new(vec![1.0], vec![1.0], 999).is_err());
        let g = GridSpec::standard(1000).unwrap();
        assert_eq!(g.phi_g_values.len(), 60);
        assert_eq!(g.rate_values.len(), 151);
        assert_eq!(*g.phi_g_values.last().unwrap(), 6.0);
        assert_eq!(*g.rate_values.last().unwrap(), 8.0);
    }

    #[test]
    fn single_point_grid() {
        let cfg = NetworkConfig::from_db(2, 100, 10.0).unwrap();
        let grid = GridSpec::new(vec![1.7], vec![3.64], 2_000).unwrap();
        let opt = grid_search(&cfg, &grid, 4).unwrap();
        assert_eq!((opt.phi_g_star, opt.rate_star), (1.7, 3.64));
        assert_eq!(opt.full_surface.len(), 1);
        let params = ProtocolParams::from_gain_threshold(&cfg, 1.7, 3.64).unwrap();
        let direct = run_trials(&cfg, ProtocolKind::IaOra, Some(&params), CaitErrorModel::perfect(), 2_000, 4).unwrap();
        assert_eq!(opt.stats_at_star, direct);
        assert_eq!(opt.phi_i_star, params.phi_i);
    }

    #[test]
    fn surface_matches_independent_runs() {
        let cfg = NetworkConfig::from_db(3, 20, 5.0).unwrap();
        let grid = GridSpec::new(vec![0.5, 1.5, 2.5, 4.0], vec![0.5, 1.0, 2.0], 1_500).unwrap();
        let opt = grid_search(&cfg, &grid, 8).unwrap();
        for p in &opt.full_surface {
            match ProtocolParams::from_gain_threshold(&cfg, p.phi_g, p.rate) {
                Ok(params) => {
                    let s = run_trials(&cfg, ProtocolKind::IaOra, Some(&params), CaitErrorModel::perfect(), 1_500, 8).unwrap();
                    assert_eq!(Some(s), p.stats);
                }
                Err(_) => assert_eq!(p.throughput, f64::NEG_INFINITY),
            }
        }
        let max = opt.full_surface.iter().map(|p| p.throughput).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(opt.throughput_at_star, max);
    }

    #[test]
    fn infeasible_grid() {
        let cfg = NetworkConfig::from_db(2, 10, 10.0).unwrap();
        let grid = GridSpec::new(vec![3.0, 4.0], vec![1.0], 1_000).unwrap();
        assert!(matches!(grid_search(&cfg, &grid, 1), Err(Error::NoFeasiblePoint)));
    }

    #[test]
    fn crossing_interpolation() {
        let x = [0.0, 10.0, 20.0];
        let c = first_crossing(&x, &[1.0, 2.0, 3.0], &[0.0, 3.0, 4.0]).unwrap();
        // d = 1, -1: crosses half way
        assert_eq!(c.snr_db, 5.0);
        assert_eq!(c.throughput, 1.5);
        assert!(first_crossing(&x, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_none());
        assert!(first_crossing(&x, &[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).is_none());
        let touch = first_crossing(&x, &[1.0, 2.0, 3.0], &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(touch.snr_db, 10.0);
    }

    #[test]
    fn identical_protocols_never_cross() {
        let cfg = NetworkConfig::from_db(2, 20, 0.0).unwrap();
        let r = crossover_scan(&cfg, &[0.0, 10.0, 20.0], (ProtocolKind::Ora, ProtocolKind::Ora), 1_000, 3).unwrap();
        assert!(r.is_none());
        assert!(crossover_scan(&cfg, &[0.0], (ProtocolKind::Ora, ProtocolKind::Ora), 1_000, 3).is_err());
    }

    #[test]
    fn baseline_names_roundtrip() {
        for b in [BaselineNetwork::Shared, BaselineNetwork::SingleCell] {
            assert_eq!(b.name().parse::<BaselineNetwork>().unwrap(), b);
        }
        assert!("both".parse::<BaselineNetwork>().is_err());
    }
}
