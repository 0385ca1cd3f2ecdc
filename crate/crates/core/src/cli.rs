//! Config-driven experiment runner.
//!
//! A config is a flat text file of `key = value` lines. `#` starts a comment,
//! lists are comma separated, keys are case sensitive and unknown keys are
//! rejected.
//!
//! | key                | meaning                                              | default              |
//! |--------------------|------------------------------------------------------|----------------------|
//! | `experiment`       | `mac-curve`, `scaling-snr`, `sweep-n`, `compare-protocols`, `optimize`, `robustness` | required |
//! | `K`                | number of cells                                      | 1 for `mac-curve`    |
//! | `N`                | users per cell                                       |                      |
//! | `snr_db`           | single SNR in dB                                     | 10 for `mac-curve`   |
//! | `snr_list_db`      | SNR sweep in dB                                      |                      |
//! | `N_list`           | user-count sweep                                     |                      |
//! | `p_list`           | ALOHA transmission probabilities                     |                      |
//! | `sigma2_list`      | CAIT error variances                                 |                      |
//! | `epsilon`, `delta` | design constants                                     | 0.01, 0.1            |
//! | `phi_g`, `rate`    | fixed IA-ORA operating point instead of a search     | searched             |
//! | `phi_g_min/max/step` | search grid over `Phi_G`                           | 0.1, 6.0, 0.1        |
//! | `rate_min/max/step`  | search grid over `R`                               | 0.5, 8.0, 0.05       |
//! | `protocols`        | protocols to compare                                 | experiment dependent |
//! | `baseline_network` | `single-cell` or `shared` network for ORA and ALOHA  | `single-cell`        |
//! | `slots`            | Monte-Carlo slots per point                          | 100000               |
//! | `seed`             | master seed                                          | 42                   |
//! | `output`           | CSV path                                             | `<experiment>.csv`   |
//!
//! Required keys per experiment:
//!
//! * `mac-curve`: `N`, `p_list`
//! * `scaling-snr`: `K`, `snr_list_db` (`N` follows the user scaling law)
//! * `sweep-n`: `K`, `N_list`, and `snr_db` or `snr_list_db`
//! * `compare-protocols`: `K`, `N`, `snr_list_db`
//! * `optimize`: `K`, `N`, `snr_db`
//! * `robustness`: `K`, `N`, `snr_db`, `sigma2_list`

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analytics::{
    mac_throughput, scaling_user_count, throughput_lower_bound, user_scaling_min_n, NetworkConfig,
    ProtocolParams, DEFAULT_DELTA, DEFAULT_EPSILON,
};
use crate::channel::CaitErrorModel;
use crate::engine::{run_arms, Arm, ThroughputStats, TrialSetup};
use crate::error::{Error, Result};
use crate::optimizer::{
    evaluate_baseline, first_crossing, grid_search, linspace_step, BaselineNetwork, GridSpec,
    MIN_SLOTS_PER_POINT,
};
use crate::protocols::{Policy, ProtocolKind};

pub const DEFAULT_SLOTS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "K",
    "N",
    "snr_db",
    "snr_list_db",
    "N_list",
    "p_list",
    "sigma2_list",
    "epsilon",
    "delta",
    "phi_g",
    "rate",
    "phi_g_min",
    "phi_g_max",
    "phi_g_step",
    "rate_min",
    "rate_max",
    "rate_step",
    "protocols",
    "baseline_network",
    "slots",
    "seed",
    "output",
];

pub const CSV_HEADER: [&str; 18] = [
    "experiment",
    "K",
    "N",
    "snr_db",
    "protocol",
    "phi_g",
    "phi_i",
    "rate",
    "nu",
    "sigma2",
    "slots",
    "seed",
    "aggregate_throughput",
    "mac_throughput",
    "empirical_p",
    "empirical_ps",
    "stderr",
    "p",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MacCurve,
    ScalingSnr,
    SweepN,
    CompareProtocols,
    Optimize,
    Robustness,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::MacCurve,
        Self::ScalingSnr,
        Self::SweepN,
        Self::CompareProtocols,
        Self::Optimize,
        Self::Robustness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MacCurve => "mac-curve",
            Self::ScalingSnr => "scaling-snr",
            Self::SweepN => "sweep-n",
            Self::CompareProtocols => "compare-protocols",
            Self::Optimize => "optimize",
            Self::Robustness => "robustness",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Self::MacCurve => &["N", "p_list"],
            Self::ScalingSnr => &["K", "snr_list_db"],
            Self::SweepN => &["K", "N_list"],
            Self::CompareProtocols => &["K", "N", "snr_list_db"],
            Self::Optimize => &["K", "N", "snr_db"],
            Self::Robustness => &["K", "N", "snr_db", "sigma2_list"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Range {
                field: "experiment".into(),
                detail: format!(
                    "unknown experiment `{s}`; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub phi_g_min: f64,
    pub phi_g_max: f64,
    pub phi_g_step: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_step: f64,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            phi_g_min: 0.1,
            phi_g_max: 6.0,
            phi_g_step: 0.1,
            rate_min: 0.5,
            rate_max: 8.0,
            rate_step: 0.05,
        }
    }
}

impl GridAxes {
    pub fn grid(&self, slots: u64) -> Result<GridSpec> {
        GridSpec::new(
            linspace_step(self.phi_g_min, self.phi_g_max, self.phi_g_step),
            linspace_step(self.rate_min, self.rate_max, self.rate_step),
            slots,
        )
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub cells: usize,
    pub users: Option<usize>,
    pub snr_db: Option<f64>,
    pub snr_list_db: Vec<f64>,
    pub n_list: Vec<usize>,
    pub p_list: Vec<f64>,
    pub sigma2_list: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// Fixed IA-ORA operating point; searched when `None`.
    pub operating_point: Option<(f64, f64)>,
    pub grid: GridAxes,
    pub protocols: Vec<ProtocolKind>,
    pub baseline: BaselineNetwork,
    pub slots: u64,
    pub seed: u64,
    pub output: PathBuf,
}

fn range(field: &str, detail: impl Into<String>) -> Error {
    Error::Range {
        field: field.into(),
        detail: detail.into(),
    }
}

struct Raw {
    values: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                detail: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    detail: "empty key".into(),
                });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    line: lineno,
                    detail: format!("unknown key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    detail: format!("empty value for `{key}`"),
                });
            }
            if let Some((first, _)) = values.insert(key.to_string(), (lineno, value.to_string())) {
                return Err(Error::Parse {
                    line: lineno,
                    detail: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
        }
        Ok(Self { values })
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.str(key)
            .map(|v| parse_value(key, v))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        match self.str(key) {
            None => Ok(Vec::new()),
            Some(v) => v.split(',').map(|item| parse_value(key, item.trim())).collect(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| range(key, format!("cannot parse `{v}`")))
}

/// Parses and validates config text. Errors name the offending line or field.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let raw = Raw::parse(raw)?;
    let Some(name) = raw.str("experiment") else {
        return Err(Error::MissingKeys {
            keys: vec!["experiment".into()],
        });
    };
    let experiment: ExperimentKind = name.parse()?;

    let mut missing: Vec<String> = experiment
        .required()
        .iter()
        .filter(|k| !raw.has(k))
        .map(|k| k.to_string())
        .collect();
    if experiment == ExperimentKind::SweepN && !raw.has("snr_db") && !raw.has("snr_list_db") {
        missing.push("snr_db".into());
    }
    if !missing.is_empty() {
        return Err(Error::MissingKeys { keys: missing });
    }

    let cells: usize = raw.scalar("K")?.unwrap_or(1);
    if cells < 1 {
        return Err(range("K", "must be at least 1"));
    }
    let users: Option<usize> = raw.scalar("N")?;
    if users == Some(0) {
        return Err(range("N", "must be at least 1"));
    }
    let default_snr = (experiment == ExperimentKind::MacCurve).then_some(10.0);
    let snr_db: Option<f64> = raw.scalar("snr_db")?.or(default_snr);
    if let Some(s) = snr_db {
        check_finite("snr_db", s)?;
    }
    let snr_list_db: Vec<f64> = raw.list("snr_list_db")?;
    for &s in &snr_list_db {
        check_finite("snr_list_db", s)?;
    }
    if snr_list_db.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(range("snr_list_db", "must be strictly ascending"));
    }
    let n_list: Vec<usize> = raw.list("N_list")?;
    if n_list.contains(&0) {
        return Err(range("N_list", "every entry must be at least 1"));
    }
    let p_list: Vec<f64> = raw.list("p_list")?;
    if p_list.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(range("p_list", "every entry must lie in (0, 1]"));
    }
    let sigma2_list: Vec<f64> = raw.list("sigma2_list")?;
    if sigma2_list.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(range("sigma2_list", "every entry must be finite and nonnegative"));
    }
    let epsilon: f64 = raw.scalar("epsilon")?.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(range("epsilon", "must lie in (0, 1)"));
    }
    let delta: f64 = raw.scalar("delta")?.unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(range("delta", "must lie in (0, 1)"));
    }

    let operating_point = match (raw.scalar::<f64>("phi_g")?, raw.scalar::<f64>("rate")?) {
        (Some(g), Some(r)) => {
            if !(g > 0.0) || !g.is_finite() {
                return Err(range("phi_g", "must be positive and finite"));
            }
            if !(r >= 0.0) || !r.is_finite() {
                return Err(range("rate", "must be nonnegative and finite"));
            }
            Some((g, r))
        }
        (None, None) => None,
        (Some(_), None) => return Err(Error::MissingKeys { keys: vec!["rate".into()] }),
        (None, Some(_)) => return Err(Error::MissingKeys { keys: vec!["phi_g".into()] }),
    };

    let d = GridAxes::default();
    let grid = GridAxes {
        phi_g_min: raw.scalar("phi_g_min")?.unwrap_or(d.phi_g_min),
        phi_g_max: raw.scalar("phi_g_max")?.unwrap_or(d.phi_g_max),
        phi_g_step: raw.scalar("phi_g_step")?.unwrap_or(d.phi_g_step),
        rate_min: raw.scalar("rate_min")?.unwrap_or(d.rate_min),
        rate_max: raw.scalar("rate_max")?.unwrap_or(d.rate_max),
        rate_step: raw.scalar("rate_step")?.unwrap_or(d.rate_step),
    };
    check_axis("phi_g", grid.phi_g_min, grid.phi_g_max, grid.phi_g_step)?;
    check_axis("rate", grid.rate_min, grid.rate_max, grid.rate_step)?;

    let protocols: Vec<ProtocolKind> = match raw.str("protocols") {
        Some(v) => v
            .split(',')
            .map(|s| s.parse().map_err(|_| range("protocols", format!("unknown protocol `{}`", s.trim()))))
            .collect::<Result<_>>()?,
        None => match experiment {
            ExperimentKind::CompareProtocols => ProtocolKind::ALL.to_vec(),
            ExperimentKind::Robustness => vec![ProtocolKind::IaOra, ProtocolKind::Ora],
            ExperimentKind::MacCurve => vec![ProtocolKind::SlottedAloha],
            _ => vec![ProtocolKind::IaOra],
        },
    };
    if protocols.is_empty() {
        return Err(range("protocols", "must list at least one protocol"));
    }
    let baseline: BaselineNetwork = raw.str("baseline_network").unwrap_or("single-cell").parse()?;

    let slots: u64 = raw.scalar("slots")?.unwrap_or(DEFAULT_SLOTS);
    if slots < 1 {
        return Err(range("slots", "must be at least 1"));
    }
    let searches = operating_point.is_none()
        && matches!(
            experiment,
            ExperimentKind::Optimize | ExperimentKind::CompareProtocols | ExperimentKind::Robustness
        );
    if searches && slots < MIN_SLOTS_PER_POINT {
        return Err(range(
            "slots",
            format!("a parameter search needs at least {MIN_SLOTS_PER_POINT} slots per point"),
        ));
    }
    let seed: u64 = raw.scalar("seed")?.unwrap_or(DEFAULT_SEED);
    let output = raw
        .str("output")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.name())));

    // Protocol-specific sanity for experiments that need multiple users.
    let needs_users = |n: usize| -> Result<()> {
        if n < 2 && protocols.contains(&ProtocolKind::IaOra) && experiment != ExperimentKind::MacCurve {
            return Err(range("N", "IA-ORA needs at least 2 users per cell"));
        }
        Ok(())
    };
    if let Some(n) = users {
        needs_users(n)?;
    }
    for &n in &n_list {
        needs_users(n)?;
    }

    Ok(ExperimentConfig {
        experiment,
        cells,
        users,
        snr_db,
        snr_list_db,
        n_list,
        p_list,
        sigma2_list,
        epsilon,
        delta,
        operating_point,
        grid,
        protocols,
        baseline,
        slots,
        seed,
        output,
    })
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(range(field, "must be finite"))
    }
}

fn check_axis(name: &str, lo: f64, hi: f64, step: f64) -> Result<()> {
    if !(lo >= 0.0) || !lo.is_finite() {
        return Err(range(&format!("{name}_min"), "must be finite and nonnegative"));
    }
    if !(hi >= lo) || !hi.is_finite() {
        return Err(range(&format!("{name}_max"), format!("must be finite and at least {name}_min")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(range(&format!("{name}_step"), "must be positive"));
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    validate_config(&text)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    /// Dimensions of the network the row was simulated on.
    pub cells: usize,
    pub users: usize,
    pub snr_db: f64,
    pub protocol: ProtocolKind,
    pub phi_g: Option<f64>,
    pub phi_i: Option<f64>,
    pub rate: f64,
    pub nu: Option<u64>,
    pub sigma2: f64,
    pub slots: u64,
    pub seed: u64,
    /// `None` for infeasible search points.
    pub stats: Option<ThroughputStats>,
    /// Transmission probability for slotted-ALOHA rows.
    pub p: Option<f64>,
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let s = self.stats.as_ref();
        vec![
            self.experiment.to_string(),
            self.cells.to_string(),
            self.users.to_string(),
            self.snr_db.to_string(),
            self.protocol.to_string(),
            opt(self.phi_g),
            opt(self.phi_i),
            self.rate.to_string(),
            opt(self.nu),
            self.sigma2.to_string(),
            self.slots.to_string(),
            self.seed.to_string(),
            opt(s.map(|s| s.aggregate_phy_throughput)),
            opt(s.map(|s| s.mac_throughput_per_cell)),
            opt(s.map(|s| s.empirical_p)),
            opt(s.map(|s| s.empirical_ps)),
            opt(s.map(|s| s.stderr)),
            opt(self.p),
        ]
    }

    pub fn throughput(&self) -> f64 {
        self.stats
            .map(|s| s.aggregate_phy_throughput)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub summary: String,
}

impl ExperimentReport {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes the CSV to `path` and the summary next to it as
    /// `<path>.summary.txt`. Returns the summary path.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| Error::Io { path: p, source }
        };
        fs::write(path, self.csv()?).map_err(io(path))?;
        let mut summary_path = path.as_os_str().to_owned();
        summary_path.push(".summary.txt");
        let summary_path = PathBuf::from(summary_path);
        fs::write(&summary_path, &self.summary).map_err(io(&summary_path))?;
        Ok(summary_path)
    }
}

/// Runs the configured experiment on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "experiment: {}\nslots per point: {}\nseed: {}",
        config.experiment, config.slots, config.seed
    );
    let rows = match config.experiment {
        ExperimentKind::MacCurve => mac_curve(config, &mut summary)?,
        ExperimentKind::ScalingSnr => scaling_snr(config, &mut summary)?,
        ExperimentKind::SweepN => sweep_n(config, &mut summary)?,
        ExperimentKind::CompareProtocols => compare_protocols(config, &mut summary)?,
        ExperimentKind::Optimize => optimize(config, &mut summary)?,
        ExperimentKind::Robustness => robustness(config, &mut summary)?,
    };
    Ok(ExperimentReport { rows, summary })
}

fn base_row(config: &ExperimentConfig, cfg: &NetworkConfig, snr_db: f64, protocol: ProtocolKind) -> ResultRow {
    ResultRow {
        experiment: config.experiment,
        cells: cfg.cells,
        users: cfg.users,
        snr_db,
        protocol,
        phi_g: None,
        phi_i: None,
        rate: 0.0,
        nu: None,
        sigma2: 0.0,
        slots: config.slots,
        seed: config.seed,
        stats: None,
        p: None,
    }
}

fn ia_ora_row(
    config: &ExperimentConfig,
    cfg: &NetworkConfig,
    snr_db: f64,
    params: &ProtocolParams,
    err: CaitErrorModel,
) -> Result<ResultRow> {
    let arm = Arm::single(
        Policy::IaOra {
            phi_g: params.phi_g,
            phi_i: params.phi_i,
        },
        params.rate,
    )?;
    let setup = TrialSetup::new(*cfg, err, config.slots, config.seed);
    let stats = run_arms(&setup, std::slice::from_ref(&arm))?[0][0];
    Ok(ResultRow {
        phi_g: Some(params.phi_g),
        phi_i: Some(params.phi_i),
        rate: params.rate,
        nu: Some(params.nu),
        sigma2: err.sigma2(),
        stats: Some(stats),
        ..base_row(config, cfg, snr_db, ProtocolKind::IaOra)
    })
}

fn baseline_row(
    config: &ExperimentConfig,
    cfg: &NetworkConfig,
    snr_db: f64,
    kind: ProtocolKind,
    err: CaitErrorModel,
) -> Result<ResultRow> {
    let e = evaluate_baseline(cfg, kind, config.baseline, err, config.slots, config.seed)?;
    Ok(ResultRow {
        phi_g: (kind == ProtocolKind::Ora).then_some(e.phi_g),
        rate: e.rate,
        sigma2: err.sigma2(),
        stats: Some(e.stats),
        p: (kind == ProtocolKind::SlottedAloha).then_some(e.network.tx_prob),
        ..base_row(config, &e.network, snr_db, kind)
    })
}

/// IA-ORA parameters: the configured operating point, or the best point of
/// the search grid under perfect CAIT.
fn tuned_params(config: &ExperimentConfig, cfg: &NetworkConfig) -> Result<ProtocolParams> {
    match config.operating_point {
        Some((g, r)) => ProtocolParams::from_gain_threshold(cfg, g, r),
        None => {
            let grid = config.grid.grid(config.slots)?;
            let opt = grid_search(cfg, &grid, config.seed)?;
            ProtocolParams::from_gain_threshold(cfg, opt.phi_g_star, opt.rate_star)
        }
    }
}

fn single_snr(config: &ExperimentConfig) -> f64 {
    config
        .snr_db
        .or_else(|| config.snr_list_db.first().copied())
        .expect("validated config carries an SNR")
}

fn mac_curve(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let users = config.users.expect("validated");
    let snr_db = single_snr(config);
    let _ = writeln!(out, "K = {}, N = {users}, snr = {snr_db} dB\n", config.cells);
    let _ = writeln!(out, "{:>10} {:>12} {:>12}", "p", "simulated", "analytic");
    let arms = config
        .p_list
        .iter()
        .map(|&p| {
            let cfg = NetworkConfig::from_db(config.cells, users, snr_db)?.with_tx_prob(p)?;
            Arm::for_kind(ProtocolKind::SlottedAloha, None, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let base = NetworkConfig::from_db(config.cells, users, snr_db)?;
    let setup = TrialSetup::new(base, CaitErrorModel::perfect(), config.slots, config.seed);
    let results = run_arms(&setup, &arms)?;
    let mut rows = Vec::new();
    for ((&p, arm), res) in config.p_list.iter().zip(&arms).zip(&results) {
        let stats = res[0];
        let analytic = mac_throughput(users, p)?;
        let _ = writeln!(out, "{p:>10} {:>12.5} {analytic:>12.5}", stats.mac_throughput_per_cell);
        rows.push(ResultRow {
            rate: arm.rates[0],
            stats: Some(stats),
            p: Some(p),
            ..base_row(config, &base, snr_db, ProtocolKind::SlottedAloha)
        });
    }
    if let Some(peak) = rows
        .iter()
        .max_by(|a, b| a.stats.unwrap().mac_throughput_per_cell.total_cmp(&b.stats.unwrap().mac_throughput_per_cell))
    {
        let _ = writeln!(
            out,
            "\npeak: p = {} with MAC throughput {:.5} (analytic maximum at p = 1/N: {:.5})",
            peak.p.unwrap(),
            peak.stats.unwrap().mac_throughput_per_cell,
            mac_throughput(users, 1.0 / users as f64)?
        );
    }
    Ok(rows)
}

fn scaling_snr(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let k = config.cells;
    let _ = writeln!(
        out,
        "K = {k}, epsilon = {}, delta = {}; N = ceil(snr^((K-1)/(1-delta)))\n",
        config.epsilon, config.delta
    );
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>4} {:>10} {:>10} {:>10} {:>12} {:>12} {:>14}",
        "snr_db", "N", "nu", "phi_g", "rate", "simulated", "stderr", "lower_bound", "min_N_scaling"
    );
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    for &db in &config.snr_list_db {
        let probe = NetworkConfig::from_db(k, 2, db)?;
        let n = scaling_user_count(k, probe.snr, config.delta).max(2);
        let cfg = NetworkConfig::from_db(k, n, db)?;
        let params = ProtocolParams::theorem(&cfg, config.epsilon, config.delta)?;
        let row = ia_ora_row(config, &cfg, db, &params, CaitErrorModel::perfect())?;
        let s = row.stats.unwrap();
        let lb = throughput_lower_bound(&cfg, config.epsilon, config.delta)?;
        let n_hat = if k >= 2 {
            user_scaling_min_n(k, cfg.snr, config.delta)?
        } else {
            1.0
        };
        let _ = writeln!(
            out,
            "{db:>8} {n:>8} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>12.4} {lb:>12.4} {n_hat:>14.1}",
            params.nu, params.phi_g, params.rate, s.aggregate_phy_throughput, s.stderr
        );
        xs.push((cfg.snr * (n as f64).ln()).log2());
        rows.push(row);
    }
    if rows.len() >= 4 {
        let tail = rows.len() / 2;
        let x = &xs[xs.len() - tail..];
        let y: Vec<f64> = rows[rows.len() - tail..].iter().map(|r| r.throughput()).collect();
        let slope = ls_slope(x, &y);
        let target = k as f64 / std::f64::consts::E * (1.0 - config.epsilon);
        let _ = writeln!(
            out,
            "\nhigh-SNR slope per log2(snr ln N): {slope:.4} (scaling-law prefactor (K/e)(1-epsilon) = {target:.4})"
        );
    }
    Ok(rows)
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn sweep_n(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let k = config.cells;
    let snrs: Vec<f64> = if config.snr_list_db.is_empty() {
        vec![single_snr(config)]
    } else {
        config.snr_list_db.clone()
    };
    let _ = writeln!(out, "K = {k}, epsilon = {}, delta = {}\n", config.epsilon, config.delta);
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>4} {:>10} {:>10} {:>12} {:>12} {:>14}",
        "snr_db", "N", "nu", "rate", "simulated", "stderr", "lower_bound", "min_N_scaling"
    );
    let mut rows = Vec::new();
    for &db in &snrs {
        for &n in &config.n_list {
            let cfg = NetworkConfig::from_db(k, n, db)?;
            let params = match config.operating_point {
                Some((g, r)) => ProtocolParams::from_gain_threshold(&cfg, g, r)?,
                None => ProtocolParams::theorem(&cfg, config.epsilon, config.delta)?,
            };
            let row = ia_ora_row(config, &cfg, db, &params, CaitErrorModel::perfect())?;
            let s = row.stats.unwrap();
            let lb = throughput_lower_bound(&cfg, config.epsilon, config.delta)?;
            let n_hat = if k >= 2 {
                user_scaling_min_n(k, cfg.snr, config.delta)?
            } else {
                1.0
            };
            let _ = writeln!(
                out,
                "{db:>8} {n:>8} {:>4} {:>10.4} {:>10.4} {:>12.4} {lb:>12.4} {n_hat:>14.1}",
                params.nu, params.rate, s.aggregate_phy_throughput, s.stderr
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

fn compare_protocols(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let (k, n) = (config.cells, config.users.expect("validated"));
    let _ = writeln!(
        out,
        "K = {k}, N = {n}; ORA and slotted ALOHA evaluated on the {} network\n",
        config.baseline
    );
    let mut header = format!("{:>8}", "snr_db");
    for p in &config.protocols {
        let _ = write!(header, " {:>18}", p.name());
    }
    let _ = writeln!(out, "{header}");
    let mut rows = Vec::new();
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); config.protocols.len()];
    for &db in &config.snr_list_db {
        let cfg = NetworkConfig::from_db(k, n, db)?;
        let mut line = format!("{db:>8}");
        for (c, &kind) in config.protocols.iter().enumerate() {
            let row = match kind {
                ProtocolKind::IaOra => {
                    let params = tuned_params(config, &cfg)?;
                    ia_ora_row(config, &cfg, db, &params, CaitErrorModel::perfect())?
                }
                _ => baseline_row(config, &cfg, db, kind, CaitErrorModel::perfect())?,
            };
            let s = row.stats.unwrap();
            let _ = write!(line, " {:>10.4} ±{:<6.4}", s.aggregate_phy_throughput, s.stderr);
            curves[c].push(s.aggregate_phy_throughput);
            rows.push(row);
        }
        let _ = writeln!(out, "{line}");
    }
    let ia = config.protocols.iter().position(|&p| p == ProtocolKind::IaOra);
    let ora = config.protocols.iter().position(|&p| p == ProtocolKind::Ora);
    if let (Some(a), Some(b)) = (ia, ora) {
        match first_crossing(&config.snr_list_db, &curves[a], &curves[b]) {
            Some(c) => {
                let _ = writeln!(
                    out,
                    "\nIA-ORA / ORA crossover: snr = {:.2} dB, throughput = {:.4}",
                    c.snr_db, c.throughput
                );
            }
            None => {
                let _ = writeln!(out, "\nIA-ORA / ORA crossover: none in the scanned range");
            }
        }
    }
    Ok(rows)
}

fn optimize(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let (k, n) = (config.cells, config.users.expect("validated"));
    let db = single_snr(config);
    let cfg = NetworkConfig::from_db(k, n, db)?;
    let grid = match config.operating_point {
        Some((g, r)) => GridSpec::new(vec![g], vec![r], config.slots.max(MIN_SLOTS_PER_POINT))?,
        None => config.grid.grid(config.slots)?,
    };
    let opt = grid_search(&cfg, &grid, config.seed)?;
    let rows: Vec<ResultRow> = opt
        .full_surface
        .iter()
        .map(|pt| {
            let nu = pt.stats.and_then(|_| {
                crate::analytics::ladder_index(pt.phi_g, pt.phi_i, cfg.snr, pt.rate, cfg.max_interferers())
                    .or(Some(0))
            });
            ResultRow {
                phi_g: Some(pt.phi_g),
                phi_i: pt.stats.map(|_| pt.phi_i),
                rate: pt.rate,
                nu,
                stats: pt.stats,
                slots: grid.slots_per_point,
                ..base_row(config, &cfg, db, ProtocolKind::IaOra)
            }
        })
        .collect();
    let feasible = opt.full_surface.iter().filter(|p| p.is_feasible()).count();
    let _ = writeln!(
        out,
        "K = {k}, N = {n}, snr = {db} dB\ngrid points: {} ({feasible} feasible)\n\
         optimum: phi_g* = {}, rate* = {}, phi_i* = {:.6}\nthroughput at optimum: {:.4} ± {:.4}",
        opt.full_surface.len(),
        opt.phi_g_star,
        opt.rate_star,
        opt.phi_i_star,
        opt.throughput_at_star,
        opt.stats_at_star.stderr
    );
    Ok(rows)
}

fn robustness(config: &ExperimentConfig, out: &mut String) -> Result<Vec<ResultRow>> {
    let (k, n) = (config.cells, config.users.expect("validated"));
    let db = single_snr(config);
    let cfg = NetworkConfig::from_db(k, n, db)?;
    let ia = config
        .protocols
        .contains(&ProtocolKind::IaOra)
        .then(|| tuned_params(config, &cfg))
        .transpose()?;
    let _ = writeln!(out, "K = {k}, N = {n}, snr = {db} dB");
    if let Some(p) = &ia {
        let _ = writeln!(
            out,
            "IA-ORA operating point (tuned under perfect CAIT, held fixed): phi_g = {}, rate = {}",
            p.phi_g, p.rate
        );
    }
    let _ = writeln!(out);
    let mut header = format!("{:>10}", "sigma2");
    for p in &config.protocols {
        let _ = write!(header, " {:>18}", p.name());
    }
    let _ = writeln!(out, "{header}");
    let mut rows = Vec::new();
    for &s2 in &config.sigma2_list {
        let err = CaitErrorModel::new(s2)?;
        let mut line = format!("{s2:>10}");
        for &kind in &config.protocols {
            let row = match kind {
                ProtocolKind::IaOra => ia_ora_row(config, &cfg, db, ia.as_ref().expect("tuned"), err)?,
                _ => baseline_row(config, &cfg, db, kind, err)?,
            };
            let s = row.stats.unwrap();
            let _ = write!(line, " {:>10.4} ±{:<6.4}", s.aggregate_phy_throughput, s.stderr);
            rows.push(row);
        }
        let _ = writeln!(out, "{line}");
    }
    Ok(rows)
}
