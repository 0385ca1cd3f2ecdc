//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fail. Pass criterion ids such as `ac7` to run a subset.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iaora::analytics::{
    decode_prob_tilde, erlang_cdf, erlang_cdf_lower_bound, mac_throughput, scaling_user_count,
    throughput_lower_bound, ProtocolParams,
};
use iaora::cli::{run_experiment, validate_config};
use iaora::engine::{run_trials, with_workers};
use iaora::optimizer::{
    crossover_scan_with, evaluate_baseline, grid_search, BaselineNetwork, CrossoverOptions,
    CrossoverScan, GridSpec,
};
use iaora::{CaitErrorModel, NetworkConfig, ProtocolKind};

const SLOTS: u64 = 100_000;
const SEED: u64 = 42;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

// --- AC1 ---------------------------------------------------------------------

fn mac_curve() -> Verdict {
    let p = 0.01;
    let cfg = NetworkConfig::from_db(1, 100, 10.0).unwrap().with_tx_prob(p).unwrap();
    let s = run_trials(&cfg, ProtocolKind::SlottedAloha, None, CaitErrorModel::perfect(), SLOTS, SEED).unwrap();
    let sim_ok = (s.mac_throughput_per_cell - 0.3697).abs() <= 0.005;
    let closed = 100.0 * p * (1.0 - p).powi(99);
    let analytic = mac_throughput(100, p).unwrap();
    // floating-point exactness: agreement to a few ulps
    let exact = (analytic - closed).abs() <= 4.0 * f64::EPSILON * closed;
    verdict(
        sim_ok && exact,
        format!(
            "simulated singleton fraction {:.5} (target 0.3697 +- 0.005); analytic {analytic} vs closed form {closed}",
            s.mac_throughput_per_cell
        ),
    )
}

// --- AC2 ---------------------------------------------------------------------

fn lemma_bound_suite() -> Verdict {
    let mut violations = 0;
    let mut checked = 0;
    for k in 2..=8usize {
        for i in 0..1000 {
            let x = 2.0 * i as f64 / 1000.0;
            let f = erlang_cdf(x, (k - 1) as u32).unwrap();
            let lb = erlang_cdf_lower_bound(x, k).unwrap();
            checked += 1;
            if f < lb {
                violations += 1;
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations over {checked} (K, x) points"))
}

// --- AC3 ---------------------------------------------------------------------

fn incomplete_beta_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut worst_at = (0, 0, 0);
    for _ in 0..50 {
        let k: usize = rng.random_range(2..=8);
        let max_n = 10_000 / (k - 1);
        // log-uniform N so both small and large cells are covered
        let n = ((rng.random::<f64>() * (max_n as f64 / 2.0).ln()).exp() * 2.0).floor() as usize;
        let n = n.clamp(2, max_n);
        let big = ((k - 1) * n) as u64;
        let nu = rng.random_range(0..=(4 * (k as u64 - 1) + 10).min(big - 1));
        let oracle = common::reg_inc_beta_quadrature(1.0 - 1.0 / n as f64, (big - nu) as f64, (nu + 1) as f64);
        let got = decode_prob_tilde(k, n, nu).unwrap();
        let r = common::rel(got, oracle);
        if r > worst {
            worst = r;
            worst_at = (k, n, nu);
        }
    }
    verdict(
        worst <= 1e-8,
        format!(
            "worst relative error {worst:.2e} at (K, N, nu) = {worst_at:?} over 50 triples (tolerance 1e-8)"
        ),
    )
}

// --- AC4 ---------------------------------------------------------------------

fn threshold_calibration() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for &(k, n, phi_g, rate) in &[(2usize, 100usize, 1.70, 3.64), (3, 50, 1.70, 2.14), (4, 50, 1.90, 1.54)] {
        let cfg = NetworkConfig::from_db(k, n, 10.0).unwrap();
        let params = ProtocolParams::from_gain_threshold(&cfg, phi_g, rate).unwrap();
        let s = run_trials(&cfg, ProtocolKind::IaOra, Some(&params), CaitErrorModel::perfect(), SLOTS, SEED).unwrap();
        let z = (s.empirical_p - 1.0 / n as f64) / s.empirical_p_stderr;
        ok &= z.abs() <= 3.0;
        parts.push(format!("(K={k}, N={n}) p={:.6} z={z:+.2}", s.empirical_p));
    }
    verdict(ok, parts.join("; "))
}

// --- AC5 ---------------------------------------------------------------------

fn bound_dominance() -> Verdict {
    let (eps, delta) = (0.01, 0.1);
    let mut ok = true;
    let mut parts = Vec::new();
    for &db in &[20.0, 25.0, 30.0] {
        let snr = iaora::analytics::db_to_linear(db);
        let n = scaling_user_count(2, snr, delta);
        let cfg = NetworkConfig::from_db(2, n, db).unwrap();
        let params = ProtocolParams::theorem(&cfg, eps, delta).unwrap();
        let s = run_trials(&cfg, ProtocolKind::IaOra, Some(&params), CaitErrorModel::perfect(), SLOTS, SEED).unwrap();
        let lb = throughput_lower_bound(&cfg, eps, delta).unwrap();
        let pass = s.aggregate_phy_throughput >= lb - 3.0 * s.stderr;
        ok &= pass;
        parts.push(format!(
            "{db} dB N={n} nu={}: sim {:.4} +- {:.4} vs bound {lb:.4}",
            params.nu, s.aggregate_phy_throughput, s.stderr
        ));
    }
    verdict(ok, parts.join("; "))
}

// --- AC6 ---------------------------------------------------------------------

fn table_two_closeness() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let grid = GridSpec::standard(SLOTS).unwrap();
    for &(k, phi_g, rate) in &[(2usize, 1.70, 3.64), (3, 1.90, 2.45)] {
        let cfg = NetworkConfig::from_db(k, 100, 10.0).unwrap();
        let opt = grid_search(&cfg, &grid, SEED).unwrap();
        let params = ProtocolParams::from_gain_threshold(&cfg, phi_g, rate).unwrap();
        let at = run_trials(&cfg, ProtocolKind::IaOra, Some(&params), CaitErrorModel::perfect(), SLOTS, SEED).unwrap();
        let gap = (at.aggregate_phy_throughput - opt.throughput_at_star).abs() / opt.throughput_at_star;
        ok &= gap <= 0.05;
        parts.push(format!(
            "K={k}: at ({phi_g}, {rate}) {:.4}, grid optimum {:.4} at ({}, {}), gap {:.2}%",
            at.aggregate_phy_throughput,
            opt.throughput_at_star,
            opt.phi_g_star,
            opt.rate_star,
            100.0 * gap
        ));
    }
    verdict(ok, parts.join("; "))
}

// --- AC7 / AC8 -----------------------------------------------------------------

fn snr_grid(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(f64::from).collect()
}

fn scan(k: usize, n: usize, snrs: &[f64]) -> CrossoverScan {
    let cfg = NetworkConfig::from_db(k, n, 0.0).unwrap();
    let opts = CrossoverOptions::standard(SLOTS).unwrap();
    crossover_scan_with(&cfg, snrs, (ProtocolKind::IaOra, ProtocolKind::Ora), SLOTS, SEED, &opts).unwrap()
}

fn k2_scan() -> &'static CrossoverScan {
    static SCAN: OnceLock<CrossoverScan> = OnceLock::new();
    SCAN.get_or_init(|| scan(2, 100, &snr_grid(0, 40, 2)))
}

fn table_three_crossover() -> Verdict {
    let two = k2_scan();
    let four = scan(4, 50, &snr_grid(0, 20, 2));
    let mut ok = true;
    let mut parts = Vec::new();
    match two.crossover {
        Some(c) => {
            let pass = (c.snr_db - 22.0).abs() <= 3.0 && (c.throughput - 3.59).abs() <= 0.4;
            ok &= pass;
            parts.push(format!("K=2, N=100: {:.2} dB at {:.3} (target 22 +- 3 dB, 3.59 +- 0.4)", c.snr_db, c.throughput));
        }
        None => {
            ok = false;
            parts.push("K=2, N=100: no crossover in 0..40 dB".into());
        }
    }
    match four.crossover {
        Some(c) => {
            ok &= (c.snr_db - 7.0).abs() <= 3.0;
            parts.push(format!("K=4, N=50: {:.2} dB at {:.3} (target 7 +- 3 dB)", c.snr_db, c.throughput));
        }
        None => {
            ok = false;
            parts.push("K=4, N=50: no crossover in 0..20 dB".into());
        }
    }
    verdict(ok, parts.join("; "))
}

fn protocol_ordering() -> Verdict {
    let scan = k2_scan();
    let mut ok = true;
    let mut worst_ora = f64::INFINITY;
    let mut worst_aloha = f64::INFINITY;
    for (i, &db) in scan.snr_db.iter().enumerate() {
        if db > 20.0 {
            continue;
        }
        let ia = scan.first[i].stats;
        let ora = scan.second[i].stats;
        let cfg = NetworkConfig::from_db(2, 100, db).unwrap();
        let aloha = evaluate_baseline(
            &cfg,
            ProtocolKind::SlottedAloha,
            BaselineNetwork::default(),
            CaitErrorModel::perfect(),
            SLOTS,
            SEED,
        )
        .unwrap()
        .stats;
        let m_ora = (ia.aggregate_phy_throughput - ora.aggregate_phy_throughput) / combined_se(ia.stderr, ora.stderr);
        let m_aloha = (ia.aggregate_phy_throughput - aloha.aggregate_phy_throughput) / combined_se(ia.stderr, aloha.stderr);
        worst_ora = worst_ora.min(m_ora);
        worst_aloha = worst_aloha.min(m_aloha);
        ok &= m_ora >= -2.0 && m_aloha >= -2.0;
    }
    let at = |db: f64| {
        let i = scan.snr_db.iter().position(|&s| s == db).unwrap();
        scan.first[i].stats.aggregate_phy_throughput
    };
    let (t30, t40) = (at(30.0), at(40.0));
    let sat = (t40 - t30).abs() / t30;
    ok &= sat <= 0.10;
    verdict(
        ok,
        format!(
            "0..20 dB: min (IA-ORA - ORA)/se = {worst_ora:+.1}, min (IA-ORA - ALOHA)/se = {worst_aloha:+.1}; \
             saturation 30 dB {t30:.4} vs 40 dB {t40:.4} ({:.2}%)",
            100.0 * sat
        ),
    )
}

// --- AC9 ---------------------------------------------------------------------

fn robustness() -> Verdict {
    let cfg = NetworkConfig::from_db(2, 100, 10.0).unwrap();
    let opt = grid_search(&cfg, &GridSpec::standard(SLOTS).unwrap(), SEED).unwrap();
    let params = ProtocolParams::from_gain_threshold(&cfg, opt.phi_g_star, opt.rate_star).unwrap();
    let sigmas = [0.0, 1e-3, 1e-2, 1e-1, 1.0];
    let mut ia = Vec::new();
    let mut ora = Vec::new();
    for &s2 in &sigmas {
        let err = CaitErrorModel::new(s2).unwrap();
        ia.push(run_trials(&cfg, ProtocolKind::IaOra, Some(&params), err, SLOTS, SEED).unwrap());
        ora.push(evaluate_baseline(&cfg, ProtocolKind::Ora, BaselineNetwork::default(), err, SLOTS, SEED).unwrap().stats);
    }
    let t = |s: &iaora::ThroughputStats| s.aggregate_phy_throughput;
    let drop = (t(&ia[1]) - t(&ia[0])).abs() / t(&ia[0]);
    let mut ok = drop <= 0.03;
    let mut dominance = true;
    let mut monotone = true;
    for i in 0..sigmas.len() {
        dominance &= t(&ia[i]) - t(&ora[i]) > -2.0 * combined_se(ia[i].stderr, ora[i].stderr);
        if i > 0 {
            for c in [&ia, &ora] {
                monotone &= t(&c[i]) <= t(&c[i - 1]) + 2.0 * combined_se(c[i].stderr, c[i - 1].stderr);
            }
        }
    }
    ok &= dominance && monotone;
    let curve = |c: &[iaora::ThroughputStats]| c.iter().map(|s| format!("{:.3}", t(s))).collect::<Vec<_>>().join("/");
    verdict(
        ok,
        format!(
            "IA-ORA {} vs ORA {} over sigma2 {:?}; sigma2=1e-3 change {:.2}% (limit 3%); dominance {dominance}, monotone {monotone}",
            curve(&ia),
            curve(&ora),
            sigmas,
            100.0 * drop
        ),
    )
}

// --- AC10 --------------------------------------------------------------------

fn reproducibility() -> Verdict {
    let coarse = "phi_g_min = 0.5\nphi_g_max = 3\nphi_g_step = 0.5\nrate_min = 0.5\nrate_max = 5\nrate_step = 0.5\n";
    let configs = [
        "experiment = mac-curve\nN = 50\np_list = 0.01, 0.02, 0.05\nslots = 5000\n".to_string(),
        "experiment = scaling-snr\nK = 2\nsnr_list_db = 0, 5, 10\nslots = 3000\n".to_string(),
        "experiment = sweep-n\nK = 2\nN_list = 20, 50\nsnr_db = 10\nslots = 3000\n".to_string(),
        format!("experiment = compare-protocols\nK = 2\nN = 30\nsnr_list_db = 0, 10\nslots = 2000\n{coarse}"),
        format!("experiment = optimize\nK = 3\nN = 30\nsnr_db = 5\nslots = 2000\n{coarse}"),
        format!("experiment = robustness\nK = 2\nN = 30\nsnr_db = 10\nsigma2_list = 0, 0.01, 0.1\nslots = 2000\n{coarse}"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for text in &configs {
        let cfg = validate_config(text).unwrap();
        let csv = |w: usize| with_workers(w, || run_experiment(&cfg)).unwrap().unwrap().csv().unwrap();
        let base = csv(1);
        let same = [2usize, 4, 7].iter().all(|&w| csv(w) == base);
        ok &= same;
        parts.push(format!("{} {}", cfg.experiment, if same { "identical" } else { "DIFFERS" }));
    }
    verdict(ok, format!("workers 1/2/4/7: {}", parts.join(", ")))
}

type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1", "MAC curve", mac_curve),
        ("AC2", "leakage CDF lower bound", lemma_bound_suite),
        ("AC3", "decoding probability as incomplete beta", incomplete_beta_identity),
        ("AC4", "threshold calibration", threshold_calibration),
        ("AC5", "lower-bound dominance", bound_dominance),
        ("AC6", "optimized-point closeness", table_two_closeness),
        ("AC7", "IA-ORA / ORA crossover", table_three_crossover),
        ("AC8", "protocol ordering and saturation", protocol_ordering),
        ("AC9", "robustness to CAIT errors", robustness),
        ("AC10", "reproducibility across workers", reproducibility),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (id, _, _) in &criteria {
            println!("{}: test", id.to_lowercase());
        }
        return;
    }
    let filters: Vec<String> = args
        .iter()
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_lowercase())
        .collect();
    let selected: Vec<&Criterion> = criteria
        .iter()
        .filter(|(id, _, _)| {
            let id = id.to_lowercase();
            filters.is_empty() || filters.iter().any(|f| id == *f)
        })
        .collect();

    println!("\nrunning {} acceptance criteria", selected.len());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (id, name, f) in selected {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!(
            "{id:<5} {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed.push(*id);
        }
    }
    if failed.is_empty() {
        println!("\nacceptance: all selected criteria passed\n");
    } else {
        println!("\nacceptance: FAILED {}\n", failed.join(", "));
        std::process::exit(1);
    }
}
