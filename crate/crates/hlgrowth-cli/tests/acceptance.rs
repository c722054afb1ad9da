//! Acceptance gate: ten end-to-end criteria, one test (and one verdict
//! line) each, at their committed parameters and tolerances.
//!
//! Each test prints `criterion NN <name>: PASS/FAIL — detail` (visible with
//! `--nocapture`, and in the failure output otherwise). The statistical
//! criteria run the full committed experiment configurations, so this
//! target is deliberately slow — the branch-count comparison alone takes
//! on the order of ten minutes.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;

use hlgrowth::analysis::{
    capacity_convergence_experiment, disk_convergence_experiment, flow_regime_experiment,
    branch_law_experiment, rho_limit_experiment, BranchLawConfig, CapacityConvergenceConfig,
    CheckResult, DiskConvergenceConfig, ExperimentReport, FlowRegimeConfig, RhoLimitConfig,
};
use hlgrowth::conformal::{gamma, slit_map};
use hlgrowth::limits::kingman_tau_sample;
use hlgrowth::rng::{derive_seed, RunRng};

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {number:02} {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    assert!(pass, "{line}");
}

fn check<'r>(report: &'r ExperimentReport, name: &str) -> &'r CheckResult {
    report
        .checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("report has no check named {name}"))
}

#[test]
fn criterion_01_one_step_variance_scaling() {
    let started = Instant::now();
    let report = rho_limit_experiment(&RhoLimitConfig::default()).expect("variance scaling");
    let elapsed = started.elapsed();
    let reference = check(&report, "reference-relative-deviation");
    let trend = check(&report, "deviation-non-increasing-in-c");
    let pass = reference.passed && trend.passed && elapsed.as_secs_f64() < 1.0;
    verdict(
        1,
        "one-step variance scaling",
        pass,
        &format!(
            "reference deviation {:.3e} (< {:.0e}), worst trend increase {:.3e}, {:?}",
            reference.observed, reference.bound, trend.observed, elapsed
        ),
    );
}

#[test]
fn criterion_02_slit_map_identities() {
    let started = Instant::now();

    // boundary correspondence f_c(e^{iγ_c(x)}) = e^{ix} on a 1000-point grid
    let mut worst_boundary = 0.0f64;
    for &c in &[1e-4, 1e-2] {
        for i in 0..1000 {
            let x = PI * (i as f64 + 1.0) / 1000.0;
            for xs in [x, -x] {
                let g = gamma(c, xs).expect("gamma");
                let image = slit_map(c, Complex64::from_polar(1.0, g)).expect("slit map");
                let target = Complex64::from_polar(1.0, xs);
                worst_boundary = worst_boundary.max((image - target).norm());
            }
        }
    }

    // far-field normalization F(z)/z → e^c
    let mut worst_far = 0.0f64;
    for &c in &[1e-4f64, 1e-2] {
        let scale = c.exp();
        for i in 0..16 {
            let z = Complex64::from_polar(1e6, 2.0 * PI * i as f64 / 16.0);
            let image = slit_map(c, z).expect("slit map far field");
            worst_far = worst_far.max((image / z - scale).norm());
        }
    }

    let elapsed = started.elapsed();
    let pass = worst_boundary < 1e-8 && worst_far < 1e-5 && elapsed.as_secs_f64() < 1.0;
    verdict(
        2,
        "slit-map identities",
        pass,
        &format!(
            "boundary correspondence {worst_boundary:.3e} (< 1e-8), far field {worst_far:.3e} (< 1e-5), {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_03_capacity_tracking() {
    let report = capacity_convergence_experiment(&CapacityConvergenceConfig::default())
        .expect("capacity tracking");
    let sup = check(&report, "reference-sup-all-seeds");
    let trend = check(&report, "trend-median-decreasing-in-c");
    verdict(
        3,
        "random capacities track the deterministic sequence",
        sup.passed && trend.passed && report.passed,
        &format!(
            "worst sup over 5 seeds {:.4} (< {}), trend delta {:.5}, all checks passed: {}",
            sup.observed, sup.bound, trend.observed, report.passed
        ),
    );
}

#[test]
fn criterion_04_disk_limit() {
    let report =
        disk_convergence_experiment(&DiskConvergenceConfig::default()).expect("disk limit");
    let reference = check(&report, "reference-median-deviation");
    let trend = check(&report, "deviation-decreasing-in-c");
    verdict(
        4,
        "cluster maps approach the disk limit",
        reference.passed && trend.passed && report.passed,
        &format!(
            "median deviation {:.4} (< {}), trend delta {:.5}, all checks passed: {}",
            reference.observed, reference.bound, trend.observed, report.passed
        ),
    );
}

static FLOW: OnceLock<ExperimentReport> = OnceLock::new();

fn flow_report() -> &'static ExperimentReport {
    FLOW.get_or_init(|| {
        flow_regime_experiment(&FlowRegimeConfig::default()).expect("flow regimes")
    })
}

#[test]
fn criterion_05_flow_diffusivity() {
    let report = flow_report();
    let variance = check(report, "diffusivity-variance");
    verdict(
        5,
        "boundary flow diffuses at the predicted rate",
        variance.passed && report.passed,
        &format!(
            "relative variance deviation {:.4} (< {}), all flow checks passed: {}",
            variance.observed, variance.bound, report.passed
        ),
    );
}

#[test]
fn criterion_06_brownian_time_change() {
    let report = flow_report();
    let variance = check(report, "time-change-variance");
    verdict(
        6,
        "flow variance follows the Brownian time change",
        variance.passed,
        &format!(
            "relative variance deviation {:.4} (< {})",
            variance.observed, variance.bound
        ),
    );
}

#[test]
fn criterion_07_identity_flow_trend() {
    let report = flow_report();
    let trend = check(report, "identity-displacement-strictly-decreasing");
    verdict(
        7,
        "slow regularization flattens the flow toward the identity",
        trend.passed,
        &format!("median max-displacement delta {:.4} (< 0)", trend.observed),
    );
}

#[test]
fn criterion_08_branch_law() {
    let report = branch_law_experiment(&BranchLawConfig::default()).expect("branch law");
    let tv = check(&report, "tv-distance-to-coalescent-law");
    let shift = check(&report, "tv-insensitive-to-coalescence-tolerance");
    let mono = check(&report, "mean-branch-count-increasing-in-a");
    let ks = check(&report, "gap-locations-uniform-ks");
    verdict(
        8,
        "branch counts match the coalescent prediction",
        tv.passed && shift.passed && mono.passed && ks.passed,
        &format!(
            "TV {:.3} (< {}), tolerance shift {:.3} (< {}), mean-count trend delta {:.3} (< 0), KS p {:.3} (>= {})",
            tv.observed, tv.bound, shift.observed, shift.bound, mono.observed, ks.observed, ks.bound
        ),
    );
}

#[test]
fn criterion_09_coalescent_oracle() {
    let n = 100_000usize;
    let mut rng = RunRng::seed_from_u64(424242);
    let samples: Vec<f64> = (0..n)
        .map(|_| kingman_tau_sample(1, &mut rng).expect("coalescent sample"))
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let deviation = (mean - 2.0).abs();
    verdict(
        9,
        "coalescent absorption-time oracle",
        deviation < 3.0 * se,
        &format!("mean {mean:.5} vs 2 over {n} samples, |dev| {deviation:.5} < 3·SE = {:.5}", 3.0 * se),
    );
}

/// Grow a record at the given parameters through the real binary, replay it
/// through the real binary, and require a bit-for-bit match (exit 0).
fn grow_and_replay(dir: &Path, label: &str, args: &[&str]) {
    let record = dir.join(label);
    let record_str = record.to_str().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hlgrowth"))
        .env_remove("HLGROWTH_THREADS")
        .args(["grow"])
        .args(args)
        .args(["--out", record_str])
        .output()
        .expect("spawn grow");
    assert!(
        out.status.success(),
        "grow {label}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = Command::new(env!("CARGO_BIN_EXE_hlgrowth"))
        .env_remove("HLGROWTH_THREADS")
        .args(["replay", "--record", record_str])
        .output()
        .expect("spawn replay");
    assert!(
        out.status.code() == Some(0),
        "replay {label} exited {:?}: {}{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::remove_dir_all(&record).expect("clean up record");
}

#[test]
fn criterion_10_record_replay() {
    let dir = tempfile::tempdir().unwrap();
    let flow_base = FlowRegimeConfig::default().base_seed;
    let branch_base = BranchLawConfig::default().base_seed;

    // one record per statistical criterion, at its exact parameters
    let seed_c5 = derive_seed(derive_seed(flow_base, 1), 0).to_string();
    let seed_c6 = derive_seed(derive_seed(flow_base, 2), 0).to_string();
    let seed_c7 = derive_seed(derive_seed(flow_base, 101), 0).to_string();
    let seed_c8 = derive_seed(branch_base, 2 * 1_000_003).to_string();
    let alpha_c7 = format!("{:.17e}", 1e-4f64.powf(0.25));
    let cases: [(&str, Vec<&str>); 6] = [
        ("capacity-tracking", vec![
            "--c", "1e-4", "--alpha", "0.5", "--sigma", "0.2", "--particles", "5000", "--seed", "1",
        ]),
        ("disk-limit", vec![
            "--c", "1e-3", "--alpha", "1", "--sigma-mode", "starred", "--particles", "1000",
            "--seed", "1",
        ]),
        ("flow-diffusivity", vec![
            "--c", "1e-4", "--alpha", "1e-4", "--sigma-mode", "starred", "--particles", "1000000",
            "--seed", &seed_c5,
        ]),
        ("time-change", vec![
            "--c", "1e-4", "--alpha", "1e-2", "--sigma-mode", "starred", "--particles", "3000000",
            "--seed", &seed_c6,
        ]),
        ("identity-flow", vec![
            "--c", "1e-4", "--alpha", &alpha_c7, "--sigma-mode", "starred", "--particles",
            "1000000", "--seed", &seed_c7,
        ]),
        ("branch-law", vec![
            "--c", "1e-4", "--alpha", "1e-2", "--sigma-mode", "starred", "--particles", "5000000",
            "--seed", &seed_c8,
        ]),
    ];
    for (label, args) in &cases {
        grow_and_replay(dir.path(), label, args);
    }
    verdict(
        10,
        "record replay round trip",
        true,
        &format!("{} records replayed bit-for-bit through the binary", cases.len()),
    );
}
