//! End-to-end acceptance gate. Each test exercises one headline
//! guarantee through the suite runner and prints a single pass/fail
//! line; `cargo test --test acceptance` is the release checklist.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use fock::harness::{
    run_suite, BasisConfig, GridConfig, QuadConfig, QuadModeConfig, RunConfig, SuiteReport,
    WeightDescriptor,
};
use fock::weights::{
    doubling_report, Density, DoublingConfig, DoublingVerdict, WeightSpec,
};
use fock::grid::{GridField, Meaning};
use num_complex::Complex64;

fn gaussian() -> WeightDescriptor {
    WeightDescriptor::Gaussian
}

fn quartic() -> WeightDescriptor {
    WeightDescriptor::RadialPower { alpha: 4.0, coeff: 1.0 }
}

#[allow(clippy::too_many_arguments)]
fn config(
    weight: WeightDescriptor,
    l: f64,
    n: usize,
    degree: usize,
    mode: QuadModeConfig,
    nodes: usize,
    tols: &[(&str, f64)],
) -> RunConfig {
    RunConfig {
        weight,
        grid: GridConfig { l, n },
        basis: BasisConfig { degree },
        quad: QuadConfig { mode, nodes },
        tolerances: tols.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        suites: vec![],
        output: None,
        seed: Some(7),
    }
}

/// Run a suite and report one line; panic with the check table on failure.
fn gate(label: &str, cfg: &RunConfig, suite: &str) -> SuiteReport {
    let report = match run_suite(cfg, suite) {
        Ok(r) => r,
        Err(e) => {
            println!("[FAIL] {label}: suite error {e}");
            panic!("{label}: {e}");
        }
    };
    if report.all_pass() {
        println!("[PASS] {label}");
    } else {
        println!("[FAIL] {label}");
        panic!("{label}: {:#?}", report.checks);
    }
    report
}

fn gaussian_closed_form_report() -> &'static SuiteReport {
    static REPORT: OnceLock<SuiteReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = config(gaussian(), 6.0, 129, 40, QuadModeConfig::Radial, 2048, &[]);
        run_suite(&cfg, "gaussian-closed-form").expect("closed-form suite runs")
    })
}

fn dbar_report() -> &'static SuiteReport {
    static REPORT: OnceLock<SuiteReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = config(gaussian(), 6.0, 257, 40, QuadModeConfig::Tensor, 257, &[]);
        run_suite(&cfg, "dbar-kernel").expect("dbar suite runs")
    })
}

fn gate_checks(label: &str, report: &SuiteReport, names: &[&str]) {
    let mut failed = Vec::new();
    for &name in names {
        let c = report
            .checks
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("{label}: missing check {name}"));
        if !c.pass {
            failed.push(c.clone());
        }
    }
    if failed.is_empty() {
        println!("[PASS] {label}");
    } else {
        println!("[FAIL] {label}");
        panic!("{label}: {failed:#?}");
    }
}

#[test]
fn kernel_matches_gaussian_closed_form() {
    gate_checks(
        "Gaussian kernel closed form, 100 pairs, rel err < 1e-6",
        gaussian_closed_form_report(),
        &["kernel-closed-form-rel-err"],
    );
}

#[test]
fn scale_function_exact_values() {
    gate_checks(
        "rho exactness: Gaussian (4pi)^-1/2 to 1e-6, quartic origin (8pi)^-1/4 to 1e-4",
        gaussian_closed_form_report(),
        &["rho-gaussian-abs-err", "rho-quartic-origin-abs-err"],
    );
}

#[test]
fn offdiagonal_decay_both_families() {
    let g = config(
        gaussian(),
        6.0,
        129,
        40,
        QuadModeConfig::Radial,
        1024,
        &[("eps_min", 1.8), ("eps_max", 2.2), ("coverage_min", 0.95)],
    );
    gate("Gaussian stretched decay: eps in [1.8, 2.2], coverage >= 0.95", &g, "main-estimate");

    let q = config(
        quartic(),
        4.0,
        129,
        600,
        QuadModeConfig::Radial,
        2400,
        &[("eps_min", 1e-3), ("coverage_min", 0.95), ("z_radius", 0.8)],
    );
    gate("Quartic stretched decay: eps > 0, coverage >= 0.95", &q, "main-estimate");
}

#[test]
fn diagonal_and_coarse_bounds() {
    let g = config(
        gaussian(),
        6.0,
        129,
        40,
        QuadModeConfig::Radial,
        1024,
        &[("cap", 5.0), ("gaussian_rel", 0.01), ("argmax_cap", 0.5)],
    );
    gate("Gaussian diagonal: spread <= 5, value 1/(2pi^2) +- 1%", &g, "diagonal");
    gate("Gaussian coarse: max on-diagonal within 0.5 rho", &g, "coarse");

    let q = config(
        quartic(),
        4.0,
        129,
        600,
        QuadModeConfig::Radial,
        2400,
        &[("cap", 5.0), ("z_radius", 1.2)],
    );
    gate("Quartic diagonal: spread <= 5", &q, "diagonal");
    gate("Quartic coarse: near-diagonal max dominates within 5%", &q, "coarse");
}

#[test]
fn dbar_solver_correctness() {
    gate_checks(
        "dbar: manufactured error < 1e-2 halving under refinement; orthogonality 1e-6; Pythagoras 1e-8",
        dbar_report(),
        &["manufactured-error", "refinement-ratio", "orthogonality-defect", "pythagoras-defect"],
    );
}

#[test]
fn solution_kernel_two_regimes() {
    gate_checks(
        "solution kernel: near slope in [-1.2, -0.8]; far coverage >= 0.9 for G and canonical",
        dbar_report(),
        &["near-slope", "far-coverage-g", "far-coverage-canonical"],
    );
}

#[test]
fn extremal_solution_norm_probe() {
    let g = config(
        gaussian(),
        6.0,
        129,
        80,
        QuadModeConfig::Radial,
        1024,
        &[
            ("spread_cap", 1.5),
            ("r_min", 0.5),
            ("r_max", 3.0),
            ("gaussian_norm_err", 1e-3),
            ("norm_floor", 0.1),
        ],
    );
    gate("Gaussian probe: norm ratio spread <= 1.5, nonvanishing on |z| <= 3", &g, "compact-probe");

    let q = config(
        quartic(),
        4.0,
        129,
        600,
        QuadModeConfig::Radial,
        2400,
        &[
            ("r_min", 1.0),
            ("r_max", 3.0),
            ("far_near_min", 0.2),
            ("far_near_max", 0.6),
            ("spread_cap", 100.0),
        ],
    );
    gate("Quartic probe: ||u_3|| / ||u_1|| in [0.2, 0.6]", &q, "compact-probe");
}

#[test]
fn metric_ratios_and_integrability() {
    let d = config(
        gaussian(),
        3.0,
        193,
        30,
        QuadModeConfig::Radial,
        512,
        &[("near_min", 0.98), ("near_max", 1.02)],
    );
    gate("Gaussian metric near-ratio within 2% of 1", &d, "distance-lemma");

    let gi = config(
        gaussian(),
        9.0,
        301,
        30,
        QuadModeConfig::Radial,
        512,
        &[("spread_cap", 10.0), ("sweep_radius", 1.0)],
    );
    gate("Gaussian integrability sweep: 25 centers, max/min < 10", &gi, "integrability");

    let qi = config(
        quartic(),
        3.2,
        261,
        30,
        QuadModeConfig::Radial,
        512,
        &[("spread_cap", 10.0), ("sweep_radius", 1.0)],
    );
    gate("Quartic integrability sweep: 25 centers, max/min < 10", &qi, "integrability");
}

#[test]
fn comparison_function_gadgets() {
    let cfg = config(gaussian(), 3.0, 129, 30, QuadModeConfig::Radial, 512, &[]);
    gate(
        "gadgets: curvature eps/4 within 2%; band [0, 3^eps]; constants shrink with eps",
        &cfg,
        "gadgets",
    );
}

#[test]
fn doubling_diagnostics() {
    let g = config(
        gaussian(),
        6.0,
        129,
        30,
        QuadModeConfig::Radial,
        512,
        &[("constant_min", 3.9), ("constant_max", 4.1)],
    );
    gate("Gaussian doubling constant 4 +- 0.1", &g, "doubling");

    let q = config(
        quartic(),
        10.0,
        129,
        30,
        QuadModeConfig::Radial,
        512,
        &[("r_min", 1.0), ("r_max", 8.0), ("constant_max", 100.0)],
    );
    let qrep = gate("Quartic doubling: gamma fit positive on r in [1, 8]", &q, "doubling");
    let gamma = qrep
        .checks
        .iter()
        .find(|c| c.name == "doubling-gamma")
        .expect("gamma check present")
        .value;

    // Power bounds r^gamma <~ mu(D^r) <~ r^{1/gamma} on r in [1, 8],
    // normalized at r = 1, for sampled centers.
    let mu = Density::from_spec(&WeightSpec::radial_power(4.0, 1.0).unwrap(), 10.0, 129);
    let mut ok = true;
    for &z in &[Complex64::new(0.0, 0.0), Complex64::new(0.7, 0.3), Complex64::new(0.0, -1.0)] {
        let m1 = mu.mass_in_disk(z, 1.0).unwrap();
        for k in 0..=7 {
            let r = 1.0 + k as f64;
            let ratio = mu.mass_in_disk(z, r).unwrap() / m1;
            ok &= ratio >= r.powf(gamma) / 1.5 && ratio <= 1.5 * r.powf(1.0 / gamma);
        }
    }
    // Growth-trend heuristic must flag the genuinely non-doubling density.
    let density = GridField::from_fn(4.0, 257, Meaning::Density, |z| (2.0 * z.re).exp());
    let exp_mu = Density::from_grid(density);
    let rep = doubling_report(
        &exp_mu,
        &[0.25, 0.5, 1.0, 2.0],
        &[Complex64::new(0.0, 0.0)],
        &DoublingConfig::default(),
    )
    .unwrap();
    let flagged = rep.verdict == DoublingVerdict::SuspectNonDoubling;

    if ok && flagged {
        println!("[PASS] doubling extras: power bounds on [1, 8]; exponential density flagged");
    } else {
        println!("[FAIL] doubling extras: power bounds {ok}, exponential flagged {flagged}");
        panic!("power bounds {ok}, exponential flagged {flagged} (trend {})", rep.growth_trend);
    }
}
