//! Suite runner: configuration, deterministic sampling, named check
//! suites, and plot-data export.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bergman::{
    coarse_check, decay_fit, diagonal_check, submean_check, DecayModel, KernelModel,
};
use crate::dbar::{
    build_covering, canonical_solve, cauchy_transform, compactness_probe, kernel_estimate_check,
    minimal_solution_bound_check,
};
use crate::error::{FockError, Result};
use crate::gadgets::proof_gadget_suite;
use crate::grid::ComplexGrid;
use crate::metric::{build_metric_graph, distance_bounds_check, integrability_check};
use crate::weights::{
    doubling_report, laplacian, Bump, Density, DoublingConfig, DoublingVerdict, RadialPower,
    WeightSpec,
};

pub const DEFAULT_SEED: u64 = 7;

/// Registered suite names, in the order `run` executes them when the
/// config lists them all.
pub const SUITE_NAMES: &[&str] = &[
    "gaussian-closed-form",
    "doubling",
    "main-estimate",
    "diagonal",
    "coarse",
    "distance-lemma",
    "integrability",
    "submean",
    "gadgets",
    "dbar-kernel",
    "compact-probe",
    "lp-bounds",
];

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

/// Serializable weight description for config files and the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightDescriptor {
    Gaussian,
    RadialPower { alpha: f64, coeff: f64 },
    Perturbed { alpha: f64, coeff: f64, bumps: Vec<BumpDescriptor> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BumpDescriptor {
    pub center: [f64; 2],
    pub height: f64,
    pub width: f64,
}

impl WeightDescriptor {
    pub fn to_spec(&self) -> Result<WeightSpec> {
        match self {
            WeightDescriptor::Gaussian => Ok(WeightSpec::gaussian()),
            WeightDescriptor::RadialPower { alpha, coeff } => {
                WeightSpec::radial_power(*alpha, *coeff)
            }
            WeightDescriptor::Perturbed { alpha, coeff, bumps } => {
                let base = RadialPower::new(*alpha, *coeff)?;
                let bumps = bumps
                    .iter()
                    .map(|b| Bump {
                        center: Complex64::new(b.center[0], b.center[1]),
                        height: b.height,
                        width: b.width,
                    })
                    .collect();
                WeightSpec::perturbed(base, bumps)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<WeightDescriptor> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("variant") || msg.contains("`family`") {
                FockError::Config(format!("weight.family: {msg}"))
            } else {
                FockError::Config(format!("weight: {msg}"))
            }
        })
    }

    fn is_gaussian(&self) -> bool {
        match self {
            WeightDescriptor::Gaussian => true,
            WeightDescriptor::RadialPower { alpha, coeff } => {
                (alpha - 2.0).abs() < 1e-12 && (coeff - 1.0).abs() < 1e-12
            }
            WeightDescriptor::Perturbed { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width of the square computational box.
    #[serde(rename = "L")]
    pub l: f64,
    /// Nodes per side.
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum QuadModeConfig {
    Radial,
    Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    pub mode: QuadModeConfig,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub weight: WeightDescriptor,
    pub grid: GridConfig,
    pub basis: BasisConfig,
    pub quad: QuadConfig,
    /// Per-check numeric knobs; unknown keys are ignored by suites.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| FockError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.l > 0.0) || self.grid.n < 9 {
            return Err(FockError::Config(format!(
                "grid: need L > 0 and n >= 9, got L={}, n={}",
                self.grid.l, self.grid.n
            )));
        }
        if self.basis.degree == 0 || self.quad.nodes == 0 {
            return Err(FockError::Config("basis.degree and quad.nodes must be positive".into()));
        }
        for (k, v) in &self.tolerances {
            if !v.is_finite() || *v <= 0.0 {
                return Err(FockError::Config(format!("tolerances.{k} must be a positive real")));
            }
        }
        for s in &self.suites {
            if !SUITE_NAMES.contains(&s.as_str()) {
                return Err(FockError::UnknownSuite(s.clone()));
            }
        }
        self.weight.to_spec()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sampling seed: the FOCK_SEED environment variable wins over the
    /// config field, which wins over the default.
    pub fn effective_seed(&self) -> u64 {
        if let Ok(s) = std::env::var("FOCK_SEED") {
            if let Ok(v) = s.trim().parse::<u64>() {
                return v;
            }
        }
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    fn build_model(&self, spec: &WeightSpec) -> Result<KernelModel> {
        match self.quad.mode {
            QuadModeConfig::Radial => KernelModel::build_radial_only(
                spec,
                self.basis.degree,
                self.grid.l,
                self.quad.nodes,
            ),
            QuadModeConfig::Tensor => {
                KernelModel::build(spec, self.basis.degree, self.grid.l, self.grid.n)
            }
        }
    }
}

// ---------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    Upper { max: f64 },
    Lower { min: f64 },
    Range { min: f64, max: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn upper(name: &str, value: f64, max: f64) -> Check {
        Check { name: name.into(), value, bound: Bound::Upper { max }, pass: value <= max }
    }

    pub fn lower(name: &str, value: f64, min: f64) -> Check {
        Check { name: name.into(), value, bound: Bound::Lower { min }, pass: value >= min }
    }

    pub fn range(name: &str, value: f64, min: f64, max: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound: Bound::Range { min, max },
            pass: value >= min && value <= max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub weight: WeightDescriptor,
    pub config_hash: String,
    pub seed: u64,
    pub elapsed_ms: u128,
    pub checks: Vec<Check>,
    pub tables: BTreeMap<String, Table>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.suite));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Render a named table from the report as CSV text.
pub fn emit_plot_data(report: &SuiteReport, table: &str) -> Result<String> {
    let t = report
        .tables
        .get(table)
        .ok_or_else(|| FockError::UnknownTable(table.to_string()))?;
    let mut out = String::new();
    out.push_str(&t.columns.join(","));
    out.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Write the report JSON plus one CSV per table into `dir`.
pub fn write_report(report: &SuiteReport, dir: &Path) -> Result<()> {
    report.write_json(dir)?;
    for name in report.tables.keys() {
        let csv = emit_plot_data(report, name)?;
        std::fs::write(dir.join(format!("{}.{}.csv", report.suite, name)), csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------

/// Run one named suite to completion.
pub fn run_suite(config: &RunConfig, suite: &str) -> Result<SuiteReport> {
    config.validate()?;
    let seed = config.effective_seed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let (checks, tables) = match suite {
        "gaussian-closed-form" => suite_gaussian_closed_form(config, &mut rng)?,
        "doubling" => suite_doubling(config, &mut rng)?,
        "main-estimate" => suite_main_estimate(config, &mut rng)?,
        "diagonal" => suite_diagonal(config, &mut rng)?,
        "coarse" => suite_coarse(config, &mut rng)?,
        "distance-lemma" => suite_distance_lemma(config, &mut rng)?,
        "integrability" => suite_integrability(config, &mut rng)?,
        "submean" => suite_submean(config, &mut rng)?,
        "gadgets" => suite_gadgets(config, &mut rng)?,
        "dbar-kernel" => suite_dbar_kernel(config, &mut rng)?,
        "compact-probe" => suite_compact_probe(config, &mut rng)?,
        "lp-bounds" => suite_lp_bounds(config, &mut rng)?,
        other => return Err(FockError::UnknownSuite(other.to_string())),
    };
    Ok(SuiteReport {
        suite: suite.to_string(),
        weight: config.weight.clone(),
        config_hash: config.hash(),
        seed,
        elapsed_ms: start.elapsed().as_millis(),
        checks,
        tables,
    })
}

/// Run every suite listed in the config, writing reports to the output
/// directory when one is set. An empty suite list is a no-op.
pub fn run(config: &RunConfig, parallel: bool) -> Result<Vec<SuiteReport>> {
    config.validate()?;
    let reports: Vec<SuiteReport> = if parallel {
        use rayon::prelude::*;
        config
            .suites
            .par_iter()
            .map(|s| run_suite(config, s))
            .collect::<Result<Vec<_>>>()?
    } else {
        config
            .suites
            .iter()
            .map(|s| run_suite(config, s))
            .collect::<Result<Vec<_>>>()?
    };
    if let Some(dir) = &config.output {
        for r in &reports {
            write_report(r, dir)?;
        }
    }
    Ok(reports)
}

// ---------------------------------------------------------------------
// Sampling helpers
// ---------------------------------------------------------------------

fn sample_disk(rng: &mut ChaCha8Rng, rmax: f64) -> Complex64 {
    let r = rmax * rng.gen::<f64>().sqrt();
    let theta = 2.0 * PI * rng.gen::<f64>();
    Complex64::from_polar(r, theta)
}

fn chi(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

type SuiteBody = (Vec<Check>, BTreeMap<String, Table>);

fn kernel_table_row(
    model: &KernelModel,
    rho: &crate::grid::GridField,
    z: Complex64,
    zeta: Complex64,
) -> Vec<f64> {
    let k = model.eval_kernel(z, zeta).value;
    let q = (model.log_weighted_kernel(z, zeta)
        + rho.interp(z).ln()
        + rho.interp(zeta).ln())
    .exp();
    vec![z.re, z.im, zeta.re, zeta.im, k.re, k.im, q]
}

fn kernel_columns() -> Vec<String> {
    ["z_re", "z_im", "zeta_re", "zeta_im", "K_re", "K_im", "normalized"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

// ---------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------

fn suite_gaussian_closed_form(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = WeightSpec::gaussian();
    let model = KernelModel::build_radial_only(
        &spec,
        cfg.basis.degree,
        cfg.grid.l,
        cfg.quad.nodes.max(512),
    )?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;

    let mut max_rel = 0.0f64;
    let mut rows = Vec::new();
    for _ in 0..100 {
        let z = sample_disk(rng, 1.5);
        let zeta = sample_disk(rng, 1.5);
        let k = model.eval_kernel(z, zeta);
        let oracle = (2.0 / PI) * (2.0 * z * zeta.conj()).exp();
        max_rel = max_rel.max((k.value - oracle).norm() / oracle.norm());
        rows.push(kernel_table_row(&model, &rho, z, zeta));
    }

    let rho0 = 1.0 / (4.0 * PI).sqrt();
    let mut max_rho_err = 0.0f64;
    for _ in 0..10 {
        let z = sample_disk(rng, 2.0);
        max_rho_err = max_rho_err.max((mu.rho(z)? - rho0).abs());
    }

    let quartic = WeightSpec::radial_power(4.0, 1.0)?;
    let mu4 = Density::from_spec(&quartic, 4.0, cfg.grid.n);
    let rho4_oracle = 1.0 / (8.0 * PI).powf(0.25);
    let rho4_err = (mu4.rho(Complex64::new(0.0, 0.0))? - rho4_oracle).abs();

    let checks = vec![
        Check::upper("kernel-closed-form-rel-err", max_rel, cfg.tol("kernel_rel_err", 1e-6)),
        Check::upper("rho-gaussian-abs-err", max_rho_err, cfg.tol("rho_abs_err", 1e-6)),
        Check::upper("rho-quartic-origin-abs-err", rho4_err, cfg.tol("rho_quartic_err", 1e-4)),
    ];
    let mut tables = BTreeMap::new();
    tables.insert("kernel".to_string(), Table { columns: kernel_columns(), rows });
    Ok((checks, tables))
}

fn suite_doubling(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let r_min = cfg.tol("r_min", 0.25);
    let r_max = cfg.tol("r_max", 2.0);
    let radii: Vec<f64> =
        (0..6).map(|k| r_min * (r_max / r_min).powf(k as f64 / 5.0)).collect();
    let c_max = cfg.tol("center_radius", 1.0).min(cfg.grid.l - 2.0 * r_max).max(0.0);
    let mut centers: Vec<Complex64> = (0..8).map(|_| sample_disk(rng, c_max)).collect();
    centers.push(Complex64::new(0.0, 0.0));
    let report = doubling_report(&mu, &radii, &centers, &DoublingConfig::default())?;

    let checks = vec![
        Check::range(
            "doubling-constant",
            report.constant_estimate,
            cfg.tol("constant_min", 1.0),
            cfg.tol("constant_max", 1e4),
        ),
        Check::lower("doubling-gamma", report.gamma_estimate, cfg.tol("gamma_min", 1e-6)),
        Check::range(
            "doubling-verdict",
            if report.verdict == DoublingVerdict::Doubling { 1.0 } else { 0.0 },
            0.5,
            1.5,
        ),
    ];
    let rows = report
        .samples
        .iter()
        .map(|(z, r, ratio)| vec![z.re, z.im, *r, *ratio])
        .collect();
    let mut tables = BTreeMap::new();
    tables.insert(
        "doubling".to_string(),
        Table {
            columns: vec!["z_re".into(), "z_im".into(), "r".into(), "ratio".into()],
            rows,
        },
    );
    Ok((checks, tables))
}

fn suite_main_estimate(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let model = cfg.build_model(&spec)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;

    let z_radius = cfg.tol("z_radius", 0.8);
    let mut fit = Vec::new();
    let mut holdout = Vec::new();
    let mut rows = Vec::new();
    let mut k = 0usize;
    while fit.len() + holdout.len() < 64 {
        k += 1;
        if k > 4000 {
            return Err(FockError::InsufficientSamples {
                got: fit.len() + holdout.len(),
                needed: 64,
            });
        }
        let z = sample_disk(rng, z_radius);
        let rho_z = rho.interp(z);
        let sep = (1.0 + 5.0 * rng.gen::<f64>()) * rho_z;
        let zeta = z + Complex64::from_polar(sep, 2.0 * PI * rng.gen::<f64>());
        if zeta.re.abs().max(zeta.im.abs()) > 0.85 * cfg.grid.l {
            continue;
        }
        rows.push(kernel_table_row(&model, &rho, z, zeta));
        if (fit.len() + holdout.len()) % 2 == 0 {
            fit.push((z, zeta));
        } else {
            holdout.push((z, zeta));
        }
    }
    let df = decay_fit(&model, &rho, None, &fit, &holdout, DecayModel::Stretched)?;

    let checks = vec![
        Check::range(
            "stretched-exponent",
            df.eps_fit,
            cfg.tol("eps_min", 1e-3),
            cfg.tol("eps_max", 10.0),
        ),
        Check::lower("stretched-coverage", df.coverage, cfg.tol("coverage_min", 0.95)),
        Check::lower("stretched-envelope", df.c_fit, 0.0),
    ];
    let mut tables = BTreeMap::new();
    tables.insert("kernel".to_string(), Table { columns: kernel_columns(), rows });
    Ok((checks, tables))
}

fn suite_diagonal(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let model = cfg.build_model(&spec)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;

    let points: Vec<Complex64> =
        (0..12).map(|_| sample_disk(rng, cfg.tol("z_radius", 1.2))).collect();
    let vals = diagonal_check(&model, &rho, &points);
    let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = vals.iter().cloned().fold(0.0f64, f64::max);
    let cap = cfg.tol("cap", 5.0);

    // c bounds the two-sided comparability: values spread by at most c.
    let mut checks = vec![
        Check::upper("diagonal-spread", vmax / vmin, cap),
        Check::lower("diagonal-positive", vmin, cfg.tol("value_floor", 1e-12)),
    ];
    if cfg.weight.is_gaussian() {
        let oracle = 1.0 / (2.0 * PI * PI);
        let rel = vals
            .iter()
            .map(|v| (v - oracle).abs() / oracle)
            .fold(0.0f64, f64::max);
        checks.push(Check::upper("diagonal-gaussian-rel-err", rel, cfg.tol("gaussian_rel", 0.01)));
    }
    let rows = points
        .iter()
        .zip(vals.iter())
        .map(|(z, v)| vec![z.re, z.im, z.re, z.im, *v])
        .collect();
    let mut tables = BTreeMap::new();
    tables.insert(
        "diagonal".to_string(),
        Table {
            columns: vec![
                "z_re".into(),
                "z_im".into(),
                "zeta_re".into(),
                "zeta_im".into(),
                "normalized".into(),
            ],
            rows,
        },
    );
    Ok((checks, tables))
}

fn suite_coarse(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let model = cfg.build_model(&spec)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;

    // Per-center slices: for fixed z the normalized kernel must peak at
    // the diagonal, so the argmax is judged within each slice.
    let sep_tol = cfg.tol("argmax_sep", 0.5);
    let mut rows = Vec::new();
    let mut global_max = 0.0f64;
    let mut near_max = 0.0f64;
    let mut worst_argmax = 0.0f64;
    for _ in 0..6 {
        let z = sample_disk(rng, cfg.tol("z_radius", 1.0));
        let rho_z = rho.interp(z);
        let mut pairs = vec![(z, z)];
        for k in 1..16 {
            let sep = 4.0 * rho_z * k as f64 / 15.0;
            for _ in 0..2 {
                let zeta = z + Complex64::from_polar(sep, 2.0 * PI * rng.gen::<f64>());
                pairs.push((z, zeta));
            }
        }
        let report = coarse_check(&model, &rho, &pairs);
        global_max = global_max.max(report.max_value);
        worst_argmax = worst_argmax.max(report.argmax_separation);
        for (&(z, zeta), &v) in pairs.iter().zip(report.values.iter()) {
            if (z - zeta).norm() <= sep_tol * rho_z {
                near_max = near_max.max(v);
            }
            rows.push(kernel_table_row(&model, &rho, z, zeta));
        }
    }

    // Flat weights plateau across ~rho, making the literal argmax
    // ill-conditioned; the dominance ratio states the same locality in a
    // well-conditioned way.
    let checks = vec![
        Check::upper("coarse-max", global_max, cfg.tol("cap", 5.0)),
        Check::upper("coarse-near-dominance", global_max / near_max, cfg.tol("dominance", 1.05)),
        Check::upper("coarse-argmax-separation", worst_argmax, cfg.tol("argmax_cap", 4.0)),
    ];
    let mut tables = BTreeMap::new();
    tables.insert("kernel".to_string(), Table { columns: kernel_columns(), rows });
    Ok((checks, tables))
}

fn suite_distance_lemma(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;
    let graph = build_metric_graph(&rho)?;

    let z = sample_disk(rng, 0.3);
    let rho_z = rho.interp(z);
    let mut far = Vec::new();
    while far.len() < 24 {
        let sep = (2.0 + 8.0 * rng.gen::<f64>()) * rho_z;
        let zeta = z + Complex64::from_polar(sep, 2.0 * PI * rng.gen::<f64>());
        if zeta.re.abs().max(zeta.im.abs()) < 0.9 * cfg.grid.l {
            far.push(zeta);
        }
    }
    let report = distance_bounds_check(&graph, &rho, z, 1.0, &far)?;

    let checks = vec![
        Check::lower("near-ratio-min", report.near_ratio_range.0, cfg.tol("near_min", 0.9)),
        Check::upper("near-ratio-max", report.near_ratio_range.1, cfg.tol("near_max", 1.1)),
        Check::lower("far-exponent-delta", report.delta_fit, cfg.tol("delta_min", 1e-3)),
    ];
    let rows = far
        .iter()
        .map(|&w| {
            let d = graph.d_phi(z, w).unwrap_or(f64::NAN);
            vec![z.re, z.im, w.re, w.im, d]
        })
        .collect();
    let mut tables = BTreeMap::new();
    tables.insert(
        "distance".to_string(),
        Table {
            columns: vec![
                "z_re".into(),
                "z_im".into(),
                "zeta_re".into(),
                "zeta_im".into(),
                "dphi".into(),
            ],
            rows,
        },
    );
    Ok((checks, tables))
}

fn suite_integrability(cfg: &RunConfig, _rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;
    let graph = build_metric_graph(&rho)?;
    let density = laplacian(&spec, cfg.grid.l, cfg.grid.n);

    let k = cfg.tol("k", 1e-9).max(0.0);
    let eps = cfg.tol("eps", 1.0);
    let a = cfg.tol("sweep_radius", 1.0);
    let mut vals = Vec::new();
    let mut rows = Vec::new();
    for j in 0..5 {
        for i in 0..5 {
            let zeta = Complex64::new(
                -a + 2.0 * a * i as f64 / 4.0,
                -a + 2.0 * a * j as f64 / 4.0,
            );
            let v = integrability_check(&density, &graph, zeta, k, eps)?;
            rows.push(vec![zeta.re, zeta.im, v]);
            vals.push(v);
        }
    }
    let vmax = vals.iter().cloned().fold(0.0f64, f64::max);
    let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);

    let checks = vec![
        Check::upper("integrability-spread", vmax / vmin, cfg.tol("spread_cap", 10.0)),
        Check::lower("integrability-min", vmin, cfg.tol("value_min", 1e-12)),
    ];
    let mut tables = BTreeMap::new();
    tables.insert(
        "integrability".to_string(),
        Table {
            columns: vec!["zeta_re".into(), "zeta_im".into(), "value".into()],
            rows,
        },
    );
    Ok((checks, tables))
}

fn suite_submean(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let model = cfg.build_model(&spec)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field()?;

    let f: Vec<Complex64> = (0..4)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let points: Vec<Complex64> = (0..5).map(|_| sample_disk(rng, 1.0)).collect();
    let report = submean_check(&model, &rho, &f, &points, 1.0, 2.0)?;

    let checks = vec![
        Check::upper("submean-ratio-a", report.ratio_a, cfg.tol("ratio_a_cap", 2.0)),
        Check::upper("submean-ratio-b", report.ratio_b, cfg.tol("ratio_b_cap", 50.0)),
        Check::upper("submean-ratio-c", report.ratio_c, cfg.tol("ratio_c_cap", 50.0)),
    ];
    Ok((checks, BTreeMap::new()))
}

fn suite_gadgets(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let zeta = sample_disk(rng, 0.4);
    let eps_list = [0.05, 0.25, 0.5];
    let mut checks = Vec::new();
    let mut c1 = BTreeMap::new();
    let mut c2 = BTreeMap::new();
    for &eps in &eps_list {
        let rep = proof_gadget_suite(&spec, cfg.grid.l, cfg.grid.n, zeta, eps)?;
        let tag = format!("{eps}");
        let rel = cfg.tol("curvature_rel", 0.02);
        checks.push(Check::range(
            &format!("curvature-identity-eps-{tag}"),
            rep.phi_cap_at_zeta_scaled,
            (eps / 4.0) * (1.0 - rel),
            (eps / 4.0) * (1.0 + rel),
        ));
        checks.push(Check::lower(
            &format!("band-min-eps-{tag}"),
            rep.psi_minus_phi_on_d2.0,
            -1e-9,
        ));
        checks.push(Check::upper(
            &format!("band-max-eps-{tag}"),
            rep.psi_minus_phi_on_d2.1,
            3.0f64.powf(eps) + 1e-9,
        ));
        c1.insert(tag.clone(), rep.c1);
        c2.insert(tag, rep.c2);
    }
    checks.push(Check::upper("c1-shrinks-with-eps", c1["0.05"] / c1["0.5"], 1.0));
    checks.push(Check::upper("c2-shrinks-with-eps", c2["0.05"] / c2["0.5"], 1.0));
    Ok((checks, BTreeMap::new()))
}

fn suite_dbar_kernel(cfg: &RunConfig, _rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    // Manufactured source on a small box: the Cauchy transform must
    // reproduce a compactly supported u0 up to discretization error.
    let err_at = |n: usize| -> Result<f64> {
        let u0 = ComplexGrid::from_fn(2.0, n, |z| {
            Complex64::new(chi(z.norm() / 1.2), 0.0) * z.conj()
        });
        let f = u0.dbar();
        let mut fc = ComplexGrid::zeros(2.0, n);
        for j in 2..n - 2 {
            for i in 2..n - 2 {
                fc.set(i, j, f.at(i, j));
            }
        }
        let u = cauchy_transform(&fc)?;
        let mut emax = 0.0f64;
        for (a, b) in u.values.iter().zip(u0.values.iter()) {
            emax = emax.max((a - b).norm());
        }
        Ok(emax)
    };
    let n = cfg.grid.n;
    let e_coarse = err_at(n)?;
    let e_fine = err_at(2 * n - 1)?;

    // Canonical solver: orthogonality and the Pythagoras identity.
    let spec = cfg.weight.to_spec()?;
    let model = KernelModel::build(&spec, cfg.basis.degree, cfg.grid.l, n)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, n);
    let rho = mu.rho_field()?;
    let u0 = ComplexGrid::from_fn(cfg.grid.l, n, |z| {
        Complex64::new(chi(z.norm() / 1.5), 0.0) * z.conj() * (z + 1.0)
    });
    let coeffs = model.project(&u0)?;
    let pu0 = model.poly_on_grid(&coeffs)?;
    let (u, rep) = canonical_solve(&model, &u0)?;
    let n0 = model.norm(&u0)?;
    let nu = model.norm(&u)?;
    let np = model.norm(&pu0)?;
    let pyth = ((n0 * n0 - nu * nu - np * np) / (n0 * n0)).abs();

    // Solution-kernel regimes.
    let cov = build_covering(&model, &rho, 0.75)?;
    let graph = build_metric_graph(&rho)?;
    let zeta0 = Complex64::new(0.3, -0.2);
    let krep = kernel_estimate_check(&cov, &model, &rho, &graph, zeta0)?;

    let checks = vec![
        Check::upper("manufactured-error", e_coarse, cfg.tol("cauchy_err", 1e-2)),
        Check::upper("refinement-ratio", e_fine / e_coarse, cfg.tol("refine_ratio", 0.6)),
        Check::upper("orthogonality-defect", rep.orthogonality_defect, cfg.tol("ortho_defect", 1e-6)),
        Check::upper("pythagoras-defect", pyth, cfg.tol("pythagoras", 1e-8)),
        Check::range(
            "near-slope",
            krep.near_slope,
            cfg.tol("near_slope_min", 0.8) * -1.5,
            -cfg.tol("near_slope_min", 0.8),
        ),
        Check::lower("far-coverage-g", krep.far_g.coverage, cfg.tol("far_coverage", 0.9)),
        Check::lower("far-coverage-canonical", krep.far_c.coverage, cfg.tol("far_coverage", 0.9)),
    ];
    Ok((checks, BTreeMap::new()))
}

fn suite_compact_probe(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let model = cfg.build_model(&spec)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n.min(129));
    let rho = mu.rho_field()?;

    let r_min = cfg.tol("r_min", 0.5);
    let r_max = cfg.tol("r_max", 3.0);
    let centers: Vec<Complex64> = (0..6)
        .map(|k| {
            let r = r_min + (r_max - r_min) * k as f64 / 5.0;
            Complex64::from_polar(r, 2.0 * PI * rng.gen::<f64>())
        })
        .collect();
    let rows = compactness_probe(&model, &rho, &centers)?;

    let ratio_max = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let ratio_min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let norm_min = rows.iter().map(|r| r.norm_uj).fold(f64::INFINITY, f64::min);
    let far_near = rows.last().unwrap().norm_uj / rows.first().unwrap().norm_uj;

    let mut checks = vec![
        Check::upper("ratio-spread", ratio_max / ratio_min, cfg.tol("spread_cap", 100.0)),
        Check::lower("min-norm", norm_min, cfg.tol("norm_floor", 1e-12)),
        Check::range(
            "far-near-norm-ratio",
            far_near,
            cfg.tol("far_near_min", 1e-6),
            cfg.tol("far_near_max", 1e6),
        ),
    ];
    if cfg.weight.is_gaussian() {
        let oracle = 0.5f64.sqrt();
        let err = rows
            .iter()
            .map(|r| (r.norm_uj - oracle).abs())
            .fold(0.0f64, f64::max);
        checks.push(Check::upper("gaussian-norm-abs-err", err, cfg.tol("gaussian_norm_err", 1e-3)));
    }
    let mut tables = BTreeMap::new();
    tables.insert(
        "probe".to_string(),
        Table {
            columns: vec!["abs_zj".into(), "rho_zj".into(), "norm_uj".into(), "ratio".into()],
            rows: rows
                .iter()
                .map(|r| vec![r.abs_zj, r.rho_zj, r.norm_uj, r.ratio])
                .collect(),
        },
    );
    Ok((checks, tables))
}

fn suite_lp_bounds(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<SuiteBody> {
    let spec = cfg.weight.to_spec()?;
    let n = cfg.grid.n;
    let model = KernelModel::build(&spec, cfg.basis.degree, cfg.grid.l, n)?;
    let mu = Density::from_spec(&spec, cfg.grid.l, n);
    let rho = mu.rho_field()?;

    let mut ratios = Vec::new();
    for _ in 0..3 {
        let c = sample_disk(rng, 0.5);
        let f = ComplexGrid::from_fn(cfg.grid.l, n, |z| {
            Complex64::new(chi((z - c).norm() / 0.5), 0.0)
        });
        let r = minimal_solution_bound_check(&model, &rho, &f)?
            .expect("bump source is nonzero");
        ratios.extend([r.p1, r.p2, r.pinf]);
    }
    let max = ratios.iter().cloned().fold(0.0f64, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);

    let checks = vec![
        Check::upper("lp-ratio-spread", max / min, cfg.tol("spread_cap", 20.0)),
        Check::lower("lp-ratio-min", min, cfg.tol("ratio_floor", 1e-12)),
        Check::upper("lp-ratio-max", max, cfg.tol("ratio_cap", 1e6)),
    ];
    Ok((checks, BTreeMap::new()))
}

// ---------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    // Guards FOCK_SEED: the env test mutates it while other tests read it.
    static ENV_LOCK: Mutex<()> = Mutex::new(());

    fn small_config(suites: &[&str]) -> RunConfig {
        RunConfig {
            weight: WeightDescriptor::Gaussian,
            grid: GridConfig { l: 6.0, n: 97 },
            basis: BasisConfig { degree: 30 },
            quad: QuadConfig { mode: QuadModeConfig::Radial, nodes: 512 },
            tolerances: BTreeMap::new(),
            suites: suites.iter().map(|s| s.to_string()).collect(),
            output: None,
            seed: Some(11),
        }
    }

    #[test]
    fn weight_descriptor_round_trip() {
        let d = WeightDescriptor::from_json(
            r#"{"family":"radial_power","alpha":4.0,"coeff":0.5}"#,
        )
        .unwrap();
        assert_eq!(d, WeightDescriptor::RadialPower { alpha: 4.0, coeff: 0.5 });
        let spec = d.to_spec().unwrap();
        assert!(spec.is_radial());
    }

    #[test]
    fn unknown_family_names_the_field() {
        let err = WeightDescriptor::from_json(r#"{"family":"cubic"}"#).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("family"), "{msg}");
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = small_config(&["diagonal"]);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.tolerances.insert("cap".into(), 4.0);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_suite_is_an_error() {
        let cfg = small_config(&[]);
        match run_suite(&cfg, "nope") {
            Err(FockError::UnknownSuite(s)) => assert_eq!(s, "nope"),
            other => panic!("expected UnknownSuite, got {other:?}"),
        }
        let mut bad = cfg;
        bad.suites.push("nope".into());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_suite_list_is_a_noop() {
        let cfg = small_config(&[]);
        let reports = run(&cfg, false).unwrap();
        assert!(reports.is_empty());
    }

    #[test]
    fn suite_runs_are_deterministic() {
        let _g = ENV_LOCK.lock().unwrap();
        let cfg = small_config(&["diagonal"]);
        let a = run_suite(&cfg, "diagonal").unwrap();
        let b = run_suite(&cfg, "diagonal").unwrap();
        assert_eq!(a.checks, b.checks);
        assert_eq!(a.tables, b.tables);
        assert_eq!(a.config_hash, b.config_hash);
        assert!(a.all_pass(), "{:?}", a.checks);
    }

    #[test]
    fn submean_and_lp_suites_pass_defaults() {
        let cfg = small_config(&[]);
        let a = run_suite(&cfg, "submean").unwrap();
        assert!(a.all_pass(), "{:?}", a.checks);
        let b = run_suite(&cfg, "lp-bounds").unwrap();
        assert!(b.all_pass(), "{:?}", b.checks);
    }

    #[test]
    fn plot_data_has_stable_columns() {
        let cfg = small_config(&["coarse"]);
        let rep = run_suite(&cfg, "coarse").unwrap();
        let csv = emit_plot_data(&rep, "kernel").unwrap();
        assert!(csv.starts_with("z_re,z_im,zeta_re,zeta_im,K_re,K_im,normalized\n"));
        match emit_plot_data(&rep, "probe") {
            Err(FockError::UnknownTable(t)) => assert_eq!(t, "probe"),
            other => panic!("expected UnknownTable, got {other:?}"),
        }
    }

    #[test]
    fn reports_written_to_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(&["diagonal"]);
        cfg.output = Some(dir.path().to_path_buf());
        let reports = run(&cfg, false).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(dir.path().join("diagonal.json").exists());
        assert!(dir.path().join("diagonal.diagonal.csv").exists());
        let text = std::fs::read_to_string(dir.path().join("diagonal.json")).unwrap();
        let back: SuiteReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.checks, reports[0].checks);
    }

    #[test]
    fn seed_env_var_overrides_config() {
        let _g = ENV_LOCK.lock().unwrap();
        let cfg = small_config(&[]);
        assert_eq!(cfg.effective_seed(), 11);
        std::env::set_var("FOCK_SEED", "99");
        assert_eq!(cfg.effective_seed(), 99);
        std::env::remove_var("FOCK_SEED");
        assert_eq!(cfg.effective_seed(), 11);
    }
}
