use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use fock::harness::{run, RunConfig, WeightDescriptor};
use fock::weights::Density;

#[derive(Parser)]
#[command(name = "fock", about = "Numerical laboratory for weighted Fock spaces", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the check suites listed in the config (or one named suite).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this suite instead of the config's list.
        #[arg(long)]
        suite: Option<String>,
        /// Report output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run independent suites on the thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Print rho(z) for a weight at a point.
    Rho {
        /// Weight descriptor JSON, e.g. '{"family":"radial_power","alpha":2,"coeff":1}'.
        #[arg(long)]
        weight: String,
        /// Point as "x,y".
        #[arg(long)]
        point: String,
    },
    /// Evaluate the kernel on pairs from a CSV (z_re,z_im,zeta_re,zeta_im).
    Kernel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
}

fn parse_point(text: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"x,y\", got {text:?}"));
    }
    let x: f64 = parts[0].trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = parts[1].trim().parse().map_err(|e| format!("bad y: {e}"))?;
    Ok(Complex64::new(x, y))
}

fn cmd_run(
    config: PathBuf,
    suite: Option<String>,
    out: Option<PathBuf>,
    parallel: bool,
) -> Result<bool, String> {
    let mut cfg = RunConfig::from_path(&config).map_err(|e| e.to_string())?;
    if let Some(s) = suite {
        cfg.suites = vec![s];
    }
    if let Some(dir) = out {
        cfg.output = Some(dir);
    }
    let reports = run(&cfg, parallel).map_err(|e| e.to_string())?;
    let mut all_pass = true;
    for r in &reports {
        for c in &r.checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            println!("[{status}] {}/{}: value {:.6e} vs {:?}", r.suite, c.name, c.value, c.bound);
            all_pass &= c.pass;
        }
        println!(
            "suite {} done in {} ms ({} checks, hash {})",
            r.suite,
            r.elapsed_ms,
            r.checks.len(),
            &r.config_hash[..12]
        );
    }
    Ok(all_pass)
}

fn cmd_rho(weight: String, point: String) -> Result<(), String> {
    let desc = WeightDescriptor::from_json(&weight).map_err(|e| e.to_string())?;
    let spec = desc.to_spec().map_err(|e| e.to_string())?;
    let z = parse_point(&point)?;
    // Box large enough that the defining disk sits inside it.
    let l = (z.norm() + 6.0).max(6.0);
    let mu = Density::from_spec(&spec, l, 129);
    let rho = mu.rho(z).map_err(|e| e.to_string())?;
    println!("rho({}, {}) = {rho:.12e}", z.re, z.im);
    Ok(())
}

fn cmd_kernel(config: PathBuf, pairs: PathBuf) -> Result<bool, String> {
    let cfg = RunConfig::from_path(&config).map_err(|e| e.to_string())?;
    let spec = cfg.weight.to_spec().map_err(|e| e.to_string())?;
    let model = fock::bergman::KernelModel::build_radial_only(
        &spec,
        cfg.basis.degree,
        cfg.grid.l,
        cfg.quad.nodes,
    )
    .or_else(|_| {
        fock::bergman::KernelModel::build(&spec, cfg.basis.degree, cfg.grid.l, cfg.grid.n)
    })
    .map_err(|e| e.to_string())?;
    let mu = Density::from_spec(&spec, cfg.grid.l, cfg.grid.n);
    let rho = mu.rho_field().map_err(|e| e.to_string())?;

    let text = std::fs::read_to_string(&pairs).map_err(|e| e.to_string())?;
    println!("z_re,z_im,zeta_re,zeta_im,K_re,K_im,normalized");
    let mut clean = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if cells.len() != 4 {
            return Err(format!("line {}: expected 4 columns, got {}", lineno + 1, cells.len()));
        }
        let nums: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let nums = match nums {
            Ok(v) => v,
            // Header row.
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(format!("line {}: {e}", lineno + 1)),
        };
        let z = Complex64::new(nums[0], nums[1]);
        let zeta = Complex64::new(nums[2], nums[3]);
        let k = model.eval_kernel(z, zeta);
        if k.flagged {
            eprintln!("warning: pair ({z}, {zeta}) outside the validated disk");
            clean = false;
        }
        let q = (model.log_weighted_kernel(z, zeta)
            + rho.interp(z).ln()
            + rho.interp(zeta).ln())
        .exp();
        println!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            z.re, z.im, zeta.re, zeta.im, k.value.re, k.value.im, q
        );
    }
    Ok(clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { config, suite, out, parallel } => cmd_run(config, suite, out, parallel),
        Cmd::Rho { weight, point } => cmd_rho(weight, point).map(|()| true),
        Cmd::Kernel { config, pairs } => cmd_kernel(config, pairs),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
