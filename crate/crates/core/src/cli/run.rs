use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::discretize::{
    assemble_affine_family, diagonal_cookie_family, AffineOperatorFamily, AxisBox, CookieGeometry,
    DiagVariant, ParameterGrid,
};
use crate::error::Result;
use crate::expsum::{format_weights, sinc_weights};
use crate::multigrid::{ConvergenceTrace, CycleConfig, Hierarchy, Method, SmootherKind};
use crate::oracle::{
    slice_error, two_grid_contraction, verify_galerkin, verify_inverse_diag, verify_smoothing,
    SmoothingSetup, TwoGridSetup,
};
use crate::par::Execution;

use super::config::ExperimentConfig;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MAX_ITERATIONS: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Trace as CSV: the effective configuration as `#` comments, then
/// `iteration,relative_residual,max_rank,wall_time_ms`.
pub fn trace_csv(cfg: &ExperimentConfig, trace: &ConvergenceTrace) -> String {
    let mut out = String::new();
    let echoed = serde_json::to_value(cfg).expect("config serializes");
    if let serde_json::Value::Object(map) = echoed {
        for (key, value) in map {
            let _ = writeln!(out, "# {key} = {value}");
        }
    }
    out.push_str("iteration,relative_residual,max_rank,wall_time_ms\n");
    for e in &trace.entries {
        let _ = writeln!(
            out,
            "{},{:.17e},{},{:.3}",
            e.iteration, e.relative_residual, e.max_rank, e.wall_time_ms
        );
    }
    out
}

/// Outcome of a solve run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub trace: ConvergenceTrace,
    pub csv: String,
    pub total_ms: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let start = std::time::Instant::now();
    let family = assemble_affine_family(&cfg.geometry()?, cfg.coarsest_points, cfg.finest_level)?;
    let hierarchy = Hierarchy::build(
        family,
        cfg.parameter_grid()?,
        cfg.solver.smoother(),
        cfg.omega(),
        cfg.expsum_k,
    )?;
    let (_, trace) = hierarchy.solve(cfg.solver.method(), &cfg.cycle_config())?;
    let csv = trace_csv(cfg, &trace);
    Ok(Experiment {
        trace,
        csv,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// `solve`: runs, writes the CSV and prints a summary line. Returns the
/// process exit code.
pub fn solve_command(config: &Path, out: Option<&Path>) -> i32 {
    let result = (|| -> Result<(Experiment, Option<PathBuf>)> {
        let cfg = super::config::parse_config(config)?;
        let exp = run_experiment(&cfg)?;
        let target = out.map(Path::to_path_buf).or(cfg.output.clone());
        if let Some(path) = &target {
            std::fs::write(path, &exp.csv)?;
        }
        Ok((exp, target))
    })();
    match result {
        Ok((exp, target)) => {
            if target.is_none() {
                print!("{}", exp.csv);
            }
            let t = &exp.trace;
            println!(
                "iterations={} final_residual={:.6e} peak_rank={} total_ms={:.0} converged={}",
                t.iterations(),
                t.final_residual(),
                t.peak_rank(),
                exp.total_ms,
                t.converged
            );
            if t.converged {
                EXIT_CONVERGED
            } else {
                EXIT_MAX_ITERATIONS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

/// `weights`: emits the weight file for `[1, R]`.
pub fn weights_command(k: usize, r: f64, out: Option<&Path>) -> i32 {
    if k == 0 || !(r > 1.0) {
        eprintln!("error: need k ≥ 1 and R > 1");
        return EXIT_FAILURE;
    }
    let text = format_weights(&sinc_weights(k, r));
    match out {
        Some(path) => match std::fs::write(path, text) {
            Ok(()) => EXIT_CONVERGED,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_FAILURE
            }
        },
        None => {
            print!("{text}");
            EXIT_CONVERGED
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Smoothing,
    Expsum,
    Galerkin,
    Twogrid,
    Slices,
    All,
}

/// One CSV report and whether its assertion held.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub csv: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Multiplies the admissible damping in the smoothing suite.
    pub omega_factor: f64,
    pub exec: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            omega_factor: 1.0,
            exec: Execution::Parallel,
        }
    }
}

fn one_d_family(max_level: usize) -> Result<AffineOperatorFamily> {
    let geom = CookieGeometry::new(1, 0.0, 1.0, vec![AxisBox::new(vec![0.3], vec![0.7])])?;
    assemble_affine_family(&geom, 7, max_level)
}

fn two_d_family(max_level: usize) -> Result<AffineOperatorFamily> {
    assemble_affine_family(&CookieGeometry::two_cookie(), 7, max_level)
}

fn smoothing_checks(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let cases = [
        ("1d_n15", one_d_family(1)?, ParameterGrid::uniform(1, 0.0, 0.1, 11)?, 1),
        ("2d_7x7", two_d_family(0)?, ParameterGrid::uniform(2, 0.0, 0.25, 5)?, 0),
    ];
    let mut out = Vec::new();
    for (name, family, pgrid, l) in &cases {
        for (kname, kind) in [
            ("richardson", SmootherKind::Richardson),
            ("modified_jacobi", SmootherKind::ModifiedJacobi),
        ] {
            let setup = SmoothingSetup {
                kind,
                expsum_k: 10,
                omega_factor: opts.omega_factor,
                nu_max: 32,
            };
            let rep = verify_smoothing(family, pgrid, *l, &setup, opts.exec)?;
            let mut csv = String::from("nu,max_ratio,bound,eta0,violations\n");
            for r in &rep.rows {
                let _ = writeln!(
                    csv,
                    "{},{:.6e},{:.6e},{:.6e},{}",
                    r.nu, r.max_ratio, r.bound, r.eta0, r.violations
                );
            }
            out.push(CheckReport {
                name: format!("smoothing_{name}_{kname}"),
                passed: rep.violations() == 0,
                csv,
            });
        }
    }
    Ok(out)
}

fn expsum_checks() -> Result<Vec<CheckReport>> {
    let synthetic = diagonal_cookie_family(9, &[(1..3, 40.0), (5..8, 25.0)])?;
    let spgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5)?;
    let cookie = two_d_family(1)?;
    let cpgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5)?;
    let mut out = Vec::new();
    for (name, family, pgrid, l, variant) in [
        ("exact_synthetic", &synthetic, &spgrid, 0, DiagVariant::Exact),
        ("modified_two_cookie_15x15", &cookie, &cpgrid, 1, DiagVariant::Tilde),
    ] {
        let mut csv = String::from("k,measured,eps,gap_to_exact\n");
        let mut passed = true;
        let mut prev_eps = f64::INFINITY;
        for k in [5, 10, 20] {
            let rep = verify_inverse_diag(family, pgrid, l, k, variant)?;
            passed &= rep.holds() && rep.eps < prev_eps;
            prev_eps = rep.eps;
            let gap = rep.gap_to_exact.map_or(String::new(), |g| format!("{g:.6e}"));
            let _ = writeln!(csv, "{k},{:.6e},{:.6e},{gap}", rep.measured, rep.eps);
        }
        out.push(CheckReport {
            name: format!("expsum_{name}"),
            passed,
            csv,
        });
    }
    Ok(out)
}

/// Endpoints plus the midpoint per parameter, all combinations.
fn corner_samples(d: usize) -> Vec<Vec<f64>> {
    let axis = [0.0, 0.5, 1.0];
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn galerkin_checks(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for (name, family) in [("1d", one_d_family(2)?), ("2d", two_d_family(2)?)] {
        let dev = verify_galerkin(&family, &corner_samples(family.num_params()), opts.exec)?;
        out.push(CheckReport {
            name: format!("galerkin_{name}"),
            passed: dev <= 1e-12,
            csv: format!("max_relative_deviation\n{dev:.6e}\n"),
        });
    }
    Ok(out)
}

fn twogrid_checks(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let setup = TwoGridSetup {
        kind: SmootherKind::ModifiedJacobi,
        omega: 0.5,
        expsum_k: 10,
    };
    let nus = [2, 5, 10];
    let mut out = Vec::new();
    for (name, family, pgrid) in [
        ("1d_n15", one_d_family(1)?, ParameterGrid::uniform(1, 0.0, 0.1, 11)?),
        ("2d_15x15", two_d_family(1)?, ParameterGrid::uniform(2, 0.0, 0.25, 5)?),
    ] {
        let table = two_grid_contraction(&family, &pgrid, 1, &nus, &setup, opts.exec)?;
        let mut csv = String::from("sample,nu,norm\n");
        for (s, row) in table.norms.iter().enumerate() {
            for (nu, v) in nus.iter().zip(row) {
                let _ = writeln!(csv, "{s},{nu},{v:.6e}");
            }
        }
        out.push(CheckReport {
            name: format!("twogrid_{name}"),
            passed: table.contracts(),
            csv,
        });
    }
    Ok(out)
}

fn slice_checks(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let family = two_d_family(1)?;
    let pgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5)?;
    let h = Hierarchy::build(family.clone(), pgrid.clone(), SmootherKind::ModifiedJacobi, Some(0.5), 10)?;
    let cfg = CycleConfig {
        tolerance: 1e-5,
        ..CycleConfig::default()
    };
    let (u, trace) = h.solve(Method::Multigrid(SmootherKind::ModifiedJacobi), &cfg)?;
    let err = slice_error(&u, &family, &pgrid, 1, &pgrid.indices(), opts.exec)?;
    Ok(vec![CheckReport {
        name: "slices_15x15".into(),
        passed: trace.converged && err <= 1e-4,
        csv: format!(
            "iterations,final_residual,max_slice_error\n{},{:.6e},{err:.6e}\n",
            trace.iterations(),
            trace.final_residual()
        ),
    }])
}

pub fn run_verification(suite: Suite, opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Smoothing {
        out.extend(smoothing_checks(opts)?);
    }
    if all || suite == Suite::Expsum {
        out.extend(expsum_checks()?);
    }
    if all || suite == Suite::Galerkin {
        out.extend(galerkin_checks(opts)?);
    }
    if all || suite == Suite::Twogrid {
        out.extend(twogrid_checks(opts)?);
    }
    if all || suite == Suite::Slices {
        out.extend(slice_checks(opts)?);
    }
    Ok(out)
}

/// `verify`: runs the suite, writes one CSV per check into `out_dir` (if
/// given) and prints one status line per check.
pub fn verify_command(suite: Suite, opts: &VerifyOptions, out_dir: Option<&Path>) -> i32 {
    let reports = match run_verification(suite, opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for r in &reports {
        if let Some(dir) = out_dir {
            if let Err(e) = std::fs::create_dir_all(dir)
                .and_then(|()| std::fs::write(dir.join(format!("{}.csv", r.name)), &r.csv))
            {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
        }
        let _ = writeln!(lock, "{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
    }
    if reports.iter().all(|r| r.passed) {
        EXIT_CONVERGED
    } else {
        EXIT_VIOLATION
    }
}
