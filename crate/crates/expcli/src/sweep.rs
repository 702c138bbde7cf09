//! β-sweeps of the front speed: measured (time stepping) and fixed-point
//! (traveling-wave solver) speeds against the local reference speed.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use memfront_core::bistable::{beta_zero, mckean_speed, BistableProblem};
use memfront_core::evolve::{run_to_front, stability_limit, Grid, RunOptions};
use memfront_core::kernels::MemoryKernel;
use memfront_core::twfront::{solve_fixed_point, FixedPoint, FrontError, FrontOptions};

use crate::config::{ExperimentConfig, Kind};
use crate::io::{col, ensure_dir, write_json, write_manifest, write_rows, FileEntry};
use crate::RunError;

/// Slack of the bracket verdict `c ∈ [min(0, C_loc), max(0, C_loc)]`.
pub const BRACKET_SLACK: f64 = 5e-3;
/// Largest fraction of the domain a measured front may travel.
pub const TRAVEL_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub kind: &'static str,
    pub nonlinearity: String,
    pub a: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub diffusion: f64,
    pub kernel: String,
    pub g1_hat: f64,
    pub front_half_width: f64,
    pub front_h: f64,
    pub evolve_length: Option<f64>,
    pub evolve_dx: Option<f64>,
    pub evolve_dt: Option<f64>,
    pub evolve_t_end: Option<f64>,
    pub c_measured: Option<f64>,
    pub fit_residual: Option<f64>,
    pub c_fixed_point: Option<f64>,
    pub c_at_zero: Option<f64>,
    pub fp_residual: Option<f64>,
    pub c_mckean: Option<f64>,
    pub beta0: Option<f64>,
    /// Local speed used as reference: McKean for cubics, `C(γ, 0)` otherwise.
    pub c_local: Option<f64>,
    pub area: Option<f64>,
    /// Bracket verdict for `β ≤ 0` rows; empty otherwise.
    pub bracket_ok: Option<bool>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn in_bracket(c: f64, local: f64) -> bool {
    c >= local.min(0.0) - BRACKET_SLACK && c <= local.max(0.0) + BRACKET_SLACK
}

/// Doublings of the traveling-wave half width tried when the profile has
/// not settled at the domain ends.
pub const MAX_WIDENINGS: usize = 3;

/// Fixed point, widening the domain while the boundary layer is too steep
/// (long tails appear when the memory reaches far at large |c|).
pub fn fixed_point_widening(
    p: &BistableProblem,
    k: &MemoryKernel,
    opts: &FrontOptions,
) -> Result<(FixedPoint, FrontOptions), FrontError> {
    let mut o = *opts;
    let mut tries = 0;
    loop {
        match solve_fixed_point(p, k, &o) {
            Err(FrontError::DomainTooSmall { .. }) if tries < MAX_WIDENINGS => {
                o.half_width *= 2.0;
                tries += 1;
            }
            r => return r.map(|fp| (fp, o)),
        }
    }
}

/// Time-stepping options for one row: `dt` is kept below the stability
/// limit and the horizon is cut so the front travels at most
/// [`TRAVEL_FRACTION`] of the domain.
pub fn row_run_options(cfg: &ExperimentConfig, p: &BistableProblem, c_ref: f64) -> Result<RunOptions, RunError> {
    let mut opts = cfg.evolve.options();
    let grid = Grid::new(opts.length, opts.dx);
    let limit = stability_limit(p, &grid, opts.scheme).map_err(RunError::solver)?;
    if opts.dt > 0.9 * limit {
        opts.dt = 0.9 * limit;
    }
    if c_ref.abs() > 0.0 {
        opts.t_end = opts.t_end.min(TRAVEL_FRACTION * opts.length / c_ref.abs());
    }
    Ok(opts)
}

fn compute_row(cfg: &ExperimentConfig, beta: f64, shape: &MemoryKernel, measure: bool) -> SweepRow {
    let a = cfg.nonlinearity.cubic_a();
    let k = shape.with_gamma(-beta);
    let fo = cfg.front.options();
    let mut row = SweepRow {
        kind: if measure { "speed_sweep" } else { "fixed_point_sweep" },
        nonlinearity: cfg.nonlinearity.describe(),
        a,
        beta,
        gamma: -beta,
        diffusion: cfg.diffusion,
        kernel: cfg.kernel.describe(),
        g1_hat: k.moments().g1_hat,
        front_half_width: fo.half_width,
        front_h: fo.h,
        evolve_length: None,
        evolve_dx: None,
        evolve_dt: None,
        evolve_t_end: None,
        c_measured: None,
        fit_residual: None,
        c_fixed_point: None,
        c_at_zero: None,
        fp_residual: None,
        c_mckean: a.and_then(|a| mckean_speed(a, beta).ok()),
        beta0: a.and_then(|a| beta_zero(a).ok()),
        c_local: None,
        area: None,
        bracket_ok: None,
        error: None,
    };
    let mut errors = Vec::new();
    let p = match BistableProblem::new(cfg.diffusion, cfg.nonlinearity.build(), -beta) {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    // the bistable regime is checked before any solver runs
    if let Err(e) = p.tilted_roots() {
        row.error = Some(e.to_string());
        return row;
    }
    row.area = p.area_functional().ok();
    match fixed_point_widening(&p, &k, &fo) {
        Ok((fp, used)) => {
            row.front_half_width = used.half_width;
            row.c_fixed_point = Some(fp.c_gamma);
            row.c_at_zero = Some(fp.c_at_zero);
            row.fp_residual = Some(fp.residual);
        }
        Err(e) => errors.push(format!("fixed point: {e}")),
    }
    row.c_local = row.c_mckean.or(row.c_at_zero);
    if measure {
        let c_ref = row.c_fixed_point.or(row.c_local).unwrap_or(0.0);
        match row_run_options(cfg, &p, c_ref) {
            Ok(opts) => {
                row.evolve_length = Some(opts.length);
                row.evolve_dx = Some(opts.dx);
                row.evolve_dt = Some(opts.dt);
                row.evolve_t_end = Some(opts.t_end);
                match run_to_front(&p, &k, None, &opts) {
                    Ok(r) => {
                        row.c_measured = Some(r.speed);
                        row.fit_residual = Some(r.fit_residual);
                    }
                    Err(e) => errors.push(format!("evolve: {e}")),
                }
            }
            Err(e) => errors.push(format!("evolve: {e}")),
        }
    }
    if beta <= 0.0 {
        if let Some(local) = row.c_local {
            let speeds: Vec<f64> = row.c_fixed_point.into_iter().chain(row.c_measured).collect();
            if !speeds.is_empty() {
                row.bracket_ok = Some(speeds.iter().all(|&c| in_bracket(c, local)));
            }
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Runs every β of the sweep (rows in parallel, results in row order).
pub fn run_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, RunError> {
    let sweep = cfg
        .sweep
        .ok_or_else(|| crate::ConfigError::Invalid("missing sweep block".into()))?;
    let shape = cfg.kernel.build()?;
    let measure = cfg.kind == Kind::SpeedSweep;
    Ok(sweep
        .betas()
        .par_iter()
        .map(|&b| compute_row(cfg, b, &shape, measure))
        .collect())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SignChange {
    /// Consecutive sampled β values bracketing the change.
    pub between: (f64, f64),
    /// Linear-interpolation estimate of the zero.
    pub estimate: f64,
}

/// Sign changes of a sampled series; missing and exactly-zero samples are skipped.
pub fn sign_changes(betas: &[f64], values: &[Option<f64>]) -> Vec<SignChange> {
    let pts: Vec<(f64, f64)> = betas
        .iter()
        .zip(values)
        .filter_map(|(&b, v)| v.filter(|v| *v != 0.0 && v.is_finite()).map(|v| (b, v)))
        .collect();
    pts.windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .map(|w| {
            let ((b0, v0), (b1, v1)) = (w[0], w[1]);
            SignChange {
                between: (b0, b1),
                estimate: b0 - v0 * (b1 - b0) / (v1 - v0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub kind: &'static str,
    pub rows: usize,
    pub failed: usize,
    pub beta0: Option<f64>,
    pub sign_changes_fixed_point: Vec<SignChange>,
    pub sign_changes_measured: Vec<SignChange>,
    pub sign_changes_fixed_point_minus_local: Vec<SignChange>,
    pub sign_changes_measured_minus_local: Vec<SignChange>,
    /// β values whose bracket verdict failed.
    pub bracket_violations: Vec<f64>,
}

pub fn summarize(kind: Kind, rows: &[SweepRow]) -> SweepSummary {
    let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    let diff = |f: fn(&SweepRow) -> Option<f64>| -> Vec<Option<f64>> {
        rows.iter().map(|r| Some(f(r)? - r.c_local?)).collect()
    };
    SweepSummary {
        kind: if kind == Kind::SpeedSweep { "speed_sweep" } else { "fixed_point_sweep" },
        rows: rows.len(),
        failed: rows.iter().filter(|r| r.failed()).count(),
        beta0: rows.iter().find_map(|r| r.beta0),
        sign_changes_fixed_point: sign_changes(&betas, &rows.iter().map(|r| r.c_fixed_point).collect::<Vec<_>>()),
        sign_changes_measured: sign_changes(&betas, &rows.iter().map(|r| r.c_measured).collect::<Vec<_>>()),
        sign_changes_fixed_point_minus_local: sign_changes(&betas, &diff(|r| r.c_fixed_point)),
        sign_changes_measured_minus_local: sign_changes(&betas, &diff(|r| r.c_measured)),
        bracket_violations: rows.iter().filter(|r| r.bracket_ok == Some(false)).map(|r| r.beta).collect(),
    }
}

fn manifest() -> Vec<FileEntry> {
    vec![
        FileEntry {
            file: "sweep.csv".into(),
            columns: vec![
                col("kind", "experiment kind"),
                col("nonlinearity", "reaction term"),
                col("a", "cubic threshold (empty for polynomials)"),
                col("beta", "coupling; the tilt is gamma = -beta"),
                col("gamma", "total memory weight"),
                col("diffusion", "diffusion coefficient"),
                col("kernel", "kernel shape"),
                col("g1_hat", "normalized first moment of the kernel"),
                col("front_half_width", "traveling-wave domain half width"),
                col("front_h", "traveling-wave grid spacing"),
                col("evolve_length", "time-stepping domain length"),
                col("evolve_dx", "time-stepping grid spacing"),
                col("evolve_dt", "time step actually used"),
                col("evolve_t_end", "horizon actually used"),
                col("c_measured", "front speed fitted from the tracked interface"),
                col("fit_residual", "rms residual of the interface fit"),
                col("c_fixed_point", "speed solving v = C(gamma, v)"),
                col("c_at_zero", "C(gamma, 0)"),
                col("fp_residual", "|C(gamma, c) - c| at the fixed point"),
                col("c_mckean", "explicit local cubic speed"),
                col("beta0", "coupling of the standing wave"),
                col("c_local", "local reference speed"),
                col("area", "integral of the tilted reaction between the outer zeros"),
                col("bracket_ok", "speed lies between 0 and c_local (beta <= 0 rows)"),
                col("error", "failure message (empty on success)"),
            ],
        },
        FileEntry {
            file: "summary.json".into(),
            columns: vec![col("sign_changes_*", "bracketing beta pairs and interpolated zero")],
        },
    ]
}

/// Runs the sweep, writes `sweep.csv`, `summary.json` and `manifest.json`,
/// and enforces the 10% failure budget.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepSummary, RunError> {
    let rows = run_rows(cfg)?;
    let summary = summarize(cfg.kind, &rows);
    ensure_dir(out)?;
    write_rows(&out.join("sweep.csv"), &rows)?;
    write_json(&out.join("summary.json"), &summary)?;
    write_manifest(out, manifest())?;
    if summary.failed * 10 > summary.rows {
        return Err(RunError::Budget {
            failed: summary.failed,
            total: summary.rows,
        });
    }
    Ok(summary)
}
