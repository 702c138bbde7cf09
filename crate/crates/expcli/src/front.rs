//! Single front: traveling-wave profile at the fixed point, optionally
//! cross-checked by a time-stepping run.

use std::path::Path;

use serde::Serialize;

use memfront_core::bistable::{mckean_speed, EstimateParams};
use memfront_core::evolve::{run_to_front_with, FieldState};

use crate::config::ExperimentConfig;
use crate::io::{col, ensure_dir, write_json, write_manifest, write_table, FileEntry};
use crate::sweep::{fixed_point_widening, row_run_options};
use crate::RunError;

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub half_width: f64,
    pub h: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Params {
    pub nonlinearity: String,
    pub diffusion: f64,
    pub gamma: f64,
    pub beta: Option<f64>,
    pub kernel: String,
    pub g1_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontReport {
    pub speed: f64,
    pub residual_norm: f64,
    pub fixed_point_residual: f64,
    pub c_at_zero: f64,
    pub c_mckean: Option<f64>,
    pub area: f64,
    pub sandwich_ok: bool,
    pub connects: (f64, f64),
    pub u_mid: f64,
    pub grid: GridInfo,
    pub params: Params,
    /// Upper and lower speed estimates at `v = c` (nonnegative weight only).
    pub bounds: Option<(f64, f64)>,
    pub measured: Option<MeasuredReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasuredReport {
    pub speed: f64,
    pub fit_residual: f64,
    pub length: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
}

/// Writes `front.csv` (ξ, U), `front.json` and, when time stepping is
/// enabled, `track.csv` and `field.csv` snapshots.
pub fn run_front(cfg: &ExperimentConfig, out: &Path) -> Result<FrontReport, RunError> {
    let (p, k) = cfg.single_problem()?;
    p.tilted_roots().map_err(|e| crate::ConfigError::Invalid(e.to_string()))?;
    let (fp, fo) = fixed_point_widening(&p, &k, &cfg.front.options()).map_err(RunError::solver)?;
    let front = &fp.front;
    let bounds = p
        .estimate_params()
        .ok()
        .and_then(|params: EstimateParams| p.speed_bounds(&params, &k, fp.c_gamma).ok())
        .map(|b| (b.lower, b.upper));
    let c_mckean = match (cfg.nonlinearity.cubic_a(), cfg.beta) {
        (Some(a), Some(beta)) => mckean_speed(a, beta).ok(),
        (Some(a), None) => mckean_speed(a, -p.gamma).ok(),
        _ => None,
    };
    let mut report = FrontReport {
        speed: fp.c_gamma,
        residual_norm: front.residual_norm,
        fixed_point_residual: fp.residual,
        c_at_zero: fp.c_at_zero,
        c_mckean,
        area: fp.area,
        sandwich_ok: fp.sandwich_ok,
        connects: front.connects,
        u_mid: front.u_mid,
        grid: GridInfo {
            half_width: fo.half_width,
            h: front.h(),
            points: front.xi.len(),
        },
        params: Params {
            nonlinearity: cfg.nonlinearity.describe(),
            diffusion: cfg.diffusion,
            gamma: p.gamma,
            beta: cfg.beta,
            kernel: cfg.kernel.describe(),
            g1_hat: k.moments().g1_hat,
        },
        bounds,
        measured: None,
    };
    ensure_dir(out)?;
    write_table(
        &out.join("front.csv"),
        &["xi", "u"],
        front.xi.iter().zip(&front.profile).map(|(x, u)| vec![*x, *u]),
    )?;
    let mut files = vec![FileEntry {
        file: "front.csv".into(),
        columns: vec![col("xi", "comoving coordinate x - c t"), col("u", "front profile")],
    }];
    if cfg.evolve.enabled {
        let opts = row_run_options(cfg, &p, fp.c_gamma)?;
        let mut snaps: Vec<(f64, Vec<f64>)> = Vec::new();
        let wanted = &cfg.evolve.snapshot_times;
        let half = 0.5 * opts.output_every;
        let run = run_to_front_with(&p, &k, None, &opts, |s: &FieldState| {
            if wanted.iter().any(|t| (s.t - t).abs() < half) {
                snaps.push((s.t, s.u.clone()));
            }
        })
        .map_err(RunError::solver)?;
        snaps.push((run.state.t, run.state.u.clone()));
        let x = run.state.grid.points();
        write_table(
            &out.join("track.csv"),
            &["t", "position"],
            run.tracker.times.iter().zip(&run.tracker.positions).map(|(t, p)| vec![*t, *p]),
        )?;
        write_table(
            &out.join("field.csv"),
            &["t", "x", "u"],
            snaps
                .iter()
                .flat_map(|(t, u)| x.iter().zip(u).map(move |(xi, ui)| vec![*t, *xi, *ui])),
        )?;
        files.push(FileEntry {
            file: "track.csv".into(),
            columns: vec![col("t", "time"), col("position", "level crossing of the middle zero")],
        });
        files.push(FileEntry {
            file: "field.csv".into(),
            columns: vec![col("t", "snapshot time"), col("x", "position"), col("u", "field value")],
        });
        report.measured = Some(MeasuredReport {
            speed: run.speed,
            fit_residual: run.fit_residual,
            length: opts.length,
            dx: opts.dx,
            dt: opts.dt,
            t_end: opts.t_end,
        });
    }
    write_json(&out.join("front.json"), &report)?;
    write_manifest(out, files)?;
    Ok(report)
}
