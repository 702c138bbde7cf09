//! The homogenization example: two-scale simulation, its memory kernel and
//! the scalar memory-equation cross-check.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use memfront_core::evolve::{run_to_front, Grid, RunOptions};
use memfront_core::kernels::{KernelForm, MemoryKernel};
use memfront_core::twfront::solve_fixed_point;
use memfront_core::twoscale::{
    kernel_from_coupling, oscillation_amplitude, simulate_eps, simulate_two_scale, simulate_two_scale_with,
    weighted_distance, EpsOptions, TwoScaleData, TwoScaleOptions, TwoScaleState,
};

use crate::config::{ExperimentConfig, TwoScaleConfig};
use crate::io::{col, ensure_dir, write_json, write_manifest, write_rows, write_table, FileEntry};
use crate::RunError;

/// At most this many x columns of the W sheet are exported per snapshot.
const SHEET_COLUMNS: usize = 400;
/// Initial interface of the ε comparison runs, as a fraction of the domain.
const EPS_START: f64 = 0.6;

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub n_y: usize,
    pub gamma: f64,
    /// `⟨α, 𝕃⁻¹β⟩` from a direct cell solve.
    pub gamma_cell: f64,
    pub g1_hat: f64,
    pub d_v_eff: f64,
    /// `(aₙbₙ, λₙ)` of the retained modes.
    pub terms: Vec<(f64, f64)>,
}

pub fn kernel_report(data: &TwoScaleData, n_y: usize) -> Result<(KernelReport, MemoryKernel), RunError> {
    let basis = data.basis(n_y, n_y).map_err(RunError::solver)?;
    let k = kernel_from_coupling(&basis, &*data.alpha, &*data.beta).map_err(RunError::solver)?;
    let cell = data.effective_problem(n_y).map_err(RunError::solver)?;
    let terms = match k.form() {
        KernelForm::ExpSum(t) => t.iter().map(|e| (e.coeff * k.gamma(), e.rate)).collect(),
        _ => Vec::new(),
    };
    Ok((
        KernelReport {
            n_y,
            gamma: k.gamma(),
            gamma_cell: cell.gamma,
            g1_hat: k.moments().g1_hat,
            d_v_eff: data.d_v_eff(),
            terms,
        },
        k,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub kernel: KernelReport,
    pub two_scale_speed: f64,
    pub two_scale_fit_residual: f64,
    /// `max_t max_x |∫W dy|`.
    pub max_w_average: f64,
    pub front_moves_left: bool,
    pub scalar_speed: Option<f64>,
    pub scalar_fit_residual: Option<f64>,
    pub fixed_point_speed: Option<f64>,
    pub speed_difference: Option<f64>,
    pub eps: Vec<EpsRow>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EpsRow {
    pub eps: f64,
    pub dx: f64,
    pub length: f64,
    pub t_end: f64,
    pub weight_radius: f64,
    /// Weighted sup distance between `v_ε` and the limit `V` at `t_end`.
    pub distance: f64,
    pub amp_v: f64,
    pub amp_w: f64,
    pub speed: f64,
    pub limit_speed: f64,
}

/// Runs the ε-periodic system for every configured ε next to the two-scale
/// limit on the same window and horizon.
pub fn eps_comparison(data: &TwoScaleData, ts: &TwoScaleConfig) -> Result<Vec<EpsRow>, RunError> {
    if ts.eps.is_empty() {
        return Ok(Vec::new());
    }
    let x0 = EPS_START * ts.length;
    let grid = Grid::new(ts.length, ts.dx);
    let state = TwoScaleState::front(data, grid, ts.n_y, x0).map_err(RunError::solver)?;
    let limit = simulate_two_scale(
        state,
        data,
        &TwoScaleOptions {
            dt: ts.dt,
            t_end: ts.eps_t_end,
            output_every: ts.output_every,
        },
    )
    .map_err(RunError::solver)?;
    let center = 0.5 * ts.length;
    ts.eps
        .par_iter()
        .map(|&eps| {
            let opts = EpsOptions::for_eps(eps, ts.length, ts.eps_t_end);
            let r = simulate_eps(eps, data, x0, &opts).map_err(RunError::solver)?;
            Ok(EpsRow {
                eps,
                dx: opts.dx,
                length: ts.length,
                t_end: ts.eps_t_end,
                weight_radius: ts.weight_radius,
                distance: weighted_distance(&r.grid, &r.v, &limit.state.grid, &limit.state.v, center, ts.weight_radius),
                amp_v: oscillation_amplitude(&r.grid, &r.v, eps),
                amp_w: oscillation_amplitude(&r.grid, &r.w, eps),
                speed: r.speed,
                limit_speed: limit.speed,
            })
        })
        .collect()
}

/// Scalar memory equation with the synthesized kernel on the same window.
pub fn scalar_cross_check(data: &TwoScaleData, ts: &TwoScaleConfig) -> Result<(f64, f64, f64), RunError> {
    let (_, k) = kernel_report(data, ts.n_y)?;
    let p = data
        .effective_problem(ts.n_y)
        .map_err(RunError::solver)?
        .with_gamma(k.gamma());
    let opts = RunOptions {
        length: ts.length,
        dx: ts.dx,
        dt: ts.dt,
        t_end: ts.t_end,
        output_every: ts.output_every,
        start_fraction: ts.start_fraction,
        ..RunOptions::default()
    };
    let run = run_to_front(&p, &k, None, &opts).map_err(RunError::solver)?;
    let fp = solve_fixed_point(&p, &k, &Default::default()).map_err(RunError::solver)?;
    Ok((run.speed, run.fit_residual, fp.c_gamma))
}

/// Writes `kernel.json`, `eigen.csv`, `v.csv`, `w_sheet.csv`, `track.csv`,
/// `summary.json` (and `eps.csv` when ε values are configured).
pub fn run_two_scale_demo(cfg: &ExperimentConfig, out: &Path) -> Result<DemoSummary, RunError> {
    let data = TwoScaleData::homogenization_example();
    let ts = &cfg.two_scale;
    ensure_dir(out)?;

    let (report, _) = kernel_report(&data, ts.n_y_report)?;
    let basis = data.basis(ts.n_y_report, ts.n_y_report).map_err(RunError::solver)?;
    let (fa, fb) = (basis.sample(&*data.alpha), basis.sample(&*data.beta));
    let (ca, cb) = (basis.coefficients(&fa), basis.coefficients(&fb));
    write_table(
        &out.join("eigen.csv"),
        &["n", "lambda", "alpha_coeff", "beta_coeff"],
        (0..basis.lambda.len()).map(|n| vec![n as f64, basis.lambda[n], ca[n], cb[n]]),
    )?;
    write_json(&out.join("kernel.json"), &report)?;

    let grid = Grid::new(ts.length, ts.dx);
    let state = TwoScaleState::front(&data, grid, ts.n_y, ts.start_fraction * ts.length).map_err(RunError::solver)?;
    let half = 0.5 * ts.output_every;
    let mut snaps: Vec<TwoScaleState> = Vec::new();
    let run = simulate_two_scale_with(
        state,
        &data,
        &TwoScaleOptions {
            dt: ts.dt,
            t_end: ts.t_end,
            output_every: ts.output_every,
        },
        |s| {
            if ts.snapshot_times.iter().any(|t| (s.t - t).abs() < half) {
                snaps.push(s.clone());
            }
        },
    )
    .map_err(RunError::solver)?;

    let x = grid.points();
    write_table(
        &out.join("v.csv"),
        &["t", "x", "v", "w_average"],
        snaps.iter().flat_map(|s| {
            let avg = s.w_average();
            (0..grid.n).map(move |i| vec![s.t, s.grid.x(i), s.v[i], avg[i]]).collect::<Vec<_>>()
        }),
    )?;
    let stride = grid.n.div_ceil(SHEET_COLUMNS).max(1);
    write_table(
        &out.join("w_sheet.csv"),
        &["t", "x", "y", "w"],
        snaps.iter().flat_map(|s| {
            let x = &x;
            (0..grid.n)
                .step_by(stride)
                .flat_map(move |i| {
                    s.w_row(i)
                        .iter()
                        .enumerate()
                        .map(move |(j, w)| vec![s.t, x[i], j as f64 / s.n_y as f64, *w])
                })
                .collect::<Vec<_>>()
        }),
    )?;
    write_table(
        &out.join("track.csv"),
        &["t", "position"],
        run.tracker.times.iter().zip(&run.tracker.positions).map(|(t, p)| vec![*t, *p]),
    )?;

    let (scalar_speed, scalar_fit_residual, fixed_point_speed) = if ts.compare_scalar {
        let (s, r, f) = scalar_cross_check(&data, ts)?;
        (Some(s), Some(r), Some(f))
    } else {
        (None, None, None)
    };
    let eps = eps_comparison(&data, ts)?;
    if !eps.is_empty() {
        write_rows(&out.join("eps.csv"), &eps)?;
    }
    let summary = DemoSummary {
        kernel: report,
        two_scale_speed: run.speed,
        two_scale_fit_residual: run.fit_residual,
        max_w_average: run.max_w_average,
        front_moves_left: run.speed < 0.0,
        scalar_speed,
        scalar_fit_residual,
        fixed_point_speed,
        speed_difference: scalar_speed.map(|s| (s - run.speed).abs()),
        eps,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_manifest(
        out,
        vec![
            FileEntry {
                file: "eigen.csv".into(),
                columns: vec![
                    col("n", "mode index"),
                    col("lambda", "cell-operator eigenvalue"),
                    col("alpha_coeff", "coefficient of alpha"),
                    col("beta_coeff", "coefficient of beta"),
                ],
            },
            FileEntry {
                file: "v.csv".into(),
                columns: vec![
                    col("t", "snapshot time"),
                    col("x", "macroscopic position"),
                    col("v", "macroscopic field"),
                    col("w_average", "cell average of the micro field"),
                ],
            },
            FileEntry {
                file: "w_sheet.csv".into(),
                columns: vec![
                    col("t", "snapshot time"),
                    col("x", "macroscopic position (subsampled)"),
                    col("y", "cell coordinate in [0, 1)"),
                    col("w", "micro field"),
                ],
            },
            FileEntry {
                file: "track.csv".into(),
                columns: vec![col("t", "time"), col("position", "level crossing of the middle zero")],
            },
            FileEntry {
                file: "eps.csv".into(),
                columns: vec![
                    col("eps", "period of the oscillating system"),
                    col("distance", "weighted sup distance to the limit at t_end"),
                    col("amp_v", "oscillation amplitude of v about its period average"),
                    col("amp_w", "oscillation amplitude of w about its period average"),
                ],
            },
        ],
    )?;
    Ok(summary)
}
