//! Validation report for the configured kernel and reaction term.

use std::path::Path;

use serde::Serialize;

use memfront_core::bistable::Equilibria;

use crate::config::{ExperimentConfig, Kind};
use crate::io::{ensure_dir, write_json};
use crate::twoscale::{kernel_report, KernelReport};
use crate::RunError;

#[derive(Debug, Clone, Serialize)]
pub struct KernelCheck {
    pub kernel: String,
    pub gamma: f64,
    pub total: f64,
    pub g1_hat: f64,
    pub tau_max: f64,
    /// Smallest sampled value of `Γ` on `[0, τ_max]`.
    pub min_sample: f64,
    pub gamma_tilt: f64,
    pub equilibria: Option<(f64, f64, f64)>,
    pub area: Option<f64>,
    pub bistable_error: Option<String>,
    pub two_scale: Option<KernelReport>,
}

/// Writes `kernel_check.json`. Kernel construction failures surface as
/// configuration errors.
pub fn run_kernel_check(cfg: &ExperimentConfig, out: &Path) -> Result<KernelCheck, RunError> {
    let (p, k) = cfg.single_problem()?;
    let m = k.moments();
    let tau_max = k.tau_max();
    let min_sample = (0..=1000)
        .map(|i| k.eval(tau_max * i as f64 / 1000.0))
        .fold(f64::INFINITY, f64::min);
    let roots = p.tilted_roots();
    let two_scale = if cfg.kind == Kind::TwoScaleDemo {
        let data = memfront_core::twoscale::TwoScaleData::homogenization_example();
        Some(kernel_report(&data, cfg.two_scale.n_y_report)?.0)
    } else {
        None
    };
    let check = KernelCheck {
        kernel: cfg.kernel.describe(),
        gamma: k.gamma(),
        total: m.total,
        g1_hat: m.g1_hat,
        tau_max,
        min_sample,
        gamma_tilt: p.gamma,
        equilibria: roots
            .as_ref()
            .ok()
            .map(|e: &Equilibria| (e.u_minus, e.u_mid, e.u_plus)),
        area: p.area_functional().ok(),
        bistable_error: roots.err().map(|e| e.to_string()),
        two_scale,
    };
    ensure_dir(out)?;
    write_json(&out.join("kernel_check.json"), &check)?;
    Ok(check)
}
