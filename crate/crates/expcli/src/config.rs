//! Experiment configuration (JSON) and its translation into solver types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use memfront_core::bistable::{BistableProblem, Nonlinearity};
use memfront_core::evolve::{MemoryRepr, RunOptions, Scheme};
use memfront_core::kernels::MemoryKernel;
use memfront_core::twfront::FrontOptions;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad override '{0}': expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    SpeedSweep,
    FixedPointSweep,
    TwoScaleDemo,
    SingleRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Cubic { a: f64 },
    Poly { coeffs: Vec<f64> },
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self::Cubic { a: 0.6 }
    }
}

impl NonlinearityConfig {
    pub fn build(&self) -> Nonlinearity {
        match self {
            Self::Cubic { a } => Nonlinearity::cubic(*a),
            Self::Poly { coeffs } => Nonlinearity::Poly(coeffs.clone()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Cubic { a } => format!("cubic[{a}]"),
            Self::Poly { coeffs } => format!(
                "poly[{}]",
                coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
            ),
        }
    }

    pub fn cubic_a(&self) -> Option<f64> {
        match self {
            Self::Cubic { a } => Some(*a),
            Self::Poly { .. } => None,
        }
    }
}

/// Kernel block. `gamma` is the total weight; sweeps replace it by `−β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Shape `Σ c e^{−λτ}` from `terms = [[c, λ], ...]`.
    Expsum {
        terms: Vec<(f64, f64)>,
        #[serde(default)]
        gamma: f64,
    },
    /// `[[a, b, λ], ...]` from linear ODE channels.
    PdeOde { couplings: Vec<(f64, f64, f64)> },
    /// `[[weight, delay], ...]`.
    Delay { taps: Vec<(f64, f64)> },
    Tabulated {
        tau: Vec<f64>,
        values: Vec<f64>,
        tail_rate: f64,
        #[serde(default)]
        gamma: f64,
    },
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::Expsum {
            terms: vec![(1.0, 1.0)],
            gamma: 0.0,
        }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<MemoryKernel, ConfigError> {
        let k = match self {
            Self::Expsum { terms, gamma } => MemoryKernel::exp_sum(terms, *gamma),
            Self::PdeOde { couplings } => MemoryKernel::from_pde_ode(couplings),
            Self::Delay { taps } => MemoryKernel::delay_comb(taps),
            Self::Tabulated {
                tau,
                values,
                tail_rate,
                gamma,
            } => MemoryKernel::tabulated(tau.clone(), values.clone(), *tail_rate, *gamma),
        };
        k.map_err(|e| ConfigError::Invalid(format!("kernel: {e}")))
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Expsum { terms, .. } => format!(
                "expsum[{}]",
                terms.iter().map(|(c, l)| format!("{c}:{l}")).collect::<Vec<_>>().join(";")
            ),
            Self::PdeOde { couplings } => format!(
                "pde_ode[{}]",
                couplings
                    .iter()
                    .map(|(a, b, l)| format!("{a}:{b}:{l}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
            Self::Delay { taps } => format!(
                "delay[{}]",
                taps.iter().map(|(w, d)| format!("{w}:{d}")).collect::<Vec<_>>().join(";")
            ),
            Self::Tabulated { tau, tail_rate, .. } => format!("tabulated[{} nodes;tail {tail_rate}]", tau.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub step: f64,
}

impl SweepConfig {
    pub fn betas(&self) -> Vec<f64> {
        let n = ((self.beta_max - self.beta_min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let b = self.beta_min + i as f64 * self.step;
                // snap to the step lattice to keep printed values clean
                (b / self.step).round() * self.step
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontConfig {
    pub half_width: f64,
    pub h: f64,
    pub newton_tol: f64,
    pub fp_tol: f64,
    pub mono_tol: f64,
}

impl Default for FrontConfig {
    fn default() -> Self {
        let o = FrontOptions::default();
        Self {
            half_width: o.half_width,
            h: o.h,
            newton_tol: o.newton_tol,
            fp_tol: o.fp_tol,
            mono_tol: o.mono_tol,
        }
    }
}

impl FrontConfig {
    pub fn options(&self) -> FrontOptions {
        FrontOptions {
            half_width: self.half_width,
            h: self.h,
            newton_tol: self.newton_tol,
            fp_tol: self.fp_tol,
            mono_tol: self.mono_tol,
            ..FrontOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprConfig {
    Channels,
    History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub enabled: bool,
    pub length: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub start_fraction: f64,
    pub memory: ReprConfig,
    /// Field snapshot times for single runs.
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        let o = RunOptions::default();
        Self {
            enabled: true,
            length: o.length,
            dx: o.dx,
            dt: o.dt,
            t_end: o.t_end,
            output_every: o.output_every,
            start_fraction: o.start_fraction,
            memory: ReprConfig::Channels,
            snapshot_times: Vec::new(),
        }
    }
}

impl EvolveConfig {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            length: self.length,
            dx: self.dx,
            dt: self.dt,
            t_end: self.t_end,
            output_every: self.output_every,
            start_fraction: self.start_fraction,
            repr: match self.memory {
                ReprConfig::Channels => MemoryRepr::Channels,
                ReprConfig::History => MemoryRepr::History,
            },
            scheme: Scheme::Imex,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoScaleConfig {
    pub n_y: usize,
    pub n_modes: usize,
    /// Resolution of the eigen-solve that reports the kernel weight.
    pub n_y_report: usize,
    pub length: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub start_fraction: f64,
    pub snapshot_times: Vec<f64>,
    pub compare_scalar: bool,
    /// ε values for the oscillatory comparison runs (empty: skipped).
    pub eps: Vec<f64>,
    pub eps_t_end: f64,
    pub weight_radius: f64,
}

impl Default for TwoScaleConfig {
    fn default() -> Self {
        Self {
            n_y: 64,
            n_modes: 64,
            n_y_report: 256,
            length: 200.0,
            dx: 0.1,
            dt: 0.01,
            t_end: 150.0,
            output_every: 0.5,
            start_fraction: 0.75,
            snapshot_times: vec![0.0, 50.0, 100.0, 150.0],
            compare_scalar: true,
            eps: Vec::new(),
            eps_t_end: 40.0,
            weight_radius: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "unit")]
    pub diffusion: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Coupling for single runs; the tilt is `γ = −β`. Without it the
    /// kernel's own weight is used.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub front: FrontConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub two_scale: TwoScaleConfig,
    #[serde(default)]
    pub output: Option<String>,
}

fn unit() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_with(&text, overrides)
    }

    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.diffusion > 0.0) {
            return bad(format!("diffusion must be positive, got {}", self.diffusion));
        }
        if let Some(s) = &self.sweep {
            if !(s.step > 0.0) {
                return bad(format!("sweep step must be positive, got {}", s.step));
            }
            if s.beta_max < s.beta_min {
                return bad("sweep beta_max < beta_min".into());
            }
        }
        if matches!(self.kind, Kind::SpeedSweep | Kind::FixedPointSweep) && self.sweep.is_none() {
            return bad("sweep experiments need a 'sweep' block".into());
        }
        if let NonlinearityConfig::Cubic { a } = self.nonlinearity {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("cubic threshold a must lie in (0, 1), got {a}"));
            }
        }
        let f = &self.front;
        if !(f.h > 0.0 && f.half_width > 0.0 && f.fp_tol > 0.0 && f.newton_tol > 0.0) {
            return bad("front options must be positive".into());
        }
        let e = &self.evolve;
        if !(e.dx > 0.0 && e.dt > 0.0 && e.length > 0.0 && e.t_end > 0.0 && e.output_every > 0.0) {
            return bad("evolve options must be positive".into());
        }
        if !(e.start_fraction > 0.0 && e.start_fraction < 1.0) {
            return bad("evolve.start_fraction must lie in (0, 1)".into());
        }
        let t = &self.two_scale;
        if t.n_y < 3 || t.n_modes == 0 || t.n_modes > t.n_y || !(t.dx > 0.0 && t.dt > 0.0 && t.t_end > 0.0) {
            return bad("two_scale options out of range".into());
        }
        if t.eps.iter().any(|e| !(*e > 0.0)) {
            return bad("two_scale.eps values must be positive".into());
        }
        self.kernel.build()?;
        Ok(())
    }

    /// Problem and kernel for coupling `beta` (tilt `γ = −β`).
    pub fn problem_for_beta(&self, beta: f64) -> Result<(BistableProblem, MemoryKernel), ConfigError> {
        let k = self.kernel.build()?.with_gamma(-beta);
        let p = BistableProblem::new(self.diffusion, self.nonlinearity.build(), -beta)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((p, k))
    }

    /// Problem and kernel for a single run.
    pub fn single_problem(&self) -> Result<(BistableProblem, MemoryKernel), ConfigError> {
        match self.beta {
            Some(beta) => self.problem_for_beta(beta),
            None => {
                let k = self.kernel.build()?;
                let p = BistableProblem::new(self.diffusion, self.nonlinearity.build(), k.gamma())
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok((p, k))
            }
        }
    }
}

/// Sets `a.b.c=value` in a JSON tree; `value` is parsed as JSON and falls
/// back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            other => {
                *other = Value::Object(Default::default());
                other.as_object_mut().unwrap()
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
