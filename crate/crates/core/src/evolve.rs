//! Time-domain simulation of `u_t = D u_xx + F(u) + γ∫Γ(τ)u(t−τ)dτ` on a
//! bounded interval with zero-flux ends, and front tracking.
//!
//! The memory term is carried either by ODE channels (exponential-sum
//! kernels, one field per term), or by a ring buffer of past fields. Both use
//! product integration against the piecewise-linear interpolant of `u` in
//! time, so for the same kernel they are the same discrete scheme.

use std::collections::VecDeque;

use crate::bistable::{BistableError, BistableProblem};
use crate::kernels::{KernelForm, MemoryKernel};
use crate::linalg::Tridiagonal;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolveError {
    #[error(transparent)]
    Bistable(#[from] BistableError),
    #[error("time step {dt} exceeds the stability limit {limit}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("non-finite value at x = {x}, t = {t}")]
    NaNDetected { t: f64, x: f64 },
    #[error("front at x = {position} reached the boundary region at t = {t}")]
    FrontExited { t: f64, position: f64 },
    #[error("no crossing of level {level} at t = {t}")]
    NoCrossing { t: f64, level: f64 },
    #[error("initial data outside the basin of the front: {0}")]
    Inadmissible(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

/// Cell-centred grid on `[0, length]`: `x_i = (i + ½)·dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(length: f64, dx: f64) -> Self {
        let n = (length / dx).round().max(3.0) as usize;
        Self { n, dx: length / n as f64 }
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// `(left, right)` weights of `∫₀^h e^{−λs} ℓ(s) ds` for the linear function
/// `ℓ` equal to 1 at `s = 0` (left) or at `s = h` (right).
pub(crate) fn exp_hat_weights(rate: f64, h: f64) -> (f64, f64) {
    let x = rate * h;
    if x < 1e-2 {
        // series to avoid cancellation
        let left = h * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x.powi(4) / 720.0);
        let right = h * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0 + x.powi(4) / 144.0);
        (left, right)
    } else {
        let e = (-x).exp();
        let left = (1.0 - (1.0 - e) / x) / rate;
        let right = ((1.0 - e) / x - e) / rate;
        (left, right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub rate: f64,
    /// Coupling `γ·cᵢ` of `wᵢ` into the `u` equation.
    pub weight: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryState {
    /// No memory term (`γ = 0`).
    Local,
    /// `wᵢ(t) = ∫₀^∞ e^{−λᵢτ} u(t−τ) dτ`, memory `Σ γcᵢ wᵢ`.
    OdeChannels(Vec<Channel>),
    /// Past fields at stride `dt` (newest first) with sparse quadrature taps
    /// `(lag, γ·weight)`.
    HistoryRing {
        ring: VecDeque<Vec<f64>>,
        taps: Vec<(usize, f64)>,
    },
    /// As `HistoryRing`, sized to the largest discrete delay.
    DelayTaps {
        ring: VecDeque<Vec<f64>>,
        taps: Vec<(usize, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryRepr {
    Channels,
    History,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub memory: MemoryState,
    pub t: f64,
}

impl FieldState {
    /// State with the constant-in-time history `u(t−τ) = u0` for all `τ > 0`.
    pub fn with_constant_history(
        grid: Grid,
        u0: Vec<f64>,
        k: &MemoryKernel,
        dt: f64,
        repr: MemoryRepr,
    ) -> Result<Self, EvolveError> {
        assert_eq!(u0.len(), grid.n);
        let gamma = k.gamma();
        let memory = if gamma == 0.0 {
            MemoryState::Local
        } else {
            match (k.form(), repr) {
                (KernelForm::ExpSum(terms), MemoryRepr::Channels) => MemoryState::OdeChannels(
                    terms
                        .iter()
                        .map(|t| Channel {
                            rate: t.rate,
                            weight: gamma * t.coeff,
                            w: u0.iter().map(|u| u / t.rate).collect(),
                        })
                        .collect(),
                ),
                (_, MemoryRepr::Channels) => {
                    return Err(EvolveError::Unsupported(
                        "ODE channels need an exponential-sum kernel".into(),
                    ))
                }
                (form, MemoryRepr::History) => {
                    let depth = k.tau_max();
                    let n = (depth / dt - 1e-9).ceil().max(1.0) as usize;
                    let taps: Vec<(usize, f64)> = k
                        .grid_weights(dt, n)
                        .into_iter()
                        .enumerate()
                        .filter(|(_, w)| *w != 0.0)
                        .map(|(lag, w)| (lag, gamma * w))
                        .collect();
                    let len = taps.iter().map(|t| t.0).max().unwrap_or(0) + 1;
                    let ring: VecDeque<Vec<f64>> = std::iter::repeat(u0.clone()).take(len).collect();
                    if matches!(form, KernelForm::DelayComb(_)) {
                        MemoryState::DelayTaps { ring, taps }
                    } else {
                        MemoryState::HistoryRing { ring, taps }
                    }
                }
            }
        };
        Ok(Self { grid, u: u0, memory, t: 0.0 })
    }

    /// Memory term `γ∫Γ(τ)u(t−τ)dτ` at the current time.
    pub fn memory_term(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.n];
        match &self.memory {
            MemoryState::Local => {}
            MemoryState::OdeChannels(ch) => {
                for c in ch {
                    for (mi, wi) in m.iter_mut().zip(&c.w) {
                        *mi += c.weight * wi;
                    }
                }
            }
            MemoryState::HistoryRing { ring, taps } | MemoryState::DelayTaps { ring, taps } => {
                for &(lag, w) in taps {
                    for (mi, ui) in m.iter_mut().zip(&ring[lag]) {
                        *mi += w * ui;
                    }
                }
            }
        }
        m
    }

    pub fn mean(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.grid.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Backward Euler diffusion, explicit reaction and memory.
    Imex,
    /// Forward Euler throughout.
    Explicit,
}

/// Reusable one-step integrator for a fixed problem, grid and time step.
#[derive(Debug, Clone)]
pub struct Stepper {
    problem: BistableProblem,
    dt: f64,
    scheme: Scheme,
    grid: Grid,
    diffusion: Option<Tridiagonal>,
}

/// `0.25/L`, with `L` the Lipschitz constant of `F` on the equilibrium
/// interval plus `|γ|`; the explicit scheme also needs `dt ≤ 0.25 dx²/D`.
pub fn stability_limit(p: &BistableProblem, grid: &Grid, scheme: Scheme) -> Result<f64, EvolveError> {
    let eq = p.tilted_roots()?;
    let lip = p.lipschitz(eq.u_minus, eq.u_plus) + p.gamma.abs();
    let mut limit = 0.25 / lip.max(1e-12);
    if scheme == Scheme::Explicit {
        limit = limit.min(0.25 * grid.dx * grid.dx / p.diffusion);
    }
    Ok(limit)
}

impl Stepper {
    pub fn new(p: &BistableProblem, grid: Grid, dt: f64, scheme: Scheme) -> Result<Self, EvolveError> {
        let limit = stability_limit(p, &grid, scheme)?;
        if !(dt > 0.0) || dt > limit {
            return Err(EvolveError::StabilityViolation { dt, limit });
        }
        let diffusion = match scheme {
            Scheme::Imex => {
                let r = dt * p.diffusion / (grid.dx * grid.dx);
                let n = grid.n;
                let sub = vec![-r; n];
                let sup = vec![-r; n];
                let mut diag = vec![1.0 + 2.0 * r; n];
                diag[0] = 1.0 + r;
                diag[n - 1] = 1.0 + r;
                Some(Tridiagonal::new(&sub, &diag, &sup))
            }
            Scheme::Explicit => None,
        };
        Ok(Self {
            problem: p.clone(),
            dt,
            scheme,
            grid,
            diffusion,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut FieldState) -> Result<(), EvolveError> {
        let n = self.grid.n;
        let dt = self.dt;
        let f = &self.problem.nonlinearity;
        let mem = state.memory_term();
        let old = state.u.clone();
        let mut rhs: Vec<f64> = old
            .iter()
            .zip(&mem)
            .map(|(u, m)| u + dt * (f.eval(*u) + m))
            .collect();
        match (&self.diffusion, self.scheme) {
            (Some(tri), _) => tri.solve_in_place(&mut rhs),
            (None, _) => {
                let r = dt * self.problem.diffusion / (self.grid.dx * self.grid.dx);
                for i in 0..n {
                    let l = old[i.saturating_sub(1)];
                    let rr = old[(i + 1).min(n - 1)];
                    rhs[i] += r * (l - 2.0 * old[i] + rr);
                }
            }
        }
        if let Some(i) = rhs.iter().position(|x| !x.is_finite()) {
            return Err(EvolveError::NaNDetected {
                t: state.t + dt,
                x: self.grid.x(i),
            });
        }
        match &mut state.memory {
            MemoryState::Local => {}
            MemoryState::OdeChannels(ch) => {
                for c in ch.iter_mut() {
                    let decay = (-c.rate * dt).exp();
                    let (wl, wr) = exp_hat_weights(c.rate, dt);
                    for ((w, uo), un) in c.w.iter_mut().zip(&old).zip(&rhs) {
                        *w = decay * *w + wr * uo + wl * un;
                    }
                }
            }
            MemoryState::HistoryRing { ring, .. } | MemoryState::DelayTaps { ring, .. } => {
                let mut recycled = ring.pop_back().unwrap_or_default();
                recycled.clear();
                recycled.extend_from_slice(&rhs);
                ring.push_front(recycled);
            }
        }
        state.u = rhs;
        state.t += dt;
        Ok(())
    }
}

/// Single step without a reusable [`Stepper`].
pub fn step(state: &mut FieldState, p: &BistableProblem, dt: f64) -> Result<(), EvolveError> {
    Stepper::new(p, state.grid, dt, Scheme::Imex)?.step(state)
}

/// Records the position of the level-`level` crossing of an increasing front.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontTracker {
    pub level: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl FrontTracker {
    pub fn new(level: f64) -> Self {
        Self {
            level,
            times: Vec::new(),
            positions: Vec::new(),
        }
    }

    /// Locates the crossing closest to the previous one (or the first one).
    pub fn crossing(&self, x: &[f64], u: &[f64]) -> Option<f64> {
        let lv = self.level;
        let prev = self.positions.last().copied();
        let mut best: Option<f64> = None;
        for i in 0..u.len() - 1 {
            let (a, b) = (u[i] - lv, u[i + 1] - lv);
            if a <= 0.0 && b > 0.0 {
                let pos = x[i] + (x[i + 1] - x[i]) * (-a) / (b - a);
                match (prev, best) {
                    (None, None) => return Some(pos),
                    (Some(p), Some(bp)) if (pos - p).abs() >= (bp - p).abs() => {}
                    _ => best = Some(pos),
                }
            }
        }
        best
    }

    pub fn record(&mut self, t: f64, x: &[f64], u: &[f64]) -> Option<f64> {
        let pos = self.crossing(x, u)?;
        self.times.push(t);
        self.positions.push(pos);
        Some(pos)
    }

    /// Least-squares line through the trailing `fraction` of the samples:
    /// `(speed, rms residual)`.
    pub fn fit(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.times.len();
        let start = ((1.0 - fraction) * n as f64).floor() as usize;
        let t = &self.times[start.min(n)..];
        let x = &self.positions[start.min(n)..];
        if t.len() < 2 {
            return None;
        }
        let m = t.len() as f64;
        let tm = t.iter().sum::<f64>() / m;
        let xm = x.iter().sum::<f64>() / m;
        let stt: f64 = t.iter().map(|ti| (ti - tm).powi(2)).sum();
        let stx: f64 = t.iter().zip(x).map(|(ti, xi)| (ti - tm) * (xi - xm)).sum();
        let c = stx / stt;
        let rms = (t
            .iter()
            .zip(x)
            .map(|(ti, xi)| (xi - xm - c * (ti - tm)).powi(2))
            .sum::<f64>()
            / m)
            .sqrt();
        Some((c, rms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub length: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    /// Initial interface position as a fraction of the domain length.
    pub start_fraction: f64,
    pub repr: MemoryRepr,
    pub scheme: Scheme,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            length: 400.0,
            dx: 0.1,
            dt: 0.01,
            t_end: 300.0,
            output_every: 0.5,
            start_fraction: 0.5,
            repr: MemoryRepr::Channels,
            scheme: Scheme::Imex,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: FieldState,
    pub speed: f64,
    pub fit_residual: f64,
    pub tracker: FrontTracker,
}

/// Smoothed step from `u₋` (left) to `u₊` (right) centred at `x0`.
pub fn front_initial_data(p: &BistableProblem, grid: &Grid, x0: f64) -> Result<Vec<f64>, EvolveError> {
    let eq = p.tilted_roots()?;
    Ok((0..grid.n)
        .map(|i| eq.u_minus + eq.span() * 0.5 * (1.0 + (grid.x(i) - x0).tanh()))
        .collect())
}

/// Checks that the left end lies below `u_m` and the right end above it.
pub fn check_admissible(p: &BistableProblem, u: &[f64]) -> Result<(), EvolveError> {
    let eq = p.tilted_roots()?;
    let (l, r) = (u[0], u[u.len() - 1]);
    if !(l < eq.u_mid && r > eq.u_mid) {
        return Err(EvolveError::Inadmissible(format!(
            "ends ({l}, {r}) do not straddle u_m = {}",
            eq.u_mid
        )));
    }
    Ok(())
}

/// Runs from `init` (front-like data, default a tanh step) to `t_end`,
/// tracking the level-`u_m` crossing and fitting its speed on the last half.
pub fn run_to_front(
    p: &BistableProblem,
    k: &MemoryKernel,
    init: Option<Vec<f64>>,
    opts: &RunOptions,
) -> Result<RunResult, EvolveError> {
    run_to_front_with(p, k, init, opts, |_| {})
}

/// As [`run_to_front`], calling `observe` at every output time.
pub fn run_to_front_with(
    p: &BistableProblem,
    k: &MemoryKernel,
    init: Option<Vec<f64>>,
    opts: &RunOptions,
    mut observe: impl FnMut(&FieldState),
) -> Result<RunResult, EvolveError> {
    if (k.gamma() - p.gamma).abs() > 1e-12 * (1.0 + p.gamma.abs()) {
        return Err(EvolveError::Unsupported(format!(
            "kernel weight {} differs from the tilt {}",
            k.gamma(),
            p.gamma
        )));
    }
    let grid = Grid::new(opts.length, opts.dx);
    let u0 = match init {
        Some(u) => u,
        None => front_initial_data(p, &grid, opts.start_fraction * grid.length())?,
    };
    check_admissible(p, &u0)?;
    let eq = p.tilted_roots()?;
    let stepper = Stepper::new(p, grid, opts.dt, opts.scheme)?;
    let mut state = FieldState::with_constant_history(grid, u0, k, opts.dt, opts.repr)?;
    let x = grid.points();
    let mut tracker = FrontTracker::new(eq.u_mid);
    let margin = 10.0 * grid.dx;
    let steps = (opts.t_end / opts.dt).round() as usize;
    let every = ((opts.output_every / opts.dt).round() as usize).max(1);
    let mut observe_at = |state: &FieldState, tracker: &mut FrontTracker| -> Result<(), EvolveError> {
        let pos = tracker
            .record(state.t, &x, &state.u)
            .ok_or(EvolveError::NoCrossing { t: state.t, level: eq.u_mid })?;
        if pos < margin || pos > grid.length() - margin {
            return Err(EvolveError::FrontExited { t: state.t, position: pos });
        }
        observe(state);
        Ok(())
    };
    observe_at(&state, &mut tracker)?;
    for s in 1..=steps {
        stepper.step(&mut state)?;
        if s % every == 0 {
            observe_at(&state, &mut tracker)?;
        }
    }
    let (speed, fit_residual) = tracker.fit(0.5).ok_or(EvolveError::NoCrossing {
        t: state.t,
        level: eq.u_mid,
    })?;
    Ok(RunResult {
        state,
        speed,
        fit_residual,
        tracker,
    })
}
