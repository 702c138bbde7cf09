//! Two-scale FitzHugh–Nagumo system
//!
//! ```text
//! V_t = D_eff V_xx + ∫Φ(y,V)dy + ∫α(y)W dy
//! W_t = (D_w(y) W_y)_y − b(y)W + β(y)V,      y ∈ 𝕋 = ℝ/ℤ
//! ```
//!
//! its reduction to a scalar memory equation through the eigenpairs of
//! `𝕃ψ = −(D_w ψ′)′ + bψ`, and the ε-periodic system it is the limit of.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::bistable::{BistableError, BistableProblem, Nonlinearity};
use crate::evolve::{FrontTracker, Grid};
use crate::kernels::{KernelError, MemoryKernel};
use crate::linalg::{CyclicTridiagonal, Tridiagonal};

pub type PeriodicFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default relative truncation tolerance for the eigen-expansion of couplings.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TwoScaleError {
    #[error("coefficient {name} is not strictly positive at y = {y} (value {value})")]
    NotPositive { name: &'static str, y: f64, value: f64 },
    #[error("grid too coarse: {0}")]
    ResolutionError(String),
    #[error("coupling expansion misses {defect:e} of the squared norm of {name}")]
    Truncation { name: &'static str, defect: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Bistable(#[from] BistableError),
    #[error("non-finite value at t = {t}")]
    NaNDetected { t: f64 },
    #[error("front at x = {position} reached the boundary region at t = {t}")]
    FrontExited { t: f64, position: f64 },
    #[error("no crossing of level {level} at t = {t}")]
    NoCrossing { t: f64, level: f64 },
}

/// Conservative second-order discretization of `𝕃` on `N` periodic nodes
/// `y_j = j/N`: `(sub, diag, sup)` in the cyclic convention of
/// [`CyclicTridiagonal`].
fn periodic_operator(
    d_w: &dyn Fn(f64) -> f64,
    b: &dyn Fn(f64) -> f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), TwoScaleError> {
    let h = 1.0 / n as f64;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for j in 0..n {
        let y = j as f64 * h;
        let dl = d_w(y - 0.5 * h);
        let dr = d_w(y + 0.5 * h);
        let bj = b(y);
        for (name, yy, val) in [("D_w", y - 0.5 * h, dl), ("D_w", y + 0.5 * h, dr), ("b", y, bj)] {
            if !(val > 0.0) {
                return Err(TwoScaleError::NotPositive { name, y: yy, value: val });
            }
        }
        sub[j] = -dl / (h * h);
        sup[j] = -dr / (h * h);
        diag[j] = (dl + dr) / (h * h) + bj;
    }
    Ok((sub, diag, sup))
}

/// Eigenpairs of the discretized `𝕃`, eigenfunctions normalized in `L²(𝕋)`.
#[derive(Debug, Clone)]
pub struct SturmBasis {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

pub fn sturm_solve(
    d_w: &dyn Fn(f64) -> f64,
    b: &dyn Fn(f64) -> f64,
    n_y: usize,
    n_modes: usize,
) -> Result<SturmBasis, TwoScaleError> {
    if n_y < 3 || n_modes == 0 || n_modes > n_y {
        return Err(TwoScaleError::ResolutionError(format!(
            "need 3 <= N_y and 1 <= n_modes <= N_y, got N_y = {n_y}, n_modes = {n_modes}"
        )));
    }
    let (sub, diag, sup) = periodic_operator(d_w, b, n_y)?;
    let m = DMatrix::from_fn(n_y, n_y, |i, j| {
        if i == j {
            diag[i]
        } else if j == (i + 1) % n_y {
            sup[i]
        } else if j == (i + n_y - 1) % n_y {
            sub[i]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n_y).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let scale = (n_y as f64).sqrt();
    let mut lambda = Vec::with_capacity(n_modes);
    let mut psi = Vec::with_capacity(n_modes);
    for &idx in order.iter().take(n_modes) {
        lambda.push(eig.eigenvalues[idx]);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|x| x * scale).collect();
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * peak) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        psi.push(v);
    }
    let y = (0..n_y).map(|j| j as f64 / n_y as f64).collect();
    Ok(SturmBasis {
        y,
        lambda,
        psi,
        sub,
        diag,
        sup,
    })
}

impl SturmBasis {
    pub fn n_y(&self) -> usize {
        self.y.len()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_y() as f64
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn sample(&self, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
        self.y.iter().map(|&y| f(y)).collect()
    }

    /// Expansion coefficients `⟨f, ψₙ⟩`.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        self.psi.iter().map(|p| self.inner(f, p)).collect()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n_y();
        (0..n)
            .map(|j| self.sub[j] * f[(j + n - 1) % n] + self.diag[j] * f[j] + self.sup[j] * f[(j + 1) % n])
            .collect()
    }

    /// `max_j |𝕃ψₙ − λₙψₙ|`.
    pub fn residual(&self, n: usize) -> f64 {
        self.apply(&self.psi[n])
            .iter()
            .zip(&self.psi[n])
            .map(|(a, p)| (a - self.lambda[n] * p).abs())
            .fold(0.0, f64::max)
    }

    /// Relative part of `‖f‖²` not captured by the retained modes.
    pub fn parseval_defect(&self, f: &[f64]) -> f64 {
        let norm = self.inner(f, f);
        if norm == 0.0 {
            return 0.0;
        }
        let captured: f64 = self.coefficients(f).iter().map(|a| a * a).sum();
        (norm - captured) / norm
    }

    /// `e^{−t𝕃} f` through the retained modes.
    pub fn semigroup(&self, f: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_y()];
        for (lam, (p, c)) in self.lambda.iter().zip(self.psi.iter().zip(self.coefficients(f))) {
            let s = c * (-lam * t).exp();
            for (o, pj) in out.iter_mut().zip(p) {
                *o += s * pj;
            }
        }
        out
    }

    /// `𝕃⁻¹ f` by a direct periodic solve.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let solver = CyclicTridiagonal::new(&self.sub, &self.diag, &self.sup);
        let mut x = f.to_vec();
        solver.solve_in_place(&mut x);
        x
    }
}

/// Memory kernel `Σ e^{−λₙτ} aₙbₙ` of the coupling `(α, β)`, with
/// `γ = Σ aₙbₙ/λₙ`. Products below `1e-12‖α‖‖β‖` are treated as zero.
pub fn kernel_from_coupling(
    basis: &SturmBasis,
    alpha: &dyn Fn(f64) -> f64,
    beta: &dyn Fn(f64) -> f64,
) -> Result<MemoryKernel, TwoScaleError> {
    kernel_from_coupling_tol(basis, alpha, beta, DEFAULT_TRUNC_TOL)
}

pub fn kernel_from_coupling_tol(
    basis: &SturmBasis,
    alpha: &dyn Fn(f64) -> f64,
    beta: &dyn Fn(f64) -> f64,
    trunc_tol: f64,
) -> Result<MemoryKernel, TwoScaleError> {
    let (fa, fb) = (basis.sample(alpha), basis.sample(beta));
    for (name, f) in [("alpha", &fa), ("beta", &fb)] {
        let defect = basis.parseval_defect(f);
        if defect > trunc_tol {
            return Err(TwoScaleError::Truncation { name, defect });
        }
    }
    let (a, b) = (basis.coefficients(&fa), basis.coefficients(&fb));
    let floor = 1e-12 * (basis.inner(&fa, &fa) * basis.inner(&fb, &fb)).sqrt();
    let couplings: Vec<(f64, f64, f64)> = a
        .iter()
        .zip(&b)
        .zip(&basis.lambda)
        .filter(|((an, bn), _)| (*an * *bn).abs() > floor)
        .map(|((an, bn), lam)| (*an, *bn, *lam))
        .collect();
    if couplings.is_empty() {
        return Err(KernelError::ZeroWeight.into());
    }
    Ok(MemoryKernel::from_pde_ode(&couplings)?)
}

/// Reaction `Φ(y, V)` of the macroscopic equation.
#[derive(Clone)]
pub enum Reaction {
    /// `Φ(y, V) = F(V)`.
    Uniform(Nonlinearity),
    /// General `Φ(y, V)` with its `V`-derivative.
    Periodic {
        phi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        dphi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Reaction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Uniform(n) => f.debug_tuple("Uniform").field(n).finish(),
            Self::Periodic { .. } => f.write_str("Periodic(..)"),
        }
    }
}

const CELL_QUAD: usize = 256;

impl Reaction {
    fn at(&self, y: f64, v: f64) -> f64 {
        match self {
            Self::Uniform(n) => n.eval(v),
            Self::Periodic { phi, .. } => phi(y, v),
        }
    }

    /// `F(V) = ∫Φ(y, V)dy`.
    pub fn effective(&self) -> Nonlinearity {
        match self {
            Self::Uniform(n) => n.clone(),
            Self::Periodic { phi, dphi } => {
                let (phi, dphi) = (phi.clone(), dphi.clone());
                let avg = |g: &Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, v: f64| {
                    (0..CELL_QUAD).map(|j| g(j as f64 / CELL_QUAD as f64, v)).sum::<f64>() / CELL_QUAD as f64
                };
                Nonlinearity::custom(move |v| avg(&phi, v), move |v| avg(&dphi, v), (-10.0, 10.0))
            }
        }
    }
}

/// Coefficients of the ε-periodic system and of its two-scale limit.
#[derive(Clone)]
pub struct TwoScaleData {
    /// Periodic macroscopic diffusion `D_v(y)` of the ε-system.
    pub d_v: PeriodicFn,
    pub reaction: Reaction,
    pub alpha: PeriodicFn,
    pub beta: PeriodicFn,
    pub d_w: PeriodicFn,
    pub b: PeriodicFn,
}

impl std::fmt::Debug for TwoScaleData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoScaleData").field("reaction", &self.reaction).finish_non_exhaustive()
    }
}

/// `√2 sin(2πny)`, the eigenfunction `ψ_{2n}` of `−∂²_y + 1` on the torus.
pub fn sine_mode(n: usize) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    move |y| std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * n as f64 * y).sin()
}

impl TwoScaleData {
    /// Unit diffusion, `b ≡ 1`, cubic `F` with threshold 0.25,
    /// `α = ψ₂ + ψ₄`, `β = ψ₂ + 10ψ₄ − ψ₆`.
    pub fn homogenization_example() -> Self {
        let (s1, s2, s3) = (sine_mode(1), sine_mode(2), sine_mode(3));
        let (t1, t2) = (s1.clone(), s2.clone());
        Self {
            d_v: Arc::new(|_| 1.0),
            reaction: Reaction::Uniform(Nonlinearity::cubic(0.25)),
            alpha: Arc::new(move |y| t1(y) + t2(y)),
            beta: Arc::new(move |y| s1(y) + 10.0 * s2(y) - s3(y)),
            d_w: Arc::new(|_| 1.0),
            b: Arc::new(|_| 1.0),
        }
    }

    /// Harmonic mean of `D_v`, the one-dimensional effective diffusion.
    pub fn d_v_eff(&self) -> f64 {
        let n = 4096;
        let inv: f64 = (0..n).map(|j| 1.0 / (self.d_v)((j as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        1.0 / inv
    }

    pub fn basis(&self, n_y: usize, n_modes: usize) -> Result<SturmBasis, TwoScaleError> {
        sturm_solve(&*self.d_w, &*self.b, n_y, n_modes)
    }

    /// Cell response `χ = 𝕃⁻¹β` sampled on the `n_y` grid.
    pub fn cell_response(&self, n_y: usize) -> Result<Vec<f64>, TwoScaleError> {
        let (sub, diag, sup) = periodic_operator(&*self.d_w, &*self.b, n_y)?;
        let mut chi: Vec<f64> = (0..n_y).map(|j| (self.beta)(j as f64 / n_y as f64)).collect();
        CyclicTridiagonal::new(&sub, &diag, &sup).solve_in_place(&mut chi);
        Ok(chi)
    }

    /// The scalar memory problem `(D_eff, F, γ)` with `γ = ⟨α, 𝕃⁻¹β⟩` on the `n_y` grid.
    pub fn effective_problem(&self, n_y: usize) -> Result<BistableProblem, TwoScaleError> {
        let chi = self.cell_response(n_y)?;
        let gamma: f64 = (0..n_y)
            .map(|j| (self.alpha)(j as f64 / n_y as f64) * chi[j])
            .sum::<f64>()
            / n_y as f64;
        Ok(BistableProblem::new(self.d_v_eff(), self.reaction.effective(), gamma)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleState {
    pub grid: Grid,
    pub n_y: usize,
    pub v: Vec<f64>,
    /// `W[i·n_y + j] = W(x_i, y_j)`.
    pub w: Vec<f64>,
    pub t: f64,
}

impl TwoScaleState {
    /// Tanh front between the effective equilibria centred at `x0`, with the
    /// micro field at its quasi-static value `W = V·𝕃⁻¹β`.
    pub fn front(data: &TwoScaleData, grid: Grid, n_y: usize, x0: f64) -> Result<Self, TwoScaleError> {
        let eq = data.effective_problem(n_y)?.tilted_roots()?;
        let v: Vec<f64> = (0..grid.n)
            .map(|i| eq.u_minus + eq.span() * 0.5 * (1.0 + (grid.x(i) - x0).tanh()))
            .collect();
        let chi = data.cell_response(n_y)?;
        let w = v.iter().flat_map(|vi| chi.iter().map(move |c| vi * c)).collect();
        Ok(Self { grid, n_y, v, w, t: 0.0 })
    }

    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n_y..(i + 1) * self.n_y]
    }

    /// `∫W(x_i, y)dy` for every `i`.
    pub fn w_average(&self) -> Vec<f64> {
        self.w
            .chunks(self.n_y)
            .map(|row| row.iter().sum::<f64>() / self.n_y as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoScaleOptions {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
}

impl Default for TwoScaleOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 150.0,
            output_every: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoScaleRun {
    pub state: TwoScaleState,
    pub speed: f64,
    pub fit_residual: f64,
    pub tracker: FrontTracker,
    /// `max |∫W dy|` over all output times.
    pub max_w_average: f64,
}

/// IMEX stepping: implicit x-diffusion of `V` with explicit reaction and
/// coupling, then an implicit periodic y-solve of `W` per macroscopic point.
pub fn simulate_two_scale(
    state: TwoScaleState,
    data: &TwoScaleData,
    opts: &TwoScaleOptions,
) -> Result<TwoScaleRun, TwoScaleError> {
    simulate_two_scale_with(state, data, opts, |_| {})
}

pub fn simulate_two_scale_with(
    mut state: TwoScaleState,
    data: &TwoScaleData,
    opts: &TwoScaleOptions,
    mut observe: impl FnMut(&TwoScaleState),
) -> Result<TwoScaleRun, TwoScaleError> {
    let n_y = state.n_y;
    let grid = state.grid;
    let dt = opts.dt;
    let level = data.effective_problem(n_y)?.tilted_roots()?.u_mid;
    let ys: Vec<f64> = (0..n_y).map(|j| j as f64 / n_y as f64).collect();
    let alpha: Vec<f64> = ys.iter().map(|&y| (data.alpha)(y)).collect();
    let beta: Vec<f64> = ys.iter().map(|&y| (data.beta)(y)).collect();
    let (sub, diag, sup) = periodic_operator(&*data.d_w, &*data.b, n_y)?;
    let micro = CyclicTridiagonal::new(
        &sub.iter().map(|s| dt * s).collect::<Vec<_>>(),
        &diag.iter().map(|d| 1.0 + dt * d).collect::<Vec<_>>(),
        &sup.iter().map(|s| dt * s).collect::<Vec<_>>(),
    );
    let macro_solver = neumann_implicit(&vec![data.d_v_eff(); grid.n + 1], grid.dx, dt);
    let x = grid.points();
    let margin = 10.0 * grid.dx;
    let mut tracker = FrontTracker::new(level);
    let mut max_avg: f64 = 0.0;
    let steps = (opts.t_end / dt).round() as usize;
    let every = ((opts.output_every / dt).round() as usize).max(1);

    let mut check = |state: &TwoScaleState, tracker: &mut FrontTracker, max_avg: &mut f64| {
        let pos = tracker
            .record(state.t, &x, &state.v)
            .ok_or(TwoScaleError::NoCrossing { t: state.t, level })?;
        if pos < margin || pos > grid.length() - margin {
            return Err(TwoScaleError::FrontExited { t: state.t, position: pos });
        }
        *max_avg = state.w_average().iter().fold(*max_avg, |m, a| m.max(a.abs()));
        observe(state);
        Ok(())
    };
    check(&state, &mut tracker, &mut max_avg)?;
    for s in 1..=steps {
        let mut rhs: Vec<f64> = state
            .v
            .par_iter()
            .zip(state.w.par_chunks(n_y))
            .map(|(&v, row)| {
                let react = ys.iter().map(|&y| data.reaction.at(y, v)).sum::<f64>() / n_y as f64;
                let coupling = row.iter().zip(&alpha).map(|(w, a)| w * a).sum::<f64>() / n_y as f64;
                v + dt * (react + coupling)
            })
            .collect();
        macro_solver.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(TwoScaleError::NaNDetected { t: state.t + dt });
        }
        state.v = rhs;
        state.w.par_chunks_mut(n_y).zip(state.v.par_iter()).for_each(|(row, &v)| {
            for (w, b) in row.iter_mut().zip(&beta) {
                *w += dt * b * v;
            }
            micro.solve_in_place(row);
        });
        state.t += dt;
        if s % every == 0 {
            check(&state, &mut tracker, &mut max_avg)?;
        }
    }
    let (speed, fit_residual) = tracker
        .fit(0.5)
        .ok_or(TwoScaleError::NoCrossing { t: state.t, level })?;
    Ok(TwoScaleRun {
        state,
        speed,
        fit_residual,
        tracker,
        max_w_average: max_avg,
    })
}

/// `I − dt·∂_x(D ∂_x)` with zero-flux ends on a cell-centred grid; `faces`
/// holds `D` at the `n + 1` cell faces (the end faces are unused).
fn neumann_implicit(faces: &[f64], dx: f64, dt: f64) -> Tridiagonal {
    let n = faces.len() - 1;
    let r = dt / (dx * dx);
    let mut sub = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut diag = vec![1.0; n];
    for i in 0..n {
        if i > 0 {
            sub[i] = -r * faces[i];
            diag[i] += r * faces[i];
        }
        if i + 1 < n {
            sup[i] = -r * faces[i + 1];
            diag[i] += r * faces[i + 1];
        }
    }
    Tridiagonal::new(&sub, &diag, &sup)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsOptions {
    pub length: f64,
    /// Grid spacing; must resolve the period, `dx ≤ ε/16`.
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    /// Resolution of the cell problem used for the initial micro profile.
    pub n_y: usize,
}

impl EpsOptions {
    /// Spacing `min(0.1, ε/32)` on a window of the given length.
    pub fn for_eps(eps: f64, length: f64, t_end: f64) -> Self {
        Self {
            length,
            dx: (eps / 32.0).min(0.1),
            dt: 0.01,
            t_end,
            output_every: 0.5,
            n_y: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpsRun {
    pub grid: Grid,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    pub speed: f64,
    pub fit_residual: f64,
    pub tracker: FrontTracker,
}

/// Direct simulation of the ε-periodic system
/// `v_t = (D_v(x/ε)v_x)_x + Φ(x/ε, v) + α(x/ε)w`,
/// `w_t = ε²(D_w(x/ε)w_x)_x − b(x/ε)w + β(x/ε)v`,
/// started from the folded two-scale initial data `w = v·χ(x/ε)`.
pub fn simulate_eps(eps: f64, data: &TwoScaleData, x0: f64, opts: &EpsOptions) -> Result<EpsRun, TwoScaleError> {
    if !(eps > 0.0) || opts.dx > eps / 16.0 * (1.0 + 1e-12) {
        return Err(TwoScaleError::ResolutionError(format!(
            "dx = {} does not resolve eps = {eps} (need dx <= eps/16)",
            opts.dx
        )));
    }
    let grid = Grid::new(opts.length, opts.dx);
    let n = grid.n;
    let dt = opts.dt;
    let eq = data.effective_problem(opts.n_y)?.tilted_roots()?;
    let chi = data.cell_response(opts.n_y)?;
    let chi_at = |y: f64| {
        let s = y.rem_euclid(1.0) * opts.n_y as f64;
        let j = s.floor() as usize % opts.n_y;
        let th = s - s.floor();
        (1.0 - th) * chi[j] + th * chi[(j + 1) % opts.n_y]
    };
    let x = grid.points();
    let cell = |xi: f64| xi / eps;
    let mut v: Vec<f64> = x
        .iter()
        .map(|&xi| eq.u_minus + eq.span() * 0.5 * (1.0 + (xi - x0).tanh()))
        .collect();
    let mut w: Vec<f64> = x.iter().zip(&v).map(|(&xi, vi)| vi * chi_at(cell(xi))).collect();
    let faces: Vec<f64> = (0..=n).map(|i| i as f64 * grid.dx).collect();
    let dv_faces: Vec<f64> = faces.iter().map(|&f| (data.d_v)(cell(f))).collect();
    let v_solver = neumann_implicit(&dv_faces, grid.dx, dt);
    let w_solver = {
        let r = eps * eps * dt / (grid.dx * grid.dx);
        let dw: Vec<f64> = faces.iter().map(|&f| (data.d_w)(cell(f))).collect();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut diag: Vec<f64> = x.iter().map(|&xi| 1.0 + dt * (data.b)(cell(xi))).collect();
        for i in 0..n {
            if i > 0 {
                sub[i] = -r * dw[i];
                diag[i] += r * dw[i];
            }
            if i + 1 < n {
                sup[i] = -r * dw[i + 1];
                diag[i] += r * dw[i + 1];
            }
        }
        Tridiagonal::new(&sub, &diag, &sup)
    };
    let alpha: Vec<f64> = x.iter().map(|&xi| (data.alpha)(cell(xi))).collect();
    let beta: Vec<f64> = x.iter().map(|&xi| (data.beta)(cell(xi))).collect();
    let ycell: Vec<f64> = x.iter().map(|&xi| cell(xi).rem_euclid(1.0)).collect();

    let margin = 10.0 * grid.dx;
    let mut tracker = FrontTracker::new(eq.u_mid);
    let steps = (opts.t_end / dt).round() as usize;
    let every = ((opts.output_every / dt).round() as usize).max(1);
    let mut t = 0.0;
    let record = |t: f64, v: &[f64], tracker: &mut FrontTracker| {
        let pos = tracker
            .record(t, &x, v)
            .ok_or(TwoScaleError::NoCrossing { t, level: eq.u_mid })?;
        if pos < margin || pos > grid.length() - margin {
            return Err(TwoScaleError::FrontExited { t, position: pos });
        }
        Ok(())
    };
    record(t, &v, &mut tracker)?;
    for s in 1..=steps {
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| v[i] + dt * (data.reaction.at(ycell[i], v[i]) + alpha[i] * w[i]))
            .collect();
        v_solver.solve_in_place(&mut rhs);
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(TwoScaleError::NaNDetected { t: t + dt });
        }
        v = rhs;
        for i in 0..n {
            w[i] += dt * beta[i] * v[i];
        }
        w_solver.solve_in_place(&mut w);
        t += dt;
        if s % every == 0 {
            record(t, &v, &mut tracker)?;
        }
    }
    let (speed, fit_residual) = tracker
        .fit(0.5)
        .ok_or(TwoScaleError::NoCrossing { t, level: eq.u_mid })?;
    Ok(EpsRun {
        grid,
        v,
        w,
        t,
        speed,
        fit_residual,
        tracker,
    })
}

/// Linear interpolation of cell-centred data on `grid` at `x`.
pub fn interpolate(grid: &Grid, f: &[f64], x: f64) -> f64 {
    let s = (x / grid.dx - 0.5).clamp(0.0, (grid.n - 1) as f64);
    let i = (s.floor() as usize).min(grid.n - 2);
    let th = s - i as f64;
    (1.0 - th) * f[i] + th * f[i + 1]
}

/// `∫ϱ(x)|f(x) − g(x)|² dx` with `ϱ(x) = 1/cosh(|x − center|/R)`, `f` on
/// `fine` and `g` interpolated from `coarse`.
pub fn weighted_distance(fine: &Grid, f: &[f64], coarse: &Grid, g: &[f64], center: f64, radius: f64) -> f64 {
    (0..fine.n)
        .map(|i| {
            let x = fine.x(i);
            let d = f[i] - interpolate(coarse, g, x);
            d * d / ((x - center).abs() / radius).cosh()
        })
        .sum::<f64>()
        * fine.dx
}

/// Largest deviation of `f` from its moving average over one period,
/// skipping one period at each end.
pub fn oscillation_amplitude(grid: &Grid, f: &[f64], period: f64) -> f64 {
    let m = (period / grid.dx).round() as usize;
    if m < 2 || 2 * m >= grid.n {
        return 0.0;
    }
    let half = m / 2;
    let mut prefix = vec![0.0; grid.n + 1];
    for i in 0..grid.n {
        prefix[i + 1] = prefix[i] + f[i];
    }
    (m..grid.n - m)
        .map(|i| {
            let lo = i - half;
            let avg = (prefix[lo + m] - prefix[lo]) / m as f64;
            (f[i] - avg).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> impl Fn(f64) -> f64 {
        |_| 1.0
    }

    #[test]
    fn constant_coefficient_spectrum() {
        let basis = sturm_solve(&unit(), &unit(), 256, 9).unwrap();
        assert!((basis.lambda[0] - 1.0).abs() < 1e-10);
        let exact = 1.0 + 4.0 * PI * PI;
        assert!(((basis.lambda[1] - exact) / exact).abs() < 1e-4);
        assert!((basis.lambda[1] - basis.lambda[2]).abs() < 1e-9);
        assert!((basis.lambda[3] - basis.lambda[4]).abs() < 1e-9);
        for w in basis.lambda.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal_eigenpairs() {
        let dw = |y: f64| 1.0 + 0.5 * (2.0 * PI * y).cos();
        let b = |y: f64| 2.0 + (4.0 * PI * y).sin();
        let basis = sturm_solve(&dw, &b, 128, 20).unwrap();
        for m in 0..20 {
            for n in 0..20 {
                let ip = basis.inner(&basis.psi[m], &basis.psi[n]);
                assert!((ip - if m == n { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            assert!(basis.residual(m) < 1e-8 * basis.lambda[m].max(1.0) * 128.0 * 128.0);
        }
        assert!(basis.lambda[0] > 0.0);
    }

    #[test]
    fn eigenvalue_error_is_second_order() {
        let exact = 1.0 + 4.0 * PI * PI;
        let err: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| sturm_solve(&unit(), &unit(), n, 3).unwrap().lambda[1] - exact)
            .collect();
        let (r1, r2) = (err[0] / err[1], err[1] / err[2]);
        assert!((r1 - 4.0).abs() < 0.05 && (r2 - 4.0).abs() < 0.05, "{r1} {r2}");
    }

    #[test]
    fn nonpositive_coefficients_are_rejected() {
        let err = sturm_solve(&|y: f64| (2.0 * PI * y).sin(), &unit(), 32, 4).unwrap_err();
        assert!(matches!(err, TwoScaleError::NotPositive { name: "D_w", .. }));
        let err = sturm_solve(&unit(), &|_| 0.0, 32, 4).unwrap_err();
        assert!(matches!(err, TwoScaleError::NotPositive { name: "b", .. }));
    }

    #[test]
    fn parseval_with_full_basis() {
        let basis = sturm_solve(&unit(), &unit(), 64, 64).unwrap();
        let f = basis.sample(&|y: f64| (y * 7.0).sin() + y * y);
        assert!(basis.parseval_defect(&f).abs() < 1e-12);
        let partial = sturm_solve(&unit(), &unit(), 64, 5).unwrap();
        assert!(partial.parseval_defect(&f) > 1e-6);
    }

    #[test]
    fn orthogonal_couplings_give_zero_weight() {
        let basis = sturm_solve(&unit(), &unit(), 128, 16).unwrap();
        let (p2, p6) = (sine_mode(1), sine_mode(3));
        let err = kernel_from_coupling(&basis, &p2, &p6).unwrap_err();
        assert!(matches!(err, TwoScaleError::Kernel(KernelError::ZeroWeight)));
        let a = basis.coefficients(&basis.sample(&p2));
        let b = basis.coefficients(&basis.sample(&p6));
        assert!(a.iter().zip(&b).all(|(x, y)| (x * y).abs() < 1e-12));
    }

    #[test]
    fn single_mode_coupling() {
        let basis = sturm_solve(&unit(), &unit(), 256, 16).unwrap();
        let p4 = sine_mode(2);
        let k = kernel_from_coupling(&basis, &p4, &p4).unwrap();
        assert!((k.gamma() - 1.0 / basis.lambda[3]).abs() < 1e-12);
        let m = k.moments();
        assert!((m.g1_hat - 1.0 / basis.lambda[3]).abs() < 1e-10);
    }

    #[test]
    fn homogenization_example_weight() {
        let data = TwoScaleData::homogenization_example();
        let basis = data.basis(256, 64).unwrap();
        let k = kernel_from_coupling(&basis, &*data.alpha, &*data.beta).unwrap();
        assert!((k.gamma() - 0.08763).abs() < 1e-4, "{}", k.gamma());
        let exact = 1.0 / (1.0 + 4.0 * PI * PI) + 10.0 / (1.0 + 16.0 * PI * PI);
        assert!((k.gamma() - exact).abs() < 5e-5);
        let p = data.effective_problem(256).unwrap();
        assert!((p.gamma - k.gamma()).abs() < 1e-12);
    }

    #[test]
    fn micro_semigroup_is_positive() {
        let dw = |y: f64| 1.0 + 0.5 * (2.0 * PI * y).cos();
        let b = |y: f64| 1.5 + 0.5 * (2.0 * PI * y).sin();
        let basis = sturm_solve(&dw, &b, 64, 64).unwrap();
        let mut psi0 = vec![0.0; 64];
        psi0[10] = 1.0;
        let out = basis.semigroup(&psi0, 0.1);
        assert!(out.iter().all(|v| *v > 0.0), "{:?}", out.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn average_of_w_stays_zero() {
        let data = TwoScaleData::homogenization_example();
        let grid = Grid::new(60.0, 0.2);
        let st = TwoScaleState::front(&data, grid, 32, 40.0).unwrap();
        let run = simulate_two_scale(st, &data, &TwoScaleOptions { dt: 0.01, t_end: 20.0, output_every: 1.0 }).unwrap();
        assert!(run.max_w_average < 1e-6);
        assert!(run.speed < 0.0);
    }

    #[test]
    fn decoupled_micro_field_decays() {
        let mut data = TwoScaleData::homogenization_example();
        data.beta = Arc::new(|_| 0.0);
        data.reaction = Reaction::Uniform(Nonlinearity::cubic(0.6));
        let grid = Grid::new(100.0, 0.1);
        let mut st = TwoScaleState::front(&data, grid, 32, 50.0).unwrap();
        for (k, w) in st.w.iter_mut().enumerate() {
            *w = 0.3 * (2.0 * PI * (k % 32) as f64 / 32.0).sin();
        }
        let run = simulate_two_scale(st, &data, &TwoScaleOptions { dt: 0.01, t_end: 80.0, output_every: 0.5 }).unwrap();
        assert!(run.state.w.iter().all(|w| w.abs() < 1e-10));
        assert!((run.speed - 0.2 / 2f64.sqrt()).abs() < 1e-2, "{}", run.speed);
    }

    #[test]
    fn eps_system_needs_resolution() {
        let data = TwoScaleData::homogenization_example();
        let opts = EpsOptions { dx: 0.1, ..EpsOptions::for_eps(0.25, 50.0, 1.0) };
        assert!(matches!(simulate_eps(0.25, &data, 25.0, &opts), Err(TwoScaleError::ResolutionError(_))));
    }

    #[test]
    fn eps_system_without_oscillation_is_homogeneous() {
        // constant coefficients and no coupling: the ε-system is the plain Nagumo equation
        let data = TwoScaleData {
            d_v: Arc::new(|_| 1.0),
            reaction: Reaction::Uniform(Nonlinearity::cubic(0.6)),
            alpha: Arc::new(|_| 0.0),
            beta: Arc::new(|_| 0.0),
            d_w: Arc::new(|_| 1.0),
            b: Arc::new(|_| 1.0),
        };
        let a = simulate_eps(1.0, &data, 30.0, &EpsOptions::for_eps(1.0, 60.0, 30.0)).unwrap();
        let b = simulate_eps(0.5, &data, 30.0, &EpsOptions { dx: a.grid.dx, ..EpsOptions::for_eps(0.5, 60.0, 30.0) }).unwrap();
        let diff = a.v.iter().zip(&b.v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-13, "{diff}");
    }

    #[test]
    fn amplitude_of_pure_oscillation() {
        let grid = Grid::new(20.0, 0.01);
        let f: Vec<f64> = (0..grid.n).map(|i| 0.5 + 0.2 * (2.0 * PI * grid.x(i) / 0.5).sin()).collect();
        assert!((oscillation_amplitude(&grid, &f, 0.5) - 0.2).abs() < 1e-3);
    }

    #[test]
    fn weighted_distance_of_constants() {
        let g = Grid::new(10.0, 0.01);
        let f = vec![1.0; g.n];
        let z = vec![0.0; g.n];
        let d = weighted_distance(&g, &f, &g, &z, 5.0, 1e9);
        assert!((d - 10.0).abs() < 1e-9);
    }
}
