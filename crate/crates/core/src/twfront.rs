//! Traveling fronts of the auxiliary nonlocal equation
//! `−cU′ = DU″ + F(U) + γ∫Γ(τ)U(ξ+vτ)dτ`, and the fixed point `v = C(γ, v)`
//! that turns an auxiliary front into a front of the memory equation.
//!
//! The profile lives on a uniform grid on `[−L, L]` with Dirichlet values at
//! the equilibria; translation is fixed by pinning `U(0) = u_m`. The
//! τ-quadrature uses nodes `τₖ = k·h/|v|`, so every shifted evaluation lands
//! exactly on a grid node and the nonlocal term is a Toeplitz stencil.

use rayon::prelude::*;

use crate::bistable::{BistableError, BistableProblem, Equilibria, Nonlinearity};
use crate::kernels::{hat_integrals, KernelForm, MemoryKernel};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrontError {
    #[error(transparent)]
    Bistable(#[from] BistableError),
    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("domain too small: |U'| = {slope:e} at the boundary (limit {limit:e})")]
    DomainTooSmall { slope: f64, limit: f64 },
    #[error("speed curve increases by {rise:e} between v = {v0} and v = {v1}")]
    MonotonicityViolation { v0: f64, v1: f64, rise: f64 },
    #[error("no sign change of C(gamma, v) - v in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontOptions {
    /// Half width `L` of the computational window.
    pub half_width: f64,
    /// Grid spacing `h`.
    pub h: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub bc_tol: f64,
    /// Largest admissible `|U′(±L)|`.
    pub layer_tol: f64,
    pub fp_tol: f64,
    pub mono_tol: f64,
    pub max_expand: usize,
    /// Shift of the tanh initial guess; the converged front does not depend on it.
    pub guess_shift: f64,
}

impl Default for FrontOptions {
    fn default() -> Self {
        Self {
            half_width: 60.0,
            h: 0.05,
            newton_tol: 1e-10,
            max_iter: 60,
            max_halvings: 8,
            bc_tol: 1e-6,
            layer_tol: 1e-6,
            fp_tol: 1e-6,
            mono_tol: 1e-4,
            max_expand: 30,
            guess_shift: 0.0,
        }
    }
}

impl FrontOptions {
    fn cells(&self) -> Result<usize, FrontError> {
        if !(self.h > 0.0 && self.half_width > 0.0) {
            return Err(FrontError::InvalidOption(format!(
                "h = {}, L = {}",
                self.h, self.half_width
            )));
        }
        let half = (self.half_width / self.h).round() as usize;
        if half < 4 || ((half as f64) * self.h - self.half_width).abs() > 1e-9 * self.half_width {
            return Err(FrontError::InvalidOption(format!(
                "L = {} must be a multiple of h = {} with at least 4 cells",
                self.half_width, self.h
            )));
        }
        Ok(2 * half)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontSolution {
    pub xi: Vec<f64>,
    pub profile: Vec<f64>,
    /// `C(γ, v)`.
    pub speed: f64,
    /// Auxiliary speed the front was computed for.
    pub v: f64,
    pub connects: (f64, f64),
    pub u_mid: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FrontSolution {
    pub fn h(&self) -> f64 {
        self.xi[1] - self.xi[0]
    }

    /// Largest decrease between neighbouring profile values (0 for a monotone front).
    pub fn monotonicity_defect(&self) -> f64 {
        self.profile
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn boundary_slopes(&self) -> (f64, f64) {
        let n = self.profile.len();
        let h = self.h();
        (
            (self.profile[1] - self.profile[0]) / h,
            (self.profile[n - 1] - self.profile[n - 2]) / h,
        )
    }

    pub fn phase_value(&self) -> f64 {
        self.profile[self.profile.len() / 2]
    }
}

/// Toeplitz stencil `(offset, weight)` for `∫Γ(τ)U(ξ+vτ)dτ` on a grid of
/// spacing `h`; offsets share the sign of `v`.
fn nonlocal_stencil(k: &MemoryKernel, v: f64, h: f64) -> Vec<(isize, f64)> {
    if v == 0.0 {
        return vec![(0, 1.0)];
    }
    let step = h / v.abs();
    let n = (k.tau_max() / step).ceil().max(1.0) as usize;
    let dir = if v > 0.0 { 1 } else { -1 };
    k.grid_weights(step, n)
        .into_iter()
        .enumerate()
        .filter(|(_, w)| *w != 0.0)
        .map(|(i, w)| (dir * i as isize, w))
        .collect()
}

/// Exponential-sum memory on the same hat-weight grid, written as the
/// recursion `T_i = U_i + q T_{i+d}` per term: the memory at node `i` is
/// `Σ (l T_i + r T_{i+d})`. This is the untruncated stencil and keeps the
/// Jacobian narrow however far the kernel reaches.
struct Recursion {
    dir: isize,
    /// `(l, r, q)` per exponential, normalized to unit total weight.
    terms: Vec<(f64, f64, f64)>,
}

fn recursion(k: &MemoryKernel, v: f64, h: f64) -> Option<Recursion> {
    let KernelForm::ExpSum(exps) = k.form() else {
        return None;
    };
    if v == 0.0 {
        return None;
    }
    let step = h / v.abs();
    let mut terms: Vec<(f64, f64, f64)> = exps
        .iter()
        .map(|e| {
            let (l, r) = hat_integrals(e.rate, step);
            (e.coeff * l, e.coeff * r, (-e.rate * step).exp())
        })
        .collect();
    let total: f64 = terms.iter().map(|(l, r, q)| (l + r) / (1.0 - q)).sum();
    for t in &mut terms {
        t.0 /= total;
        t.1 /= total;
    }
    Some(Recursion {
        dir: if v > 0.0 { 1 } else { -1 },
        terms,
    })
}

struct Discretization<'a> {
    p: &'a BistableProblem,
    eq: Equilibria,
    gamma: f64,
    stencil: Vec<(isize, f64)>,
    recursion: Option<Recursion>,
    /// number of cells; grid nodes are 0..=n
    n: usize,
    h: f64,
    pin: usize,
}

impl Discretization<'_> {
    fn node(&self, u: &[f64], j: isize) -> f64 {
        if j <= 0 {
            self.eq.u_minus
        } else if j as usize >= self.n {
            self.eq.u_plus
        } else {
            u[j as usize]
        }
    }

    /// Residual at interior nodes 1..n-1 (stored at the same indices; the
    /// end entries are unused).
    fn residual(&self, u: &[f64], c: f64, out: &mut [f64]) -> f64 {
        let d = self.p.diffusion / (self.h * self.h);
        let adv = c / (2.0 * self.h);
        let mut norm: f64 = 0.0;
        let sums = self.recursion.as_ref().map(|r| self.sums(r, u));
        for i in 1..self.n {
            let (l, m, r) = (u[i - 1], u[i], u[i + 1]);
            let mut mem = 0.0;
            match (&self.recursion, &sums) {
                (Some(rec), Some(sums)) => {
                    let next = (i as isize + rec.dir) as usize;
                    for (t, &(wl, wr, _)) in sums.iter().zip(&rec.terms) {
                        mem += wl * t[i] + wr * t[next];
                    }
                }
                _ => {
                    for &(off, w) in &self.stencil {
                        mem += w * self.node(u, i as isize + off);
                    }
                }
            }
            let res = d * (l - 2.0 * m + r) + adv * (r - l) + self.p.nonlinearity.eval(m) + self.gamma * mem;
            out[i] = res;
            norm = norm.max(res.abs());
        }
        norm
    }

    /// `T` of every recursion term at nodes `0..=n`, the far end held at
    /// the constant state it continues into.
    fn sums(&self, rec: &Recursion, u: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        rec.terms
            .iter()
            .map(|&(_, _, q)| {
                let mut t = vec![0.0; n + 1];
                if rec.dir > 0 {
                    t[n] = self.eq.u_plus / (1.0 - q);
                    for i in (0..n).rev() {
                        t[i] = u[i] + q * t[i + 1];
                    }
                } else {
                    t[0] = self.eq.u_minus / (1.0 - q);
                    for i in 1..=n {
                        t[i] = u[i] + q * t[i - 1];
                    }
                }
                t
            })
            .collect()
    }

    /// Newton step `(δU, δc)` for the bordered system; `δU` at the pin is 0.
    fn newton_step(&self, u: &[f64], c: f64, res: &[f64]) -> Option<(Vec<f64>, f64)> {
        if let Some(rec) = &self.recursion {
            return self.newton_step_recursive(rec, u, c, res);
        }
        let m = self.n - 1; // unknown j ↔ node j+1
        let j0 = self.pin - 1;
        let kl = self
            .stencil
            .iter()
            .map(|&(o, _)| (-o).max(0) as usize)
            .max()
            .unwrap_or(0)
            .clamp(1, m - 1);
        let ku = self
            .stencil
            .iter()
            .map(|&(o, _)| o.max(0) as usize)
            .max()
            .unwrap_or(0)
            .clamp(1, m - 1);
        let mut a = BandMatrix::zeros(m, kl, ku);
        let d = self.p.diffusion / (self.h * self.h);
        let adv = c / (2.0 * self.h);
        let mut g = vec![0.0; m];
        for j in 0..m {
            let i = j + 1;
            g[j] = (u[i + 1] - u[i - 1]) / (2.0 * self.h);
            if j != j0 {
                a.add(j, j, -2.0 * d + self.p.nonlinearity.deriv(u[i]));
            }
            if j > 0 && j - 1 != j0 {
                a.add(j, j - 1, d - adv);
            }
            if j + 1 < m && j + 1 != j0 {
                a.add(j, j + 1, d + adv);
            }
            for &(off, w) in &self.stencil {
                let node = i as isize + off;
                if node >= 1 && (node as usize) < self.n {
                    let col = node as usize - 1;
                    if col != j0 && a.in_band(j, col) {
                        a.add(j, col, self.gamma * w);
                    }
                }
            }
        }
        // column j0 carries e_{j0}; the rank-one term swaps it for ∂R/∂c
        a.add(j0, j0, 1.0);
        let lu = a.factor().ok()?;
        let mut y: Vec<f64> = (0..m).map(|j| -res[j + 1]).collect();
        lu.solve_in_place(&mut y);
        let mut z = g;
        z[j0] -= 1.0;
        lu.solve_in_place(&mut z);
        let denom = 1.0 + z[j0];
        if denom.abs() < 1e-300 {
            return None;
        }
        let f = y[j0] / denom;
        let q: Vec<f64> = y.iter().zip(&z).map(|(yi, zi)| yi - f * zi).collect();
        let dc = q[j0];
        let mut du = vec![0.0; self.n + 1];
        for j in 0..m {
            if j != j0 {
                du[j + 1] = q[j];
            }
        }
        Some((du, dc))
    }
}

impl Discretization<'_> {
    /// Newton step on the unknowns `(U_i, T¹_i, …, Tᵐ_i)` interleaved per
    /// node, so the bandwidth is set by the number of exponentials only.
    fn newton_step_recursive(&self, rec: &Recursion, u: &[f64], c: f64, res: &[f64]) -> Option<(Vec<f64>, f64)> {
        let nodes = self.n - 1;
        let b = rec.terms.len() + 1;
        let m = nodes * b;
        let band = 2 * b - 1;
        let idx = |node: usize, s: usize| (node - 1) * b + s;
        let j0 = idx(self.pin, 0);
        let mut a = BandMatrix::zeros(m, band.min(m - 1), band.min(m - 1));
        let d = self.p.diffusion / (self.h * self.h);
        let adv = c / (2.0 * self.h);
        let add = |a: &mut BandMatrix, row: usize, col: usize, v: f64| {
            if col != j0 {
                a.add(row, col, v);
            }
        };
        let mut g = vec![0.0; m];
        for i in 1..self.n {
            let row = idx(i, 0);
            g[row] = (u[i + 1] - u[i - 1]) / (2.0 * self.h);
            add(&mut a, row, row, -2.0 * d + self.p.nonlinearity.deriv(u[i]));
            if i > 1 {
                add(&mut a, row, idx(i - 1, 0), d - adv);
            }
            if i + 1 < self.n {
                add(&mut a, row, idx(i + 1, 0), d + adv);
            }
            let next = i as isize + rec.dir;
            let next_inner = next >= 1 && (next as usize) < self.n;
            for (e, &(wl, wr, q)) in rec.terms.iter().enumerate() {
                let s = e + 1;
                add(&mut a, row, idx(i, s), self.gamma * wl);
                let trow = idx(i, s);
                add(&mut a, trow, trow, 1.0);
                add(&mut a, trow, row, -1.0);
                if next_inner {
                    add(&mut a, row, idx(next as usize, s), self.gamma * wr);
                    add(&mut a, trow, idx(next as usize, s), -q);
                }
            }
        }
        a.add(j0, j0, 1.0);
        let lu = a.factor().ok()?;
        let mut y = vec![0.0; m];
        for i in 1..self.n {
            y[idx(i, 0)] = -res[i];
        }
        lu.solve_in_place(&mut y);
        let mut z = g;
        z[j0] -= 1.0;
        lu.solve_in_place(&mut z);
        let denom = 1.0 + z[j0];
        if denom.abs() < 1e-300 {
            return None;
        }
        let f = y[j0] / denom;
        let dc = y[j0] - f * z[j0];
        let mut du = vec![0.0; self.n + 1];
        for i in 1..self.n {
            let r = idx(i, 0);
            if r != j0 {
                du[i] = y[r] - f * z[r];
            }
        }
        Some((du, dc))
    }
}

fn initial_guess(p: &BistableProblem, eq: &Equilibria, xi: &[f64], shift: f64) -> (Vec<f64>, f64) {
    let span = eq.span();
    let k = span / (2.0 * (2.0 * p.diffusion).sqrt());
    let theta = ((eq.u_mid - eq.u_minus) / span).clamp(1e-6, 1.0 - 1e-6);
    let xi0 = -(2.0 * theta - 1.0).atanh() / k + shift;
    let mut u: Vec<f64> = xi
        .iter()
        .map(|&x| eq.u_minus + span * 0.5 * (1.0 + (k * (x - xi0)).tanh()))
        .collect();
    let n = u.len() - 1;
    u[0] = eq.u_minus;
    u[n] = eq.u_plus;
    u[n / 2] = eq.u_mid;
    let c = match p.nonlinearity {
        // exact speed of the local tilted cubic front
        Nonlinearity::Cubic { .. } => (p.diffusion / 2.0).sqrt() * (2.0 * eq.u_mid - eq.u_minus - eq.u_plus),
        _ => 0.0,
    };
    (u, c)
}

/// Profile and speed `C(γ, v)` of the auxiliary front.
pub fn solve_profile(
    p: &BistableProblem,
    k: &MemoryKernel,
    v: f64,
    opts: &FrontOptions,
) -> Result<FrontSolution, FrontError> {
    solve_profile_from(p, k, v, opts, None)
}

/// As [`solve_profile`], warm-started from `guess` when its grid matches.
pub fn solve_profile_from(
    p: &BistableProblem,
    k: &MemoryKernel,
    v: f64,
    opts: &FrontOptions,
    guess: Option<&FrontSolution>,
) -> Result<FrontSolution, FrontError> {
    solve_with(p, k, v, opts, guess, true)
}

fn solve_with(
    p: &BistableProblem,
    k: &MemoryKernel,
    v: f64,
    opts: &FrontOptions,
    guess: Option<&FrontSolution>,
    allow_recursion: bool,
) -> Result<FrontSolution, FrontError> {
    let n = opts.cells()?;
    let eq = p.tilted_roots()?;
    let h = opts.h;
    let xi: Vec<f64> = (0..=n).map(|i| -opts.half_width + i as f64 * h).collect();
    let rec = if allow_recursion { recursion(k, v, h) } else { None };
    let disc = Discretization {
        p,
        eq,
        gamma: p.gamma,
        stencil: if rec.is_some() { Vec::new() } else { nonlocal_stencil(k, v, h) },
        recursion: rec,
        n,
        h,
        pin: n / 2,
    };
    let (mut u, mut c) = match guess {
        Some(g) if g.profile.len() == n + 1 && (g.h() - h).abs() < 1e-12 && g.connects == (eq.u_minus, eq.u_plus) => {
            (g.profile.clone(), g.speed)
        }
        _ => initial_guess(p, &eq, &xi, opts.guess_shift),
    };
    u[n / 2] = eq.u_mid;

    let mut res = vec![0.0; n + 1];
    let mut trial_res = vec![0.0; n + 1];
    let mut norm = disc.residual(&u, c, &mut res);
    let mut iterations = 0;
    while norm > opts.newton_tol {
        if iterations >= opts.max_iter {
            return Err(FrontError::NoConvergence { residual: norm, iterations });
        }
        iterations += 1;
        let (du, dc) = disc
            .newton_step(&u, c, &res)
            .ok_or(FrontError::NoConvergence { residual: norm, iterations })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            let tc = c + alpha * dc;
            let tn = disc.residual(&trial, tc, &mut trial_res);
            if tn.is_finite() && tn < norm {
                u = trial;
                c = tc;
                norm = tn;
                std::mem::swap(&mut res, &mut trial_res);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(FrontError::NoConvergence { residual: norm, iterations });
        }
    }
    let sol = FrontSolution {
        xi,
        profile: u,
        speed: c,
        v,
        connects: (eq.u_minus, eq.u_plus),
        u_mid: eq.u_mid,
        residual_norm: norm,
        iterations,
    };
    let (sl, sr) = sol.boundary_slopes();
    let slope = sl.abs().max(sr.abs());
    if slope > opts.layer_tol {
        return Err(FrontError::DomainTooSmall {
            slope,
            limit: opts.layer_tol,
        });
    }
    Ok(sol)
}

/// Samples `C(γ, v)` on `v_list`. With `warm_start` the points are solved in
/// order, each from the previous front; otherwise they run in parallel.
/// Fails if the curve rises by more than `mono_tol` along increasing `v`.
pub fn speed_curve(
    p: &BistableProblem,
    k: &MemoryKernel,
    v_list: &[f64],
    opts: &FrontOptions,
    warm_start: bool,
) -> Result<Vec<(f64, f64)>, FrontError> {
    let curve: Vec<(f64, f64)> = if warm_start {
        let mut out = Vec::with_capacity(v_list.len());
        let mut prev: Option<FrontSolution> = None;
        for &v in v_list {
            let s = solve_profile_from(p, k, v, opts, prev.as_ref())?;
            out.push((v, s.speed));
            prev = Some(s);
        }
        out
    } else {
        v_list
            .par_iter()
            .map(|&v| solve_profile(p, k, v, opts).map(|s| (v, s.speed)))
            .collect::<Result<_, _>>()?
    };
    let mut sorted = curve.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in sorted.windows(2) {
        let rise = w[1].1 - w[0].1;
        if rise > opts.mono_tol {
            return Err(FrontError::MonotonicityViolation {
                v0: w[0].0,
                v1: w[1].0,
                rise,
            });
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// The front at `v = c_γ`.
    pub front: FrontSolution,
    pub c_gamma: f64,
    /// `C(γ, 0)`.
    pub c_at_zero: f64,
    /// `|C(γ, c_γ) − c_γ|`.
    pub residual: f64,
    pub area: f64,
    /// `c_γ` lies between 0 and `C(γ, 0)` on the side opposite to the area sign.
    pub sandwich_ok: bool,
    pub evaluations: usize,
}

/// Solves `v = C(γ, v)` by bisection on `C(γ, v) − v`.
pub fn solve_fixed_point(
    p: &BistableProblem,
    k: &MemoryKernel,
    opts: &FrontOptions,
) -> Result<FixedPoint, FrontError> {
    let area = p.area_functional()?;
    let at_zero = solve_profile(p, k, 0.0, opts)?;
    let c0 = at_zero.speed;
    let mut evaluations = 1;
    let finish = |front: FrontSolution, evaluations: usize| {
        let c = front.v;
        let residual = (front.speed - c).abs();
        let slack = 10.0 * opts.fp_tol;
        let sandwich_ok = if area < 0.0 {
            c >= -slack && c <= c0 + slack
        } else if area > 0.0 {
            c <= slack && c >= c0 - slack
        } else {
            c.abs() <= slack
        };
        FixedPoint {
            c_gamma: c,
            front,
            c_at_zero: c0,
            residual,
            area,
            sandwich_ok,
            evaluations,
        }
    };
    if p.gamma == 0.0 || c0 == 0.0 {
        // C(γ, 0) = 0 or C does not depend on v: v = C(γ, 0) is the fixed point
        let front = solve_profile_from(p, k, c0, opts, Some(&at_zero))?;
        if (front.speed - c0).abs() < opts.fp_tol {
            return Ok(finish(front, evaluations + 1));
        }
    }

    let g1 = k.moments().g1_hat;
    let pad = (p.gamma.abs() * g1).max(1e-3);
    let mut lo = c0.min(0.0) - pad;
    let mut hi = c0.max(0.0) + pad;
    let mut eval = |v: f64, guess: &FrontSolution| -> Result<FrontSolution, FrontError> {
        evaluations += 1;
        solve_profile_from(p, k, v, opts, Some(guess))
    };
    let mut f_lo = eval(lo, &at_zero)?;
    let mut expand = 0;
    while f_lo.speed - lo <= 0.0 {
        if expand >= opts.max_expand {
            return Err(FrontError::BracketFailure { lo, hi });
        }
        expand += 1;
        lo -= pad * f64::powi(2.0, expand as i32);
        f_lo = eval(lo, &f_lo)?;
    }
    let mut f_hi = eval(hi, &at_zero)?;
    expand = 0;
    while f_hi.speed - hi >= 0.0 {
        if expand >= opts.max_expand {
            return Err(FrontError::BracketFailure { lo, hi });
        }
        expand += 1;
        hi += pad * f64::powi(2.0, expand as i32);
        f_hi = eval(hi, &f_hi)?;
    }
    let mut best = if (f_lo.speed - lo).abs() < (f_hi.speed - hi).abs() {
        f_lo.clone()
    } else {
        f_hi.clone()
    };
    while (best.speed - best.v).abs() >= 0.5 * opts.fp_tol && hi - lo > 1e-3 * opts.fp_tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid, &best)?;
        if f_mid.speed - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (f_mid.speed - mid).abs() < (best.speed - best.v).abs() {
            best = f_mid;
        }
    }
    Ok(finish(best, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bistable::{beta_zero, mckean_speed};

    fn opts(l: f64, h: f64) -> FrontOptions {
        FrontOptions {
            half_width: l,
            h,
            ..FrontOptions::default()
        }
    }

    #[test]
    fn recursion_matches_truncated_stencil() {
        // two exponentials, both directions of the shift
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = MemoryKernel::exp_sum(&[(1.0, 1.0), (0.5, 3.0)], 0.05).unwrap();
        let o = opts(40.0, 0.1);
        for v in [-0.4, 0.3] {
            let fast = solve_with(&p, &k, v, &o, None, true).unwrap();
            let full = solve_with(&p, &k, v, &o, None, false).unwrap();
            // the stencil drops a tail of relative mass 1e-8
            assert!((fast.speed - full.speed).abs() < 1e-7, "{} vs {}", fast.speed, full.speed);
            let diff = fast.profile.iter().zip(&full.profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-6, "profile difference {diff}");
        }
    }

    #[test]
    fn deep_coupling_front_inside_local_bracket() {
        // far-reaching shifts at large |v|; the local speed is about -4.2
        let beta = -5.0;
        let p = BistableProblem::cubic(0.6, beta).unwrap();
        let k = unit_kernel(-beta);
        let o = FrontOptions {
            half_width: 150.0,
            ..FrontOptions::default()
        };
        let fp = solve_fixed_point(&p, &k, &o).unwrap();
        let cfn = mckean_speed(0.6, beta).unwrap();
        assert!(fp.residual < 1e-6);
        assert!(fp.c_gamma < 0.0 && fp.c_gamma > cfn, "{} vs {cfn}", fp.c_gamma);
    }

    fn unit_kernel(gamma: f64) -> MemoryKernel {
        MemoryKernel::exponential(1.0, gamma).unwrap()
    }

    #[test]
    fn local_cubic_front_speed() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let s = solve_profile(&p, &unit_kernel(0.0), 0.3, &FrontOptions::default()).unwrap();
        assert!((s.speed - 0.2 / 2f64.sqrt()).abs() < 5e-3, "{}", s.speed);
        assert!(s.residual_norm <= 1e-10);
        assert!(s.monotonicity_defect() <= 1e-8);
        assert!((s.phase_value() - 0.6).abs() < 1e-14);
        assert!((s.profile[0] - 0.0).abs() < 1e-6 && (s.profile.last().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_cubic_is_standing() {
        let p = BistableProblem::cubic(0.5, 0.0).unwrap();
        let s = solve_profile(&p, &unit_kernel(0.0), 0.0, &opts(30.0, 0.05)).unwrap();
        assert!(s.speed.abs() < 1e-6);
    }

    #[test]
    fn grid_refinement_is_second_order() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let k = unit_kernel(0.0);
        let c: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&h| solve_profile(&p, &k, 0.0, &opts(30.0, h)).unwrap().speed)
            .collect();
        let r1 = (c[0] - c[1]) / (c[1] - c[2]);
        let r2 = (c[1] - c[2]) / (c[2] - c[3]);
        assert!((r1 - 4.0).abs() < 0.5 && (r2 - 4.0).abs() < 0.5, "{r1} {r2}");
    }

    #[test]
    fn speed_does_not_depend_on_initial_shift() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = unit_kernel(0.05);
        let o = opts(40.0, 0.05);
        let a = solve_profile(&p, &k, 0.2, &o).unwrap();
        let b = solve_profile(&p, &k, 0.2, &FrontOptions { guess_shift: 3.0, ..o }).unwrap();
        assert!((a.speed - b.speed).abs() < 1e-8);
    }

    #[test]
    fn reflection_negates_speed() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = unit_kernel(0.05);
        let o = opts(40.0, 0.05);
        let s = solve_profile(&p, &k, 0.3, &o).unwrap();
        let r = solve_profile(&p.reflected().unwrap(), &k, -0.3, &o).unwrap();
        assert!((s.speed + r.speed).abs() < 1e-8, "{} {}", s.speed, r.speed);
    }

    #[test]
    fn speed_curve_decreases_in_v() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = unit_kernel(0.05);
        let o = opts(40.0, 0.05);
        let curve = speed_curve(&p, &k, &[-0.5, 0.0, 0.5], &o, true).unwrap();
        assert!(curve[0].1 > curve[1].1 && curve[1].1 > curve[2].1);
        let par = speed_curve(&p, &k, &[-0.5, 0.0, 0.5], &o, false).unwrap();
        for (a, b) in curve.iter().zip(&par) {
            assert!((a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn speed_curve_is_continuous_under_refinement() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = unit_kernel(0.05);
        let o = opts(40.0, 0.05);
        let coarse = speed_curve(&p, &k, &[-0.5, 0.0, 0.5], &o, true).unwrap();
        let fine = speed_curve(&p, &k, &[-0.5, -0.25, 0.0, 0.25, 0.5], &o, true).unwrap();
        for (c, f) in coarse.iter().zip(fine.iter().step_by(2)) {
            assert!((c.1 - f.1).abs() < 1e-3);
        }
        // midpoints sit between their neighbours
        for w in fine.windows(3).step_by(2) {
            assert!(w[1].1 <= w[0].1 && w[1].1 >= w[2].1);
        }
    }

    #[test]
    fn speed_without_memory_is_flat_in_v() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let curve = speed_curve(&p, &unit_kernel(0.0), &[-1.0, 0.0, 1.0], &opts(30.0, 0.1), true).unwrap();
        assert!((curve[0].1 - curve[2].1).abs() < 1e-9);
    }

    #[test]
    fn speed_inside_bounds() {
        let k_shape = unit_kernel(1.0);
        for beta in [-0.02, -0.05] {
            let p = BistableProblem::cubic(0.6, beta).unwrap();
            let k = k_shape.with_gamma(-beta);
            let params = p.estimate_params().unwrap();
            for v in [-0.4, 0.0, 0.4] {
                let s = solve_profile(&p, &k, v, &opts(40.0, 0.05)).unwrap();
                let b = p.speed_bounds(&params, &k, v).unwrap();
                assert!(b.contains(s.speed, 0.0), "beta {beta} v {v}: {} not in {:?}", s.speed, b);
            }
        }
    }

    #[test]
    fn fixed_point_without_memory_is_mckean() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let fp = solve_fixed_point(&p, &unit_kernel(0.0), &FrontOptions::default()).unwrap();
        assert!((fp.c_gamma - mckean_speed(0.6, 0.0).unwrap()).abs() < 1e-4);
        assert!(fp.residual < 1e-6 && fp.evaluations <= 2);
    }

    #[test]
    fn fixed_point_at_beta_zero_is_standing() {
        let p = BistableProblem::cubic(0.6, beta_zero(0.6).unwrap()).unwrap();
        let k = unit_kernel(p.gamma);
        let fp = solve_fixed_point(&p, &k, &opts(40.0, 0.05)).unwrap();
        assert!(fp.c_gamma.abs() < 1e-4, "{}", fp.c_gamma);
    }

    #[test]
    fn fixed_point_sandwich() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = unit_kernel(0.05);
        let fp = solve_fixed_point(&p, &k, &opts(40.0, 0.05)).unwrap();
        let cfn = mckean_speed(0.6, -0.05).unwrap();
        assert!(fp.residual < 1e-6);
        assert!(fp.sandwich_ok);
        assert!(fp.c_gamma < 0.0 && fp.c_gamma >= cfn - 5e-3, "{} vs {}", fp.c_gamma, cfn);
        assert_eq!(fp.c_gamma.signum(), -fp.area.signum());
    }

    #[test]
    fn delay_kernel_front() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let k = MemoryKernel::delay_comb(&[(0.025, 1.0), (0.025, 3.0)]).unwrap();
        let fp = solve_fixed_point(&p, &k, &opts(40.0, 0.05)).unwrap();
        assert!(fp.residual < 1e-6 && fp.sandwich_ok);
    }

    #[test]
    fn small_domain_is_reported() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let err = solve_profile(&p, &unit_kernel(0.0), 0.0, &opts(2.0, 0.05)).unwrap_err();
        assert!(matches!(err, FrontError::DomainTooSmall { .. }));
    }
}
