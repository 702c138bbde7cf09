//! Bistable nonlinearities `F`, the tilted function `F_γ(u) = F(u) + γu`,
//! their equilibria, and the closed-form speed information available for them.
//!
//! The cubic `F(u) = −u(u−a)(u−1)` is handled with closed forms throughout;
//! general polynomials and user callbacks go through a scan-and-bisect root
//! search and adaptive quadrature.

use std::fmt;
use std::sync::Arc;

use crate::kernels::MemoryKernel;
use crate::quad::adaptive_simpson;

/// Padding added to the Φ bounds so that strict inequalities survive rounding.
pub const PHI_PAD: f64 = 1e-6;

const SCAN_POINTS: usize = 4000;
const ESTIMATE_GRID: usize = 10_000;
const ANCHOR_STRIDE: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BistableError {
    #[error("F_gamma is not bistable: {0}")]
    NotBistable(String),
    #[error("parameter outside the supported regime: {0}")]
    OutOfRegime(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied nonlinearity with its derivative and a root search window.
#[derive(Clone)]
pub struct CustomNonlinearity {
    pub f: ScalarFn,
    pub df: ScalarFn,
    pub search: (f64, f64),
}

impl fmt::Debug for CustomNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNonlinearity")
            .field("search", &self.search)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Nonlinearity {
    /// `−u(u−a)(u−1)`
    Cubic { a: f64 },
    /// `Σ coeffs[k] u^k`
    Poly(Vec<f64>),
    Custom(CustomNonlinearity),
}

impl Nonlinearity {
    pub fn cubic(a: f64) -> Self {
        Self::Cubic { a }
    }

    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        search: (f64, f64),
    ) -> Self {
        Self::Custom(CustomNonlinearity {
            f: Arc::new(f),
            df: Arc::new(df),
            search,
        })
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Cubic { a } => -u * (u - a) * (u - 1.0),
            Self::Poly(c) => horner(c, u),
            Self::Custom(c) => (c.f)(u),
        }
    }

    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match self {
            Self::Cubic { a } => -3.0 * u * u + 2.0 * (1.0 + a) * u - a,
            Self::Poly(c) => {
                let d: f64 = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, ck)| acc * u + k as f64 * ck);
                d
            }
            Self::Custom(c) => (c.df)(u),
        }
    }

    /// Ascending polynomial coefficients, when `F` is polynomial.
    pub fn poly_coeffs(&self) -> Option<Vec<f64>> {
        match self {
            Self::Cubic { a } => Some(vec![0.0, -a, 1.0 + a, -1.0]),
            Self::Poly(c) => Some(c.clone()),
            Self::Custom(_) => None,
        }
    }
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * u + ck)
}

/// The three zeros `u₋ < u_m < u₊` of `F_γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibria {
    pub u_minus: f64,
    pub u_mid: f64,
    pub u_plus: f64,
}

impl Equilibria {
    pub fn span(&self) -> f64 {
        self.u_plus - self.u_minus
    }
}

/// Data of the piecewise bounds on `F_γ` used by the speed estimates:
/// `F_γ ≥ −Φ_*` on `[u₋, u_m]`, `F_γ ≤ Φ^*` on `[u_m, u₊]`, the lower chord
/// `F_γ(u) ≥ α_*(u − a_*)` on `[a_*, b_*] ⊂ [u_m, u₊]` and the upper chord
/// `F_γ(u) ≤ α^*(u − a^*)` on `[b^*, a^*] ⊂ [u₋, u_m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams {
    pub phi_star: f64,
    pub phi_sup: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub alpha_star: f64,
    pub a_sup: f64,
    pub b_sup: f64,
    pub alpha_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SpeedBounds {
    pub fn contains(&self, c: f64, slack: f64) -> bool {
        c >= self.lower - slack && c <= self.upper + slack
    }
}

#[derive(Debug, Clone)]
pub struct BistableProblem {
    pub diffusion: f64,
    pub nonlinearity: Nonlinearity,
    pub gamma: f64,
}

impl BistableProblem {
    pub fn new(diffusion: f64, nonlinearity: Nonlinearity, gamma: f64) -> Result<Self, BistableError> {
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(BistableError::InvalidParameter(format!(
                "diffusion must be positive, got {diffusion}"
            )));
        }
        if !gamma.is_finite() {
            return Err(BistableError::InvalidParameter(format!("gamma = {gamma}")));
        }
        if let Nonlinearity::Cubic { a } = nonlinearity {
            if !(a > 0.0 && a < 1.0) {
                return Err(BistableError::OutOfRegime(format!("cubic needs 0 < a < 1, got {a}")));
            }
        }
        Ok(Self {
            diffusion,
            nonlinearity,
            gamma,
        })
    }

    /// The FitzHugh–Nagumo reduction with coupling β: unit diffusion, cubic
    /// `F`, and tilt `γ = −β`.
    pub fn cubic(a: f64, beta: f64) -> Result<Self, BistableError> {
        Self::new(1.0, Nonlinearity::cubic(a), -beta)
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    /// `F_γ(u)`
    #[inline]
    pub fn tilted(&self, u: f64) -> f64 {
        self.nonlinearity.eval(u) + self.gamma * u
    }

    #[inline]
    pub fn tilted_deriv(&self, u: f64) -> f64 {
        self.nonlinearity.deriv(u) + self.gamma
    }

    pub fn tilted_roots(&self) -> Result<Equilibria, BistableError> {
        let roots = match &self.nonlinearity {
            Nonlinearity::Cubic { a } => {
                // F_γ(u) = −u (u² − (1+a)u + a − γ)
                let disc = (1.0 - a).powi(2) + 4.0 * self.gamma;
                if disc <= 0.0 {
                    return Err(BistableError::NotBistable(format!(
                        "cubic a = {a} with gamma = {} has a single real zero",
                        self.gamma
                    )));
                }
                let s = 0.5 * disc.sqrt();
                let mut r = [0.0, 0.5 * (1.0 + a) - s, 0.5 * (1.0 + a) + s];
                r.sort_by(|x, y| x.partial_cmp(y).unwrap());
                r.to_vec()
            }
            _ => self.scan_roots()?,
        };
        if roots.len() != 3 {
            return Err(BistableError::NotBistable(format!("found {} zeros", roots.len())));
        }
        let eq = Equilibria {
            u_minus: roots[0],
            u_mid: roots[1],
            u_plus: roots[2],
        };
        let sep = 1e-9 * (1.0 + eq.span().abs());
        if eq.u_mid - eq.u_minus <= sep || eq.u_plus - eq.u_mid <= sep {
            return Err(BistableError::NotBistable("zeros are not simple".into()));
        }
        let (d0, d1, d2) = (
            self.tilted_deriv(eq.u_minus),
            self.tilted_deriv(eq.u_mid),
            self.tilted_deriv(eq.u_plus),
        );
        if !(d0 < 0.0 && d1 > 0.0 && d2 < 0.0) {
            return Err(BistableError::NotBistable(format!(
                "derivative signs at the zeros are ({d0:.3e}, {d1:.3e}, {d2:.3e})"
            )));
        }
        Ok(eq)
    }

    fn search_window(&self) -> (f64, f64) {
        match &self.nonlinearity {
            Nonlinearity::Cubic { .. } => (-2.0, 3.0),
            Nonlinearity::Poly(c) => {
                let mut c = c.clone();
                if c.len() > 1 {
                    c[1] += self.gamma;
                } else {
                    c.push(self.gamma);
                }
                while c.len() > 1 && *c.last().unwrap() == 0.0 {
                    c.pop();
                }
                let lead = *c.last().unwrap();
                let bound = 1.0
                    + c[..c.len() - 1]
                        .iter()
                        .map(|x| (x / lead).abs())
                        .fold(0.0, f64::max);
                (-bound, bound)
            }
            Nonlinearity::Custom(c) => c.search,
        }
    }

    fn scan_roots(&self) -> Result<Vec<f64>, BistableError> {
        let (lo, hi) = self.search_window();
        let h = (hi - lo) / SCAN_POINTS as f64;
        let mut roots = Vec::new();
        let mut x0 = lo;
        let mut f0 = self.tilted(x0);
        for i in 1..=SCAN_POINTS {
            let x1 = lo + i as f64 * h;
            let f1 = self.tilted(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                roots.push(self.bisect_root(x0, x1, f0));
            }
            x0 = x1;
            f0 = f1;
        }
        if f0 == 0.0 {
            roots.push(x0);
        }
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if roots.len() != 3 {
            return Err(BistableError::NotBistable(format!(
                "found {} sign changes of F_gamma on [{lo}, {hi}]",
                roots.len()
            )));
        }
        Ok(roots)
    }

    fn bisect_root(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.tilted(m);
            if fm == 0.0 {
                return m;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        0.5 * (a + b)
    }

    /// `∫_{u₋}^{u₊} F_γ(u) du`; its sign is opposite to the local front speed.
    pub fn area_functional(&self) -> Result<f64, BistableError> {
        let eq = self.tilted_roots()?;
        Ok(match self.nonlinearity.poly_coeffs() {
            Some(mut c) => {
                if c.len() < 2 {
                    c.resize(2, 0.0);
                }
                c[1] += self.gamma;
                let anti = |u: f64| -> f64 {
                    c.iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, ck)| acc * u + ck / (k as f64 + 1.0))
                        * u
                };
                anti(eq.u_plus) - anti(eq.u_minus)
            }
            None => adaptive_simpson(&|u| self.tilted(u), eq.u_minus, eq.u_plus, 1e-13),
        })
    }

    /// Largest scanned tilt in `[0, max]` (step `step`) for which every tilt
    /// up to it keeps three simple zeros, reduced by one step as margin.
    pub fn gamma_star(&self, max: f64, step: f64) -> f64 {
        let mut last_ok = None;
        let mut g = 0.0;
        while g <= max + 1e-15 {
            if self.with_gamma(g).tilted_roots().is_err() {
                break;
            }
            last_ok = Some(g);
            g += step;
        }
        match last_ok {
            Some(g) => (g - step).max(0.0),
            None => 0.0,
        }
    }

    /// Max of `|F'|` sampled on `[lo, hi]`.
    pub fn lipschitz(&self, lo: f64, hi: f64) -> f64 {
        let n = 1000;
        (0..=n)
            .map(|i| self.nonlinearity.deriv(lo + (hi - lo) * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Problem mirrored by `u ↦ u₋ + u₊ − u`; its fronts travel with the
    /// negated speed.
    pub fn reflected(&self) -> Result<Self, BistableError> {
        let eq = self.tilted_roots()?;
        let s = eq.u_minus + eq.u_plus;
        let g = self.gamma;
        let nonlinearity = match self.nonlinearity.poly_coeffs() {
            Some(c) => {
                // −Σ c_k (s − u)^k − γ s
                let mut out = vec![0.0; c.len().max(1)];
                for (k, ck) in c.iter().enumerate() {
                    let mut binom = 1.0;
                    for j in 0..=k {
                        // coefficient of u^j in (s − u)^k
                        let term = binom * s.powi((k - j) as i32) * if j % 2 == 0 { 1.0 } else { -1.0 };
                        out[j] -= ck * term;
                        binom = binom * (k - j) as f64 / (j + 1) as f64;
                    }
                }
                out[0] -= g * s;
                Nonlinearity::Poly(out)
            }
            None => {
                let f = self.nonlinearity.clone();
                let df = self.nonlinearity.clone();
                let (lo, hi) = self.search_window();
                Nonlinearity::custom(
                    move |u| -f.eval(s - u) - g * s,
                    move |u| df.deriv(s - u),
                    (s - hi, s - lo),
                )
            }
        };
        Self::new(self.diffusion, nonlinearity, g)
    }

    /// Derives the bound data for the speed estimates by a grid search over
    /// chord windows, keeping the window that maximizes `α·|b − a|`, then
    /// validating every inequality on an offset grid.
    pub fn estimate_params(&self) -> Result<EstimateParams, BistableError> {
        let eq = self.tilted_roots()?;
        let lower_grid = linspace(eq.u_minus, eq.u_mid, ESTIMATE_GRID);
        let upper_grid = linspace(eq.u_mid, eq.u_plus, ESTIMATE_GRID);
        let f_lower: Vec<f64> = lower_grid.iter().map(|&u| self.tilted(u)).collect();
        let f_upper: Vec<f64> = upper_grid.iter().map(|&u| self.tilted(u)).collect();
        let phi_star = (-f_lower.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0) + PHI_PAD;
        let phi_sup = f_upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0) + PHI_PAD;

        let (a_star, b_star, alpha_star) = best_chord(&upper_grid, &f_upper, false).ok_or_else(|| {
            BistableError::NotBistable("no positive lower chord on [u_m, u_+]".into())
        })?;
        let (a_sup, b_sup, alpha_sup) = best_chord(&lower_grid, &f_lower, true).ok_or_else(|| {
            BistableError::NotBistable("no positive upper chord on [u_-, u_m]".into())
        })?;
        let alpha_star = self.shrink_slope(a_star, b_star, alpha_star, false);
        let alpha_sup = self.shrink_slope(a_sup, b_sup, alpha_sup, true);
        Ok(EstimateParams {
            phi_star,
            phi_sup,
            a_star,
            b_star,
            alpha_star,
            a_sup,
            b_sup,
            alpha_sup,
        })
    }

    /// Re-checks a chord between the search nodes and lowers the slope if
    /// the linear bound is violated anywhere.
    fn shrink_slope(&self, a: f64, b: f64, alpha: f64, upper: bool) -> f64 {
        let mut slope = alpha;
        let n = 4 * ESTIMATE_GRID;
        for i in 1..=n {
            let u = a + (b - a) * (i as f64 - 0.5) / n as f64;
            let ratio = self.tilted(u) / (u - a);
            if ratio < slope {
                slope = ratio;
            }
        }
        let _ = upper;
        slope * (1.0 - 1e-9)
    }

    /// Checks every inequality of `params` on a grid of `n` points per interval.
    pub fn check_estimate_params(&self, params: &EstimateParams, n: usize) -> Result<(), String> {
        let eq = self.tilted_roots().map_err(|e| e.to_string())?;
        let p = params;
        if !(eq.u_mid <= p.a_star && p.a_star < p.b_star && p.b_star <= eq.u_plus) {
            return Err(format!("lower chord window [{}, {}] misplaced", p.a_star, p.b_star));
        }
        if !(eq.u_minus <= p.b_sup && p.b_sup < p.a_sup && p.a_sup <= eq.u_mid) {
            return Err(format!("upper chord window [{}, {}] misplaced", p.b_sup, p.a_sup));
        }
        if !(p.alpha_star > 0.0 && p.alpha_sup > 0.0 && p.phi_star > 0.0 && p.phi_sup > 0.0) {
            return Err("nonpositive slope or bound".into());
        }
        for u in linspace(eq.u_minus, eq.u_mid, n) {
            if self.tilted(u) < -p.phi_star {
                return Err(format!("F_gamma({u}) below -phi_star"));
            }
        }
        for u in linspace(eq.u_mid, eq.u_plus, n) {
            if self.tilted(u) > p.phi_sup {
                return Err(format!("F_gamma({u}) above phi_sup"));
            }
        }
        for u in linspace(p.a_star, p.b_star, n) {
            if self.tilted(u) < p.alpha_star * (u - p.a_star) - 1e-15 {
                return Err(format!("lower chord violated at {u}"));
            }
        }
        for u in linspace(p.b_sup, p.a_sup, n) {
            if self.tilted(u) > p.alpha_sup * (u - p.a_sup) + 1e-15 {
                return Err(format!("upper chord violated at {u}"));
            }
        }
        Ok(())
    }

    /// A-priori bounds on the speed `C(γ, v)` of the auxiliary nonlocal front.
    /// At `v = 0` both one-sided families apply and their intersection is returned.
    pub fn speed_bounds(
        &self,
        params: &EstimateParams,
        kernel: &MemoryKernel,
        v: f64,
    ) -> Result<SpeedBounds, BistableError> {
        if self.gamma < 0.0 {
            return Err(BistableError::OutOfRegime(format!(
                "speed bounds need a nonnegative tilt, got gamma = {}",
                self.gamma
            )));
        }
        let eq = self.tilted_roots()?;
        let d = self.diffusion;
        let g1 = kernel.moments().g1_hat;
        let p = params;
        let drift = self.gamma * g1 * v.abs();
        let sup_width = p.a_sup - p.b_sup;
        let star_width = p.b_star - p.a_star;

        let nonneg = || {
            let lower = -f64::max(
                (p.phi_sup * d / sup_width).sqrt(),
                p.phi_sup * drift / (p.alpha_sup * sup_width),
            ) - drift;
            let upper = (p.phi_star * d / (eq.u_plus - eq.u_mid)).sqrt();
            (lower, upper)
        };
        let nonpos = || {
            let lower = -(p.phi_sup * d / (eq.u_mid - eq.u_minus)).sqrt();
            let upper = f64::max(
                (p.phi_star * d / star_width).sqrt(),
                p.phi_star * drift / (p.alpha_star * star_width),
            ) + drift;
            (lower, upper)
        };
        let (lower, upper) = if v > 0.0 {
            nonneg()
        } else if v < 0.0 {
            nonpos()
        } else {
            let (l1, u1) = nonneg();
            let (l2, u2) = nonpos();
            (l1.max(l2), u1.min(u2))
        };
        Ok(SpeedBounds { lower, upper })
    }
}

/// Grid search for the chord maximizing `α·|b − a|`. For the lower chord the
/// anchor `a` is to the left of `b`; for the upper chord (`reversed`) the
/// anchor sits at the right end and the window grows leftwards.
fn best_chord(grid: &[f64], vals: &[f64], reversed: bool) -> Option<(f64, f64, f64)> {
    let n = grid.len();
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let anchors: Vec<usize> = (0..n).step_by(ANCHOR_STRIDE).chain(std::iter::once(n - 1)).collect();
    for &ia in &anchors {
        let a = grid[ia];
        let mut alpha = f64::INFINITY;
        let idx: Box<dyn Iterator<Item = usize>> = if reversed {
            Box::new((0..ia).rev())
        } else {
            Box::new(ia + 1..n)
        };
        for j in idx {
            let ratio = vals[j] / (grid[j] - a);
            if ratio < alpha {
                alpha = ratio;
            }
            if alpha <= 0.0 {
                break;
            }
            let score = alpha * (grid[j] - a).abs();
            if best.map_or(true, |b| score > b.3) {
                best = Some((a, grid[j], alpha, score));
            }
        }
    }
    best.map(|(a, b, alpha, _)| (a, b, alpha))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Exact front speed of `u_t = u_xx − u(u−a)(u−1) − βu` (McKean):
/// `(1 + a − 3√((1−a)² − 4β)) / (2√2)`.
pub fn mckean_speed(a: f64, beta: f64) -> Result<f64, BistableError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(BistableError::OutOfRegime(format!("need 0 < a < 1, got {a}")));
    }
    let disc = (1.0 - a).powi(2) - 4.0 * beta;
    if disc <= 0.0 {
        return Err(BistableError::NotBistable(format!(
            "beta = {beta} >= (1-a)^2/4 = {}",
            0.25 * (1.0 - a).powi(2)
        )));
    }
    Ok((1.0 + a - 3.0 * disc.sqrt()) / (2.0 * std::f64::consts::SQRT_2))
}

/// Coupling at which the cubic local speed changes sign: `(2a² − 5a + 2)/9`.
pub fn beta_zero(a: f64) -> Result<f64, BistableError> {
    if !(0.5..1.0).contains(&a) {
        return Err(BistableError::OutOfRegime(format!("need 1/2 <= a < 1, got {a}")));
    }
    Ok((2.0 * a * a - 5.0 * a + 2.0) / 9.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cubic_roots() {
        let eq = BistableProblem::cubic(0.6, 0.0).unwrap().tilted_roots().unwrap();
        assert!(close(eq.u_minus, 0.0, 1e-15) && close(eq.u_mid, 0.6, 1e-15) && close(eq.u_plus, 1.0, 1e-15));
        let eq = BistableProblem::cubic(0.6, 0.03).unwrap().tilted_roots().unwrap();
        assert!(close(eq.u_minus, 0.0, 1e-15) && close(eq.u_mid, 0.7, 1e-12) && close(eq.u_plus, 0.9, 1e-12));
        let err = BistableProblem::cubic(0.6, 0.05).unwrap().tilted_roots().unwrap_err();
        assert!(matches!(err, BistableError::NotBistable(_)));
    }

    #[test]
    fn strongly_coupled_cubic_reorders_roots() {
        // for β < −a the zero state becomes the unstable middle root
        let eq = BistableProblem::cubic(0.6, -5.0).unwrap().tilted_roots().unwrap();
        assert!(eq.u_minus < 0.0 && close(eq.u_mid, 0.0, 1e-15) && eq.u_plus > 1.0);
        assert!(BistableProblem::cubic(0.6, -0.6).unwrap().tilted_roots().is_err());
    }

    #[test]
    fn poly_and_custom_match_cubic_roots() {
        let p = BistableProblem::new(1.0, Nonlinearity::Poly(vec![0.0, -0.6, 1.6, -1.0]), 0.01).unwrap();
        let c = BistableProblem::cubic(0.6, -0.01).unwrap();
        let (r1, r2) = (p.tilted_roots().unwrap(), c.tilted_roots().unwrap());
        assert!(close(r1.u_mid, r2.u_mid, 1e-13) && close(r1.u_plus, r2.u_plus, 1e-13));
        let q = BistableProblem::new(
            1.0,
            Nonlinearity::custom(|u| -u * (u - 0.6) * (u - 1.0), |u| -3.0 * u * u + 3.2 * u - 0.6, (-1.0, 2.0)),
            0.01,
        )
        .unwrap();
        let r3 = q.tilted_roots().unwrap();
        assert!(close(r3.u_mid, r2.u_mid, 1e-13) && close(r3.u_minus, 0.0, 1e-13));
    }

    #[test]
    fn monostable_poly_is_rejected() {
        let p = BistableProblem::new(1.0, Nonlinearity::Poly(vec![0.0, 1.0, -1.0]), 0.0).unwrap();
        assert!(matches!(p.tilted_roots(), Err(BistableError::NotBistable(_))));
    }

    #[test]
    fn area_functional_values() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        assert!(close(p.area_functional().unwrap(), -1.0 / 60.0, 1e-15));
        let p = BistableProblem::cubic(0.5, 0.0).unwrap();
        assert!(close(p.area_functional().unwrap(), 0.0, 1e-15));
        let b0 = beta_zero(0.6).unwrap();
        let p = BistableProblem::cubic(0.6, b0).unwrap();
        assert!(p.area_functional().unwrap().abs() < 1e-10);
    }

    #[test]
    fn area_functional_matches_quadrature_for_custom() {
        let c = BistableProblem::cubic(0.7, -0.02).unwrap();
        let q = BistableProblem::new(
            1.0,
            Nonlinearity::custom(|u| -u * (u - 0.7) * (u - 1.0), |u| -3.0 * u * u + 3.4 * u - 0.7, (-1.0, 2.0)),
            0.02,
        )
        .unwrap();
        assert!(close(c.area_functional().unwrap(), q.area_functional().unwrap(), 1e-11));
    }

    #[test]
    fn mckean_values() {
        assert!(close(mckean_speed(0.6, 0.0).unwrap(), 0.2 / 2f64.sqrt(), 1e-15));
        assert!(close(mckean_speed(0.6, -0.28 / 9.0).unwrap(), 0.0, 1e-15));
        assert!(close(mckean_speed(0.6, 0.03).unwrap(), 1.0 / (2.0 * 2f64.sqrt()), 1e-12));
        assert!(matches!(mckean_speed(0.6, 0.05), Err(BistableError::NotBistable(_))));
        assert!(matches!(mckean_speed(1.2, 0.0), Err(BistableError::OutOfRegime(_))));
    }

    #[test]
    fn beta_zero_values() {
        assert!(close(beta_zero(0.6).unwrap(), -0.28 / 9.0, 1e-16));
        assert!(close(beta_zero(0.5).unwrap(), 0.0, 1e-16));
        assert!(close(beta_zero(1.0 - 1e-9).unwrap(), -1.0 / 9.0, 1e-8));
        assert!(matches!(beta_zero(0.3), Err(BistableError::OutOfRegime(_))));
        assert!(matches!(beta_zero(1.0), Err(BistableError::OutOfRegime(_))));
    }

    #[test]
    fn estimate_params_satisfy_invariants() {
        for beta in [0.0, 0.03, -0.05] {
            let p = BistableProblem::cubic(0.6, beta).unwrap();
            let params = p.estimate_params().unwrap();
            p.check_estimate_params(&params, 10_000).unwrap();
        }
        let p = BistableProblem::cubic(0.6, 0.03).unwrap();
        let params = p.estimate_params().unwrap();
        assert!(params.a_star >= 0.7 - 1e-12 && params.a_star <= 0.9 && params.alpha_star > 0.0);
    }

    #[test]
    fn symmetric_cubic_has_equal_phi_bounds() {
        let params = BistableProblem::cubic(0.5, 0.0).unwrap().estimate_params().unwrap();
        assert!(close(params.phi_star, params.phi_sup, 1e-9));
    }

    #[test]
    fn bounds_at_zero_speed_bracket_mckean() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let params = p.estimate_params().unwrap();
        let k = MemoryKernel::exponential(1.0, 0.0).unwrap();
        let b = p.speed_bounds(&params, &k, 0.0).unwrap();
        let eq = p.tilted_roots().unwrap();
        assert!(close(b.lower, -(params.phi_sup / (eq.u_mid - eq.u_minus)).sqrt(), 1e-14));
        assert!(close(b.upper, (params.phi_star / (eq.u_plus - eq.u_mid)).sqrt(), 1e-14));
        assert!(b.contains(0.2 / 2f64.sqrt(), 0.0));
    }

    #[test]
    fn bounds_without_tilt_ignore_auxiliary_speed() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let params = p.estimate_params().unwrap();
        let k = MemoryKernel::exponential(1.0, 0.0).unwrap();
        let b1 = p.speed_bounds(&params, &k, 0.7).unwrap();
        let b2 = p.speed_bounds(&params, &k, 3.0).unwrap();
        assert_eq!(b1, b2);
        let b3 = p.speed_bounds(&params, &k, -0.7).unwrap();
        let b4 = p.speed_bounds(&params, &k, -3.0).unwrap();
        assert_eq!(b3, b4);
    }

    #[test]
    fn upper_bound_grows_with_negative_auxiliary_speed() {
        let p = BistableProblem::cubic(0.6, -0.05).unwrap();
        let params = p.estimate_params().unwrap();
        let k = MemoryKernel::exponential(1.0, 0.05).unwrap();
        let b1 = p.speed_bounds(&params, &k, -1.0).unwrap();
        let b2 = p.speed_bounds(&params, &k, -2.0).unwrap();
        assert!(b2.upper >= b1.upper);
        assert!(b1.lower <= b1.upper);
    }

    #[test]
    fn reflected_cubic_swaps_threshold() {
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let r = p.reflected().unwrap();
        let eq = r.tilted_roots().unwrap();
        assert!(close(eq.u_mid, 0.4, 1e-12));
        assert!(close(r.area_functional().unwrap(), 1.0 / 60.0, 1e-14));
    }

    #[test]
    fn gamma_star_for_cubic_stops_at_double_root() {
        // β = −γ; the zero state collides with the middle root at γ = a
        let p = BistableProblem::cubic(0.6, 0.0).unwrap();
        let g = p.gamma_star(2.0, 0.01);
        assert!(g > 0.55 && g < 0.6, "{g}");
    }

    proptest! {
        #[test]
        fn roots_are_zeros_with_bistable_signs(a in 0.05f64..0.95, frac in 0.0f64..0.98) {
            let beta_max = 0.25 * (1.0 - a) * (1.0 - a);
            let beta = -a * 0.9 + frac * (beta_max + a * 0.9);
            let p = BistableProblem::cubic(a, beta).unwrap();
            let eq = p.tilted_roots().unwrap();
            for u in [eq.u_minus, eq.u_mid, eq.u_plus] {
                prop_assert!(p.tilted(u).abs() < 1e-10);
            }
        }

        #[test]
        fn mckean_without_coupling(a in 0.01f64..0.99) {
            prop_assert!((mckean_speed(a, 0.0).unwrap() - (2.0 * a - 1.0) / 2f64.sqrt()).abs() < 1e-14);
        }

        #[test]
        fn speed_sign_opposes_area(a in 0.05f64..0.95, frac in 0.0f64..0.98) {
            let beta_max = 0.25 * (1.0 - a) * (1.0 - a);
            let beta = -a * 0.9 + frac * (beta_max + a * 0.9);
            let c = mckean_speed(a, beta).unwrap();
            let area = BistableProblem::cubic(a, beta).unwrap().area_functional().unwrap();
            prop_assume!(c.abs() > 1e-9 && area.abs() > 1e-12);
            prop_assert_eq!(c.signum(), -area.signum());
        }

        #[test]
        fn area_matches_exact_antiderivative(a in 0.05f64..0.95, frac in 0.0f64..0.98) {
            let beta_max = 0.25 * (1.0 - a) * (1.0 - a);
            let beta = -a * 0.9 + frac * (beta_max + a * 0.9);
            let p = BistableProblem::cubic(a, beta).unwrap();
            let eq = p.tilted_roots().unwrap();
            // G(u) = −u⁴/4 + (1+a)u³/3 − (a+β)u²/2
            let g = |u: f64| -u.powi(4) / 4.0 + (1.0 + a) * u.powi(3) / 3.0 - (a + beta) * u * u / 2.0;
            let exact = g(eq.u_plus) - g(eq.u_minus);
            prop_assert!((p.area_functional().unwrap() - exact).abs() < 1e-12);
        }

        #[test]
        fn bounds_at_zero_contain_mckean(a in 0.52f64..0.9, frac in 0.0f64..1.0) {
            // tilts with the zero state as lower root: −a < β ≤ 0
            let beta = -0.9 * a * frac;
            let p = BistableProblem::cubic(a, beta).unwrap();
            let params = p.estimate_params().unwrap();
            let k = MemoryKernel::exponential(1.0, -beta).unwrap();
            let b = p.speed_bounds(&params, &k, 0.0).unwrap();
            prop_assert!(b.contains(mckean_speed(a, beta).unwrap(), 0.0));
        }
    }
}
