//! Memory kernels: nonnegative, normalized weights Γ over past times,
//! multiplied by a total weight γ in the memory term `γ ∫ Γ(τ) u(t−τ) dτ`.
//!
//! Three forms are supported:
//!
//! * exponential sums `Γ(τ) = Σ cᵢ e^{−λᵢ τ}`, which arise when linear ODE
//!   channels `ẇᵢ = −λᵢ wᵢ + bᵢ u` feeding back through `Σ aᵢ wᵢ` are
//!   eliminated;
//! * a comb of discrete delays `Σ γⱼ δ(τ − τⱼ)`;
//! * tabulated samples on a nonuniform grid, interpolated piecewise linearly,
//!   with an exponential tail past the last sample.
//!
//! Every constructor normalizes the shape so that `∫ Γ = 1` and validates
//! nonnegativity; the total weight is carried separately in [`MemoryKernel::gamma`].

use crate::quad::adaptive_simpson;

/// Default truncation: the discarded tail mass `∫_{τ_max}^∞ Γ` stays below this.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

const NORMALIZATION_TOL: f64 = 1e-10;
const VALIDATION_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("total kernel weight is zero; the normalized kernel is undefined")]
    ZeroWeight,
    #[error("kernel takes the negative value {value:e} at tau = {tau}")]
    NegativeKernel { tau: f64, value: f64 },
    #[error("kernel has no finite first moment (tail rate {rate} <= 0)")]
    DivergentMoment { rate: f64 },
    #[error("history covers {available} time units but {required} are needed")]
    InsufficientHistory { available: f64, required: f64 },
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel is not normalized: integral = {0}")]
    NotNormalized(f64),
}

/// One exponential channel `coeff · e^{−rate τ}` of a normalized sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coeff: f64,
    pub rate: f64,
}

/// One Dirac tap of a delay comb; weights of a normalized comb sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayTap {
    pub weight: f64,
    pub delay: f64,
}

/// Piecewise-linear samples plus `Γ(τ) = Γ_N e^{−rate (τ − τ_N)}` past the
/// last node.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_rate: f64,
}

impl Tabulated {
    fn eval(&self, t: f64) -> f64 {
        let n = self.tau.len();
        if t <= self.tau[0] {
            return self.values[0];
        }
        if t >= self.tau[n - 1] {
            return self.values[n - 1] * (-self.tail_rate * (t - self.tau[n - 1])).exp();
        }
        let k = self.tau.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.tau[k], self.tau[k + 1]);
        let s = (t - t0) / (t1 - t0);
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }

    fn tail_mass(&self, t: f64) -> f64 {
        let n = self.tau.len();
        let last = self.tau[n - 1];
        if t >= last {
            return self.values[n - 1] / self.tail_rate * (-self.tail_rate * (t - last)).exp();
        }
        let tail = self.values[n - 1] / self.tail_rate;
        let k = self.tau.partition_point(|&x| x <= t).max(1) - 1;
        let mut body = 0.5 * (self.eval(t) + self.values[k + 1]) * (self.tau[k + 1] - t);
        for j in k + 1..n - 1 {
            body += 0.5 * (self.values[j] + self.values[j + 1]) * (self.tau[j + 1] - self.tau[j]);
        }
        body + tail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm {
    ExpSum(Vec<ExpTerm>),
    DelayComb(Vec<DelayTap>),
    Tabulated(Tabulated),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub total: f64,
    pub g1_hat: f64,
}

/// A validated memory kernel `γ · Γ` with `Γ ≥ 0` and `∫ Γ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel {
    form: KernelForm,
    gamma: f64,
    tau_max: f64,
}

impl MemoryKernel {
    /// Kernel produced by eliminating linear ODE channels
    /// `ẇᵢ = −λᵢ wᵢ + bᵢ u` coupled back through `Σ aᵢ wᵢ`.
    pub fn from_pde_ode(couplings: &[(f64, f64, f64)]) -> Result<Self, KernelError> {
        if couplings.is_empty() {
            return Err(KernelError::ZeroWeight);
        }
        for &(_, _, rate) in couplings {
            check_rate(rate)?;
        }
        let gamma: f64 = couplings.iter().map(|&(a, b, l)| a * b / l).sum();
        let scale: f64 = couplings.iter().map(|&(a, b, l)| (a * b / l).abs()).sum();
        if scale == 0.0 || gamma.abs() <= 1e-14 * scale {
            return Err(KernelError::ZeroWeight);
        }
        let terms: Vec<ExpTerm> = couplings
            .iter()
            .map(|&(a, b, rate)| ExpTerm {
                coeff: a * b / gamma,
                rate,
            })
            .collect();
        Self::build(KernelForm::ExpSum(terms), gamma)
    }

    /// Exponential sum with the given (unnormalized) shape `Σ cᵢ e^{−λᵢτ}` and
    /// total weight `gamma`.
    pub fn exp_sum(terms: &[(f64, f64)], gamma: f64) -> Result<Self, KernelError> {
        if terms.is_empty() {
            return Err(KernelError::ZeroWeight);
        }
        for &(_, rate) in terms {
            check_rate(rate)?;
        }
        let mass: f64 = terms.iter().map(|&(c, l)| c / l).sum();
        let scale: f64 = terms.iter().map(|&(c, l)| (c / l).abs()).sum();
        if scale == 0.0 || mass.abs() <= 1e-14 * scale {
            return Err(KernelError::ZeroWeight);
        }
        let terms = terms
            .iter()
            .map(|&(c, rate)| ExpTerm {
                coeff: c / mass,
                rate,
            })
            .collect();
        Self::build(KernelForm::ExpSum(terms), gamma)
    }

    /// `Γ(τ) = rate · e^{−rate τ}`.
    pub fn exponential(rate: f64, gamma: f64) -> Result<Self, KernelError> {
        Self::exp_sum(&[(1.0, rate)], gamma)
    }

    /// Discrete delays `Σ γⱼ u(t − τⱼ)`; the total weight is `Σ γⱼ`.
    pub fn delay_comb(taps: &[(f64, f64)]) -> Result<Self, KernelError> {
        if taps.is_empty() {
            return Err(KernelError::ZeroWeight);
        }
        for &(w, d) in taps {
            if !(w > 0.0 && w.is_finite()) {
                return Err(KernelError::InvalidParameter(format!(
                    "delay weight must be positive, got {w}"
                )));
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(KernelError::InvalidParameter(format!(
                    "delay must be positive, got {d}"
                )));
            }
        }
        let gamma: f64 = taps.iter().map(|t| t.0).sum();
        let taps = taps
            .iter()
            .map(|&(w, d)| DelayTap {
                weight: w / gamma,
                delay: d,
            })
            .collect();
        Self::build(KernelForm::DelayComb(taps), gamma)
    }

    /// Tabulated shape, rescaled to unit mass.
    pub fn tabulated(
        tau: Vec<f64>,
        values: Vec<f64>,
        tail_rate: f64,
        gamma: f64,
    ) -> Result<Self, KernelError> {
        if tau.len() < 2 || tau.len() != values.len() {
            return Err(KernelError::InvalidParameter(
                "tabulated kernel needs matching tau/value arrays of length >= 2".into(),
            ));
        }
        if tau[0] != 0.0 || tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KernelError::InvalidParameter(
                "tabulated tau grid must start at 0 and increase strictly".into(),
            ));
        }
        if !(tail_rate > 0.0) {
            return Err(KernelError::DivergentMoment { rate: tail_rate });
        }
        if let Some((k, &v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(KernelError::NegativeKernel { tau: tau[k], value: v });
        }
        let mut tab = Tabulated {
            tau,
            values,
            tail_rate,
        };
        let mass = tab.tail_mass(0.0);
        if mass <= 0.0 {
            return Err(KernelError::ZeroWeight);
        }
        tab.values.iter_mut().for_each(|v| *v /= mass);
        Self::build(KernelForm::Tabulated(tab), gamma)
    }

    fn build(form: KernelForm, gamma: f64) -> Result<Self, KernelError> {
        if !gamma.is_finite() {
            return Err(KernelError::InvalidParameter(format!("gamma = {gamma}")));
        }
        let mut k = Self {
            form,
            gamma,
            tau_max: 0.0,
        };
        k.validate_nonnegative()?;
        let m = k.moments();
        if (m.total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(KernelError::NotNormalized(m.total));
        }
        if !m.g1_hat.is_finite() {
            return Err(KernelError::DivergentMoment { rate: 0.0 });
        }
        k.tau_max = k.truncation_time(DEFAULT_TAIL_TOL);
        Ok(k)
    }

    /// Same shape with a different total weight.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    /// Same kernel truncated at a different tail tolerance.
    pub fn with_tail_tol(&self, tail_tol: f64) -> Self {
        Self {
            tau_max: self.truncation_time(tail_tol),
            ..self.clone()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    /// Truncation depth: the tail mass beyond it is below the tail tolerance.
    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// Normalized kernel density at `tau`. Delay combs have no density and
    /// evaluate to zero away from their atoms.
    pub fn eval(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match &self.form {
            KernelForm::ExpSum(terms) => terms.iter().map(|t| t.coeff * (-t.rate * tau).exp()).sum(),
            KernelForm::DelayComb(_) => 0.0,
            KernelForm::Tabulated(tab) => tab.eval(tau),
        }
    }

    /// `∫_t^∞ Γ(τ) dτ`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        match &self.form {
            KernelForm::ExpSum(terms) => terms
                .iter()
                .map(|e| e.coeff / e.rate * (-e.rate * t).exp())
                .sum(),
            KernelForm::DelayComb(taps) => taps.iter().filter(|d| d.delay > t).map(|d| d.weight).sum(),
            KernelForm::Tabulated(tab) => tab.tail_mass(t.max(0.0)),
        }
    }

    /// Smallest (up to bisection accuracy) depth with tail mass below `tail_tol`.
    /// For exponential sums the bound `Σ |cᵢ|/λᵢ e^{−λᵢ T}` is used so that
    /// mixed-sign sums are truncated conservatively.
    pub fn truncation_time(&self, tail_tol: f64) -> f64 {
        match &self.form {
            KernelForm::DelayComb(taps) => taps.iter().map(|t| t.delay).fold(0.0, f64::max),
            KernelForm::ExpSum(terms) => {
                let bound = |t: f64| -> f64 {
                    terms
                        .iter()
                        .map(|e| e.coeff.abs() / e.rate * (-e.rate * t).exp())
                        .sum()
                };
                let mut hi = 1.0;
                while bound(hi) > tail_tol {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if bound(mid) > tail_tol {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
            KernelForm::Tabulated(tab) => {
                let last = *tab.tau.last().unwrap();
                let vn = *tab.values.last().unwrap();
                let tail_at_last = vn / tab.tail_rate;
                if tail_at_last <= tail_tol {
                    last
                } else {
                    last + (tail_at_last / tail_tol).ln() / tab.tail_rate
                }
            }
        }
    }

    /// Total mass and first moment `ĝ₁ = ∫ τ Γ(τ) dτ`.
    pub fn moments(&self) -> Moments {
        match &self.form {
            KernelForm::ExpSum(terms) => Moments {
                total: terms.iter().map(|e| e.coeff / e.rate).sum(),
                g1_hat: terms.iter().map(|e| e.coeff / (e.rate * e.rate)).sum(),
            },
            KernelForm::DelayComb(taps) => Moments {
                total: taps.iter().map(|d| d.weight).sum(),
                g1_hat: taps.iter().map(|d| d.weight * d.delay).sum(),
            },
            KernelForm::Tabulated(tab) => {
                let mut total = 0.0;
                let mut first = 0.0;
                for w in tab.tau.windows(2) {
                    let f = |t: f64| tab.eval(t);
                    total += adaptive_simpson(&f, w[0], w[1], 1e-14);
                    first += adaptive_simpson(&|t: f64| t * tab.eval(t), w[0], w[1], 1e-14);
                }
                let last = *tab.tau.last().unwrap();
                let vn = *tab.values.last().unwrap();
                let r = tab.tail_rate;
                total += vn / r;
                first += vn * (last / r + 1.0 / (r * r));
                Moments {
                    total,
                    g1_hat: first,
                }
            }
        }
    }

    fn validate_nonnegative(&self) -> Result<(), KernelError> {
        match &self.form {
            KernelForm::ExpSum(terms) => {
                let min_rate = terms.iter().map(|t| t.rate).fold(f64::INFINITY, f64::min);
                let scale: f64 = terms.iter().map(|t| t.coeff.abs()).sum();
                let horizon = 50.0 / min_rate;
                // geometric grid resolves the behaviour near τ = 0 as well as the tail
                let first = horizon * 1e-8;
                let ratio = (horizon / first).powf(1.0 / (VALIDATION_POINTS - 2) as f64);
                let mut tau = 0.0;
                for k in 0..VALIDATION_POINTS {
                    if k > 0 {
                        tau = first * ratio.powi(k as i32 - 1);
                    }
                    let v = self.eval(tau);
                    let local: f64 = terms
                        .iter()
                        .map(|t| (t.coeff * (-t.rate * tau).exp()).abs())
                        .sum();
                    if v < -1e-12 * local.max(1e-300) && v < -1e-300 {
                        return Err(KernelError::NegativeKernel { tau, value: v });
                    }
                }
                // sign of the slowest-decaying group decides the far tail
                let mut rates: Vec<f64> = terms.iter().map(|t| t.rate).collect();
                rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
                rates.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
                for r in rates {
                    let c: f64 = terms
                        .iter()
                        .filter(|t| (t.rate - r).abs() <= 1e-12 * r)
                        .map(|t| t.coeff)
                        .sum();
                    if c.abs() > 1e-12 * scale {
                        if c < 0.0 {
                            return Err(KernelError::NegativeKernel {
                                tau: f64::INFINITY,
                                value: c,
                            });
                        }
                        break;
                    }
                }
                Ok(())
            }
            KernelForm::DelayComb(_) | KernelForm::Tabulated(_) => Ok(()),
        }
    }

    /// Quadrature weights `wₖ` on the nodes `τₖ = k·step`, `k = 0..=n`, such
    /// that `Σ wₖ f(τₖ)` integrates `∫ Γ(τ) f(τ) dτ` for the piecewise-linear
    /// interpolant of `f`. The mass beyond `n·step` is lumped on the last node,
    /// so the weights always sum to one.
    pub fn grid_weights(&self, step: f64, n: usize) -> Vec<f64> {
        assert!(step > 0.0);
        let mut w = vec![0.0; n + 1];
        match &self.form {
            KernelForm::ExpSum(terms) => {
                for e in terms {
                    let (left, right) = hat_integrals(e.rate, step);
                    let decay = (-e.rate * step).exp();
                    let mut scale = e.coeff;
                    for k in 0..n {
                        w[k] += scale * left;
                        w[k + 1] += scale * right;
                        scale *= decay;
                    }
                }
            }
            KernelForm::DelayComb(taps) => {
                for tap in taps {
                    let pos = tap.delay / step;
                    let k = pos.floor() as usize;
                    if k >= n {
                        w[n] += tap.weight;
                    } else {
                        let th = pos - k as f64;
                        w[k] += tap.weight * (1.0 - th);
                        w[k + 1] += tap.weight * th;
                    }
                }
            }
            KernelForm::Tabulated(tab) => {
                // refine each step so that kinks of the table are resolved
                let sub = 16;
                let h = step / sub as f64;
                for k in 0..n {
                    let t0 = k as f64 * step;
                    for s in 0..sub {
                        let a = t0 + s as f64 * h;
                        let b = a + h;
                        let (ga, gb) = (tab.eval(a), tab.eval(b));
                        let (xa, xb) = (s as f64 / sub as f64, (s + 1) as f64 / sub as f64);
                        // ∫ Γ·hat with Γ and the hats both linear on [a, b]
                        let seg = |p0: f64, p1: f64| h * (ga * (2.0 * p0 + p1) + gb * (p0 + 2.0 * p1)) / 6.0;
                        w[k] += seg(1.0 - xa, 1.0 - xb);
                        w[k + 1] += seg(xa, xb);
                    }
                }
            }
        }
        if !matches!(self.form, KernelForm::DelayComb(_)) {
            w[n] += self.tail_mass(n as f64 * step);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    /// Discrete measure `(τ, weight)` approximating `Γ(τ) dτ` down to the
    /// truncation depth: the atoms themselves for a delay comb, otherwise the
    /// grid weights with spacing at most `max_step`.
    pub fn discrete_measure(&self, max_step: f64) -> Vec<(f64, f64)> {
        match &self.form {
            KernelForm::DelayComb(taps) => taps.iter().map(|t| (t.delay, t.weight)).collect(),
            _ => {
                let n = (self.tau_max / max_step).ceil().max(1.0) as usize;
                let step = self.tau_max / n as f64;
                self.grid_weights(step, n)
                    .into_iter()
                    .enumerate()
                    .map(|(k, w)| (k as f64 * step, w))
                    .collect()
            }
        }
    }

    /// Approximates `∫₀^{depth} Γ(τ) u(t−τ) dτ` from `history[k] = u(t − k·dt)`
    /// with product-trapezoid weights; the tail beyond `depth` is charged to
    /// the oldest sample used. The result is the normalized memory integral
    /// (without the factor `gamma`).
    pub fn convolve_history(&self, history: &[f64], dt: f64, depth: f64) -> Result<f64, KernelError> {
        if !(dt > 0.0) || !(depth >= 0.0) {
            return Err(KernelError::InvalidParameter(format!("dt = {dt}, depth = {depth}")));
        }
        let n = (depth / dt - 1e-9).ceil().max(0.0) as usize;
        let available = history.len().saturating_sub(1) as f64 * dt;
        if history.len() < n + 1 {
            return Err(KernelError::InsufficientHistory {
                available,
                required: depth,
            });
        }
        if n == 0 {
            return Ok(history[0]);
        }
        let w = self.grid_weights(dt, n);
        Ok(w.iter().zip(history).map(|(w, u)| w * u).sum())
    }
}

fn check_rate(rate: f64) -> Result<(), KernelError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "decay rate must be positive, got {rate}"
        )))
    }
}

/// `(∫₀^Δ e^{−λs}(1−s/Δ) ds, ∫₀^Δ e^{−λs} s/Δ ds)`.
pub(crate) fn hat_integrals(rate: f64, step: f64) -> (f64, f64) {
    let x = rate * step;
    if x < 1e-2 {
        let left = step * (0.5 - x / 6.0 + x * x / 24.0 - x.powi(3) / 120.0 + x.powi(4) / 720.0);
        let right = step * (0.5 - x / 3.0 + x * x / 8.0 - x.powi(3) / 30.0 + x.powi(4) / 144.0);
        (left, right)
    } else {
        let e = (-x).exp();
        let a = (1.0 - e) / (rate * x);
        (1.0 / rate - a, a - e / rate)
    }
}
