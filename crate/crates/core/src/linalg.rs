//! Small direct solvers used by the front and time-stepping code: a banded LU
//! with partial pivoting, and tridiagonal (plain and periodic) factorizations.

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage reserves `kl` extra super-diagonals per row for pivoting fill-in,
/// in the same spirit as LAPACK's `gbtrf` layout but row-major.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn clear_row(&mut self, i: usize) {
        let w = self.width;
        self.data[i * w..(i + 1) * w].fill(0.0);
    }

    /// y = A x using the original (unfactored) band.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum();
        }
        y
    }

    /// In-place LU factorization with row partial pivoting.
    pub fn factor(mut self) -> Result<BandLu, SingularMatrix> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SingularMatrix { column: k });
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in k + 1..=last_row {
                let srk = self.slot(r, k);
                let l = self.data[srk] / pivot;
                self.data[srk] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = self.data[self.slot(k, j)];
                        let s = self.slot(r, j);
                        self.data[s] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular at column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.a;
        let n = a.n;
        let kl = a.kl;
        let reach = kl + a.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= a.data[a.slot(r, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= a.data[a.slot(k, j)] * b[j];
            }
            b[k] = s / a.data[a.slot(k, k)];
        }
    }
}

/// Factored tridiagonal system `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1]`.
/// No pivoting: intended for diagonally dominant implicit-diffusion matrices.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    inv_diag: Vec<f64>,
    sup_mod: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n && n > 0);
        let mut sup_mod = vec![0.0; n];
        let mut inv_diag = vec![0.0; n];
        let mut d = diag[0];
        inv_diag[0] = 1.0 / d;
        sup_mod[0] = sup[0] / d;
        for i in 1..n {
            d = diag[i] - sub[i] * sup_mod[i - 1];
            inv_diag[i] = 1.0 / d;
            sup_mod[i] = sup[i] / d;
        }
        Self {
            sub: sub.to_vec(),
            inv_diag,
            sup_mod,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_diag.is_empty()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        x[0] *= self.inv_diag[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i] * x[i - 1]) * self.inv_diag[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.sup_mod[i] * x[i + 1];
        }
    }
}

/// Periodic tridiagonal system (corner entries couple the first and last
/// unknowns), solved by a Sherman–Morrison correction of a plain tridiagonal.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    inner: Tridiagonal,
    z: Vec<f64>,
    corner_top: f64,
    gamma: f64,
    factor: f64,
}

impl CyclicTridiagonal {
    /// `sub[0]` couples row 0 to the last unknown; `sup[n-1]` couples the last
    /// row to unknown 0.
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 3);
        let alpha = sup[n - 1];
        let beta = sub[0];
        let gamma = -diag[0];
        let mut d = diag.to_vec();
        d[0] -= gamma;
        d[n - 1] -= alpha * beta / gamma;
        let mut s = sub.to_vec();
        s[0] = 0.0;
        let mut p = sup.to_vec();
        p[n - 1] = 0.0;
        let inner = Tridiagonal::new(&s, &d, &p);
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        inner.solve_in_place(&mut u);
        let z = u;
        let factor = 1.0 + z[0] + beta * z[n - 1] / gamma;
        Self {
            inner,
            z,
            corner_top: beta,
            gamma,
            factor,
        }
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        self.inner.solve_in_place(x);
        let f = (x[0] + self.corner_top * x[n - 1] / self.gamma) / self.factor;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= f * zi;
        }
    }
}
