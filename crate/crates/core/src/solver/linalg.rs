//! Small dense linear algebra for the Newton systems (at most a few dozen unknowns).

use crate::num::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SquareMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.add(i, i, v);
        }
    }

    /// Solves `self · x = rhs` for symmetric positive definite `self`.
    /// Returns `None` if a pivot is not strictly positive.
    pub fn cholesky_solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = self.at(j, j);
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.at(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        Some(y)
    }

    /// Cholesky solve with increasing diagonal regularization until it succeeds.
    pub fn regularized_solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        if let Some(x) = self.cholesky_solve(rhs) {
            return Some(x);
        }
        let scale = (0..self.n)
            .map(|i| self.at(i, i).abs())
            .fold(T::zero(), T::max)
            .max(T::one());
        let mut shift = scale * T::lit(1e-12);
        for _ in 0..30 {
            let mut m = self.clone();
            m.add_diagonal(shift);
            if let Some(x) = m.cholesky_solve(rhs) {
                return Some(x);
            }
            shift = shift * T::lit(10.0);
        }
        None
    }
}

/// Levenberg–Marquardt on a square or rectangular system `F(u) = 0` with a
/// forward-difference Jacobian. Returns the final point and `max|F|`.
pub(crate) fn levenberg_marquardt<T: Real>(
    mut u: Vec<T>,
    max_iters: usize,
    target: T,
    mut residual: impl FnMut(&[T]) -> Vec<T>,
) -> (Vec<T>, T) {
    let norm2 = |r: &[T]| r.iter().map(|&x| x * x).sum::<T>();
    let max_abs = |r: &[T]| r.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let mut r = residual(&u);
    let mut cost = norm2(&r);
    let mut damping = T::lit(1e-6);
    let n = u.len();
    for _ in 0..max_iters {
        if max_abs(&r) <= target || !cost.is_finite() {
            break;
        }
        let m = r.len();
        // Jacobian, column by column.
        let mut jac = vec![T::zero(); m * n];
        for j in 0..n {
            let h = T::lit(1e-7) * u[j].abs().max(T::lit(1e-4));
            let mut probe = u.clone();
            probe[j] = probe[j] + h;
            let rp = residual(&probe);
            for i in 0..m {
                jac[i * n + j] = (rp[i] - r[i]) / h;
            }
        }
        let mut jtj = SquareMatrix::zeros(n);
        let mut jtr = vec![T::zero(); n];
        for i in 0..m {
            for a in 0..n {
                let ja = jac[i * n + a];
                if ja == T::zero() {
                    continue;
                }
                jtr[a] = jtr[a] + ja * r[i];
                for b in 0..n {
                    jtj.add(a, b, ja * jac[i * n + b]);
                }
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut sys = jtj.clone();
            for a in 0..n {
                let d = jtj.at(a, a);
                sys.add(
                    a,
                    a,
                    damping * d.max(T::lit(1e-12)) + damping * T::lit(1e-12),
                );
            }
            let neg: Vec<T> = jtr.iter().map(|&x| -x).collect();
            let Some(step) = sys.regularized_solve(&neg) else {
                damping = damping * T::lit(10.0);
                continue;
            };
            let trial: Vec<T> = u.iter().zip(&step).map(|(&a, &b)| a + b).collect();
            let rt = residual(&trial);
            let ct = norm2(&rt);
            if ct.is_finite() && ct < cost {
                u = trial;
                r = rt;
                cost = ct;
                damping = (damping * T::lit(0.1)).max(T::lit(1e-15));
                improved = true;
                break;
            }
            damping = damping * T::lit(10.0);
        }
        if !improved {
            break;
        }
    }
    let err = max_abs(&r);
    (u, err)
}
