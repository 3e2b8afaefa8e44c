//! Independent oracles shared by the integration tests. Nothing here uses
//! the crate's interpolation or assembly code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Chebyshev polynomial `T_k(x)` by the three-term recurrence.
fn cheb_t(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return a;
    }
    for _ in 1..k {
        let c = 2.0 * x * b - a;
        a = b;
        b = c;
    }
    b
}

/// Antiderivative of `T_k` vanishing at `-1`.
fn cheb_int(k: usize, x: f64) -> f64 {
    let prim = |y: f64| match k {
        0 => y,
        1 => 0.5 * y * y,
        _ => cheb_t(k + 1, y) / (2.0 * (k + 1) as f64) - cheb_t(k - 1, y) / (2.0 * (k - 1) as f64),
    };
    prim(x) - prim(-1.0)
}

/// Spectral integration matrix on `n + 1` Chebyshev points of `[0, 1]`:
/// `(J y)_j = ∫_0^{u_j} p(s) ds` for the interpolant `p` of `y`.
pub fn integration_matrix(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n).map(|j| -(std::f64::consts::PI * j as f64 / n as f64).cos()).collect();
    let v = DMatrix::from_fn(n + 1, n + 1, |j, k| cheb_t(k, x[j]));
    let w = DMatrix::from_fn(n + 1, n + 1, |j, k| 0.5 * cheb_int(k, x[j]));
    let j = w * v.try_inverse().expect("Chebyshev Vandermonde is invertible");
    (x.iter().map(|x| 0.5 * (x + 1.0)).collect(), j)
}

/// Monodromy matrix of `x'(t) = c(t) x(t - 1)` with period `2`, by the
/// method of steps with one global Chebyshev polynomial per unit interval.
pub fn unit_delay_monodromy(c: impl Fn(f64) -> f64, n: usize) -> DMatrix<f64> {
    let (u, j) = integration_matrix(n);
    let step = |k: f64| {
        let diag = DMatrix::from_fn(n + 1, n + 1, |a, b| if a == b { c(k + u[a]) } else { 0.0 });
        let mut s = &j * diag;
        for r in 0..=n {
            s[(r, n)] += 1.0;
        }
        s
    };
    step(1.0) * step(0.0)
}

/// Eigenvalues sorted by decreasing modulus.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    ev
}

/// Dominant multiplier of the tent equation.
pub fn tent_dominant(n: usize) -> f64 {
    sorted_eigenvalues(&unit_delay_monodromy(|t| 1.0 - ((t % 2.0) - 1.0).abs(), n))[0].re
}

/// Fixed-step RK4 method of steps for `x'(t) = a(t) x(t) + b(t) x(t - τ)`
/// from the history `phi` on `[-τ, 0]`; returns samples on `[-τ, t_end]`
/// with step `h` (`τ / h` must be an integer). Delayed values at half steps
/// are averaged from the neighbouring samples.
pub struct Rk4Trajectory {
    pub h: f64,
    pub tau: f64,
    pub values: Vec<f64>,
}

impl Rk4Trajectory {
    pub fn run(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64, tau: f64, phi: impl Fn(f64) -> f64, t_end: f64, h: f64) -> Self {
        let lag = (tau / h).round() as usize;
        assert!((lag as f64 * h - tau).abs() < 1e-12 * tau.max(1.0), "tau / h must be an integer");
        let mut values: Vec<f64> = (0..=lag).map(|i| phi(-tau + i as f64 * h)).collect();
        let steps = (t_end / h).round() as usize;
        for s in 0..steps {
            let t = s as f64 * h;
            let n = values.len() - 1;
            let x = values[n];
            let (d0, d1) = (values[n - lag], values[n + 1 - lag]);
            let dm = 0.5 * (d0 + d1);
            let f = |t: f64, x: f64, d: f64| a(t) * x + b(t) * d;
            let k1 = f(t, x, d0);
            let k2 = f(t + 0.5 * h, x + 0.5 * h * k1, dm);
            let k3 = f(t + 0.5 * h, x + 0.5 * h * k2, dm);
            let k4 = f(t + h, x + h * k3, d1);
            values.push(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        Self { h, tau, values }
    }

    /// Linear interpolation at time `t`.
    pub fn at(&self, t: f64) -> f64 {
        let s = (t + self.tau) / self.h;
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let f = s - i as f64;
        (1.0 - f) * self.values[i] + f * self.values[i + 1]
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Least-squares slope of `-ln e` against `ln x`.
pub fn fitted_order(xs: &[f64], es: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(es).map(|(x, e)| (x.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}
