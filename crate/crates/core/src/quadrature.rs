//! Fixed quadrature rules on the reference interval `[0, 1]`.

use std::f64::consts::PI;

/// Gauss–Legendre rule with `n` points on `[0, 1]`; exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Chebyshev extrema `c_j = (1 + sin(π(2j - n)/(2n)))/2`, `j = 0..=n`, on `[0, 1]`.
///
/// The sine form keeps the set symmetric about 1/2 and puts the midpoint
/// exactly at 0.5 for even `n`.
pub fn chebyshev_extrema(n: usize) -> Vec<f64> {
    assert!(n >= 1);
    (0..=n)
        .map(|j| {
            if j == 0 {
                0.0
            } else if j == n {
                1.0
            } else {
                let x = (PI * (2.0 * j as f64 - n as f64) / (2.0 * n as f64)).sin();
                0.5 + 0.5 * x
            }
        })
        .collect()
}

/// Clenshaw–Curtis rule on the `n + 1` Chebyshev extrema of `[0, 1]`.
pub fn clenshaw_curtis(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let nodes = chebyshev_extrema(n);
    let nf = n as f64;
    // Weights on [-1, 1] are symmetric, so indexing by j or n - j is equivalent.
    let weights = (0..=n)
        .map(|k| {
            let c = if k == 0 || k == n { 1.0 } else { 2.0 };
            let mut s = 0.0;
            for j in 1..=n / 2 {
                let b = if 2 * j == n { 1.0 } else { 2.0 };
                let jf = j as f64;
                s += b / (4.0 * jf * jf - 1.0) * (2.0 * jf * k as f64 * PI / nf).cos();
            }
            0.5 * c / nf * (1.0 - s)
        })
        .collect();
    (nodes, weights)
}
