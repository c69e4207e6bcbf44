//! Real polynomials in ascending coefficient order.

use nalgebra::{DMatrix, DVector};

/// Horner evaluation.
pub fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `(x - r)^k`.
pub fn binomial_power(r: f64, k: usize) -> Vec<f64> {
    (0..k).fold(vec![1.0], |acc, _| mul(&acc, &[-r, 1.0]))
}

/// Re-expands `sum c_k (x - x0)^k` in powers of `x`.
pub fn unshift(c: &[f64], x0: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    for (k, &ck) in c.iter().enumerate() {
        for (m, &b) in binomial_power(x0, k).iter().enumerate() {
            out[m] += ck * b;
        }
    }
    out
}

/// Chebyshev points of the first kind on `[lo, hi]`.
pub fn chebyshev_nodes(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let t = (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * count) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect()
}

/// Monomial coefficients of the interpolant through `(xs[k], ys[k])`.
pub fn interpolate(xs: &[f64], ys: &[f64]) -> Option<Vec<f64>> {
    let n = xs.len();
    let v = DMatrix::from_fn(n, n, |r, c| xs[r].powi(c as i32));
    let y = DVector::from_column_slice(ys);
    v.lu().solve(&y).map(|s| s.iter().copied().collect())
}

/// Eigenvalues of the companion matrix of a polynomial with nonzero leading coefficient.
pub fn companion_roots(c: &[f64]) -> Vec<num_complex::Complex64> {
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for r in 1..deg {
        m[(r, r - 1)] = 1.0;
    }
    for r in 0..deg {
        m[(r, deg - 1)] = -c[r] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Newton iteration on a real root; stops when the step stalls.
pub fn newton_polish(c: &[f64], x0: f64, iters: usize) -> f64 {
    let d = derivative(c);
    let mut x = x0;
    for _ in 0..iters {
        let fx = eval(c, x);
        let dfx = eval(&d, x);
        if dfx == 0.0 || !fx.is_finite() {
            break;
        }
        let step = fx / dfx;
        let next = x - step;
        if !next.is_finite() {
            break;
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Sum of `|c_k| |x|^k`, the natural rounding scale of an evaluation at `x`.
pub fn abs_scale(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().map(|(k, a)| a.abs() * x.abs().powi(k as i32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_recovers_cubic() {
        let c = [1.0, -2.0, 0.5, 3.0];
        let xs = chebyshev_nodes(4, -1.0, 1.0);
        let ys: Vec<f64> = xs.iter().map(|&x| eval(&c, x)).collect();
        let got = interpolate(&xs, &ys).unwrap();
        for (a, b) in got.iter().zip(c) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn unshift_matches_eval() {
        let c = [0.3, 1.0, -2.0];
        let u = unshift(&c, 1.5);
        for x in [-1.0, 0.0, 2.0] {
            assert!((eval(&u, x) - eval(&c, x - 1.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn companion_and_polish() {
        let c = mul(&mul(&[1.0, 1.0], &[3.0, 1.0]), &[-0.5, 1.0]);
        let mut r: Vec<f64> = companion_roots(&c).iter().map(|z| newton_polish(&c, z.re, 20)).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] + 3.0).abs() < 1e-14 && (r[1] + 1.0).abs() < 1e-14 && (r[2] - 0.5).abs() < 1e-14);
    }
}
