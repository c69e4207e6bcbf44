//! GUE-corners limit: the double-contour kernel, its marked version, and an independent
//! sampler built from the leading minors of a random Hermitian matrix.
//!
//! `K(t1, mu1; t2, mu2) = (2 pi i)^{-2} int_circle dz1 int_line dz2
//!     exp((z2^2 - z1^2)/2 + mu1 z1 - mu2 z2) z2^{t2} / z1^{t1} / (z2 - z1)`
//! with the circle `|z1| = 1` counterclockwise and the line `Re z2 = c` upward, to the right of
//! the circle when `mu1 <= mu2` and to the left otherwise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelValue;
use crate::sampler::Shuffler;

pub use crate::sampler::MarkedPoint;

const CIRCLE_RADIUS: f64 = 1.0;
const LINE_OFFSET: f64 = CIRCLE_RADIUS + 1.0;
const MAX_LEVELS: usize = 8;

/// Which side of the circle the vertical line passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Placement {
    Right,
    Left,
}

impl Placement {
    pub fn for_positions(mu1: f64, mu2: f64) -> Self {
        if mu1 <= mu2 {
            Placement::Right
        } else {
            Placement::Left
        }
    }
}

/// Truncation half-length of the line: the Gaussian tail beyond it is below `tol / 10`.
fn line_half_length(t2: usize, mu2: f64, tol: f64) -> f64 {
    let base = (2.0 * (10.0 / tol.max(1e-300)).ln()).sqrt();
    base + mu2.abs() + 2.0 * (t2 as f64 + 1.0).sqrt() + 2.0
}

fn level_sums(t1: usize, mu1: f64, t2: usize, mu2: f64, c: f64, half: f64, n_circle: usize, h: f64) -> (C, C, f64) {
    let circle: Vec<(C, C)> = (0..n_circle)
        .map(|k| {
            let z = C::from_polar(CIRCLE_RADIUS, 2.0 * PI * k as f64 / n_circle as f64);
            // dz1 = i z dtheta
            let f = (-z * z * 0.5 + z * mu1).exp() / z.powi(t1 as i32) * C::i() * z * (2.0 * PI / n_circle as f64);
            (z, f)
        })
        .collect();
    let steps = (half / h).ceil() as i64;
    let (mut fine, mut coarse, mut abs) = (C::new(0.0, 0.0), C::new(0.0, 0.0), 0.0);
    for s in -steps..=steps {
        let z2 = C::new(c, s as f64 * h);
        let g = (z2 * z2 * 0.5 - z2 * mu2).exp() * z2.powi(t2 as i32) * C::i() * h;
        let mut inner = C::new(0.0, 0.0);
        let mut inner_coarse = C::new(0.0, 0.0);
        for (k, (z1, f)) in circle.iter().enumerate() {
            let term = f / (z2 - z1);
            inner += term;
            abs += (term * g).norm();
            if k % 2 == 0 {
                inner_coarse += term * 2.0;
            }
        }
        fine += inner * g;
        if s % 2 == 0 {
            coarse += inner_coarse * g * 2.0;
        }
    }
    let pre = 1.0 / C::new(0.0, 2.0 * PI).powi(2);
    (fine * pre, coarse * pre, abs / (4.0 * PI * PI))
}

/// `K_GUE` with an explicit line placement.
pub fn k_gue_placed(t1: usize, mu1: f64, t2: usize, mu2: f64, placement: Placement, tol: f64) -> Result<KernelValue> {
    if t1 == 0 || t2 == 0 {
        return Err(Error::IndexOutOfRange("GUE levels start at 1".into()));
    }
    // Route the line through the saddle `Re z2 = mu2` when the placement allows it.
    let c = match placement {
        Placement::Right => LINE_OFFSET.max(mu2),
        Placement::Left => (-LINE_OFFSET).min(mu2),
    };
    let half = line_half_length(t2, mu2, tol);
    let (mut n_circle, mut h) = (32usize, 0.25);
    let mut last = None;
    for _ in 0..MAX_LEVELS {
        let (fine, coarse, abs) = level_sums(t1, mu1, t2, mu2, c, half, n_circle, h);
        let err = (fine - coarse).norm() + 4.0 * f64::EPSILON * abs;
        let nodes = n_circle * (2 * (half / h).ceil() as usize + 1);
        let kv = KernelValue { value: fine, quad_error: err, node_count: nodes };
        if err <= tol {
            return Ok(kv);
        }
        last = Some(kv);
        n_circle *= 2;
        h *= 0.5;
    }
    let kv = last.expect("at least one level");
    Err(Error::QuadratureNotConverged { value: kv.value, error: kv.quad_error })
}

/// `K_GUE(t1, mu1; t2, mu2)` with the line placed by the sign of `mu2 - mu1` (right at equality).
///
/// The quadrature itself uses the side nearer the saddle `mu2` and converts with the residue.
pub fn k_gue(t1: usize, mu1: f64, t2: usize, mu2: f64, tol: f64) -> Result<KernelValue> {
    let wanted = Placement::for_positions(mu1, mu2);
    let used = if mu2 >= 0.0 { Placement::Right } else { Placement::Left };
    let mut kv = k_gue_placed(t1, mu1, t2, mu2, used, tol)?;
    let res = placement_residue(t1, mu1, t2, mu2);
    match (wanted, used) {
        (Placement::Right, Placement::Left) => kv.value += res,
        (Placement::Left, Placement::Right) => kv.value -= res,
        _ => {}
    }
    Ok(kv)
}

/// Right placement minus left placement: the residue picked up at `z2 = z1`,
/// `(mu1 - mu2)^{t1-t2-1} / (t1-t2-1)!` for `t1 > t2` and zero otherwise.
pub fn placement_residue(t1: usize, mu1: f64, t2: usize, mu2: f64) -> f64 {
    if t1 <= t2 {
        return 0.0;
    }
    let k = (t1 - t2 - 1) as i32;
    let fact: f64 = (1..=k).map(f64::from).product();
    (mu1 - mu2).powi(k) / fact
}

/// Mark prefactor `theta delta_{1j} + (1 - theta) delta_{0j}`.
pub fn mark_weight(theta: f64, j: u8) -> f64 {
    if j == 1 {
        theta
    } else {
        1.0 - theta
    }
}

/// Marked kernel: the mark prefactor of the first argument times `K_GUE`.
pub fn k_gue_marked(p1: MarkedPoint, p2: MarkedPoint, theta: &dyn Fn(usize, f64) -> f64, tol: f64) -> Result<KernelValue> {
    let kv = k_gue(p1.t, p1.mu, p2.t, p2.mu, tol)?;
    let f = mark_weight(theta(p1.t, p1.mu), p1.j);
    Ok(KernelValue { value: kv.value * f, quad_error: kv.quad_error * f, node_count: kv.node_count })
}

/// Correlation function `det [K(p_a, p_b)]` of the marked process.
pub fn marked_correlation(points: &[MarkedPoint], theta: &dyn Fn(usize, f64) -> f64, tol: f64) -> Result<f64> {
    let k = points.len();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = k_gue_marked(points[a], points[b], theta, tol)?.value.re;
        }
    }
    Ok(if k == 0 { 1.0 } else { m.determinant() })
}

/// Eigenvalues of the leading minors and their marks; `levels[t-1]` ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornersSample {
    pub levels: Vec<Vec<f64>>,
    pub marks: Vec<Vec<u8>>,
}

impl CornersSample {
    pub fn check_interlacing(&self, tol: f64) -> bool {
        self.levels.windows(2).all(|w| {
            let (lo, hi) = (&w[0], &w[1]);
            lo.iter().enumerate().all(|(s, &x)| hi[s] - tol <= x && x <= hi[s + 1] + tol)
        })
    }
}

/// Hermitian matrix with standard normal diagonal and off-diagonal entries `(X + iY)/sqrt 2`.
pub fn gue_matrix<R: Rng>(t_max: usize, rng: &mut R) -> DMatrix<C> {
    let mut m = DMatrix::<C>::zeros(t_max, t_max);
    for r in 0..t_max {
        m[(r, r)] = C::new(rng.sample(StandardNormal), 0.0);
        for c in r + 1..t_max {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let v = C::new(x, y) / 2f64.sqrt();
            m[(r, c)] = v;
            m[(c, r)] = v.conj();
        }
    }
    m
}

fn minor_eigenvalues(m: &DMatrix<C>, t: usize) -> Vec<f64> {
    let minor = m.view((0, 0), (t, t)).into_owned();
    let mut ev: Vec<f64> = SymmetricEigen::new(minor).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Sample `index` of the stream seeded by `seed`.
pub fn corners_sample(t_max: usize, theta: &dyn Fn(usize, f64) -> f64, seed: u64, index: u64) -> CornersSample {
    let mut rng = Shuffler::rng(seed, index);
    let m = gue_matrix(t_max, &mut rng);
    let levels: Vec<Vec<f64>> = (1..=t_max).map(|t| minor_eigenvalues(&m, t)).collect();
    let marks = levels
        .iter()
        .enumerate()
        .map(|(idx, lv)| lv.iter().map(|&x| u8::from(rng.random::<f64>() < theta(idx + 1, x))).collect())
        .collect();
    CornersSample { levels, marks }
}

/// `count` samples, streams `0..count`.
pub fn corners_sampler(t_max: usize, theta: &dyn Fn(usize, f64) -> f64, seed: u64, count: u64) -> impl Iterator<Item = CornersSample> + '_ {
    (0..count).map(move |k| corners_sample(t_max, theta, seed, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn level_one_density() {
        for mu in [0.0, 1.0, -1.0, 2.5] {
            let kv = k_gue(1, mu, 1, mu, 1e-10).unwrap();
            assert!((kv.value.re - phi(mu)).abs() < 1e-9, "{mu}: {}", kv.value);
            assert!(kv.value.im.abs() < 1e-9);
        }
    }

    #[test]
    fn level_two_density_integrates_to_two() {
        // rho_1 at level 2 is the GUE(2) one-point density; its integral is 2.
        let h = 0.05;
        let total: f64 = (-140..=140).map(|k| k_gue(2, k as f64 * h, 2, k as f64 * h, 1e-11).unwrap().value.re * h).sum();
        assert!((total - 2.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn placement_difference_is_residue() {
        for (t1, t2, mu1, mu2) in [(2usize, 1usize, 0.3, -0.4), (3, 1, -0.2, 0.5), (1, 2, 0.1, 0.7)] {
            let r = k_gue_placed(t1, mu1, t2, mu2, Placement::Right, 1e-11).unwrap();
            let l = k_gue_placed(t1, mu1, t2, mu2, Placement::Left, 1e-11).unwrap();
            let res = placement_residue(t1, mu1, t2, mu2);
            assert!((r.value - l.value - res).norm() < 1e-9, "{t1} {t2}: {} {} {res}", r.value, l.value);
        }
    }

    #[test]
    fn marked_prefactor_sums_to_one() {
        let th = |_t: usize, _m: f64| 0.3;
        let p = |j| MarkedPoint { t: 2, mu: 0.4, j };
        let q = MarkedPoint { t: 1, mu: -0.2, j: 1 };
        let s = k_gue_marked(p(0), q, &th, 1e-10).unwrap().value + k_gue_marked(p(1), q, &th, 1e-10).unwrap().value;
        let k = k_gue(2, 0.4, 1, -0.2, 1e-10).unwrap().value;
        assert!((s - k).norm() < 1e-12);
        let one = |_t: usize, _m: f64| 1.0;
        assert_eq!(k_gue_marked(p(0), q, &one, 1e-10).unwrap().value, C::new(0.0, 0.0));
    }

    #[test]
    fn sampler_interlaces_and_is_reproducible() {
        let th = |t: usize, _m: f64| if t % 2 == 1 { 0.8 } else { 0.2 };
        let a: Vec<_> = corners_sampler(5, &th, 3, 50).collect();
        assert!(a.iter().all(|s| s.check_interlacing(1e-9)));
        let b: Vec<_> = corners_sampler(5, &th, 3, 50).collect();
        assert_eq!(a, b);
    }
}
