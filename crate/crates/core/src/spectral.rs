//! Transfer matrices and everything on the spectral curve that reduces to finite algebra.
//!
//! The odd/even transfer matrices are only ever multiplied in adjacent pairs. The pair
//! `(z-1) phi_{2k-1}(z) phi_{2k}(z)` is the degree-one polynomial matrix
//! `[[z + b/a, 1/b + 1/a], [(a+b) z, z + a/b]]` with determinant `(z-1)^2`, so every
//! product of whole pairs is polynomial and has an exactly known determinant.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WeightConfig;
use crate::poly;

const CROSS_CHECK_TOL: f64 = 1e-10;

/// Complex 2x2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C; 2]; 2]);

pub type TransferMatrix = Mat2;

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]]);

    pub fn new(a: C, b: C, c: C, d: C) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn det(&self) -> C {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> C {
        self.0[0][0] + self.0[1][1]
    }

    pub fn adj(&self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[d, -b], [-c, a]])
    }

    pub fn scale(&self, s: C) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * s, b * s], [c * s, d * s]])
    }

    pub fn entry(&self, r: usize, c: usize) -> C {
        self.0[r][c]
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = self.0;
        let b = o.0;
        Mat2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = self.0;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += o.0[i][j];
            }
        }
        Mat2(r)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + o.scale(C::new(-1.0, 0.0))
    }
}

fn re(x: f64) -> C {
    C::new(x, 0.0)
}

/// `phi_m(z)` for `m` in `1..=2 ell`, exactly as defined entrywise.
pub fn phi(cfg: &WeightConfig, m: usize, z: C) -> Result<Mat2> {
    if m == 0 || m > 2 * cfg.ell {
        return Err(Error::IndexOutOfRange(format!("transfer index {m} outside 1..={}", 2 * cfg.ell)));
    }
    if z == C::new(0.0, 0.0) || (m % 2 == 0 && z == re(1.0)) {
        return Err(Error::PoleAtZ { z });
    }
    let k = m.div_ceil(2) as i64;
    if m % 2 == 1 {
        let a = cfg.alpha(k);
        Ok(Mat2::new(re(1.0), re(1.0 / a) / z, re(a), re(1.0)))
    } else {
        let b = cfg.beta(k);
        let pre = re(1.0) / (re(1.0) - re(1.0) / z);
        Ok(Mat2::new(re(1.0), re(1.0 / b) / z, re(b), re(1.0)).scale(pre))
    }
}

/// `(z-1) phi_{2k-1}(z) phi_{2k}(z)`, a polynomial matrix of degree one.
pub fn pair_block(cfg: &WeightConfig, k: usize, z: C) -> Mat2 {
    let a = cfg.alpha(k as i64);
    let b = cfg.beta(k as i64);
    Mat2::new(z + b / a, re(1.0 / b + 1.0 / a), z * (a + b), z + a / b)
}

/// `prod_{k=1}^{i} pair_block(k)`, so that `prod_{m=1}^{2i} phi_m = block_product / (z-1)^i`.
pub fn block_product(cfg: &WeightConfig, i: usize, z: C) -> Mat2 {
    (1..=i).fold(Mat2::IDENTITY, |acc, k| acc * pair_block(cfg, k, z))
}

/// `Phi(z) = prod_{m=1}^{2 ell} phi_m(z)`.
pub fn big_phi(cfg: &WeightConfig, z: C) -> Result<Mat2> {
    if z == re(0.0) || z == re(1.0) {
        return Err(Error::PoleAtZ { z });
    }
    Ok(block_product(cfg, cfg.ell, z).scale(re(1.0) / (z - 1.0).powi(cfg.ell as i32)))
}

/// `q(z) = (z-1)^ell tr Phi(z)`, evaluated through the polynomial blocks.
pub fn q_value(cfg: &WeightConfig, z: C) -> C {
    block_product(cfg, cfg.ell, z).trace()
}

/// `Q = adj(wI - Phi) / (2w - tr Phi)` from the polynomial product `p = (z-1)^ell Phi`
/// and the scaled eigenvalue `wt = (z-1)^ell w`.
pub fn q_matrix_scaled(p: &Mat2, wt: C) -> Mat2 {
    let [[a, b], [c, d]] = p.0;
    let den = re(2.0) * wt - (a + d);
    Mat2::new(wt - d, b, c, wt - a).scale(re(1.0) / den)
}

/// `Q(z, w)` with on-curve and branch-point checks.
pub fn q_matrix(cfg: &WeightConfig, z: C, w: C) -> Result<Mat2> {
    if z == re(0.0) || z == re(1.0) {
        return Err(Error::PoleAtZ { z });
    }
    let s = (z - 1.0).powi(cfg.ell as i32);
    let p = block_product(cfg, cfg.ell, z);
    let tr = p.trace() / s;
    let residual = (w * w - tr * w + 1.0).norm();
    if residual > 1e-8 * w.norm_sqr().max(1.0) {
        return Err(Error::NotOnCurve { residual });
    }
    let wt = s * w;
    let den = re(2.0) * wt - p.trace();
    if den.norm() <= 1e-12 * (wt.norm() + p.trace().norm()).max(1e-300) {
        return Err(Error::BranchPointDivision);
    }
    Ok(q_matrix_scaled(&p, wt))
}

/// The limit of `Q` at `q_inf`: `(1, alpha_1)^T (1, beta_ell^{-1}) / (1 + alpha_1 / beta_ell)`.
pub fn q_matrix_at_q_inf(cfg: &WeightConfig) -> Mat2 {
    let a1 = cfg.alpha(1);
    let bl = 1.0 / cfg.beta(cfg.ell as i64);
    Mat2::new(re(1.0), re(bl), re(a1), re(a1 * bl)).scale(re(1.0 / (1.0 + a1 * bl)))
}

/// `B = prod_m (1 + beta_m / alpha_m)(1 + alpha_{m+1} / beta_m)` in log form.
pub fn log_b_product(cfg: &WeightConfig) -> f64 {
    gauge_block_log(cfg, cfg.ell)
}

/// `sum_{m=1}^{i} log[(1 + beta_m/alpha_m)(1 + alpha_{m+1}/beta_m)]`.
fn gauge_block_log(cfg: &WeightConfig, i: usize) -> f64 {
    (1..=i as i64).map(|m| (1.0 + cfg.beta(m) / cfg.alpha(m)).ln() + (1.0 + cfg.alpha(m + 1) / cfg.beta(m)).ln()).sum()
}

fn ab(cfg: &WeightConfig, k: i64) -> (f64, f64) {
    (cfg.alpha(k) / cfg.beta(k - 1), cfg.beta(k) / cfg.alpha(k))
}

/// The closed-form sum for the turning-point location.
pub fn closed_form_tau(cfg: &WeightConfig) -> f64 {
    (1..=cfg.ell as i64)
        .map(|k| {
            let (a, b) = ab(cfg, k);
            let (a1, _) = ab(cfg, k + 1);
            (1.0 + a + a * b + a * b * a1) / ((1.0 + a) * (1.0 + b) * (1.0 + a1))
        })
        .sum()
}

/// The closed-form sum offered for the fluctuation variance. It does not agree with the
/// second derivative of the action function; kept for comparison only.
pub fn closed_form_sigma2(cfg: &WeightConfig) -> f64 {
    (1..=cfg.ell as i64)
        .map(|k| {
            let (a, b) = ab(cfg, k);
            let (a1, _) = ab(cfg, k + 1);
            let num = (1.0 + a + a * b + a * b * a1) * (b + a1 + b * a1 + a * a1);
            num / ((1.0 + a).powi(2) * (1.0 + b).powi(2) * (1.0 + a1).powi(2))
        })
        .sum()
}

/// `theta(t)`, the mark probability on level `t`.
pub fn theta(cfg: &WeightConfig, t: i64) -> f64 {
    let l = cfg.ell as i64;
    let c = cfg.alpha(l + 1 - t) / cfg.beta(l - t);
    c / (1.0 + c)
}

/// `nu(t, j)`: `theta(t)` for `j = 1`, `1 - theta(t)` for `j = 0`.
pub fn nu(cfg: &WeightConfig, t: i64, j: u8) -> f64 {
    let th = theta(cfg, t);
    if j == 1 {
        th
    } else {
        1.0 - th
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Polynomial data of the spectral curve and the constants at the right turning point.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    pub ell: usize,
    /// `q(z)`, ascending powers of `z`, degree `ell`.
    pub q_coeffs: Vec<f64>,
    /// `q(1+s)`, ascending powers of `s = z - 1`.
    pub q_shifted: Vec<f64>,
    /// `p(z) = q^2 - 4 (z-1)^{2 ell}`, ascending powers, degree `2 ell - 1`.
    pub p_coeffs: Vec<f64>,
    /// Zeros of `p`, descending: `0 = z_0 > z_1 >= z_2 > ...`.
    pub roots: Vec<f64>,
    pub root_residual: f64,
    pub genus_maximal: bool,
    pub tau: f64,
    /// Second derivative of the action function at `q_inf`.
    pub sigma2: f64,
    pub b: f64,
    pub log_b: f64,
    pub q1: f64,
    pub dq1: f64,
    pub d2q1: f64,
}

impl SpectralData {
    pub fn new(cfg: &WeightConfig) -> Result<Self> {
        cfg.validate()?;
        let ell = cfg.ell;
        let nodes = poly::chebyshev_nodes(ell + 1, -1.0, 1.0);
        let values: Vec<f64> = nodes.iter().map(|&s| q_value(cfg, re(1.0 + s)).re).collect();
        let q_shifted = poly::interpolate(&nodes, &values).ok_or(Error::RootFindingFailed { residual: f64::INFINITY })?;
        let q_coeffs = poly::unshift(&q_shifted, 1.0);

        let mut p_coeffs = poly::mul(&q_coeffs, &q_coeffs);
        for (k, c) in poly::binomial_power(1.0, 2 * ell).iter().enumerate() {
            p_coeffs[k] -= 4.0 * c;
        }
        let lead_scale = p_coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        p_coeffs.truncate(2 * ell);
        if p_coeffs[0].abs() > 1e-10 * lead_scale {
            return Err(Error::RootFindingFailed { residual: p_coeffs[0].abs() });
        }
        p_coeffs[0] = 0.0;

        let (rest, genus_maximal, root_residual) = nonzero_roots(&p_coeffs[1..])?;
        let mut roots = vec![0.0];
        roots.extend(rest);
        for k in 0..roots.len().saturating_sub(1) {
            let ok = if k % 2 == 0 { roots[k] > roots[k + 1] } else { roots[k] >= roots[k + 1] };
            if !ok {
                return Err(Error::RootFindingFailed { residual: root_residual });
            }
        }

        let q1 = q_shifted[0];
        let dq1 = q_shifted.get(1).copied().unwrap_or(0.0);
        let d2q1 = 2.0 * q_shifted.get(2).copied().unwrap_or(0.0);
        let (mq1, mdq1, md2q1, mscale) = product_rule_derivatives(cfg);
        for (name, a, b) in [("q(1)", q1, mq1), ("q'(1)", dq1, mdq1), ("q''(1)", d2q1, md2q1)] {
            if (a - b).abs() > CROSS_CHECK_TOL * mscale {
                return Err(Error::CrossCheckFailed { quantity: name, closed: b, derivative: a });
            }
        }

        let log_b = log_b_product(cfg);
        let b = log_b.exp();
        if rel_diff(b, q1) > CROSS_CHECK_TOL {
            return Err(Error::CrossCheckFailed { quantity: "B", closed: b, derivative: q1 });
        }

        let tau_d = dq1 / q1;
        let tau = closed_form_tau(cfg);
        if rel_diff(tau, tau_d) > CROSS_CHECK_TOL {
            return Err(Error::CrossCheckFailed { quantity: "tau", closed: tau, derivative: tau_d });
        }
        let dp = poly::derivative(&p_coeffs);
        let tau_p = 0.5 * poly::eval(&dp, 1.0) / poly::eval(&p_coeffs, 1.0);
        if rel_diff(tau, tau_p) > CROSS_CHECK_TOL {
            return Err(Error::CrossCheckFailed { quantity: "tau (p form)", closed: tau, derivative: tau_p });
        }

        let mut sigma2 = d2q1 / q1 - tau_d * tau_d + tau_d;
        if ell == 1 {
            // p''(1) carries an extra -8 when ell = 1.
            sigma2 -= 2.0 / (q1 * q1);
        }
        if !(sigma2 > 0.0) {
            return Err(Error::CrossCheckFailed { quantity: "sigma^2 > 0", closed: 0.0, derivative: sigma2 });
        }

        Ok(SpectralData { ell, q_coeffs, q_shifted, p_coeffs, roots, root_residual, genus_maximal, tau, sigma2, b, log_b, q1, dq1, d2q1 })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `|z_1|`, or `None` for `ell = 1`.
    pub fn first_root_modulus(&self) -> Option<f64> {
        self.roots.get(1).map(|r| r.abs())
    }

    /// The derivative form `q''/q - tau^2 + tau` used by the closed-form cross-check.
    pub fn derivative_form_sigma2(&self) -> f64 {
        let t = self.dq1 / self.q1;
        self.d2q1 / self.q1 - t * t + t
    }

    pub fn q_eval(&self, z: f64) -> f64 {
        poly::eval(&self.q_coeffs, z)
    }

    pub fn p_eval(&self, z: f64) -> f64 {
        poly::eval(&self.p_coeffs, z)
    }

    /// Number of branch points (including `z_0 = 0`) with modulus below `r`.
    pub fn branch_points_inside(&self, r: f64) -> usize {
        self.roots.iter().filter(|z| z.abs() < r).count()
    }

    /// True if radius `r` on the negative axis lies in a cut (sheets glued there).
    pub fn radius_in_cut(&self, r: f64) -> bool {
        self.branch_points_inside(r) % 2 == 1
    }
}

/// Free-function form of the cross-check between the closed-form variance and the
/// derivative form `q''(1)/q(1) - tau^2 + tau`; errors when they disagree.
pub fn cross_check_sigma2(cfg: &WeightConfig) -> Result<(f64, f64)> {
    let sd = SpectralData::new(cfg)?;
    let closed = closed_form_sigma2(cfg);
    let derivative = sd.derivative_form_sigma2();
    if rel_diff(closed, derivative) > CROSS_CHECK_TOL {
        return Err(Error::CrossCheckFailed { quantity: "sigma^2", closed, derivative });
    }
    Ok((closed, derivative))
}

/// `tr P(1)`, `tr P'(1)`, `tr P''(1)` for `P = prod pair_block`, by the product rule,
/// together with a rounding scale.
fn product_rule_derivatives(cfg: &WeightConfig) -> (f64, f64, f64, f64) {
    let one = re(1.0);
    let (mut p, mut dp, mut d2p) =
        (Mat2::IDENTITY, Mat2::new(re(0.0), re(0.0), re(0.0), re(0.0)), Mat2::new(re(0.0), re(0.0), re(0.0), re(0.0)));
    for k in 1..=cfg.ell {
        let m = pair_block(cfg, k, one);
        let dm = Mat2::new(one, re(0.0), re(cfg.alpha(k as i64) + cfg.beta(k as i64)), one);
        d2p = d2p * m + (dp * dm).scale(re(2.0));
        dp = dp * m + p * dm;
        p = p * m;
    }
    let scale = p.norm_max() + dp.norm_max() + d2p.norm_max();
    (p.trace().re, dp.trace().re, d2p.trace().re, scale)
}

/// Roots of `p(z)/z`: real, descending; merges coinciding pairs.
fn nonzero_roots(c: &[f64]) -> Result<(Vec<f64>, bool, f64)> {
    if c.len() <= 1 {
        return Ok((Vec::new(), true, 0.0));
    }
    let eig = poly::companion_roots(c);
    let dc = poly::derivative(c);
    let mut reals = Vec::new();
    let mut doubles = Vec::new();
    for z in &eig {
        let scale = z.norm().max(1.0);
        if z.im.abs() < 1e-9 * scale {
            reals.push(poly::newton_polish(c, z.re, 60));
        } else if z.im.abs() < 1e-5 * scale {
            if z.im > 0.0 {
                doubles.push(poly::newton_polish(&dc, z.re, 60));
            }
        } else {
            return Err(Error::RootFindingFailed { residual: z.im.abs() });
        }
    }
    let mut roots: Vec<f64> = reals;
    for d in &doubles {
        roots.push(*d);
        roots.push(*d);
    }
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if roots.len() != c.len() - 1 {
        return Err(Error::RootFindingFailed { residual: f64::INFINITY });
    }
    let mut genus_maximal = doubles.is_empty();
    // Pairs (z_{2k-1}, z_{2k}) are roots[2k-2], roots[2k-1] here.
    for k in (0..roots.len()).step_by(2) {
        let (a, b) = (roots[k], roots[k + 1]);
        let scale = a.abs().max(1.0);
        if (a - b).abs() < 1e-5 * scale {
            let crit = poly::newton_polish(&dc, 0.5 * (a + b), 60);
            let val = poly::eval(c, crit).abs();
            if (a - b).abs() <= 1e-9 || val <= 1e-9 * poly::abs_scale(c, crit) {
                roots[k] = crit;
                roots[k + 1] = crit;
                genus_maximal = false;
            }
        }
    }
    let mut residual = 0.0_f64;
    for &r in &roots {
        residual = residual.max(poly::eval(c, r).abs() / poly::abs_scale(c, r).max(1e-300));
    }
    let limit = if genus_maximal { 1e-11 } else { 1e-8 };
    if residual > limit {
        return Err(Error::RootFindingFailed { residual });
    }
    Ok((roots, genus_maximal, residual))
}

/// `log g(col, row)` with `col = ell x + i`, `row = 2y + j`.
pub fn log_gauge(cfg: &WeightConfig, sd: &SpectralData, col: usize, row: usize, n_param: usize) -> f64 {
    let ell = cfg.ell;
    let (x, i) = (col / ell, col % ell);
    let j = row % 2;
    0.5 * col as f64 * (n_param as f64).ln() + x as f64 * sd.log_b + col as f64 * 0.5 * sd.sigma2.ln() + gauge_block_log(cfg, i)
        - j as f64 * cfg.alpha(i as i64 + 1).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg2(a: f64) -> WeightConfig {
        WeightConfig::two_periodic(a, 1).unwrap()
    }

    #[test]
    fn phi_examples() {
        let u = WeightConfig::uniform(1, 1).unwrap();
        let z = C::new(0.7, 0.4);
        let p1 = phi(&u, 1, z).unwrap();
        assert!((p1.entry(0, 1) - re(1.0) / z).norm() < 1e-15);
        let p2 = phi(&u, 2, z).unwrap().scale(re(1.0) - re(1.0) / z);
        assert!((p2 - Mat2::new(re(1.0), re(1.0) / z, re(1.0), re(1.0))).norm_max() < 1e-14);
        assert!(matches!(phi(&u, 2, re(1.0)), Err(Error::PoleAtZ { .. })));
        assert!(matches!(phi(&u, 1, re(0.0)), Err(Error::PoleAtZ { .. })));
    }

    #[test]
    fn uniform_trace() {
        let u = WeightConfig::uniform(1, 1).unwrap();
        for z in [C::new(2.0, 0.0), C::new(-0.3, 1.1), C::new(4.0, 0.0)] {
            let t = big_phi(&u, z).unwrap().trace();
            assert!((t - (z + 1.0) * 2.0 / (z - 1.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn pair_block_matches_definition() {
        let cfg = WeightConfig::new(vec![2.0, 0.7, 1.3], vec![0.9, 1.4, 2.0 * 0.7 * 1.3 / (0.9 * 1.4)], 1).unwrap();
        let z = C::new(0.3, -1.7);
        for k in 1..=3 {
            let direct = phi(&cfg, 2 * k - 1, z).unwrap() * phi(&cfg, 2 * k, z).unwrap();
            let poly = pair_block(&cfg, k, z).scale(re(1.0) / (z - 1.0));
            assert!((direct - poly).norm_max() < 1e-13);
        }
    }

    #[test]
    fn uniform_polynomials() {
        let sd = SpectralData::new(&WeightConfig::uniform(1, 1).unwrap()).unwrap();
        assert!((sd.q_coeffs[0] - 2.0).abs() < 1e-13 && (sd.q_coeffs[1] - 2.0).abs() < 1e-13);
        assert_eq!(sd.p_coeffs.len(), 2);
        assert!((sd.p_coeffs[1] - 16.0).abs() < 1e-12);
        assert_eq!(sd.roots, vec![0.0]);
        assert!((sd.b - 4.0).abs() < 1e-13);
        assert!((sd.tau - 0.5).abs() < 1e-14);
        assert!((sd.sigma2 - 0.125).abs() < 1e-13);
        assert!((closed_form_sigma2(&WeightConfig::uniform(1, 1).unwrap()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_periodic_constants() {
        for a in [0.3, 0.5, 0.8] {
            let cfg = cfg2(a);
            let sd = SpectralData::new(&cfg).unwrap();
            assert!((sd.tau - 1.0).abs() < 1e-12);
            let s = a + 1.0 / a;
            assert!((closed_form_sigma2(&cfg) - 2.0 / (s * s)).abs() < 1e-12);
            assert!((sd.sigma2 - 1.0 / (s * s)).abs() < 1e-12);
            assert_eq!(sd.p_coeffs.len(), 4);
            assert!(sd.roots[1] < 0.0 && sd.roots[2] < sd.roots[1]);
            assert!((sd.roots[1] + a * a).abs() < 1e-12 || (sd.roots[1] + 1.0 / (a * a)).abs() < 1e-12);
            assert!(sd.genus_maximal);
        }
    }

    #[test]
    fn uniform_two_periodic_is_degenerate() {
        let sd = SpectralData::new(&WeightConfig::uniform(2, 1).unwrap()).unwrap();
        assert!(!sd.genus_maximal);
        assert!((sd.roots[1] + 1.0).abs() < 1e-6 && (sd.roots[2] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn theta_examples() {
        let a = 0.5;
        let cfg = cfg2(a);
        assert!((theta(&cfg, 1) - a * a / (1.0 + a * a)).abs() < 1e-15);
        assert!((theta(&cfg, 2) - 1.0 / (1.0 + a * a)).abs() < 1e-15);
        assert_eq!(theta(&cfg, 3), theta(&cfg, 1));
        let u = WeightConfig::uniform(1, 1).unwrap();
        assert_eq!(theta(&u, 5), 0.5);
        assert_eq!(nu(&cfg, 1, 0) + nu(&cfg, 1, 1), 1.0);
    }

    #[test]
    fn gauge_examples() {
        let cfg = cfg2(0.5);
        let sd = SpectralData::new(&cfg).unwrap();
        assert_eq!(log_gauge(&cfg, &sd, 0, 6, 4), 0.0);
        assert!((log_gauge(&cfg, &sd, 0, 7, 4) + cfg.alpha(1).ln()).abs() < 1e-15);
    }

    #[test]
    fn q_at_q_inf_limit() {
        let cfg = WeightConfig::new(vec![1.7, 0.6], vec![0.8, 1.7 * 0.6 / 0.8], 1).unwrap();
        let z = re(1.0 + 1e-7);
        let p = block_product(&cfg, cfg.ell, z);
        let q = p.trace();
        let s = (z - 1.0).powi(2);
        let disc = (q * q - s * s * 4.0).sqrt();
        let wt = (q + disc) * 0.5;
        let qm = q_matrix_scaled(&p, wt);
        assert!((qm - q_matrix_at_q_inf(&cfg)).norm_max() < 1e-5);
    }
}
