//! Finite-N correlation kernel of the black particle process as single and double contour
//! integrals on the spectral curve, and its gauge-rescaled form near the turning point.
//!
//! Argument order: `k_int(p1, p2)` gives `p1` the role of the site carrying the inverse transfer
//! product, `w_1^{N-x'}` and `z_1^{y'}`; `p2` carries `prod phi(z_2)`, `w_2^{x-N}` and `z_2^{-y}`.
//! The single integral is present iff `col(p2) > col(p1)`. With this order the kernel equals,
//! entry by entry, `sum_q K(w_{p1,q}, b_{p1}) K^{-1}(b_{p2}, w_{p1,q})` over the south and west
//! whites of `p1`.
//!
//! Along a contour the sheet is tracked through `wt = (z-1)^ell w`. Every power in the integrand
//! has an integer exponent, so `exp(n ln u)` with the principal logarithm is exact; magnitudes are
//! shifted by the largest real part before exponentiating.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WeightConfig;
use crate::spectral::{block_product, log_gauge, q_matrix_scaled, Mat2, SpectralData};
use crate::surface::{Contour, ContourPair};

/// Default number of node doublings before giving up.
pub const MAX_DOUBLINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    #[serde(serialize_with = "ser_complex")]
    pub value: C,
    pub quad_error: f64,
    pub node_count: usize,
}

fn ser_complex<S: serde::Serializer>(z: &C, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Black vertex in kernel coordinates: `col = ell x + i`, `row = 2y + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Site {
    pub col: usize,
    pub row: usize,
}

impl Site {
    pub fn new(col: usize, row: usize) -> Self {
        Site { col, row }
    }

    fn split(&self, ell: usize) -> (i64, usize, i64, usize) {
        ((self.col / ell) as i64, self.col % ell, (self.row / 2) as i64, self.row % 2)
    }
}

/// `(adj(P_{i'}) Q)` and `(Q P_i)` for a given node, with `P_i` the product of the first `i` pair blocks.
pub fn matrix_integrand(cfg: &WeightConfig, i1: usize, j1: usize, i2: usize, j2: usize, z1: C, wt1: C, z2: C, wt2: C) -> Result<C> {
    let n1 = NodeData::new(cfg, z1, wt1, C::new(0.0, 0.0), true)?;
    let n2 = NodeData::new(cfg, z2, wt2, C::new(0.0, 0.0), true)?;
    let left = n1.left(i1, j1);
    let right = n2.right(i2, j2);
    let zm1 = |z: C, e: i32| (z - 1.0).powi(e);
    // Undo the (z-1) powers hidden in the polynomial pair blocks.
    Ok((left[0] * right[0] + left[1] * right[1]) * zm1(z1, -(i1 as i32)) * zm1(z2, -(i2 as i32)))
}

#[derive(Debug, Clone)]
struct NodeData {
    z: C,
    /// `ln(z - 1)`, `ln wt`, `ln z`.
    logs: [C; 3],
    /// Trapezoid weight times `dz / d phi`.
    dz: C,
    coarse: bool,
    q: Mat2,
    /// `P_0 = I, P_1, ..., P_{ell-1}`.
    p: Vec<Mat2>,
}

impl NodeData {
    fn new(cfg: &WeightConfig, z: C, wt: C, dz: C, coarse: bool) -> Result<Self> {
        if z.norm() == 0.0 || (z - 1.0).norm() == 0.0 {
            return Err(Error::PoleAtZ { z });
        }
        let ell = cfg.ell;
        let p: Vec<Mat2> = (0..ell).map(|i| block_product(cfg, i, z)).collect();
        let big = block_product(cfg, ell, z);
        let denom = wt * 2.0 - big.trace();
        if denom.norm() <= 1e-14 * wt.norm().max(1.0) {
            return Err(Error::BranchPointDivision);
        }
        let det = (wt * wt - big.trace() * wt + big.det()).norm();
        if det > 1e-7 * (wt.norm() + big.norm_max()).powi(2).max(1.0) {
            return Err(Error::NotOnCurve { residual: det });
        }
        Ok(NodeData { z, logs: [(z - 1.0).ln(), wt.ln(), z.ln()], dz, coarse, q: q_matrix_scaled(&big, wt), p })
    }

    /// Row `j` of `adj(P_i) Q`.
    fn left(&self, i: usize, j: usize) -> [C; 2] {
        let m = self.p[i].adj() * self.q;
        [m.entry(j, 0), m.entry(j, 1)]
    }

    /// Column `j` of `Q P_i`.
    fn right(&self, i: usize, j: usize) -> [C; 2] {
        let m = self.q * self.p[i];
        [m.entry(0, j), m.entry(1, j)]
    }

    fn log_power(&self, e: [i64; 3]) -> C {
        self.logs[0] * e[0] as f64 + self.logs[1] * e[1] as f64 + self.logs[2] * e[2] as f64
    }
}

#[derive(Debug)]
struct Level {
    small: Vec<NodeData>,
    large: Vec<NodeData>,
    node_count: usize,
}

fn tabulate(cfg: &WeightConfig, c: &Contour) -> Result<Vec<NodeData>> {
    let mut out = Vec::with_capacity(c.node_count());
    for l in &c.loops {
        for (k, n) in l.nodes.iter().enumerate() {
            out.push(NodeData::new(cfg, n.z, n.wt, n.dz * l.step, k % 2 == 0)?);
        }
    }
    Ok(out)
}

impl Level {
    fn new(cfg: &WeightConfig, pair: &ContourPair) -> Result<Self> {
        let small = tabulate(cfg, &pair.small)?;
        let large = tabulate(cfg, &pair.large)?;
        Ok(Level { node_count: small.len() + large.len(), small, large })
    }
}

/// Exponents of `(z-1)`, `wt`, `z` for the factor attached to the primed site on the small contour.
fn primed_exponents(ell: i64, n: i64, x: i64, i: i64, y: i64) -> [i64; 3] {
    // (z-1)^{-(ell N + i')} w^{N - x'} z^{y'} with w = wt (z-1)^{-ell}
    [-(ell * n + i) - ell * (n - x), n - x, y]
}

/// Exponents for the unprimed site on the large contour, including the `1/z` of the measure.
fn unprimed_exponents(ell: i64, n: i64, x: i64, i: i64, y: i64) -> [i64; 3] {
    // (z-1)^{ell N - i} w^{x - N} z^{-y} / z
    [(ell * n - i) - ell * (x - n), x - n, -y - 1]
}

/// Full and next-coarser sums, and the sum of term moduli.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    fine: C,
    coarse: C,
    abs: f64,
}

/// Evaluates the kernel on a certified contour pair, doubling nodes until the error estimate
/// meets the tolerance. Refined node tables are cached and shared across threads.
#[derive(Debug)]
pub struct KernelEvaluator {
    cfg: WeightConfig,
    n_param: usize,
    base: ContourPair,
    levels: Mutex<Vec<Arc<Level>>>,
    pub max_doublings: usize,
}

impl KernelEvaluator {
    pub fn new(cfg: &WeightConfig, sd: &SpectralData, pair: ContourPair) -> Result<Self> {
        if !sd.genus_maximal {
            return Err(Error::GenusDegenerate);
        }
        if (pair.certificate.winding_small - 2.0).abs() > 1e-6 || (pair.certificate.winding_large - 2.0).abs() > 1e-6 {
            return Err(Error::ContourNotCertified(format!(
                "windings {} and {}",
                pair.certificate.winding_small, pair.certificate.winding_large
            )));
        }
        let first = Arc::new(Level::new(cfg, &pair)?);
        Ok(KernelEvaluator {
            cfg: cfg.clone(),
            n_param: cfg.n_param,
            base: pair,
            levels: Mutex::new(vec![first]),
            max_doublings: MAX_DOUBLINGS,
        })
    }

    pub fn config(&self) -> &WeightConfig {
        &self.cfg
    }

    pub fn contours(&self) -> &ContourPair {
        &self.base
    }

    fn level(&self, k: usize) -> Result<Arc<Level>> {
        let mut levels = self.levels.lock().expect("level cache poisoned");
        while levels.len() <= k {
            let mut pair = self.base.clone();
            for _ in 0..levels.len() {
                pair = pair.refined(&self.cfg)?;
            }
            levels.push(Arc::new(Level::new(&self.cfg, &pair)?));
        }
        Ok(levels[k].clone())
    }

    fn check_site(&self, s: Site) -> Result<()> {
        let n = self.cfg.size();
        if s.col >= n || s.row >= n {
            return Err(Error::IndexOutOfRange(format!("site ({}, {}) outside 0..{n}", s.col, s.row)));
        }
        Ok(())
    }

    fn single(&self, lv: &Level, p1: Site, p2: Site) -> (Sums, f64) {
        let ell = self.cfg.ell;
        let (x1, i1, y1, j1) = p1.split(ell);
        let (x2, i2, y2, j2) = p2.split(ell);
        let e = [-((i1 + i2) as i64) - ell as i64 * (x2 - x1), x2 - x1, y1 - y2 - 1];
        let logs: Vec<C> = lv.large.iter().map(|n| n.log_power(e)).collect();
        let shift = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut s = Sums::default();
        for (n, l) in lv.large.iter().zip(&logs) {
            let m = n.p[i1].adj() * n.q * n.p[i2];
            let term = m.entry(j1, j2) * (l - shift).exp() * n.dz;
            s.fine += term;
            s.abs += term.norm();
            if n.coarse {
                s.coarse += term * 2.0;
            }
        }
        let pre = -1.0 / C::new(0.0, 2.0 * PI);
        (Sums { fine: s.fine * pre, coarse: s.coarse * pre, abs: s.abs / (2.0 * PI) }, shift)
    }

    fn double(&self, lv: &Level, p1: Site, p2: Site) -> (Sums, f64) {
        let ell = self.cfg.ell as i64;
        let n = self.n_param as i64;
        let (x1, i1, y1, j1) = p1.split(self.cfg.ell);
        let (x2, i2, y2, j2) = p2.split(self.cfg.ell);
        let e1 = primed_exponents(ell, n, x1, i1 as i64, y1);
        let e2 = unprimed_exponents(ell, n, x2, i2 as i64, y2);
        let l1: Vec<C> = lv.small.iter().map(|nd| nd.log_power(e1)).collect();
        let l2: Vec<C> = lv.large.iter().map(|nd| nd.log_power(e2)).collect();
        let m1 = l1.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let m2 = l2.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let a: Vec<[C; 2]> = lv
            .small
            .iter()
            .zip(&l1)
            .map(|(nd, l)| {
                let f = (l - m1).exp() * nd.dz;
                let r = nd.left(i1, j1);
                [r[0] * f, r[1] * f]
            })
            .collect();
        let b: Vec<[C; 2]> = lv
            .large
            .iter()
            .zip(&l2)
            .map(|(nd, l)| {
                let f = (l - m2).exp() * nd.dz;
                let c = nd.right(i2, j2);
                [c[0] * f, c[1] * f]
            })
            .collect();
        let mut s = Sums::default();
        for (ns, av) in lv.small.iter().zip(&a) {
            let (mut fine, mut coarse, mut abs) = (C::new(0.0, 0.0), C::new(0.0, 0.0), 0.0);
            for (nl, bv) in lv.large.iter().zip(&b) {
                let term = (av[0] * bv[0] + av[1] * bv[1]) / (nl.z - ns.z);
                fine += term;
                abs += term.norm();
                if nl.coarse {
                    coarse += term;
                }
            }
            s.fine += fine;
            s.abs += abs;
            if ns.coarse {
                s.coarse += coarse * 4.0;
            }
        }
        let pre = 1.0 / C::new(0.0, 2.0 * PI).powi(2);
        (Sums { fine: s.fine * pre, coarse: s.coarse * pre, abs: s.abs / (4.0 * PI * PI) }, m1 + m2)
    }

    /// The estimate and the rounding part of its error.
    fn evaluate(&self, lv: &Level, p1: Site, p2: Site) -> (KernelValue, f64) {
        let (d, dshift) = self.double(lv, p1, p2);
        let (mut value, mut err, mut floor) = combine(d, dshift);
        if p2.col > p1.col {
            let (s, sshift) = self.single(lv, p1, p2);
            let (v, e, f) = combine(s, sshift);
            value += v;
            err += e;
            floor += f;
        }
        (KernelValue { value, quad_error: err, node_count: lv.node_count }, floor)
    }

    /// `K_Int(p1, p2)` to absolute tolerance `tol`.
    pub fn k_int(&self, p1: Site, p2: Site, tol: f64) -> Result<KernelValue> {
        self.check_site(p1)?;
        self.check_site(p2)?;
        let mut best: Option<KernelValue> = None;
        for k in 0..=self.max_doublings {
            let lv = self.level(k)?;
            let (kv, floor) = self.evaluate(&lv, p1, p2);
            if kv.quad_error <= tol {
                return Ok(kv);
            }
            match best {
                // Doubling no longer pays off: the rounding floor has been reached.
                Some(b) if kv.quad_error > 0.5 * b.quad_error && floor > 0.25 * kv.quad_error => {
                    if kv.quad_error < b.quad_error {
                        best = Some(kv);
                    }
                    break;
                }
                _ => best = Some(kv),
            }
        }
        let b = best.expect("at least one level");
        Err(Error::QuadratureNotConverged { value: b.value, error: b.quad_error })
    }

    /// Like `k_int` but returns the best estimate instead of failing when the tolerance is not met.
    pub fn k_int_best(&self, p1: Site, p2: Site, tol: f64) -> Result<KernelValue> {
        match self.k_int(p1, p2, tol) {
            Err(Error::QuadratureNotConverged { value, error }) => {
                Ok(KernelValue { value, quad_error: error, node_count: self.level(self.max_doublings)?.node_count })
            }
            other => other,
        }
    }

    /// `det [K(p_a, p_b)]`, the correlation function at the given sites.
    pub fn correlation(&self, sites: &[Site], tol: f64) -> Result<(f64, f64)> {
        self.correlation_with(sites, |p1, p2| self.k_int(p1, p2, tol))
    }

    /// Like `correlation`, built from `k_int_best` entries; the error bound stays honest when
    /// cancellation puts the rounding floor above `tol`.
    pub fn correlation_best(&self, sites: &[Site], tol: f64) -> Result<(f64, f64)> {
        self.correlation_with(sites, |p1, p2| self.k_int_best(p1, p2, tol))
    }

    fn correlation_with(&self, sites: &[Site], entry: impl Fn(Site, Site) -> Result<KernelValue> + Sync) -> Result<(f64, f64)> {
        let k = sites.len();
        let entries: Vec<KernelValue> =
            (0..k * k).into_par_iter().map(|idx| entry(sites[idx / k], sites[idx % k])).collect::<Result<_>>()?;
        let m = nalgebra::DMatrix::from_fn(k, k, |a, b| entries[a * k + b].value);
        let err: f64 = entries.iter().map(|e| e.quad_error).sum::<f64>()
            * entries.iter().map(|e| e.value.norm()).fold(1.0, f64::max).powi(k as i32 - 1)
            * k as f64;
        let det = if k == 0 { C::new(1.0, 0.0) } else { m.determinant() };
        Ok((det.re, err + det.im.abs()))
    }
}

/// `(value, error, rounding part of the error)`.
fn combine(s: Sums, shift: f64) -> (C, f64, f64) {
    let scale = shift.exp();
    let floor = 2.0 * f64::EPSILON * s.abs * scale;
    (s.fine * scale, (s.fine - s.coarse).norm() * scale + floor, floor)
}

/// A point of the rescaled lattice: level `t`, position `mu`, mark `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledPoint {
    pub t: usize,
    pub mu: f64,
    pub j: u8,
}

/// `col = 2 ell N - t`, `row = 2 floor(N tau + sqrt(N) mu) + j`.
pub fn site_of(cfg: &WeightConfig, sd: &SpectralData, p: ScaledPoint) -> Result<Site> {
    let n = cfg.n_param as f64;
    let size = cfg.size();
    if p.t == 0 || p.t > size || p.j > 1 {
        return Err(Error::IndexOutOfRange(format!("level {} or mark {} out of range", p.t, p.j)));
    }
    let y = (n * sd.tau + n.sqrt() * p.mu).floor();
    if y < 0.0 || y >= (cfg.ell * cfg.n_param) as f64 {
        return Err(Error::IndexOutOfRange(format!("mu = {} gives y = {y}", p.mu)));
    }
    Ok(Site { col: size - p.t, row: 2 * y as usize + p.j as usize })
}

/// `g(p1)/g(p2) sqrt(N) K_Int(p1, p2)` at rescaled points, to absolute tolerance `tol` on the rescaled value.
pub fn rescaled_kernel(ev: &KernelEvaluator, sd: &SpectralData, p1: ScaledPoint, p2: ScaledPoint, tol: f64) -> Result<KernelValue> {
    let cfg = ev.config();
    let s1 = site_of(cfg, sd, p1)?;
    let s2 = site_of(cfg, sd, p2)?;
    let n = cfg.n_param;
    let log_factor = log_gauge(cfg, sd, s1.col, s1.row, n) - log_gauge(cfg, sd, s2.col, s2.row, n) + 0.5 * (n as f64).ln();
    let factor = log_factor.exp();
    let kv = ev.k_int_best(s1, s2, tol / factor)?;
    let out = KernelValue { value: kv.value * factor, quad_error: kv.quad_error * factor, node_count: kv.node_count };
    if out.quad_error > tol {
        return Err(Error::QuadratureNotConverged { value: out.value, error: out.quad_error });
    }
    Ok(out)
}
