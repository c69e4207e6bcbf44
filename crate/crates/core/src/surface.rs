//! The two-sheeted spectral curve `w^2 - tr Phi(z) w + 1 = 0`: branch values, continuation
//! and the closed contours used by the kernel.
//!
//! Internally every point carries `wt = (z-1)^ell w`, which stays finite at `z = 1` on both
//! sheets and is what the kernel integrand consumes. Sheets are labelled by modulus:
//! `Plus` is the branch with `|w| > 1`. Continuing through a cut swaps the label, through
//! an oval keeps it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WeightConfig;
use crate::spectral::{block_product, SpectralData};

const MAX_HALVINGS: u32 = 40;
const CLOSURE_TOL: f64 = 1e-8;
/// Negative-axis crossings must keep this log-distance from every branch point.
const CROSSING_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sheet {
    Plus,
    Minus,
}

impl Sheet {
    pub fn tag(self) -> &'static str {
        match self {
            Sheet::Plus => "plus",
            Sheet::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub z: C,
    pub w: C,
}

fn scale_factor(cfg: &WeightConfig, z: C) -> C {
    (z - 1.0).powi(cfg.ell as i32)
}

/// Both scaled branches at `z`, larger modulus first, and `(z-1)^ell`.
fn scaled_branches(cfg: &WeightConfig, z: C) -> (C, C, C) {
    let s = scale_factor(cfg, z);
    let q = block_product(cfg, cfg.ell, z).trace();
    let disc = (q * q - s * s * 4.0).sqrt();
    let (a, b) = (q + disc, q - disc);
    let big = if a.norm() >= b.norm() { a * 0.5 } else { b * 0.5 };
    let small = if big.norm() > 0.0 { s * s / big } else { C::new(0.0, 0.0) };
    (big, small, s)
}

/// `(w_plus, w_minus)` over `z`; `w_plus` has the larger modulus.
pub fn w_branches(cfg: &WeightConfig, z: C) -> Result<(C, C)> {
    if z == C::new(0.0, 0.0) || z == C::new(1.0, 0.0) {
        return Err(Error::PoleAtZ { z });
    }
    let s = scale_factor(cfg, z);
    let q = block_product(cfg, cfg.ell, z).trace();
    if (q * q - s * s * 4.0).norm() <= 1e-9 * (q.norm_sqr() + 4.0 * s.norm_sqr()) {
        return Err(Error::BranchPoint { z });
    }
    let (big, small, s) = scaled_branches(cfg, z);
    let (wp, wm) = (big / s, small / s);
    if (wp.norm() - wm.norm()).abs() <= 1e-14 * wp.norm() && wm.re > wp.re {
        return Ok((wm, wp));
    }
    Ok((wp, wm))
}

/// Residual of the curve equation, relative to `max(1, |w|^2)`.
pub fn curve_residual(cfg: &WeightConfig, p: &SurfacePoint) -> f64 {
    let s = scale_factor(cfg, p.z);
    let tr = block_product(cfg, cfg.ell, p.z).trace() / s;
    (p.w * p.w - tr * p.w + 1.0).norm() / p.w.norm_sqr().max(1.0)
}

/// Continues `wt` from `z0` to `z1`, halving the step until the chosen root is at least
/// three times closer than the rejected one and has moved by less than half the root
/// separation. Distances are taken on `(z-1)^ell w`, which is smooth through `z = 1`
/// where `w` itself blows up on one sheet.
fn step_scaled(cfg: &WeightConfig, z0: C, wt0: C, z1: C, depth: u32) -> Result<C> {
    let (a, b, _) = scaled_branches(cfg, z1);
    let (da, db) = ((a - wt0).norm(), (b - wt0).norm());
    if 3.0 * da.min(db) <= da.max(db) && da.min(db) <= 0.5 * (a - b).norm() {
        return Ok(if da <= db { a } else { b });
    }
    if depth >= MAX_HALVINGS {
        return Err(Error::AmbiguousContinuation { z: z1 });
    }
    let mid = (z0 + z1) * 0.5;
    let wm = step_scaled(cfg, z0, wt0, mid, depth + 1)?;
    step_scaled(cfg, mid, wm, z1, depth + 1)
}

/// Analytic continuation of `start` through the points of `z_path` in order.
pub fn continue_along(cfg: &WeightConfig, z_path: &[C], start: SurfacePoint) -> Result<Vec<SurfacePoint>> {
    let residual = curve_residual(cfg, &start);
    if !(residual < 1e-8) {
        return Err(Error::NotOnCurve { residual });
    }
    let mut out = Vec::with_capacity(z_path.len());
    let (mut z, mut wt) = (start.z, start.w * scale_factor(cfg, start.z));
    for &z1 in z_path {
        if z1 == C::new(0.0, 0.0) || z1 == C::new(1.0, 0.0) {
            return Err(Error::PoleAtZ { z: z1 });
        }
        wt = step_scaled(cfg, z, wt, z1, 0)?;
        z = z1;
        out.push(SurfacePoint { z, w: wt / scale_factor(cfg, z) });
    }
    Ok(out)
}

/// One Gaussian-like bump on a loop of parameter period `T`:
/// `amp * exp(-((T/pi) sin(pi (phi - center) / T))^2 / width^2)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bump {
    pub amp: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum LogRadius {
    /// `c0 + c1 cos(phi/2) + c2 cos(phi)` on a double revolution.
    Trig([f64; 3]),
    Bumps {
        base: f64,
        bumps: Vec<Bump>,
    },
}

/// Radius profile of one closed loop `z = r(phi) e^{i phi}`, `phi` in `[0, 2 pi revolutions)`.
#[derive(Debug, Clone, Serialize)]
pub struct LoopSpec {
    pub revolutions: u32,
    pub start: Sheet,
    pub log_radius: LogRadius,
    /// Trapezoid nodes are uniform in `psi` and placed at `phi(psi)`; `None` is the identity.
    pub cluster: Option<Cluster>,
}

/// Periodic node map `phi = psi - a (T / 2 pi) sin(2 pi (psi - center) / T)`, `0 <= a < 1`.
/// Node density at `center` is `1 / (1 - a)` times the mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cluster {
    pub center: f64,
    pub strength: f64,
}

impl Cluster {
    /// Concentrates nodes on an arc of half-width about `width` around `center` on a loop of period `period`.
    pub fn around(center: f64, width: f64, period: f64) -> Self {
        let theta = 2.0 * PI * width / period;
        Cluster { center, strength: (1.0 - 0.5 * theta * theta).clamp(0.0, 0.95) }
    }

    /// `(phi, d phi / d psi)`.
    fn map(&self, psi: f64, period: f64) -> (f64, f64) {
        let arg = 2.0 * PI * (psi - self.center) / period;
        (psi - self.strength * period / (2.0 * PI) * arg.sin(), 1.0 - self.strength * arg.cos())
    }
}

impl LoopSpec {
    pub fn period(&self) -> f64 {
        2.0 * PI * self.revolutions as f64
    }

    /// `(log r, d log r / d phi)`.
    pub fn log_radius_at(&self, phi: f64) -> (f64, f64) {
        match &self.log_radius {
            LogRadius::Trig([c0, c1, c2]) => (c0 + c1 * (phi / 2.0).cos() + c2 * phi.cos(), -0.5 * c1 * (phi / 2.0).sin() - c2 * phi.sin()),
            LogRadius::Bumps { base, bumps } => {
                let t = self.period();
                let mut v = *base;
                let mut d = 0.0;
                for b in bumps {
                    let arg = PI * (phi - b.center) / t;
                    let s = t / PI * arg.sin();
                    let e = b.amp * (-(s * s) / (b.width * b.width)).exp();
                    v += e;
                    d += e * (-2.0 * s * arg.cos() / (b.width * b.width));
                }
                (v, d)
            }
        }
    }

    pub fn point(&self, phi: f64) -> (C, C) {
        let (lr, dlr) = self.log_radius_at(phi);
        let z = C::from_polar(lr.exp(), phi);
        (z, z * C::new(dlr, 1.0))
    }

    /// Node `k` of `n`: `(phi, z, dz/d psi)`.
    fn node(&self, k: usize, n: usize) -> (f64, C, C) {
        let psi = self.period() * k as f64 / n as f64;
        let (phi, dphi) = self.cluster.map_or((psi, 1.0), |c| c.map(psi, self.period()));
        let (z, dz) = self.point(phi);
        (phi, z, dz * dphi)
    }
}

/// Quadrature node on a loop.
#[derive(Debug, Clone, Copy)]
pub struct ContourNode {
    pub phi: f64,
    pub z: C,
    /// `(z-1)^ell w` on the tracked sheet.
    pub wt: C,
    /// `dz / d psi`, the derivative along the quadrature parameter.
    pub dz: C,
    pub sheet: Sheet,
}

impl ContourNode {
    pub fn w(&self, ell: usize) -> C {
        self.wt / (self.z - 1.0).powi(ell as i32)
    }
}

#[derive(Debug, Clone)]
pub struct ContourLoop {
    pub spec: LoopSpec,
    pub nodes: Vec<ContourNode>,
    /// Trapezoid weight `period / nodes`.
    pub step: f64,
    /// `|wt(end) - wt(start)|` after one full traversal, relative.
    pub closure: f64,
}

fn sheet_of(w: C) -> Sheet {
    if w.norm() >= 1.0 {
        Sheet::Plus
    } else {
        Sheet::Minus
    }
}

impl ContourLoop {
    pub fn build(cfg: &WeightConfig, spec: LoopSpec, nodes_per_rev: usize) -> Result<Self> {
        let n = nodes_per_rev * spec.revolutions as usize;
        let step = spec.period() / n as f64;
        let (phi0, z0, dz0) = spec.node(0, n);
        if z0.im.abs() > 1e-12 * z0.norm() || z0.re <= 0.0 || (z0.re - 1.0).abs() < 1e-12 {
            return Err(Error::ContourInfeasible(format!("loop must start on the positive axis away from 1, got {z0}")));
        }
        let (big, small, s) = scaled_branches(cfg, z0);
        let wt0 = match spec.start {
            Sheet::Plus => big,
            Sheet::Minus => small,
        };
        let mut nodes = Vec::with_capacity(n);
        nodes.push(ContourNode { phi: phi0, z: z0, wt: wt0, dz: dz0, sheet: sheet_of(wt0 / s) });
        let (mut z, mut wt) = (z0, wt0);
        for k in 1..=n {
            let (phi, z1, dz1) = if k == n { (phi0, z0, dz0) } else { spec.node(k, n) };
            wt = step_scaled(cfg, z, wt, z1, 0)?;
            z = z1;
            if k < n {
                let w = wt / scale_factor(cfg, z);
                nodes.push(ContourNode { phi, z, wt, dz: dz1, sheet: sheet_of(w) });
            }
        }
        let closure = (wt - wt0).norm() / wt0.norm().max(1.0);
        Ok(ContourLoop { spec, nodes, step, closure })
    }

    pub fn winding(&self) -> f64 {
        let n = self.nodes.len();
        (0..n).map(|k| (self.nodes[(k + 1) % n].z / self.nodes[k].z).arg()).sum::<f64>() / (2.0 * PI)
    }
}

/// A closed path on the curve made of one or more loops; integrals are sums over all loops.
#[derive(Debug, Clone)]
pub struct Contour {
    pub loops: Vec<ContourLoop>,
    pub nodes_per_rev: usize,
}

impl Contour {
    pub fn build(cfg: &WeightConfig, specs: &[LoopSpec], nodes_per_rev: usize) -> Result<Self> {
        let loops = specs.iter().map(|s| ContourLoop::build(cfg, s.clone(), nodes_per_rev)).collect::<Result<Vec<_>>>()?;
        Ok(Contour { loops, nodes_per_rev })
    }

    /// Same shape with twice the nodes.
    pub fn refined(&self, cfg: &WeightConfig) -> Result<Self> {
        let specs: Vec<LoopSpec> = self.loops.iter().map(|l| l.spec.clone()).collect();
        Contour::build(cfg, &specs, 2 * self.nodes_per_rev)
    }

    pub fn node_count(&self) -> usize {
        self.loops.iter().map(|l| l.nodes.len()).sum()
    }

    /// Every node with its trapezoid weight, loop by loop.
    pub fn nodes(&self) -> impl Iterator<Item = (&ContourNode, f64)> {
        self.loops.iter().flat_map(|l| l.nodes.iter().map(move |n| (n, l.step)))
    }

    /// Every other node of each loop with doubled weight: the next-coarser trapezoid rule.
    pub fn coarse_nodes(&self) -> impl Iterator<Item = (&ContourNode, f64)> {
        self.loops.iter().flat_map(|l| l.nodes.iter().step_by(2).map(move |n| (n, 2.0 * l.step)))
    }

    pub fn winding(&self) -> f64 {
        self.loops.iter().map(|l| l.winding()).sum()
    }

    /// CSV with columns `loop,angle,re_z,im_z,re_w,im_w,sheet`.
    pub fn to_csv(&self, ell: usize) -> String {
        let mut out = String::from("loop,angle,re_z,im_z,re_w,im_w,sheet\n");
        for (li, l) in self.loops.iter().enumerate() {
            for n in &l.nodes {
                let w = n.w(ell);
                let _ = writeln!(out, "{li},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}", n.phi, n.z.re, n.z.im, w.re, w.im, n.sheet.tag());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum ContourShape {
    /// Three-radius trigonometric double revolution; the small contour scales every radius by `inner_scale`.
    Smooth { r_big: f64, r_cut: Option<f64>, r_small: f64, inner_scale: f64 },
    /// Loops through the turning point with bumps of width `O(N^{-1/2})`, for the rescaled kernel.
    Saddle { n_param: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct ContourOptions {
    pub shape: ContourShape,
    pub nodes_per_rev: usize,
    pub min_gap: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            shape: ContourShape::Smooth { r_big: 2.5, r_cut: None, r_small: 0.5, inner_scale: 0.6 },
            nodes_per_rev: 512,
            min_gap: 0.01,
        }
    }
}

impl ContourOptions {
    pub fn smooth(inner_scale: f64) -> Self {
        ContourOptions { shape: ContourShape::Smooth { r_big: 2.5, r_cut: None, r_small: 0.5, inner_scale }, ..Default::default() }
    }

    pub fn saddle(n_param: usize) -> Self {
        ContourOptions { shape: ContourShape::Saddle { n_param }, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Crossing {
    pub contour: &'static str,
    pub radius: f64,
    pub negative_axis: bool,
    pub in_cut: bool,
    pub switched: bool,
}

/// Outcome of the topological checks on a contour pair.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub winding_small: f64,
    pub winding_large: f64,
    pub crossings: Vec<Crossing>,
    pub min_gap: f64,
    pub closure: f64,
}

#[derive(Debug, Clone)]
pub struct ContourPair {
    pub small: Contour,
    pub large: Contour,
    pub certificate: Certificate,
    pub options: ContourOptions,
}

impl ContourPair {
    pub fn refined(&self, cfg: &WeightConfig) -> Result<Self> {
        Ok(ContourPair {
            small: self.small.refined(cfg)?,
            large: self.large.refined(cfg)?,
            certificate: self.certificate.clone(),
            options: ContourOptions { nodes_per_rev: 2 * self.options.nodes_per_rev, ..self.options.clone() },
        })
    }
}

fn trig_profile(r_big: f64, r_cut: f64, r_small: f64) -> LogRadius {
    let (lb, lc, ls) = (r_big.ln(), r_cut.ln(), r_small.ln());
    let a = 0.5 * (lb + ls);
    LogRadius::Trig([0.5 * (a + lc), 0.5 * (lb - ls), 0.5 * (a - lc)])
}

fn double_rev(log_radius: LogRadius) -> LoopSpec {
    LoopSpec { revolutions: 2, start: Sheet::Plus, log_radius, cluster: None }
}

/// Small and large contours with the default smooth shape; `scale` is the radius ratio
/// between the small and the large contour.
pub fn make_contours(cfg: &WeightConfig, sd: &SpectralData, scale: f64) -> Result<ContourPair> {
    make_contours_with(cfg, sd, &ContourOptions::smooth(scale))
}

pub fn make_contours_with(cfg: &WeightConfig, sd: &SpectralData, opts: &ContourOptions) -> Result<ContourPair> {
    if !sd.genus_maximal {
        return Err(Error::GenusDegenerate);
    }
    match &opts.shape {
        ContourShape::Smooth { r_big, r_cut, r_small, inner_scale } => {
            if !(*inner_scale > 0.0 && *inner_scale <= 1.0) {
                return Err(Error::ContourInfeasible(format!("inner scale {inner_scale} outside (0, 1]")));
            }
            let z1 = sd.first_root_modulus();
            let r_cut = r_cut.unwrap_or(z1.map_or(0.5, |z| 0.8 * z));
            if let Some(z1) = z1 {
                if r_cut >= z1 {
                    return Err(Error::ContourInfeasible(format!("cut radius {r_cut} is not below |z_1| = {z1}")));
                }
            }
            if r_big * inner_scale <= 1.0 || *r_small >= 1.0 {
                return Err(Error::ContourInfeasible(format!(
                    "radii must satisfy r_big * scale > 1 > r_small (r_big = {r_big}, scale = {inner_scale}, r_small = {r_small})"
                )));
            }
            let large = [double_rev(trig_profile(*r_big, r_cut, *r_small))];
            let small = [double_rev(trig_profile(r_big * inner_scale, r_cut * inner_scale, r_small * inner_scale))];
            build_pair(cfg, sd, &small, &large, opts)
        }
        ContourShape::Saddle { n_param } => saddle_contours(cfg, sd, *n_param, opts),
    }
}

fn build_pair(cfg: &WeightConfig, sd: &SpectralData, small: &[LoopSpec], large: &[LoopSpec], opts: &ContourOptions) -> Result<ContourPair> {
    let small = Contour::build(cfg, small, opts.nodes_per_rev)?;
    let large = Contour::build(cfg, large, opts.nodes_per_rev)?;
    let certificate = certify(cfg, sd, &small, &large, opts.min_gap)?;
    Ok(ContourPair { small, large, certificate, options: opts.clone() })
}

fn saddle_contours(cfg: &WeightConfig, sd: &SpectralData, n: usize, opts: &ContourOptions) -> Result<ContourPair> {
    let scale = sd.sigma() * (n as f64).sqrt();
    let c_z = (2.0 / scale).min(0.5);
    let rho_z = (1.0 / scale).min(0.25);
    let kappa_l = (4.0 / scale).min(1.0);
    let kappa_s = (1.5 / scale).min(0.7);
    let (kappa_dip, r_dip) = (1.5, 0.6);
    let mut eps = (0.5 * (-(sd.log_b + 0.5) / sd.tau).exp()).min(0.3);
    if let Some(z1) = sd.first_root_modulus() {
        eps = eps.min(0.5 * z1);
    }
    let small = [LoopSpec {
        cluster: Some(Cluster::around(0.0, kappa_s, 4.0 * PI)),
        ..double_rev(LogRadius::Bumps {
            base: eps.ln(),
            bumps: vec![Bump { amp: ((1.0 + rho_z) / eps).ln(), center: 0.0, width: kappa_s }],
        })
    }];

    let branch: Vec<f64> = sd.roots.iter().skip(1).map(|r| r.abs()).collect();
    let mut last_err = Error::ContourInfeasible("no admissible crossing radius".into());
    for k in 0..30 {
        let offset = 0.01 * ((k + 1) / 2) as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
        let r = 1.0 + offset;
        if branch.iter().any(|z| (r / z).ln().abs() <= 0.05) || r <= r_dip + 0.05 {
            continue;
        }
        let large: Vec<LoopSpec> = if sd.radius_in_cut(r) {
            vec![LoopSpec {
                cluster: Some(Cluster::around(0.0, kappa_l, 4.0 * PI)),
                ..double_rev(LogRadius::Bumps {
                    base: r.ln(),
                    bumps: vec![
                        Bump { amp: (1.0 + c_z).ln(), center: 0.0, width: kappa_l },
                        Bump { amp: (r_dip / r).ln(), center: 2.0 * PI, width: kappa_dip },
                    ],
                })
            }]
        } else {
            vec![
                LoopSpec {
                    revolutions: 1,
                    start: Sheet::Plus,
                    log_radius: LogRadius::Bumps { base: r.ln(), bumps: vec![Bump { amp: (1.0 + c_z).ln(), center: 0.0, width: kappa_l }] },
                    cluster: Some(Cluster::around(0.0, kappa_l, 2.0 * PI)),
                },
                LoopSpec {
                    revolutions: 1,
                    start: Sheet::Minus,
                    log_radius: LogRadius::Bumps {
                        base: r.ln(),
                        bumps: vec![Bump { amp: (r_dip / r).ln(), center: 0.0, width: kappa_dip }],
                    },
                    cluster: None,
                },
            ]
        };
        match build_pair(cfg, sd, &small, &large, opts) {
            Ok(pair) => return Ok(pair),
            Err(e @ (Error::ContourNotCertified(_) | Error::ContourInfeasible(_))) => last_err = e,
            Err(e) => return Err(e),
        }
    }
    Err(last_err)
}

fn axis_crossings(sd: &SpectralData, contour: &Contour, name: &'static str) -> Vec<Crossing> {
    let mut out = Vec::new();
    for l in &contour.loops {
        let nodes = &l.nodes;
        let n = nodes.len();
        let sign = |k: usize| {
            let z = nodes[k % n].z;
            if z.im.abs() <= 1e-12 * z.norm() {
                0.0
            } else {
                z.im.signum()
            }
        };
        // Start from a node off the axis so every crossing is seen exactly once.
        let Some(first) = (0..n).find(|&k| sign(k) != 0.0) else { continue };
        let mut a = first;
        let mut k = first + 1;
        while k <= first + n {
            if sign(k) == 0.0 {
                k += 1;
                continue;
            }
            if sign(k) != sign(a) {
                let (za, zb) = (nodes[a % n].z, nodes[k % n].z);
                let t = za.im / (za.im - zb.im);
                let zc = za + (zb - za) * t;
                let radius = zc.norm();
                let negative_axis = zc.re < 0.0;
                out.push(Crossing {
                    contour: name,
                    radius,
                    negative_axis,
                    in_cut: negative_axis && sd.radius_in_cut(radius),
                    switched: nodes[a % n].sheet != nodes[k % n].sheet,
                });
            }
            a = k;
            k += 1;
        }
    }
    out
}

fn not_certified(msg: String) -> Error {
    Error::ContourNotCertified(msg)
}

/// Re-derives the topological certificate of a contour pair from its nodes.
pub fn certify(cfg: &WeightConfig, sd: &SpectralData, small: &Contour, large: &Contour, min_gap: f64) -> Result<Certificate> {
    let mut closure = 0.0_f64;
    for (name, c) in [("small", small), ("large", large)] {
        let winding = c.winding();
        if (winding - 2.0).abs() > 1e-6 {
            return Err(not_certified(format!("{name} contour winds {winding} times around 0")));
        }
        for l in &c.loops {
            let end = ContourLoop::build(cfg, l.spec.clone(), c.nodes_per_rev)?;
            closure = closure.max(end.closure).max(l.closure);
            for node in &l.nodes {
                let p = SurfacePoint { z: node.z, w: node.w(cfg.ell) };
                let r = curve_residual(cfg, &p);
                if !(r < 1e-8) {
                    return Err(Error::NotOnCurve { residual: r });
                }
            }
        }
    }
    if closure > CLOSURE_TOL {
        return Err(not_certified(format!("continuation does not close (mismatch {closure:e})")));
    }

    let z1 = sd.first_root_modulus();
    let mut crossings = axis_crossings(sd, small, "small");
    crossings.extend(axis_crossings(sd, large, "large"));
    let mut plus_outside = [false, false];
    for c in &crossings {
        if c.negative_axis {
            if let Some(z) = sd.roots.iter().skip(1).find(|z| (c.radius / z.abs()).ln().abs() < CROSSING_MARGIN) {
                return Err(not_certified(format!("{} contour crosses the axis at branch point {z}", c.contour)));
            }
            if c.in_cut != c.switched {
                return Err(not_certified(format!(
                    "{} contour crosses at radius {} (in cut: {}) but sheet switch is {}",
                    c.contour, c.radius, c.in_cut, c.switched
                )));
            }
            if c.contour == "small" && z1.is_some_and(|z| c.radius >= z) {
                return Err(not_certified(format!("small contour crosses outside the cut (z_1, 0) at {}", c.radius)));
            }
        } else if c.switched {
            return Err(not_certified(format!("{} contour switches sheet on the positive axis", c.contour)));
        }
    }
    for l in small.loops.iter().chain(&large.loops) {
        for node in &l.nodes {
            // Positive-axis passages: enclose q_inf, exclude q_0.
            if node.z.re > 0.0 && node.z.im.abs() <= 1e-12 * node.z.norm() {
                let r = node.z.re;
                let ok = if r > 1.0 { node.sheet == Sheet::Plus } else { node.sheet == Sheet::Minus };
                if !ok {
                    return Err(not_certified(format!("positive-axis passage at r = {r} on the {:?} sheet", node.sheet)));
                }
            }
        }
    }
    for (idx, c) in [small, large].iter().enumerate() {
        plus_outside[idx] = c.loops.iter().any(|l| {
            let z = l.nodes[0].z;
            z.re > 1.0 && l.nodes[0].sheet == Sheet::Plus
        });
    }
    if !plus_outside.iter().all(|&b| b) {
        return Err(not_certified("a contour does not enclose q_inf".into()));
    }

    let gap = radial_gap(small, large, cfg.ell);
    if !(gap >= min_gap) {
        return Err(Error::ContourInfeasible(format!("same-sheet radial gap {gap} below required {min_gap}")));
    }
    Ok(Certificate { winding_small: small.winding(), winding_large: large.winding(), crossings, min_gap: gap, closure })
}

/// Smallest `r_large - r_small` over nodes at the same angle on the same sheet.
fn radial_gap(small: &Contour, large: &Contour, ell: usize) -> f64 {
    let per_rev = |c: &Contour| c.nodes_per_rev;
    let mut gap = f64::INFINITY;
    let ratio = per_rev(large) / per_rev(small).max(1);
    for sl in &small.loops {
        for (k, sn) in sl.nodes.iter().enumerate() {
            if (sn.w(ell).norm() - 1.0).abs() < 1e-9 {
                continue;
            }
            let slot = k % per_rev(small);
            for ll in &large.loops {
                let m = per_rev(large);
                let mut idx = (slot * ratio) % m;
                while idx < ll.nodes.len() {
                    let ln = &ll.nodes[idx];
                    if ln.sheet == sn.sheet {
                        gap = gap.min(ln.z.norm() - sn.z.norm());
                    }
                    idx += m;
                }
            }
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_periodic(a: f64) -> (WeightConfig, SpectralData) {
        let cfg = WeightConfig::two_periodic(a, 1).unwrap();
        let sd = SpectralData::new(&cfg).unwrap();
        (cfg, sd)
    }

    #[test]
    fn uniform_branches_at_four() {
        let cfg = WeightConfig::uniform(1, 1).unwrap();
        let (wp, wm) = w_branches(&cfg, C::new(4.0, 0.0)).unwrap();
        assert!((wp - 3.0).norm() < 1e-13 && (wm - 1.0 / 3.0).norm() < 1e-13);
        assert!(matches!(w_branches(&cfg, C::new(0.0, 0.0)), Err(Error::PoleAtZ { .. })));
    }

    #[test]
    fn branch_point_is_rejected() {
        let (cfg, sd) = two_periodic(0.5);
        let z = C::new(sd.roots[1], 0.0);
        assert!(matches!(w_branches(&cfg, z), Err(Error::BranchPoint { .. })));
    }

    fn circle(center: C, radius: f64, turns: usize) -> Vec<C> {
        let n = 400 * turns;
        (1..=n).map(|k| center + C::from_polar(radius, 2.0 * PI * k as f64 / 400.0)).collect()
    }

    #[test]
    fn monodromy() {
        let cfg = WeightConfig::uniform(1, 1).unwrap();
        let start_z = C::new(0.3, 0.0);
        let (wp, wm) = w_branches(&cfg, start_z).unwrap();
        let start = SurfacePoint { z: start_z, w: wp };
        let around_zero: Vec<C> = circle(C::new(0.0, 0.0), 0.3, 1);
        let end = continue_along(&cfg, &around_zero, start).unwrap();
        assert!((end.last().unwrap().w - wm).norm() < 1e-8);
        let twice = continue_along(&cfg, &circle(C::new(0.0, 0.0), 0.3, 2), start).unwrap();
        assert!((twice.last().unwrap().w - wp).norm() < 1e-8);
        let z2 = C::new(2.1, 0.0);
        let (wp2, _) = w_branches(&cfg, z2).unwrap();
        let around_two = circle(C::new(2.0, 0.0), 0.1, 1);
        let end = continue_along(&cfg, &around_two, SurfacePoint { z: z2, w: wp2 }).unwrap();
        assert!((end.last().unwrap().w - wp2).norm() < 1e-8);
    }

    #[test]
    fn smooth_pairs_certify() {
        for cfg in [WeightConfig::uniform(1, 1).unwrap(), WeightConfig::two_periodic(0.5, 1).unwrap()] {
            let sd = SpectralData::new(&cfg).unwrap();
            let pair = make_contours(&cfg, &sd, 0.8).unwrap();
            assert!((pair.certificate.winding_large - 2.0).abs() < 1e-9);
            let cuts = pair.certificate.crossings.iter().filter(|c| c.contour == "large" && c.in_cut).count();
            assert_eq!(cuts, 2);
            if let Some(z1) = sd.first_root_modulus() {
                assert!(pair.certificate.crossings.iter().filter(|c| c.negative_axis).all(|c| c.radius < z1));
            }
            certify(&cfg, &sd, &pair.small, &pair.large, 0.01).unwrap();
        }
    }

    #[test]
    fn infeasible_gap() {
        let (cfg, sd) = two_periodic(0.5);
        let opts = ContourOptions { min_gap: 5.0, ..Default::default() };
        assert!(matches!(make_contours_with(&cfg, &sd, &opts), Err(Error::ContourInfeasible(_))));
        assert!(matches!(make_contours(&cfg, &sd, 1.0), Err(Error::ContourInfeasible(_))));
    }

    #[test]
    fn degenerate_genus_refused() {
        let cfg = WeightConfig::uniform(2, 1).unwrap();
        let sd = SpectralData::new(&cfg).unwrap();
        assert_eq!(make_contours(&cfg, &sd, 0.8).unwrap_err(), Error::GenusDegenerate);
    }

    #[test]
    fn saddle_pairs_certify() {
        for a in [0.5, 0.7] {
            let (cfg, sd) = two_periodic(a);
            for n in [16, 64, 256] {
                let pair = make_contours_with(&cfg, &sd, &ContourOptions::saddle(n)).unwrap();
                assert!((pair.large.winding() - 2.0).abs() < 1e-9);
            }
        }
    }
}
