//! Finite-size checks of the turning-point limit.
//!
//! `kernel_convergence` tabulates the rescaled contour-integral kernel against the marked
//! GUE-corners kernel over a list of `N`; `process_convergence` compares shuffling statistics
//! with the marked and thinned corners process. Every verdict is recorded in the report, no
//! row passes silently.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::gue::{corners_sampler, k_gue};
use crate::kernel::{rescaled_kernel, KernelEvaluator, ScaledPoint};
use crate::model::WeightConfig;
use crate::sampler::{batch_stats, RNG_ALGORITHM};
use crate::spectral::{nu, theta, SpectralData};
use crate::stats::{ks_normal_smoothed, ks_two_sample_smoothed, sorted};
use crate::surface::{make_contours_with, ContourOptions};

/// Everything needed to rerun a report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub config: WeightConfig,
    pub seeds: Vec<u64>,
    pub rng: &'static str,
    pub tolerances: BTreeMap<String, f64>,
    /// Quadrature nodes per `N` (kernel reports) or samples (process reports).
    pub node_counts: BTreeMap<usize, usize>,
}

impl Provenance {
    fn new(config: &WeightConfig) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            seeds: Vec::new(),
            rng: RNG_ALGORITHM,
            tolerances: BTreeMap::new(),
            node_counts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Failed,
    /// Equal positions: only boundedness in `N` is asserted.
    BoundedOnly,
}

impl Status {
    pub fn tag(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Failed => "FAILED",
            Status::BoundedOnly => "BOUNDED",
        }
    }
}

/// One `(p1, p2)` pair at one `N`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelRow {
    pub n: usize,
    pub p1: ScaledPoint,
    pub p2: ScaledPoint,
    pub finite_value: f64,
    pub limit_value: f64,
    /// The limit at the positions the lattice realizes, `(floor(N tau + sqrt N mu) - N tau) / sqrt N`.
    /// Diagnostic only: the gap to `limit_value` is the rounding part of `abs_err`.
    pub lattice_limit_value: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub quad_error: f64,
    pub node_count: usize,
}

/// Verdict for one pair across the whole `N` list.
#[derive(Debug, Clone, Serialize)]
pub struct PairVerdict {
    pub p1: ScaledPoint,
    pub p2: ScaledPoint,
    pub status: Status,
    pub reason: String,
}

/// `finite(j2 = 1) / finite(j2 = 0)` against `theta / (1 - theta)` at the largest `N`.
#[derive(Debug, Clone, Serialize)]
pub struct FlipRow {
    pub p1: ScaledPoint,
    pub t2: usize,
    pub mu2: f64,
    pub ratios: Vec<f64>,
    pub target: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProcessRow {
    pub name: String,
    pub empirical: f64,
    pub predicted: f64,
    /// `None` for distance statistics.
    pub stderr: Option<f64>,
    pub z_score: Option<f64>,
    /// Bound on `|z|` or on the distance.
    pub threshold: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub provenance: Provenance,
    pub kernel_rows: Vec<KernelRow>,
    pub verdicts: Vec<PairVerdict>,
    pub flips: Vec<FlipRow>,
    pub process_rows: Vec<ProcessRow>,
}

/// Acceptance thresholds of the kernel table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelCriteria {
    /// Allowed growth of `abs_err` between consecutive `N`.
    pub slack: f64,
    pub final_rel_err: f64,
    /// Allowed absolute deviation of the flip ratio from `theta / (1 - theta)`.
    pub flip_tol: f64,
    /// Bound on `|finite_value|` for equal-position rows.
    pub bound: f64,
}

impl Default for KernelCriteria {
    fn default() -> Self {
        KernelCriteria { slack: 0.2, final_rel_err: 0.05, flip_tol: 0.05, bound: 10.0 }
    }
}

/// All points `(t, mu, j)` of the product grid.
pub fn grid(levels: &[usize], mus: &[f64], marks: &[u8]) -> Vec<ScaledPoint> {
    let mut out = Vec::new();
    for &t in levels {
        for &mu in mus {
            for &j in marks {
                out.push(ScaledPoint { t, mu, j });
            }
        }
    }
    out
}

/// All ordered pairs of grid points.
pub fn all_pairs(points: &[ScaledPoint]) -> Vec<(ScaledPoint, ScaledPoint)> {
    points.iter().flat_map(|&a| points.iter().map(move |&b| (a, b))).collect()
}

/// `nu(t2, j2) K_GUE(t1, mu1 / sigma; t2, mu2 / sigma) / sigma`, the limit of the rescaled kernel.
pub fn limit_value(cfg: &WeightConfig, sigma: f64, p1: ScaledPoint, p2: ScaledPoint, tol: f64) -> Result<f64> {
    let kv = k_gue(p1.t, p1.mu / sigma, p2.t, p2.mu / sigma, tol)?;
    Ok(nu(cfg, p2.t as i64, p2.j) / sigma * kv.value.re)
}

/// Rescaled kernel versus `nu(t2, j2) K_GUE(t1, mu1 / sigma; t2, mu2 / sigma) / sigma` for every pair and `N`.
///
/// `cfg` supplies the weights; its own `N` is ignored. Entries are evaluated on the saddle contours
/// to absolute tolerance `tol` on the rescaled value.
pub fn kernel_convergence(
    cfg: &WeightConfig,
    pairs: &[(ScaledPoint, ScaledPoint)],
    n_list: &[usize],
    tol: f64,
    criteria: KernelCriteria,
) -> Result<ConvergenceReport> {
    let mut provenance = Provenance::new(cfg);
    provenance.tolerances.insert("quadrature".into(), tol);
    provenance.tolerances.insert("slack".into(), criteria.slack);
    provenance.tolerances.insert("final_rel_err".into(), criteria.final_rel_err);
    provenance.tolerances.insert("flip_tol".into(), criteria.flip_tol);
    provenance.tolerances.insert("bound".into(), criteria.bound);
    let mut rows = Vec::new();
    for &n in n_list {
        let c = cfg.with_n(n);
        let sd = SpectralData::new(&c)?;
        let sigma = sd.sigma();
        let ev = KernelEvaluator::new(&c, &sd, make_contours_with(&c, &sd, &ContourOptions::saddle(n))?)?;
        let batch: Vec<KernelRow> = pairs
            .par_iter()
            .map(|&(p1, p2)| {
                let kv = rescaled_kernel(&ev, &sd, p1, p2, tol)?;
                let limit = limit_value(&c, sigma, p1, p2, 0.1 * tol)?;
                let lattice = |p: ScaledPoint| {
                    let nf = n as f64;
                    ScaledPoint { mu: ((nf * sd.tau + nf.sqrt() * p.mu).floor() - nf * sd.tau) / nf.sqrt(), ..p }
                };
                let lattice_limit = limit_value(&c, sigma, lattice(p1), lattice(p2), 0.1 * tol)?;
                let abs_err = (kv.value.re - limit).abs();
                Ok(KernelRow {
                    n,
                    p1,
                    p2,
                    finite_value: kv.value.re,
                    limit_value: limit,
                    lattice_limit_value: lattice_limit,
                    abs_err,
                    rel_err: abs_err / limit.abs().max(f64::MIN_POSITIVE),
                    quad_error: kv.quad_error,
                    node_count: kv.node_count,
                })
            })
            .collect::<Result<_>>()?;
        let nodes = batch.iter().map(|r| r.node_count).max().unwrap_or(0);
        provenance.node_counts.insert(n, nodes);
        rows.extend(batch);
    }
    let series = |p1: ScaledPoint, p2: ScaledPoint| -> Vec<&KernelRow> {
        n_list.iter().filter_map(|&n| rows.iter().find(|r| r.n == n && r.p1 == p1 && r.p2 == p2)).collect()
    };
    let verdicts = pairs
        .iter()
        .map(|&(p1, p2)| {
            let s = series(p1, p2);
            let (status, reason) = judge(&s, p1.mu == p2.mu, criteria);
            PairVerdict { p1, p2, status, reason }
        })
        .collect();
    let mut flips = Vec::new();
    for &(p1, p2) in pairs.iter().filter(|(a, b)| b.j == 1 && a.mu != b.mu) {
        let p0 = ScaledPoint { j: 0, ..p2 };
        let (up, down) = (series(p1, p2), series(p1, p0));
        if up.len() != n_list.len() || down.len() != n_list.len() {
            continue;
        }
        let ratios: Vec<f64> = up.iter().zip(&down).map(|(a, b)| a.finite_value / b.finite_value).collect();
        let th = theta(cfg, p2.t as i64);
        let target = th / (1.0 - th);
        let last = *ratios.last().unwrap_or(&f64::NAN);
        let status = if (last - target).abs() < criteria.flip_tol { Status::Pass } else { Status::Failed };
        flips.push(FlipRow { p1, t2: p2.t, mu2: p2.mu, ratios, target, status });
    }
    Ok(ConvergenceReport { provenance, kernel_rows: rows, verdicts, flips, process_rows: Vec::new() })
}

fn judge(series: &[&KernelRow], equal_mu: bool, c: KernelCriteria) -> (Status, String) {
    if equal_mu {
        let worst = series.iter().map(|r| r.finite_value.abs()).fold(0.0, f64::max);
        return if worst < c.bound {
            (Status::BoundedOnly, format!("max |value| {worst:.3e} < {}", c.bound))
        } else {
            (Status::Failed, format!("max |value| {worst:.3e} exceeds {}", c.bound))
        };
    }
    let Some(last) = series.last() else {
        return (Status::Failed, "no rows".into());
    };
    for w in series.windows(2) {
        if w[1].abs_err > (1.0 + c.slack) * w[0].abs_err {
            return (
                Status::Failed,
                format!("abs_err grew from {:.3e} (N={}) to {:.3e} (N={})", w[0].abs_err, w[0].n, w[1].abs_err, w[1].n),
            );
        }
    }
    if !(last.rel_err < c.final_rel_err) {
        return (Status::Failed, format!("final rel_err {:.3e} at N={}", last.rel_err, last.n));
    }
    (Status::Pass, format!("final rel_err {:.3e} at N={}", last.rel_err, last.n))
}

/// Thresholds of the Monte Carlo comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProcessCriteria {
    pub ks: f64,
    pub mark_z: f64,
    pub independence_z: f64,
    pub thinned_z: f64,
    pub max_level: usize,
}

impl Default for ProcessCriteria {
    fn default() -> Self {
        ProcessCriteria { ks: 0.05, mark_z: 3.0, independence_z: 4.0, thinned_z: 3.0, max_level: 3 }
    }
}

fn z_row(name: String, empirical: f64, predicted: f64, stderr: f64, threshold: f64) -> ProcessRow {
    let z = (empirical - predicted) / stderr.max(f64::MIN_POSITIVE);
    ProcessRow {
        name,
        empirical,
        predicted,
        stderr: Some(stderr),
        z_score: Some(z),
        threshold,
        status: if z.abs() < threshold { Status::Pass } else { Status::Failed },
    }
}

fn distance_row(name: &str, d: f64, threshold: f64) -> ProcessRow {
    ProcessRow {
        name: name.into(),
        empirical: d,
        predicted: 0.0,
        stderr: None,
        z_score: None,
        threshold,
        status: if d < threshold { Status::Pass } else { Status::Failed },
    }
}

/// Shuffling statistics at `cfg` (with its own `N`) against the marked GUE-corners predictions.
///
/// Streams `0..count` of `seed` drive the diamond samples; the reference corners samples use
/// `seed + 1`.
pub fn process_convergence(cfg: &WeightConfig, count: u64, seed: u64, criteria: ProcessCriteria) -> Result<ConvergenceReport> {
    let sd = SpectralData::new(cfg)?;
    let sigma = sd.sigma();
    let acc = batch_stats(cfg, sd.tau, sigma, seed, count, &[], criteria.max_level)?;
    let rep = acc.report();
    let mut rows = Vec::new();
    // One lattice step of u in rescaled units; KS distances are continuity-corrected with the
    // lattice spacing of each statistic.
    let step = 1.0 / (2.0 * sigma * (cfg.n_param as f64).sqrt());

    rows.push(distance_row("level-1 KS vs N(0,1)", ks_normal_smoothed(&rep.level1_sorted, 0.5 * step), criteria.ks));

    for (idx, est) in rep.mark_frequency.iter().enumerate() {
        let t = idx + 1;
        rows.push(z_row(format!("mark frequency level {t}"), est.value, theta(cfg, t as i64), est.stderr, criteria.mark_z));
    }

    let jm = rep.joint_mark;
    let z = jm.z_score();
    rows.push(ProcessRow {
        name: "joint mark level 1 / level 2 (lower)".into(),
        empirical: jm.joint11.value,
        predicted: jm.first.value * jm.second.value,
        stderr: Some((jm.joint11.value - jm.first.value * jm.second.value) / z),
        z_score: Some(z),
        threshold: criteria.independence_z,
        status: if z.abs() < criteria.independence_z { Status::Pass } else { Status::Failed },
    });

    // Level t carries t particles, each kept independently with probability theta(t).
    let samples = rep.samples.max(1) as f64;
    for t in 1..=criteria.max_level.min(acc.level_marked.len()) {
        let th = theta(cfg, t as i64);
        let mean = acc.level_marked[t - 1] as f64 / samples;
        let stderr = (t as f64 * th * (1.0 - th) / samples).sqrt();
        rows.push(z_row(format!("thinned count level {t}"), mean, t as f64 * th, stderr, criteria.thinned_z));
    }
    // Marked level-1 particles sit on odd u only.
    rows.push(distance_row("thinned level-1 KS vs N(0,1)", ks_normal_smoothed(&rep.level1_marked_sorted, step), criteria.ks));

    let theta_fn = |t: usize, _: f64| theta(cfg, t as i64);
    let reference: Vec<(f64, f64)> =
        corners_sampler(2, &theta_fn, seed.wrapping_add(1), count).map(|s| (s.levels[1][0], s.levels[1][1])).collect();
    let gaps = |v: &[(f64, f64)]| sorted(v.iter().map(|p| p.1 - p.0).collect());
    let centers = |v: &[(f64, f64)]| sorted(v.iter().map(|p| 0.5 * (p.0 + p.1)).collect());
    let gap_ks = ks_two_sample_smoothed(&gaps(&acc.level2), 0.5 * step, &gaps(&reference));
    let center_ks = ks_two_sample_smoothed(&centers(&acc.level2), 0.25 * step, &centers(&reference));
    rows.push(distance_row("level-2 gap KS vs corners", gap_ks, criteria.ks));
    rows.push(distance_row("level-2 center KS vs corners", center_ks, criteria.ks));

    let mut provenance = Provenance::new(cfg);
    provenance.seeds = vec![seed, seed.wrapping_add(1)];
    provenance.node_counts.insert(cfg.n_param, count as usize);
    provenance.tolerances.insert("ks".into(), criteria.ks);
    provenance.tolerances.insert("mark_z".into(), criteria.mark_z);
    provenance.tolerances.insert("independence_z".into(), criteria.independence_z);
    provenance.tolerances.insert("thinned_z".into(), criteria.thinned_z);
    Ok(ConvergenceReport { provenance, kernel_rows: Vec::new(), verdicts: Vec::new(), flips: Vec::new(), process_rows: rows })
}

impl ConvergenceReport {
    /// True iff some verdict, flip or process row is `Failed`.
    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Failed)
            || self.flips.iter().any(|f| f.status == Status::Failed)
            || self.process_rows.iter().any(|r| r.status == Status::Failed)
    }

    /// Kernel rows as CSV, 17 significant digits.
    pub fn kernel_csv(&self) -> String {
        let mut out =
            String::from("N,t1,mu1,j1,t2,mu2,j2,finite_value,limit_value,lattice_limit_value,abs_err,rel_err,quad_error,node_count\n");
        for r in &self.kernel_rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.n,
                r.p1.t,
                r.p1.mu,
                r.p1.j,
                r.p2.t,
                r.p2.mu,
                r.p2.j,
                r.finite_value,
                r.limit_value,
                r.lattice_limit_value,
                r.abs_err,
                r.rel_err,
                r.quad_error,
                r.node_count
            );
        }
        out
    }

    /// Process rows as CSV; empty fields for distances.
    pub fn process_csv(&self) -> String {
        let mut out = String::from("statistic,empirical,predicted,stderr,z_score,threshold,status\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.process_rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{},{},{:.16e},{}",
                r.name,
                r.empirical,
                r.predicted,
                opt(r.stderr),
                opt(r.z_score),
                r.threshold,
                r.status.tag()
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let count = |s: Status| self.verdicts.iter().filter(|v| v.status == s).count();
        if !self.verdicts.is_empty() {
            let _ = writeln!(
                out,
                "kernel pairs: {} pass, {} bounded-only, {} FAILED",
                count(Status::Pass),
                count(Status::BoundedOnly),
                count(Status::Failed)
            );
            for v in self.verdicts.iter().filter(|v| v.status == Status::Failed) {
                let _ =
                    writeln!(out, "  FAILED ({}, {}, {}) -> ({}, {}, {}): {}", v.p1.t, v.p1.mu, v.p1.j, v.p2.t, v.p2.mu, v.p2.j, v.reason);
            }
        }
        for f in &self.flips {
            let _ = writeln!(
                out,
                "flip ({}, {}, {}) -> ({}, {}): ratios {:?} target {:.6} {}",
                f.p1.t,
                f.p1.mu,
                f.p1.j,
                f.t2,
                f.mu2,
                f.ratios.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>(),
                f.target,
                f.status.tag()
            );
        }
        for r in &self.process_rows {
            let z = r.z_score.map(|z| format!(" z {z:+.3}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{}: empirical {:.6} predicted {:.6}{} (threshold {}) {}",
                r.name,
                r.empirical,
                r.predicted,
                z,
                r.threshold,
                r.status.tag()
            );
        }
        let _ = writeln!(out, "overall: {}", if self.failed() { "FAILED" } else { "PASS" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, abs_err: f64, limit: f64) -> KernelRow {
        let p = ScaledPoint { t: 1, mu: 0.0, j: 0 };
        KernelRow {
            n,
            p1: p,
            p2: p,
            finite_value: limit + abs_err,
            limit_value: limit,
            lattice_limit_value: limit,
            abs_err,
            rel_err: abs_err / limit,
            quad_error: 0.0,
            node_count: 0,
        }
    }

    #[test]
    fn judging_rules() {
        let c = KernelCriteria::default();
        let (a, b, d) = (row(16, 0.1, 1.0), row(64, 0.11, 1.0), row(256, 0.04, 1.0));
        assert_eq!(judge(&[&a, &b, &d], false, c).0, Status::Pass);
        let b2 = row(64, 0.13, 1.0);
        assert_eq!(judge(&[&a, &b2, &d], false, c).0, Status::Failed);
        let d2 = row(256, 0.06, 1.0);
        assert_eq!(judge(&[&a, &b, &d2], false, c).0, Status::Failed);
        assert_eq!(judge(&[&a, &b2, &d2], true, c).0, Status::BoundedOnly);
    }

    #[test]
    fn grid_and_pairs() {
        let g = grid(&[1, 2], &[-1.0, 0.4], &[0, 1]);
        assert_eq!(g.len(), 8);
        assert_eq!(all_pairs(&g).len(), 64);
    }
}
