//! Exact sampling by weighted domino shuffling, and the marked interlacing particle system.
//!
//! A diamond of size `k` is tiled by `k^2` cells; cell `(i, j)` is the face centred at
//! `(2i+1, 2j+1)` and owns exactly one edge of each kind:
//! `S` = black `(i, j)` to its south white, `W` = black `(i, j)` to its west white,
//! `E` = black `(i+1, j)` to its east white, `N` = black `(i+1, j)` to its north white.
//!
//! Stage weights come from the final weights by repeated urban renewal: with
//! `D = S N + E W`, the stage-`(k-1)` cell `(i, j)` gets
//! `S(i, j)/D(i, j)`, `E(i+1, j)/D(i+1, j)`, `W(i, j+1)/D(i, j+1)`, `N(i+1, j+1)/D(i+1, j+1)`.
//! All stage tables keep the `ell x 2` periodicity of the final weights.
//!
//! Growing from stage `k-1` to `k`, a dimer of kind `T` in old cell `(i, j)` slides to new cell
//! `(i, j) + offset(T)` with offsets `S (0,0)`, `E (1,0)`, `W (0,1)`, `N (1,1)`, keeping its kind.
//! Two dimers landing in one cell (`S+N` or `E+W`) annihilate and leave it empty. A cell that
//! received nothing gets `S+N` with probability `S N / (S N + E W)` of the stage-`k` weights,
//! `E+W` otherwise.
//!
//! RNG: `ChaCha8Rng` seeded by `seed_from_u64(seed)`, one stream per sample (`set_stream(index)`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Diamond, EdgeKind, WeightConfig};

/// Identifier recorded in every artifact produced from samples.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), set_stream(sample index)";

const BIT_S: u8 = 1;
const BIT_E: u8 = 2;
const BIT_W: u8 = 4;
const BIT_N: u8 = 8;

/// One byte per black vertex (index `i n + j`): the `EdgeKind::code` of its dimer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DimerCover {
    pub size: usize,
    pub kinds: Vec<u8>,
}

impl DimerCover {
    pub fn from_kinds(size: usize, kinds: Vec<u8>) -> Self {
        DimerCover { size, kinds }
    }

    pub fn kind(&self, bi: usize, bj: usize) -> Option<EdgeKind> {
        EdgeKind::from_code(self.kinds[bi * self.size + bj])
    }

    /// Checks that the cover is a perfect matching of the size-`size` diamond.
    pub fn validate(&self, d: &Diamond) -> Result<()> {
        let n = self.size;
        if d.size() != n || self.kinds.len() != d.vertex_count() {
            return Err(Error::MalformedCover(format!("cover of size {n} does not fit diamond of size {}", d.size())));
        }
        let mut used = vec![false; d.vertex_count()];
        for (b, &code) in self.kinds.iter().enumerate() {
            let (bi, bj) = d.black_at(b);
            let kind =
                EdgeKind::from_code(code).ok_or_else(|| Error::MalformedCover(format!("black ({bi}, {bj}) has kind code {code}")))?;
            let (wi, wj) = d
                .partner(bi, bj, kind)
                .ok_or_else(|| Error::MalformedCover(format!("black ({bi}, {bj}) has no {} edge", kind.letter())))?;
            let w = d.white_index(wi, wj);
            if std::mem::replace(&mut used[w], true) {
                return Err(Error::MalformedCover(format!("white ({wi}, {wj}) matched twice")));
            }
        }
        Ok(())
    }

    /// Product of edge weights.
    pub fn weight(&self, d: &Diamond) -> f64 {
        self.kinds
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                let (bi, bj) = d.black_at(b);
                d.weight(bi, bj, EdgeKind::from_code(c).expect("valid cover"))
            })
            .product()
    }

    /// Kinds as letters, black vertices in index order.
    pub fn letters(&self) -> String {
        self.kinds.iter().map(|&c| EdgeKind::from_code(c).map_or('?', EdgeKind::letter)).collect()
    }
}

/// Cell state after sliding: colliding pairs leave the cell empty (their vertices are covered
/// by neighbours), single dimers stay.
const SETTLE: [u8; 16] = {
    let mut t = [0u8; 16];
    let mut v = 0;
    while v < 16 {
        t[v] = if v as u8 == BIT_S | BIT_N || v as u8 == BIT_E | BIT_W { 0 } else { v as u8 };
        v += 1;
    }
    t
};

/// Precomputed stage probabilities for one weight configuration and size.
#[derive(Debug, Clone)]
pub struct Shuffler {
    size: usize,
    ell: usize,
    /// `create[k-1][(i mod ell) * 2 + (j mod 2)]`: probability of `S+N` in a new stage-`k` cell,
    /// as a threshold on a uniform `u32` scaled to `2^32`.
    create: Vec<Vec<u64>>,
}

/// Stage weights `[S, E, W, N]` per fundamental-domain cell, indexed `i * 2 + j`.
type StageTable = Vec<[f64; 4]>;

fn final_table(cfg: &WeightConfig) -> StageTable {
    let ell = cfg.ell;
    let mut t = Vec::with_capacity(2 * ell);
    for i in 0..ell {
        for j in 0..2 {
            let a = cfg.alpha(i as i64 + 1);
            let b = cfg.beta(i as i64 + 1);
            let (s, e) = if j == 0 { (1.0 / a, 1.0 / b) } else { (a, b) };
            t.push([s, e, 1.0, 1.0]);
        }
    }
    t
}

fn reduce(t: &StageTable, ell: usize) -> StageTable {
    let at = |i: usize, j: usize| &t[(i % ell) * 2 + j % 2];
    let delta = |c: &[f64; 4]| c[0] * c[3] + c[1] * c[2];
    let mut out = Vec::with_capacity(t.len());
    for i in 0..ell {
        for j in 0..2 {
            let (c00, c10, c01, c11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
            out.push([c00[0] / delta(c00), c10[1] / delta(c10), c01[2] / delta(c01), c11[3] / delta(c11)]);
        }
    }
    let log_mean = out.iter().flatten().map(|v| v.ln()).sum::<f64>() / (4 * out.len()) as f64;
    let g = log_mean.exp();
    for c in &mut out {
        for v in c.iter_mut() {
            *v /= g;
        }
    }
    out
}

impl Shuffler {
    pub fn new(cfg: &WeightConfig, size: usize) -> Result<Self> {
        cfg.validate()?;
        if size == 0 {
            return Err(Error::ZeroSize);
        }
        let ell = cfg.ell;
        let mut tables = vec![final_table(cfg)];
        for _ in 1..size {
            let next = reduce(tables.last().expect("nonempty"), ell);
            tables.push(next);
        }
        tables.reverse();
        let create = tables
            .iter()
            .map(|t| t.iter().map(|c| (c[0] * c[3] / (c[0] * c[3] + c[1] * c[2]) * 4_294_967_296.0).round() as u64).collect())
            .collect();
        Ok(Shuffler { size, ell, create })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Generator for sample `index` of the run seeded by `seed`.
    pub fn rng(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> DimerCover {
        let ell = self.ell;
        let n = self.size;
        let mut cells: Vec<u8> = Vec::with_capacity(n * n);
        let mut next: Vec<u8> = Vec::with_capacity(n * n);
        for k in 1..=n {
            next.clear();
            next.resize(k * k, 0);
            let old = k - 1;
            for i in 0..old {
                let row = &cells[i * old..(i + 1) * old];
                let (here, below) = next[i * k..(i + 2) * k].split_at_mut(k);
                for (j, &b) in row.iter().enumerate() {
                    here[j] |= b & BIT_S;
                    here[j + 1] |= b & BIT_W;
                    below[j] |= b & BIT_E;
                    below[j + 1] |= b & BIT_N;
                }
            }
            let probs = &self.create[k - 1];
            for i in 0..k {
                let prow = &probs[(i % ell) * 2..(i % ell) * 2 + 2];
                for (j, c) in next[i * k..(i + 1) * k].iter_mut().enumerate() {
                    *c = if *c == 0 {
                        if (rng.next_u32() as u64) < prow[j & 1] {
                            BIT_S | BIT_N
                        } else {
                            BIT_E | BIT_W
                        }
                    } else {
                        SETTLE[*c as usize]
                    };
                }
            }
            std::mem::swap(&mut cells, &mut next);
        }
        self.cover_from_cells(&cells)
    }

    fn cover_from_cells(&self, cells: &[u8]) -> DimerCover {
        let n = self.size;
        let mut kinds = vec![u8::MAX; n * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                let c = cells[i * n + j];
                if c & BIT_S != 0 {
                    kinds[i * n + j] = EdgeKind::South.code();
                }
                if c & BIT_W != 0 {
                    kinds[i * n + j] = EdgeKind::West.code();
                }
                if c & BIT_E != 0 {
                    kinds[(i + 1) * n + j] = EdgeKind::East.code();
                }
                if c & BIT_N != 0 {
                    kinds[(i + 1) * n + j] = EdgeKind::North.code();
                }
            }
        }
        DimerCover { size: n, kinds }
    }

    pub fn sample(&self, seed: u64, index: u64) -> DimerCover {
        self.sample_with(&mut Self::rng(seed, index))
    }
}

/// One cover of the size-`2 ell N` diamond from stream 0 of `seed`.
pub fn shuffle_sample(cfg: &WeightConfig, seed: u64) -> Result<DimerCover> {
    Ok(Shuffler::new(cfg, cfg.size())?.sample(seed, 0))
}

/// Black particles by level: `levels[t-1]` holds the ascending positions `u = 2y + j`
/// of the `t` particles in column `size - t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParticleSystem {
    pub size: usize,
    pub levels: Vec<Vec<u32>>,
}

impl ParticleSystem {
    pub fn level(&self, t: usize) -> &[u32] {
        &self.levels[t - 1]
    }

    pub fn mark(u: u32) -> u8 {
        (u % 2) as u8
    }

    /// Level counts and interlacing `u^{t+1}_s <= u^t_s <= u^{t+1}_{s+1}`.
    pub fn check(&self) -> Result<()> {
        for (idx, lv) in self.levels.iter().enumerate() {
            let t = idx + 1;
            if lv.len() != t {
                return Err(Error::MalformedCover(format!("level {t} holds {} particles", lv.len())));
            }
            if let Some(up) = self.levels.get(t) {
                for (s, &u) in lv.iter().enumerate() {
                    if !(up[s] <= u && u <= up[s + 1]) {
                        return Err(Error::MalformedCover(format!("interlacing fails at level {t}, index {s}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Particles sit at black vertices matched by a south or west dimer.
pub fn extract_particles(cover: &DimerCover) -> Result<ParticleSystem> {
    let n = cover.size;
    if cover.kinds.len() != n * (n + 1) {
        return Err(Error::MalformedCover(format!("{} kinds for size {n}", cover.kinds.len())));
    }
    let mut levels = vec![Vec::new(); n];
    for c in 0..=n {
        for r in 0..n {
            let k = cover.kinds[c * n + r];
            if k == EdgeKind::South.code() || k == EdgeKind::West.code() {
                if c == n {
                    return Err(Error::MalformedCover(format!("black ({c}, {r}) has no south or west edge")));
                }
                levels[n - c - 1].push(r as u32);
            }
        }
    }
    let ps = ParticleSystem { size: n, levels };
    ps.check()?;
    Ok(ps)
}

/// A point of the rescaled marked process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkedPoint {
    pub t: usize,
    pub mu: f64,
    pub j: u8,
}

/// `mu = (u - 2 N tau) / (2 sigma sqrt N)`, marks kept.
pub fn rescale(ps: &ParticleSystem, tau: f64, sigma: f64, n_param: usize) -> Vec<MarkedPoint> {
    let n = n_param as f64;
    let scale = 2.0 * sigma * n.sqrt();
    ps.levels
        .iter()
        .enumerate()
        .flat_map(|(idx, lv)| {
            lv.iter().map(move |&u| MarkedPoint { t: idx + 1, mu: (u as f64 - 2.0 * n * tau) / scale, j: ParticleSystem::mark(u) })
        })
        .collect()
}

/// Count window `[lo, hi)` of positions `u` on level `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub t: usize,
    pub lo: u32,
    pub hi: u32,
}

/// Mergeable sufficient statistics of a batch of samples.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StatAccumulator {
    pub samples: u64,
    pub windows: Vec<Window>,
    /// Per window: sum and sum of squares of the particle count.
    pub window_sums: Vec<(f64, f64)>,
    /// Per level `t = 1..`: particles, and particles with mark 1.
    pub level_particles: Vec<u64>,
    pub level_marked: Vec<u64>,
    /// Rescaled level-1 positions, and those with mark 1.
    pub level1: Vec<f64>,
    pub level1_marked: Vec<f64>,
    /// Rescaled level-2 pairs.
    pub level2: Vec<(f64, f64)>,
    /// Joint marks of the level-1 particle and the lower level-2 particle: counts `[j1][j2]`.
    pub joint_marks: [[u64; 2]; 2],
}

impl StatAccumulator {
    pub fn new(windows: Vec<Window>, max_level: usize) -> Self {
        StatAccumulator {
            window_sums: vec![(0.0, 0.0); windows.len()],
            windows,
            level_particles: vec![0; max_level],
            level_marked: vec![0; max_level],
            ..Default::default()
        }
    }

    pub fn record(&mut self, ps: &ParticleSystem, tau: f64, sigma: f64, n_param: usize) {
        self.samples += 1;
        for (w, acc) in self.windows.iter().zip(self.window_sums.iter_mut()) {
            let c = ps.levels.get(w.t - 1).map_or(0, |lv| lv.iter().filter(|&&u| w.lo <= u && u < w.hi).count()) as f64;
            acc.0 += c;
            acc.1 += c * c;
        }
        for (t, (np, nm)) in self.level_particles.iter_mut().zip(self.level_marked.iter_mut()).enumerate() {
            if let Some(lv) = ps.levels.get(t) {
                *np += lv.len() as u64;
                *nm += lv.iter().filter(|&&u| u % 2 == 1).count() as u64;
            }
        }
        let scale = 2.0 * sigma * (n_param as f64).sqrt();
        let resc = |u: u32| (u as f64 - 2.0 * n_param as f64 * tau) / scale;
        if let Some(&u) = ps.levels.first().and_then(|l| l.first()) {
            self.level1.push(resc(u));
            if u % 2 == 1 {
                self.level1_marked.push(resc(u));
            }
            if let Some(l2) = ps.levels.get(1) {
                self.level2.push((resc(l2[0]), resc(l2[1])));
                self.joint_marks[(u % 2) as usize][(l2[0] % 2) as usize] += 1;
            }
        }
    }

    /// Associative merge; the order of merges only permutes the stored position lists.
    pub fn merge(mut self, other: StatAccumulator) -> StatAccumulator {
        if self.samples == 0 && self.windows.is_empty() && self.level_particles.is_empty() {
            return other;
        }
        self.samples += other.samples;
        for (a, b) in self.window_sums.iter_mut().zip(other.window_sums) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (a, b) in self.level_particles.iter_mut().zip(other.level_particles) {
            *a += b;
        }
        for (a, b) in self.level_marked.iter_mut().zip(other.level_marked) {
            *a += b;
        }
        self.level1.extend(other.level1);
        self.level1_marked.extend(other.level1_marked);
        self.level2.extend(other.level2);
        for r in 0..2 {
            for c in 0..2 {
                self.joint_marks[r][c] += other.joint_marks[r][c];
            }
        }
        self
    }

    pub fn report(&self) -> StatReport {
        let n = self.samples.max(1) as f64;
        let window_density = self
            .windows
            .iter()
            .zip(&self.window_sums)
            .map(|(w, &(s, s2))| {
                let mean = s / n;
                let var = (s2 / n - mean * mean).max(0.0);
                (*w, Estimate { value: mean, stderr: (var / n).sqrt() })
            })
            .collect();
        let mark_frequency = self.level_particles.iter().zip(&self.level_marked).map(|(&np, &nm)| proportion(nm, np)).collect();
        let total: u64 = self.joint_marks.iter().flatten().sum();
        let joint11 = proportion(self.joint_marks[1][1], total);
        let first = proportion(self.joint_marks[1][0] + self.joint_marks[1][1], total);
        let second = proportion(self.joint_marks[0][1] + self.joint_marks[1][1], total);
        let mut sorted = self.level1.clone();
        sorted.sort_by(f64::total_cmp);
        let mut thinned = self.level1_marked.clone();
        thinned.sort_by(f64::total_cmp);
        StatReport {
            samples: self.samples,
            window_density,
            mark_frequency,
            joint_mark: JointMark { joint11, first, second, samples: total },
            level1_sorted: sorted,
            level1_marked_sorted: thinned,
        }
    }
}

fn proportion(k: u64, n: u64) -> Estimate {
    let nf = n.max(1) as f64;
    let p = k as f64 / nf;
    Estimate { value: p, stderr: (p * (1.0 - p) / nf).sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointMark {
    /// `P(j1 = 1, j2 = 1)`.
    pub joint11: Estimate,
    pub first: Estimate,
    pub second: Estimate,
    pub samples: u64,
}

impl JointMark {
    /// `(joint - product) / stderr`, with the delta-method error of the difference under independence.
    pub fn z_score(&self) -> f64 {
        let (p1, p2) = (self.first.value, self.second.value);
        let n = self.samples.max(1) as f64;
        let var = p1 * p2 * (1.0 - p1) * (1.0 - p2) / n;
        (self.joint11.value - p1 * p2) / var.sqrt().max(1e-300)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatReport {
    pub samples: u64,
    pub window_density: Vec<(Window, Estimate)>,
    /// Per level `t = 1..`: fraction of particles with mark 1.
    pub mark_frequency: Vec<Estimate>,
    pub joint_mark: JointMark,
    pub level1_sorted: Vec<f64>,
    pub level1_marked_sorted: Vec<f64>,
}

/// Samples `count` covers (streams `0..count` of `seed`) in parallel and accumulates statistics.
pub fn batch_stats(
    cfg: &WeightConfig,
    tau: f64,
    sigma: f64,
    seed: u64,
    count: u64,
    windows: &[Window],
    max_level: usize,
) -> Result<StatAccumulator> {
    let sh = Shuffler::new(cfg, cfg.size())?;
    let n_param = cfg.n_param;
    let chunk = 64u64;
    let chunks: Vec<u64> = (0..count.div_ceil(chunk)).collect();
    chunks
        .into_par_iter()
        .map(|c| {
            let mut acc = StatAccumulator::new(windows.to_vec(), max_level);
            for idx in c * chunk..((c + 1) * chunk).min(count) {
                let ps = extract_particles(&sh.sample(seed, idx))?;
                acc.record(&ps, tau, sigma, n_param);
            }
            Ok(acc)
        })
        .try_reduce(|| StatAccumulator::new(windows.to_vec(), max_level), |a, b| Ok(a.merge(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_perfect_matchings() {
        let cfg = WeightConfig::new(vec![2.0, 0.5, 1.5], vec![0.8, 1.25, 1.5], 1).unwrap();
        for size in 1..=9 {
            let sh = Shuffler::new(&cfg, size).unwrap();
            let d = Diamond::with_size(&cfg, size).unwrap();
            for idx in 0..20 {
                let c = sh.sample(7, idx);
                c.validate(&d).unwrap();
                extract_particles(&c).unwrap();
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = WeightConfig::two_periodic(0.5, 2).unwrap();
        let a = shuffle_sample(&cfg, 11).unwrap();
        let b = shuffle_sample(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(Shuffler::new(&cfg, 8).unwrap().sample(11, 1), a);
    }

    #[test]
    fn all_horizontal_cover() {
        // Horizontal pairs in cells (0, 1) and (1, 0), singles S at (0, 0) and N at (1, 1).
        let kinds = vec![2, 2, 2, 0, 0, 0];
        let c = DimerCover::from_kinds(2, kinds);
        let cfg = WeightConfig::uniform(1, 1).unwrap();
        c.validate(&Diamond::with_size(&cfg, 2).unwrap()).unwrap();
        let ps = extract_particles(&c).unwrap();
        assert_eq!(ps.levels, vec![vec![0], vec![0, 1]]);
    }

    #[test]
    fn malformed_cover_rejected() {
        let c = DimerCover::from_kinds(2, vec![2, 2, 2, 2, 2, 0]);
        assert!(extract_particles(&c).is_err());
        let cfg = WeightConfig::uniform(1, 1).unwrap();
        assert!(DimerCover::from_kinds(2, vec![2, 3, 2, 2, 0, 0]).validate(&Diamond::with_size(&cfg, 2).unwrap()).is_err());
    }

    #[test]
    fn rescale_examples() {
        let ps = ParticleSystem { size: 2, levels: vec![vec![4], vec![4, 5]] };
        let pts = rescale(&ps, 1.0, 0.5, 2);
        assert_eq!(pts[0].mu, 0.0);
        let sigma = 0.5;
        let u = 4.0 + 2.0 * sigma * 2f64.sqrt();
        assert!(((u - 4.0) / (2.0 * sigma * 2f64.sqrt()) - 1.0).abs() < 1e-15);
        assert_eq!(pts[2].j, 1);
    }

    #[test]
    fn merge_is_order_independent() {
        let cfg = WeightConfig::two_periodic(0.5, 1).unwrap();
        let sh = Shuffler::new(&cfg, 4).unwrap();
        let w = vec![Window { t: 2, lo: 0, hi: 2 }];
        let mut parts = Vec::new();
        for c in 0..3 {
            let mut a = StatAccumulator::new(w.clone(), 3);
            for i in 0..10 {
                a.record(&extract_particles(&sh.sample(3, c * 10 + i)).unwrap(), 1.0, 0.4, 1);
            }
            parts.push(a);
        }
        let ab_c = parts[0].clone().merge(parts[1].clone()).merge(parts[2].clone()).report();
        let c_ba = parts[2].clone().merge(parts[1].clone().merge(parts[0].clone())).report();
        assert_eq!(ab_c.samples, 30);
        assert_eq!(ab_c.mark_frequency, c_ba.mark_frequency);
        assert_eq!(ab_c.level1_sorted, c_ba.level1_sorted);
        assert!((ab_c.window_density[0].1.value - c_ba.window_density[0].1.value).abs() < 1e-15);
    }
}
