//! Exact finite-size oracle: the Kasteleyn matrix, its banded LU factorisation, entries of
//! the inverse, Kenyon's local statistics and brute-force enumeration of tiny diamonds.
//!
//! Rows are white vertices, columns black vertices. With the index maps of
//! [`Diamond`], every nonzero satisfies `|row - col| <= n + 1`, so the matrix is banded
//! and LU with partial pivoting needs `O(m n^2)` work and `O(m n)` memory.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Diamond, Edge, EdgeKind, WeightConfig};
use crate::sampler::DimerCover;

/// Default cap on vertices per colour for factorisations.
pub const DEFAULT_SIZE_CAP: usize = 40_000;
/// Largest diamond the enumerator accepts.
pub const ENUMERATION_CAP: usize = 4;

#[derive(Debug, Clone)]
pub struct KasteleynMatrix {
    pub diamond: Diamond,
    /// Per white row: `(black column, signed weight)`.
    rows: Vec<Vec<(usize, f64)>>,
    band: usize,
}

impl KasteleynMatrix {
    pub fn new(diamond: Diamond) -> Result<Self> {
        Self::with_cap(diamond, DEFAULT_SIZE_CAP)
    }

    pub fn with_cap(diamond: Diamond, cap: usize) -> Result<Self> {
        let m = diamond.vertex_count();
        if m > cap {
            return Err(Error::SizeCap { size: m, cap });
        }
        let n = diamond.size();
        let mut rows = vec![Vec::with_capacity(4); m];
        for bi in 0..=n {
            for bj in 0..n {
                for kind in EdgeKind::ALL {
                    if let Some((wi, wj)) = diamond.partner(bi, bj, kind) {
                        rows[diamond.white_index(wi, wj)].push((diamond.black_index(bi, bj), diamond.signed_weight(bi, bj, kind)));
                    }
                }
            }
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        Ok(KasteleynMatrix { diamond, rows, band: n + 1 })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `K(w, b)` by indices; zero off the graph.
    pub fn entry(&self, white: usize, black: usize) -> f64 {
        self.rows[white].iter().find(|e| e.0 == black).map_or(0.0, |e| e.1)
    }

    pub fn row(&self, white: usize) -> &[(usize, f64)] {
        &self.rows[white]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut d = DMatrix::zeros(m, m);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                d[(r, c)] = v;
            }
        }
        d
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

/// Kasteleyn matrix of the size-`2 ell N` diamond.
pub fn build_kasteleyn(cfg: &WeightConfig) -> Result<KasteleynMatrix> {
    cfg.validate()?;
    KasteleynMatrix::new(Diamond::new(cfg))
}

#[derive(Debug, Clone)]
struct BandRow {
    start: usize,
    vals: Vec<f64>,
}

impl BandRow {
    fn get(&self, c: usize) -> f64 {
        if c < self.start {
            return 0.0;
        }
        self.vals.get(c - self.start).copied().unwrap_or(0.0)
    }

    fn end(&self) -> usize {
        self.start + self.vals.len()
    }
}

/// LU with partial pivoting of a banded matrix, rows swapped as whole objects
/// (multipliers travel with their rows, as in dense `getrf`).
#[derive(Debug, Clone)]
pub struct BandLu {
    rows: Vec<BandRow>,
    piv: Vec<usize>,
    pub log_abs_det: f64,
    pub det_sign: f64,
    matrix: KasteleynMatrix,
}

impl BandLu {
    fn factor(k: &KasteleynMatrix) -> Result<Self> {
        let m = k.dim();
        let kl = k.band;
        let mut rows: Vec<BandRow> = (0..m)
            .map(|r| {
                let start = r.saturating_sub(kl);
                let end = (r + kl + 1).min(m);
                let mut vals = vec![0.0; end - start];
                for &(c, v) in &k.rows[r] {
                    vals[c - start] = v;
                }
                BandRow { start, vals }
            })
            .collect();
        let mut piv = vec![0; m];
        let mut log_abs_det = 0.0;
        let mut det_sign = 1.0;
        for col in 0..m {
            let last = (col + kl).min(m - 1);
            let p = (col..=last).max_by(|&a, &b| rows[a].get(col).abs().total_cmp(&rows[b].get(col).abs())).unwrap_or(col);
            let pv = rows[p].get(col);
            if pv == 0.0 || !pv.is_finite() {
                return Err(Error::SingularMatrix);
            }
            piv[col] = p;
            if p != col {
                rows.swap(p, col);
                det_sign = -det_sign;
            }
            log_abs_det += pv.abs().ln();
            det_sign *= pv.signum();
            let (head, tail) = rows.split_at_mut(col + 1);
            let prow = &head[col];
            let pend = prow.end();
            for row in tail.iter_mut().take(last - col) {
                let a = row.get(col);
                if a == 0.0 {
                    continue;
                }
                let l = a / pv;
                if row.end() < pend {
                    row.vals.resize(pend - row.start, 0.0);
                }
                row.vals[col - row.start] = l;
                for c in col + 1..pend {
                    let u = prow.vals[c - prow.start];
                    if u != 0.0 {
                        row.vals[c - row.start] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { rows, piv, log_abs_det, det_sign, matrix: k.clone() })
    }

    /// Solves `K x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.rows.len();
        let mut x = b.to_vec();
        for (k, &p) in self.piv.iter().enumerate() {
            x.swap(k, p);
        }
        for r in 0..m {
            let row = &self.rows[r];
            let mut s = x[r];
            for c in row.start..r {
                s -= row.vals[c - row.start] * x[c];
            }
            x[r] = s;
        }
        for r in (0..m).rev() {
            let row = &self.rows[r];
            let mut s = x[r];
            for c in r + 1..row.end() {
                s -= row.vals[c - row.start] * x[c];
            }
            x[r] = s / row.vals[r - row.start];
        }
        x
    }

    pub fn matrix(&self) -> &KasteleynMatrix {
        &self.matrix
    }

    /// Column `white` of `K^{-1}`, i.e. `K^{-1}(b, white)` for every black `b`, with a residual check.
    pub fn inverse_column(&self, white: usize) -> Result<Vec<f64>> {
        let m = self.rows.len();
        let mut e = vec![0.0; m];
        e[white] = 1.0;
        let x = self.solve(&e);
        let xmax = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut res = 0.0_f64;
        for (r, row) in self.matrix.rows.iter().enumerate() {
            let s: f64 = row.iter().map(|&(c, v)| v * x[c]).sum();
            res = res.max((s - e[r]).abs());
        }
        if !(res <= 1e-10 * xmax.max(1.0)) {
            return Err(Error::SolverFailure(format!("residual {res:e} for column {white}")));
        }
        Ok(x)
    }
}

/// `log Z = log |det K|`.
pub fn log_partition_function(k: &KasteleynMatrix) -> Result<f64> {
    Ok(k.factor()?.log_abs_det)
}

/// `K^{-1}(b, w)` for each `(black index, white index)` pair; one solve per distinct white.
pub fn inverse_entries(lu: &BandLu, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut whites: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    whites.sort_unstable();
    whites.dedup();
    let cols: Vec<(usize, Vec<f64>)> = whites.par_iter().map(|&w| lu.inverse_column(w).map(|c| (w, c))).collect::<Result<_>>()?;
    Ok(pairs
        .iter()
        .map(|&(b, w)| {
            let i = cols.binary_search_by_key(&w, |c| c.0).expect("column solved above");
            cols[i].1[b]
        })
        .collect())
}

/// Local statistics of the Boltzmann measure from one factorisation, caching inverse columns.
pub struct Oracle {
    pub lu: BandLu,
    cache: std::collections::HashMap<usize, Vec<f64>>,
}

impl Oracle {
    pub fn new(cfg: &WeightConfig, size: usize) -> Result<Self> {
        let k = KasteleynMatrix::new(Diamond::with_size(cfg, size)?)?;
        Ok(Oracle { lu: k.factor()?, cache: Default::default() })
    }

    pub fn from_matrix(k: &KasteleynMatrix) -> Result<Self> {
        Ok(Oracle { lu: k.factor()?, cache: Default::default() })
    }

    pub fn diamond(&self) -> &Diamond {
        &self.lu.matrix.diamond
    }

    pub fn log_partition_function(&self) -> f64 {
        self.lu.log_abs_det
    }

    /// Solves for every listed white column not yet cached, in parallel.
    pub fn prefetch(&mut self, whites: &[usize]) -> Result<()> {
        let mut todo: Vec<usize> = whites.iter().copied().filter(|w| !self.cache.contains_key(w)).collect();
        todo.sort_unstable();
        todo.dedup();
        let lu = &self.lu;
        let cols: Vec<(usize, Vec<f64>)> = todo.par_iter().map(|&w| lu.inverse_column(w).map(|c| (w, c))).collect::<Result<_>>()?;
        self.cache.extend(cols);
        Ok(())
    }

    /// `K^{-1}(b, w)`.
    pub fn inverse(&mut self, black: usize, white: usize) -> Result<f64> {
        if !self.cache.contains_key(&white) {
            let c = self.lu.inverse_column(white)?;
            self.cache.insert(white, c);
        }
        Ok(self.cache[&white][black])
    }

    fn edge_indices(&self, e: &Edge) -> Result<(usize, usize, f64)> {
        let d = self.diamond();
        let _ = d.edge_weight(e)?;
        let (bi, bj) = e.black.lattice();
        let k = d.signed_weight(bi as usize, bj as usize, e.kind);
        Ok((d.index_of(&e.white)?, d.index_of(&e.black)?, k))
    }

    /// `P(all edges in the cover) = det[K(w_q, b_q) K^{-1}(b_p, w_q)]_{p,q}`.
    pub fn joint_edge_probability(&mut self, edges: &[Edge]) -> Result<f64> {
        let idx = edges.iter().map(|e| self.edge_indices(e)).collect::<Result<Vec<_>>>()?;
        self.prefetch(&idx.iter().map(|e| e.0).collect::<Vec<_>>())?;
        let k = idx.len();
        let mut m = DMatrix::zeros(k, k);
        for p in 0..k {
            for q in 0..k {
                let (wq, _, kq) = idx[q];
                m[(p, q)] = kq * self.inverse(idx[p].1, wq)?;
            }
        }
        Ok(if k == 0 { 1.0 } else { m.determinant() })
    }

    /// Single-edge probabilities.
    pub fn edge_probabilities(&mut self, edges: &[Edge]) -> Result<Vec<f64>> {
        edges.iter().map(|e| self.joint_edge_probability(std::slice::from_ref(e))).collect()
    }

    /// `L(p1, p2) = sum_{q in {S, W}} K(w_{p1,q}, b_{p1}) K^{-1}(b_{p2}, w_{p1,q})` for black
    /// vertices given as `(column, row)` lattice indices.
    pub fn particle_kernel(&mut self, p1: (usize, usize), p2: (usize, usize)) -> Result<f64> {
        let d = self.diamond().clone();
        let n = d.size();
        for &(c, r) in [p1, p2].iter() {
            if c > n || r >= n {
                return Err(Error::IndexOutOfRange(format!("black ({c}, {r}) outside size {n}")));
            }
        }
        let b2 = d.black_index(p2.0, p2.1);
        let mut s = 0.0;
        for kind in [EdgeKind::South, EdgeKind::West] {
            if let Some((wi, wj)) = d.partner(p1.0, p1.1, kind) {
                s += d.signed_weight(p1.0, p1.1, kind) * self.inverse(b2, d.white_index(wi, wj))?;
            }
        }
        Ok(s)
    }

    /// `rho_k` at black vertices `(column, row)`: the probability that all carry particles.
    pub fn particle_correlation(&mut self, points: &[(usize, usize)]) -> Result<f64> {
        let d = self.diamond().clone();
        let whites: Vec<usize> = points
            .iter()
            .flat_map(|&(c, r)| [EdgeKind::South, EdgeKind::West].map(|k| d.partner(c, r, k)))
            .flatten()
            .map(|(wi, wj)| d.white_index(wi, wj))
            .collect();
        self.prefetch(&whites)?;
        let k = points.len();
        let mut m = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                m[(a, b)] = self.particle_kernel(points[a], points[b])?;
            }
        }
        Ok(if k == 0 { 1.0 } else { m.determinant() })
    }

    /// `rho_1` at every black vertex, indexed `[column][row]`.
    pub fn density_grid(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.diamond().size();
        let whites: Vec<usize> = (0..n * (n + 1)).collect();
        self.prefetch(&whites)?;
        (0..=n).map(|c| (0..n).map(|r| self.particle_kernel((c, r), (c, r))).collect()).collect()
    }
}

/// All dimer covers of the size-`n` diamond with their weights.
pub fn enumerate_covers(cfg: &WeightConfig, n: usize) -> Result<Vec<(DimerCover, f64)>> {
    if n > ENUMERATION_CAP {
        return Err(Error::SizeCap { size: n, cap: ENUMERATION_CAP });
    }
    let d = Diamond::with_size(cfg, n)?;
    let blacks = d.vertex_count();
    let mut used = vec![false; blacks];
    let mut kinds = vec![0u8; blacks];
    let mut out = Vec::new();
    fn go(d: &Diamond, b: usize, used: &mut [bool], kinds: &mut [u8], w: f64, out: &mut Vec<(DimerCover, f64)>) {
        let n = d.size();
        if b == d.vertex_count() {
            out.push((DimerCover::from_kinds(n, kinds.to_vec()), w));
            return;
        }
        let (bi, bj) = d.black_at(b);
        for kind in EdgeKind::ALL {
            if let Some((wi, wj)) = d.partner(bi, bj, kind) {
                let wx = d.white_index(wi, wj);
                if !used[wx] {
                    used[wx] = true;
                    kinds[b] = kind.code();
                    go(d, b + 1, used, kinds, w * d.weight(bi, bj, kind), out);
                    used[wx] = false;
                }
            }
        }
    }
    go(&d, 0, &mut used, &mut kinds, 1.0, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vertex;

    fn uniform() -> WeightConfig {
        WeightConfig::uniform(1, 1).unwrap()
    }

    #[test]
    fn unit_diamond_matrix() {
        let k = KasteleynMatrix::new(Diamond::with_size(&uniform(), 1).unwrap()).unwrap();
        assert_eq!(k.dim(), 2);
        let d = k.to_dense();
        assert_eq!(d.iter().filter(|v| **v == -1.0).count(), 1);
        assert_eq!(d.iter().filter(|v| **v == 1.0).count(), 3);
        assert!((log_partition_function(&k).unwrap() - 2f64.ln()).abs() < 1e-14);
        let lu = k.factor().unwrap();
        let inv = d.try_inverse().unwrap();
        for b in 0..2 {
            for w in 0..2 {
                assert!((inverse_entries(&lu, &[(b, w)]).unwrap()[0] - inv[(b, w)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn partition_functions() {
        for (n, z) in [(1, 2.0), (2, 8.0), (3, 64.0), (4, 1024.0)] {
            let k = KasteleynMatrix::new(Diamond::with_size(&uniform(), n).unwrap()).unwrap();
            assert!((log_partition_function(&k).unwrap() - f64::ln(z)).abs() < 1e-12, "size {n}");
            assert_eq!(enumerate_covers(&uniform(), n).unwrap().len(), z as usize);
        }
        assert!(matches!(enumerate_covers(&uniform(), 5), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn band_lu_matches_dense() {
        let cfg = WeightConfig::new(vec![1.3, 0.4, 2.0], vec![0.7, 1.1, 1.3 * 0.4 * 2.0 / (0.7 * 1.1)], 1).unwrap();
        let k = KasteleynMatrix::new(Diamond::with_size(&cfg, 7).unwrap()).unwrap();
        let dense = k.to_dense();
        let lu = k.factor().unwrap();
        assert!((lu.log_abs_det - dense.determinant().abs().ln()).abs() < 1e-10);
        let b: Vec<f64> = (0..k.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = lu.solve(&b);
        let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn unit_edges_are_fair() {
        let mut o = Oracle::new(&uniform(), 1).unwrap();
        let d = o.diamond().clone();
        let edges = d.enumerate_edges();
        for p in o.edge_probabilities(&edges).unwrap() {
            assert!((p - 0.5).abs() < 1e-14);
        }
        assert_eq!(o.joint_edge_probability(&[]).unwrap(), 1.0);
        assert!(o
            .joint_edge_probability(&[Edge { white: Vertex::white(0, 0), black: Vertex::black(1, 1), kind: EdgeKind::South }])
            .is_err());
    }

    #[test]
    fn level_counts() {
        let cfg = WeightConfig::two_periodic(0.5, 1).unwrap();
        let mut o = Oracle::new(&cfg, 4).unwrap();
        let grid = o.density_grid().unwrap();
        for (c, col) in grid.iter().enumerate() {
            let s: f64 = col.iter().sum();
            assert!((s - (4 - c) as f64).abs() < 1e-12, "column {c}: {s}");
        }
        let r2 = o.particle_correlation(&[(1, 1), (2, 2)]).unwrap();
        let r2b = o.particle_correlation(&[(2, 2), (1, 1)]).unwrap();
        assert!((r2 - r2b).abs() < 1e-14);
        assert!(r2 <= grid[1][1].min(grid[2][2]) + 1e-14);
    }
}
