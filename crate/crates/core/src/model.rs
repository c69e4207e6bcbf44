//! Aztec diamond graph, periodic edge weights and vertex/edge addressing.
//!
//! Black vertices sit at `(2i, 2j+1)` with `i in 0..=n`, `j in 0..n`; white
//! vertices at `(2i+1, 2j)` with `i in 0..n`, `j in 0..=n`. Nothing is
//! materialised: vertices and edges are addressed arithmetically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRODUCT_TOL: f64 = 1e-12;

/// Period, weights and size parameter of the model. The diamond has size `2 * ell * n_param`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub ell: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub n_param: usize,
}

impl WeightConfig {
    /// Validates and, when the product constraint holds only up to rounding,
    /// rescales the last beta so that it holds to machine precision.
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>, n_param: usize) -> Result<Self> {
        if alphas.len() != betas.len() || alphas.is_empty() {
            return Err(Error::Config(format!(
                "need the same positive number of alphas and betas, got {} and {}",
                alphas.len(),
                betas.len()
            )));
        }
        let mut cfg = WeightConfig { ell: alphas.len(), alphas, betas, n_param };
        cfg.validate()?;
        let ratio = cfg.product_ratio();
        if (ratio - 1.0).abs() > f64::EPSILON {
            log::warn!("normalising beta_{} by the product ratio {ratio:e}", cfg.ell);
            let last = cfg.ell - 1;
            cfg.betas[last] *= ratio;
        }
        Ok(cfg)
    }

    /// `alpha_1^{-1} = beta_1^{-1} = alpha_2 = beta_2 = a`.
    pub fn two_periodic(a: f64, n_param: usize) -> Result<Self> {
        Self::new(vec![1.0 / a, a], vec![1.0 / a, a], n_param)
    }

    pub fn uniform(ell: usize, n_param: usize) -> Result<Self> {
        Self::new(vec![1.0; ell], vec![1.0; ell], n_param)
    }

    pub fn with_n(&self, n_param: usize) -> Self {
        WeightConfig { n_param, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_param == 0 {
            return Err(Error::ZeroSize);
        }
        if self.alphas.len() != self.ell || self.betas.len() != self.ell || self.ell == 0 {
            return Err(Error::Config("weight arrays must have length ell >= 1".into()));
        }
        for (name, ws) in [("alpha", &self.alphas), ("beta", &self.betas)] {
            for (index, &value) in ws.iter().enumerate() {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::NonPositiveWeight { name, index: index + 1, value });
                }
            }
        }
        let ratio = self.product_ratio();
        if (ratio - 1.0).abs() > PRODUCT_TOL {
            return Err(Error::ProductConstraintViolated { ratio });
        }
        Ok(())
    }

    /// `prod alpha / prod beta`, falling back to log space if the products leave the float range.
    pub fn product_ratio(&self) -> f64 {
        let pa: f64 = self.alphas.iter().product();
        let pb: f64 = self.betas.iter().product();
        let direct = pa / pb;
        if direct.is_normal() && pa.is_normal() && pb.is_normal() {
            return direct;
        }
        let la: f64 = self.alphas.iter().map(|a| a.ln()).sum();
        let lb: f64 = self.betas.iter().map(|b| b.ln()).sum();
        (la - lb).exp()
    }

    /// `alpha_k` with 1-based periodic index.
    pub fn alpha(&self, k: i64) -> f64 {
        self.alphas[(k - 1).rem_euclid(self.ell as i64) as usize]
    }

    /// `beta_k` with 1-based periodic index.
    pub fn beta(&self, k: i64) -> f64 {
        self.betas[(k - 1).rem_euclid(self.ell as i64) as usize]
    }

    /// Side length `2 * ell * N` of the full diamond.
    pub fn size(&self) -> usize {
        2 * self.ell * self.n_param
    }
}

/// Free-function form of [`WeightConfig::validate`].
pub fn validate_config(cfg: &WeightConfig) -> Result<()> {
    cfg.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Black,
    White,
}

/// A vertex by its plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub color: Color,
    pub x: i64,
    pub y: i64,
}

impl Vertex {
    /// Black vertex `(2i, 2j+1)`.
    pub fn black(i: usize, j: usize) -> Self {
        Vertex { color: Color::Black, x: 2 * i as i64, y: 2 * j as i64 + 1 }
    }

    /// White vertex `(2i+1, 2j)`.
    pub fn white(i: usize, j: usize) -> Self {
        Vertex { color: Color::White, x: 2 * i as i64 + 1, y: 2 * j as i64 }
    }

    /// Lattice indices `(i, j)` of the vertex.
    pub fn lattice(&self) -> (i64, i64) {
        match self.color {
            Color::Black => (self.x / 2, (self.y - 1) / 2),
            Color::White => ((self.x - 1) / 2, self.y / 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    North,
    East,
    South,
    West,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [EdgeKind::North, EdgeKind::East, EdgeKind::South, EdgeKind::West];

    pub fn code(self) -> u8 {
        match self {
            EdgeKind::North => 0,
            EdgeKind::East => 1,
            EdgeKind::South => 2,
            EdgeKind::West => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        EdgeKind::ALL.get(c as usize).copied()
    }

    pub fn letter(self) -> char {
        match self {
            EdgeKind::North => 'N',
            EdgeKind::East => 'E',
            EdgeKind::South => 'S',
            EdgeKind::West => 'W',
        }
    }

    /// Offset of the white endpoint from the black endpoint.
    fn white_offset(self) -> (i64, i64) {
        match self {
            EdgeKind::North => (-1, 1),
            EdgeKind::East => (-1, -1),
            EdgeKind::South => (1, -1),
            EdgeKind::West => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub white: Vertex,
    pub black: Vertex,
    pub kind: EdgeKind,
}

/// The Aztec diamond graph of side `n` carrying the periodic weights of a config.
///
/// `Diamond::new` gives the full size `2 ell N`; `with_size` allows any
/// size for brute-force checks.
#[derive(Debug, Clone)]
pub struct Diamond {
    pub cfg: WeightConfig,
    n: usize,
}

impl Diamond {
    pub fn new(cfg: &WeightConfig) -> Self {
        Diamond { cfg: cfg.clone(), n: cfg.size() }
    }

    pub fn with_size(cfg: &WeightConfig, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroSize);
        }
        Ok(Diamond { cfg: cfg.clone(), n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Number of vertices of each colour, `n(n+1)`.
    pub fn vertex_count(&self) -> usize {
        self.n * (self.n + 1)
    }

    pub fn black_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.n && j < self.n);
        i * self.n + j
    }

    pub fn white_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j <= self.n);
        i * (self.n + 1) + j
    }

    pub fn black_at(&self, index: usize) -> (usize, usize) {
        (index / self.n, index % self.n)
    }

    pub fn white_at(&self, index: usize) -> (usize, usize) {
        (index / (self.n + 1), index % (self.n + 1))
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        let n = self.n as i64;
        match v.color {
            Color::Black => v.x.rem_euclid(2) == 0 && v.y.rem_euclid(2) == 1 && (0..=2 * n).contains(&v.x) && (1..2 * n).contains(&v.y),
            Color::White => v.x.rem_euclid(2) == 1 && v.y.rem_euclid(2) == 0 && (1..2 * n).contains(&v.x) && (0..=2 * n).contains(&v.y),
        }
    }

    /// Row/column index of a vertex in its colour class.
    pub fn index_of(&self, v: &Vertex) -> Result<usize> {
        if !self.contains(v) {
            return Err(Error::InvalidEdge(format!("vertex {v:?} outside size-{} diamond", self.n)));
        }
        let (i, j) = v.lattice();
        Ok(match v.color {
            Color::Black => self.black_index(i as usize, j as usize),
            Color::White => self.white_index(i as usize, j as usize),
        })
    }

    /// White partner `(i, j)` of black `(bi, bj)` along `kind`, if the edge exists.
    pub fn partner(&self, bi: usize, bj: usize, kind: EdgeKind) -> Option<(usize, usize)> {
        let n = self.n;
        match kind {
            EdgeKind::South if bi < n => Some((bi, bj)),
            EdgeKind::West if bi < n => Some((bi, bj + 1)),
            EdgeKind::East if bi > 0 => Some((bi - 1, bj)),
            EdgeKind::North if bi > 0 => Some((bi - 1, bj + 1)),
            _ => None,
        }
    }

    pub fn edge(&self, bi: usize, bj: usize, kind: EdgeKind) -> Option<Edge> {
        self.partner(bi, bj, kind).map(|(wi, wj)| Edge { white: Vertex::white(wi, wj), black: Vertex::black(bi, bj), kind })
    }

    /// Weight of the edge from black `(bi, bj)` in direction `kind`; the edge must exist.
    pub fn weight(&self, bi: usize, bj: usize, kind: EdgeKind) -> f64 {
        let even = bj % 2 == 0;
        match kind {
            EdgeKind::South => {
                let a = self.cfg.alpha(bi as i64 + 1);
                if even {
                    1.0 / a
                } else {
                    a
                }
            }
            EdgeKind::East => {
                let b = self.cfg.beta(bi as i64);
                if even {
                    1.0 / b
                } else {
                    b
                }
            }
            EdgeKind::North | EdgeKind::West => 1.0,
        }
    }

    /// Kasteleyn entry `sign * weight`, with sign -1 on north edges.
    pub fn signed_weight(&self, bi: usize, bj: usize, kind: EdgeKind) -> f64 {
        let w = self.weight(bi, bj, kind);
        if kind == EdgeKind::North {
            -w
        } else {
            w
        }
    }

    /// Checks that `e` is an edge of this diamond and returns its weight.
    pub fn edge_weight(&self, e: &Edge) -> Result<f64> {
        if e.black.color != Color::Black || e.white.color != Color::White || !self.contains(&e.black) {
            return Err(Error::InvalidEdge(format!("{e:?}")));
        }
        let (dx, dy) = e.kind.white_offset();
        if e.white.x - e.black.x != dx || e.white.y - e.black.y != dy || !self.contains(&e.white) {
            return Err(Error::InvalidEdge(format!("{e:?}")));
        }
        let (bi, bj) = e.black.lattice();
        Ok(self.weight(bi as usize, bj as usize, e.kind))
    }

    /// Classifies a (white, black) pair as an edge of this diamond.
    pub fn edge_between(&self, white: Vertex, black: Vertex) -> Result<Edge> {
        let dx = white.x - black.x;
        let dy = white.y - black.y;
        let kind = EdgeKind::ALL
            .into_iter()
            .find(|k| k.white_offset() == (dx, dy))
            .ok_or_else(|| Error::InvalidEdge(format!("{white:?} and {black:?} are not adjacent")))?;
        let e = Edge { white, black, kind };
        self.edge_weight(&e)?;
        Ok(e)
    }

    pub fn enumerate_vertices(&self) -> (Vec<Vertex>, Vec<Vertex>) {
        let n = self.n;
        let blacks = (0..=n).flat_map(|i| (0..n).map(move |j| Vertex::black(i, j))).collect();
        let whites = (0..n).flat_map(|i| (0..=n).map(move |j| Vertex::white(i, j))).collect();
        (blacks, whites)
    }

    /// Every edge exactly once, grouped by black vertex in index order.
    pub fn enumerate_edges(&self) -> Vec<Edge> {
        let n = self.n;
        let mut out = Vec::with_capacity(4 * n * n);
        for i in 0..=n {
            for j in 0..n {
                for kind in EdgeKind::ALL {
                    if let Some(e) = self.edge(i, j, kind) {
                        out.push(e);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_examples() {
        assert!(WeightConfig::uniform(1, 2).is_ok());
        assert!(WeightConfig::two_periodic(0.5, 4).is_ok());
        let bad = WeightConfig::new(vec![1.0, 2.0], vec![1.0, 1.0], 1);
        assert!(matches!(bad, Err(Error::ProductConstraintViolated { ratio }) if (ratio - 2.0).abs() < 1e-12));
        assert!(matches!(WeightConfig::new(vec![1.0, -1.0], vec![1.0, -1.0], 1), Err(Error::NonPositiveWeight { .. })));
        assert_eq!(WeightConfig::uniform(1, 0), Err(Error::ZeroSize));
    }

    #[test]
    fn near_constraint_is_normalised() {
        let cfg = WeightConfig::new(vec![2.0, 3.0], vec![1.5, 4.0 * (1.0 + 4e-13)], 1).unwrap();
        assert!((cfg.product_ratio() - 1.0).abs() < 4.0 * f64::EPSILON);
    }

    #[test]
    fn counts() {
        let cfg = WeightConfig::uniform(1, 1).unwrap();
        let d = Diamond::new(&cfg);
        let (b, w) = d.enumerate_vertices();
        assert_eq!((b.len(), w.len()), (6, 6));
        let d1 = Diamond::with_size(&cfg, 1).unwrap();
        let (b, w) = d1.enumerate_vertices();
        assert_eq!((b.len(), w.len(), d1.enumerate_edges().len()), (2, 2, 4));
    }

    #[test]
    fn weight_examples() {
        let d = Diamond::new(&WeightConfig::two_periodic(0.5, 1).unwrap());
        assert_eq!(d.weight(0, 0, EdgeKind::South), 0.5);
        assert_eq!(d.weight(0, 1, EdgeKind::South), 2.0);
        assert_eq!(d.weight(1, 0, EdgeKind::East), 0.5);
        assert_eq!(d.weight(2, 3, EdgeKind::North), 1.0);
        assert_eq!(d.weight(1, 2, EdgeKind::West), 1.0);
        let e = d.edge(0, 0, EdgeKind::South).unwrap();
        assert_eq!(d.edge_weight(&e), Ok(0.5));
    }

    #[test]
    fn invalid_lookups() {
        let d = Diamond::new(&WeightConfig::uniform(1, 1).unwrap());
        assert!(d.index_of(&Vertex { color: Color::Black, x: 6, y: 1 }).is_err());
        let bogus = Edge { white: Vertex::white(0, 0), black: Vertex::black(1, 1), kind: EdgeKind::South };
        assert!(d.edge_weight(&bogus).is_err());
        assert!(d.edge(0, 0, EdgeKind::North).is_none());
    }

    #[test]
    fn edges_match_coordinate_offsets() {
        let d = Diamond::with_size(&WeightConfig::uniform(1, 1).unwrap(), 3).unwrap();
        for e in d.enumerate_edges() {
            assert_eq!((e.white.x - e.black.x).abs(), 1);
            assert_eq!((e.white.y - e.black.y).abs(), 1);
            assert_eq!(d.edge_between(e.white, e.black).unwrap(), e);
        }
    }
}
