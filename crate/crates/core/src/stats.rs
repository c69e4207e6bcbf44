//! Goodness-of-fit statistics used by the Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Kolmogorov-Smirnov distance between the empirical law of `sorted` and `cdf`.
pub fn ks_one_sample(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (k, &x)| {
        let f = cdf(x);
        d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs())
    })
}

/// KS distance to the standard normal law.
pub fn ks_normal(sorted: &[f64]) -> f64 {
    let nd = Normal::standard();
    ks_one_sample(sorted, |x| nd.cdf(x))
}

/// Two-sample KS distance; both inputs sorted ascending.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Pearson statistic and upper-tail p-value of observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, f64) {
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dof = (observed.len().max(2) - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}

/// Empirical law of lattice-valued data with every atom spread uniformly over
/// `[x - half_width, x + half_width]`: the continuity-corrected empirical CDF.
#[derive(Debug, Clone)]
pub struct SmoothedEcdf {
    /// Distinct atoms ascending, with cumulative counts up to and including each.
    atoms: Vec<(f64, u64)>,
    total: u64,
    half_width: f64,
}

impl SmoothedEcdf {
    pub fn new(values: &[f64], half_width: f64) -> Self {
        let mut atoms: Vec<(f64, u64)> = Vec::new();
        for &x in &sorted(values.to_vec()) {
            match atoms.last_mut() {
                Some((y, c)) if *y == x => *c += 1,
                _ => atoms.push((x, 1)),
            }
        }
        let mut acc = 0;
        for a in &mut atoms {
            acc += a.1;
            a.1 = acc;
        }
        SmoothedEcdf { atoms, total: values.len() as u64, half_width }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.half_width;
        // Atoms at or below x - h are fully counted; those within (x - h, x + h) partially.
        let full = self.atoms.partition_point(|a| a.0 + h <= x);
        let mut v = if full == 0 { 0.0 } else { self.atoms[full - 1].1 as f64 };
        let mut prev = v;
        for &(a, cum) in &self.atoms[full..] {
            if a - h >= x {
                break;
            }
            v += (cum as f64 - prev) * (x - (a - h)) / (2.0 * h);
            prev = cum as f64;
        }
        v / self.total.max(1) as f64
    }

    /// Interval endpoints of all atoms, ascending.
    fn breakpoints(&self) -> Vec<f64> {
        let h = self.half_width;
        sorted(self.atoms.iter().flat_map(|&(a, _)| [a - h, a + h]).collect())
    }
}

/// Continuity-corrected KS distance to `cdf`; the supremum is taken over the atom endpoints and
/// 16 interior points of every piece.
pub fn ks_smoothed(values: &[f64], half_width: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let e = SmoothedEcdf::new(values, half_width);
    let bp = e.breakpoints();
    let mut d = 0.0f64;
    for w in bp.windows(2) {
        for s in 0..16 {
            let x = w[0] + (w[1] - w[0]) * s as f64 / 16.0;
            d = d.max((e.cdf(x) - cdf(x)).abs());
        }
    }
    if let Some(&x) = bp.last() {
        d = d.max((1.0 - cdf(x)).abs());
    }
    d
}

/// Continuity-corrected KS distance of lattice data to the standard normal law.
pub fn ks_normal_smoothed(values: &[f64], half_width: f64) -> f64 {
    let nd = Normal::standard();
    ks_smoothed(values, half_width, |x| nd.cdf(x))
}

/// Two-sample KS distance between continuity-corrected lattice data and a continuous sample
/// `reference` (sorted ascending).
pub fn ks_two_sample_smoothed(values: &[f64], half_width: f64, reference: &[f64]) -> f64 {
    let e = SmoothedEcdf::new(values, half_width);
    let m = reference.len() as f64;
    reference.iter().enumerate().fold(0.0, |d, (r, &x)| {
        let f = e.cdf(x);
        d.max((f - r as f64 / m).abs()).max((f - (r + 1) as f64 / m).abs())
    })
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_examples() {
        assert!((ks_one_sample(&[0.5], |x| x) - 0.5).abs() < 1e-15);
        let grid: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&grid, |x| x) <= 0.0005 + 1e-12);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn smoothed_ecdf() {
        let e = SmoothedEcdf::new(&[0.0, 1.0, 1.0, 3.0], 0.5);
        for (x, f) in [(-1.0, 0.0), (0.0, 0.125), (0.5, 0.25), (1.0, 0.5), (1.25, 0.625), (2.0, 0.75), (3.0, 0.875), (9.0, 1.0)] {
            assert!((e.cdf(x) - f).abs() < 1e-15, "{x}: {} vs {f}", e.cdf(x));
        }
        // Uniform atoms spread over their cells reproduce the uniform law exactly.
        let grid: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        assert!(ks_smoothed(&grid, 0.005, |x| x.clamp(0.0, 1.0)) < 1e-12);
        let reference: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        assert!(ks_two_sample_smoothed(&grid, 0.005, &reference) <= 1e-3 + 1e-12);
    }

    #[test]
    fn chi_square_uniform() {
        let (s, p) = chi_square(&[10, 10, 10], &[10.0, 10.0, 10.0]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
