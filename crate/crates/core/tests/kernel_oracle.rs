//! Contour-integral kernel against the exact Kasteleyn inversion.

use aztec_corners::kasteleyn::Oracle;
use aztec_corners::kernel::{KernelEvaluator, Site};
use aztec_corners::model::WeightConfig;
use aztec_corners::spectral::SpectralData;
use aztec_corners::surface::{make_contours, make_contours_with, ContourOptions, ContourShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(rng: &mut ChaCha8Rng, ell: usize, n: usize) -> WeightConfig {
    loop {
        let alphas: Vec<f64> = (0..ell).map(|_| rng.random_range(-0.8f64..0.8).exp()).collect();
        let mut betas: Vec<f64> = (0..ell).map(|_| rng.random_range(-0.8f64..0.8).exp()).collect();
        betas[ell - 1] = alphas.iter().product::<f64>() / betas[..ell - 1].iter().product::<f64>();
        if let Ok(cfg) = WeightConfig::new(alphas, betas, n) {
            if SpectralData::new(&cfg).is_ok_and(|sd| make_contours(&cfg, &sd, 0.6).is_ok()) {
                return cfg;
            }
        }
    }
}

#[test]
fn entries_match_oracle_for_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for ell in 1..=3 {
        for n in 1..=2 {
            for _ in 0..2 {
                let cfg = random_config(&mut rng, ell, n);
                let sd = SpectralData::new(&cfg).unwrap();
                let ev = KernelEvaluator::new(&cfg, &sd, make_contours(&cfg, &sd, 0.6).unwrap()).unwrap();
                let alt_shape = ContourOptions {
                    shape: ContourShape::Smooth { r_big: 2.0, r_cut: None, r_small: 0.4, inner_scale: 0.75 },
                    ..Default::default()
                };
                let alt = KernelEvaluator::new(&cfg, &sd, make_contours_with(&cfg, &sd, &alt_shape).unwrap()).unwrap();
                let mut oracle = Oracle::new(&cfg, cfg.size()).unwrap();
                let size = cfg.size();
                for _ in 0..6 {
                    let p1 = Site::new(rng.random_range(0..size), rng.random_range(0..size));
                    let p2 = Site::new(rng.random_range(0..size), rng.random_range(0..size));
                    let kv = ev.k_int_best(p1, p2, 1e-9).unwrap();
                    let o = oracle.particle_kernel((p1.col, p1.row), (p2.col, p2.row)).unwrap();
                    let tol = 1e-6f64.max(10.0 * kv.quad_error);
                    assert!((kv.value - o).norm() < tol, "ell {ell} N {n} {p1:?} {p2:?}: {} vs {o}", kv.value);
                    let kv2 = alt.k_int_best(p1, p2, 1e-9).unwrap();
                    assert!(
                        (kv.value - kv2.value).norm() <= 10.0 * (kv.quad_error + kv2.quad_error) + 1e-12,
                        "shape dependence at {p1:?} {p2:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn two_point_correlations_match_oracle() {
    let cfg = WeightConfig::two_periodic(0.5, 1).unwrap();
    let sd = SpectralData::new(&cfg).unwrap();
    let ev = KernelEvaluator::new(&cfg, &sd, make_contours(&cfg, &sd, 0.6).unwrap()).unwrap();
    let mut oracle = Oracle::new(&cfg, cfg.size()).unwrap();
    for (a, b) in [((0, 0), (1, 2)), ((2, 1), (3, 3)), ((1, 1), (1, 2))] {
        let (rho, err) = ev.correlation(&[Site::new(a.0, a.1), Site::new(b.0, b.1)], 1e-10).unwrap();
        let o = oracle.particle_correlation(&[a, b]).unwrap();
        assert!((rho - o).abs() < 1e-6f64.max(10.0 * err), "{a:?} {b:?}: {rho} vs {o}");
    }
}
