//! Invariants over randomly drawn weights, seeds and points.

use aztec_corners::config::parse_number;
use aztec_corners::kasteleyn::Oracle;
use aztec_corners::model::{Diamond, WeightConfig};
use aztec_corners::sampler::{extract_particles, Shuffler, StatAccumulator, Window};
use aztec_corners::spectral::big_phi;
use aztec_corners::stats::SmoothedEcdf;
use aztec_corners::surface::w_branches;
use num_complex::Complex64 as C;
use proptest::prelude::*;

/// Log-weights in `[-1, 1]`; the last beta restores the product constraint.
fn weights(max_ell: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_ell).prop_flat_map(|ell| (prop::collection::vec(-1.0f64..1.0, ell), prop::collection::vec(-1.0f64..1.0, ell))).prop_map(
        |(la, lb)| {
            let alphas: Vec<f64> = la.iter().map(|x| x.exp()).collect();
            let mut betas: Vec<f64> = lb.iter().map(|x| x.exp()).collect();
            let ell = betas.len();
            betas[ell - 1] = alphas.iter().product::<f64>() / betas[..ell - 1].iter().product::<f64>();
            (alphas, betas)
        },
    )
}

fn config(max_ell: usize) -> impl Strategy<Value = WeightConfig> {
    weights(max_ell).prop_map(|(a, b)| WeightConfig::new(a, b, 1).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shuffled_covers_are_interlacing_perfect_matchings(cfg in config(3), size in 1usize..9, seed: u64, idx in 0u64..1000) {
        let sh = Shuffler::new(&cfg, size).unwrap();
        let cover = sh.sample(seed, idx);
        cover.validate(&Diamond::with_size(&cfg, size).unwrap()).unwrap();
        let ps = extract_particles(&cover).unwrap();
        prop_assert_eq!(ps.levels.len(), size);
        prop_assert_eq!(cover, sh.sample(seed, idx));
    }

    #[test]
    fn accumulator_merge_ignores_grouping(seed: u64, split in 1u64..15) {
        let cfg = WeightConfig::two_periodic(0.6, 2).unwrap();
        let sh = Shuffler::new(&cfg, cfg.size()).unwrap();
        let windows = vec![Window { t: 2, lo: 2, hi: 6 }, Window { t: 3, lo: 0, hi: 8 }];
        let ps: Vec<_> = (0..16).map(|i| extract_particles(&sh.sample(seed, i)).unwrap()).collect();
        let record = |range: std::ops::Range<usize>| {
            let mut a = StatAccumulator::new(windows.clone(), 3);
            for p in &ps[range] {
                a.record(p, 1.0, 0.5, 2);
            }
            a
        };
        let whole = record(0..16);
        let s = split as usize;
        let left = record(0..s).merge(record(s..16));
        let right = record(s..16).merge(record(0..s));
        for m in [&left, &right] {
            prop_assert_eq!(m.samples, whole.samples);
            prop_assert_eq!(&m.window_sums, &whole.window_sums);
            prop_assert_eq!(&m.level_particles, &whole.level_particles);
            prop_assert_eq!(&m.level_marked, &whole.level_marked);
            prop_assert_eq!(m.joint_marks, whole.joint_marks);
            prop_assert_eq!(&m.report().level1_sorted, &whole.report().level1_sorted);
        }
    }

    #[test]
    fn monodromy_is_unimodular(cfg in config(4), r in 0.3f64..3.0, arg in -3.1f64..3.1) {
        let z = C::from_polar(r, arg);
        let big = big_phi(&cfg, z).unwrap();
        let scale = (big.entry(0, 0) * big.entry(1, 1)).norm() + (big.entry(0, 1) * big.entry(1, 0)).norm();
        prop_assert!((big.det() - 1.0).norm() < 1e-12 * scale.max(1.0));
    }

    #[test]
    fn branches_are_reciprocal_and_ordered(cfg in config(4), r in 0.3f64..3.0, arg in 0.05f64..3.1) {
        let z = C::from_polar(r, arg);
        let (wp, wm) = w_branches(&cfg, z).unwrap();
        prop_assert!((wp * wm - 1.0).norm() < 1e-10);
        prop_assert!(wp.norm() >= wm.norm() * (1.0 - 1e-12));
    }

    #[test]
    fn smoothed_ecdf_is_a_distribution_function(values in prop::collection::vec(-20i32..20, 1..60), h in 0.05f64..2.0) {
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let e = SmoothedEcdf::new(&xs, h);
        let mut prev = 0.0;
        for k in -100..=100 {
            let f = e.cdf(k as f64 * 0.25);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
            prop_assert!(f >= prev - 1e-12);
            prev = f;
        }
        prop_assert!((e.cdf(25.0) - 1.0).abs() < 1e-12);
        prop_assert_eq!(e.cdf(-25.0), 0.0);
    }

    #[test]
    fn rationals_parse_to_their_quotient(p in 1u32..1000, q in 1u32..1000) {
        prop_assert_eq!(parse_number(&format!("{p}/{q}")).unwrap(), p as f64 / q as f64);
        prop_assert_eq!(parse_number(&format!(" {p} ")).unwrap(), p as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_levels_hold_their_particle_counts(cfg in config(3), size in 1usize..7) {
        let mut oracle = Oracle::new(&cfg, size).unwrap();
        let grid = oracle.density_grid().unwrap();
        for (c, col) in grid.iter().enumerate() {
            let total: f64 = col.iter().sum();
            prop_assert!((total - (size - c) as f64).abs() < 1e-9, "column {} holds {}", c, total);
            prop_assert!(col.iter().all(|&p| (-1e-9..=1.0 + 1e-9).contains(&p)));
        }
    }
}
