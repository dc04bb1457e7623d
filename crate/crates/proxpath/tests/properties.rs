use proptest::prelude::*;
use proxpath::bootstrap::{percentile_interval, quantile};
use proxpath::crossfit::make_folds;
use proxpath::dgp::bridge_maps;
use proxpath::study::parametric_estimates;
use proxpath::{simulate, Dataset64, EstimatorTag, ScenarioSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TAGS: [EstimatorTag; 5] = EstimatorTag::PLUGINS_AND_QUADR;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_partition_the_rows(l in 2usize..10, extra in 0usize..300, seed in any::<u64>()) {
        let n = 2 * l + extra;
        let plan = make_folds(n, l, seed).unwrap();
        prop_assert_eq!(plan.len(), l);
        let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for k in 0..l {
            prop_assert_eq!(plan.complement(k).len(), n - plan.folds[k].len());
        }
    }

    #[test]
    fn quantiles_are_monotone_and_bounded(mut v in prop::collection::vec(-1e6f64..1e6, 1..60), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (p.min(q), p.max(q));
        let (a, b) = (quantile(&v, lo), quantile(&v, hi));
        prop_assert!(a <= b);
        prop_assert!(v[0] <= a && b <= v[v.len() - 1]);
        let ci = percentile_interval(&v, 0.9);
        prop_assert!(ci.lo <= ci.hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimates_ignore_row_order(seed in 0u64..1000, perm_seed in any::<u64>()) {
        let spec = ScenarioSpec::default();
        let maps = bridge_maps(&spec);
        let ds = simulate(&spec, 400, seed).unwrap();
        let mut idx: Vec<usize> = (0..ds.n()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = ds.select(&idx);
        let a = parametric_estimates(&ds, &maps, &TAGS).unwrap();
        let b = parametric_estimates(&shuffled, &maps, &TAGS).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel_close(*x, *y, 1e-9), "{} vs {}", x, y);
        }
    }

    #[test]
    fn estimates_are_affine_equivariant_in_y(seed in 0u64..1000, shift in -5.0f64..5.0, scale in 0.2f64..4.0) {
        let spec = ScenarioSpec::default();
        let maps = bridge_maps(&spec);
        let ds = simulate(&spec, 400, seed).unwrap();
        let moved: Dataset64 = ds.with_outcome(ds.y().iter().map(|y| shift + scale * y).collect()).unwrap();
        let a = parametric_estimates(&ds, &maps, &TAGS).unwrap();
        let b = parametric_estimates(&moved, &maps, &TAGS).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel_close(shift + scale * x, *y, 1e-8), "{} vs {}", shift + scale * x, y);
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(seed in any::<u64>(), n in 1usize..50) {
        let ds = simulate(&ScenarioSpec::default(), n, seed).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset64::read_csv(buf.as_slice(), None).unwrap();
        prop_assert_eq!(back, ds);
    }
}
