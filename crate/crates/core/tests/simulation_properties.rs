use bconcord::bssc::{run_chain, summarize, SpikeSlabConfig};
use bconcord::rng::SeededRng;
use bconcord::simulate::sample_mvn;
use bconcord::simulate::{accuracy, generate_truth, replicate, BenchSpec, DiagRule, Method, TruthSpec};
use bconcord::{num_pairs, pattern_of, SampleCovariance, SparsityPattern};
use proptest::prelude::*;

#[test]
fn mcc_improves_with_sample_size() {
    let run = |n| {
        let mut spec = BenchSpec::new(50, n, 0.05, 3, Method::Bssc, 77);
        spec.diag_rule = DiagRule::EigenShift { margin: 0.1 };
        spec.bssc.burn_in = 500;
        spec.bssc.keep = 500;
        replicate(&spec).unwrap().mean_mcc
    };
    let (small, large) = (run(40), run(400));
    assert!(large > small + 0.1, "n=40: {small}, n=400: {large}");
    assert!(large > 0.7, "{large}");
}

fn bits(p: usize) -> impl Strategy<Value = SparsityPattern> {
    prop::collection::vec(any::<bool>(), num_pairs(p)).prop_map(move |b| SparsityPattern::from_bools(p, &b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn accuracy_counts_partition_pairs((sel, truth) in (2usize..12).prop_flat_map(|p| (bits(p), bits(p)))) {
        let r = accuracy(&sel, &truth).unwrap();
        prop_assert_eq!(r.tp + r.tn + r.fp + r.fn_, sel.len());
        prop_assert!((-1.0..=1.0).contains(&r.mcc));
        prop_assert!((0.0..=1.0).contains(&r.sp) && (0.0..=1.0).contains(&r.se));
    }

    #[test]
    fn perfect_selection_scores_one(truth in (2usize..12).prop_flat_map(bits)) {
        let r = accuracy(&truth, &truth).unwrap();
        prop_assert_eq!(r.fp + r.fn_, 0);
        let mixed = truth.density() > 0 && truth.density() < truth.len();
        prop_assert!(!mixed || (r.mcc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truth_is_positive_definite(seed in 0u64..1000, p in 2usize..30, density in 0.0f64..0.5, eig in any::<bool>()) {
        let mut spec = TruthSpec::new(p, density);
        if eig {
            spec.diag_rule = DiagRule::EigenShift { margin: 0.1 };
        }
        let o = generate_truth(&spec, &mut SeededRng::new(seed, 0)).unwrap();
        prop_assert!(o.min_eigenvalue() > 0.0);
        prop_assert_eq!(pattern_of(&o, 0.0).density(), spec.edge_count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inclusion_is_a_probability_and_selection_is_monotone(seed in 0u64..1000, p in 2usize..7) {
        let truth = generate_truth(&TruthSpec::new(p, 0.3), &mut SeededRng::new(seed, 0)).unwrap();
        let data = sample_mvn(&truth, 30, &mut SeededRng::new(seed, 1)).unwrap();
        let s = SampleCovariance::from_data(&data, true).unwrap();
        let cfg = SpikeSlabConfig { burn_in: 50, keep: 200, ..Default::default() };
        let trace = run_chain(&s, 30, &cfg, None, &mut SeededRng::new(seed, 2)).unwrap();
        for x in trace.inclusion() {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let mut prev = summarize(&trace, 0.1).unwrap().selected;
        for t in [0.3, 0.5, 0.7, 0.9] {
            let cur = summarize(&trace, t).unwrap().selected;
            prop_assert!(cur.is_subset_of(&prev));
            prev = cur;
        }
    }
}
