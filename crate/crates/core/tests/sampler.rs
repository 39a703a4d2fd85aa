mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use secmine::lexicon::SourceKind;
use secmine::sampler::{draw_sample, normal_quantile, required_sample_size, SampleSpec, SampleTask};

fn spec(confidence: f64, margin: f64) -> SampleSpec {
    SampleSpec { confidence, margin, ..SampleSpec::default() }
}

fn tasks(stratum: &str, n: usize) -> Vec<SampleTask> {
    (0..n)
        .map(|i| SampleTask {
            task_id: format!("{stratum}:{i}"),
            source_kind: SourceKind::Comment,
            stratum: stratum.into(),
            payload: String::new(),
            matches: vec![],
        })
        .collect()
}

#[test]
fn reference_sizes_match_margin_search() {
    for (n, expected) in [(1000, 278), (10_000, 370)] {
        assert_eq!(common::smallest_n_by_margin(n, 0.95, 0.05, 0.5), expected);
        assert_eq!(required_sample_size(n, &SampleSpec::default()).unwrap(), expected);
    }
}

#[test]
fn quantile_agrees_with_integrated_cdf() {
    for c in [0.8, 0.9, 0.95, 0.99, 0.999] {
        let z = normal_quantile(1.0 - (1.0 - c) / 2.0);
        assert!((z - common::z_by_bisection(c)).abs() < 1e-7, "confidence {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn size_is_smallest_meeting_margin(population in 1u64..5000, confidence in 0.8f64..0.995, margin in 0.01f64..0.2) {
        let got = required_sample_size(population, &spec(confidence, margin)).unwrap();
        let oracle = common::smallest_n_by_margin(population, confidence, margin, 0.5);
        // Two z evaluations can straddle an integer boundary by rounding noise.
        prop_assert!(got.abs_diff(oracle) <= 1, "{} vs {}", got, oracle);
        prop_assert!(got >= 1 && got <= population);
    }

    #[test]
    fn size_is_monotone_in_population(a in 1u64..100_000, b in 1u64..100_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        let s = SampleSpec::default();
        prop_assert!(required_sample_size(lo, &s).unwrap() <= required_sample_size(hi, &s).unwrap());
    }

    #[test]
    fn draw_is_deterministic_and_stratum_independent(seed in any::<u64>(), n_a in 1usize..400, n_b in 1usize..400) {
        let s = SampleSpec { seed, ..SampleSpec::default() };
        let both: BTreeMap<String, Vec<SampleTask>> = [("p/a".to_string(), tasks("p/a", n_a)), ("p/b".to_string(), tasks("p/b", n_b))].into();
        let only_a: BTreeMap<String, Vec<SampleTask>> = [("p/a".to_string(), tasks("p/a", n_a))].into();
        let first = draw_sample(&both, &s).unwrap();
        prop_assert_eq!(&first, &draw_sample(&both, &s).unwrap());
        let a_part: Vec<_> = first.iter().filter(|t| t.stratum == "p/a").cloned().collect();
        prop_assert_eq!(a_part.len() as u64, required_sample_size(n_a as u64, &s).unwrap());
        prop_assert_eq!(a_part, draw_sample(&only_a, &s).unwrap());
        let ids: BTreeSet<_> = first.iter().map(|t| &t.task_id).collect();
        prop_assert_eq!(ids.len(), first.len());
    }
}

#[test]
fn draw_is_roughly_uniform() {
    let strata: BTreeMap<String, Vec<SampleTask>> = [("p/c".to_string(), tasks("p/c", 20))].into();
    let s = spec(0.5, 0.25);
    let k = required_sample_size(20, &s).unwrap() as usize;
    let mut hits = [0usize; 20];
    let trials = 4000;
    for seed in 0..trials {
        for t in draw_sample(&strata, &SampleSpec { seed, ..s }).unwrap() {
            hits[t.task_id.rsplit(':').next().unwrap().parse::<usize>().unwrap()] += 1;
        }
    }
    let expected = trials as f64 * k as f64 / 20.0;
    let chi2: f64 = hits.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
    // 19 degrees of freedom; 43.8 is the 0.999 quantile.
    assert!(chi2 < 43.8, "chi2 {chi2}, hits {hits:?}");
}
