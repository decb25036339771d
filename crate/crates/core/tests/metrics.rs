mod common;

use common::metric_oracle::{run_cases, vocabulary_matches_tokenizer, FRE_CASES, FRE_TOLERANCE};
use storyrag::eval::{fre, MetricConfig};

#[test]
fn vocabulary_assumptions_hold() {
    vocabulary_matches_tokenizer().unwrap();
}

#[test]
fn metrics_match_brute_force_oracle() {
    for seed in [1, 2, 3] {
        assert_eq!(run_cases(seed, 200), Ok(200));
    }
}

#[test]
fn fre_matches_hand_computed_values() {
    let cfg = MetricConfig::default();
    for (text, want) in FRE_CASES {
        let got = fre(text, &cfg).unwrap();
        assert!((got - want).abs() <= FRE_TOLERANCE, "{text}: {got} vs {want}");
    }
}
