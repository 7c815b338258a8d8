//! Production evalstat code vs. the independent reference implementations,
//! on randomized inputs.

use pf_numcore::Rng;
use pf_pipeline::evalstat::{
    reference, roc_auc, schelter_p, score_alarms, AlarmEvent, EvalConfig,
};
use proptest::prelude::*;

fn config() -> EvalConfig {
    EvalConfig::new(0.5) // SPH 10 min, SOP 30 min
}

#[test]
fn alarm_scoring_matches_exhaustive_oracle_on_random_timelines() {
    let cfg = config();
    let mut rng = Rng::new(0x5eed_a1a2);
    for case in 0..2000 {
        let n_alarms = rng.below(11) as usize;
        let n_onsets = rng.below(11) as usize;
        let mut alarm_times: Vec<f64> = (0..n_alarms)
            .map(|_| (rng.uniform() * 14400.0).floor())
            .collect();
        alarm_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let alarms: Vec<AlarmEvent> = alarm_times
            .iter()
            .map(|&t| AlarmEvent {
                patient_id: "p".into(),
                time_s: t,
            })
            .collect();
        let mut onsets: Vec<f64> = (0..n_onsets)
            .map(|_| (rng.uniform() * 18000.0).floor())
            .collect();
        onsets.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let got = score_alarms(&alarms, &onsets, &cfg).unwrap();
        let (hits, false_alarms, claimed) =
            reference::credit_alarms_exhaustive(&alarms, &onsets, &cfg);
        assert_eq!(got.true_predictions, hits, "case {case}");
        assert_eq!(got.false_alarms, false_alarms, "case {case}");
        for (outcome, was_claimed) in got.per_seizure.iter().zip(&claimed) {
            assert_eq!(outcome.credited_alarm_s.is_some(), *was_claimed, "case {case}");
        }
    }
}

#[test]
fn rank_auc_matches_pair_counting_on_random_sets() {
    let mut rng = Rng::new(77);
    for case in 0..500 {
        let n = 2 + rng.below(40) as usize;
        // Quantized probabilities force plenty of ties.
        let probs: Vec<f64> = (0..n).map(|_| (rng.uniform() * 8.0).floor() / 8.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.below(2) == 0).collect();
        labels[0] = true;
        labels[1] = false; // both classes guaranteed
        let got = roc_auc(&labels, &probs).unwrap();
        let want = reference::auc_pair_counting(&labels, &probs);
        assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
    }
}

#[test]
fn schelter_matches_convolution_oracle() {
    let mut rng = Rng::new(99);
    for _ in 0..500 {
        let fpr = rng.uniform() * 3.0;
        let sop_h = 0.05 + rng.uniform();
        let n_total = rng.below(40) as usize;
        let n = rng.below(n_total + 1);
        let got = schelter_p(fpr, sop_h, n, n_total).unwrap();
        let p = 1.0 - (-fpr * sop_h).exp();
        let want = reference::binomial_tail_convolution(n_total, n, p);
        assert!(
            (got - want).abs() < 1e-12,
            "fpr={fpr} sop={sop_h} n={n}/{n_total}: {got} vs {want}"
        );
    }
}

#[test]
fn series_cdf_matches_erf_oracle_to_1e13() {
    let mut worst = 0.0f64;
    let mut i = -8000;
    while i <= 8000 {
        let x = i as f64 / 1000.0;
        let d = (pf_pipeline::evalstat::normal_cdf(x) - reference::normal_cdf_erf(x)).abs();
        worst = worst.max(d);
        i += 1;
    }
    assert!(worst < 1e-13, "worst deviation {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// More false alarms can only make chance prediction easier.
    #[test]
    fn schelter_is_monotone_in_fpr(n in 1usize..10, extra in 0usize..10, step in 1u32..50) {
        let n_total = n + extra;
        let f1 = step as f64 * 0.03;
        let f2 = f1 + 0.17;
        let p1 = schelter_p(f1, 0.5, n, n_total).unwrap();
        let p2 = schelter_p(f2, 0.5, n, n_total).unwrap();
        prop_assert!(p2 >= p1 - 1e-15, "{p1} -> {p2}");
    }

    /// Demanding fewer of the same seizures can only raise the tail.
    #[test]
    fn schelter_is_monotone_in_slack(n in 1usize..10, extra in 0usize..10, fpr in 0.01f64..2.0) {
        let n_total = n + extra;
        let strict = schelter_p(fpr, 0.5, n, n_total).unwrap();
        let loose = schelter_p(fpr, 0.5, n.saturating_sub(1), n_total).unwrap();
        prop_assert!(loose >= strict - 1e-15);
    }
}
