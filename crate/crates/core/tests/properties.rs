//! Property-based invariants across the decision, KS, HDI and scenario I/O
//! layers.

use proptest::prelude::*;

use equivcheck::decision::{metric_verdict, overall_verdict, rope_test, widen_rope, OverallRule, RopeSpec};
use equivcheck::dist::{Continuous, DomainTransform, Family, FamilyId, ModelInstance};
use equivcheck::freq_ks::{two_sample_ks, weighted_ecdf, KsMethod};
use equivcheck::metrics::MetricName;
use equivcheck::scenario::{parse_scenario_file, write_scenario_set, InputFormat, Sample, Scenario, ScenarioSet};
use equivcheck::stats::{hdi, ks_distance_models, HdiInterval, StatisticKind, StatisticSpec};
use equivcheck::weighted::WeightedSample;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (-10.0..10.0f64, 0.0..5.0f64).prop_map(|(lo, w)| (lo, lo + w))
}

fn weighted(n: std::ops::Range<usize>) -> impl Strategy<Value = WeightedSample> {
    prop::collection::vec((-50.0..50.0f64, 0.01..10.0f64), n).prop_map(|pairs| {
        let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        WeightedSample::new(v, w).unwrap()
    })
}

fn hdi_at(lo: f64, hi: f64) -> HdiInterval {
    HdiInterval { lo, hi, mass: 0.95 }
}

proptest! {
    #[test]
    fn rope_pass_survives_widening((lo, hi) in interval(), (rl, rw) in interval(), grow in 0.0..3.0f64, factor in 1.0..4.0f64) {
        let rope = RopeSpec::new(MetricName::DeltaVL, StatisticKind::MeanDiff, rl, rl + rw.max(1e-6)).unwrap();
        let outer = RopeSpec::new(MetricName::DeltaVL, StatisticKind::MeanDiff, rope.rope[0] - grow, rope.rope[1] + grow).unwrap();
        let h = hdi_at(lo, hi);
        if rope_test(&h, &rope) {
            prop_assert!(rope_test(&h, &outer));
            prop_assert!(rope_test(&h, &widen_rope(&rope, factor).unwrap()));
        }
        let wide = widen_rope(&rope, factor).unwrap();
        prop_assert!(wide.rope[0] <= rope.rope[0] && rope.rope[1] <= wide.rope[1]);
    }

    #[test]
    fn overall_verdict_is_monotone(hdis in prop::collection::vec(interval(), 4), flip in 0usize..4) {
        let rule = OverallRule::default();
        let verdicts_for = |hs: &[(f64, f64)]| -> Vec<_> {
            MetricName::ALL
                .iter()
                .zip(hs)
                .map(|(&m, &(lo, hi))| {
                    let rope = RopeSpec::new(m, StatisticKind::MeanDiff, -3.0, 3.0).unwrap();
                    metric_verdict(&[(StatisticSpec::mean_diff(m), hdi_at(lo, hi), rope)], rule.relaxation_factor).unwrap()
                })
                .collect()
        };
        let before = overall_verdict(&verdicts_for(&hdis), &rule).unwrap();
        // Shrinking one HDI onto 0 can only help.
        let mut improved = hdis.clone();
        improved[flip] = (0.0, 0.0);
        let after = overall_verdict(&verdicts_for(&improved), &rule).unwrap();
        prop_assert!(!before.equivalent || after.equivalent);
    }

    #[test]
    fn ks_invariant_under_increasing_transform(a in weighted(1..40), b in weighted(1..40), scale in 0.1..10.0f64) {
        let base = two_sample_ks(&a, &b, KsMethod::Asymptotic).unwrap();
        let f = |x: f64| x.powi(3) * scale;
        let moved = two_sample_ks(&a.map_values(f), &b.map_values(f), KsMethod::Asymptotic).unwrap();
        prop_assert!((base.d - moved.d).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base.d) && (0.0..=1.0).contains(&base.p_value));
    }

    #[test]
    fn ks_invariant_under_weight_scaling(a in weighted(1..40), b in weighted(1..40), c in 0.001..1000.0f64) {
        let scaled = WeightedSample::new(a.values().to_vec(), a.weights().iter().map(|w| w * c).collect()).unwrap();
        let r1 = two_sample_ks(&a, &b, KsMethod::Asymptotic).unwrap();
        let r2 = two_sample_ks(&scaled, &b, KsMethod::Asymptotic).unwrap();
        prop_assert!((r1.d - r2.d).abs() < 1e-12);
        prop_assert!((r1.p_value - r2.p_value).abs() < 1e-9);
    }

    #[test]
    fn ecdf_is_a_distribution_function(a in weighted(1..60), probes in prop::collection::vec(-60.0..60.0f64, 10)) {
        let e = weighted_ecdf(&a).unwrap();
        prop_assert!(e.x.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(e.f.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((e.f[e.f.len() - 1] - 1.0).abs() < 1e-12);
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let vals: Vec<f64> = sorted.iter().map(|&t| e.eval(t)).collect();
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(e.eval(e.x[0] - 1.0), 0.0);
    }

    #[test]
    fn hdi_width_grows_with_mass(draws in prop::collection::vec(-100.0..100.0f64, 20..300), m1 in 0.05..0.95f64, dm in 0.0..0.04f64) {
        let a = hdi(&draws, m1).unwrap();
        let b = hdi(&draws, m1 + dm).unwrap();
        prop_assert!(a.lo <= a.hi);
        prop_assert!(b.hi - b.lo >= a.hi - a.lo);
    }

    #[test]
    fn model_ks_is_a_symmetric_distance(r1 in 0.1..5.0f64, s in 0.2..6.0f64, r2 in 0.1..5.0f64) {
        let a = ModelInstance::continuous(Continuous::new(Family::new(FamilyId::Exponential), &[r1]).unwrap(), DomainTransform::Identity);
        let b = ModelInstance::continuous(Continuous::new(Family::new(FamilyId::Gamma), &[s, r2]).unwrap(), DomainTransform::Identity);
        let ab = ks_distance_models(&a, &b, None, true).unwrap();
        let ba = ks_distance_models(&b, &a, None, true).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-6);
        prop_assert_eq!(ks_distance_models(&a, &a, None, true).unwrap(), 0.0);
    }

    #[test]
    fn scenario_csv_round_trips(
        scenarios in prop::collection::vec(
            (prop::collection::vec((0.001..1.0f64, 0.0..80.0f64, 0.0..40.0f64, 0.0..40.0f64), 2..12), 0.01..5.0f64),
            1..6,
        )
    ) {
        let set = ScenarioSet::new(
            "prop",
            scenarios
                .into_iter()
                .enumerate()
                .map(|(i, (steps, weight))| {
                    let mut t = -steps.iter().map(|s| s.0).sum::<f64>();
                    let samples = steps
                        .iter()
                        .map(|&(dt, gap, v_lead, v_follow)| {
                            t += dt;
                            Sample { t, gap, v_lead, v_follow }
                        })
                        .collect();
                    Scenario { id: format!("s{i}"), samples, weight }
                })
                .collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_scenario_set(&set, &mut buf).unwrap();
        let back = parse_scenario_file(buf.as_slice(), InputFormat::LongCsv, "prop").unwrap();
        prop_assert_eq!(back, set);
    }
}
