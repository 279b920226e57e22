//! Metric extraction against a committed golden table and an independent
//! brute-force no-return-time sweep.

use std::collections::HashMap;

use equivcheck::metrics::{build_metric_table, extract_no_return_time, MetricConfig, MetricName};
use equivcheck::scenario::{resample_uniform, Sample, Scenario, ScenarioSet, ValidationPolicy};
use equivcheck::synth::{generate, SynthConfig};

/// Piecewise-linear speeds ending at impact (t = 0): each vehicle's speed
/// is `v_impact - decel * t` over [-6, 0] and the gap closes to zero.
fn linear_scenario(id: &str, weight: f64, vl: f64, al: f64, vf: f64, af: f64) -> Scenario {
    let samples = (0..=60)
        .map(|i| {
            let t = -((60 - i) as f64) * 0.1;
            Sample {
                t,
                gap: -(vf - vl) * t + (af - al) * t * t / 2.0,
                v_lead: vl - al * t,
                v_follow: vf - af * t,
            }
        })
        .collect();
    Scenario {
        id: id.into(),
        samples,
        weight,
    }
}

struct Golden {
    weight: f64,
    values: [f64; 4],
}

fn golden_table() -> HashMap<String, Golden> {
    let text = include_str!("fixtures/golden_metrics.csv");
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let f = |i: usize| r[i].parse::<f64>().unwrap();
            (
                r[0].to_string(),
                Golden {
                    weight: f(1),
                    values: [f(2), f(3), f(4), f(5)],
                },
            )
        })
        .collect()
}

#[test]
fn golden_fixture_matches_committed_table() {
    let params = [
        ("g01", 1.0, 0.0, 0.0, 20.0, 0.0),
        ("g02", 0.5, 5.0, 0.0, 15.0, 0.0),
        ("g03", 2.0, 10.0, 2.0, 18.0, 0.0),
        ("g04", 1.0, 8.0, 3.0, 14.0, 4.0),
        ("g05", 1.5, 0.0, 0.0, 35.0, 0.0),
        ("g06", 0.8, 12.0, -1.5, 16.0, 1.0),
        ("g07", 1.0, 3.0, 0.02, 11.0, 2.5),
        ("g08", 1.2, 6.0, 4.0, 20.0, 6.0),
        ("g09", 1.0, 15.0, 1.0, 17.0, 1.0),
        ("g10", 0.7, 2.0, 1.2, 9.0, 0.5),
    ];
    let set = ScenarioSet::new(
        "golden",
        params
            .iter()
            .map(|&(id, w, vl, al, vf, af)| linear_scenario(id, w, vl, al, vf, af))
            .collect(),
    )
    .unwrap();
    let cfg = MetricConfig::default();
    let table = build_metric_table(&set, &cfg, &ValidationPolicy::default()).unwrap();
    let golden = golden_table();
    assert_eq!(golden.len(), 10);
    assert_eq!(table.rows.len(), 40);
    for row in &table.rows {
        let g = &golden[&row.scenario_id];
        assert_eq!(row.weight, g.weight);
        let (expect, tol) = match row.metric {
            MetricName::DeltaVL => (g.values[0], 1e-12),
            // Grid search: within one simulation step of the continuous answer.
            MetricName::TNr => (g.values[1], cfg.sim_dt + 1e-6),
            MetricName::ALMin => (g.values[2], 1e-9),
            MetricName::AFMin => (g.values[3], 1e-9),
        };
        assert!(
            (row.value - expect).abs() <= tol,
            "{} {}: {} vs golden {expect}",
            row.scenario_id,
            row.metric.as_str(),
            row.value
        );
        assert!(row.flags.is_empty(), "{}: unexpected flags {:?}", row.scenario_id, row.flags);
    }
}

fn interp(s: &Scenario, t: f64, f: fn(&Sample) -> f64) -> f64 {
    let p = &s.samples;
    if t >= p[p.len() - 1].t {
        return f(&p[p.len() - 1]);
    }
    let j = p.partition_point(|x| x.t <= t).clamp(1, p.len() - 1);
    let (a, b) = (&p[j - 1], &p[j]);
    let u = (t - a.t) / (b.t - a.t);
    f(a) + u * (f(b) - f(a))
}

/// Direct time-stepping of the counterfactual: the follower brakes at
/// `decel` from `t0` while the lead keeps its recorded speed (then its final
/// speed past impact).
fn simulate_collides(s: &Scenario, t0: f64, decel: f64, h: f64) -> bool {
    let mut gap = interp(s, t0, |p| p.gap);
    let mut v = interp(s, t0, |p| p.v_follow);
    let mut t = t0;
    loop {
        if gap <= 0.0 {
            return true;
        }
        let vl0 = interp(s, t, |p| p.v_lead);
        if t >= 0.0 && v <= vl0 {
            return false;
        }
        let v1 = (v - decel * h).max(0.0);
        let vl1 = interp(s, t + h, |p| p.v_lead);
        gap -= 0.5 * ((v + v1) - (vl0 + vl1)) * h;
        v = v1;
        t += h;
    }
}

#[test]
fn no_return_time_matches_dense_sweep() {
    let cfg = MetricConfig::default();
    let set = generate(&SynthConfig {
        label: "sweep".into(),
        n: 12,
        seed: 2718,
        lead_brake_prob: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let fine_dt = cfg.sim_dt / 10.0;
    for sc in &set.scenarios {
        let grid = resample_uniform(sc, cfg.sim_dt).unwrap();
        let nr = extract_no_return_time(&grid, &cfg).unwrap();
        let t_start = sc.samples[0].t;
        let steps = (-t_start / fine_dt).round() as i64;
        // Latest launch time that still avoids the collision.
        let mut brute = t_start;
        for k in 0..=steps {
            let t0 = -(k as f64) * fine_dt;
            if !simulate_collides(sc, t0, cfg.a_max_brake, fine_dt) {
                brute = t0 + fine_dt;
                break;
            }
        }
        let brute = brute.min(0.0);
        assert!(
            (nr.t_nr - brute).abs() <= cfg.sim_dt + 1e-9,
            "{}: grid t_nr {} vs brute-force {brute}",
            sc.id,
            nr.t_nr
        );
    }
}
