//! Synthetic rear-end pre-crash scenarios built backward from impact.
//!
//! Each scenario fixes the speeds at impact (t = 0) and integrates the
//! relative speed backward to get the gap, so the final gap is exactly zero.
//! Lead and follower each either hold a constant speed or brake at a
//! constant deceleration over a final interval before impact.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::scenario::{write_scenario_set, Sample, Scenario, ScenarioSet};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub label: String,
    pub n: usize,
    pub seed: u64,
    /// Draw lognormal sampling weights instead of unit weights.
    pub weighted: bool,
    /// Multiplier on the closing speed at impact.
    pub closing_scale: f64,
    /// Seconds of history before impact.
    pub span: f64,
    pub dt: f64,
    pub lead_brake_prob: f64,
    pub follow_brake_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            label: "synthetic".into(),
            n: 1000,
            seed: 0,
            weighted: false,
            closing_scale: 1.0,
            span: 6.0,
            dt: 0.1,
            lead_brake_prob: 0.45,
            follow_brake_prob: 0.55,
        }
    }
}

/// Deceleration cap of the templates, m/s^2.
const MAX_DECEL: f64 = 9.5;

/// Speed profile `v(t) = v0 + a * min(-t, d)` for `t <= 0`: constant
/// deceleration `a` over the last `d` seconds, constant speed before that.
#[derive(Debug, Clone, Copy)]
struct Profile {
    v0: f64,
    a: f64,
    d: f64,
}

impl Profile {
    fn speed(&self, t: f64) -> f64 {
        self.v0 + self.a * (-t).min(self.d)
    }

    /// Distance covered from `t` to impact.
    fn distance_to_impact(&self, t: f64) -> f64 {
        let tau = -t;
        let braking = if tau <= self.d {
            0.5 * tau * tau
        } else {
            0.5 * self.d * self.d + self.d * (tau - self.d)
        };
        self.v0 * tau + self.a * braking
    }
}

fn profile<R: Rng>(rng: &mut R, v0: f64, brake_prob: f64, decel: &LogNormal<f64>, window: (f64, f64)) -> Profile {
    if rng.random::<f64>() < brake_prob {
        Profile {
            v0,
            a: loop {
                // Redraw rather than clip so no artificial spike forms at the cap.
                let a = decel.sample(rng);
                if a <= MAX_DECEL {
                    break a;
                }
            },
            d: Uniform::new(window.0, window.1).expect("valid window").sample(rng),
        }
    } else {
        Profile { v0, a: 0.0, d: 0.0 }
    }
}

fn one_scenario(cfg: &SynthConfig, index: usize) -> Scenario {
    let mut rng = seed::rng(seed::derive_index(seed::derive(cfg.seed, &["synth", &cfg.label]), index as u64));
    let closing = Gamma::<f64>::new(4.0, 2.0).expect("valid gamma");
    let lead_decel = LogNormal::new(3.5f64.ln(), 0.4).expect("valid lognormal");
    let follow_decel = LogNormal::new(5.0f64.ln(), 0.35).expect("valid lognormal");
    let weight_dist = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    let steps = (cfg.span / cfg.dt).round() as usize;

    loop {
        let v_lead0 = Uniform::new(0.0, 15.0).expect("valid range").sample(&mut rng);
        let c = cfg.closing_scale * closing.sample(&mut rng).max(0.5);
        let lead = profile(&mut rng, v_lead0, cfg.lead_brake_prob, &lead_decel, (0.5, 4.0));
        let follow = profile(&mut rng, v_lead0 + c, cfg.follow_brake_prob, &follow_decel, (0.3, 1.5));
        let samples: Vec<Sample> = (0..=steps)
            .rev()
            .map(|k| {
                let t = 0.0 - k as f64 * cfg.dt;
                Sample {
                    t,
                    gap: follow.distance_to_impact(t) - lead.distance_to_impact(t),
                    v_lead: lead.speed(t),
                    v_follow: follow.speed(t),
                }
            })
            .collect();
        if samples.iter().any(|s| s.gap < 0.0) {
            continue;
        }
        let weight = if cfg.weighted {
            weight_dist.sample(&mut rng)
        } else {
            1.0
        };
        return Scenario {
            id: format!("{}-{:05}", cfg.label, index + 1),
            samples,
            weight,
        };
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<ScenarioSet> {
    if cfg.n == 0 {
        return Err(Error::Config("synthetic set size must be positive".into()));
    }
    if !(cfg.dt > 0.0 && cfg.span >= cfg.dt && cfg.closing_scale > 0.0) {
        return Err(Error::Config(
            "synthetic span, dt and closing_scale must be positive".into(),
        ));
    }
    let scenarios = par::map_range(cfg.n, |i| one_scenario(cfg, i));
    ScenarioSet::new(cfg.label.clone(), scenarios)
}

/// Scenario counts of the demo pair.
pub const DEMO_REFERENCE_SIZE: usize = 5000;
pub const DEMO_CANDIDATE_SIZE: usize = 866;

/// Demo run configuration. ROPEs are illustrative, not recommendations.
pub const DEMO_CONFIG: &str = include_str!("demo_config.toml");

/// Write `reference.csv`, `candidate.csv` and `config.toml` into `dir` and
/// return the config path. The reference set is weighted; the candidate is
/// unweighted and drawn from the same templates with its closing speed
/// scaled by `candidate_closing_scale` (1.0 gives an equivalent control).
pub fn write_demo(dir: &Path, seed: u64, candidate_closing_scale: f64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sets = [
        ("reference", DEMO_REFERENCE_SIZE, true, 1.0),
        ("candidate", DEMO_CANDIDATE_SIZE, false, candidate_closing_scale),
    ];
    for (label, n, weighted, scale) in sets {
        let set = generate(&SynthConfig {
            label: label.into(),
            n,
            seed,
            weighted,
            closing_scale: scale,
            ..Default::default()
        })?;
        let path = dir.join(format!("{label}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_scenario_set(&set, std::io::BufWriter::new(file))?;
    }
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, DEMO_CONFIG).map_err(|e| Error::io(&cfg, e))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate_scenario, ValidationPolicy};

    #[test]
    fn scenarios_are_valid_and_seeded() {
        let cfg = SynthConfig {
            n: 200,
            weighted: true,
            seed: 4,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a.scenarios, generate(&cfg).unwrap().scenarios);
        for s in &a.scenarios {
            let r = validate_scenario(s, &ValidationPolicy::default());
            assert!(r.is_clean(), "{}: {}", s.id, r.reasons());
            assert_eq!(s.last().unwrap().gap, 0.0);
        }
    }

    #[test]
    fn profile_distance_matches_quadrature() {
        let p = Profile { v0: 3.0, a: 4.0, d: 1.3 };
        let t = -2.7;
        let n = 27_000;
        let h = -t / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let a = t + i as f64 * h;
            s += 0.5 * (p.speed(a) + p.speed(a + h)) * h;
        }
        assert!((s - p.distance_to_impact(t)).abs() < 1e-6);
    }
}
