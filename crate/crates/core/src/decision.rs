//! ROPE equivalence tests, per-metric verdicts and the overall rule.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricName;
use crate::stats::{HdiInterval, StatisticKind, StatisticSpec};

fn default_mass() -> f64 {
    0.95
}

/// Region of practical equivalence for one statistic of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeSpec {
    pub metric: MetricName,
    pub statistic: StatisticKind,
    pub rope: [f64; 2],
    #[serde(default = "default_mass")]
    pub mass: f64,
}

impl RopeSpec {
    pub fn new(metric: MetricName, statistic: StatisticKind, lo: f64, hi: f64) -> Result<Self> {
        let r = RopeSpec {
            metric,
            statistic,
            rope: [lo, hi],
            mass: default_mass(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rope;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "ROPE for {} {} must satisfy lo < hi, got [{lo}, {hi}]",
                self.metric, self.statistic
            )));
        }
        if !(self.mass > 0.0 && self.mass < 1.0) {
            return Err(Error::Config(format!(
                "ROPE mass for {} {} must lie in (0, 1), got {}",
                self.metric, self.statistic, self.mass
            )));
        }
        Ok(())
    }
}

/// Closed containment of the HDI in the ROPE.
pub fn rope_test(hdi: &HdiInterval, rope: &RopeSpec) -> bool {
    rope.rope[0] <= hdi.lo && hdi.hi <= rope.rope[1]
}

/// Scale the ROPE width by `factor` about its midpoint.
pub fn widen_rope(rope: &RopeSpec, factor: f64) -> Result<RopeSpec> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::Config(format!(
            "relaxation factor must be finite and >= 1, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(*rope);
    }
    let [lo, hi] = rope.rope;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * factor * (hi - lo);
    Ok(RopeSpec {
        rope: [mid - half, mid + half],
        ..*rope
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub spec: StatisticSpec,
    pub hdi: HdiInterval,
    pub rope: RopeSpec,
    pub pass: bool,
    /// Pass under the ROPE widened by the relaxation factor.
    pub relaxed_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVerdict {
    pub metric: MetricName,
    pub statistic_results: Vec<StatisticResult>,
    pub equivalent: bool,
}

/// A metric is equivalent when every one of its statistics passes.
pub fn metric_verdict(
    results: &[(StatisticSpec, HdiInterval, RopeSpec)],
    relaxation_factor: f64,
) -> Result<MetricVerdict> {
    let Some(first) = results.first() else {
        return Err(Error::Config("a metric verdict needs at least one statistic".into()));
    };
    let metric = first.0.metric;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(results.len());
    for (spec, hdi, rope) in results {
        if spec.metric != metric || rope.metric != metric || rope.statistic != spec.kind {
            return Err(Error::Config(format!(
                "statistic {} on {} paired with ROPE for {} {}",
                spec.kind, spec.metric, rope.metric, rope.statistic
            )));
        }
        if !seen.insert(spec.kind) {
            return Err(Error::Config(format!(
                "duplicate {} statistic for {metric}",
                spec.kind
            )));
        }
        rope.validate()?;
        let wide = widen_rope(rope, relaxation_factor)?;
        out.push(StatisticResult {
            spec: spec.clone(),
            hdi: *hdi,
            rope: *rope,
            pass: rope_test(hdi, rope),
            relaxed_pass: rope_test(hdi, &wide),
        });
    }
    Ok(MetricVerdict {
        metric,
        equivalent: out.iter().all(|r| r.pass),
        statistic_results: out,
    })
}

/// Overall equivalence rule: required metrics must pass; at least `quorum`
/// of the remaining metrics must pass; every remaining metric that does not
/// pass must pass all its statistics under the widened ROPEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverallRule {
    pub required_metrics: Vec<MetricName>,
    #[serde(default)]
    pub quorum: usize,
    #[serde(default = "default_relaxation")]
    pub relaxation_factor: f64,
}

fn default_relaxation() -> f64 {
    1.25
}

impl Default for OverallRule {
    fn default() -> Self {
        OverallRule {
            required_metrics: vec![MetricName::DeltaVL, MetricName::TNr],
            quorum: 1,
            relaxation_factor: default_relaxation(),
        }
    }
}

impl OverallRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation_factor >= 1.0) || !self.relaxation_factor.is_finite() {
            return Err(Error::Config(format!(
                "relaxation_factor must be finite and >= 1, got {}",
                self.relaxation_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub clause: String,
    pub satisfied: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallVerdict {
    pub equivalent: bool,
    pub rationale: Vec<Clause>,
}

fn names(ms: &[MetricName]) -> String {
    if ms.is_empty() {
        "none".into()
    } else {
        ms.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
    }
}

pub fn overall_verdict(verdicts: &[MetricVerdict], rule: &OverallRule) -> Result<OverallVerdict> {
    rule.validate()?;
    for m in &rule.required_metrics {
        if !verdicts.iter().any(|v| v.metric == *m) {
            return Err(Error::Config(format!("required metric {m} has no verdict")));
        }
    }
    let required: Vec<&MetricVerdict> = verdicts
        .iter()
        .filter(|v| rule.required_metrics.contains(&v.metric))
        .collect();
    let remaining: Vec<&MetricVerdict> = verdicts
        .iter()
        .filter(|v| !rule.required_metrics.contains(&v.metric))
        .collect();

    let req_failed: Vec<MetricName> = required
        .iter()
        .filter(|v| !v.equivalent)
        .map(|v| v.metric)
        .collect();
    let rem_passed: Vec<MetricName> = remaining
        .iter()
        .filter(|v| v.equivalent)
        .map(|v| v.metric)
        .collect();
    let rem_deviating: Vec<&MetricVerdict> = remaining.iter().copied().filter(|v| !v.equivalent).collect();
    let beyond_relaxed: Vec<MetricName> = rem_deviating
        .iter()
        .filter(|v| !v.statistic_results.iter().all(|r| r.relaxed_pass))
        .map(|v| v.metric)
        .collect();

    let rationale = vec![
        Clause {
            clause: "required_metrics_pass".into(),
            satisfied: req_failed.is_empty(),
            detail: format!(
                "required: {}; failing: {}",
                names(&rule.required_metrics),
                names(&req_failed)
            ),
        },
        Clause {
            clause: "quorum_of_remaining".into(),
            satisfied: rem_passed.len() >= rule.quorum,
            detail: format!(
                "{} of {} remaining metrics pass (need {}): {}",
                rem_passed.len(),
                remaining.len(),
                rule.quorum,
                names(&rem_passed)
            ),
        },
        Clause {
            clause: "deviating_within_relaxed_rope".into(),
            satisfied: beyond_relaxed.is_empty(),
            detail: format!(
                "deviating: {}; outside {}x-widened ROPEs: {}",
                names(&rem_deviating.iter().map(|v| v.metric).collect::<Vec<_>>()),
                rule.relaxation_factor,
                names(&beyond_relaxed)
            ),
        },
    ];
    Ok(OverallVerdict {
        equivalent: rationale.iter().all(|c| c.satisfied),
        rationale,
    })
}
