//! Per-scenario kinematic metrics and weighted metric tables.
//!
//! Four scalar metrics are extracted from every scenario:
//!
//! * `delta_v_l`: lead vehicle velocity change in a perfectly plastic
//!   collision, `r/(1+r) * (v_f(0) - v_l(0))` with `r = m_f/m_l`.
//! * `t_nr`: the no-return time. The latest launch time at which constant
//!   maximum braking of the follower still avoids the lead is located on
//!   the simulation grid; `t_nr` is the first grid time after it.
//! * `a_l_min`, `a_f_min`: minimum accelerations over the pre-impact
//!   window, snapped to exactly zero when above `-accel_zero_eps`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::scenario::{
    is_uniform, resample_uniform, validate_scenario, Scenario, ScenarioSet, ValidationPolicy,
    Violation,
};
use crate::weighted::WeightedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    DeltaVL,
    TNr,
    ALMin,
    AFMin,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        MetricName::DeltaVL,
        MetricName::TNr,
        MetricName::ALMin,
        MetricName::AFMin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::DeltaVL => "delta_v_l",
            MetricName::TNr => "t_nr",
            MetricName::ALMin => "a_l_min",
            MetricName::AFMin => "a_f_min",
        }
    }

    /// Metrics whose values are nonpositive by construction.
    pub fn is_nonpositive(self) -> bool {
        !matches!(self, MetricName::DeltaVL)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Counterfactual braking deceleration magnitude, m/s^2.
    pub a_max_brake: f64,
    /// Follower over lead mass.
    pub mass_ratio: f64,
    /// High-severity delta-v threshold, m/s.
    pub delta_v_high_threshold: f64,
    /// High-criticality |t_nr| threshold, s.
    pub tnr_high_threshold: f64,
    /// Simulation grid step for the no-return search, s.
    pub sim_dt: f64,
    /// Accelerations in `[-accel_zero_eps, inf)` snap to 0.
    pub accel_zero_eps: f64,
    /// Pre-impact window for the acceleration minima, s.
    pub window: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            a_max_brake: 9.0,
            mass_ratio: 1.0,
            delta_v_high_threshold: 15.0 / 3.6,
            tnr_high_threshold: 1.0,
            sim_dt: 0.01,
            accel_zero_eps: 0.05,
            window: 5.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_max_brake", self.a_max_brake),
            ("mass_ratio", self.mass_ratio),
            ("delta_v_high_threshold", self.delta_v_high_threshold),
            ("tnr_high_threshold", self.tnr_high_threshold),
            ("sim_dt", self.sim_dt),
            ("accel_zero_eps", self.accel_zero_eps),
            ("window", self.window),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("metric config `{name}` must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn extract_delta_v(s: &Scenario, cfg: &MetricConfig) -> Result<f64> {
    let last = s
        .last()
        .ok_or_else(|| Error::InsufficientData(format!("scenario {} has no samples", s.id)))?;
    let r = cfg.mass_ratio;
    let closing = (last.v_follow - last.v_lead).max(0.0);
    Ok(r / (1.0 + r) * closing)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoReturnTime {
    pub t_nr: f64,
    /// Braking fails even when launched at the first sample.
    pub censored_at_start: bool,
}

/// Cumulative follower displacement by the trapezoid rule.
fn follower_path(s: &Scenario) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.samples.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in s.samples.windows(2) {
        acc += 0.5 * (w[0].v_follow + w[1].v_follow) * (w[1].t - w[0].t);
        out.push(acc);
    }
    out
}

fn collides_with_path(s: &Scenario, path: &[f64], launch: usize, decel: f64) -> bool {
    let samples = &s.samples;
    let t0 = samples[launch].t;
    let v0 = samples[launch].v_follow;
    let stop_time = v0 / decel;
    let braking_distance = |tau: f64| {
        if tau < stop_time {
            v0 * tau - 0.5 * decel * tau * tau
        } else {
            0.5 * v0 * v0 / decel
        }
    };
    let mut gap = samples[launch].gap;
    let mut tau = 0.0;
    for j in launch..samples.len() {
        tau = samples[j].t - t0;
        gap = samples[j].gap + (path[j] - path[launch]) - braking_distance(tau);
        if gap <= 0.0 {
            return true;
        }
    }
    // Past the horizon the lead holds its last speed; the gap keeps closing
    // until the braking follower slows to that speed.
    let v_lead_end = samples[samples.len() - 1].v_lead;
    let v_end = (v0 - decel * tau).max(0.0);
    if v_end > v_lead_end {
        let rel = v_end - v_lead_end;
        return gap - 0.5 * rel * rel / decel <= 0.0;
    }
    false
}

/// Whether a counterfactual launched at sample `launch` ends in a collision.
pub fn counterfactual_collides(s: &Scenario, launch: usize, decel: f64) -> bool {
    collides_with_path(s, &follower_path(s), launch, decel)
}

/// No-return time on a scenario already resampled to `cfg.sim_dt`.
pub fn extract_no_return_time(s: &Scenario, cfg: &MetricConfig) -> Result<NoReturnTime> {
    if s.samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scenario {} needs at least 2 samples",
            s.id
        )));
    }
    if !is_uniform(s, cfg.sim_dt) {
        return Err(Error::Precondition(format!(
            "scenario {} is not on a uniform {} s grid; resample first",
            s.id, cfg.sim_dt
        )));
    }
    let path = follower_path(s);
    let n = s.samples.len();
    for k in (0..n).rev() {
        if !collides_with_path(s, &path, k, cfg.a_max_brake) {
            let t_nr = s.samples[(k + 1).min(n - 1)].t;
            return Ok(NoReturnTime {
                t_nr: t_nr.min(0.0),
                censored_at_start: false,
            });
        }
    }
    Ok(NoReturnTime {
        t_nr: s.samples[0].t,
        censored_at_start: true,
    })
}

/// Minimum accelerations (lead, follower) over the pre-impact window.
pub fn extract_min_accels(s: &Scenario, cfg: &MetricConfig) -> Result<(f64, f64)> {
    let p = &s.samples;
    let n = p.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "scenario {} needs at least 2 samples for accelerations",
            s.id
        )));
    }
    let t_end = p[n - 1].t;
    let start = p.partition_point(|x| x.t < t_end - cfg.window - 1e-9);
    let deriv = |i: usize, f: fn(&crate::scenario::Sample) -> f64| {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == n - 1 => (n - 2, n - 1),
            i => (i - 1, i + 1),
        };
        (f(&p[b]) - f(&p[a])) / (p[b].t - p[a].t)
    };
    let mut lead = f64::INFINITY;
    let mut follow = f64::INFINITY;
    for i in start..n {
        lead = lead.min(deriv(i, |x| x.v_lead));
        follow = follow.min(deriv(i, |x| x.v_follow));
    }
    let snap = |a: f64| if a >= -cfg.accel_zero_eps { 0.0 } else { a };
    Ok((snap(lead), snap(follow)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario_id: String,
    pub metric: MetricName,
    pub value: f64,
    pub weight: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub dataset_label: String,
    pub rows: Vec<MetricRow>,
}

pub const FLAG_CENSORED: &str = "censored_at_start";
pub const FLAG_SHORT_SPAN: &str = "short_span";

fn scenario_metrics(
    s: &Scenario,
    cfg: &MetricConfig,
    policy: &ValidationPolicy,
) -> Result<Vec<MetricRow>> {
    let report = validate_scenario(s, policy);
    if report.rejected() {
        return Err(Error::InvalidScenario {
            id: s.id.clone(),
            reasons: report.reasons(),
        });
    }
    let mut common = Vec::new();
    if report
        .flagged()
        .any(|v| matches!(v, Violation::ShortSpan { .. }))
    {
        common.push(FLAG_SHORT_SPAN.to_string());
    }
    let wrap = |e: Error| Error::Extraction {
        id: s.id.clone(),
        source: Box::new(e),
    };
    let dv = extract_delta_v(s, cfg).map_err(wrap)?;
    let grid = resample_uniform(s, cfg.sim_dt).map_err(wrap)?;
    let nr = extract_no_return_time(&grid, cfg).map_err(wrap)?;
    let (al, af) = extract_min_accels(s, cfg).map_err(wrap)?;
    let row = |metric, value, extra: Option<&str>| {
        let mut flags = common.clone();
        flags.extend(extra.map(str::to_string));
        MetricRow {
            scenario_id: s.id.clone(),
            metric,
            value,
            weight: s.weight,
            flags,
        }
    };
    Ok(vec![
        row(MetricName::DeltaVL, dv, None),
        row(
            MetricName::TNr,
            nr.t_nr,
            nr.censored_at_start.then_some(FLAG_CENSORED),
        ),
        row(MetricName::ALMin, al, None),
        row(MetricName::AFMin, af, None),
    ])
}

/// Extract all four metrics from every scenario of a dataset.
pub fn build_metric_table(
    set: &ScenarioSet,
    cfg: &MetricConfig,
    policy: &ValidationPolicy,
) -> Result<MetricTable> {
    cfg.validate()?;
    let per_scenario = par::map_slice(&set.scenarios, |s| scenario_metrics(s, cfg, policy));
    let mut rows = Vec::with_capacity(set.len() * 4);
    for r in per_scenario {
        rows.extend(r?);
    }
    Ok(MetricTable {
        dataset_label: set.label.clone(),
        rows,
    })
}

impl MetricTable {
    pub fn rows_for(&self, metric: MetricName) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn sample(&self, metric: MetricName) -> Result<WeightedSample> {
        let (values, weights) = self.rows_for(metric).map(|r| (r.value, r.weight)).unzip();
        WeightedSample::new(values, weights)
    }

    pub fn metrics(&self) -> Vec<MetricName> {
        let mut m: Vec<MetricName> = self.rows.iter().map(|r| r.metric).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["dataset", "scenario_id", "metric", "value", "weight", "flags"])?;
        for r in &self.rows {
            w.write_record([
                self.dataset_label.as_str(),
                r.scenario_id.as_str(),
                r.metric.as_str(),
                &r.value.to_string(),
                &r.weight.to_string(),
                &r.flags.join(";"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<MetricTable> {
        let mut reader = csv::Reader::from_reader(source);
        let mut label: Option<String> = None;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| Error::Parse { line, msg };
            if rec.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", rec.len())));
            }
            match &label {
                None => label = Some(rec[0].to_string()),
                Some(l) if l != &rec[0] => {
                    return Err(bad(format!("mixed datasets `{l}` and `{}`", &rec[0])))
                }
                _ => {}
            }
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{}` is not a number", &rec[i])))
            };
            rows.push(MetricRow {
                scenario_id: rec[1].to_string(),
                metric: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
                value: num(3)?,
                weight: num(4)?,
                flags: rec[5]
                    .split(';')
                    .filter(|f| !f.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        let dataset_label = label.ok_or(Error::EmptyInput)?;
        Ok(MetricTable {
            dataset_label,
            rows,
        })
    }
}
