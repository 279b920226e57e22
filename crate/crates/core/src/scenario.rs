//! Weighted pre-crash scenario datasets: parsing, validation, resampling.
//!
//! A scenario is a longitudinal time series ending at the impact moment
//! (t = 0) with the inter-vehicle gap and both vehicles' speeds. Datasets
//! are read from long-form CSV with header
//! `scenario_id,t,gap,v_lead,v_follow[,weight]`.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header columns, in order. `weight` is optional on input.
pub const COLUMNS: [&str; 6] = ["scenario_id", "t", "gap", "v_lead", "v_follow", "weight"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds relative to impact.
    pub t: f64,
    /// Bumper-to-bumper distance, m.
    pub gap: f64,
    /// Lead vehicle longitudinal speed, m/s.
    pub v_lead: f64,
    /// Following vehicle longitudinal speed, m/s.
    pub v_follow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub samples: Vec<Sample>,
    pub weight: f64,
}

impl Scenario {
    pub fn span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub label: String,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(label: impl Into<String>, scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::EmptyInput);
        }
        let set = ScenarioSet {
            label: label.into(),
            scenarios,
        };
        if !(set.weight_total() > 0.0) {
            return Err(Error::DegenerateWeights(format!(
                "dataset {} has zero total weight",
                set.label
            )));
        }
        Ok(set)
    }

    pub fn weight_total(&self) -> f64 {
        self.scenarios.iter().map(|s| s.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    LongCsv,
}

/// Parse a long-form CSV dataset.
///
/// Samples are grouped by `scenario_id` (first-appearance order) and sorted
/// by `t`. A missing `weight` column gives every scenario weight 1.
pub fn parse_scenario_file<R: Read>(
    source: R,
    format: InputFormat,
    label: &str,
) -> Result<ScenarioSet> {
    let InputFormat::LongCsv = format;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let cols: Vec<&str> = header.iter().collect();
    let has_weight = match cols.as_slice() {
        c if c == &COLUMNS[..5] => false,
        c if c == &COLUMNS[..] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "header must be `{}` with optional `,weight`, got `{}`",
                    COLUMNS[..5].join(","),
                    cols.join(",")
                ),
            })
        }
    };

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut scenarios: Vec<Scenario> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = if has_weight { 6 } else { 5 };
        if record.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty scenario_id".into(),
            });
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = record[i].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column `{}`: `{}` is not a number", COLUMNS[i], &record[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("column `{}` is not finite", COLUMNS[i]),
                });
            }
            Ok(v)
        };
        let sample = Sample {
            t: num(1)?,
            gap: num(2)?,
            v_lead: num(3)?,
            v_follow: num(4)?,
        };
        let weight = if has_weight { num(5)? } else { 1.0 };
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            scenarios.push(Scenario {
                id: id.clone(),
                samples: Vec::new(),
                weight,
            });
            scenarios.len() - 1
        });
        let scenario = &mut scenarios[slot];
        if scenario.weight != weight {
            return Err(Error::InconsistentWeight { id });
        }
        scenario.samples.push(sample);
    }
    if scenarios.is_empty() {
        return Err(Error::EmptyInput);
    }
    for s in &mut scenarios {
        s.samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        if let Some(w) = s.samples.windows(2).find(|w| w[0].t == w[1].t) {
            return Err(Error::DuplicateSample {
                id: s.id.clone(),
                t: w[0].t,
            });
        }
    }
    ScenarioSet::new(label, scenarios)
}

/// Re-emit a dataset in long-form CSV (always with the weight column).
pub fn write_scenario_set<W: Write>(set: &ScenarioSet, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(COLUMNS)?;
    for s in &set.scenarios {
        for p in &s.samples {
            w.write_record([
                s.id.clone(),
                p.t.to_string(),
                p.gap.to_string(),
                p.v_lead.to_string(),
                p.v_follow.to_string(),
                s.weight.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Short spans are flagged; everything else rejects.
    #[default]
    Lenient,
    /// Every violation rejects.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationPolicy {
    pub mode: PolicyMode,
    /// Largest admissible gap at the final (impact) sample, m.
    pub gap_impact_tol: f64,
    /// Minimum pre-impact coverage, s.
    pub min_span: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        ValidationPolicy {
            mode: PolicyMode::Lenient,
            gap_impact_tol: 0.05,
            min_span: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewSamples(usize),
    NonMonotoneTime { index: usize },
    FinalTimeNotZero(f64),
    NegativeGap { t: f64 },
    NegativeSpeed { t: f64 },
    NegativeWeight(f64),
    FinalGap(f64),
    ShortSpan { span: f64, min: f64 },
}

fn short(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6;
    format!("{r}")
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSamples(n) => write!(f, "too few samples ({n})"),
            Violation::NonMonotoneTime { index } => {
                write!(f, "non-monotone time at sample {index}")
            }
            Violation::FinalTimeNotZero(t) => {
                write!(f, "final sample not at impact (t = {})", short(*t))
            }
            Violation::NegativeGap { t } => write!(f, "negative gap at t = {}", short(*t)),
            Violation::NegativeSpeed { t } => write!(f, "negative speed at t = {}", short(*t)),
            Violation::NegativeWeight(_) => write!(f, "negative weight"),
            Violation::FinalGap(g) => write!(f, "nonzero final gap ({} m)", short(*g)),
            Violation::ShortSpan { span, min } => {
                write!(f, "short span ({} s < {} s)", short(*span), short(*min))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Flag,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub id: String,
    pub violations: Vec<(Violation, Severity)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rejected(&self) -> bool {
        self.violations.iter().any(|(_, s)| *s == Severity::Reject)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|(_, s)| *s == Severity::Flag)
            .map(|(v, _)| v)
    }

    pub fn reasons(&self) -> String {
        self.violations
            .iter()
            .map(|(v, _)| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn validate_scenario(s: &Scenario, policy: &ValidationPolicy) -> ValidationReport {
    let mut found = Vec::new();
    if s.samples.len() < 2 {
        found.push(Violation::TooFewSamples(s.samples.len()));
    }
    if let Some(i) = s.samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
        found.push(Violation::NonMonotoneTime { index: i + 1 });
    }
    if let Some(p) = s.samples.iter().find(|p| p.gap < 0.0) {
        found.push(Violation::NegativeGap { t: p.t });
    }
    if let Some(p) = s.samples.iter().find(|p| p.v_lead < 0.0 || p.v_follow < 0.0) {
        found.push(Violation::NegativeSpeed { t: p.t });
    }
    if s.weight < 0.0 || s.weight.is_nan() {
        found.push(Violation::NegativeWeight(s.weight));
    }
    if let Some(last) = s.last() {
        if last.t.abs() > 1e-9 {
            found.push(Violation::FinalTimeNotZero(last.t));
        }
        if last.gap > policy.gap_impact_tol {
            found.push(Violation::FinalGap(last.gap));
        }
    }
    let span = s.span();
    if !s.samples.is_empty() && span < policy.min_span - 1e-9 {
        found.push(Violation::ShortSpan {
            span,
            min: policy.min_span,
        });
    }
    let violations = found
        .into_iter()
        .map(|v| {
            let sev = match (&v, policy.mode) {
                (Violation::ShortSpan { .. }, PolicyMode::Lenient) => Severity::Flag,
                _ => Severity::Reject,
            };
            (v, sev)
        })
        .collect();
    ValidationReport {
        id: s.id.clone(),
        violations,
    }
}

/// Piecewise-linear interpolation of a scenario at time `x` inside its span.
fn interpolate(samples: &[Sample], x: f64) -> Sample {
    let idx = samples.partition_point(|p| p.t <= x);
    let i = idx.saturating_sub(1).min(samples.len() - 1);
    let a = samples[i];
    if a.t == x || i + 1 == samples.len() {
        return Sample { t: x, ..a };
    }
    let b = samples[i + 1];
    let f = (x - a.t) / (b.t - a.t);
    let lerp = |u: f64, v: f64| u + (v - u) * f;
    Sample {
        t: x,
        gap: lerp(a.gap, b.gap),
        v_lead: lerp(a.v_lead, b.v_lead),
        v_follow: lerp(a.v_follow, b.v_follow),
    }
}

/// Resample onto the grid `{..., t_end - 2dt, t_end - dt, t_end}` covering
/// the scenario's span, by linear interpolation.
pub fn resample_uniform(s: &Scenario, dt: f64) -> Result<Scenario> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Precondition(format!("resampling step must be > 0, got {dt}")));
    }
    if s.samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scenario {} has {} sample(s); resampling needs at least 2",
            s.id,
            s.samples.len()
        )));
    }
    let t_end = s.samples[s.samples.len() - 1].t;
    let steps = ((t_end - s.samples[0].t) / dt + 1e-9).floor() as usize;
    let samples = (0..=steps)
        .rev()
        .map(|j| interpolate(&s.samples, t_end - j as f64 * dt))
        .collect();
    Ok(Scenario {
        id: s.id.clone(),
        samples,
        weight: s.weight,
    })
}

/// True when consecutive samples are `dt` apart (to 1e-9 relative).
pub fn is_uniform(s: &Scenario, dt: f64) -> bool {
    s.samples
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - dt).abs() <= 1e-9 * dt.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(id: &str, pts: &[(f64, f64, f64, f64)], weight: f64) -> Scenario {
        Scenario {
            id: id.into(),
            samples: pts
                .iter()
                .map(|&(t, gap, v_lead, v_follow)| Sample {
                    t,
                    gap,
                    v_lead,
                    v_follow,
                })
                .collect(),
            weight,
        }
    }

    #[test]
    fn parses_and_sorts() {
        let text = "scenario_id,t,gap,v_lead,v_follow\n\
                    a,0.0,0.0,1,2\n\
                    a,-0.1,0.1,1,2\n\
                    a,-0.2,0.2,1,2\n";
        let set = parse_scenario_file(text.as_bytes(), InputFormat::LongCsv, "ref").unwrap();
        assert_eq!(set.len(), 1);
        let ts: Vec<f64> = set.scenarios[0].samples.iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![-0.2, -0.1, 0.0]);
        assert_eq!(set.scenarios[0].weight, 1.0);
    }

    #[test]
    fn empty_file_is_empty_input() {
        let r = parse_scenario_file("".as_bytes(), InputFormat::LongCsv, "x");
        assert!(matches!(r, Err(Error::EmptyInput)));
        let r = parse_scenario_file(
            "scenario_id,t,gap,v_lead,v_follow\n".as_bytes(),
            InputFormat::LongCsv,
            "x",
        );
        assert!(matches!(r, Err(Error::EmptyInput)));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "scenario_id,t,gap,v_lead,v_follow,weight\na,0,0,1,2,1\na,-1,x,1,2,1\n";
        match parse_scenario_file(text.as_bytes(), InputFormat::LongCsv, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_inconsistent_weight() {
        let dup = "scenario_id,t,gap,v_lead,v_follow\na,0,0,1,2\na,0,0,1,2\n";
        assert!(matches!(
            parse_scenario_file(dup.as_bytes(), InputFormat::LongCsv, "x"),
            Err(Error::DuplicateSample { .. })
        ));
        let w = "scenario_id,t,gap,v_lead,v_follow,weight\na,0,0,1,2,1\na,-1,1,1,2,2\n";
        assert!(matches!(
            parse_scenario_file(w.as_bytes(), InputFormat::LongCsv, "x"),
            Err(Error::InconsistentWeight { .. })
        ));
    }

    #[test]
    fn bad_header_rejected() {
        let text = "id,t,gap,v_lead,v_follow\na,0,0,1,2\n";
        assert!(matches!(
            parse_scenario_file(text.as_bytes(), InputFormat::LongCsv, "x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn conforming_scenario_is_clean() {
        let s = sc("a", &[(-5.0, 10.0, 0.0, 2.0), (0.0, 0.0, 0.0, 2.0)], 1.0);
        assert!(validate_scenario(&s, &ValidationPolicy::default()).is_clean());
    }

    #[test]
    fn negative_weight_violation() {
        let s = sc("a", &[(-5.0, 10.0, 0.0, 2.0), (0.0, 0.0, 0.0, 2.0)], -1.0);
        let r = validate_scenario(&s, &ValidationPolicy::default());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].0.to_string(), "negative weight");
        assert!(r.rejected());
    }

    #[test]
    fn short_span_flagged_under_lenient_rejected_under_strict() {
        let s = sc("a", &[(-3.2, 10.0, 0.0, 2.0), (0.0, 0.0, 0.0, 2.0)], 1.0);
        let r = validate_scenario(&s, &ValidationPolicy::default());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].0.to_string(), "short span (3.2 s < 5 s)");
        assert_eq!(r.violations[0].1, Severity::Flag);
        assert!(!r.rejected());
        let strict = ValidationPolicy {
            mode: PolicyMode::Strict,
            ..Default::default()
        };
        assert!(validate_scenario(&s, &strict).rejected());
    }

    #[test]
    fn final_gap_and_negative_values() {
        let s = sc("a", &[(-5.0, -1.0, -2.0, 2.0), (0.0, 0.5, 0.0, 2.0)], 1.0);
        let r = validate_scenario(&s, &ValidationPolicy::default());
        let msgs: Vec<String> = r.violations.iter().map(|(v, _)| v.to_string()).collect();
        assert!(msgs.contains(&"negative gap at t = -5".to_string()));
        assert!(msgs.contains(&"negative speed at t = -5".to_string()));
        assert!(msgs.contains(&"nonzero final gap (0.5 m)".to_string()));
    }

    #[test]
    fn resample_constant_and_linear() {
        let s = sc("a", &[(-1.0, 5.0, 0.0, 10.0), (0.0, 0.0, 0.0, 10.0)], 1.0);
        let r = resample_uniform(&s, 0.5).unwrap();
        assert_eq!(r.samples.len(), 3);
        assert_eq!(r.samples[1].t, -0.5);
        assert_eq!(r.samples[1].v_follow, 10.0);

        let s = sc("a", &[(-1.0, 5.0, 0.0, 10.0), (0.0, 0.0, 0.0, 20.0)], 1.0);
        let r = resample_uniform(&s, 0.5).unwrap();
        assert_eq!(r.samples[1].v_follow, 15.0);
        assert_eq!(r.samples[0], s.samples[0]);
        assert_eq!(r.samples[2], s.samples[1]);
    }

    #[test]
    fn resample_single_sample_errors() {
        let s = sc("a", &[(0.0, 0.0, 0.0, 1.0)], 1.0);
        assert!(matches!(resample_uniform(&s, 0.1), Err(Error::InsufficientData(_))));
        let s = sc("a", &[(-1.0, 0.0, 0.0, 1.0), (0.0, 0.0, 0.0, 1.0)], 1.0);
        assert!(matches!(resample_uniform(&s, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn irregular_grid_matches_independent_evaluator() {
        let s = sc(
            "a",
            &[
                (-1.0, 12.0, 3.0, 15.0),
                (-0.7, 7.5, 2.0, 14.0),
                (0.0, 0.0, 0.5, 9.0),
            ],
            1.0,
        );
        let r = resample_uniform(&s, 0.1).unwrap();
        assert_eq!(r.samples.len(), 11);
        // Independent evaluator: explicit two-piece formula.
        let eval = |t: f64, y0: f64, y1: f64, y2: f64| {
            if t <= -0.7 {
                y0 + (y1 - y0) * (t + 1.0) / 0.3
            } else {
                y1 + (y2 - y1) * (t + 0.7) / 0.7
            }
        };
        for (k, p) in r.samples.iter().enumerate() {
            let t = -1.0 + 0.1 * k as f64;
            assert!((p.t - t).abs() < 1e-12);
            assert!((p.gap - eval(t, 12.0, 7.5, 0.0)).abs() < 1e-9);
            assert!((p.v_lead - eval(t, 3.0, 2.0, 0.5)).abs() < 1e-9);
            assert!((p.v_follow - eval(t, 15.0, 14.0, 9.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_is_idempotent_and_keeps_weight() {
        let s = sc(
            "a",
            &[(-2.03, 30.0, 5.0, 10.0), (-1.1, 12.0, 4.0, 11.0), (0.0, 0.0, 1.0, 12.0)],
            2.5,
        );
        let once = resample_uniform(&s, 0.01).unwrap();
        let twice = resample_uniform(&once, 0.01).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.weight, 2.5);
        assert!(is_uniform(&once, 0.01));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let set = ScenarioSet::new(
            "ref",
            vec![
                sc("s1", &[(-0.2, 1.0, 2.0, 3.0), (0.0, 0.0, 2.0, 3.5)], 2.0),
                sc("s2", &[(-0.1, 0.3, 0.0, 4.0), (0.0, 0.01, 0.0, 4.0)], 3.0),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_scenario_set(&set, &mut buf).unwrap();
        let back = parse_scenario_file(buf.as_slice(), InputFormat::LongCsv, "ref").unwrap();
        assert_eq!(back, set);
    }
}
