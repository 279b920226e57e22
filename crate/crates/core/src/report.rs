//! Equivalence report: JSON document and markdown table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{PValueSource, RunConfig};
use crate::decision::{
    metric_verdict, overall_verdict, widen_rope, MetricVerdict, OverallVerdict, RopeSpec,
};
use crate::error::{Error, Result};
use crate::fit::Prior;
use crate::freq_ks::KsTestResult;
use crate::metrics::MetricName;
use crate::stats::{HdiInterval, StatisticKind, StatisticSpec};

/// One candidate family considered during model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub model: String,
    /// Bundle directory name under the metric's fit directory.
    pub dir: String,
    pub waic: Option<f64>,
    pub p_waic: Option<f64>,
    pub converged: bool,
    pub seed: u64,
    /// Why the family was not fitted (for example data outside its support).
    pub excluded: Option<String>,
    pub warnings: Vec<String>,
}

/// Model selection for one (dataset, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub metric: MetricName,
    pub role: String,
    pub dataset: String,
    pub n_obs: usize,
    pub selected_model: String,
    pub selected_dir: String,
    pub candidates: Vec<CandidateRecord>,
    pub warning: Option<String>,
}

/// Weighted two-sample KS result for one metric, both p-value methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub metric: MetricName,
    pub d: f64,
    pub n_eff_reference: f64,
    pub n_eff_candidate: f64,
    pub p_asymptotic: f64,
    pub p_permutation: f64,
    pub permutation_replicates: usize,
    pub permutation_seed: u64,
    pub decided_with: PValueSource,
    pub alpha: f64,
    pub significant: bool,
    pub degenerate: bool,
}

impl SignificanceRecord {
    pub fn new(
        metric: MetricName,
        asymptotic: &KsTestResult,
        permutation: &KsTestResult,
        replicates: usize,
        seed: u64,
        decided_with: PValueSource,
        alpha: f64,
    ) -> Self {
        let p = match decided_with {
            PValueSource::Asymptotic => asymptotic.p_value,
            PValueSource::Permutation => permutation.p_value,
        };
        SignificanceRecord {
            metric,
            d: asymptotic.d,
            n_eff_reference: asymptotic.n_eff_a,
            n_eff_candidate: asymptotic.n_eff_b,
            p_asymptotic: asymptotic.p_value,
            p_permutation: permutation.p_value,
            permutation_replicates: replicates,
            permutation_seed: seed,
            decided_with,
            alpha,
            significant: p < alpha,
            degenerate: asymptotic.degenerate,
        }
    }

    pub fn p_value(&self) -> f64 {
        match self.decided_with {
            PValueSource::Asymptotic => self.p_asymptotic,
            PValueSource::Permutation => self.p_permutation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRow {
    pub statistic: StatisticKind,
    pub spec: StatisticSpec,
    pub hdi: [f64; 2],
    pub mass: f64,
    pub point_estimate: f64,
    pub rope: [f64; 2],
    pub relaxed_rope: [f64; 2],
    pub pass: bool,
    pub relaxed_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPair {
    pub reference: String,
    pub candidate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricName,
    pub models: ModelPair,
    pub statistics: Vec<StatisticRow>,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub purpose: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPrior {
    pub param: String,
    pub prior: Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRecord {
    pub metric: MetricName,
    pub model: String,
    pub priors: Vec<ParamPrior>,
}

/// Everything needed to audit how the verdict was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentationBlock {
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub seeds: Vec<SeedRecord>,
    pub priors: Vec<PriorRecord>,
    pub model_selection: Vec<SelectionRecord>,
    pub metric_table_digests: Vec<TableDigest>,
    pub rope_provenance: String,
    pub notes: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDigest {
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub run_id: String,
    pub config_digest: String,
    pub metrics: Vec<MetricReport>,
    pub overall: OverallVerdict,
    pub significance: Vec<SignificanceRecord>,
    pub documentation: DocumentationBlock,
}

/// Posterior summary of one statistic as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticInput {
    pub spec: StatisticSpec,
    pub hdi: HdiInterval,
    pub point_estimate: f64,
}

/// Apply the ROPE tests and the overall rule; returns per-metric verdicts
/// with the rows for the report.
pub fn decide(
    cfg: &RunConfig,
    inputs: &[(MetricName, Vec<StatisticInput>)],
) -> Result<(Vec<(MetricVerdict, Vec<StatisticRow>)>, OverallVerdict)> {
    let mut out = Vec::new();
    for (metric, stats) in inputs {
        if stats.is_empty() {
            return Err(Error::Config(format!("metric {metric} has no statistics to report")));
        }
        let mut triples = Vec::with_capacity(stats.len());
        for s in stats {
            let rope = cfg
                .rope_for(*metric, s.spec.kind)
                .ok_or_else(|| Error::Config(format!("no ROPE for {} on {metric}", s.spec.kind)))?;
            triples.push((s.spec.clone(), s.hdi, *rope));
        }
        let verdict = metric_verdict(&triples, cfg.overall.relaxation_factor)?;
        let rows = verdict
            .statistic_results
            .iter()
            .zip(stats)
            .map(|(r, s)| -> Result<StatisticRow> {
                let relaxed: RopeSpec = widen_rope(&r.rope, cfg.overall.relaxation_factor)?;
                Ok(StatisticRow {
                    statistic: r.spec.kind,
                    spec: r.spec.clone(),
                    hdi: [r.hdi.lo, r.hdi.hi],
                    mass: r.hdi.mass,
                    point_estimate: s.point_estimate,
                    rope: r.rope.rope,
                    relaxed_rope: relaxed.rope,
                    pass: r.pass,
                    relaxed_pass: r.relaxed_pass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((verdict, rows));
    }
    let verdicts: Vec<MetricVerdict> = out.iter().map(|(v, _)| v.clone()).collect();
    let overall = overall_verdict(&verdicts, &cfg.overall)?;
    Ok((out, overall))
}

/// Priors actually used for each candidate model, defaults filled in.
pub fn resolved_priors(cfg: &RunConfig) -> Result<Vec<PriorRecord>> {
    let mut out = Vec::new();
    for entry in &cfg.models {
        if cfg.statistics_for(entry.metric).is_empty() {
            continue;
        }
        let spec = cfg.prior(entry.metric);
        for model in entry.specs() {
            let mut priors = Vec::new();
            if model.is_mixture() {
                let (a, b) = spec.resolve_pi()?;
                priors.push(ParamPrior {
                    param: "pi".into(),
                    prior: Prior::Beta { a, b },
                });
            }
            let resolved = spec.resolve(model.family.id)?;
            for (name, (_, prior)) in model.family.id.param_names().iter().zip(resolved) {
                priors.push(ParamPrior {
                    param: name.to_string(),
                    prior,
                });
            }
            out.push(PriorRecord {
                metric: entry.metric,
                model: model.label(),
                priors,
            });
        }
    }
    Ok(out)
}

fn metric_label(m: MetricName) -> &'static str {
    match m {
        MetricName::DeltaVL => "Δv_l",
        MetricName::TNr => "t_nr",
        MetricName::ALMin => "a_l,min",
        MetricName::AFMin => "a_f,min",
    }
}

fn statistic_label(s: &StatisticSpec) -> String {
    let base = match s.kind {
        StatisticKind::MeanDiff => "Δ mean",
        StatisticKind::KsDistance => "D",
        StatisticKind::ProportionRatio => "φ",
    };
    let mut out = base.to_string();
    if let Some(r) = s.restriction {
        let _ = write!(out, " on {r}");
    }
    if s.conditional_on_nonmass {
        out.push_str(" (non-mass)");
    }
    if let (Some(t), Some(side)) = (s.threshold, s.side) {
        let op = match side {
            crate::dist::Side::Geq => "≥",
            crate::dist::Side::Leq => "≤",
        };
        let _ = write!(out, " ({op} {})", trim(t, 3));
    }
    out
}

fn trim(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn pair(v: [f64; 2]) -> String {
    format!("[{:.2}, {:.2}]", v[0], v[1])
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

impl EquivalenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Markdown rendering: the results table followed by the rationale.
    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Equivalence report `{}`\n", self.run_id);
        let _ = writeln!(md, "Config digest: `{}`\n", self.config_digest);
        md.push_str(
            "| Metric | Model (reference) | Model (candidate) | Statistic | 95% HDI | ROPE | Equivalence | KS statistic | P-value | P-value (permutation) | Significance |\n",
        );
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for m in &self.metrics {
            let sig = self.significance.iter().find(|s| s.metric == m.metric);
            for (i, row) in m.statistics.iter().enumerate() {
                let first = i == 0;
                let cell = |s: String| if first { s } else { String::new() };
                let hdi_label = if (row.mass - 0.95).abs() < 1e-12 {
                    pair(row.hdi)
                } else {
                    format!("{} ({}%)", pair(row.hdi), trim(100.0 * row.mass, 1))
                };
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    cell(metric_label(m.metric).to_string()),
                    cell(m.models.reference.clone()),
                    cell(m.models.candidate.clone()),
                    statistic_label(&row.spec),
                    hdi_label,
                    pair(row.rope),
                    yes_no(row.pass),
                    cell(sig.map_or("n/a".into(), |s| format!("{:.2}", s.d))),
                    cell(sig.map_or("n/a".into(), |s| format!("{:.2}", s.p_value()))),
                    cell(sig.map_or("n/a".into(), |s| format!("{:.2}", s.p_permutation))),
                    cell(sig.map_or("n/a".into(), |s| yes_no(s.significant).to_string())),
                );
            }
        }
        md.push_str("\n## Verdict\n\n");
        let _ = writeln!(
            md,
            "Datasets are **{}**.\n",
            if self.overall.equivalent {
                "practically equivalent"
            } else {
                "not practically equivalent"
            }
        );
        for m in &self.metrics {
            let _ = writeln!(
                md,
                "- {}: {}",
                m.metric,
                if m.equivalent { "equivalent" } else { "not equivalent" }
            );
        }
        md.push_str("\n| Clause | Satisfied | Detail |\n|---|---|---|\n");
        for c in &self.overall.rationale {
            let _ = writeln!(md, "| {} | {} | {} |", c.clause, yes_no(c.satisfied), c.detail);
        }
        let doc = &self.documentation;
        md.push_str("\n## Documentation\n\n");
        let _ = writeln!(md, "Master seed: {}\n", doc.master_seed);
        if !doc.rope_provenance.is_empty() {
            let _ = writeln!(md, "ROPE provenance: {}\n", doc.rope_provenance);
        }
        if !doc.notes.is_empty() {
            let _ = writeln!(md, "Notes: {}\n", doc.notes);
        }
        md.push_str("Model selection (WAIC, lower is better):\n\n");
        for s in &doc.model_selection {
            let cands: Vec<String> = s
                .candidates
                .iter()
                .map(|c| match (&c.excluded, c.waic) {
                    (Some(why), _) => format!("{} excluded ({why})", c.model),
                    (None, Some(w)) => format!(
                        "{} {:.1}{}",
                        c.model,
                        w,
                        if c.converged { "" } else { " (not converged)" }
                    ),
                    (None, None) => c.model.clone(),
                })
                .collect();
            let _ = writeln!(
                md,
                "- {} / {}: **{}**; {}",
                s.metric,
                s.dataset,
                s.selected_model,
                cands.join(", ")
            );
        }
        if !doc.warnings.is_empty() {
            md.push_str("\nWarnings:\n\n");
            for w in &doc.warnings {
                let _ = writeln!(md, "- {w}");
            }
        }
        md
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Clause;

    fn sample_report() -> EquivalenceReport {
        let spec = StatisticSpec::mean_diff(MetricName::DeltaVL);
        EquivalenceReport {
            run_id: "abc".into(),
            config_digest: "00".into(),
            metrics: vec![MetricReport {
                metric: MetricName::DeltaVL,
                models: ModelPair {
                    reference: "gamma".into(),
                    candidate: "gamma".into(),
                },
                statistics: vec![StatisticRow {
                    statistic: spec.kind,
                    spec,
                    hdi: [-0.11, 0.27],
                    mass: 0.95,
                    point_estimate: 0.08,
                    rope: [-1.0, 1.0],
                    relaxed_rope: [-1.25, 1.25],
                    pass: true,
                    relaxed_pass: true,
                }],
                equivalent: true,
            }],
            overall: OverallVerdict {
                equivalent: true,
                rationale: vec![Clause {
                    clause: "required_metrics_pass".into(),
                    satisfied: true,
                    detail: "x".into(),
                }],
            },
            significance: vec![],
            documentation: DocumentationBlock {
                config: serde_json::json!({"seed": 1}),
                master_seed: 1,
                seeds: vec![],
                priors: vec![],
                model_selection: vec![],
                metric_table_digests: vec![],
                rope_provenance: String::new(),
                notes: String::new(),
                warnings: vec![],
            },
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = sample_report();
        let back = EquivalenceReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), r.to_json().unwrap());
    }

    #[test]
    fn markdown_has_table_columns() {
        let md = sample_report().to_markdown();
        assert!(md.contains("| Metric | Model (reference) | Model (candidate) | Statistic | 95% HDI | ROPE | Equivalence | KS statistic | P-value |"));
        assert!(md.contains("| [-0.11, 0.27] | [-1.00, 1.00] | Yes |"));
    }
}
