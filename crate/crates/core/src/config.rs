//! Declarative run configuration (TOML).
//!
//! The configuration is validated completely before any data is read, so a
//! ROPE naming an undeclared statistic, a required metric without
//! statistics and similar mistakes fail fast.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::{OverallRule, RopeSpec};
use crate::dist::{DomainTransform, Family, FamilyId};
use crate::error::{Error, Result};
use crate::fit::{ModelSpec, PriorSpec, SamplerConfig};
use crate::metrics::{MetricConfig, MetricName};
use crate::scenario::ValidationPolicy;
use crate::stats::{Interval, StatisticKind, StatisticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Scenario CSV, relative to the config file unless absolute.
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Datasets {
    pub reference: DatasetSpec,
    pub candidate: DatasetSpec,
}

/// Which dataset of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reference,
    Candidate,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Reference, Role::Candidate];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Reference => "reference",
            Role::Candidate => "candidate",
        }
    }
}

impl Datasets {
    pub fn get(&self, role: Role) -> &DatasetSpec {
        match role {
            Role::Reference => &self.reference,
            Role::Candidate => &self.candidate,
        }
    }
}

/// Candidate families for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub metric: MetricName,
    pub families: Vec<FamilyId>,
    #[serde(default)]
    pub transform: DomainTransform,
    /// Metric-axis location of a point mass; turns every family into a
    /// mixture with that atom.
    #[serde(default)]
    pub point_mass: Option<f64>,
    /// Truncation of `truncated_normal`, on the model axis. Defaults to
    /// `[0, inf)`.
    #[serde(default)]
    pub truncation: Option<Interval>,
}

impl ModelEntry {
    pub fn specs(&self) -> Vec<ModelSpec> {
        self.families
            .iter()
            .map(|&id| {
                let family = match id {
                    FamilyId::TruncatedNormal => {
                        let t = self.truncation.unwrap_or(Interval {
                            lo: 0.0,
                            hi: f64::INFINITY,
                        });
                        Family::truncated_normal(t.lo, t.hi)
                    }
                    other => Family::new(other),
                };
                match self.point_mass {
                    Some(x) => ModelSpec::mixture(family, self.transform.to_model(x), self.transform),
                    None => ModelSpec::continuous(family, self.transform),
                }
            })
            .collect()
    }
}

/// Frequentist comparison settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub permutation_replicates: usize,
    /// Which p-value decides the significance column.
    pub decide_with: PValueSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueSource {
    Asymptotic,
    Permutation,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 0.05,
            permutation_replicates: 2000,
            decide_with: PValueSource::Asymptotic,
        }
    }
}

/// Free-text justification echoed into the report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Documentation {
    pub rope_provenance: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub datasets: Datasets,
    #[serde(default)]
    pub metric_config: MetricConfig,
    #[serde(default)]
    pub validation: ValidationPolicy,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub models: Vec<ModelEntry>,
    /// Prior overrides per metric, keyed by parameter name.
    #[serde(default)]
    pub priors: BTreeMap<MetricName, PriorSpec>,
    pub statistics: Vec<StatisticSpec>,
    pub ropes: Vec<RopeSpec>,
    #[serde(default)]
    pub overall: OverallRule,
    #[serde(default)]
    pub significance: SignificanceConfig,
    #[serde(default)]
    pub documentation: Documentation,
    /// Output directory, relative to the config file. Not part of the
    /// digest.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Directory the config was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_path(&self, role: Role) -> PathBuf {
        self.resolve(&self.datasets.get(role).path)
    }

    pub fn model_entry(&self, metric: MetricName) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.metric == metric)
    }

    pub fn prior(&self, metric: MetricName) -> PriorSpec {
        self.priors.get(&metric).cloned().unwrap_or_default()
    }

    /// Metrics that have statistics, in canonical order.
    pub fn metrics(&self) -> Vec<MetricName> {
        let set: BTreeSet<MetricName> = self.statistics.iter().map(|s| s.metric).collect();
        set.into_iter().collect()
    }

    pub fn statistics_for(&self, metric: MetricName) -> Vec<&StatisticSpec> {
        self.statistics.iter().filter(|s| s.metric == metric).collect()
    }

    pub fn rope_for(&self, metric: MetricName, kind: StatisticKind) -> Option<&RopeSpec> {
        self.ropes
            .iter()
            .find(|r| r.metric == metric && r.statistic == kind)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.metric_config.validate()?;
        self.sampler.validate()?;
        self.overall.validate()?;
        if self.datasets.reference.label == self.datasets.candidate.label {
            return fail("reference and candidate labels must differ".into());
        }
        for role in Role::BOTH {
            let l = &self.datasets.get(role).label;
            if l.is_empty() || l.contains(['/', '\\']) {
                return fail(format!("dataset label `{l}` must be nonempty without slashes"));
            }
        }

        let mut seen_models = BTreeSet::new();
        for m in &self.models {
            if !seen_models.insert(m.metric) {
                return fail(format!("metric {} has more than one models entry", m.metric));
            }
            if m.families.is_empty() {
                return fail(format!("metric {} lists no candidate families", m.metric));
            }
            let mut fams = BTreeSet::new();
            for f in &m.families {
                if !fams.insert(*f) {
                    return fail(format!("family {f} listed twice for {}", m.metric));
                }
            }
        }

        let mut declared = BTreeSet::new();
        for s in &self.statistics {
            s.validate()?;
            if !declared.insert((s.metric, s.kind)) {
                return fail(format!("duplicate statistic {} for {}", s.kind, s.metric));
            }
            let Some(entry) = self.model_entry(s.metric) else {
                return fail(format!("statistic {} on {} has no models entry", s.kind, s.metric));
            };
            if s.conditional_on_nonmass && entry.point_mass.is_none() {
                return fail(format!(
                    "statistic {} on {} compares non-mass parts but the metric has no point_mass",
                    s.kind, s.metric
                ));
            }
        }

        for r in &self.ropes {
            r.validate()?;
            if !declared.contains(&(r.metric, r.statistic)) {
                return fail(format!(
                    "ROPE references undeclared statistic {} on {}",
                    r.statistic, r.metric
                ));
            }
        }
        let mut roped = BTreeSet::new();
        for r in &self.ropes {
            if !roped.insert((r.metric, r.statistic)) {
                return fail(format!("two ROPEs for {} on {}", r.statistic, r.metric));
            }
        }
        if let Some((m, k)) = declared.iter().find(|d| !roped.contains(d)) {
            return fail(format!("statistic {k} on {m} has no ROPE"));
        }

        let metrics: BTreeSet<MetricName> = declared.iter().map(|d| d.0).collect();
        for m in &self.overall.required_metrics {
            if !metrics.contains(m) {
                return fail(format!("required metric {m} has no statistics"));
            }
        }
        if self.overall.quorum > metrics.len() - self.overall.required_metrics.len().min(metrics.len()) {
            return fail(format!(
                "quorum {} exceeds the number of non-required metrics",
                self.overall.quorum
            ));
        }

        let sig = &self.significance;
        if !(sig.alpha > 0.0 && sig.alpha < 1.0) {
            return fail(format!("significance alpha must lie in (0, 1), got {}", sig.alpha));
        }
        if sig.permutation_replicates < 2000 {
            return fail(format!(
                "permutation_replicates must be at least 2000, got {}",
                sig.permutation_replicates
            ));
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration. Output directory and
    /// worker count are excluded, so they never change the digest.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> Result<String> {
        Ok(hex_sha256(self.canonical_json()?.as_bytes()))
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[datasets.reference]
path = "ref.csv"
label = "reference"

[datasets.candidate]
path = "cand.csv"
label = "candidate"

[[models]]
metric = "delta_v_l"
families = ["gamma", "exponential"]

[[models]]
metric = "t_nr"
families = ["gamma"]
transform = "negate"

[[models]]
metric = "a_l_min"
families = ["truncated_normal"]
transform = "negate"
point_mass = 0.0
truncation = { lo = 0.0 }

[[statistics]]
kind = "mean_diff"
metric = "delta_v_l"

[[statistics]]
kind = "ks_distance"
metric = "t_nr"
restriction = { hi = -1.0 }

[[statistics]]
kind = "ks_distance"
metric = "a_l_min"
conditional_on_nonmass = true

[[ropes]]
metric = "delta_v_l"
statistic = "mean_diff"
rope = [-1.0, 1.0]

[[ropes]]
metric = "t_nr"
statistic = "ks_distance"
rope = [0.0, 0.1]

[[ropes]]
metric = "a_l_min"
statistic = "ks_distance"
rope = [0.0, 0.15]
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.metrics(), vec![MetricName::DeltaVL, MetricName::TNr, MetricName::ALMin]);
        let r = cfg.statistics[1].restriction.unwrap();
        assert_eq!((r.lo, r.hi), (f64::NEG_INFINITY, -1.0));
        let spec = cfg.model_entry(MetricName::ALMin).unwrap().specs()[0];
        assert_eq!(spec.mixture_loc, Some(0.0));
        assert_eq!(spec.family.bounds, (0.0, f64::INFINITY));
        assert_eq!(cfg.overall, OverallRule::default());
        assert_eq!(cfg.digest().unwrap().len(), 64);
    }

    #[test]
    fn rope_on_undeclared_statistic_is_rejected() {
        let text = format!(
            "{MINIMAL}\n[[ropes]]\nmetric = \"delta_v_l\"\nstatistic = \"ks_distance\"\nrope = [0.0, 0.05]\n"
        );
        let err = RunConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("undeclared statistic"), "{err}");
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_rejected() {
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("seed = 7", "seed = 7\nsed = 1")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("seed = 7", "")).is_err());
    }

    #[test]
    fn required_metric_needs_statistics() {
        let text = MINIMAL.replacen("seed = 7", "seed = 7\n", 1)
            + "\n[overall]\nrequired_metrics = [\"a_f_min\"]\n";
        let err = RunConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("required metric a_f_min"), "{err}");
    }

    #[test]
    fn out_dir_does_not_change_digest() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.seed = 8;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
