//! Stage orchestration over a directory of interchange files.
//!
//! ```text
//! <out>/metrics/<role>.csv                       extract
//! <out>/fits/<role>/<metric>/<model>/            fit (one bundle per candidate)
//! <out>/fits/<role>/<metric>/selection.json      fit (WAIC selection)
//! <out>/statistics/<metric>.<statistic>.json     stats (+ .draws.csv)
//! <out>/significance.json                        ks
//! <out>/ecdf/<role>.<metric>.csv                 ecdf
//! <out>/report.json, <out>/report.md             decide
//! ```
//!
//! Every stage reads only files written by earlier stages, so any stage can
//! be re-run on its own (for example `decide` with new ROPEs).

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{hex_sha256, Role, RunConfig};
use crate::error::{Error, Result};
use crate::fit::bundle::{read_bundle, write_bundle};
use crate::fit::{fit, select_model, PosteriorFit};
use crate::freq_ks::{two_sample_ks, weighted_ecdf, KsMethod};
use crate::metrics::{build_metric_table, MetricName, MetricTable};
use crate::par;
use crate::report::{
    decide as apply_rules, resolved_priors, CandidateRecord, DocumentationBlock,
    EquivalenceReport, MetricReport, ModelPair, SeedRecord, SelectionRecord,
    SignificanceRecord, StatisticInput, TableDigest,
};
use crate::scenario::{parse_scenario_file, InputFormat};
use crate::seed;
use crate::stats::{hdi, posterior_statistic, read_statistic_record, HdiInterval, Pairing};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extract,
    Fit,
    Stats,
    Ks,
    Ecdf,
    Decide,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Extract,
        Stage::Fit,
        Stage::Stats,
        Stage::Ks,
        Stage::Ecdf,
        Stage::Decide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Fit => "fit",
            Stage::Stats => "stats",
            Stage::Ks => "ks",
            Stage::Ecdf => "ecdf",
            Stage::Decide => "decide",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// File locations under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn metrics_file(&self, role: Role) -> PathBuf {
        self.root.join("metrics").join(format!("{}.csv", role.as_str()))
    }

    pub fn metric_fit_dir(&self, role: Role, metric: MetricName) -> PathBuf {
        self.root.join("fits").join(role.as_str()).join(metric.as_str())
    }

    pub fn selection_file(&self, role: Role, metric: MetricName) -> PathBuf {
        self.metric_fit_dir(role, metric).join("selection.json")
    }

    pub fn statistics_dir(&self) -> PathBuf {
        self.root.join("statistics")
    }

    pub fn statistic_stem(metric: MetricName, kind: crate::stats::StatisticKind) -> String {
        format!("{}.{}", metric.as_str(), kind.as_str())
    }

    pub fn significance_file(&self) -> PathBuf {
        self.root.join("significance.json")
    }

    pub fn ecdf_file(&self, role: Role, metric: MetricName) -> PathBuf {
        self.root
            .join("ecdf")
            .join(format!("{}.{}.csv", role.as_str(), metric.as_str()))
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

/// Directory name for a model label: `mixture(gamma)` becomes `mixture_gamma`.
pub fn model_dir_name(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            '(' => Some('_'),
            ')' => None,
            c => Some(c),
        })
        .collect()
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
        })
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

/// Metrics the stage should touch: the configured ones, optionally narrowed.
fn selected_metrics(cfg: &RunConfig, only: Option<MetricName>) -> Result<Vec<MetricName>> {
    let all = cfg.metrics();
    match only {
        None => Ok(all),
        Some(m) if all.contains(&m) => Ok(vec![m]),
        Some(m) => Err(Error::Config(format!("metric {m} is not configured"))),
    }
}

pub fn load_metric_table(layout: &Layout, role: Role) -> Result<MetricTable> {
    let path = layout.metrics_file(role);
    require(&path)?;
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    MetricTable::read_csv(file)
}

/// Read both scenario datasets and write their metric tables.
pub fn run_extract(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    for role in Role::BOTH {
        let path = cfg.dataset_path(role);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let set = parse_scenario_file(file, InputFormat::LongCsv, &cfg.datasets.get(role).label)?;
        let table = build_metric_table(&set, &cfg.metric_config, &cfg.validation)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        let out = layout.metrics_file(role);
        create_parent(&out)?;
        fs::write(&out, buf).map_err(|e| Error::io(&out, e))?;
    }
    Ok(())
}

pub fn fit_seed(master: u64, role: Role, metric: MetricName, model: &str) -> u64 {
    seed::derive(master, &["fit", role.as_str(), metric.as_str(), model])
}

pub fn permutation_seed(master: u64, metric: MetricName) -> u64 {
    seed::derive(master, &["ks", metric.as_str()])
}

/// Seed of the draw pairing between the reference and candidate fits.
pub fn pairing_seed(master: u64, metric: MetricName) -> u64 {
    seed::derive(master, &["pair", metric.as_str()])
}

enum FitOutcome {
    Fitted(Box<PosteriorFit>),
    Excluded(String),
}

/// Fit every candidate family for each (dataset, metric), select by WAIC,
/// and write bundles plus the selection record.
pub fn run_fit(cfg: &RunConfig, layout: &Layout, only: Option<MetricName>) -> Result<()> {
    let metrics = selected_metrics(cfg, only)?;
    let tables = [
        load_metric_table(layout, Role::Reference)?,
        load_metric_table(layout, Role::Candidate)?,
    ];
    // All (role, metric, model) jobs, fitted in parallel, collected in order.
    let mut jobs = Vec::new();
    for (ri, role) in Role::BOTH.into_iter().enumerate() {
        for &metric in &metrics {
            let entry = cfg
                .model_entry(metric)
                .ok_or_else(|| Error::Config(format!("no models entry for {metric}")))?;
            let data = tables[ri].sample(metric)?;
            for spec in entry.specs() {
                jobs.push((role, metric, spec, data.clone()));
            }
        }
    }
    let outcomes = par::map_slice(&jobs, |(role, metric, spec, data)| -> Result<FitOutcome> {
        let label = spec.label();
        let mut sc = cfg.sampler;
        sc.seed = fit_seed(cfg.seed, *role, *metric, &label);
        match fit(data, spec, &cfg.prior(*metric), &sc) {
            Ok(mut f) => {
                f.data_ref.metric = metric.as_str().to_string();
                f.data_ref.dataset = cfg.datasets.get(*role).label.clone();
                Ok(FitOutcome::Fitted(Box::new(f)))
            }
            Err(Error::Support(msg)) => Ok(FitOutcome::Excluded(format!("support: {msg}"))),
            Err(e) => Err(e),
        }
    });

    let mut it = jobs.iter().zip(outcomes);
    for role in Role::BOTH {
        for &metric in &metrics {
            let n_models = cfg.model_entry(metric).map_or(0, |e| e.families.len());
            let group: Vec<_> = it.by_ref().take(n_models).collect();
            let dir = layout.metric_fit_dir(role, metric);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            let mut fitted: Vec<PosteriorFit> = Vec::new();
            let mut fitted_dirs = Vec::new();
            let mut candidates = Vec::new();
            let mut n_obs = 0;
            for ((_, _, spec, data), outcome) in group {
                n_obs = data.len();
                let label = spec.label();
                let name = model_dir_name(&label);
                let seed = fit_seed(cfg.seed, role, metric, &label);
                match outcome? {
                    FitOutcome::Fitted(f) => {
                        write_bundle(&dir.join(&name), &f)?;
                        candidates.push(CandidateRecord {
                            model: label,
                            dir: name.clone(),
                            waic: Some(f.waic.waic),
                            p_waic: Some(f.waic.p_waic),
                            converged: f.converged(),
                            seed,
                            excluded: None,
                            warnings: f.warnings.clone(),
                        });
                        fitted.push(*f);
                        fitted_dirs.push(name);
                    }
                    FitOutcome::Excluded(why) => candidates.push(CandidateRecord {
                        model: label,
                        dir: name,
                        waic: None,
                        p_waic: None,
                        converged: false,
                        seed,
                        excluded: Some(why),
                        warnings: Vec::new(),
                    }),
                }
            }
            if fitted.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no candidate family admits the {metric} data of {}",
                    role.as_str()
                )));
            }
            let sel = select_model(&fitted)?;
            let record = SelectionRecord {
                metric,
                role: role.as_str().into(),
                dataset: cfg.datasets.get(role).label.clone(),
                n_obs,
                selected_model: fitted[sel.index].spec.label(),
                selected_dir: fitted_dirs[sel.index].clone(),
                candidates,
                warning: sel.warning,
            };
            write_json(&layout.selection_file(role, metric), &record)?;
        }
    }
    Ok(())
}

pub fn read_selection(layout: &Layout, role: Role, metric: MetricName) -> Result<SelectionRecord> {
    read_json(&layout.selection_file(role, metric))
}

fn load_selected_fit(layout: &Layout, role: Role, metric: MetricName) -> Result<PosteriorFit> {
    let sel = read_selection(layout, role, metric)?;
    let dir = layout.metric_fit_dir(role, metric).join(&sel.selected_dir);
    read_bundle(&dir)
}

/// Posterior draws and HDIs of every configured statistic.
pub fn run_stats(cfg: &RunConfig, layout: &Layout, only: Option<MetricName>) -> Result<()> {
    for metric in selected_metrics(cfg, only)? {
        let a = load_selected_fit(layout, Role::Reference, metric)?;
        let b = load_selected_fit(layout, Role::Candidate, metric)?;
        for spec in cfg.statistics_for(metric) {
            let rope = cfg.rope_for(metric, spec.kind).expect("validated config");
            let pairing = Pairing::Permuted {
                seed: pairing_seed(cfg.seed, metric),
            };
            let post = posterior_statistic(&a, &b, spec, pairing, rope.mass)?;
            post.write(&layout.statistics_dir(), &Layout::statistic_stem(metric, spec.kind))?;
        }
    }
    Ok(())
}

/// Weighted two-sample KS per metric, asymptotic and permutation p-values.
pub fn run_ks(cfg: &RunConfig, layout: &Layout) -> Result<Vec<SignificanceRecord>> {
    let ta = load_metric_table(layout, Role::Reference)?;
    let tb = load_metric_table(layout, Role::Candidate)?;
    let reps = cfg.significance.permutation_replicates;
    let mut out = Vec::new();
    for metric in cfg.metrics() {
        let (a, b) = (ta.sample(metric)?, tb.sample(metric)?);
        let seed = permutation_seed(cfg.seed, metric);
        let asym = two_sample_ks(&a, &b, KsMethod::Asymptotic)?;
        let perm = two_sample_ks(&a, &b, KsMethod::Permutation { replicates: reps, seed })?;
        out.push(SignificanceRecord::new(
            metric,
            &asym,
            &perm,
            reps,
            seed,
            cfg.significance.decide_with,
            cfg.significance.alpha,
        ));
    }
    write_json(&layout.significance_file(), &out)?;
    Ok(out)
}

/// One `(x, F)` file per metric per dataset. Returns the written paths.
pub fn run_ecdf(layout: &Layout, only: Option<MetricName>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for role in Role::BOTH {
        let table = load_metric_table(layout, role)?;
        for metric in table.metrics() {
            if only.is_some_and(|m| m != metric) {
                continue;
            }
            let e = weighted_ecdf(&table.sample(metric)?)?;
            let path = layout.ecdf_file(role, metric);
            create_parent(&path)?;
            e.write_csv(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn read_draws(path: &Path) -> Result<Vec<f64>> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: i as u64 + 1,
                msg: format!("`{l}` is not a number"),
            })
        })
        .collect()
}

fn file_digest(path: &Path) -> Result<String> {
    require(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_sha256(&bytes))
}

/// Apply ROPEs and the overall rule to persisted statistic posteriors and
/// write the report. No sampling happens here.
pub fn run_decide(cfg: &RunConfig, layout: &Layout) -> Result<EquivalenceReport> {
    let mut inputs = Vec::new();
    for metric in cfg.metrics() {
        let mut stats = Vec::new();
        for spec in cfg.statistics_for(metric) {
            let stem = Layout::statistic_stem(metric, spec.kind);
            let path = layout.statistics_dir().join(format!("{stem}.json"));
            let rec = read_statistic_record(&path)?;
            if rec.spec != *spec {
                return Err(Error::Config(format!(
                    "{} was computed for a different statistic definition; re-run the stats stage",
                    path.display()
                )));
            }
            let rope = cfg.rope_for(metric, spec.kind).expect("validated config");
            // A changed HDI mass needs the draws; otherwise the record suffices.
            let interval = if rec.mass == rope.mass {
                HdiInterval {
                    lo: rec.hdi[0],
                    hi: rec.hdi[1],
                    mass: rec.mass,
                }
            } else {
                hdi(&read_draws(&layout.statistics_dir().join(&rec.draws_file))?, rope.mass)?
            };
            stats.push(StatisticInput {
                spec: spec.clone(),
                hdi: interval,
                point_estimate: rec.point_estimate,
            });
        }
        inputs.push((metric, stats));
    }
    let (verdicts, overall) = apply_rules(cfg, &inputs)?;

    let mut selections = Vec::new();
    let mut metrics = Vec::new();
    for (verdict, rows) in verdicts {
        let sa = read_selection(layout, Role::Reference, verdict.metric)?;
        let sb = read_selection(layout, Role::Candidate, verdict.metric)?;
        metrics.push(MetricReport {
            metric: verdict.metric,
            models: ModelPair {
                reference: sa.selected_model.clone(),
                candidate: sb.selected_model.clone(),
            },
            statistics: rows,
            equivalent: verdict.equivalent,
        });
        selections.push(sa);
        selections.push(sb);
    }
    let significance: Vec<SignificanceRecord> = read_json(&layout.significance_file())?;

    let mut seeds = Vec::new();
    let mut warnings = Vec::new();
    for s in &selections {
        for c in &s.candidates {
            seeds.push(SeedRecord {
                purpose: format!("fit {} {} {}", s.role, s.metric, c.model),
                seed: c.seed,
            });
            warnings.extend(
                c.warnings
                    .iter()
                    .map(|w| format!("{} {} {}: {w}", s.dataset, s.metric, c.model)),
            );
        }
        if let Some(w) = &s.warning {
            warnings.push(format!("{} {}: {w}", s.dataset, s.metric));
        }
    }
    for m in cfg.metrics() {
        seeds.push(SeedRecord {
            purpose: format!("draw pairing {m}"),
            seed: pairing_seed(cfg.seed, m),
        });
    }
    for s in &significance {
        seeds.push(SeedRecord {
            purpose: format!("ks permutation {}", s.metric),
            seed: s.permutation_seed,
        });
    }

    let config_digest = cfg.digest()?;
    let mut digests = Vec::new();
    for role in Role::BOTH {
        digests.push(TableDigest {
            role: role.as_str().into(),
            sha256: file_digest(&layout.metrics_file(role))?,
        });
    }
    let id_source = format!(
        "{config_digest}:{}:{}",
        digests[0].sha256, digests[1].sha256
    );
    let report = EquivalenceReport {
        run_id: hex_sha256(id_source.as_bytes())[..16].to_string(),
        config_digest,
        metrics,
        overall,
        significance,
        documentation: DocumentationBlock {
            config: serde_json::to_value(cfg)?,
            master_seed: cfg.seed,
            seeds,
            priors: resolved_priors(cfg)?,
            model_selection: selections,
            metric_table_digests: digests,
            rope_provenance: cfg.documentation.rope_provenance.clone(),
            notes: cfg.documentation.notes.clone(),
            warnings,
        },
    };
    write_text(&layout.report_json(), &report.to_json()?)?;
    write_text(&layout.report_md(), &report.to_markdown())?;
    Ok(report)
}

/// Options shared by the stage entry points.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub metric: Option<MetricName>,
    /// Worker threads; 0 uses the default pool.
    pub jobs: usize,
}

/// Run one stage, tagging any failure with the stage name.
pub fn run_stage(
    stage: Stage,
    cfg: &RunConfig,
    layout: &Layout,
    opts: &RunOptions,
) -> Result<Option<EquivalenceReport>> {
    par::with_jobs(opts.jobs, || {
        let r = match stage {
            Stage::Extract => run_extract(cfg, layout).map(|_| None),
            Stage::Fit => run_fit(cfg, layout, opts.metric).map(|_| None),
            Stage::Stats => run_stats(cfg, layout, opts.metric).map(|_| None),
            Stage::Ks => run_ks(cfg, layout).map(|_| None),
            Stage::Ecdf => run_ecdf(layout, opts.metric).map(|_| None),
            Stage::Decide => run_decide(cfg, layout).map(Some),
        };
        r.map_err(|e| e.in_stage(stage.as_str()))
    })
}

/// The whole pipeline, in order. Artifacts of completed stages stay on disk
/// if a later stage fails.
pub fn run_pipeline(cfg: &RunConfig, layout: &Layout, opts: &RunOptions) -> Result<EquivalenceReport> {
    cfg.validate()?;
    let opts = RunOptions {
        metric: None,
        jobs: opts.jobs,
    };
    let mut report = None;
    for stage in Stage::ALL {
        report = run_stage(stage, cfg, layout, &opts)?;
    }
    Ok(report.expect("decide produces a report"))
}

/// Process exit code: 0 equivalent, 10 not equivalent.
pub fn exit_code(report: &EquivalenceReport) -> i32 {
    if report.overall.equivalent {
        0
    } else {
        10
    }
}
