//! On-disk fit bundles: `draws.csv` plus `summary.json` in one directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{DomainTransform, Family};
use crate::error::{Error, Result};

use super::{DataRef, Diagnostics, ModelSpec, PosteriorFit, Waic};

pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: String,
    pub params: Vec<String>,
    /// `null` when R̂ is infinite (chains stuck at distinct constants).
    pub r_hat: Vec<Option<f64>>,
    pub ess: Vec<f64>,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub seed: u64,
    pub model: Family,
    pub mixture_loc: Option<f64>,
    pub transform: DomainTransform,
    pub degenerate: Vec<bool>,
    pub accept_rate: f64,
    pub chains: usize,
    pub converged: bool,
    pub metric: String,
    pub dataset: String,
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn of(fit: &PosteriorFit) -> Self {
        FitSummary {
            family: fit.spec.label(),
            params: fit.spec.param_names().iter().map(|s| s.to_string()).collect(),
            r_hat: fit
                .diagnostics
                .r_hat
                .iter()
                .map(|r| r.is_finite().then_some(*r))
                .collect(),
            ess: fit.diagnostics.ess.clone(),
            waic: fit.waic.waic,
            lppd: fit.waic.lppd,
            p_waic: fit.waic.p_waic,
            seed: fit.seed,
            model: fit.spec.family,
            mixture_loc: fit.spec.mixture_loc,
            transform: fit.spec.transform,
            degenerate: fit.diagnostics.degenerate.clone(),
            accept_rate: fit.diagnostics.accept_rate,
            chains: fit.chains,
            converged: fit.converged(),
            metric: fit.data_ref.metric.clone(),
            dataset: fit.data_ref.dataset.clone(),
            n_obs: fit.data_ref.n_obs,
            warnings: fit.warnings.clone(),
        }
    }
}

pub fn write_bundle(dir: &Path, fit: &PosteriorFit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let draws_path = dir.join(DRAWS_FILE);
    let mut w = csv::Writer::from_path(&draws_path)?;
    w.write_record(fit.spec.param_names())?;
    let mut row = Vec::with_capacity(fit.dim());
    for s in 0..fit.n_draws() {
        row.clear();
        row.extend(fit.draw(s).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&draws_path, e))?;

    let summary_path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&FitSummary::of(fit))?;
    fs::write(&summary_path, json + "\n").map_err(|e| Error::io(&summary_path, e))
}

pub fn read_bundle(dir: &Path) -> Result<PosteriorFit> {
    let summary_path = dir.join(SUMMARY_FILE);
    let draws_path = dir.join(DRAWS_FILE);
    for p in [&summary_path, &draws_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact { path: p.clone() });
        }
    }
    let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let summary: FitSummary = serde_json::from_str(&text)?;
    let spec = ModelSpec {
        family: summary.model,
        mixture_loc: summary.mixture_loc,
        transform: summary.transform,
    };
    let dim = spec.dim();
    let mut r = csv::Reader::from_path(&draws_path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != spec.param_names() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("draws header {header:?} does not match {}", spec.label()),
        });
    }
    let mut draws = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: i as u64 + 2,
                msg: format!("bad number `{field}`"),
            })?;
            draws.push(v);
        }
    }
    if draws.len() % dim != 0 || draws.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "draws file is empty or ragged".into(),
        });
    }
    Ok(PosteriorFit {
        spec,
        draws,
        chains: summary.chains,
        diagnostics: Diagnostics {
            r_hat: summary
                .r_hat
                .iter()
                .map(|r| r.unwrap_or(f64::INFINITY))
                .collect(),
            ess: summary.ess,
            degenerate: summary.degenerate,
            accept_rate: summary.accept_rate,
        },
        waic: Waic {
            waic: summary.waic,
            lppd: summary.lppd,
            p_waic: summary.p_waic,
        },
        data_ref: DataRef {
            metric: summary.metric,
            dataset: summary.dataset,
            n_obs: summary.n_obs,
            weights: Vec::new(),
        },
        seed: summary.seed,
        warnings: summary.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let spec = ModelSpec::mixture(
            Family::truncated_normal(0.0, f64::INFINITY),
            0.0,
            DomainTransform::Negate,
        );
        let mut fit = PosteriorFit::point_mass(spec, &[0.3, 1.0 / 3.0, 2.5e-7], 5).unwrap();
        fit.diagnostics.r_hat[1] = f64::INFINITY;
        fit.data_ref.metric = "a_l_min".into();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &fit).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back, fit);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap())
                .unwrap();
        for key in ["family", "params", "r_hat", "ess", "waic", "lppd", "p_waic", "seed"] {
            assert!(summary.get(key).is_some(), "missing {key}");
        }
        assert_eq!(summary["family"], "mixture(truncated_normal)");
    }

    #[test]
    fn missing_files_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_bundle(dir.path()),
            Err(Error::MissingArtifact { .. })
        ));
    }
}
