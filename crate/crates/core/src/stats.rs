//! Posterior distributions of comparison statistics between two fitted
//! models, and highest density intervals.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{ModelInstance, Side};
use crate::error::{Error, Result};
use crate::fit::PosteriorFit;
use crate::metrics::MetricName;
use crate::par;
use crate::seed;

/// Quantile points per model on the KS search grid.
const KS_GRID_PER_MODEL: usize = 256;
/// Local maxima of the grid that get a refinement search.
const KS_REFINED_PEAKS: usize = 4;
/// Smallest reference tail mass a proportion ratio may divide by.
pub const MIN_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdiInterval {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Shortest interval covering `ceil(mass * n)` of the sorted draws; ties go
/// to the lowest start.
pub fn hdi(draws: &[f64], mass: f64) -> Result<HdiInterval> {
    if draws.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "an HDI needs at least 20 draws, got {}",
            draws.len()
        )));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::Precondition(format!("HDI mass must lie in (0, 1), got {mass}")));
    }
    if let Some(bad) = draws.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite draw {bad}")));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(hdi_sorted(&s, mass))
}

fn hdi_sorted(s: &[f64], mass: f64) -> HdiInterval {
    let n = s.len();
    let k = ((mass * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    HdiInterval {
        lo: s[best],
        hi: s[best + k - 1],
        mass,
    }
}

/// Closed interval on the metric axis; either end may be infinite. In
/// config and JSON files an omitted (or null) end means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "IntervalRepr", try_from = "IntervalRepr")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
}

impl From<Interval> for IntervalRepr {
    fn from(i: Interval) -> Self {
        IntervalRepr {
            lo: i.lo.is_finite().then_some(i.lo),
            hi: i.hi.is_finite().then_some(i.hi),
        }
    }
}

impl TryFrom<IntervalRepr> for Interval {
    type Error = Error;

    fn try_from(r: IntervalRepr) -> Result<Self> {
        Interval::new(
            r.lo.unwrap_or(f64::NEG_INFINITY),
            r.hi.unwrap_or(f64::INFINITY),
        )
    }
}

impl Interval {
    pub const ALL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Config(format!("interval bounds out of order: [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v}")
            }
        };
        write!(f, "[{}, {}]", end(self.lo), end(self.hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    MeanDiff,
    KsDistance,
    ProportionRatio,
}

impl StatisticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StatisticKind::MeanDiff => "mean_diff",
            StatisticKind::KsDistance => "ks_distance",
            StatisticKind::ProportionRatio => "proportion_ratio",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticSpec {
    pub kind: StatisticKind,
    pub metric: MetricName,
    #[serde(default)]
    pub restriction: Option<Interval>,
    /// Renormalize CDFs to the restriction before taking the KS sup.
    #[serde(default = "yes")]
    pub conditional: bool,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub side: Option<Side>,
    /// Compare only the continuous parts of mixture models.
    #[serde(default)]
    pub conditional_on_nonmass: bool,
}

fn yes() -> bool {
    true
}

impl StatisticSpec {
    pub fn mean_diff(metric: MetricName) -> Self {
        StatisticSpec {
            kind: StatisticKind::MeanDiff,
            metric,
            restriction: None,
            conditional: true,
            threshold: None,
            side: None,
            conditional_on_nonmass: false,
        }
    }

    pub fn ks(metric: MetricName) -> Self {
        StatisticSpec {
            kind: StatisticKind::KsDistance,
            ..Self::mean_diff(metric)
        }
    }

    pub fn ratio(metric: MetricName, threshold: f64, side: Side) -> Self {
        StatisticSpec {
            kind: StatisticKind::ProportionRatio,
            threshold: Some(threshold),
            side: Some(side),
            ..Self::mean_diff(metric)
        }
    }

    pub fn restricted(mut self, r: Interval, conditional: bool) -> Self {
        self.restriction = Some(r);
        self.conditional = conditional;
        self
    }

    pub fn on_nonmass(mut self) -> Self {
        self.conditional_on_nonmass = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.restriction {
            Interval::new(r.lo, r.hi)?;
        }
        if self.kind == StatisticKind::ProportionRatio {
            match (self.threshold, self.side) {
                (Some(t), Some(_)) if !t.is_nan() => {}
                _ => {
                    return Err(Error::Config(format!(
                        "proportion_ratio on {} needs a threshold and a side",
                        self.metric
                    )))
                }
            }
        }
        Ok(())
    }

    /// Short identifier, e.g. `ks_distance` or `proportion_ratio`.
    pub fn id(&self) -> &'static str {
        self.kind.as_str()
    }
}

fn ks_eval(a: &ModelInstance, b: &ModelInstance, x: f64, left: bool, norm: &Norm) -> f64 {
    let (fa, fb) = if left {
        (a.cdf_left(x), b.cdf_left(x))
    } else {
        (a.cdf(x), b.cdf(x))
    };
    ((fa - norm.a0) / norm.ma - (fb - norm.b0) / norm.mb).abs()
}

struct Norm {
    a0: f64,
    ma: f64,
    b0: f64,
    mb: f64,
}

fn golden_max(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut l, mut h) = (lo, hi);
    let mut x1 = h - gr * (h - l);
    let mut x2 = l + gr * (h - l);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 >= f2 {
            h = x2;
            x2 = x1;
            f2 = f1;
            x1 = h - gr * (h - l);
            f1 = f(x1);
        } else {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + gr * (h - l);
            f2 = f(x2);
        }
        if h - l <= 1e-12 * (1.0 + l.abs()) {
            break;
        }
    }
    f1.max(f2)
}

/// Sup-norm distance between two model CDFs, optionally restricted to an
/// interval and optionally renormalized to it.
pub fn ks_distance_models(
    a: &ModelInstance,
    b: &ModelInstance,
    restriction: Option<Interval>,
    conditional: bool,
) -> Result<f64> {
    let r = restriction.unwrap_or(Interval::ALL);
    let lo_a = a.cdf_left(r.lo);
    let lo_b = b.cdf_left(r.lo);
    let hi_a = a.cdf(r.hi);
    let hi_b = b.cdf(r.hi);
    let (ma, mb) = (hi_a - lo_a, hi_b - lo_b);
    if !(ma >= MIN_TAIL_MASS && mb >= MIN_TAIL_MASS) {
        return Err(Error::DegenerateRegion(format!(
            "restriction {r} holds mass {ma:e} and {mb:e} under the two models"
        )));
    }
    let norm = if conditional {
        Norm {
            a0: lo_a,
            ma,
            b0: lo_b,
            mb,
        }
    } else {
        Norm {
            a0: 0.0,
            ma: 1.0,
            b0: 0.0,
            mb: 1.0,
        }
    };

    let mut grid = Vec::with_capacity(2 * KS_GRID_PER_MODEL + 8);
    for (m, lo, hi) in [(a, lo_a, hi_a), (b, lo_b, hi_b)] {
        for j in 0..KS_GRID_PER_MODEL {
            let p = lo + (hi - lo) * (j as f64 + 0.5) / KS_GRID_PER_MODEL as f64;
            let x = m.quantile(p);
            if x.is_finite() && r.contains(x) {
                grid.push(x);
            }
        }
    }
    let mut special = Vec::new();
    for e in [r.lo, r.hi] {
        if e.is_finite() {
            special.push(e);
        }
    }
    for m in [a, b] {
        if let Some((loc, _)) = m.atom() {
            if r.contains(loc) {
                special.push(loc);
            }
        }
    }
    grid.extend_from_slice(&special);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut best = 0.0f64;
    // Jump points need the left limit too.
    for &x in &special {
        best = best.max(ks_eval(a, b, x, false, &norm));
        if x > r.lo {
            best = best.max(ks_eval(a, b, x, true, &norm));
        }
    }
    if grid.is_empty() {
        return Ok(best.min(1.0));
    }
    let vals: Vec<f64> = grid.iter().map(|&x| ks_eval(a, b, x, false, &norm)).collect();
    best = best.max(vals.iter().copied().fold(0.0, f64::max));

    // Refine the largest few local maxima of the grid, each on both
    // neighbouring gaps, by golden-section search.
    let n = vals.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == n || vals[i] >= vals[i + 1]))
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    peaks.truncate(KS_REFINED_PEAKS);
    let f = |x: f64| ks_eval(a, b, x, true, &norm);
    for imax in peaks {
        for (lo, hi) in [
            (grid[imax.saturating_sub(1)], grid[imax]),
            (grid[imax], grid[(imax + 1).min(n - 1)]),
        ] {
            if hi > lo {
                best = best.max(golden_max(&f, lo, hi));
            }
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// How posterior draws of the two fits are matched up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Draw s of `a` with draw s of `b`.
    Identity,
    /// Draw s of `a` with draw perm(s) of `b`, perm seeded.
    Permuted { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticPosterior {
    pub spec: StatisticSpec,
    pub draws: Vec<f64>,
    pub hdi: HdiInterval,
    /// Posterior median.
    pub point_estimate: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Posterior of a comparison statistic. `fit_a` is the reference and
/// `fit_b` the candidate: mean differences are reference minus candidate,
/// ratios are candidate over reference.
pub fn posterior_statistic(
    fit_a: &PosteriorFit,
    fit_b: &PosteriorFit,
    spec: &StatisticSpec,
    pairing: Pairing,
    mass: f64,
) -> Result<StatisticPosterior> {
    spec.validate()?;
    let spec = spec.clone();
    let mixture = fit_a.spec.is_mixture() || fit_b.spec.is_mixture();
    if spec.conditional_on_nonmass && !mixture {
        return Err(Error::Config(format!(
            "conditional_on_nonmass needs a mixture model on {}",
            spec.metric
        )));
    }
    let n = fit_a.n_draws().min(fit_b.n_draws());
    if n == 0 {
        return Err(Error::InsufficientData("a fit has no draws".into()));
    }
    let perm: Vec<usize> = match pairing {
        Pairing::Identity => (0..n).collect(),
        Pairing::Permuted { seed: s } => {
            use rand::seq::SliceRandom;
            let mut p: Vec<usize> = (0..fit_b.n_draws()).collect();
            p.shuffle(&mut seed::rng(s));
            p.truncate(n);
            p
        }
    };

    let values = par::map_range(n, |s| -> Result<f64> {
        let mut a = fit_a.instance(s)?;
        let mut b = fit_b.instance(perm[s])?;
        if spec.conditional_on_nonmass {
            a = a.continuous_part();
            b = b.continuous_part();
        }
        match spec.kind {
            StatisticKind::MeanDiff => Ok(a.mean_of() - b.mean_of()),
            StatisticKind::KsDistance => {
                ks_distance_models(&a, &b, spec.restriction, spec.conditional)
            }
            StatisticKind::ProportionRatio => {
                let t = spec.threshold.expect("validated");
                let side = spec.side.expect("validated");
                let ref_mass = a.tail_mass(t, side);
                if !(ref_mass >= MIN_TAIL_MASS) {
                    return Err(Error::RatioOverflow { draw: s });
                }
                Ok(b.tail_mass(t, side) / ref_mass)
            }
        }
    });
    let draws: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    if let Some((s, v)) = draws.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(format!("statistic draw {s} is {v}")));
    }
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let interval = if sorted.len() >= 20 {
        if !(mass > 0.0 && mass < 1.0) {
            return Err(Error::Precondition(format!("HDI mass must lie in (0, 1), got {mass}")));
        }
        hdi_sorted(&sorted, mass)
    } else {
        // Too few draws for an interval estimate: report the full range.
        HdiInterval {
            lo: sorted[0],
            hi: sorted[sorted.len() - 1],
            mass,
        }
    };
    Ok(StatisticPosterior {
        point_estimate: median(&sorted),
        spec,
        draws,
        hdi: interval,
    })
}

/// JSON record describing a persisted statistic posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRecord {
    pub metric: MetricName,
    pub statistic: StatisticKind,
    pub draws_file: String,
    pub hdi: [f64; 2],
    pub mass: f64,
    pub point_estimate: f64,
    pub spec: StatisticSpec,
}

impl StatisticPosterior {
    pub fn record(&self, draws_file: &str) -> StatisticRecord {
        StatisticRecord {
            metric: self.spec.metric,
            statistic: self.spec.kind,
            draws_file: draws_file.to_string(),
            hdi: [self.hdi.lo, self.hdi.hi],
            mass: self.hdi.mass,
            point_estimate: self.point_estimate,
            spec: self.spec.clone(),
        }
    }

    /// Write `<stem>.json` and `<stem>.draws.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<StatisticRecord> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let draws_name = format!("{stem}.draws.csv");
        let draws_path = dir.join(&draws_name);
        let mut text = String::from("draw\n");
        for v in &self.draws {
            text.push_str(&v.to_string());
            text.push('\n');
        }
        std::fs::write(&draws_path, text).map_err(|e| Error::io(&draws_path, e))?;
        let rec = self.record(&draws_name);
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, serde_json::to_string_pretty(&rec)? + "\n")
            .map_err(|e| Error::io(&json_path, e))?;
        Ok(rec)
    }
}

pub fn read_statistic_record(path: &Path) -> Result<StatisticRecord> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
