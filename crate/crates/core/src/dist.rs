//! Parametric families, point-mass mixtures, and models on a metric axis.
//!
//! Families are parameterized as:
//!
//! | family             | params          |
//! |--------------------|-----------------|
//! | exponential        | rate            |
//! | normal             | mu, sigma       |
//! | log_normal         | mu, sigma (log) |
//! | gamma              | shape, rate     |
//! | truncated_normal   | mu, sigma       |
//!
//! A [`ModelInstance`] lives on the metric axis. Metrics with nonpositive
//! support (`t_nr`, the acceleration minima) are modeled on magnitudes and
//! mapped back with [`DomainTransform::Negate`].

use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::special::{
    gamma_p, gamma_p_inv, gamma_q, ln_gamma, ln_norm_interval, ln_norm_sf, norm_cdf, norm_ln_pdf,
    norm_ppf,
};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Exponential,
    Normal,
    LogNormal,
    Gamma,
    TruncatedNormal,
}

impl FamilyId {
    pub const ALL: [FamilyId; 5] = [
        FamilyId::Exponential,
        FamilyId::Normal,
        FamilyId::LogNormal,
        FamilyId::Gamma,
        FamilyId::TruncatedNormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyId::Exponential => "exponential",
            FamilyId::Normal => "normal",
            FamilyId::LogNormal => "log_normal",
            FamilyId::Gamma => "gamma",
            FamilyId::TruncatedNormal => "truncated_normal",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FamilyId::Exponential => &["rate"],
            FamilyId::Normal | FamilyId::LogNormal | FamilyId::TruncatedNormal => &["mu", "sigma"],
            FamilyId::Gamma => &["shape", "rate"],
        }
    }

    /// Which parameters are constrained to be positive.
    pub fn positive_params(self) -> &'static [bool] {
        match self {
            FamilyId::Exponential => &[true],
            FamilyId::Normal | FamilyId::LogNormal | FamilyId::TruncatedNormal => &[false, true],
            FamilyId::Gamma => &[true, true],
        }
    }

    pub fn dim(self) -> usize {
        self.param_names().len()
    }

    /// Lower edge of the support of the untruncated family.
    pub fn requires_positive_data(self) -> bool {
        matches!(
            self,
            FamilyId::Exponential | FamilyId::LogNormal | FamilyId::Gamma
        )
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FamilyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown family `{s}`")))
    }
}

/// A family plus any fixed structural constants (truncation bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub id: FamilyId,
    /// Truncation interval; used by `truncated_normal` only.
    #[serde(default = "default_bounds", with = "extended_reals")]
    pub bounds: (f64, f64),
}

/// Serializes infinite bounds as the strings `"inf"` / `"-inf"`, which JSON
/// cannot otherwise represent.
mod extended_reals {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v == f64::INFINITY {
            Repr::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Repr::Text("-inf".into())
        } else {
            Repr::Num(v)
        }
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number or +/-inf, got `{other}`"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(b: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        (to_repr(b.0), to_repr(b.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let (a, b) = <(Repr, Repr)>::deserialize(d)?;
        Ok((from_repr(a)?, from_repr(b)?))
    }
}

fn default_bounds() -> (f64, f64) {
    (0.0, f64::INFINITY)
}

impl Family {
    pub fn new(id: FamilyId) -> Self {
        Family {
            id,
            bounds: default_bounds(),
        }
    }

    pub fn truncated_normal(lo: f64, hi: f64) -> Self {
        Family {
            id: FamilyId::TruncatedNormal,
            bounds: (lo, hi),
        }
    }

    /// Whether `y` lies in the support the fit requires.
    pub fn admits(&self, y: f64) -> bool {
        match self.id {
            FamilyId::Normal => y.is_finite(),
            FamilyId::TruncatedNormal => y >= self.bounds.0 && y <= self.bounds.1,
            _ => y > 0.0 && y.is_finite(),
        }
    }
}

/// A continuous distribution with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Continuous {
    Exponential { rate: f64 },
    Normal { mu: f64, sigma: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, rate: f64 },
    TruncatedNormal { mu: f64, sigma: f64, lo: f64, hi: f64, ln_z: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ParameterDomain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ParameterDomain(format!("{name} must be finite, got {v}")))
    }
}

/// Log-likelihood as a linear form over the features
/// `(1, y, ln y, y^2, (ln y)^2)`. Zero coefficients are skipped so that
/// unused features may be non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearLogLik {
    pub coef: [f64; 5],
}

impl LinearLogLik {
    #[inline]
    pub fn eval(&self, f: &[f64; 5]) -> f64 {
        let mut acc = self.coef[0] * f[0];
        for k in 1..5 {
            if self.coef[k] != 0.0 {
                acc += self.coef[k] * f[k];
            }
        }
        acc
    }
}

#[inline]
pub fn features(y: f64) -> [f64; 5] {
    let ly = y.ln();
    [1.0, y, ly, y * y, ly * ly]
}

impl Continuous {
    pub fn new(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.id.dim() {
            return Err(Error::ParameterDomain(format!(
                "{} takes {} parameter(s), got {}",
                family.id,
                family.id.dim(),
                params.len()
            )));
        }
        Ok(match family.id {
            FamilyId::Exponential => Continuous::Exponential {
                rate: positive("rate", params[0])?,
            },
            FamilyId::Normal => Continuous::Normal {
                mu: finite("mu", params[0])?,
                sigma: positive("sigma", params[1])?,
            },
            FamilyId::LogNormal => Continuous::LogNormal {
                mu: finite("mu", params[0])?,
                sigma: positive("sigma", params[1])?,
            },
            FamilyId::Gamma => Continuous::Gamma {
                shape: positive("shape", params[0])?,
                rate: positive("rate", params[1])?,
            },
            FamilyId::TruncatedNormal => {
                let (lo, hi) = family.bounds;
                if !(lo < hi) {
                    return Err(Error::ParameterDomain(format!(
                        "truncation bounds must satisfy lo < hi, got [{lo}, {hi}]"
                    )));
                }
                let mu = finite("mu", params[0])?;
                let sigma = positive("sigma", params[1])?;
                let ln_z = ln_norm_interval((lo - mu) / sigma, (hi - mu) / sigma);
                if !ln_z.is_finite() {
                    return Err(Error::ParameterDomain(format!(
                        "truncated normal mass underflows for mu = {mu}, sigma = {sigma}"
                    )));
                }
                Continuous::TruncatedNormal {
                    mu,
                    sigma,
                    lo,
                    hi,
                    ln_z,
                }
            }
        })
    }

    pub fn family(&self) -> Family {
        match *self {
            Continuous::Exponential { .. } => Family::new(FamilyId::Exponential),
            Continuous::Normal { .. } => Family::new(FamilyId::Normal),
            Continuous::LogNormal { .. } => Family::new(FamilyId::LogNormal),
            Continuous::Gamma { .. } => Family::new(FamilyId::Gamma),
            Continuous::TruncatedNormal { lo, hi, .. } => Family::truncated_normal(lo, hi),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Continuous::Exponential { rate } => vec![rate],
            Continuous::Normal { mu, sigma }
            | Continuous::LogNormal { mu, sigma }
            | Continuous::TruncatedNormal { mu, sigma, .. } => vec![mu, sigma],
            Continuous::Gamma { shape, rate } => vec![shape, rate],
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Continuous::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Continuous::TruncatedNormal { lo, hi, .. } => (lo, hi),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x.is_nan() || x < lo || x > hi {
            return f64::NEG_INFINITY;
        }
        match *self {
            Continuous::Exponential { rate } => rate.ln() - rate * x,
            Continuous::Normal { mu, sigma } => norm_ln_pdf((x - mu) / sigma) - sigma.ln(),
            Continuous::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                norm_ln_pdf((lx - mu) / sigma) - sigma.ln() - lx
            }
            Continuous::Gamma { shape, rate } => {
                if x == 0.0 {
                    return match shape {
                        s if s < 1.0 => f64::INFINITY,
                        s if s == 1.0 => rate.ln(),
                        _ => f64::NEG_INFINITY,
                    };
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Continuous::TruncatedNormal {
                mu, sigma, ln_z, ..
            } => norm_ln_pdf((x - mu) / sigma) - sigma.ln() - ln_z,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            Continuous::Exponential { rate } => -(-rate * x).exp_m1(),
            Continuous::Normal { mu, sigma } => norm_cdf((x - mu) / sigma),
            Continuous::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - mu) / sigma)
                }
            }
            Continuous::Gamma { shape, rate } => gamma_p(shape, rate * x),
            Continuous::TruncatedNormal {
                mu, sigma, lo, ln_z, ..
            } => {
                let a = (lo - mu) / sigma;
                let z = (x - mu) / sigma;
                if z <= a {
                    0.0
                } else {
                    (ln_norm_interval(a, z) - ln_z).exp().min(1.0)
                }
            }
        }
    }

    /// Upper tail 1 - F(x), computed directly where that is more accurate.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Continuous::Exponential { rate } if x >= 0.0 => (-rate * x).exp(),
            Continuous::Gamma { shape, rate } if x > 0.0 => gamma_q(shape, rate * x),
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.support().0;
        }
        if p >= 1.0 {
            return self.support().1;
        }
        match *self {
            Continuous::Exponential { rate } => -(-p).ln_1p() / rate,
            Continuous::Normal { mu, sigma } => mu + sigma * norm_ppf(p),
            Continuous::LogNormal { mu, sigma } => (mu + sigma * norm_ppf(p)).exp(),
            Continuous::Gamma { shape, rate } => gamma_p_inv(shape, p) / rate,
            Continuous::TruncatedNormal {
                mu,
                sigma,
                lo,
                hi,
                ln_z,
            } => {
                let a = (lo - mu) / sigma;
                let b = (hi - mu) / sigma;
                let z = if a >= 0.0 {
                    // Work with upper tails: Q(z) = Q(a) - p Z.
                    let ln_qa = ln_norm_sf(a);
                    let ln_target = ln_qa + (-(p * (ln_z - ln_qa).exp())).ln_1p();
                    let target = ln_target.exp();
                    if target > 0.0 {
                        -norm_ppf(target)
                    } else {
                        // Far tail: exponential approximation.
                        a - (-p).ln_1p() / a
                    }
                } else {
                    let fa = norm_cdf(a);
                    norm_ppf(fa + p * ln_z.exp())
                };
                (mu + sigma * z.clamp(a, b)).clamp(lo, hi)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Continuous::Exponential { rate } => 1.0 / rate,
            Continuous::Normal { mu, .. } => mu,
            Continuous::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Continuous::Gamma { shape, rate } => shape / rate,
            Continuous::TruncatedNormal {
                mu,
                sigma,
                lo,
                hi,
                ln_z,
            } => {
                let a = (lo - mu) / sigma;
                let b = (hi - mu) / sigma;
                let pa = if a.is_finite() {
                    (norm_ln_pdf(a) - ln_z).exp()
                } else {
                    0.0
                };
                let pb = if b.is_finite() {
                    (norm_ln_pdf(b) - ln_z).exp()
                } else {
                    0.0
                };
                mu + sigma * (pa - pb)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Continuous::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            Continuous::Normal { mu, sigma } => {
                Normal::new(mu, sigma).expect("validated").sample(rng)
            }
            Continuous::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated").sample(rng)
            }
            Continuous::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("validated")
                .sample(rng),
            Continuous::TruncatedNormal { .. } => {
                let u: f64 = rng.random();
                self.quantile(u)
            }
        }
    }

    /// Coefficients of the log-density over [`features`].
    pub fn linear_loglik(&self) -> LinearLogLik {
        let gauss = |mu: f64, sigma: f64| {
            let s2 = sigma * sigma;
            (
                -sigma.ln() - LN_SQRT_2PI - mu * mu / (2.0 * s2),
                mu / s2,
                -1.0 / (2.0 * s2),
            )
        };
        let coef = match *self {
            Continuous::Exponential { rate } => [rate.ln(), -rate, 0.0, 0.0, 0.0],
            Continuous::Normal { mu, sigma } => {
                let (c0, c1, c2) = gauss(mu, sigma);
                [c0, c1, 0.0, c2, 0.0]
            }
            Continuous::TruncatedNormal {
                mu, sigma, ln_z, ..
            } => {
                let (c0, c1, c2) = gauss(mu, sigma);
                [c0 - ln_z, c1, 0.0, c2, 0.0]
            }
            Continuous::LogNormal { mu, sigma } => {
                let (c0, c1, c2) = gauss(mu, sigma);
                [c0, 0.0, c1 - 1.0, 0.0, c2]
            }
            Continuous::Gamma { shape, rate } => [
                shape * rate.ln() - ln_gamma(shape),
                -rate,
                shape - 1.0,
                0.0,
                0.0,
            ],
        };
        LinearLogLik { coef }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTransform {
    #[default]
    Identity,
    /// Metric value x is modeled through the magnitude y = -x.
    Negate,
}

impl DomainTransform {
    #[inline]
    pub fn to_model(self, x: f64) -> f64 {
        match self {
            DomainTransform::Identity => x,
            DomainTransform::Negate => -x,
        }
    }

    #[inline]
    pub fn to_metric(self, y: f64) -> f64 {
        self.to_model(y)
    }
}

/// Point mass at `loc` with probability `pi`, continuous part elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture {
    pub loc: f64,
    pub pi: f64,
    pub cont: Continuous,
}

impl Mixture {
    pub fn new(loc: f64, pi: f64, cont: Continuous) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::ParameterDomain(format!("pi must lie in [0, 1], got {pi}")));
        }
        finite("loc", loc)?;
        Ok(Mixture { loc, pi, cont })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Body {
    Continuous(Continuous),
    Mixture(Mixture),
}

impl Body {
    fn atom(&self) -> Option<(f64, f64)> {
        match self {
            Body::Mixture(m) => Some((m.loc, m.pi)),
            Body::Continuous(_) => None,
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        match self {
            Body::Continuous(c) => c.cdf(y),
            Body::Mixture(m) => {
                let jump = if y >= m.loc { m.pi } else { 0.0 };
                (jump + (1.0 - m.pi) * m.cont.cdf(y)).min(1.0)
            }
        }
    }

    /// P(Y < y).
    fn cdf_left(&self, y: f64) -> f64 {
        match self {
            Body::Continuous(c) => c.cdf(y),
            Body::Mixture(m) => {
                let jump = if y > m.loc { m.pi } else { 0.0 };
                (jump + (1.0 - m.pi) * m.cont.cdf(y)).min(1.0)
            }
        }
    }

    /// P(Y >= y).
    fn sf_closed(&self, y: f64) -> f64 {
        match self {
            Body::Continuous(c) => c.sf(y),
            Body::Mixture(m) => {
                let jump = if y <= m.loc { m.pi } else { 0.0 };
                (jump + (1.0 - m.pi) * m.cont.sf(y)).min(1.0)
            }
        }
    }

    /// P(Y > y).
    fn sf_open(&self, y: f64) -> f64 {
        match self {
            Body::Continuous(c) => c.sf(y),
            Body::Mixture(m) => {
                let jump = if y < m.loc { m.pi } else { 0.0 };
                (jump + (1.0 - m.pi) * m.cont.sf(y)).min(1.0)
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            Body::Continuous(c) => c.quantile(p),
            Body::Mixture(m) => {
                let below = (1.0 - m.pi) * m.cont.cdf(m.loc);
                if p <= below {
                    m.cont.quantile(p / (1.0 - m.pi))
                } else if p <= below + m.pi {
                    m.loc
                } else {
                    m.cont.quantile((p - m.pi) / (1.0 - m.pi))
                }
            }
        }
    }
}

/// A fully parameterized model on a metric axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInstance {
    pub body: Body,
    pub transform: DomainTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Geq,
    Leq,
}

impl ModelInstance {
    pub fn continuous(c: Continuous, transform: DomainTransform) -> Self {
        ModelInstance {
            body: Body::Continuous(c),
            transform,
        }
    }

    pub fn mixture(m: Mixture, transform: DomainTransform) -> Self {
        ModelInstance {
            body: Body::Mixture(m),
            transform,
        }
    }

    /// Build from a family and a flat parameter vector. For mixtures the
    /// first parameter is `pi`.
    pub fn from_params(
        family: Family,
        mixture_loc: Option<f64>,
        params: &[f64],
        transform: DomainTransform,
    ) -> Result<Self> {
        match mixture_loc {
            None => Ok(Self::continuous(Continuous::new(family, params)?, transform)),
            Some(loc) => {
                let (pi, rest) = params
                    .split_first()
                    .ok_or_else(|| Error::ParameterDomain("mixture needs pi".into()))?;
                let cont = Continuous::new(family, rest)?;
                Ok(Self::mixture(Mixture::new(loc, *pi, cont)?, transform))
            }
        }
    }

    /// Point-mass location on the metric axis, with its probability.
    pub fn atom(&self) -> Option<(f64, f64)> {
        self.body
            .atom()
            .map(|(loc, pi)| (self.transform.to_metric(loc), pi))
    }

    /// The continuous component alone (conditional on not hitting the atom).
    pub fn continuous_part(&self) -> ModelInstance {
        match self.body {
            Body::Continuous(_) => *self,
            Body::Mixture(m) => ModelInstance::continuous(m.cont, self.transform),
        }
    }

    /// Natural-log density; at the atom of a mixture this is ln(pi).
    pub fn log_density(&self, x: f64) -> f64 {
        let y = self.transform.to_model(x);
        match &self.body {
            Body::Continuous(c) => c.ln_pdf(y),
            Body::Mixture(m) => {
                if y == m.loc {
                    m.pi.ln()
                } else {
                    (1.0 - m.pi).ln() + m.cont.ln_pdf(y)
                }
            }
        }
    }

    /// Right-continuous CDF on the metric axis.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match self.transform {
            DomainTransform::Identity => self.body.cdf(x),
            DomainTransform::Negate => self.body.sf_closed(-x),
        }
    }

    /// P(X < x).
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match self.transform {
            DomainTransform::Identity => self.body.cdf_left(x),
            DomainTransform::Negate => self.body.sf_open(-x),
        }
    }

    pub fn tail_mass(&self, threshold: f64, side: Side) -> f64 {
        match side {
            Side::Geq => match self.transform {
                DomainTransform::Identity => {
                    if threshold == f64::NEG_INFINITY {
                        1.0
                    } else {
                        self.body.sf_closed(threshold)
                    }
                }
                DomainTransform::Negate => 1.0 - self.cdf_left(threshold),
            },
            Side::Leq => self.cdf(threshold),
        }
    }

    /// Generalized inverse of the CDF on the metric axis.
    pub fn quantile(&self, p: f64) -> f64 {
        match self.transform {
            DomainTransform::Identity => self.body.quantile(p),
            DomainTransform::Negate => -self.body.quantile(1.0 - p),
        }
    }

    pub fn mean_of(&self) -> f64 {
        let m = match &self.body {
            Body::Continuous(c) => c.mean(),
            Body::Mixture(m) => m.pi * m.loc + (1.0 - m.pi) * m.cont.mean(),
        };
        self.transform.to_metric(m)
    }

    pub fn sample(&self, n: usize, seed_value: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed_value);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let y = match &self.body {
                    Body::Continuous(c) => c.sample(rng),
                    Body::Mixture(m) => {
                        if rng.random::<f64>() < m.pi {
                            m.loc
                        } else {
                            m.cont.sample(rng)
                        }
                    }
                };
                self.transform.to_metric(y)
            })
            .collect()
    }

    /// Probability the model assigns below `lower` on the model axis; used
    /// to flag normal fits on nonnegative metrics.
    pub fn mass_below_model_support(&self, lower: f64) -> f64 {
        match &self.body {
            Body::Continuous(c) => c.cdf(lower),
            Body::Mixture(m) => (1.0 - m.pi) * m.cont.cdf(lower),
        }
    }
}

/// Beta draw for the point-mass probability.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("beta shape parameters are positive").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(rate: f64) -> ModelInstance {
        ModelInstance::continuous(
            Continuous::new(Family::new(FamilyId::Exponential), &[rate]).unwrap(),
            DomainTransform::Identity,
        )
    }

    fn normal(mu: f64, sigma: f64) -> ModelInstance {
        ModelInstance::continuous(
            Continuous::new(Family::new(FamilyId::Normal), &[mu, sigma]).unwrap(),
            DomainTransform::Identity,
        )
    }

    fn gamma(shape: f64, rate: f64) -> Continuous {
        Continuous::new(Family::new(FamilyId::Gamma), &[shape, rate]).unwrap()
    }

    #[test]
    fn log_density_examples() {
        assert_eq!(exp(1.0).log_density(0.0), 0.0);
        assert!((normal(0.0, 1.0).log_density(0.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
        let cont = Continuous::new(Family::new(FamilyId::Exponential), &[1.0]).unwrap();
        let mix = ModelInstance::mixture(
            Mixture::new(0.0, 0.3, cont).unwrap(),
            DomainTransform::Identity,
        );
        assert!((mix.log_density(0.0) - 0.3_f64.ln()).abs() < 1e-15);
        assert!((mix.log_density(0.0) + 1.203_972_804_325_936).abs() < 1e-12);
        assert_eq!(exp(1.0).log_density(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn illegal_params_rejected() {
        assert!(Continuous::new(Family::new(FamilyId::Gamma), &[0.0, 1.0]).is_err());
        assert!(Continuous::new(Family::new(FamilyId::Normal), &[0.0, -1.0]).is_err());
        assert!(Continuous::new(Family::new(FamilyId::Exponential), &[1.0, 2.0]).is_err());
        assert!(Continuous::new(Family::truncated_normal(1.0, 1.0), &[0.0, 1.0]).is_err());
        assert!(Mixture::new(0.0, 1.5, gamma(1.0, 1.0)).is_err());
    }

    #[test]
    fn cdf_examples() {
        let g = ModelInstance::continuous(gamma(1.0, 2.0), DomainTransform::Identity);
        assert!((g.cdf(2.0_f64.ln() / 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(g.cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(g.cdf(f64::INFINITY), 1.0);
        let mix = ModelInstance::mixture(
            Mixture::new(0.0, 0.4, gamma(2.0, 1.0)).unwrap(),
            DomainTransform::Identity,
        );
        assert_eq!(mix.cdf_left(0.0), 0.0);
        assert!((mix.cdf(0.0) - 0.4).abs() < 1e-15);
        let neg = ModelInstance::mixture(
            Mixture::new(0.0, 0.4, gamma(2.0, 1.0)).unwrap(),
            DomainTransform::Negate,
        );
        assert!((neg.cdf(0.0) - 1.0).abs() < 1e-15);
        assert!((neg.cdf_left(0.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn means() {
        assert_eq!(normal(3.0, 2.0).mean_of(), 3.0);
        let g = ModelInstance::continuous(gamma(2.0, 1.0 / 3.0), DomainTransform::Identity);
        assert!((g.mean_of() - 6.0).abs() < 1e-12);
        let cont = Continuous::new(Family::new(FamilyId::Exponential), &[1.0 / 8.0]).unwrap();
        let mix = ModelInstance::mixture(
            Mixture::new(0.0, 0.25, cont).unwrap(),
            DomainTransform::Identity,
        );
        assert!((mix.mean_of() - 6.0).abs() < 1e-12);
        let neg = ModelInstance { transform: DomainTransform::Negate, ..mix };
        assert!((neg.mean_of() + 6.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_mean_matches_quadrature() {
        let c = Continuous::new(Family::truncated_normal(0.0, f64::INFINITY), &[-1.0, 2.0]).unwrap();
        // Simpson on [0, 40].
        let n = 20_000;
        let h = 40.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * x * c.ln_pdf(x).exp();
        }
        assert!((s * h / 3.0 - c.mean()).abs() < 1e-9);
    }

    #[test]
    fn tail_mass_examples() {
        assert!((exp(1.0).tail_mass(2.0_f64.ln(), Side::Geq) - 0.5).abs() < 1e-15);
        assert_eq!(exp(1.0).tail_mass(f64::NEG_INFINITY, Side::Geq), 1.0);
        assert!((normal(1.5, 0.3).tail_mass(1.5, Side::Geq) - 0.5).abs() < 1e-15);
        // atom included on both sides
        let mix = ModelInstance::mixture(
            Mixture::new(0.0, 0.3, gamma(2.0, 1.0)).unwrap(),
            DomainTransform::Negate,
        );
        assert!((mix.tail_mass(0.0, Side::Geq) - 0.3).abs() < 1e-15);
        assert!((mix.tail_mass(0.0, Side::Leq) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_form_matches_ln_pdf() {
        let models = [
            Continuous::new(Family::new(FamilyId::Exponential), &[0.7]).unwrap(),
            Continuous::new(Family::new(FamilyId::Normal), &[1.2, 0.4]).unwrap(),
            Continuous::new(Family::new(FamilyId::LogNormal), &[0.3, 0.8]).unwrap(),
            gamma(2.5, 1.7),
            Continuous::new(Family::truncated_normal(0.0, f64::INFINITY), &[0.5, 1.1]).unwrap(),
        ];
        for m in models {
            let form = m.linear_loglik();
            for &y in &[0.05, 0.5, 1.0, 2.3, 7.0] {
                let a = form.eval(&features(y));
                let b = m.ln_pdf(y);
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{m:?} at {y}");
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let models = [
            exp(2.0),
            normal(-1.0, 3.0),
            ModelInstance::continuous(gamma(0.6, 0.2), DomainTransform::Negate),
            ModelInstance::continuous(
                Continuous::new(Family::truncated_normal(0.0, f64::INFINITY), &[-3.0, 1.0])
                    .unwrap(),
                DomainTransform::Identity,
            ),
            ModelInstance::continuous(
                Continuous::new(Family::truncated_normal(0.0, f64::INFINITY), &[4.0, 0.5])
                    .unwrap(),
                DomainTransform::Identity,
            ),
        ];
        for m in models {
            for &p in &[0.001, 0.1, 0.5, 0.77, 0.999] {
                let x = m.quantile(p);
                assert!((m.cdf(x) - p).abs() < 1e-9, "{m:?} at {p}: {}", m.cdf(x));
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let m = normal(3.0, 2.0);
        assert_eq!(m.sample(100, 9), m.sample(100, 9));
        assert_ne!(m.sample(100, 9), m.sample(100, 10));
    }
}
