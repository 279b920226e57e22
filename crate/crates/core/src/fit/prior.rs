use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::FamilyId;
use crate::error::{Error, Result};

/// Prior on a single parameter.
///
/// Positive parameters are sampled on the log scale and unconstrained ones
/// directly, so both `log_normal` (positive) and `normal` (unconstrained)
/// are Gaussian on the sampling scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    LogNormal { mu: f64, sigma: f64 },
    Normal { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64 },
    /// Parameter held at a known value.
    Fixed { value: f64 },
}

impl Prior {
    /// Log density on the sampling scale, up to a constant.
    #[inline]
    pub fn ln_density_unconstrained(&self, u: f64) -> f64 {
        match *self {
            Prior::LogNormal { mu, sigma } | Prior::Normal { mu, sigma } => {
                let z = (u - mu) / sigma;
                -0.5 * z * z
            }
            Prior::Beta { .. } | Prior::Fixed { .. } => 0.0,
        }
    }

    fn check(&self, name: &str, role: ParamRole) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("prior for `{name}`: {msg}")));
        match (*self, role) {
            (Prior::LogNormal { mu, sigma }, ParamRole::Positive)
            | (Prior::Normal { mu, sigma }, ParamRole::Unconstrained) => {
                if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return bad("needs finite mu and sigma > 0");
                }
                Ok(())
            }
            (Prior::Beta { a, b }, ParamRole::Probability) => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad("beta shapes must be positive");
                }
                Ok(())
            }
            (Prior::Fixed { value }, role) => {
                let ok = match role {
                    ParamRole::Positive => value > 0.0 && value.is_finite(),
                    ParamRole::Unconstrained => value.is_finite(),
                    ParamRole::Probability => (0.0..=1.0).contains(&value),
                };
                if ok {
                    Ok(())
                } else {
                    bad("fixed value outside the parameter's legal region")
                }
            }
            (_, ParamRole::Positive) => bad("positive parameters take a log_normal prior"),
            (_, ParamRole::Unconstrained) => bad("unconstrained parameters take a normal prior"),
            (_, ParamRole::Probability) => bad("the point-mass probability takes a beta prior"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Positive,
    Unconstrained,
    Probability,
}

impl ParamRole {
    #[inline]
    pub fn to_unconstrained(self, theta: f64) -> f64 {
        match self {
            ParamRole::Positive => theta.ln(),
            ParamRole::Unconstrained => theta,
            ParamRole::Probability => (theta / (1.0 - theta)).ln(),
        }
    }

    #[inline]
    pub fn to_constrained(self, u: f64) -> f64 {
        match self {
            ParamRole::Positive => u.exp(),
            ParamRole::Unconstrained => u,
            ParamRole::Probability => 1.0 / (1.0 + (-u).exp()),
        }
    }
}

/// Per-parameter prior overrides keyed by parameter name (`pi` for the
/// point-mass probability). Parameters without an override get the
/// defaults: `log_normal(0, 2)` for positive parameters, `normal(0, 10)`
/// for unconstrained ones, `beta(1, 1)` for `pi`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub overrides: BTreeMap<String, Prior>,
}

impl PriorSpec {
    pub fn with(mut self, name: &str, prior: Prior) -> Self {
        self.overrides.insert(name.to_string(), prior);
        self
    }

    pub fn default_for(role: ParamRole) -> Prior {
        match role {
            ParamRole::Positive => Prior::LogNormal {
                mu: 0.0,
                sigma: 2.0,
            },
            ParamRole::Unconstrained => Prior::Normal {
                mu: 0.0,
                sigma: 10.0,
            },
            ParamRole::Probability => Prior::Beta { a: 1.0, b: 1.0 },
        }
    }

    /// Resolve priors for the continuous parameters of `family`.
    pub fn resolve(&self, family: FamilyId) -> Result<Vec<(ParamRole, Prior)>> {
        let mut out = Vec::new();
        for (name, positive) in family.param_names().iter().zip(family.positive_params()) {
            let role = if *positive {
                ParamRole::Positive
            } else {
                ParamRole::Unconstrained
            };
            let prior = self
                .overrides
                .get(*name)
                .copied()
                .unwrap_or_else(|| Self::default_for(role));
            prior.check(name, role)?;
            out.push((role, prior));
        }
        for key in self.overrides.keys() {
            if key != "pi" && !family.param_names().contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "prior override `{key}` does not name a {family} parameter"
                )));
            }
        }
        Ok(out)
    }

    /// Resolve the beta prior on the point-mass probability.
    pub fn resolve_pi(&self) -> Result<(f64, f64)> {
        let prior = self
            .overrides
            .get("pi")
            .copied()
            .unwrap_or_else(|| Self::default_for(ParamRole::Probability));
        prior.check("pi", ParamRole::Probability)?;
        match prior {
            Prior::Beta { a, b } => Ok((a, b)),
            _ => Err(Error::Config("`pi` takes a beta prior".into())),
        }
    }
}
