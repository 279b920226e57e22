//! Weighted-likelihood posterior sampling, convergence diagnostics, WAIC and
//! model selection.
//!
//! Every supported family has a log-density that is linear in the features
//! `(1, y, ln y, y^2, (ln y)^2)`, so the weighted log-likelihood of a whole
//! sample collapses to a dot product with five weighted sums. Each
//! Metropolis step therefore costs O(1) regardless of sample size.

pub mod bundle;
pub mod diagnostics;
pub mod prior;
mod sampler;
pub mod select;
pub mod waic;

use serde::{Deserialize, Serialize};

use crate::dist::{
    features, sample_beta, Continuous, DomainTransform, Family, FamilyId, LinearLogLik,
    ModelInstance,
};
use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::weighted::WeightedSample;

pub use diagnostics::{diagnose, ParamDiagnostics};
pub use prior::{ParamRole, Prior, PriorSpec};
pub use select::{select_model, Selection};
pub use waic::{waic_from_matrix, Waic};

use sampler::{ChainSettings, Mat, MAX_DIM};

/// Convergence threshold on split-R̂.
pub const R_HAT_LIMIT: f64 = 1.05;

/// What is being fitted: a family (optionally with a point mass) and the map
/// from the metric axis to the model axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Location of the point mass on the model axis, if any.
    pub mixture_loc: Option<f64>,
    pub transform: DomainTransform,
}

impl ModelSpec {
    pub fn continuous(family: Family, transform: DomainTransform) -> Self {
        ModelSpec {
            family,
            mixture_loc: None,
            transform,
        }
    }

    pub fn mixture(family: Family, loc: f64, transform: DomainTransform) -> Self {
        ModelSpec {
            family,
            mixture_loc: Some(loc),
            transform,
        }
    }

    pub fn is_mixture(&self) -> bool {
        self.mixture_loc.is_some()
    }

    /// Parameter names in draw-column order (`pi` first for mixtures).
    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = Vec::with_capacity(3);
        if self.is_mixture() {
            names.push("pi");
        }
        names.extend_from_slice(self.family.id.param_names());
        names
    }

    pub fn dim(&self) -> usize {
        self.family.id.dim() + usize::from(self.is_mixture())
    }

    /// Human-readable label such as `gamma` or `mixture(truncated_normal)`.
    pub fn label(&self) -> String {
        if self.is_mixture() {
            format!("mixture({})", self.family.id)
        } else {
            self.family.id.to_string()
        }
    }

    pub fn instance(&self, params: &[f64]) -> Result<ModelInstance> {
        ModelInstance::from_params(self.family, self.mixture_loc, params, self.transform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub warmup: usize,
    pub seed: u64,
    pub adapt_target_accept: f64,
    /// Rescale weights to sum to the sample size before fitting.
    pub normalize_weights: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            draws_per_chain: 2000,
            warmup: 1000,
            seed: 0,
            adapt_target_accept: 0.35,
            normalize_weights: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.chains < 2 {
            return bad(format!("chains must be at least 2, got {}", self.chains));
        }
        if self.draws_per_chain < 100 {
            return bad(format!(
                "draws_per_chain must be at least 100, got {}",
                self.draws_per_chain
            ));
        }
        if self.warmup < 100 {
            return bad(format!("warmup must be at least 100, got {}", self.warmup));
        }
        if !(self.adapt_target_accept > 0.0 && self.adapt_target_accept < 1.0) {
            return bad(format!(
                "adapt_target_accept must lie in (0, 1), got {}",
                self.adapt_target_accept
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r_hat: Vec<f64>,
    pub ess: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub accept_rate: f64,
}

/// Which data a fit was computed from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataRef {
    pub metric: String,
    pub dataset: String,
    pub n_obs: usize,
    /// Weights as used in the likelihood (after any normalization). Not
    /// persisted in fit bundles.
    #[serde(skip)]
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    pub spec: ModelSpec,
    /// Row-major `[total_draws x dim]`, chains concatenated in order.
    pub draws: Vec<f64>,
    pub chains: usize,
    pub diagnostics: Diagnostics,
    pub waic: Waic,
    pub data_ref: DataRef,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl PosteriorFit {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len() / self.dim()
    }

    pub fn draw(&self, s: usize) -> &[f64] {
        let d = self.dim();
        &self.draws[s * d..(s + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().skip(j).step_by(self.dim()).copied().collect()
    }

    pub fn posterior_mean(&self, j: usize) -> f64 {
        let c = self.column(j);
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// Model instantiated at draw `s`.
    pub fn instance(&self, s: usize) -> Result<ModelInstance> {
        self.spec.instance(self.draw(s))
    }

    pub fn converged(&self) -> bool {
        self.diagnostics
            .r_hat
            .iter()
            .zip(&self.diagnostics.degenerate)
            .all(|(r, deg)| *deg || *r <= R_HAT_LIMIT)
    }

    /// A "posterior" that repeats one parameter vector `n_draws` times.
    /// Useful for comparing fixed models through the statistic machinery.
    pub fn point_mass(spec: ModelSpec, params: &[f64], n_draws: usize) -> Result<Self> {
        spec.instance(params)?;
        let dim = spec.dim();
        Ok(PosteriorFit {
            spec,
            draws: params.iter().copied().cycle().take(dim * n_draws).collect(),
            chains: 1,
            diagnostics: Diagnostics {
                r_hat: vec![1.0; dim],
                ess: vec![n_draws as f64; dim],
                degenerate: vec![true; dim],
                accept_rate: 0.0,
            },
            waic: Waic::default(),
            data_ref: DataRef::default(),
            seed: 0,
            warnings: Vec::new(),
        })
    }
}

/// Weighted sums of the likelihood features.
fn sufficient_stats(ys: &[f64], ws: &[f64]) -> [f64; 5] {
    let mut s = [0.0; 5];
    for (&y, &w) in ys.iter().zip(ws) {
        if w == 0.0 {
            continue;
        }
        let f = features(y);
        for k in 0..5 {
            s[k] += w * f[k];
        }
    }
    s
}

fn weighted_moments(ys: &[f64], ws: &[f64]) -> Option<(f64, f64)> {
    let tw: f64 = ws.iter().sum();
    if !(tw > 0.0) {
        return None;
    }
    let m = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / tw;
    let v = ys.iter().zip(ws).map(|(y, w)| w * (y - m).powi(2)).sum::<f64>() / tw;
    Some((m, v))
}

/// Moment-matching starting point for the continuous parameters.
fn moment_start(family: Family, ys: &[f64], ws: &[f64]) -> Option<Vec<f64>> {
    let (m, v) = match family.id {
        FamilyId::LogNormal => {
            let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
            weighted_moments(&ly, ws)?
        }
        _ => weighted_moments(ys, ws)?,
    };
    let sd = v.sqrt().max(1e-6 * (1.0 + m.abs()));
    let v = sd * sd;
    Some(match family.id {
        FamilyId::Exponential => vec![1.0 / m.max(1e-12)],
        FamilyId::Normal | FamilyId::LogNormal | FamilyId::TruncatedNormal => vec![m, sd],
        FamilyId::Gamma => vec![m * m / v, m.max(1e-12) / v],
    })
}

struct Target {
    family: Family,
    roles: Vec<(ParamRole, Prior)>,
    free: Vec<usize>,
    stats: [f64; 5],
}

impl Target {
    fn theta(&self, u_free: &[f64]) -> [f64; MAX_DIM] {
        let mut theta = [0.0; MAX_DIM];
        let mut k = 0;
        for (j, (role, prior)) in self.roles.iter().enumerate() {
            theta[j] = match prior {
                Prior::Fixed { value } => *value,
                _ => {
                    let v = role.to_constrained(u_free[k]);
                    k += 1;
                    v
                }
            };
        }
        theta
    }

    fn log_post(&self, u_free: &[f64]) -> f64 {
        let theta = self.theta(u_free);
        let Ok(c) = Continuous::new(self.family, &theta[..self.roles.len()]) else {
            return f64::NEG_INFINITY;
        };
        let mut lp = c.linear_loglik().eval(&self.stats);
        for (k, &j) in self.free.iter().enumerate() {
            lp += self.roles[j].1.ln_density_unconstrained(u_free[k]);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// Sample the posterior of `spec` given metric-axis data.
pub fn fit(
    data: &WeightedSample,
    spec: &ModelSpec,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorFit> {
    cfg.validate()?;
    let roles = prior.resolve(spec.family.id)?;
    let pi_prior = if spec.is_mixture() {
        Some(prior.resolve_pi()?)
    } else {
        None
    };
    if spec.family.id == FamilyId::TruncatedNormal {
        Continuous::new(spec.family, &[0.0, 1.0]).map(|_| ())?;
    }

    let n = data.len();
    let weights: Vec<f64> = if n == 0 {
        Vec::new()
    } else if !(data.total_weight() > 0.0) {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    } else if cfg.normalize_weights {
        data.normalized_weights()
    } else {
        data.weights().to_vec()
    };
    let ys: Vec<f64> = data
        .values()
        .iter()
        .map(|&x| spec.transform.to_model(x))
        .collect();

    // Split off the point mass; the continuous part sees only the rest.
    let at_atom = |y: f64| spec.mixture_loc == Some(y);
    let (mut atom_w, mut rest_w) = (0.0, 0.0);
    let mut cont_y = Vec::with_capacity(n);
    let mut cont_w = Vec::with_capacity(n);
    for (&y, &w) in ys.iter().zip(&weights) {
        if at_atom(y) {
            atom_w += w;
        } else {
            if !spec.family.admits(y) {
                return Err(Error::Support(format!(
                    "value {} is outside the support of {}",
                    spec.transform.to_metric(y),
                    spec.label()
                )));
            }
            rest_w += w;
            cont_y.push(y);
            cont_w.push(w);
        }
    }

    let free: Vec<usize> = roles
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| !matches!(p, Prior::Fixed { .. }))
        .map(|(j, _)| j)
        .collect();
    let target = Target {
        family: spec.family,
        roles: roles.clone(),
        free: free.clone(),
        stats: sufficient_stats(&cont_y, &cont_w),
    };
    let logp = |u: &[f64]| target.log_post(u);

    // Starting point: moments of the data, else the prior centers.
    let prior_center = |j: usize| match roles[j].1 {
        Prior::LogNormal { mu, .. } | Prior::Normal { mu, .. } => mu,
        _ => 0.0,
    };
    let start = moment_start(spec.family, &cont_y, &cont_w);
    let mut u0: Vec<f64> = free
        .iter()
        .map(|&j| match &start {
            Some(s) if s[j].is_finite() && (roles[j].0 != ParamRole::Positive || s[j] > 0.0) => {
                roles[j].0.to_unconstrained(s[j])
            }
            _ => prior_center(j),
        })
        .collect();
    if !logp(&u0).is_finite() {
        u0 = free.iter().map(|&j| prior_center(j)).collect();
    }
    let mode = sampler::maximize(&logp, &u0);
    let cov = sampler::laplace_covariance(&logp, &mode);
    let chol0 = cov.cholesky().unwrap_or_else(|| Mat::identity(free.len(), 0.1));

    let settings = ChainSettings {
        warmup: cfg.warmup,
        draws: cfg.draws_per_chain,
        target_accept: cfg.adapt_target_accept,
    };
    let pi_seed = seed::derive(cfg.seed, &["pi"]);
    let chains = par::map_range(cfg.chains, |c| {
        let mut rng = seed::rng(seed::derive_index(cfg.seed, c as u64));
        let mut z = [0.0; MAX_DIM];
        for zi in z.iter_mut().take(free.len()) {
            *zi = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        }
        let jitter = chol0.mul_vec(&z);
        let mut init: Vec<f64> = mode.iter().zip(&jitter).map(|(m, j)| m + j).collect();
        if !logp(&init).is_finite() {
            init = mode.clone();
        }
        let out = sampler::run_chain(&logp, &init, cov, settings, &mut rng);
        let pis: Vec<f64> = match pi_prior {
            Some((a, b)) => {
                let mut prng = seed::rng(seed::derive_index(pi_seed, c as u64));
                (0..cfg.draws_per_chain)
                    .map(|_| sample_beta(&mut prng, a + atom_w, b + rest_w))
                    .collect()
            }
            None => Vec::new(),
        };
        (out, pis)
    });

    let dim = spec.dim();
    let offset = usize::from(spec.is_mixture());
    let total = cfg.chains * cfg.draws_per_chain;
    let mut draws = Vec::with_capacity(total * dim);
    let mut accepted = 0usize;
    for (out, pis) in &chains {
        accepted += out.accepted;
        for (s, u) in out.draws.iter().enumerate() {
            if offset == 1 {
                draws.push(pis[s]);
            }
            draws.extend_from_slice(&target.theta(&u[..free.len()])[..roles.len()]);
        }
    }

    let mut r_hat = Vec::with_capacity(dim);
    let mut ess = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);
    for j in 0..dim {
        let cols: Vec<Vec<f64>> = (0..cfg.chains)
            .map(|c| {
                (0..cfg.draws_per_chain)
                    .map(|s| draws[(c * cfg.draws_per_chain + s) * dim + j])
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let d = diagnose(&refs)?;
        r_hat.push(d.r_hat);
        ess.push(d.ess);
        degenerate.push(d.degenerate);
    }
    let accept_rate = if free.is_empty() {
        0.0
    } else {
        accepted as f64 / total as f64
    };

    let mut fit = PosteriorFit {
        spec: *spec,
        draws,
        chains: cfg.chains,
        diagnostics: Diagnostics {
            r_hat,
            ess,
            degenerate,
            accept_rate,
        },
        waic: Waic::default(),
        data_ref: DataRef {
            metric: String::new(),
            dataset: String::new(),
            n_obs: n,
            weights: weights.clone(),
        },
        seed: cfg.seed,
        warnings: Vec::new(),
    };
    fit.waic = streaming_waic(&fit, &ys, &weights)?;
    let names = spec.param_names();
    for j in 0..dim {
        let r = fit.diagnostics.r_hat[j];
        if !fit.diagnostics.degenerate[j] && !(r <= R_HAT_LIMIT) {
            fit.warnings.push(format!(
                "non-convergence: r_hat for {} is {r:.3} (> {R_HAT_LIMIT})",
                names[j]
            ));
        }
    }
    Ok(fit)
}

/// Per-draw pieces of the pointwise log-likelihood.
struct DrawTerms {
    coef: LinearLogLik,
    ln_pi: f64,
    ln_1m_pi: f64,
}

fn streaming_waic(fit: &PosteriorFit, ys: &[f64], weights: &[f64]) -> Result<Waic> {
    let n_draws = fit.n_draws();
    let offset = usize::from(fit.spec.is_mixture());
    let terms: Vec<DrawTerms> = (0..n_draws)
        .map(|s| {
            let d = fit.draw(s);
            let cont = Continuous::new(fit.spec.family, &d[offset..])?;
            let (ln_pi, ln_1m_pi) = if offset == 1 {
                (d[0].ln(), (-d[0]).ln_1p())
            } else {
                (0.0, 0.0)
            };
            Ok(DrawTerms {
                coef: cont.linear_loglik(),
                ln_pi,
                ln_1m_pi,
            })
        })
        .collect::<Result<_>>()?;

    let loc = fit.spec.mixture_loc;
    let pointwise = par::map_range(ys.len(), |i| -> Result<(f64, f64)> {
        let y = ys[i];
        let ll: Vec<f64> = if loc == Some(y) {
            terms.iter().map(|t| t.ln_pi).collect()
        } else {
            let f = features(y);
            terms.iter().map(|t| t.ln_1m_pi + t.coef.eval(&f)).collect()
        };
        waic::check_finite(&ll, i)?;
        Ok(waic::pointwise(&ll))
    });
    let mut acc = waic::WaicAccumulator::default();
    for (r, &w) in pointwise.into_iter().zip(weights) {
        let (lme, var) = r?;
        acc.push(w, lme, var);
    }
    Ok(acc.finish())
}
