//! Adaptive random-walk Metropolis on an unconstrained parameter vector.
//!
//! The proposal is `u' = u + s * L z` with `L` a Cholesky factor of the
//! proposal covariance. During warmup the global scale `s` follows a
//! Robbins-Monro recursion toward the target acceptance rate and `L` is
//! re-estimated from the warmup history; both are frozen afterwards.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const MAX_DIM: usize = 3;

/// Small dense symmetric matrix helpers (dim <= MAX_DIM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Mat {
    pub d: usize,
    pub a: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn identity(d: usize, scale: f64) -> Self {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in a.iter_mut().enumerate().take(d) {
            row[i] = scale;
        }
        Mat { d, a }
    }

    /// Lower Cholesky factor, or None if not positive definite.
    pub fn cholesky(&self) -> Option<Mat> {
        let d = self.d;
        let mut l = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(Mat { d, a: l })
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn spd_inverse(&self) -> Option<Mat> {
        let l = self.cholesky()?;
        let d = self.d;
        // invert L
        let mut li = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            li[i][i] = 1.0 / l.a[i][i];
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s -= l.a[i][k] * li[k][j];
                }
                li[i][j] = s / l.a[i][i];
            }
        }
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in i.max(j)..d {
                    s += li[k][i] * li[k][j];
                }
                out[i][j] = s;
            }
        }
        Some(Mat { d, a: out })
    }

    pub fn mul_vec(&self, z: &[f64]) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.d {
            for j in 0..self.d {
                out[i] += self.a[i][j] * z[j];
            }
        }
        out
    }
}

fn fd_step(u: f64) -> f64 {
    1e-4 * (1.0 + u.abs())
}

/// Finite-difference gradient and Hessian of `f` at `u`.
pub(crate) fn derivatives(f: &dyn Fn(&[f64]) -> f64, u: &[f64]) -> ([f64; MAX_DIM], Mat) {
    let d = u.len();
    let f0 = f(u);
    let mut grad = [0.0; MAX_DIM];
    let mut hess = Mat::identity(d, 0.0);
    let mut x = [0.0; MAX_DIM];
    x[..d].copy_from_slice(u);
    for i in 0..d {
        let hi = fd_step(u[i]);
        x[i] = u[i] + hi;
        let fp = f(&x[..d]);
        x[i] = u[i] - hi;
        let fm = f(&x[..d]);
        x[i] = u[i];
        grad[i] = (fp - fm) / (2.0 * hi);
        hess.a[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = fd_step(u[j]);
            let mut eval = |si: f64, sj: f64| {
                x[i] = u[i] + si * hi;
                x[j] = u[j] + sj * hj;
                let v = f(&x[..d]);
                x[i] = u[i];
                x[j] = u[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess.a[i][j] = v;
            hess.a[j][i] = v;
        }
    }
    (grad, hess)
}

/// Damped Newton ascent on `f` from `u0`. Returns the best point found.
pub(crate) fn maximize(f: &dyn Fn(&[f64]) -> f64, u0: &[f64]) -> Vec<f64> {
    let d = u0.len();
    let mut u = u0.to_vec();
    let mut fu = f(&u);
    if d == 0 || !fu.is_finite() {
        return u;
    }
    for _ in 0..100 {
        let (g, h) = derivatives(f, &u);
        let neg = {
            let mut m = h;
            for row in m.a.iter_mut().take(d) {
                for v in row.iter_mut().take(d) {
                    *v = -*v;
                }
            }
            m
        };
        // Newton direction when the Hessian is negative definite, gradient
        // ascent otherwise.
        let dir: Vec<f64> = match neg.spd_inverse() {
            Some(inv) => inv.mul_vec(&g)[..d].to_vec(),
            None => g[..d].to_vec(),
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc > fu {
                let gain = fc - fu;
                u = cand;
                fu = fc;
                improved = gain > 1e-12 * (1.0 + fu.abs());
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    u
}

/// Proposal covariance from the curvature at the mode, with a fallback.
pub(crate) fn laplace_covariance(f: &dyn Fn(&[f64]) -> f64, mode: &[f64]) -> Mat {
    let d = mode.len();
    let (_, h) = derivatives(f, mode);
    let mut neg = h;
    for row in neg.a.iter_mut().take(d) {
        for v in row.iter_mut().take(d) {
            *v = -*v;
        }
    }
    neg.spd_inverse()
        .filter(|c| c.cholesky().is_some())
        .unwrap_or_else(|| Mat::identity(d, 0.01))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ChainSettings {
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
}

pub(crate) struct ChainOutput {
    /// Post-warmup draws on the unconstrained scale.
    pub draws: Vec<[f64; MAX_DIM]>,
    pub accepted: usize,
}

pub(crate) fn run_chain<R: Rng>(
    logp: &dyn Fn(&[f64]) -> f64,
    init: &[f64],
    cov0: Mat,
    settings: ChainSettings,
    rng: &mut R,
) -> ChainOutput {
    let d = init.len();
    let mut u = [0.0; MAX_DIM];
    u[..d].copy_from_slice(init);
    let mut lp = logp(&u[..d]);
    let mut chol = cov0.cholesky().unwrap_or_else(|| Mat::identity(d, 0.1));
    let mut log_scale = (2.38 / (d.max(1) as f64).sqrt()).ln();

    // Running moments of the warmup history for covariance adaptation.
    let mut n_hist = 0usize;
    let mut mean = [0.0; MAX_DIM];
    let mut m2 = Mat::identity(d, 0.0);
    let adapt_start = settings.warmup / 4;

    let mut draws = Vec::with_capacity(settings.draws);
    let mut accepted = 0usize;
    let total = settings.warmup + settings.draws;
    for it in 0..total {
        let warm = it < settings.warmup;
        let mut z = [0.0; MAX_DIM];
        for zi in z.iter_mut().take(d) {
            *zi = StandardNormal.sample(rng);
        }
        let step = chol.mul_vec(&z);
        let s = log_scale.exp();
        let mut cand = u;
        for i in 0..d {
            cand[i] += s * step[i];
        }
        let lc = logp(&cand[..d]);
        let log_alpha = lc - lp;
        let accept = lc.is_finite() && (log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha);
        if accept {
            u = cand;
            lp = lc;
        }
        if warm {
            let alpha = if lc.is_finite() { log_alpha.min(0.0).exp() } else { 0.0 };
            let gain = 1.0 / ((it + 1) as f64).powf(0.6);
            log_scale += gain * (alpha - settings.target_accept);
            if it >= adapt_start {
                n_hist += 1;
                let nf = n_hist as f64;
                let mut delta = [0.0; MAX_DIM];
                for i in 0..d {
                    delta[i] = u[i] - mean[i];
                    mean[i] += delta[i] / nf;
                }
                for i in 0..d {
                    for j in 0..d {
                        m2.a[i][j] += delta[i] * (u[j] - mean[j]);
                    }
                }
                if n_hist >= 100 && n_hist % 50 == 0 {
                    let mut cov = m2;
                    for i in 0..d {
                        for j in 0..d {
                            cov.a[i][j] /= nf - 1.0;
                        }
                        cov.a[i][i] += 1e-10 + 1e-6 * cov.a[i][i];
                    }
                    if let Some(l) = cov.cholesky() {
                        chol = l;
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(u);
        }
    }
    ChainOutput { draws, accepted }
}
