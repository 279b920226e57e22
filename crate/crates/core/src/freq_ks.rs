//! Weighted empirical CDFs and the two-sample Kolmogorov-Smirnov test.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::weighted::WeightedSample;

/// Right-continuous step function with jumps proportional to weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEcdf {
    /// Distinct support points, ascending.
    pub x: Vec<f64>,
    /// Cumulative probability at each support point; ends at 1.
    pub f: Vec<f64>,
}

impl WeightedEcdf {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.x.partition_point(|&v| v <= t);
        if k == 0 {
            0.0
        } else {
            self.f[k - 1]
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.x.len() * 24);
        out.push_str("x,F\n");
        for (x, f) in self.x.iter().zip(&self.f) {
            out.push_str(&format!("{x},{f}\n"));
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn sorted_pairs(data: &WeightedSample) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = data
        .values()
        .iter()
        .copied()
        .zip(data.weights().iter().copied())
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

pub fn weighted_ecdf(data: &WeightedSample) -> Result<WeightedEcdf> {
    let total = data.total_weight();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights("ECDF needs a positive weight".into()));
    }
    let mut x = Vec::new();
    let mut cum = Vec::new();
    let mut acc = 0.0;
    for (v, w) in sorted_pairs(data) {
        acc += w;
        if x.last() == Some(&v) {
            *cum.last_mut().expect("nonempty") = acc;
        } else {
            x.push(v);
            cum.push(acc);
        }
    }
    let mut f: Vec<f64> = cum.iter().map(|c| c / total).collect();
    if let Some(last) = f.last_mut() {
        *last = 1.0;
    }
    Ok(WeightedEcdf { x, f })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KsMethod {
    /// Kolmogorov limit distribution at the Kish effective sizes.
    Asymptotic,
    /// Label permutation with the given number of replicates.
    Permutation { replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTestResult {
    pub d: f64,
    pub p_value: f64,
    pub n_eff_a: f64,
    pub n_eff_b: f64,
    pub method: KsMethod,
    /// Both samples hold the same single value.
    pub degenerate: bool,
}

/// Kolmogorov survival function Q(lambda) = P(K > lambda).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            let t = (c * k * k).exp();
            s += t;
            if t < 1e-17 * s {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let t = (-2.0 * jf * jf * lambda * lambda).exp();
            s += sign * t;
            sign = -sign;
            if t < 1e-17 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value `Q(sqrt(n_e) * d)` for statistic `d` at effective
/// size `n_e`.
///
/// No finite-size correction is applied. The one-sample correction
/// `sqrt(n) + 0.12 + 0.11 / sqrt(n)` overshoots for the two-sample
/// statistic, whose lattice of attainable values already pulls the exact
/// distribution toward the plain limit.
pub fn ks_asymptotic_p(d: f64, n_e: f64) -> f64 {
    kolmogorov_sf(n_e.sqrt() * d)
}

/// Sup distance between two weighted ECDFs, given the value-sorted pooled
/// (value, weight) sequence and each entry's group membership.
fn sup_distance(pooled: &[(f64, f64)], in_a: &[bool], total_a: f64, total_b: f64) -> f64 {
    let (mut ca, mut cb) = (0.0, 0.0);
    let mut d = 0.0f64;
    let n = pooled.len();
    for i in 0..n {
        let (v, w) = pooled[i];
        if in_a[i] {
            ca += w;
        } else {
            cb += w;
        }
        // Evaluate only after the last copy of a tied value.
        if i + 1 == n || pooled[i + 1].0 != v {
            d = d.max((ca / total_a - cb / total_b).abs());
        }
    }
    d.min(1.0)
}

pub fn two_sample_ks(
    a: &WeightedSample,
    b: &WeightedSample,
    method: KsMethod,
) -> Result<KsTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (ta, tb) = (a.total_weight(), b.total_weight());
    if !(ta > 0.0 && tb > 0.0) {
        return Err(Error::DegenerateWeights("a sample has zero total weight".into()));
    }
    // Pooled observations sorted by value; index < n_a means sample a.
    let n_a = a.len();
    let all_w: Vec<f64> = a.weights().iter().chain(b.weights()).copied().collect();
    let all_v: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    let mut owner: Vec<usize> = (0..all_v.len()).collect();
    owner.sort_by(|&i, &j| all_v[i].total_cmp(&all_v[j]));
    let vw: Vec<(f64, f64)> = owner.iter().map(|&o| (all_v[o], all_w[o])).collect();
    let labels: Vec<bool> = owner.iter().map(|&o| o < n_a).collect();
    let d = sup_distance(&vw, &labels, ta, tb);

    let (n_eff_a, n_eff_b) = (a.kish_size(), b.kish_size());
    let first = vw[0].0;
    let degenerate = vw.iter().all(|p| p.0 == first);
    if degenerate || d == 0.0 {
        return Ok(KsTestResult {
            d: 0.0,
            p_value: 1.0,
            n_eff_a,
            n_eff_b,
            method,
            degenerate,
        });
    }

    let p_value = match method {
        KsMethod::Asymptotic => ks_asymptotic_p(d, n_eff_a * n_eff_b / (n_eff_a + n_eff_b)),
        KsMethod::Permutation { replicates, seed: s } => {
            if replicates < 2000 {
                return Err(Error::Config(format!(
                    "permutation KS needs at least 2000 replicates, got {replicates}"
                )));
            }
            let hits = par::map_range(replicates, |r| {
                let mut perm: Vec<usize> = (0..all_w.len()).collect();
                perm.shuffle(&mut seed::rng(seed::derive_index(s, r as u64)));
                // Observations landing in the first n_a slots form group a.
                let mut in_a = vec![false; all_w.len()];
                for &o in &perm[..n_a] {
                    in_a[o] = true;
                }
                let labels: Vec<bool> = owner.iter().map(|&o| in_a[o]).collect();
                let pa: f64 = owner.iter().filter(|&&o| in_a[o]).map(|&o| all_w[o]).sum();
                let pb: f64 = all_w.iter().sum::<f64>() - pa;
                if !(pa > 0.0 && pb > 0.0) {
                    return true;
                }
                sup_distance(&vw, &labels, pa, pb) >= d - 1e-12
            });
            hits.iter().filter(|&&h| h).count() as f64 / replicates as f64
        }
    };
    Ok(KsTestResult {
        d,
        p_value,
        n_eff_a,
        n_eff_b,
        method,
        degenerate: false,
    })
}
