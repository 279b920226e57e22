//! Split-R̂ and multi-chain effective sample size.

use crate::error::{Error, Result};

/// Convergence summary for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDiagnostics {
    pub r_hat: f64,
    pub ess: f64,
    /// All draws identical: R̂ and ESS are reported as 1 and the draw count.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Autocovariance of `x` (about its own mean) at `lag`, biased estimator.
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (x[t] - mean) * (x[t + lag] - mean);
    }
    s / n as f64
}

/// Diagnostics for one parameter given its post-warmup draws per chain.
///
/// Chains are split in half before computing R̂ and ESS. ESS uses Geyer's
/// initial monotone positive sequence over the combined autocorrelation.
pub fn diagnose(chains: &[&[f64]]) -> Result<ParamDiagnostics> {
    if chains.len() < 2 {
        return Err(Error::Precondition(format!(
            "diagnostics need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n_chain = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n_chain < 4 {
        return Err(Error::Precondition(format!(
            "diagnostics need at least 4 draws per chain, got {n_chain}"
        )));
    }
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let first = chains[0][0];
    if chains.iter().all(|c| c.iter().all(|&v| v == first)) {
        return Ok(ParamDiagnostics {
            r_hat: 1.0,
            ess: total as f64,
            degenerate: true,
        });
    }

    let half = n_chain / 2;
    let splits: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let c = &c[..n_chain];
            [&c[..half], &c[n_chain - half..]]
        })
        .collect();
    let m = splits.len() as f64;
    let n = half as f64;
    let stats: Vec<(f64, f64)> = splits.iter().map(|c| mean_var(c)).collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    if w <= 0.0 {
        // Every chain is stuck at its own constant value.
        return Ok(ParamDiagnostics {
            r_hat: f64::INFINITY,
            ess: 1.0,
            degenerate: false,
        });
    }
    let r_hat = (var_plus / w).sqrt();

    let rho = |lag: usize| -> f64 {
        let mean_acov = splits
            .iter()
            .zip(&stats)
            .map(|(c, s)| autocov(c, s.0, lag))
            .sum::<f64>()
            / m;
        1.0 - (w - mean_acov) / var_plus
    };
    // Geyer: sum consecutive pairs while positive, forcing monotone decrease.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < half {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    // Antithetic chains can push tau below 1; cap ESS at mn * log10(mn).
    let tau = tau.max(1.0 / (m * n).log10());
    let ess = m * n / tau;
    Ok(ParamDiagnostics {
        r_hat,
        ess,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn iid_chains(seed_value: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed_value);
        (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_look_converged() {
        for s in 0..5 {
            let chains = iid_chains(s, 4, 1000);
            let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
            let d = diagnose(&refs).unwrap();
            assert!((0.99..=1.02).contains(&d.r_hat), "r_hat {}", d.r_hat);
            assert!(d.ess >= 0.8 * 4000.0, "ess {}", d.ess);
        }
    }

    #[test]
    fn shifted_chain_detected() {
        let mut chains = iid_chains(9, 4, 1000);
        for v in chains[2].iter_mut() {
            *v += 10.0;
        }
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        assert!(diagnose(&refs).unwrap().r_hat > 1.5);
    }

    #[test]
    fn constant_parameter_is_degenerate() {
        let chains = [vec![2.0; 200], vec![2.0; 200]];
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let d = diagnose(&refs).unwrap();
        assert!(d.degenerate && d.r_hat == 1.0 && d.ess == 400.0);
    }

    #[test]
    fn autocorrelated_chain_has_lower_ess() {
        let mut rng = seed::rng(4);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..2000)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x = 0.9 * x + z;
                        x
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let d = diagnose(&refs).unwrap();
        // AR(1) with phi = 0.9: n (1 - phi) / (1 + phi) ~ 421.
        assert!(d.ess > 250.0 && d.ess < 700.0, "ess {}", d.ess);
    }
}
