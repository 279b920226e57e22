use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widely applicable information criterion and its components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

impl Waic {
    fn from_parts(lppd: f64, p_waic: f64) -> Self {
        Waic {
            waic: -2.0 * (lppd - p_waic),
            lppd,
            p_waic,
        }
    }
}

/// Log of the mean of `exp(ll)` and the sample variance of `ll` over draws.
///
/// Both are exact for a constant column: the log-mean-exp reduces to the
/// shared value and the variance, computed on shifted values, to zero.
pub(crate) fn pointwise(ll: &[f64]) -> (f64, f64) {
    let s = ll.len();
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = ll.iter().map(|&v| (v - max).exp()).sum();
    let lme = max + (sum_exp / s as f64).ln();
    if s < 2 {
        return (lme, 0.0);
    }
    let x0 = ll[0];
    let (mut sd, mut sd2) = (0.0, 0.0);
    for &v in ll {
        let d = v - x0;
        sd += d;
        sd2 += d * d;
    }
    let var = ((sd2 - sd * sd / s as f64) / (s as f64 - 1.0)).max(0.0);
    (lme, var)
}

/// Accumulates WAIC one observation at a time, in observation order.
#[derive(Debug, Default)]
pub(crate) struct WaicAccumulator {
    lppd: f64,
    p_waic: f64,
}

impl WaicAccumulator {
    pub fn push(&mut self, weight: f64, lme: f64, var: f64) {
        if weight != 0.0 {
            self.lppd += weight * lme;
            self.p_waic += weight * var;
        }
    }

    pub fn finish(self) -> Waic {
        Waic::from_parts(self.lppd, self.p_waic)
    }
}

pub(crate) fn check_finite(ll: &[f64], obs: usize) -> Result<()> {
    match ll.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(draw) => Err(Error::Numerical(format!(
            "log-likelihood is {} at draw {draw}, observation {obs}",
            ll[draw]
        ))),
    }
}

/// WAIC from an explicit `[draws x observations]` log-likelihood matrix and
/// per-observation weights (already normalized if desired).
pub fn waic_from_matrix(log_lik: &[Vec<f64>], weights: &[f64]) -> Result<Waic> {
    let n_obs = weights.len();
    if log_lik.is_empty() {
        return Err(Error::InsufficientData("log-likelihood matrix has no draws".into()));
    }
    if let Some(row) = log_lik.iter().position(|r| r.len() != n_obs) {
        return Err(Error::Precondition(format!(
            "draw {row} has {} log-likelihood entries, expected {n_obs}",
            log_lik[row].len()
        )));
    }
    let mut acc = WaicAccumulator::default();
    let mut col = vec![0.0; log_lik.len()];
    for (i, &w) in weights.iter().enumerate() {
        for (c, row) in col.iter_mut().zip(log_lik) {
            *c = row[i];
        }
        check_finite(&col, i)?;
        let (lme, var) = pointwise(&col);
        acc.push(w, lme, var);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_matrix() {
        let ll = vec![vec![-1.0, -2.0, -0.5], vec![-1.5, -1.0, -0.7]];
        let w = [1.0, 2.0, 0.5];
        let got = waic_from_matrix(&ll, &w).unwrap();
        // Direct evaluation, column by column.
        let lme = |a: f64, b: f64| ((a.exp() + b.exp()) / 2.0).ln();
        let var = |a: f64, b: f64| {
            let m = (a + b) / 2.0;
            (a - m).powi(2) + (b - m).powi(2)
        };
        let lppd = lme(-1.0, -1.5) + 2.0 * lme(-2.0, -1.0) + 0.5 * lme(-0.5, -0.7);
        let p = var(-1.0, -1.5) + 2.0 * var(-2.0, -1.0) + 0.5 * var(-0.5, -0.7);
        assert!((got.lppd - lppd).abs() < 1e-12);
        assert!((got.p_waic - p).abs() < 1e-12);
        assert!((got.waic + 2.0 * (lppd - p)).abs() < 1e-12);
    }

    #[test]
    fn collapsed_posterior_has_zero_penalty() {
        let row = vec![-0.1, -2.3, -0.77];
        let ll = vec![row.clone(); 7];
        let got = waic_from_matrix(&ll, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(got.p_waic, 0.0);
        assert_eq!(got.waic, -2.0 * row.iter().sum::<f64>());
    }

    #[test]
    fn non_finite_entry_named() {
        let ll = vec![vec![-1.0, -1.0], vec![-1.0, f64::NEG_INFINITY]];
        let err = waic_from_matrix(&ll, &[1.0, 1.0]).unwrap_err().to_string();
        assert!(err.contains("draw 1") && err.contains("observation 1"), "{err}");
    }
}
