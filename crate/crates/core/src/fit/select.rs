use crate::error::{Error, Result};

use super::PosteriorFit;

/// Outcome of model selection over a set of candidate fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the input slice.
    pub index: usize,
    /// Set when every candidate failed the convergence check.
    pub warning: Option<String>,
}

/// Pick the fit with the lowest WAIC. Ties go to the model with fewer
/// parameters, then to the earlier family. Non-converged fits are only
/// considered when nothing converged.
pub fn select_model(fits: &[PosteriorFit]) -> Result<Selection> {
    if fits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let converged: Vec<usize> = (0..fits.len()).filter(|&i| fits[i].converged()).collect();
    let (pool, warning) = if converged.is_empty() {
        (
            (0..fits.len()).collect::<Vec<_>>(),
            Some("no candidate fit converged; selecting among all fits".to_string()),
        )
    } else {
        (converged, None)
    };
    let key = |i: usize| (fits[i].waic.waic, fits[i].dim(), fits[i].spec.family.id);
    let index = pool
        .into_iter()
        .min_by(|&a, &b| {
            let (wa, da, fa) = key(a);
            let (wb, db, fb) = key(b);
            wa.total_cmp(&wb)
                .then(da.cmp(&db))
                .then(fa.cmp(&fb))
        })
        .expect("pool is nonempty");
    Ok(Selection { index, warning })
}
