//! Best-subset selection under the L0 penalty, and the oracle fit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{loglik_beta, BackfitOptions, SemiEstimator, SemiFit};
use crate::family::Family;
use crate::kernel::KernelSpec;

pub const DEFAULT_MAX_D: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Ric,
}

impl Criterion {
    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Ric => "RIC",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "ric" => Ok(Criterion::Ric),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

/// L0 `lambda`: `sqrt(2/n)`, `sqrt(log n / n)` or `sqrt(2 log d / n)`.
pub fn criterion_lambda(criterion: Criterion, n: usize, d: usize) -> f64 {
    let n = n as f64;
    match criterion {
        Criterion::Aic => (2.0 / n).sqrt(),
        Criterion::Bic => (n.ln() / n).sqrt(),
        Criterion::Ric => (2.0 * (d.max(1) as f64).ln() / n).sqrt(),
    }
}

/// Maximized plug-in quasi-likelihood of every subset, indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTrace {
    pub n: usize,
    pub d: usize,
    /// `loglik[mask]`; `None` when the subset fit failed.
    pub loglik: Vec<Option<f64>>,
    pub wall_time_secs: f64,
}

impl SubsetTrace {
    pub fn failures(&self) -> usize {
        self.loglik.iter().filter(|l| l.is_none()).count()
    }

    /// `l_S - n * 0.5 * lambda^2 * |S|`; `-inf` for failed subsets.
    pub fn score(&self, mask: usize, lambda: f64) -> f64 {
        match self.loglik[mask] {
            Some(l) => l - self.n as f64 * 0.5 * lambda * lambda * mask.count_ones() as f64,
            None => f64::NEG_INFINITY,
        }
    }

    /// Best mask under `criterion`; ties go to the lower mask.
    pub fn select(&self, criterion: Criterion) -> Result<(usize, f64)> {
        let lambda = criterion_lambda(criterion, self.n, self.d);
        let mut best = (0usize, f64::NEG_INFINITY);
        for mask in 0..self.loglik.len() {
            let s = self.score(mask, lambda);
            if s > best.1 {
                best = (mask, s);
            }
        }
        if best.1 == f64::NEG_INFINITY {
            return Err(Error::AllFailed("every subset fit failed".into()));
        }
        Ok(best)
    }
}

pub fn mask_to_indices(mask: usize, d: usize) -> Vec<usize> {
    (0..d).filter(|j| mask >> j & 1 == 1).collect()
}

/// Plug-in log-likelihood `l(alpha~_S, beta^_S)` of the model restricted to `cols`.
fn subset_loglik(data: &Dataset, family: Family, kernel: &KernelSpec, cols: &[usize]) -> Result<f64> {
    let sub = data.select_z(cols)?;
    let est = SemiEstimator::new(&sub, family, kernel, BackfitOptions::default())?;
    Ok(loglik_beta(&sub, family, &est.plugin().offset, &est.unpenalized().beta_u))
}

/// Fits every subset of the parametric columns in binary-counting order.
/// `serial` forces a single thread so the wall time is comparable across runs.
pub fn enumerate_subsets(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    max_d: usize,
    serial: bool,
) -> Result<SubsetTrace> {
    let d = data.d();
    if d > max_d || d >= usize::BITS as usize - 1 {
        return Err(Error::InvalidArgument(format!(
            "best-subset enumeration over d = {d} exceeds the guard max_d = {max_d}"
        )));
    }
    let start = Instant::now();
    let eval = |mask: usize| subset_loglik(data, family, kernel, &mask_to_indices(mask, d)).ok();
    let loglik: Vec<Option<f64>> = if serial {
        (0..1usize << d).map(eval).collect()
    } else {
        (0..1usize << d).into_par_iter().map(eval).collect()
    };
    Ok(SubsetTrace {
        n: data.n(),
        d,
        loglik,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub criterion: Criterion,
    pub lambda: f64,
    /// Zero-based indices of the selected columns.
    pub best_subset: Vec<usize>,
    pub criterion_value: f64,
    pub fit: SemiFit,
    pub subsets_evaluated: usize,
    pub failures: usize,
    pub wall_time_secs: f64,
}

/// Unpenalized fit on the columns in `support`, reported over all `d` columns.
pub fn restricted_fit(data: &Dataset, family: Family, kernel: &KernelSpec, support: &[usize]) -> Result<SemiFit> {
    let d = data.d();
    if let Some(&bad) = support.iter().find(|&&j| j >= d) {
        return Err(Error::InvalidArgument(format!("column {bad} out of range (d = {d})")));
    }
    let mut cols = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let sub = data.select_z(&cols)?;
    let fit = SemiEstimator::new(&sub, family, kernel, BackfitOptions::default())?.unpenalized_fit()?;
    let mut beta = vec![0.0; d];
    let mut se = vec![None; d];
    let mut zero = vec![true; d];
    for (k, &j) in cols.iter().enumerate() {
        beta[j] = fit.beta_hat[k];
        se[j] = fit.se[k];
        zero[j] = false;
    }
    Ok(SemiFit {
        beta_hat: beta,
        zero_mask: zero,
        se,
        lambda_used: vec![0.0; d],
        z_names: data.z_names().to_vec(),
        ..fit
    })
}

/// Exhaustive L0 best subset under an information criterion.
pub fn best_subset(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    criterion: Criterion,
    max_d: usize,
) -> Result<SubsetResult> {
    let start = Instant::now();
    let trace = enumerate_subsets(data, family, kernel, max_d, false)?;
    let mut res = result_from_trace(data, family, kernel, &trace, criterion)?;
    res.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(res)
}

/// Builds the result for one criterion from a shared enumeration.
pub fn result_from_trace(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    trace: &SubsetTrace,
    criterion: Criterion,
) -> Result<SubsetResult> {
    let (mask, value) = trace.select(criterion)?;
    let best = mask_to_indices(mask, trace.d);
    let fit = restricted_fit(data, family, kernel, &best)?;
    Ok(SubsetResult {
        criterion,
        lambda: criterion_lambda(criterion, trace.n, trace.d),
        best_subset: best,
        criterion_value: value,
        fit,
        subsets_evaluated: trace.loglik.len(),
        failures: trace.failures(),
        wall_time_secs: trace.wall_time_secs,
    })
}

/// Unpenalized fit using the true support only.
pub fn oracle_fit(data: &Dataset, family: Family, kernel: &KernelSpec, true_support: &[usize]) -> Result<SemiFit> {
    restricted_fit(data, family, kernel, true_support)
}
