//! Generalized likelihood ratio tests of `alpha_j(.) = 0` for a set of
//! varying-coefficient components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{BackfitOptions, LambdaPolicy, SemiEstimator};
use crate::family::Family;
use crate::kernel::{kernel_constants, KernelSpec};
use crate::newton::{NewtonOptions, Problem};
use crate::penalty::PenaltyKind;
use crate::sim::rng::stream;

/// Bootstrap replicates allowed to fail before the test is abandoned, in percent.
pub const BOOTSTRAP_FAILURE_LIMIT: u32 = 10;

/// How `beta` is estimated under each hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyPolicy {
    Unpenalized,
    Penalized { kind: PenaltyKind, lambda: LambdaPolicy },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrtResult {
    pub t_glr: f64,
    pub r_h1: f64,
    pub r_h0: f64,
    pub r_k: f64,
    pub df_n: f64,
    pub p_asymptotic: f64,
    pub p_bootstrap: Option<f64>,
    pub bootstrap_stats: Option<Vec<f64>>,
    /// Mean of the bootstrap statistics.
    pub df_fitted: Option<f64>,
    pub bootstrap_failures: usize,
    /// The null removes only some of the components; `df_n` then extrapolates
    /// the all-components formula.
    pub partial_null: bool,
    pub warnings: Vec<String>,
}

impl GlrtResult {
    /// The bootstrap p-value when available, the asymptotic one otherwise.
    pub fn p_value(&self) -> f64 {
        self.p_bootstrap.unwrap_or(self.p_asymptotic)
    }
}

/// `df_n = r_K p |Omega| (K(0) - 0.5 int K^2) / h`.
pub fn glrt_df(kernel: &KernelSpec, p_tested: usize, omega_length: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !(omega_length > 0.0) {
        return Err(Error::InvalidArgument("h and |Omega| must be positive".into()));
    }
    let c = kernel_constants(kernel)?;
    Ok(c.r_k * p_tested as f64 * omega_length * (c.k0 - 0.5 * c.nu0) / h)
}

/// Upper chi-square tail; `1` for nonpositive statistics.
pub fn chi_square_upper(t: f64, df: f64) -> f64 {
    if !(t > 0.0) {
        return 1.0;
    }
    match ChiSquared::new(df) {
        Ok(dist) => (1.0 - dist.cdf(t)).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Add-one bootstrap p-value `(1 + #{t* >= t}) / (B + 1)`.
pub fn bootstrap_p_value(t_obs: f64, stats: &[f64]) -> f64 {
    let exceed = stats.iter().filter(|&&t| t >= t_obs).count();
    (1 + exceed) as f64 / (stats.len() + 1) as f64
}

/// Fitted means and quasi-likelihood sum of one hypothesis.
struct HypothesisFit {
    loglik: f64,
    eta: Vec<f64>,
    /// effective parameters, for the Gaussian scale estimate
    effective: f64,
}

fn fit_alternative(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    policy: &PenaltyPolicy,
    opts: &BackfitOptions,
) -> Result<HypothesisFit> {
    let est = SemiEstimator::new(data, family, kernel, opts.clone())?;
    let fit = match policy {
        PenaltyPolicy::Unpenalized => est.unpenalized_fit()?,
        PenaltyPolicy::Penalized { kind, lambda } => est.fit(*kind, lambda)?.0,
    };
    let p = data.p();
    let zb = data.z_times(&fit.beta_hat);
    let eta: Vec<f64> = (0..data.n())
        .map(|i| {
            let a = fit.alpha_curves.interpolate(data.u()[i]);
            data.x_row(i).iter().zip(&a).map(|(x, a)| x * a).sum::<f64>() + zb[i]
        })
        .collect();
    let smoother_df = p as f64 * data.omega_len() * kernel_constants(kernel)?.k0 / kernel.bandwidth();
    Ok(HypothesisFit {
        loglik: fit.quasi_loglik,
        eta,
        effective: fit.effective_df + smoother_df,
    })
}

/// Parametric GLM in `Z` alone, used when every component is removed.
fn fit_parametric(data: &Dataset, family: Family) -> Result<HypothesisFit> {
    let (n, d) = (data.n(), data.d());
    let prob = Problem {
        k: d,
        design: data.z().to_vec(),
        weight: vec![1.0; n],
        offset: vec![0.0; n],
        y: data.y().to_vec(),
    };
    let beta = if d == 0 {
        Vec::new()
    } else {
        prob.maximize(family, &vec![0.0; d], NewtonOptions::default())?.theta
    };
    let eta = data.z_times(&beta);
    let loglik = crate::family::quasi_loglik(family, &eta, data.y())?;
    Ok(HypothesisFit {
        loglik,
        eta,
        effective: d as f64,
    })
}

fn fit_null(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    keep: &[usize],
    policy: &PenaltyPolicy,
    opts: &BackfitOptions,
) -> Result<HypothesisFit> {
    if keep.is_empty() {
        fit_parametric(data, family)
    } else {
        fit_alternative(&data.select_x(keep)?, family, kernel, policy, opts)
    }
}

fn kept_columns(p: usize, null_x: &[usize]) -> Result<Vec<usize>> {
    if null_x.is_empty() {
        return Err(Error::InvalidArgument("the null must remove at least one x component".into()));
    }
    if let Some(&bad) = null_x.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!("x component {bad} out of range (p = {p})")));
    }
    Ok((0..p).filter(|j| !null_x.contains(j)).collect())
}

/// Likelihood-ratio statistic pieces `(R(H1), R(H0))` plus the null fit.
fn statistic(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    keep: &[usize],
    policy: &PenaltyPolicy,
    opts: &BackfitOptions,
) -> Result<(f64, HypothesisFit)> {
    let h1 = fit_alternative(data, family, kernel, policy, opts).map_err(|e| Error::stage("alternative fit", e))?;
    let h0 = fit_null(data, family, kernel, keep, policy, opts).map_err(|e| Error::stage("null fit", e))?;
    Ok((h1.loglik, h0))
}

/// Tests `alpha_j(.) = 0` for `j` in `null_x` (zero-based) against the full model.
pub fn glrt(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    null_x: &[usize],
    policy: &PenaltyPolicy,
) -> Result<GlrtResult> {
    let keep = kept_columns(data.p(), null_x)?;
    let opts = BackfitOptions::default();
    let (r_h1, h0) = statistic(data, family, kernel, &keep, policy, &opts)?;
    let c = kernel_constants(kernel)?;
    let t_glr = c.r_k * (r_h1 - h0.loglik);
    let df_n = glrt_df(kernel, null_x.len(), data.omega_len(), kernel.bandwidth())?;
    let mut warnings = Vec::new();
    if r_h1 < h0.loglik - 1e-6 * data.n() as f64 {
        warnings.push(format!(
            "R(H1) = {r_h1} is below R(H0) = {}; the alternative fit may not be at its maximum",
            h0.loglik
        ));
    }
    Ok(GlrtResult {
        t_glr,
        r_h1,
        r_h0: h0.loglik,
        r_k: c.r_k,
        df_n,
        p_asymptotic: chi_square_upper(t_glr, df_n),
        p_bootstrap: None,
        bootstrap_stats: None,
        df_fitted: None,
        bootstrap_failures: 0,
        partial_null: !keep.is_empty(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapNull {
    pub bootstrap_stats: Vec<f64>,
    pub failures: usize,
    pub df_fitted: f64,
}

impl BootstrapNull {
    pub fn p_value(&self, t_obs: f64) -> f64 {
        bootstrap_p_value(t_obs, &self.bootstrap_stats)
    }
}

/// Parametric bootstrap of the statistic under the fitted null. Replicate `b`
/// draws from substream `b` of `seed`.
pub fn bootstrap_null(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    null_x: &[usize],
    policy: &PenaltyPolicy,
    b: usize,
    seed: u64,
) -> Result<BootstrapNull> {
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap size must be at least 1".into()));
    }
    let keep = kept_columns(data.p(), null_x)?;
    let opts = BackfitOptions::default();
    let null = fit_null(data, family, kernel, &keep, policy, &opts).map_err(|e| Error::stage("null fit", e))?;
    let n = data.n() as f64;
    let scale = match family {
        Family::Gaussian => (-2.0 * null.loglik / (n - null.effective).max(1.0)).sqrt(),
        _ => 1.0,
    };
    let mu: Vec<f64> = null.eta.iter().map(|&e| family.inv_link(e)).collect();
    let r_k = kernel_constants(kernel)?.r_k;
    let draws: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep as u64);
            let y: Vec<f64> = mu.iter().map(|&m| family.sample(m, scale, &mut rng)).collect();
            let star = data.with_response(y)?;
            let (r1, h0) = statistic(&star, family, kernel, &keep, policy, &opts)?;
            Ok(r_k * (r1 - h0.loglik))
        })
        .collect();
    let failures = draws.iter().filter(|d| d.is_err()).count();
    if failures * 100 > b * BOOTSTRAP_FAILURE_LIMIT as usize {
        let first = draws.iter().find_map(|d| d.as_ref().err()).map(ToString::to_string).unwrap_or_default();
        return Err(Error::TooManyFailures {
            what: "bootstrap replicates",
            failed: failures,
            total: b,
            limit: BOOTSTRAP_FAILURE_LIMIT,
            first,
        });
    }
    let stats: Vec<f64> = draws.into_iter().flatten().collect();
    let df_fitted = stats.iter().sum::<f64>() / stats.len() as f64;
    Ok(BootstrapNull {
        bootstrap_stats: stats,
        failures,
        df_fitted,
    })
}

/// `glrt` followed by `bootstrap_null`, filling in the bootstrap fields.
pub fn glrt_with_bootstrap(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    null_x: &[usize],
    policy: &PenaltyPolicy,
    b: usize,
    seed: u64,
) -> Result<GlrtResult> {
    let mut res = glrt(data, family, kernel, null_x, policy)?;
    let boot = bootstrap_null(data, family, kernel, null_x, policy, b, seed)?;
    res.p_bootstrap = Some(boot.p_value(res.t_glr));
    res.df_fitted = Some(boot.df_fitted);
    res.bootstrap_failures = boot.failures;
    res.bootstrap_stats = Some(boot.bootstrap_stats);
    Ok(res)
}
