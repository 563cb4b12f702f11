//! Monte Carlo studies: selection accuracy, computing time, GLRT size and power.
//!
//! Replication `r` always draws its data from substream `r` of the study seed,
//! and results are collected in replication order, so reports do not depend
//! on the number of threads.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{BackfitOptions, SemiEstimator};
use crate::glrt::{bootstrap_null, glrt, PenaltyPolicy};
use crate::kernel::KernelSpec;
use crate::local::alpha_on_grid;
use crate::penalty::PenaltyKind;
use crate::sim::metrics::{gmse, ks_chi_square, mad_scaled, mean, median, rase, sd, spearman, upper_quantile};
use crate::sim::rng::derive_seed;
use crate::sim::scenario::{gen_scenario_rep, ScenarioSpec};
use crate::subset::{enumerate_subsets, oracle_fit, result_from_trace, Criterion, DEFAULT_MAX_D};

/// Share of replications allowed to fail before a study is abandoned, in percent.
pub const REPLICATION_FAILURE_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Scad,
    L1,
    Aic,
    Bic,
    Ric,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Scad, Method::L1, Method::Aic, Method::Bic, Method::Ric, Method::Oracle];

    pub fn label(self) -> &'static str {
        match self {
            Method::Scad => "SCAD",
            Method::L1 => "L1",
            Method::Aic => "AIC",
            Method::Bic => "BIC",
            Method::Ric => "RIC",
            Method::Oracle => "Oracle",
        }
    }

    fn criterion(self) -> Option<Criterion> {
        match self {
            Method::Aic => Some(Criterion::Aic),
            Method::Bic => Some(Criterion::Bic),
            Method::Ric => Some(Criterion::Ric),
            _ => None,
        }
    }

    fn penalty(self) -> Option<PenaltyKind> {
        match self {
            Method::Scad => Some(PenaltyKind::scad()),
            Method::L1 => Some(PenaltyKind::L1),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}` (known: scad, l1, aic, bic, ric, oracle)")))
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub rgmse: f64,
    /// True zeros estimated as zero.
    pub correct_zeros: usize,
    /// True nonzeros estimated as zero.
    pub incorrect_zeros: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub rgmse_median: f64,
    pub rgmse_mad_scaled: f64,
    pub c_avg: f64,
    pub i_avg: f64,
    pub time_mean: f64,
    pub time_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: ScenarioSpec,
    pub replications: usize,
    pub failed_replications: usize,
    pub rows: Vec<MethodRow>,
    /// Per-replication outcomes, in replication order.
    pub outcomes: Vec<Vec<MethodOutcome>>,
}

impl StudyReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Aligned text table: method, RGMSE median (MAD/0.6745), C, I.
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let zeros = s.d() - s.true_support().len();
        let mut out = format!(
            "scenario {} ({}, n = {}, h = {}), {} replications ({} failed)\n",
            s.name,
            s.family,
            s.n,
            s.h,
            self.replications,
            self.failed_replications
        );
        out.push_str(&format!(
            "{:<8} {:>10} {:>12} {:>8} {:>8} {:>10}\n",
            "method", "RGMSE", "(mad_scaled)", "C", "I", "time (s)"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:>10.4} {:>12} {:>8.4} {:>8.4} {:>10.4}\n",
                r.method.label(),
                r.rgmse_median,
                format!("({:.4})", r.rgmse_mad_scaled),
                r.c_avg,
                r.i_avg,
                r.time_mean
            ));
        }
        out.push_str(&format!(
            "C: true zeros (of {zeros}) set to zero; I: true nonzeros (of {}) set to zero\n",
            s.true_support().len()
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rgmse_median,rgmse_mad_scaled,c_avg,i_avg,time_mean,time_sd\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method.label(),
                r.rgmse_median,
                r.rgmse_mad_scaled,
                r.c_avg,
                r.i_avg,
                r.time_mean,
                r.time_sd
            ));
        }
        out
    }
}

/// Number of failed results; an error when they exceed `limit` percent.
fn check_failures<T>(what: &'static str, results: &[Result<T>], limit: u32) -> Result<usize> {
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 100 > results.len() * limit as usize {
        let first = results.iter().find_map(|r| r.as_ref().err()).map(ToString::to_string).unwrap_or_default();
        return Err(Error::TooManyFailures {
            what,
            failed,
            total: results.len(),
            limit,
            first,
        });
    }
    Ok(failed)
}

fn zero_counts(beta: &[f64], truth: &[f64]) -> (usize, usize) {
    let c = beta.iter().zip(truth).filter(|(b, t)| **t == 0.0 && **b == 0.0).count();
    let i = beta.iter().zip(truth).filter(|(b, t)| **t != 0.0 && **b == 0.0).count();
    (c, i)
}

/// All requested methods on replication `rep`.
fn table1_replication(spec: &ScenarioSpec, methods: &[Method], rep: u64) -> Result<Vec<MethodOutcome>> {
    let data = gen_scenario_rep(spec, rep)?;
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let family = spec.family;
    let sigma = spec.sigma_z();
    let truth = &spec.beta_true;

    let start = Instant::now();
    let est = SemiEstimator::new(&data, family, &kernel, BackfitOptions::default())?;
    let shared_secs = start.elapsed().as_secs_f64();
    let full = gmse(&est.unpenalized().beta_u, truth, &sigma)?;

    let needs_subsets = methods.iter().any(|m| m.criterion().is_some());
    let trace = if needs_subsets {
        Some(enumerate_subsets(&data, family, &kernel, DEFAULT_MAX_D, true)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let t0 = Instant::now();
        let (beta, secs) = if let Some(kind) = m.penalty() {
            let sel = est.select_lambda(kind, None)?;
            (sel.fit.beta_hat, shared_secs + t0.elapsed().as_secs_f64())
        } else if let Some(c) = m.criterion() {
            let tr = trace.as_ref().expect("enumerated above");
            let res = result_from_trace(&data, family, &kernel, tr, c)?;
            (res.fit.beta_hat, tr.wall_time_secs + t0.elapsed().as_secs_f64())
        } else {
            let fit = oracle_fit(&data, family, &kernel, &spec.true_support())?;
            (fit.beta_hat, t0.elapsed().as_secs_f64())
        };
        let (c, i) = zero_counts(&beta, truth);
        out.push(MethodOutcome {
            method: m,
            rgmse: gmse(&beta, truth, &sigma)? / full,
            correct_zeros: c,
            incorrect_zeros: i,
            seconds: secs,
        });
    }
    Ok(out)
}

fn summarize(methods: &[Method], outcomes: &[Vec<MethodOutcome>]) -> Vec<MethodRow> {
    methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let col: Vec<&MethodOutcome> = outcomes.iter().map(|o| &o[k]).collect();
            let rg: Vec<f64> = col.iter().map(|o| o.rgmse).collect();
            let secs: Vec<f64> = col.iter().map(|o| o.seconds).collect();
            MethodRow {
                method: m,
                rgmse_median: median(&rg),
                rgmse_mad_scaled: mad_scaled(&rg),
                c_avg: mean(&col.iter().map(|o| o.correct_zeros as f64).collect::<Vec<_>>()),
                i_avg: mean(&col.iter().map(|o| o.incorrect_zeros as f64).collect::<Vec<_>>()),
                time_mean: mean(&secs),
                time_sd: sd(&secs),
            }
        })
        .collect()
}

/// Selection accuracy of each method over `r` replications.
pub fn run_table1_study(spec: &ScenarioSpec, methods: &[Method], r: usize, seed: u64) -> Result<StudyReport> {
    if r == 0 || methods.is_empty() {
        return Err(Error::InvalidArgument("need at least one replication and one method".into()));
    }
    let spec = ScenarioSpec {
        seed,
        ..spec.clone()
    };
    let results: Vec<Result<Vec<MethodOutcome>>> = (0..r as u64)
        .into_par_iter()
        .map(|rep| table1_replication(&spec, methods, rep))
        .collect();
    let failed = check_failures("replications", &results, REPLICATION_FAILURE_LIMIT)?;
    let outcomes: Vec<Vec<MethodOutcome>> = results.into_iter().flatten().collect();
    Ok(StudyReport {
        rows: summarize(methods, &outcomes),
        scenario: spec,
        replications: r,
        failed_replications: failed,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub d: usize,
    pub method: Method,
    pub mean_secs: f64,
    pub sd_secs: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub scenario: ScenarioSpec,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn mean(&self, method: Method, d: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method && r.d == d).map(|r| r.mean_secs)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:>4} {:>12} {:>12}\n", "method", "d", "mean (s)", "sd (s)");
        for r in &self.rows {
            out.push_str(&format!("{:<8} {:>4} {:>12.4} {:>12.4}\n", r.method.label(), r.d, r.mean_secs, r.sd_secs));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,d,mean_secs,sd_secs,replications\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.method.label(), r.d, r.mean_secs, r.sd_secs, r.replications));
        }
        out
    }
}

/// End-to-end time of one method on one dataset, on the calling thread.
fn time_method(spec: &ScenarioSpec, method: Method, rep: u64) -> Result<f64> {
    let data = gen_scenario_rep(spec, rep)?;
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let start = Instant::now();
    if let Some(kind) = method.penalty() {
        let est = SemiEstimator::new(&data, spec.family, &kernel, BackfitOptions::default())?;
        est.select_lambda(kind, None)?;
    } else if let Some(c) = method.criterion() {
        let trace = enumerate_subsets(&data, spec.family, &kernel, DEFAULT_MAX_D, true)?;
        result_from_trace(&data, spec.family, &kernel, &trace, c)?;
    } else {
        oracle_fit(&data, spec.family, &kernel, &spec.true_support())?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Serial wall time of each method as the number of parametric covariates grows.
/// `beta_true` is truncated (or zero-padded) to each `d`.
pub fn run_timing_study(
    spec: &ScenarioSpec,
    d_values: &[usize],
    methods: &[Method],
    r: usize,
    seed: u64,
) -> Result<TimingReport> {
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    if let Some(&d) = d_values.iter().find(|&&d| d > DEFAULT_MAX_D) {
        return Err(Error::InvalidArgument(format!("d = {d} exceeds the enumeration guard")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let base = ScenarioSpec {
        seed,
        ..spec.clone()
    };
    let mut rows = Vec::new();
    for &d in d_values {
        let sd_spec = base.truncate_d(d);
        for &m in methods {
            let times: Vec<f64> = pool.install(|| (0..r as u64).map(|rep| time_method(&sd_spec, m, rep)).collect::<Result<_>>())?;
            rows.push(TimingRow {
                d,
                method: m,
                mean_secs: mean(&times),
                sd_secs: sd(&times),
                replications: r,
            });
        }
    }
    Ok(TimingReport { scenario: base, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub delta: f64,
    pub level: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub scenario: ScenarioSpec,
    /// Index of the tested component (zero-based).
    pub tested: usize,
    pub replications: usize,
    pub bootstrap_b: usize,
    /// Bootstrap null statistics used for the critical values.
    pub null_stats: Vec<f64>,
    pub critical_values: Vec<(f64, f64)>,
    pub rows: Vec<PowerRow>,
    pub failed: usize,
}

impl PowerReport {
    pub fn power(&self, delta: f64, level: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.delta == delta && r.level == level)
            .map(|r| r.power)
    }

    /// Power curve at `level` over the delta grid, in grid order.
    pub fn curve(&self, level: f64) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.level == level).map(|r| (r.delta, r.power)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,level,power\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.delta, r.level, r.power));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let levels: Vec<f64> = self.critical_values.iter().map(|c| c.0).collect();
        let mut out = format!("{:>8}", "delta");
        for l in &levels {
            out.push_str(&format!(" {:>10}", format!("a={l}")));
        }
        out.push('\n');
        let mut deltas: Vec<f64> = self.rows.iter().map(|r| r.delta).collect();
        deltas.dedup();
        for d in deltas {
            out.push_str(&format!("{d:>8.3}"));
            for &l in &levels {
                out.push_str(&format!(" {:>10.4}", self.power(d, l).unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

fn glrt_statistic(spec: &ScenarioSpec, tested: usize, rep: u64) -> Result<f64> {
    let data = gen_scenario_rep(spec, rep)?;
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    Ok(glrt(&data, spec.family, &kernel, &[tested], &PenaltyPolicy::Unpenalized)?.t_glr)
}

/// GLRT power for `alpha_tested` scaled by each `delta`. Critical values come
/// once from a bootstrap of the `delta = 0` null on a reference dataset; each
/// delta reuses the same replication streams.
pub fn run_power_study(
    spec: &ScenarioSpec,
    tested: usize,
    delta_grid: &[f64],
    levels: &[f64],
    r: usize,
    bootstrap_b: usize,
    seed: u64,
) -> Result<PowerReport> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidArgument(format!("levels must lie in (0, 1), got {l}")));
    }
    if let Some(d) = delta_grid.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {d}")));
    }
    if tested >= spec.p() {
        return Err(Error::InvalidArgument(format!("tested component {tested} out of range")));
    }
    let base = ScenarioSpec {
        seed,
        ..spec.clone()
    };
    let null_spec = ScenarioSpec {
        seed: derive_seed(seed, u64::MAX),
        ..base.scale_alpha(tested, 0.0)
    };
    let reference = gen_scenario_rep(&null_spec, 0)?;
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let boot = bootstrap_null(
        &reference,
        spec.family,
        &kernel,
        &[tested],
        &PenaltyPolicy::Unpenalized,
        bootstrap_b,
        derive_seed(seed, u64::MAX - 1),
    )?;
    let critical_values: Vec<(f64, f64)> = levels.iter().map(|&l| (l, upper_quantile(&boot.bootstrap_stats, l))).collect();

    let cells: Vec<(usize, u64)> = (0..delta_grid.len()).flat_map(|k| (0..r as u64).map(move |rep| (k, rep))).collect();
    let stats: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(k, rep)| glrt_statistic(&base.scale_alpha(tested, delta_grid[k]), tested, rep))
        .collect();
    let failed = check_failures("GLRT replications", &stats, REPLICATION_FAILURE_LIMIT)?;
    let mut rows = Vec::new();
    for (k, &delta) in delta_grid.iter().enumerate() {
        let ts: Vec<f64> = stats[k * r..(k + 1) * r].iter().flatten().copied().collect();
        for &(level, crit) in &critical_values {
            let rejections = ts.iter().filter(|&&t| t > crit).count();
            rows.push(PowerRow {
                delta,
                level,
                power: rejections as f64 / ts.len() as f64,
            });
        }
    }
    Ok(PowerReport {
        scenario: base,
        tested,
        replications: r,
        bootstrap_b,
        null_stats: boot.bootstrap_stats,
        critical_values,
        rows,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scenario: ScenarioSpec,
    pub replications: usize,
    pub bootstrap_b: usize,
    pub levels: Vec<f64>,
    /// Empirical rejection rate at each level, bootstrap p-values.
    pub rejection: Vec<f64>,
    pub p_values: Vec<f64>,
    pub failed: usize,
}

/// Size of the bootstrap GLRT: each null replication gets its own bootstrap.
pub fn run_calibration_study(
    spec: &ScenarioSpec,
    tested: usize,
    levels: &[f64],
    r: usize,
    bootstrap_b: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    let null_spec = ScenarioSpec {
        seed,
        ..spec.scale_alpha(tested, 0.0)
    };
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let ps: Vec<Result<f64>> = (0..r as u64)
        .into_par_iter()
        .map(|rep| {
            let data = gen_scenario_rep(&null_spec, rep)?;
            let res = glrt(&data, spec.family, &kernel, &[tested], &PenaltyPolicy::Unpenalized)?;
            let boot = bootstrap_null(
                &data,
                spec.family,
                &kernel,
                &[tested],
                &PenaltyPolicy::Unpenalized,
                bootstrap_b,
                derive_seed(seed, rep),
            )?;
            Ok(boot.p_value(res.t_glr))
        })
        .collect();
    let failed = check_failures("calibration replications", &ps, REPLICATION_FAILURE_LIMIT)?;
    let p_values: Vec<f64> = ps.into_iter().flatten().collect();
    let rejection = levels
        .iter()
        .map(|&l| p_values.iter().filter(|&&p| p <= l).count() as f64 / p_values.len() as f64)
        .collect();
    Ok(CalibrationReport {
        scenario: null_spec,
        replications: r,
        bootstrap_b,
        levels: levels.to_vec(),
        rejection,
        p_values,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullShape {
    pub bootstrap_stats: Vec<f64>,
    pub df_fitted: f64,
    pub ks_distance: f64,
}

/// Bootstrap null of the GLRT on one null dataset, with the KS distance to
/// chi-square at the bootstrap mean.
pub fn null_distribution_shape(spec: &ScenarioSpec, tested: usize, b: usize, seed: u64) -> Result<NullShape> {
    let null_spec = ScenarioSpec {
        seed,
        ..spec.scale_alpha(tested, 0.0)
    };
    let data = gen_scenario_rep(&null_spec, 0)?;
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let boot = bootstrap_null(
        &data,
        spec.family,
        &kernel,
        &[tested],
        &PenaltyPolicy::Unpenalized,
        b,
        derive_seed(seed, 1),
    )?;
    let ks = ks_chi_square(&boot.bootstrap_stats, boot.df_fitted)?;
    Ok(NullShape {
        ks_distance: ks,
        df_fitted: boot.df_fitted,
        bootstrap_stats: boot.bootstrap_stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaseComparison {
    /// RASE of `alpha^` at the true `beta`.
    pub rase_true_beta: Vec<f64>,
    /// RASE of `alpha^` from the SCAD backfit.
    pub rase_backfit: Vec<f64>,
    pub median_ratio: f64,
}

/// RASE of the backfitted `alpha^` against the fit that knows `beta`.
pub fn run_rase_study(spec: &ScenarioSpec, r: usize, seed: u64) -> Result<RaseComparison> {
    let spec = ScenarioSpec {
        seed,
        ..spec.clone()
    };
    let kernel = KernelSpec::epanechnikov(spec.h)?;
    let pairs: Vec<Result<(f64, f64)>> = (0..r as u64)
        .into_par_iter()
        .map(|rep| {
            let data = gen_scenario_rep(&spec, rep)?;
            let known = alpha_on_grid(&data, spec.family, &kernel, &spec.beta_true, 200)?;
            let est = SemiEstimator::new(&data, spec.family, &kernel, BackfitOptions::default())?;
            let fit = est.select_lambda(PenaltyKind::scad(), None)?.fit;
            Ok((rase(&known, &spec.alpha), rase(&fit.alpha_curves, &spec.alpha)))
        })
        .collect();
    check_failures("RASE replications", &pairs, REPLICATION_FAILURE_LIMIT)?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().flatten().unzip();
    let ratios: Vec<f64> = a.iter().zip(&b).map(|(t, f)| f / t).collect();
    Ok(RaseComparison {
        median_ratio: median(&ratios),
        rase_true_beta: a,
        rase_backfit: b,
    })
}

/// Spearman correlation of (delta, power) at one level.
pub fn power_monotonicity(report: &PowerReport, level: f64) -> f64 {
    let (d, p): (Vec<f64>, Vec<f64>) = report.curve(level).into_iter().unzip();
    spearman(&d, &p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!("scad".parse::<Method>().unwrap(), Method::Scad);
        assert_eq!(" BIC".parse::<Method>().unwrap(), Method::Bic);
        assert!("mcp".parse::<Method>().is_err());
    }

    #[test]
    fn zero_count_accounting() {
        let truth = [0.3, 0.0, 0.0, 0.2];
        assert_eq!(zero_counts(&[0.25, 0.0, 0.1, 0.0], &truth), (1, 1));
    }

    #[test]
    fn oracle_row_is_exact_on_a_small_study() {
        let spec = ScenarioSpec {
            n: 120,
            h: 0.3,
            beta_true: vec![0.3, 0.0, 0.2, 0.0],
            ..ScenarioSpec::example41()
        };
        let rep = run_table1_study(&spec, &[Method::Oracle, Method::Bic], 3, 4).unwrap();
        let oracle = rep.row(Method::Oracle).unwrap();
        assert_eq!(oracle.c_avg, 2.0);
        assert_eq!(oracle.i_avg, 0.0);
        let again = run_table1_study(&spec, &[Method::Oracle, Method::Bic], 3, 4).unwrap();
        assert_eq!(rep.rows.iter().map(|r| r.rgmse_median).collect::<Vec<_>>(), again.rows.iter().map(|r| r.rgmse_median).collect::<Vec<_>>());
        assert!(rep.to_text().contains("Oracle"));
    }
}
