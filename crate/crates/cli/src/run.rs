//! Command execution and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gvcplm::estimator::LambdaPolicy;
use gvcplm::sim::study::{
    null_distribution_shape, run_calibration_study, run_power_study, run_rase_study, run_table1_study,
    run_timing_study,
};
use gvcplm::subset::{enumerate_subsets, mask_to_indices, result_from_trace};
use gvcplm::{
    glrt_with_bootstrap, read_csv, select_bandwidth_cv, undersmooth, BackfitOptions, Dataset, Error, KernelSpec,
    PenaltyKind, PenaltyPolicy, RoleMap, SemiEstimator,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Keys holding wall-clock measurements. They are moved out of `results.json`
/// so that file stays byte-identical across reruns.
const TIMING_KEYS: [&str; 6] = ["wall_time_secs", "seconds", "time_mean", "time_sd", "mean_secs", "sd_secs"];

pub struct Artifacts {
    pub result: Value,
    pub report: String,
    pub csvs: Vec<(&'static str, String)>,
}

pub fn run(config: &RunConfig) -> Result<Artifacts, Error> {
    match config.command() {
        "fit" => fit(config),
        "select" => select(config),
        "test" => test(config),
        "bandwidth" => bandwidth(config),
        "simulate" => simulate(config),
        other => Err(Error::InvalidArgument(format!("unknown command `{other}`"))),
    }
}

fn load(config: &RunConfig) -> Result<Dataset, Error> {
    let roles_path = config.roles.as_ref().expect("validated");
    let text = fs::read_to_string(roles_path)?;
    let roles = RoleMap::parse(&text).map_err(|e| Error::InvalidData(e.join("; ")))?;
    read_csv(config.data.as_ref().expect("validated"), &roles, config.intercept.unwrap_or(true))
}

/// The bandwidth actually used, after the optional undersmoothing rescale.
fn bandwidth_used(config: &RunConfig, n: usize) -> f64 {
    let h = config.h.expect("validated");
    if config.undersmooth == Some(true) {
        undersmooth(h, n)
    } else {
        h
    }
}

fn kernel_spec(config: &RunConfig, n: usize) -> Result<KernelSpec, Error> {
    KernelSpec::new(config.kernel_parsed(), bandwidth_used(config, n))
}

fn options(config: &RunConfig) -> BackfitOptions {
    BackfitOptions {
        exact_alpha: config.exact_alpha.unwrap_or(false),
        ..BackfitOptions::default()
    }
}

fn lambda_policy(config: &RunConfig) -> LambdaPolicy {
    match config.lambda_policy.as_deref() {
        Some("gcv") => LambdaPolicy::Gcv(config.lambda_grid.clone()),
        _ => LambdaPolicy::Scaled(config.lambda.unwrap_or(0.0)),
    }
}

fn bandwidth_line(config: &RunConfig, used: f64) -> String {
    match config.undersmooth {
        Some(true) => format!(
            "bandwidth used: {used:.6} (undersmoothed from h = {})\n",
            config.h.expect("validated")
        ),
        _ => format!("bandwidth used: {used:.6}\n"),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn curves_csv(curves: &gvcplm::CoefficientCurves) -> String {
    let mut buf = Vec::new();
    curves.write_csv(&mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

fn fit(config: &RunConfig) -> Result<Artifacts, Error> {
    let data = load(config)?;
    let family = config.family_parsed();
    let kernel = kernel_spec(config, data.n())?;
    let est = SemiEstimator::new(&data, family, &kernel, options(config))?;
    let (fit, selection) = est.fit(config.penalty_kind(), &lambda_policy(config))?;
    let mut report = format!("{family} fit, n = {}, p = {}, d = {}\n", data.n(), data.p(), data.d());
    report.push_str(&bandwidth_line(config, kernel.bandwidth()));
    let _ = writeln!(report, "penalty: {}", fit.penalty.label());
    if let Some(sel) = &selection {
        let _ = writeln!(report, "lambda selected by GCV: {}", sel.lambda_star);
    }
    let _ = writeln!(
        report,
        "quasi-loglik {:.6}, deviance {:.6}, effective df {:.4}, GCV {:.6}\n",
        fit.quasi_loglik, fit.deviance, fit.effective_df, fit.gcv
    );
    report.push_str(&fit.coefficient_table());
    let mut csvs = vec![("curves.csv", curves_csv(&fit.alpha_curves))];
    if let Some(sel) = &selection {
        csvs.push(("path.csv", path_csv(sel)));
    }
    Ok(Artifacts {
        result: json!({ "fit": to_value(&fit), "lambda_path": selection.map(|s| to_value(&s.path)) }),
        report,
        csvs,
    })
}

fn path_csv(sel: &gvcplm::LambdaSelection) -> String {
    let mut out = String::from("lambda,gcv,effective_df,n_zero,error\n");
    for p in &sel.path {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let n_zero = p.zero_mask.as_ref().map_or(String::new(), |m| m.iter().filter(|z| **z).count().to_string());
        let err = p.error.as_deref().unwrap_or("").replace(',', ";");
        let _ = writeln!(out, "{},{},{},{},{}", p.lambda, opt(p.gcv), opt(p.effective_df), n_zero, err);
    }
    out
}

fn select(config: &RunConfig) -> Result<Artifacts, Error> {
    let data = load(config)?;
    let family = config.family_parsed();
    let kernel = kernel_spec(config, data.n())?;
    let kind = config.penalty_kind();
    let mut report = format!("{family} selection, n = {}, d = {}\n", data.n(), data.d());
    report.push_str(&bandwidth_line(config, kernel.bandwidth()));
    if kind == PenaltyKind::L0 {
        let criterion = config.criterion_parsed();
        let trace = enumerate_subsets(&data, family, &kernel, config.max_d.expect("validated"), false)?;
        let res = result_from_trace(&data, family, &kernel, &trace, criterion)?;
        let names: Vec<&str> = res.best_subset.iter().map(|&j| data.z_names()[j].as_str()).collect();
        let _ = writeln!(
            report,
            "best subset under {criterion} (lambda {:.6}): {{{}}}, criterion value {:.6}",
            res.lambda,
            names.join(", "),
            res.criterion_value
        );
        let _ = writeln!(report, "{} subsets evaluated, {} failed\n", res.subsets_evaluated, res.failures);
        report.push_str(&res.fit.coefficient_table());
        let mut subsets = String::from("mask,columns,loglik\n");
        for (mask, ll) in trace.loglik.iter().enumerate() {
            let cols: Vec<String> = mask_to_indices(mask, trace.d).iter().map(|&j| data.z_names()[j].clone()).collect();
            let _ = writeln!(subsets, "{mask},{},{}", cols.join(" "), ll.map_or(String::new(), |v| v.to_string()));
        }
        return Ok(Artifacts {
            result: json!({ "subset": to_value(&res) }),
            report,
            csvs: vec![("subsets.csv", subsets), ("curves.csv", curves_csv(&res.fit.alpha_curves))],
        });
    }
    let est = SemiEstimator::new(&data, family, &kernel, options(config))?;
    let (fit, selection) = est.fit(kind, &lambda_policy(config))?;
    let _ = writeln!(report, "penalty: {}", kind.label());
    if let Some(sel) = &selection {
        let _ = writeln!(report, "lambda selected by GCV: {} ({} grid points)", sel.lambda_star, sel.path.len());
    }
    let _ = writeln!(report, "selected: {} of {} coefficients nonzero\n", fit.active().len(), data.d());
    report.push_str(&fit.coefficient_table());
    let mut csvs = vec![("curves.csv", curves_csv(&fit.alpha_curves))];
    if let Some(sel) = &selection {
        csvs.push(("path.csv", path_csv(sel)));
    }
    Ok(Artifacts {
        result: json!({ "fit": to_value(&fit), "lambda_path": selection.map(|s| to_value(&s.path)) }),
        report,
        csvs,
    })
}

fn test(config: &RunConfig) -> Result<Artifacts, Error> {
    let data = load(config)?;
    let family = config.family_parsed();
    let kernel = kernel_spec(config, data.n())?;
    let null_x: Vec<usize> = config.null_x.iter().flatten().map(|j| j - 1).collect();
    let policy = match config.penalty.as_deref() {
        None | Some("none") => PenaltyPolicy::Unpenalized,
        Some(_) => PenaltyPolicy::Penalized {
            kind: config.penalty_kind(),
            lambda: lambda_policy(config),
        },
    };
    let b = config.bootstrap.expect("validated");
    let res = glrt_with_bootstrap(&data, family, &kernel, &null_x, &policy, b, config.seed.expect("validated"))?;
    let names: Vec<&str> = null_x.iter().map(|&j| data.x_names()[j].as_str()).collect();
    let mut report = format!("GLRT of alpha = 0 for {{{}}}, n = {}\n", names.join(", "), data.n());
    report.push_str(&bandwidth_line(config, kernel.bandwidth()));
    let _ = writeln!(report, "T_GLR = {:.6} (R(H1) = {:.6}, R(H0) = {:.6}, r_K = {})", res.t_glr, res.r_h1, res.r_h0, res.r_k);
    let _ = writeln!(report, "asymptotic: df_n = {:.4}, p = {:.6}", res.df_n, res.p_asymptotic);
    let _ = writeln!(
        report,
        "bootstrap: B = {b}, p = {:.6}, fitted df = {:.4}, {} failed draws",
        res.p_bootstrap.unwrap_or(f64::NAN),
        res.df_fitted.unwrap_or(f64::NAN),
        res.bootstrap_failures
    );
    if res.partial_null {
        report.push_str("note: the null keeps some components; df_n extrapolates the all-components formula\n");
    }
    for w in &res.warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    let mut stats = String::from("draw,t\n");
    for (k, t) in res.bootstrap_stats.iter().flatten().enumerate() {
        let _ = writeln!(stats, "{k},{t}");
    }
    Ok(Artifacts {
        result: json!({ "glrt": to_value(&res) }),
        report,
        csvs: vec![("bootstrap.csv", stats)],
    })
}

fn bandwidth(config: &RunConfig) -> Result<Artifacts, Error> {
    let data = load(config)?;
    let family = config.family_parsed();
    let grid = config.h_grid.clone().expect("validated");
    let folds = config.folds.expect("validated");
    let cv = select_bandwidth_cv(&data, family, &config.kernel_parsed(), &grid, folds, config.seed.expect("validated"))?;
    let h_under = undersmooth(cv.h_star, data.n());
    let mut report = format!("{folds}-fold cross-validation over {} bandwidths, n = {}\n", grid.len(), data.n());
    let _ = writeln!(report, "CV-optimal h = {}", cv.h_star);
    let _ = writeln!(report, "undersmoothed h for inference on beta = {h_under:.6}");
    let mut scores = String::from("h,cv\n");
    for (h, s) in cv.h_grid.iter().zip(&cv.cv_scores) {
        let _ = writeln!(scores, "{h},{}", s.map_or(String::new(), |v| v.to_string()));
    }
    Ok(Artifacts {
        result: json!({ "cv": to_value(&cv), "h_undersmoothed": h_under }),
        report,
        csvs: vec![("cv.csv", scores)],
    })
}

fn simulate(config: &RunConfig) -> Result<Artifacts, Error> {
    let spec = config.scenario_spec();
    let seed = config.seed.expect("validated");
    let reps = config.reps.expect("validated");
    let tested = config.tested.map(|t| t - 1).unwrap_or(1);
    let mut head = format!(
        "scenario {} ({}, n = {}, h = {}, p = {}, d = {})\n",
        spec.name,
        spec.family,
        spec.n,
        spec.h,
        spec.p(),
        spec.d()
    );
    match config.study.as_deref().unwrap_or("selection") {
        "selection" => {
            let report = run_table1_study(&spec, &config.methods_parsed(), reps, seed)?;
            Ok(Artifacts {
                result: json!({ "study": "selection", "report": to_value(&report) }),
                report: report.to_text(),
                csvs: vec![("table.csv", report.to_csv())],
            })
        }
        "timing" => {
            let d_values = config.d_values.clone().expect("validated");
            let report = run_timing_study(&spec, &d_values, &config.methods_parsed(), reps, seed)?;
            head.push_str(&report.to_text());
            Ok(Artifacts {
                result: json!({ "study": "timing", "report": to_value(&report) }),
                report: head,
                csvs: vec![("timing.csv", report.to_csv())],
            })
        }
        "power" => {
            let deltas = config.deltas.clone().expect("validated");
            let levels = config.levels.clone().expect("validated");
            let b = config.bootstrap.expect("validated");
            let report = run_power_study(&spec, tested, &deltas, &levels, reps, b, seed)?;
            head.push_str(&report.to_text());
            let mut null = String::from("draw,t\n");
            for (k, t) in report.null_stats.iter().enumerate() {
                let _ = writeln!(null, "{k},{t}");
            }
            Ok(Artifacts {
                result: json!({ "study": "power", "report": to_value(&report) }),
                report: head,
                csvs: vec![("power.csv", report.to_csv()), ("bootstrap.csv", null)],
            })
        }
        "calibration" => {
            let levels = config.levels.clone().expect("validated");
            let b = config.bootstrap.expect("validated");
            let report = run_calibration_study(&spec, tested, &levels, reps, b, seed)?;
            let shape = null_distribution_shape(&spec, tested, b, seed)?;
            for (l, r) in levels.iter().zip(&report.rejection) {
                let _ = writeln!(head, "rejection rate at level {l}: {r:.4}");
            }
            let _ = writeln!(
                head,
                "bootstrap null (B = {b}): fitted df {:.4}, KS distance to chi-square {:.4}",
                shape.df_fitted, shape.ks_distance
            );
            let mut pv = String::from("rep,p_value\n");
            for (k, p) in report.p_values.iter().enumerate() {
                let _ = writeln!(pv, "{k},{p}");
            }
            Ok(Artifacts {
                result: json!({ "study": "calibration", "report": to_value(&report), "null_shape": to_value(&shape) }),
                report: head,
                csvs: vec![("p_values.csv", pv)],
            })
        }
        _ => {
            let report = run_rase_study(&spec, reps, seed)?;
            let _ = writeln!(head, "median RASE ratio (backfit / true beta): {:.4}", report.median_ratio);
            let mut rows = String::from("rep,rase_true_beta,rase_backfit\n");
            for (k, (a, b)) in report.rase_true_beta.iter().zip(&report.rase_backfit).enumerate() {
                let _ = writeln!(rows, "{k},{a},{b}");
            }
            Ok(Artifacts {
                result: json!({ "study": "rase", "report": to_value(&report) }),
                report: head,
                csvs: vec![("rase.csv", rows)],
            })
        }
    }
}

/// Removes timing keys from `v` in place; returns whether any were found.
fn strip_timings(v: &mut Value) -> bool {
    match v {
        Value::Object(map) => {
            let mut found = false;
            for key in TIMING_KEYS {
                found |= map.remove(key).is_some();
            }
            for child in map.values_mut() {
                found |= strip_timings(child);
            }
            found
        }
        Value::Array(items) => items.iter_mut().fold(false, |acc, c| strip_timings(c) | acc),
        _ => false,
    }
}

fn commented(config_toml: &str) -> String {
    config_toml.lines().map(|l| format!("# {l}\n")).collect()
}

/// Writes `results.json`, `report.txt`, `config.toml` and the CSVs. Every file
/// carries the resolved config.
pub fn write_artifacts(config: &RunConfig, art: Artifacts, dir: &Path) -> Result<Vec<String>, Error> {
    fs::create_dir_all(dir)?;
    let config_toml = config.to_toml();
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), Error> {
        fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };
    let mut result = art.result;
    let full = result.clone();
    let had_timings = strip_timings(&mut result);
    let envelope = json!({
        "tool": "gvcplm",
        "version": env!("CARGO_PKG_VERSION"),
        "config": to_value(config),
        "seed": config.seed,
        "result": result,
    });
    put("results.json", serde_json::to_string_pretty(&envelope).expect("json") + "\n")?;
    if had_timings {
        let timings = json!({ "config": to_value(config), "seed": config.seed, "result": full });
        put("timings.json", serde_json::to_string_pretty(&timings).expect("json") + "\n")?;
    }
    put("config.toml", config_toml.clone())?;
    put("report.txt", format!("{}\n{}", commented(&config_toml), art.report))?;
    for (name, body) in art.csvs {
        put(name, format!("{}{}", commented(&config_toml), body))?;
    }
    Ok(written)
}
