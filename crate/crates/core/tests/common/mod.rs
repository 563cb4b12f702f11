#![allow(dead_code)]

use gvcplm::sim::rng::SimRng;
use gvcplm::{Dataset, Family};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Small random design: `X_1 = 1`, other columns standard normal, `eta`
/// kept moderate so every family is well conditioned.
pub fn random_data(family: Family, n: usize, p: usize, d: usize, rng: &mut SimRng) -> Dataset {
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    let c0: f64 = match family {
        Family::Poisson => rng.random_range(0.5..2.0),
        _ => rng.random_range(-0.5..0.5),
    };
    let mut u = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut z = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let ui: f64 = rng.random();
        let xr: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) }).collect();
        let zr: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let alpha: Vec<f64> = (0..p).map(|j| if j == 0 { c0 + 0.3 * ui } else { 0.2 * (3.0 * ui).sin() }).collect();
        let eta: f64 = xr.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()
            + zr.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        y.push(family.sample(family.inv_link(eta), 1.0, rng));
        u.push(ui);
        x.extend(xr);
        z.extend(zr);
    }
    Dataset::new(u, x, p, z, d, y).expect("valid design")
}

/// Five-point central difference of `f` in every coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], step: f64) -> Vec<f64> {
    (0..at.len())
        .map(|k| {
            let h = step * at[k].abs().max(1.0);
            let eval = |s: f64| {
                let mut v = at.to_vec();
                v[k] += s * h;
                f(&v)
            };
            (-eval(2.0) + 8.0 * eval(1.0) - 8.0 * eval(-1.0) + eval(-2.0)) / (12.0 * h)
        })
        .collect()
}

/// `max |a - b| / max(max |b|, 1)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Weighted least squares by normal equations solved with QR.
pub fn wls(design: &DMatrix<f64>, w: &[f64], y: &[f64]) -> Vec<f64> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(design.nrows(), design.ncols(), |i, j| design[(i, j)] * sw[i]);
    let b = DVector::from_iterator(y.len(), y.iter().zip(&sw).map(|(v, s)| v * s));
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).expect("full rank").iter().copied().collect()
}
