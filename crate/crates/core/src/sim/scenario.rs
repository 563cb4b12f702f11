//! Simulation designs and data generation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::sim::expr::CoefFn;
use crate::sim::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: Family,
    pub n: usize,
    pub h: f64,
    /// `alpha_j(u)`; `X_1 = 1`, the other `X_j` are standard normal.
    pub alpha: Vec<CoefFn>,
    pub beta_true: Vec<f64>,
    /// `Cov(Z_i, Z_j) = rho^|i-j|`.
    pub z_correlation: f64,
    /// Gaussian noise standard deviation (ignored by other families).
    #[serde(default = "one")]
    pub noise_sd: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

/// Named presets.
pub const PRESETS: [&str; 4] = ["example41", "example41-full", "example42", "example42-full"];

impl ScenarioSpec {
    /// Poisson design with `n = 200`, `h = 0.125` and ten correlated `Z`.
    pub fn example41() -> Self {
        Self {
            name: "example41".into(),
            family: Family::Poisson,
            n: 200,
            h: 0.125,
            alpha: vec![
                CoefFn::parse("5.5 + 0.1*exp(2*u - 1)").expect("valid"),
                CoefFn::parse("0.8*u*(1 - u)").expect("valid"),
            ],
            beta_true: vec![0.3, 0.15, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            z_correlation: 0.5,
            noise_sd: 1.0,
            seed: 0,
        }
    }

    /// Logistic design. Desk scale uses `n = 400` with `h` rescaled by the
    /// `n^(-1/3)` rule from `h = 0.3` at `n = 1000`.
    pub fn example42() -> Self {
        let h = 0.3 * (1000.0f64 / 400.0).powf(1.0 / 3.0);
        Self {
            name: "example42".into(),
            family: Family::Bernoulli,
            n: 400,
            h,
            alpha: vec![
                CoefFn::parse("exp(2*u - 1)").expect("valid"),
                CoefFn::parse("2*sin(2*pi*u)^2").expect("valid"),
            ],
            beta_true: vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            z_correlation: 0.5,
            noise_sd: 1.0,
            seed: 0,
        }
    }

    pub fn example42_full() -> Self {
        Self {
            name: "example42-full".into(),
            n: 1000,
            h: 0.3,
            ..Self::example42()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "example41" => Ok(Self::example41()),
            // the Poisson design already runs at full sample size
            "example41-full" => Ok(Self {
                name: "example41-full".into(),
                ..Self::example41()
            }),
            "example42" => Ok(Self::example42()),
            "example42-full" => Ok(Self::example42_full()),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario `{other}` (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn p(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.beta_true.len()
    }

    /// Zero-based indices of the nonzero true coefficients.
    pub fn true_support(&self) -> Vec<usize> {
        (0..self.d()).filter(|&j| self.beta_true[j] != 0.0).collect()
    }

    pub fn sigma_z(&self) -> DMatrix<f64> {
        let d = self.d();
        DMatrix::from_fn(d, d, |i, j| self.z_correlation.powi((i as i32 - j as i32).abs()))
    }

    /// Same design with `alpha_j` multiplied by `c`.
    pub fn scale_alpha(&self, j: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.alpha[j] = self.alpha[j].scaled(c);
        out
    }

    /// Same design with the first `d` parametric coefficients.
    pub fn truncate_d(&self, d: usize) -> Self {
        let mut out = self.clone();
        out.beta_true.truncate(d);
        out.beta_true.resize(d, 0.0);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.h > 0.0) {
            errs.push(format!("h must be positive, got {}", self.h));
        }
        if self.alpha.is_empty() {
            errs.push("at least one coefficient function is required".into());
        }
        if !(self.z_correlation.abs() < 1.0) {
            errs.push(format!("|z_correlation| must be below 1, got {}", self.z_correlation));
        }
        if !(self.noise_sd > 0.0) {
            errs.push(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(errs.join("; ")))
        }
    }

    /// True `alpha(u)` at each grid point.
    pub fn alpha_at(&self, u: f64) -> Vec<f64> {
        self.alpha.iter().map(|f| f.eval(u)).collect()
    }
}

/// Draws one dataset from `spec` using replication stream `rep` of `spec.seed`.
pub fn gen_scenario_rep(spec: &ScenarioSpec, rep: u64) -> Result<Dataset> {
    spec.validate()?;
    let (n, p, d) = (spec.n, spec.p(), spec.d());
    let chol = spec
        .sigma_z()
        .cholesky()
        .ok_or(Error::Singular("Z covariance"))?
        .l();
    let mut rng = stream(spec.seed, rep);
    let mut u = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut z = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut e = vec![0.0; d];
    for _ in 0..n {
        let ui: f64 = rng.random();
        let xrow: Vec<f64> = (0..p)
            .map(|j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) })
            .collect();
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let zrow: Vec<f64> = (0..d).map(|r| (0..=r).map(|c| chol[(r, c)] * e[c]).sum()).collect();
        let eta: f64 = xrow.iter().zip(&spec.alpha).map(|(xv, f)| xv * f.eval(ui)).sum::<f64>()
            + zrow.iter().zip(&spec.beta_true).map(|(zv, b)| zv * b).sum::<f64>();
        let mu = spec.family.inv_link(eta);
        y.push(spec.family.sample(mu, spec.noise_sd, &mut rng));
        u.push(ui);
        x.extend(xrow);
        z.extend(zrow);
    }
    let x_names = (1..=p).map(|j| format!("x{j}")).collect();
    let z_names = (1..=d).map(|j| format!("z{j}")).collect();
    Dataset::new(u, x, p, z, d, y)?.with_names(x_names, z_names)
}

/// Draws the dataset for `spec.seed` (replication stream 0).
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Dataset> {
    gen_scenario_rep(spec, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec::example41();
        let a = gen_scenario(&spec).unwrap();
        let b = gen_scenario(&spec).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.z(), b.z());
        assert_eq!(a.u(), b.u());
        let c = gen_scenario_rep(&spec, 1).unwrap();
        assert_ne!(a.u(), c.u());
    }

    #[test]
    fn example_constants() {
        let s = ScenarioSpec::example41();
        assert_eq!(s.alpha_at(0.5), vec![5.5 + 0.1, 0.2]);
        assert_eq!(s.true_support(), vec![0, 1, 4]);
        assert_eq!(s.sigma_z()[(0, 2)], 0.25);
        let s = ScenarioSpec::example42();
        assert!((s.h - 0.3 * 2.5f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(ScenarioSpec::preset("example42-full").unwrap().n, 1000);
        assert!(ScenarioSpec::preset("nope").is_err());
    }

    #[test]
    fn uncorrelated_z_has_identity_covariance() {
        let spec = ScenarioSpec {
            n: 10_000,
            z_correlation: 0.0,
            beta_true: vec![0.0; 3],
            family: Family::Gaussian,
            ..ScenarioSpec::example41()
        };
        let data = gen_scenario(&spec).unwrap();
        let n = data.n() as f64;
        let bound = 3.0 / n.sqrt() * 1.5;
        for a in 0..3 {
            for b in 0..3 {
                let m = (0..data.n()).map(|i| data.z_row(i)[a] * data.z_row(i)[b]).sum::<f64>() / n;
                if a == b {
                    assert!((m - 1.0).abs() < 0.05);
                } else {
                    assert!(m.abs() < bound, "{m}");
                }
            }
        }
    }
}
