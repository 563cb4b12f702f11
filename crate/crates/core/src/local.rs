//! Local linear quasi-likelihood estimation of the coefficient functions.
//!
//! Around a point `u0` each coefficient function is approximated by
//! `alpha_j(v) ~ a_j + b_j (v - u0)` and the kernel-weighted quasi-likelihood
//! is maximized, either jointly with a local `beta` or with `beta` held fixed.
//! Internally the slope is parameterized as `b * h` so the local design is
//! scale-free in `u`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::KernelSpec;
use crate::newton::{NewtonOptions, Problem};

/// Consecutive points fitted sequentially with warm starts. Fixed, so results
/// do not depend on the number of worker threads.
const WARM_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub u0: f64,
    /// `alpha(u0)`.
    pub a: Vec<f64>,
    /// `alpha'(u0)`.
    pub b: Vec<f64>,
    /// Local `beta` when fitted jointly.
    pub beta_local: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// `sum_i K_h(U_i - u0)`.
    pub effective_kernel_mass: f64,
    pub ridge_activated: bool,
}

/// Coefficient functions evaluated on an increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCurves {
    pub grid: Vec<f64>,
    /// `values[k][j] = alpha_j(grid[k])`.
    pub values: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl CoefficientCurves {
    fn from_fits(fits: &[LocalFit]) -> Self {
        Self {
            grid: fits.iter().map(|f| f.u0).collect(),
            values: fits.iter().map(|f| f.a.clone()).collect(),
            derivatives: fits.iter().map(|f| f.b.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn p(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Linear interpolation in `u`, held constant outside the grid.
    pub fn interpolate(&self, u: f64) -> Vec<f64> {
        let g = &self.grid;
        let m = g.len();
        if m == 1 || u <= g[0] {
            return self.values[0].clone();
        }
        if u >= g[m - 1] {
            return self.values[m - 1].clone();
        }
        let hi = g.partition_point(|&v| v <= u).min(m - 1);
        let lo = hi - 1;
        let w = (u - g[lo]) / (g[hi] - g[lo]);
        self.values[lo]
            .iter()
            .zip(&self.values[hi])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// CSV rows `u, alpha_1..alpha_p, dalpha_1..dalpha_p`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.p();
        let mut header = vec!["u".to_string()];
        header.extend((1..=p).map(|j| format!("alpha_{j}")));
        header.extend((1..=p).map(|j| format!("dalpha_{j}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![self.grid[k].to_string()];
            rec.extend(self.values[k].iter().map(f64::to_string));
            rec.extend(self.derivatives[k].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Equispaced grid of `n` points over `[lo, hi]`.
pub fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + step * k as f64 })
        .collect()
}

/// Local fitting machinery bound to one dataset.
pub(crate) struct LocalSmoother<'a> {
    data: &'a Dataset,
    family: Family,
    kernel: &'a KernelSpec,
    /// `Z_i' beta` when beta is held fixed; `None` for joint fits.
    offset: Option<Vec<f64>>,
    pilot: Vec<f64>,
}

impl<'a> LocalSmoother<'a> {
    pub fn joint(data: &'a Dataset, family: Family, kernel: &'a KernelSpec) -> Result<Self> {
        family.check_response(data.y())?;
        let pilot = pilot_fit(data, family, &vec![0.0; data.n()]);
        Ok(Self {
            data,
            family,
            kernel,
            offset: None,
            pilot,
        })
    }

    pub fn with_beta(data: &'a Dataset, family: Family, kernel: &'a KernelSpec, beta: &[f64]) -> Result<Self> {
        family.check_response(data.y())?;
        if beta.len() != data.d() {
            return Err(Error::InvalidArgument(format!(
                "beta has length {}, the data have d = {}",
                beta.len(),
                data.d()
            )));
        }
        let offset = data.z_times(beta);
        let pilot = pilot_fit(data, family, &offset);
        Ok(Self {
            data,
            family,
            kernel,
            offset: Some(offset),
            pilot,
        })
    }

    fn joint_mode(&self) -> bool {
        self.offset.is_none()
    }

    fn dim(&self) -> usize {
        let p = self.data.p();
        2 * p + if self.joint_mode() { self.data.d() } else { 0 }
    }

    fn initial(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim()];
        theta[..self.data.p()].copy_from_slice(&self.pilot);
        theta
    }

    fn problem_at(&self, u0: f64) -> (Problem, f64) {
        let data = self.data;
        let h = self.kernel.bandwidth();
        let hw = self.kernel.half_width();
        let rows = data.window(u0 - hw, u0 + hw);
        let (p, k) = (data.p(), self.dim());
        let mut prob = Problem::with_capacity(k, rows.len());
        let mut mass = 0.0;
        for &i in rows {
            let t = (data.u()[i] - u0) / h;
            let w = self.kernel.kernel().eval(t) / h;
            if w <= 0.0 {
                continue;
            }
            mass += w;
            let x = data.x_row(i);
            prob.design.extend_from_slice(x);
            prob.design.extend(x.iter().map(|v| v * t));
            if self.joint_mode() {
                prob.design.extend_from_slice(data.z_row(i));
            }
            debug_assert_eq!(prob.design.len() % k, 0);
            prob.weight.push(w);
            prob.offset.push(self.offset.as_ref().map_or(0.0, |o| o[i]));
            prob.y.push(data.y()[i]);
        }
        debug_assert!(p <= k);
        (prob, mass)
    }

    pub fn fit_at(&self, u0: f64, init: Option<&[f64]>) -> Result<LocalFit> {
        let (prob, mass) = self.problem_at(u0);
        let required = self.dim() + 1;
        if prob.rows() < required {
            return Err(Error::SparseWindow {
                u0,
                available: prob.rows(),
                required,
            });
        }
        let start = match init {
            Some(t) => t.to_vec(),
            None => self.initial(),
        };
        let out = prob
            .maximize(self.family, &start, NewtonOptions::default())
            .map_err(|e| Error::at_point(u0, e))?;
        Ok(self.unpack(u0, &out.theta, out.iterations, mass, out.ridge))
    }

    fn unpack(&self, u0: f64, theta: &[f64], iterations: usize, mass: f64, ridge: bool) -> LocalFit {
        let p = self.data.p();
        let h = self.kernel.bandwidth();
        LocalFit {
            u0,
            a: theta[..p].to_vec(),
            b: theta[p..2 * p].iter().map(|v| v / h).collect(),
            beta_local: self.joint_mode().then(|| theta[2 * p..].to_vec()),
            iterations,
            converged: true,
            effective_kernel_mass: mass,
            ridge_activated: ridge,
        }
    }

    fn pack(&self, fit: &LocalFit, u_new: f64) -> Vec<f64> {
        let h = self.kernel.bandwidth();
        let shift = u_new - fit.u0;
        let mut theta: Vec<f64> = fit.a.iter().zip(&fit.b).map(|(a, b)| a + b * shift).collect();
        theta.extend(fit.b.iter().map(|b| b * h));
        if let Some(beta) = &fit.beta_local {
            theta.extend_from_slice(beta);
        }
        theta
    }

    /// Fits at every point of an increasing sequence, warm-starting each point
    /// from its predecessor within fixed-size chunks.
    pub fn fit_points(&self, points: &[f64]) -> Result<Vec<LocalFit>> {
        let chunks: Vec<Vec<LocalFit>> = points
            .par_chunks(WARM_CHUNK)
            .map(|chunk| {
                let mut fits: Vec<LocalFit> = Vec::with_capacity(chunk.len());
                for &u0 in chunk {
                    let init = fits.last().map(|prev| self.pack(prev, u0));
                    let fit = match self.fit_at(u0, init.as_deref()) {
                        Ok(f) => f,
                        // a poor warm start can stall; retry from the pilot
                        Err(Error::AtPoint { .. }) if init.is_some() => self.fit_at(u0, None)?,
                        Err(e) => return Err(e),
                    };
                    fits.push(fit);
                }
                Ok(fits)
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// `alpha` at every observation, by exact local fits at each `U_i`.
    pub fn at_observations(&self) -> Result<Vec<f64>> {
        let data = self.data;
        let sorted: Vec<f64> = data.order().iter().map(|&i| data.u()[i]).collect();
        let fits = self.fit_points(&sorted)?;
        let p = data.p();
        let mut out = vec![0.0; data.n() * p];
        for (fit, &i) in fits.iter().zip(data.order()) {
            out[i * p..(i + 1) * p].copy_from_slice(&fit.a);
        }
        Ok(out)
    }

    pub fn curves(&self, n_grid: usize) -> Result<CoefficientCurves> {
        if n_grid < 2 {
            return Err(Error::InvalidArgument("n_grid must be at least 2".into()));
        }
        let (lo, hi) = self.data.omega();
        let fits = self.fit_points(&equispaced(lo, hi, n_grid))?;
        Ok(CoefficientCurves::from_fits(&fits))
    }
}

/// Unweighted GLM of `y` on `X` with the given offset, used to start the local fits.
fn pilot_fit(data: &Dataset, family: Family, offset: &[f64]) -> Vec<f64> {
    let p = data.p();
    let prob = Problem {
        k: p,
        design: data.x().to_vec(),
        weight: vec![1.0; data.n()],
        offset: offset.to_vec(),
        y: data.y().to_vec(),
    };
    prob.maximize(family, &vec![0.0; p], NewtonOptions::default())
        .map(|o| o.theta)
        .unwrap_or_else(|_| vec![0.0; p])
}

/// Maximizes the local likelihood at `u0` over `(a, b, beta)`.
pub fn local_fit_joint(data: &Dataset, family: Family, kernel: &KernelSpec, u0: f64) -> Result<LocalFit> {
    LocalSmoother::joint(data, family, kernel)?.fit_at(u0, None)
}

/// Maximizes the local likelihood at `u0` over `(a, b)` with `beta` fixed.
pub fn local_fit_alpha(data: &Dataset, family: Family, kernel: &KernelSpec, u0: f64, beta: &[f64]) -> Result<LocalFit> {
    LocalSmoother::with_beta(data, family, kernel, beta)?.fit_at(u0, None)
}

/// Kernel-weighted local quasi-likelihood at `u0` and its gradient in
/// `theta = (a, b * h, beta_local)`. With `beta = Some(..)` the parametric part
/// is held fixed and `theta = (a, b * h)`.
pub fn local_quasi_score(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    u0: f64,
    beta: Option<&[f64]>,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let smoother = match beta {
        Some(b) => LocalSmoother::with_beta(data, family, kernel, b)?,
        None => LocalSmoother::joint(data, family, kernel)?,
    };
    if theta.len() != smoother.dim() {
        return Err(Error::InvalidArgument(format!(
            "theta has length {}, expected {}",
            theta.len(),
            smoother.dim()
        )));
    }
    let (prob, _) = smoother.problem_at(u0);
    let mut eta = Vec::new();
    prob.eta_into(theta, &mut eta);
    let (grad, _) = prob.derivatives(family, &eta);
    Ok((prob.objective(family, &eta), grad.iter().copied().collect()))
}

/// `alpha` on an equispaced grid over the support of `U`, with `beta` fixed.
pub fn alpha_on_grid(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    beta: &[f64],
    n_grid: usize,
) -> Result<CoefficientCurves> {
    LocalSmoother::with_beta(data, family, kernel, beta)?.curves(n_grid)
}

/// Joint local fits on an equispaced grid.
pub fn joint_on_grid(data: &Dataset, family: Family, kernel: &KernelSpec, n_grid: usize) -> Result<CoefficientCurves> {
    LocalSmoother::joint(data, family, kernel)?.curves(n_grid)
}

/// Rescales an MSE-optimal bandwidth to the undersmoothed order `n^(-1/3)`:
/// `h_opt * n^(-2/15)`.
pub fn undersmooth(h_opt: f64, n: usize) -> f64 {
    h_opt * (n as f64).powf(-2.0 / 15.0)
}
