//! Semiparametric estimation of `beta` with `alpha` profiled out locally.
//!
//! One-step backfitting: a joint local fit gives `alpha~`, which is plugged in
//! as an offset for a global (penalized) quasi-likelihood fit over `beta`;
//! `alpha^` is then re-estimated on a grid with `beta^` held fixed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::kernel::KernelSpec;
use crate::local::{CoefficientCurves, LocalSmoother};
use crate::newton::{inverse_spd, solve_spd, NewtonOptions, Problem};
use crate::penalty::{PenaltyKind, PenaltySpec, ZERO_THRESHOLD};

pub const MAX_LQA_ITER: usize = 100;
pub const LQA_TOL: f64 = 1e-8;
pub const DEFAULT_LAMBDA_GRID: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackfitOptions {
    /// Grid size for both `alpha~` and the final `alpha^`.
    pub n_grid: usize,
    /// Evaluate `alpha` by exact local fits at every `U_i` instead of grid interpolation.
    pub exact_alpha: bool,
    /// `exempt[j]` leaves `beta_j` unpenalized. Empty means no exemptions.
    pub exempt: Vec<bool>,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        Self {
            n_grid: 200,
            exact_alpha: false,
            exempt: Vec::new(),
        }
    }
}

/// How the per-coefficient `lambda_j` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Scalar `lambda`, applied as `lambda_j = lambda * SE(beta_u_j)`.
    Scaled(f64),
    /// Raw per-coefficient values.
    PerCoefficient(Vec<f64>),
    /// GCV search over scalar `lambda` (SE-scaled); `None` uses the default grid.
    Gcv(Option<Vec<f64>>),
}

/// `alpha~` and the offsets `X_i' alpha~(U_i)` it induces.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub alpha_tilde: CoefficientCurves,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpenalizedFit {
    pub beta_u: Vec<f64>,
    pub se_u: Vec<f64>,
    pub alpha_tilde: CoefficientCurves,
    pub iterations: usize,
    pub ridge_activated: bool,
}

/// Output of the LQA iteration, before `alpha` is re-estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaFit {
    pub beta: Vec<f64>,
    pub zero_mask: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiFit {
    pub beta_hat: Vec<f64>,
    pub zero_mask: Vec<bool>,
    /// Sandwich standard errors; `None` for zeroed coefficients.
    pub se: Vec<Option<f64>>,
    pub alpha_curves: CoefficientCurves,
    pub lambda_used: Vec<f64>,
    pub penalty: PenaltyKind,
    pub effective_df: f64,
    pub gcv: f64,
    pub deviance: f64,
    /// `sum_i Q(mu_i, Y_i)` at `(alpha^, beta^)`.
    pub quasi_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: f64,
    pub z_names: Vec<String>,
    #[serde(skip)]
    pub(crate) plugin_offset: Vec<f64>,
}

impl SemiFit {
    pub fn n_zero(&self) -> usize {
        self.zero_mask.iter().filter(|z| **z).count()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.beta_hat.len()).filter(|&j| !self.zero_mask[j]).collect()
    }

    /// Coefficient table: name, estimate, SE, zeroed flag.
    pub fn coefficient_table(&self) -> String {
        let width = self.z_names.iter().map(String::len).max().unwrap_or(4).max(4);
        let mut out = format!("{:<width$}  {:>12}  {:>12}  zeroed\n", "name", "estimate", "se");
        for j in 0..self.beta_hat.len() {
            let se = self.se[j].map_or("-".to_string(), |s| format!("{s:.6}"));
            out.push_str(&format!(
                "{:<width$}  {:>12.6}  {:>12}  {}\n",
                self.z_names[j], self.beta_hat[j], se, self.zero_mask[j]
            ));
        }
        out
    }
}

/// One point on a `lambda` path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub gcv: Option<f64>,
    pub effective_df: Option<f64>,
    pub zero_mask: Option<Vec<bool>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda_star: f64,
    pub path: Vec<PathPoint>,
    pub fit: SemiFit,
}

/// Estimation context for one dataset: holds `alpha~` and the unpenalized fit
/// so that several penalties can share them.
pub struct SemiEstimator<'a> {
    data: &'a Dataset,
    family: Family,
    kernel: &'a KernelSpec,
    opts: BackfitOptions,
    plugin: PlugIn,
    unpen: UnpenalizedFit,
}

impl<'a> SemiEstimator<'a> {
    pub fn new(data: &'a Dataset, family: Family, kernel: &'a KernelSpec, opts: BackfitOptions) -> Result<Self> {
        if !opts.exempt.is_empty() && opts.exempt.len() != data.d() {
            return Err(Error::InvalidArgument(format!(
                "exempt mask has length {}, the data have d = {}",
                opts.exempt.len(),
                data.d()
            )));
        }
        let plugin = plug_in(data, family, kernel, &opts).map_err(|e| Error::stage("joint local fit", e))?;
        let unpen = unpenalized_beta(data, family, &plugin).map_err(|e| Error::stage("unpenalized global fit", e))?;
        Ok(Self {
            data,
            family,
            kernel,
            opts,
            plugin,
            unpen,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn plugin(&self) -> &PlugIn {
        &self.plugin
    }

    pub fn unpenalized(&self) -> &UnpenalizedFit {
        &self.unpen
    }

    fn exempt(&self, j: usize) -> bool {
        self.opts.exempt.get(j).copied().unwrap_or(false)
    }

    /// `lambda_j = lambda * SE(beta_u_j)`, zero for exempt coefficients.
    pub fn scaled_lambda(&self, lambda: f64) -> Vec<f64> {
        (0..self.data.d())
            .map(|j| if self.exempt(j) { 0.0 } else { lambda * self.unpen.se_u[j] })
            .collect()
    }

    /// LQA iterations from `beta_u`.
    pub fn penalized_beta(&self, penalty: &PenaltySpec) -> Result<BetaFit> {
        let init = self.unpen.beta_u.clone();
        lqa_maximize(self.data, self.family, &self.plugin.offset, penalty, &self.opts.exempt, &init)
    }

    /// Penalized fit at the given `lambda_j`, with `alpha^` re-estimated.
    pub fn penalized(&self, kind: PenaltyKind, lambda: Vec<f64>) -> Result<SemiFit> {
        let spec = PenaltySpec::new(kind, lambda)?;
        let beta = self
            .penalized_beta(&spec)
            .map_err(|e| Error::stage("penalized global fit", e))?;
        self.finish(&beta, &spec)
    }

    /// The unpenalized fit carried through the final smoothing step.
    pub fn unpenalized_fit(&self) -> Result<SemiFit> {
        let d = self.data.d();
        let beta = BetaFit {
            beta: self.unpen.beta_u.clone(),
            zero_mask: vec![false; d],
            iterations: self.unpen.iterations,
            converged: true,
        };
        self.finish(&beta, &PenaltySpec::none(d))
    }

    /// Re-estimates `alpha` at `beta^` and assembles the fit summary.
    pub fn finish(&self, beta: &BetaFit, penalty: &PenaltySpec) -> Result<SemiFit> {
        let (data, family) = (self.data, self.family);
        let d = data.d();
        let mut se = vec![None; d];
        let mut effective = 0.0;
        let active: Vec<usize> = (0..d).filter(|&j| !beta.zero_mask[j]).collect();
        if !active.is_empty() {
            let parts = BetaMatrices::at(data, family, &self.plugin.offset, &beta.beta, &active, penalty, &self.opts.exempt)?;
            let cov = parts.sandwich()?;
            for (k, &j) in active.iter().enumerate() {
                se[j] = Some(cov[(k, k)].max(0.0).sqrt());
            }
            effective = parts.effective_df()?;
        }

        let smoother = LocalSmoother::with_beta(data, family, self.kernel, &beta.beta)
            .map_err(|e| Error::stage("final smoothing", e))?;
        let curves = smoother
            .curves(self.opts.n_grid)
            .map_err(|e| Error::stage("final smoothing", e))?;
        let alpha_obs = if self.opts.exact_alpha {
            smoother.at_observations().map_err(|e| Error::stage("final smoothing", e))?
        } else {
            interpolate_at(&curves, data)
        };
        let zb = data.z_times(&beta.beta);
        let p = data.p();
        let eta: Vec<f64> = (0..data.n())
            .map(|i| dot(data.x_row(i), &alpha_obs[i * p..(i + 1) * p]) + zb[i])
            .collect();
        let loglik = crate::family::quasi_loglik(family, &eta, data.y())?;
        let deviance = -2.0 * loglik;
        let gcv = gcv_score(deviance, effective, data.n())?;
        Ok(SemiFit {
            beta_hat: beta.beta.clone(),
            zero_mask: beta.zero_mask.clone(),
            se,
            alpha_curves: curves,
            lambda_used: penalty.lambda.clone(),
            penalty: penalty.kind,
            effective_df: effective,
            gcv,
            deviance: deviance.max(0.0),
            quasi_loglik: loglik,
            iterations: beta.iterations,
            converged: beta.converged,
            bandwidth: self.kernel.bandwidth(),
            z_names: data.z_names().to_vec(),
            plugin_offset: self.plugin.offset.clone(),
        })
    }

    /// Smallest doubling of `lambda` (SE-scaled) that zeroes every penalized coefficient.
    pub fn lambda_max(&self, kind: PenaltyKind) -> Result<f64> {
        let d = self.data.d();
        let all_zero = |lam: f64| -> Result<bool> {
            let spec = PenaltySpec::new(kind, self.scaled_lambda(lam))?;
            let fit = self.penalized_beta(&spec)?;
            Ok((0..d).all(|j| self.exempt(j) || fit.zero_mask[j]))
        };
        let mut lam = 1.0;
        if all_zero(lam)? {
            for _ in 0..60 {
                if !all_zero(lam / 2.0)? {
                    return Ok(lam);
                }
                lam /= 2.0;
            }
            return Ok(lam);
        }
        for _ in 0..80 {
            lam *= 2.0;
            if all_zero(lam)? {
                return Ok(lam);
            }
        }
        Err(Error::NoConvergence {
            what: "lambda_max doubling search",
            iterations: 80,
        })
    }

    /// `n_points` log-spaced values over `[0.001 lambda_max, lambda_max]`.
    pub fn default_lambda_grid(&self, kind: PenaltyKind, n_points: usize) -> Result<Vec<f64>> {
        let hi = self.lambda_max(kind)?;
        Ok(log_grid(1e-3 * hi, hi, n_points))
    }

    /// GCV search over scalar `lambda`; ties go to the smaller `lambda`.
    pub fn select_lambda(&self, kind: PenaltyKind, grid: Option<&[f64]>) -> Result<LambdaSelection> {
        let grid = match grid {
            Some(g) => {
                if g.is_empty() || g.iter().any(|l| !(*l >= 0.0) || l.is_infinite()) {
                    return Err(Error::InvalidArgument("lambda grid must be nonempty, finite and >= 0".into()));
                }
                g.to_vec()
            }
            None if self.data.d() == 0 => vec![0.0],
            None => self.default_lambda_grid(kind, DEFAULT_LAMBDA_GRID)?,
        };
        let fits: Vec<Result<SemiFit>> = grid
            .par_iter()
            .map(|&lam| self.penalized(kind, self.scaled_lambda(lam)))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        let mut path = Vec::with_capacity(grid.len());
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
        for (k, fit) in fits.iter().enumerate() {
            path.push(match fit {
                Ok(f) => PathPoint {
                    lambda: grid[k],
                    gcv: Some(f.gcv),
                    effective_df: Some(f.effective_df),
                    zero_mask: Some(f.zero_mask.clone()),
                    error: None,
                },
                Err(e) => PathPoint {
                    lambda: grid[k],
                    gcv: None,
                    effective_df: None,
                    zero_mask: None,
                    error: Some(e.to_string()),
                },
            });
        }
        for &k in &order {
            if let Ok(f) = &fits[k] {
                if best.is_none_or(|(_, g)| f.gcv < g) {
                    best = Some((k, f.gcv));
                }
            }
        }
        let (k, _) = best.ok_or_else(|| {
            let first = fits.iter().find_map(|f| f.as_ref().err()).map_or(String::new(), |e| e.to_string());
            Error::AllFailed(format!("lambda path: {first}"))
        })?;
        let lambda_star = grid[k];
        let fit = fits.into_iter().nth(k).expect("index in range")?;
        Ok(LambdaSelection { lambda_star, path, fit })
    }

    /// Penalized fit under a `lambda` policy.
    pub fn fit(&self, kind: PenaltyKind, policy: &LambdaPolicy) -> Result<(SemiFit, Option<LambdaSelection>)> {
        if self.data.d() == 0 || kind == PenaltyKind::None {
            return Ok((self.unpenalized_fit()?, None));
        }
        match policy {
            LambdaPolicy::Scaled(lam) => Ok((self.penalized(kind, self.scaled_lambda(*lam))?, None)),
            LambdaPolicy::PerCoefficient(l) => {
                if l.len() != self.data.d() {
                    return Err(Error::InvalidArgument(format!(
                        "{} lambda values given for d = {}",
                        l.len(),
                        self.data.d()
                    )));
                }
                Ok((self.penalized(kind, l.clone())?, None))
            }
            LambdaPolicy::Gcv(grid) => {
                let sel = self.select_lambda(kind, grid.as_deref())?;
                Ok((sel.fit.clone(), Some(sel)))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| if k + 1 == n { hi } else { (a + (b - a) * k as f64 / (n - 1) as f64).exp() })
        .collect()
}

/// `alpha` at each observation by interpolating the grid, row-major `n x p`.
fn interpolate_at(curves: &CoefficientCurves, data: &Dataset) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.n() * data.p());
    for &u in data.u() {
        out.extend(curves.interpolate(u));
    }
    out
}

/// Joint local fit `alpha~` and the offsets `X_i' alpha~(U_i)`.
pub fn plug_in(data: &Dataset, family: Family, kernel: &KernelSpec, opts: &BackfitOptions) -> Result<PlugIn> {
    let smoother = LocalSmoother::joint(data, family, kernel)?;
    let curves = smoother.curves(opts.n_grid)?;
    let alpha = if opts.exact_alpha {
        smoother.at_observations()?
    } else {
        interpolate_at(&curves, data)
    };
    let p = data.p();
    let offset = (0..data.n())
        .map(|i| dot(data.x_row(i), &alpha[i * p..(i + 1) * p]))
        .collect();
    Ok(PlugIn {
        alpha_tilde: curves,
        offset,
    })
}

fn beta_problem(data: &Dataset, offset: &[f64], cols: &[usize]) -> Problem {
    let n = data.n();
    let mut prob = Problem::with_capacity(cols.len(), n);
    for i in 0..n {
        let z = data.z_row(i);
        prob.design.extend(cols.iter().map(|&j| z[j]));
    }
    prob.weight = vec![1.0; n];
    prob.offset = offset.to_vec();
    prob.y = data.y().to_vec();
    prob
}

fn unpenalized_beta(data: &Dataset, family: Family, plugin: &PlugIn) -> Result<UnpenalizedFit> {
    let d = data.d();
    if d == 0 {
        return Ok(UnpenalizedFit {
            beta_u: Vec::new(),
            se_u: Vec::new(),
            alpha_tilde: plugin.alpha_tilde.clone(),
            iterations: 0,
            ridge_activated: false,
        });
    }
    let cols: Vec<usize> = (0..d).collect();
    let prob = beta_problem(data, &plugin.offset, &cols);
    let out = prob.maximize(family, &vec![0.0; d], NewtonOptions::default())?;
    let none = PenaltySpec::none(d);
    let parts = BetaMatrices::at(data, family, &plugin.offset, &out.theta, &cols, &none, &[])?;
    let cov = parts.sandwich()?;
    Ok(UnpenalizedFit {
        se_u: (0..d).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        beta_u: out.theta,
        alpha_tilde: plugin.alpha_tilde.clone(),
        iterations: out.iterations,
        ridge_activated: out.ridge,
    })
}

/// Global quasi-likelihood `l(beta) = sum_i Q(g^-1(o_i + Z_i' beta), Y_i)`.
pub fn loglik_beta(data: &Dataset, family: Family, offset: &[f64], beta: &[f64]) -> f64 {
    let zb = data.z_times(beta);
    offset
        .iter()
        .zip(&zb)
        .zip(data.y())
        .map(|((o, z), &y)| family.quasi(family.inv_link(o + z), y))
        .sum()
}

/// Analytic gradient `l'(beta) = sum_i q1(eta_i, Y_i) Z_i`.
pub fn score_beta(data: &Dataset, family: Family, offset: &[f64], beta: &[f64]) -> Vec<f64> {
    let zb = data.z_times(beta);
    let mut g = vec![0.0; data.d()];
    for i in 0..data.n() {
        let s = family.score(offset[i] + zb[i], data.y()[i]);
        for (gj, zj) in g.iter_mut().zip(data.z_row(i)) {
            *gj += s * zj;
        }
    }
    g
}

/// Score pieces, Hessian and `n Sigma_lambda` at `beta`, restricted to `active`.
struct BetaMatrices {
    /// `-l''` on the active set.
    neg_hess: DMatrix<f64>,
    /// `n Sigma_lambda`.
    n_sigma: DVector<f64>,
    /// centered outer product of `psi_i = q1_i Z_i,active`.
    meat: DMatrix<f64>,
}

impl BetaMatrices {
    fn at(
        data: &Dataset,
        family: Family,
        offset: &[f64],
        beta: &[f64],
        active: &[usize],
        penalty: &PenaltySpec,
        exempt: &[bool],
    ) -> Result<Self> {
        let n = data.n();
        let s = active.len();
        let prob = beta_problem(data, offset, active);
        let theta: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
        let mut eta = Vec::with_capacity(n);
        prob.eta_into(&theta, &mut eta);
        let (_, neg_hess) = prob.derivatives(family, &eta);

        let mut sum = DVector::zeros(s);
        let mut outer = DMatrix::zeros(s, s);
        for i in 0..n {
            let q1 = family.score(eta[i], prob.y[i]);
            let psi = DVector::from_iterator(s, prob.row(i).iter().map(|z| q1 * z));
            sum += &psi;
            outer.ger(1.0, &psi, &psi, 1.0);
        }
        let mean = sum / n as f64;
        outer.ger(-(n as f64), &mean, &mean, 1.0);

        let mut n_sigma = DVector::zeros(s);
        for (k, &j) in active.iter().enumerate() {
            if exempt.get(j).copied().unwrap_or(false) || penalty.kind == PenaltyKind::None {
                continue;
            }
            n_sigma[k] = n as f64 * penalty.lqa_weight(j, beta[j])?;
        }
        Ok(Self {
            neg_hess,
            n_sigma,
            meat: outer,
        })
    }

    /// `-(l'' - n Sigma_lambda)`.
    fn bread(&self) -> DMatrix<f64> {
        let mut b = self.neg_hess.clone();
        for k in 0..b.nrows() {
            b[(k, k)] += self.n_sigma[k];
        }
        b
    }

    fn sandwich(&self) -> Result<DMatrix<f64>> {
        let inv = inverse_spd(self.bread(), "sandwich bread")?;
        let cov = &inv * &self.meat * &inv;
        // exact symmetry
        Ok(DMatrix::from_fn(cov.nrows(), cov.ncols(), |r, c| 0.5 * (cov[(r, c)] + cov[(c, r)])))
    }

    fn effective_df(&self) -> Result<f64> {
        let inv = inverse_spd(self.bread(), "effective-df")?;
        Ok((&inv * &self.neg_hess).trace())
    }
}

/// LQA-modified Newton–Raphson for the penalized quasi-likelihood
/// `l(beta) - n sum_j p_lambda_j(|beta_j|)`, started from `init`.
///
/// Penalized coefficients at or below the zero threshold are set to zero and
/// stay there.
pub fn lqa_maximize(
    data: &Dataset,
    family: Family,
    offset: &[f64],
    penalty: &PenaltySpec,
    exempt: &[bool],
    init: &[f64],
) -> Result<BetaFit> {
    if penalty.kind == PenaltyKind::L0 {
        return Err(Error::UnsupportedPenalty);
    }
    let d = data.d();
    if init.len() != d || penalty.lambda.len() != d {
        return Err(Error::InvalidArgument(format!(
            "beta_init and lambda must have length d = {d}"
        )));
    }
    let n = data.n() as f64;
    let penalized: Vec<bool> = (0..d)
        .map(|j| penalty.kind != PenaltyKind::None && penalty.lambda[j] > 0.0 && !exempt.get(j).copied().unwrap_or(false))
        .collect();
    let mut beta = init.to_vec();
    let mut zero = vec![false; d];
    for j in 0..d {
        if penalized[j] && beta[j].abs() <= ZERO_THRESHOLD {
            zero[j] = true;
            beta[j] = 0.0;
        }
    }

    let mut eta = Vec::with_capacity(data.n());
    let mut trial_eta = Vec::with_capacity(data.n());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_LQA_ITER {
        iterations += 1;
        let active: Vec<usize> = (0..d).filter(|&j| !zero[j]).collect();
        if active.is_empty() {
            converged = true;
            break;
        }
        let w: Vec<f64> = active
            .iter()
            .map(|&j| if penalized[j] { penalty.lqa_weight(j, beta[j]) } else { Ok(0.0) })
            .collect::<Result<_>>()?;
        let prob = beta_problem(data, offset, &active);
        let theta: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
        let surrogate = |eta: &[f64], th: &[f64]| {
            prob.objective(family, eta) - 0.5 * n * th.iter().zip(&w).map(|(t, w)| w * t * t).sum::<f64>()
        };
        prob.eta_into(&theta, &mut eta);
        let obj = surrogate(&eta, &theta);
        if !obj.is_finite() {
            return Err(Error::Domain {
                family: family.name(),
                index: 0,
                eta: f64::NAN,
            });
        }
        let (mut grad, mut neg) = prob.derivatives(family, &eta);
        for k in 0..active.len() {
            grad[k] -= n * w[k] * theta[k];
            neg[(k, k)] += n * w[k];
        }
        let (step, _) = solve_spd(neg, &grad)?;

        let mut scale = 1.0;
        let mut trial = theta.clone();
        let mut accepted = false;
        for _ in 0..=10 {
            for k in 0..trial.len() {
                trial[k] = theta[k] + scale * step[k];
            }
            prob.eta_into(&trial, &mut trial_eta);
            let cand = surrogate(&trial_eta, &trial);
            if cand.is_finite() && cand >= obj - 1e-12 * (1.0 + obj.abs()) {
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        let max_step = step.iter().map(|s| (s * scale).abs()).fold(0.0, f64::max);
        let mut newly_zeroed = false;
        for (k, &j) in active.iter().enumerate() {
            beta[j] = trial[k];
            if penalized[j] && beta[j].abs() <= ZERO_THRESHOLD {
                beta[j] = 0.0;
                zero[j] = true;
                newly_zeroed = true;
            }
        }
        if !newly_zeroed && max_step < LQA_TOL {
            converged = true;
            break;
        }
    }
    Ok(BetaFit {
        beta,
        zero_mask: zero,
        iterations,
        converged,
    })
}

/// Unpenalized fit: `alpha~` from joint local fits, then `beta_u` by global
/// Newton with sandwich standard errors.
pub fn fit_unpenalized(data: &Dataset, family: Family, kernel: &KernelSpec) -> Result<UnpenalizedFit> {
    Ok(SemiEstimator::new(data, family, kernel, BackfitOptions::default())?.unpen)
}

/// Penalized fit at given `lambda_j` from `beta_init` (default `beta_u`).
pub fn fit_penalized(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    kind: PenaltyKind,
    lambda: Vec<f64>,
    beta_init: Option<&[f64]>,
) -> Result<SemiFit> {
    let est = SemiEstimator::new(data, family, kernel, BackfitOptions::default())?;
    let spec = PenaltySpec::new(kind, lambda)?;
    let init = beta_init.map_or_else(|| est.unpen.beta_u.clone(), <[f64]>::to_vec);
    let beta = lqa_maximize(data, family, &est.plugin.offset, &spec, &[], &init)
        .map_err(|e| Error::stage("penalized global fit", e))?;
    est.finish(&beta, &spec)
}

/// Sandwich covariance of the active coefficients of `fit`.
pub fn sandwich_cov(data: &Dataset, family: Family, fit: &SemiFit) -> Result<DMatrix<f64>> {
    let active = fit.active();
    if active.is_empty() {
        return Err(Error::InvalidArgument("no active coefficients".into()));
    }
    let spec = PenaltySpec::new(fit.penalty, fit.lambda_used.clone())?;
    BetaMatrices::at(data, family, &fit.plugin_offset, &fit.beta_hat, &active, &spec, &[])?.sandwich()
}

/// `tr[(l'' - n Sigma_lambda)^-1 l'']` on the active set.
pub fn effective_df(data: &Dataset, family: Family, fit: &SemiFit) -> Result<f64> {
    let active = fit.active();
    if active.is_empty() {
        return Ok(0.0);
    }
    let spec = PenaltySpec::new(fit.penalty, fit.lambda_used.clone())?;
    BetaMatrices::at(data, family, &fit.plugin_offset, &fit.beta_hat, &active, &spec, &[])?.effective_df()
}

/// `deviance / (n (1 - e/n)^2)`.
pub fn gcv_score(deviance: f64, effective: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if effective >= nf {
        return Err(Error::DegenerateFit { effective, n });
    }
    Ok(deviance.max(0.0) / (nf * (1.0 - effective / nf).powi(2)))
}

/// GCV search over scalar `lambda` (SE-scaled).
pub fn select_lambda(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    kind: PenaltyKind,
    grid: Option<&[f64]>,
) -> Result<LambdaSelection> {
    SemiEstimator::new(data, family, kernel, BackfitOptions::default())?.select_lambda(kind, grid)
}

/// Full pipeline: `alpha~`, penalized `beta^`, then `alpha^` at `beta^`.
pub fn backfit(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    kind: PenaltyKind,
    policy: &LambdaPolicy,
    opts: BackfitOptions,
) -> Result<SemiFit> {
    let est = SemiEstimator::new(data, family, kernel, opts)?;
    Ok(est.fit(kind, policy)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    /// Gaussian data with constant `alpha` so the model is linear.
    fn linear_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = beta.len();
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + dot(&z[i * d..(i + 1) * d], beta) + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::new(u, vec![1.0; n], 1, z, d, y).unwrap()
    }

    #[test]
    fn wide_bandwidth_reproduces_ols() {
        let data = linear_data(120, &[1.0, -0.5, 0.0], 3);
        // a uniform kernel covering all data gives flat weights, so every local
        // fit is OLS on (1, U, Z)
        let k = KernelSpec::new(crate::kernel::Kernel::Uniform, 10.0).unwrap();
        let fit = fit_unpenalized(&data, Family::Gaussian, &k).unwrap();
        let (n, d) = (data.n(), data.d());
        let x = DMatrix::from_fn(n, d + 2, |i, j| match j {
            0 => 1.0,
            1 => data.u()[i],
            _ => data.z_row(i)[j - 2],
        });
        let y = DVector::from_column_slice(data.y());
        let coef = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y));
        for j in 0..d {
            assert_abs_diff_eq!(fit.beta_u[j], coef[j + 2], epsilon = 1e-8);
        }
    }

    #[test]
    fn no_penalty_equals_unpenalized() {
        let data = linear_data(150, &[0.8, 0.0, 0.3], 5);
        let k = KernelSpec::epanechnikov(0.3).unwrap();
        let est = SemiEstimator::new(&data, Family::Gaussian, &k, BackfitOptions::default()).unwrap();
        let u = est.unpenalized().beta_u.clone();
        for kind in [PenaltyKind::None, PenaltyKind::scad(), PenaltyKind::L1] {
            let fit = est.penalized(kind, vec![0.0; 3]).unwrap();
            for j in 0..3 {
                assert_abs_diff_eq!(fit.beta_hat[j], u[j], epsilon = 1e-8);
            }
            assert_abs_diff_eq!(fit.effective_df, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let data = linear_data(150, &[0.8, 0.0, 0.3], 6);
        let k = KernelSpec::epanechnikov(0.3).unwrap();
        let fit = fit_penalized(&data, Family::Gaussian, &k, PenaltyKind::scad(), vec![1e6; 3], None).unwrap();
        assert!(fit.zero_mask.iter().all(|z| *z));
        assert!(fit.beta_hat.iter().all(|b| *b == 0.0));
        assert_eq!(fit.effective_df, 0.0);
        assert_abs_diff_eq!(fit.gcv, fit.deviance / 150.0, epsilon = 1e-12);
    }

    #[test]
    fn exempt_coefficients_survive() {
        let data = linear_data(150, &[0.8, 0.0, 0.3], 6);
        let k = KernelSpec::epanechnikov(0.3).unwrap();
        let opts = BackfitOptions {
            exempt: vec![false, false, true],
            ..Default::default()
        };
        let est = SemiEstimator::new(&data, Family::Gaussian, &k, opts).unwrap();
        let lam = est.scaled_lambda(1e6);
        assert_eq!(lam[2], 0.0);
        let fit = est.penalized(PenaltyKind::L1, lam).unwrap();
        assert_eq!(fit.zero_mask, vec![true, true, false]);
    }

    #[test]
    fn sandwich_matches_direct_formula() {
        let data = linear_data(100, &[0.5, 0.2], 8);
        let k = KernelSpec::epanechnikov(0.4).unwrap();
        let est = SemiEstimator::new(&data, Family::Gaussian, &k, BackfitOptions::default()).unwrap();
        let fit = est.unpenalized_fit().unwrap();
        let cov = sandwich_cov(&data, Family::Gaussian, &fit).unwrap();
        // direct: (Z'Z)^-1 (sum r_i^2 z z' - n rbar^2 ...) (Z'Z)^-1 with r at the plug-in
        let n = data.n();
        let z = DMatrix::from_fn(n, 2, |i, j| data.z_row(i)[j]);
        let eta = DVector::from_iterator(n, (0..n).map(|i| fit.plugin_offset[i] + dot(data.z_row(i), &fit.beta_hat)));
        let r = DVector::from_column_slice(data.y()) - eta;
        let psi = DMatrix::from_fn(n, 2, |i, j| r[i] * z[(i, j)]);
        let mean = psi.row_mean();
        let meat = psi.transpose() * &psi - mean.transpose() * mean * n as f64;
        let bread = (z.transpose() * &z).try_inverse().unwrap();
        let direct = &bread * meat * &bread;
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(cov[(r, c)], direct[(r, c)], epsilon = 1e-8 * direct.abs().max());
                assert_eq!(cov[(r, c)], cov[(c, r)]);
            }
        }
    }

    #[test]
    fn gcv_definition() {
        assert_eq!(gcv_score(0.0, 2.0, 10).unwrap(), 0.0);
        assert_eq!(gcv_score(5.0, 0.0, 10).unwrap(), 0.5);
        assert!(matches!(gcv_score(1.0, 10.0, 10), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn pure_varying_coefficient_model() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 100;
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = u.iter().map(|u| (3.0 * u).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::from_columns(u, &[vec![1.0; n]], &[], y).unwrap();
        let k = KernelSpec::epanechnikov(0.2).unwrap();
        let fit = backfit(&data, Family::Gaussian, &k, PenaltyKind::scad(), &LambdaPolicy::Gcv(None), BackfitOptions::default()).unwrap();
        assert!(fit.beta_hat.is_empty());
        assert_eq!(fit.alpha_curves.len(), 200);
        assert!(fit.deviance / (n as f64) < 0.05);
    }

    #[test]
    fn singleton_and_zero_grids() {
        let data = linear_data(120, &[0.6, 0.0], 9);
        let k = KernelSpec::epanechnikov(0.3).unwrap();
        let est = SemiEstimator::new(&data, Family::Gaussian, &k, BackfitOptions::default()).unwrap();
        let sel = est.select_lambda(PenaltyKind::scad(), Some(&[0.0])).unwrap();
        assert_eq!(sel.lambda_star, 0.0);
        assert_abs_diff_eq!(sel.fit.beta_hat[0], est.unpenalized().beta_u[0], epsilon = 1e-8);
        let sel = est.select_lambda(PenaltyKind::L1, Some(&[0.7])).unwrap();
        assert_eq!(sel.lambda_star, 0.7);
        assert!(est.select_lambda(PenaltyKind::L1, Some(&[])).is_err());
    }
}
