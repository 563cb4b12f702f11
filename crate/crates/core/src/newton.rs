//! Newton–Raphson with step-halving for weighted quasi-likelihood problems
//! `max_theta sum_i w_i Q(g^-1(o_i + D_i' theta), y_i)`.
//!
//! Shared by the local fits (kernel weights), the global fits over `beta`
//! (unit weights, plug-in offsets) and the pilot GLM.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::Family;

pub(crate) const RIDGE_TAU: f64 = 1e-8;

/// A weighted design with offsets; `design` is row-major with `k` columns.
#[derive(Debug, Clone, Default)]
pub(crate) struct Problem {
    pub k: usize,
    pub design: Vec<f64>,
    pub weight: Vec<f64>,
    pub offset: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            max_halvings: 10,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub ridge: bool,
}

impl Problem {
    pub fn with_capacity(k: usize, rows: usize) -> Self {
        Self {
            k,
            design: Vec::with_capacity(rows * k),
            weight: Vec::with_capacity(rows),
            offset: Vec::with_capacity(rows),
            y: Vec::with_capacity(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.k..(i + 1) * self.k]
    }

    pub fn eta_into(&self, theta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows()).map(|i| {
            self.offset[i] + self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// Weighted objective; `-inf` if some mean leaves the admissible range.
    pub fn objective(&self, family: Family, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .zip(&self.weight)
            .map(|((&e, &y), &w)| w * family.quasi(family.inv_link(e), y))
            .sum()
    }

    /// Gradient and negated Hessian of the objective.
    pub fn derivatives(&self, family: Family, eta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let mut grad = vec![0.0; k];
        let mut neg = vec![0.0; k * k];
        for i in 0..self.rows() {
            let row = self.row(i);
            let w = self.weight[i];
            let g = w * family.score(eta[i], self.y[i]);
            let c = -w * family.curvature(eta[i], self.y[i]);
            for a in 0..k {
                grad[a] += g * row[a];
                let ca = c * row[a];
                let base = a * k;
                for b in 0..=a {
                    neg[base + b] += ca * row[b];
                }
            }
        }
        let neg_hess = DMatrix::from_fn(k, k, |r, c| if c <= r { neg[r * k + c] } else { neg[c * k + r] });
        (DVector::from_vec(grad), neg_hess)
    }

    pub fn maximize(&self, family: Family, init: &[f64], opts: NewtonOptions) -> Result<NewtonOutcome> {
        let k = self.k;
        let mut theta = init.to_vec();
        let mut eta = Vec::with_capacity(self.rows());
        let mut trial_eta = Vec::with_capacity(self.rows());
        self.eta_into(&theta, &mut eta);
        let mut obj = self.objective(family, &eta);
        if !obj.is_finite() {
            return Err(Error::Domain {
                family: family.name(),
                index: 0,
                eta: eta.first().copied().unwrap_or(f64::NAN),
            });
        }
        let mut ridge = false;
        let mut trial = vec![0.0; k];
        for iter in 1..=opts.max_iter {
            let (grad, neg_hess) = self.derivatives(family, &eta);
            let (step, ridged) = solve_spd(neg_hess, &grad)?;
            ridge |= ridged;
            let converged = step
                .iter()
                .zip(&theta)
                .all(|(d, t)| d.abs() < opts.tol * (1.0 + t.abs()));

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                for j in 0..k {
                    trial[j] = theta[j] + scale * step[j];
                }
                self.eta_into(&trial, &mut trial_eta);
                let cand = self.objective(family, &trial_eta);
                if cand.is_finite() && cand >= obj - 1e-12 * (1.0 + obj.abs()) {
                    accepted = true;
                    obj = cand;
                    break;
                }
                scale *= 0.5;
            }
            if accepted {
                theta.copy_from_slice(&trial);
                std::mem::swap(&mut eta, &mut trial_eta);
            }
            if converged {
                return Ok(NewtonOutcome {
                    theta,
                    iterations: iter,
                    ridge,
                });
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NoConvergence {
            what: "Newton iteration",
            iterations: opts.max_iter,
        })
    }
}

/// Solves `A x = b` for symmetric positive definite `A`. On failure retries
/// with `tau * mean(diag A)` added to the diagonal and reports the ridge.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok((ch.solve(b), false));
    }
    let n = a.nrows();
    let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let bump = RIDGE_TAU * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut ridged = a;
    for i in 0..n {
        ridged[(i, i)] += bump;
    }
    Cholesky::new(ridged)
        .map(|ch| (ch.solve(b), true))
        .ok_or(Error::Singular("Hessian"))
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn inverse_spd(a: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Cholesky::new(a).map(|ch| ch.inverse()).ok_or(Error::Singular(what))
}
