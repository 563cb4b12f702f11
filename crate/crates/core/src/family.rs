//! Quasi-likelihood families.
//!
//! Each family pairs a link `g` with a variance function `V`. The
//! quasi-likelihood is kept in the normalized form `Q(y, y) = 0`, so the unit
//! deviance is simply `-2 Q(mu, y)`. Any dispersion is absorbed into `V`.
//!
//! The score and curvature in the linear predictor are
//!
//! ```text
//! q1(eta, y) = {y - g^-1(eta)} rho1(eta)
//! q2(eta, y) = {y - g^-1(eta)} rho1'(eta) - rho2(eta)
//! rho_l(eta) = {d g^-1(eta) / d eta}^l / V(g^-1(eta))
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOGIT_CLAMP: f64 = 30.0;
const LOG_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Identity link, `V(mu) = 1`.
    Gaussian,
    /// Log link, `V(mu) = mu`.
    Poisson,
    /// Logit link, `V(mu) = mu (1 - mu)`.
    Bernoulli,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Bernoulli => "bernoulli",
        }
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Poisson => mu.ln(),
            Family::Bernoulli => (mu / (1.0 - mu)).ln(),
        }
    }

    fn clamp_limit(self) -> f64 {
        match self {
            Family::Gaussian => f64::INFINITY,
            Family::Poisson => LOG_CLAMP,
            Family::Bernoulli => LOGIT_CLAMP,
        }
    }

    /// Whether `eta` lies outside the range the inverse link evaluates exactly.
    pub fn is_clamped(self, eta: f64) -> bool {
        eta.abs() > self.clamp_limit()
    }

    #[inline]
    fn clamp(self, eta: f64) -> f64 {
        let lim = self.clamp_limit();
        eta.clamp(-lim, lim)
    }

    #[inline]
    pub fn inv_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Poisson => self.clamp(eta).exp(),
            Family::Bernoulli => 1.0 / (1.0 + (-self.clamp(eta)).exp()),
        }
    }

    /// `d g^-1(eta) / d eta`.
    #[inline]
    pub fn dmu_deta(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => self.inv_link(eta),
            Family::Bernoulli => {
                let mu = self.inv_link(eta);
                mu * (1.0 - mu)
            }
        }
    }

    #[inline]
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => mu,
            Family::Bernoulli => mu * (1.0 - mu),
        }
    }

    /// `rho1(eta)`; every built-in link is canonical, so this is 1.
    #[inline]
    pub fn rho1(self, _eta: f64) -> f64 {
        1.0
    }

    #[inline]
    pub fn rho1_prime(self, _eta: f64) -> f64 {
        0.0
    }

    #[inline]
    pub fn rho2(self, eta: f64) -> f64 {
        let d = self.dmu_deta(eta);
        match self {
            Family::Gaussian => 1.0,
            // rho2 = mu'^2 / V reduces to mu' for the canonical links
            Family::Poisson | Family::Bernoulli => d,
        }
    }

    #[inline]
    pub fn score(self, eta: f64, y: f64) -> f64 {
        (y - self.inv_link(eta)) * self.rho1(eta)
    }

    #[inline]
    pub fn curvature(self, eta: f64, y: f64) -> f64 {
        (y - self.inv_link(eta)) * self.rho1_prime(eta) - self.rho2(eta)
    }

    /// Normalized quasi-likelihood `Q(mu, y) = int_y^mu (y - s) / V(s) ds`.
    /// Returns `-inf` when `mu` sits on a boundary of the mean range that the
    /// response rules out.
    #[inline]
    pub fn quasi(self, mu: f64, y: f64) -> f64 {
        match self {
            Family::Gaussian => -0.5 * (y - mu) * (y - mu),
            Family::Poisson => {
                if y > 0.0 {
                    if mu <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    (y - mu) - y * (y / mu).ln()
                } else {
                    -mu
                }
            }
            Family::Bernoulli => {
                let mut q = 0.0;
                if y > 0.0 {
                    if mu <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    q += y * (mu / y).ln();
                }
                if y < 1.0 {
                    if mu >= 1.0 {
                        return f64::NEG_INFINITY;
                    }
                    q += (1.0 - y) * ((1.0 - mu) / (1.0 - y)).ln();
                }
                q
            }
        }
    }

    #[inline]
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        -2.0 * self.quasi(mu, y)
    }

    /// Checks that `y` is an admissible response.
    pub fn check_response(self, y: &[f64]) -> Result<()> {
        let bad = match self {
            Family::Gaussian => None,
            Family::Poisson => y.iter().position(|&v| v < 0.0),
            Family::Bernoulli => y.iter().position(|&v| !(0.0..=1.0).contains(&v)),
        };
        match bad {
            Some(i) => Err(Error::InvalidData(format!(
                "response {} at row {i} is outside the support of the {} family",
                y[i],
                self.name()
            ))),
            None => Ok(()),
        }
    }

    /// Draws a response with mean `mu`; `scale` is the Gaussian standard deviation.
    pub fn sample<R: Rng + ?Sized>(self, mu: f64, scale: f64, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => {
                let e: f64 = StandardNormal.sample(rng);
                mu + scale * e
            }
            Family::Poisson => {
                if mu <= 0.0 {
                    0.0
                } else {
                    Poisson::new(mu).map(|dist| dist.sample(rng)).unwrap_or(mu.round())
                }
            }
            Family::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "poisson" => Ok(Family::Poisson),
            "bernoulli" | "binomial" | "logistic" => Ok(Family::Bernoulli),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// `sum_i Q(g^-1(eta_i), y_i)`.
pub fn quasi_loglik(family: Family, eta: &[f64], y: &[f64]) -> Result<f64> {
    if eta.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "eta has length {}, y has length {}",
            eta.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
        let q = family.quasi(family.inv_link(e), yi);
        if !q.is_finite() {
            return Err(Error::Domain {
                family: family.name(),
                index: i,
                eta: e,
            });
        }
        total += q;
    }
    Ok(total)
}

/// `sum_i D(y_i, mu_i) = sum_i -2 Q(mu_i, y_i)`.
pub fn deviance(family: Family, y: &[f64], mu: &[f64]) -> Result<f64> {
    if mu.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "mu has length {}, y has length {}",
            mu.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&m, &yi)) in mu.iter().zip(y).enumerate() {
        let dev = family.unit_deviance(yi, m);
        if !dev.is_finite() {
            return Err(Error::Domain {
                family: family.name(),
                index: i,
                eta: family.link(m),
            });
        }
        total += dev;
    }
    Ok(total.max(0.0))
}
