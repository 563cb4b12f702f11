//! Penalty functions `p_lambda(|beta|)` and their local quadratic approximation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with `|beta| <= ZERO_THRESHOLD` are set to zero by the LQA iteration.
pub const ZERO_THRESHOLD: f64 = 1e-8;
pub const SCAD_DEFAULT_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad { a: f64 },
    L1,
    Lq { q: f64 },
    L0,
    None,
}

impl PenaltyKind {
    pub fn scad() -> Self {
        PenaltyKind::Scad { a: SCAD_DEFAULT_A }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            PenaltyKind::Scad { a } if !(a > 2.0) => {
                Err(Error::InvalidArgument(format!("SCAD shape a must exceed 2, got {a}")))
            }
            PenaltyKind::Lq { q } if !(q > 0.0 && q < 1.0) => {
                Err(Error::InvalidArgument(format!("Lq exponent must lie in (0, 1), got {q}")))
            }
            k => Ok(k),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::L1 => "l1",
            PenaltyKind::Lq { .. } => "lq",
            PenaltyKind::L0 => "l0",
            PenaltyKind::None => "none",
        }
    }

    /// `p_lambda(beta)` for `beta >= 0`.
    pub fn value(self, lambda: f64, beta: f64) -> f64 {
        let beta = beta.abs();
        if beta == 0.0 || lambda == 0.0 {
            return 0.0;
        }
        match self {
            PenaltyKind::Scad { a } => {
                if beta <= lambda {
                    lambda * beta
                } else if beta <= a * lambda {
                    -(beta * beta - 2.0 * a * lambda * beta + lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    0.5 * (a + 1.0) * lambda * lambda
                }
            }
            PenaltyKind::L1 => lambda * beta,
            PenaltyKind::Lq { q } => lambda * beta.powf(q),
            PenaltyKind::L0 => 0.5 * lambda * lambda,
            PenaltyKind::None => 0.0,
        }
    }

    /// `p'_lambda(beta)` for `beta > 0`.
    pub fn deriv(self, lambda: f64, beta: f64) -> Result<f64> {
        let beta = beta.abs();
        Ok(match self {
            PenaltyKind::Scad { a } => {
                if beta <= lambda {
                    lambda
                } else {
                    (a * lambda - beta).max(0.0) / (a - 1.0)
                }
            }
            PenaltyKind::L1 => lambda,
            PenaltyKind::Lq { q } => lambda * q * beta.powf(q - 1.0),
            PenaltyKind::L0 => return Err(Error::UnsupportedPenalty),
            PenaltyKind::None => 0.0,
        })
    }

    /// LQA weight `p'_lambda(|beta0|) / |beta0|`.
    pub fn lqa_weight(self, lambda: f64, beta0: f64) -> Result<f64> {
        let b = beta0.abs();
        if b <= ZERO_THRESHOLD {
            return Err(Error::BelowThreshold(b));
        }
        Ok(self.deriv(lambda, b)? / b)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyKind::Scad { a } => write!(f, "scad(a = {a})"),
            PenaltyKind::Lq { q } => write!(f, "lq(q = {q})"),
            k => f.write_str(k.label()),
        }
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyKind::scad()),
            "l1" | "lasso" => Ok(PenaltyKind::L1),
            "l0" => Ok(PenaltyKind::L0),
            "none" => Ok(PenaltyKind::None),
            "lq" | "bridge" => Ok(PenaltyKind::Lq { q: 0.5 }),
            other => Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        }
    }
}

/// A penalty kind with per-coefficient regularization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: Vec<f64>) -> Result<Self> {
        let kind = kind.validate()?;
        if let Some(bad) = lambda.iter().find(|l| !(**l >= 0.0) || l.is_infinite()) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {bad}")));
        }
        Ok(Self { kind, lambda })
    }

    /// Scalar `lambda` broadcast over `d` coefficients.
    pub fn broadcast(kind: PenaltyKind, lambda: f64, d: usize) -> Result<Self> {
        Self::new(kind, vec![lambda; d])
    }

    pub fn none(d: usize) -> Self {
        Self {
            kind: PenaltyKind::None,
            lambda: vec![0.0; d],
        }
    }

    pub fn value(&self, j: usize, beta: f64) -> f64 {
        self.kind.value(self.lambda[j], beta)
    }

    pub fn total(&self, beta: &[f64]) -> f64 {
        beta.iter().enumerate().map(|(j, &b)| self.value(j, b)).sum()
    }

    pub fn deriv(&self, j: usize, beta: f64) -> Result<f64> {
        self.kind.deriv(self.lambda[j], beta)
    }

    pub fn lqa_weight(&self, j: usize, beta0: f64) -> Result<f64> {
        self.kind.lqa_weight(self.lambda[j], beta0)
    }
}

/// `p_lambda(beta)` for one coefficient.
pub fn penalty_value(kind: PenaltyKind, lambda: f64, beta: f64) -> f64 {
    kind.value(lambda, beta)
}

/// `p'_lambda(beta)` for one coefficient.
pub fn penalty_deriv(kind: PenaltyKind, lambda: f64, beta: f64) -> Result<f64> {
    kind.deriv(lambda, beta)
}

/// `p'_lambda(|beta0|) / |beta0|`.
pub fn lqa_weight(kind: PenaltyKind, lambda: f64, beta0: f64) -> Result<f64> {
    kind.lqa_weight(lambda, beta0)
}
