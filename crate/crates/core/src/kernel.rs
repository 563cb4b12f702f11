//! Smoothing kernels and their moment constants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric, nonnegative kernel on `[-support, support]` integrating to one.
#[derive(Clone)]
pub enum Kernel {
    Epanechnikov,
    Biweight,
    Triweight,
    Triangular,
    Uniform,
    Custom(CustomKernel),
}

#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    support: f64,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomKernel {
    /// Wraps a user kernel. Shape requirements (symmetry, nonnegativity, unit
    /// mass) are checked numerically.
    pub fn new(name: impl Into<String>, support: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let name = name.into();
        if !(support.is_finite() && support > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel `{name}` needs a finite positive support")));
        }
        let kernel = Self {
            name,
            support,
            f: Arc::new(f),
        };
        for k in 0..=64 {
            let t = support * k as f64 / 64.0;
            let (a, b) = ((kernel.f)(t), (kernel.f)(-t));
            if !(a >= 0.0 && b >= 0.0) || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "kernel `{}` must be symmetric and nonnegative (fails at t = {t})",
                    kernel.name
                )));
            }
        }
        let mass = integrate(&*kernel.f, -support, support, &kernel.name)?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "kernel `{}` integrates to {mass}, not 1",
                kernel.name
            )));
        }
        Ok(kernel)
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Kernel::Custom(a), Kernel::Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl Kernel {
    pub fn name(&self) -> &str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
            Kernel::Triweight => "triweight",
            Kernel::Triangular => "triangular",
            Kernel::Uniform => "uniform",
            Kernel::Custom(c) => &c.name,
        }
    }

    /// Half-width of the support in standardized units.
    pub fn support(&self) -> f64 {
        match self {
            Kernel::Custom(c) => c.support,
            _ => 1.0,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let s = 1.0 - t * t;
        match self {
            Kernel::Epanechnikov => 0.75 * s.max(0.0),
            Kernel::Biweight => {
                let s = s.max(0.0);
                0.9375 * s * s
            }
            Kernel::Triweight => {
                let s = s.max(0.0);
                1.09375 * s * s * s
            }
            Kernel::Triangular => (1.0 - t.abs()).max(0.0),
            Kernel::Uniform => {
                if t.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Custom(c) => {
                if t.abs() <= c.support {
                    (c.f)(t)
                } else {
                    0.0
                }
            }
        }
    }

    /// Kernel constants, in closed form for the built-ins.
    pub fn constants(&self) -> Result<KernelConstants> {
        let (k0, nu0, mu2) = match self {
            Kernel::Epanechnikov => (0.75, 0.6, 0.2),
            Kernel::Biweight => (15.0 / 16.0, 5.0 / 7.0, 1.0 / 7.0),
            Kernel::Triweight => (35.0 / 32.0, 350.0 / 429.0, 1.0 / 9.0),
            Kernel::Triangular => (1.0, 2.0 / 3.0, 1.0 / 6.0),
            Kernel::Uniform => (0.5, 0.5, 1.0 / 3.0),
            Kernel::Custom(_) => return self.quadrature_constants(),
        };
        Ok(KernelConstants::from_parts(k0, 1.0, mu2, nu0))
    }

    /// Kernel constants by adaptive quadrature (absolute tolerance 1e-10).
    pub fn quadrature_constants(&self) -> Result<KernelConstants> {
        let s = self.support();
        let name = self.name();
        // the kernels may have a kink at 0, so integrate each half separately
        let both = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
            Ok(integrate(g, -s, 0.0, name)? + integrate(g, 0.0, s, name)?)
        };
        let mu0 = both(&|t| self.eval(t))?;
        let mu2 = both(&|t| t * t * self.eval(t))?;
        let nu0 = both(&|t| self.eval(t).powi(2))?;
        Ok(KernelConstants::from_parts(self.eval(0.0), mu0, mu2, nu0))
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            "triweight" => Ok(Kernel::Triweight),
            "triangular" => Ok(Kernel::Triangular),
            "uniform" | "box" => Ok(Kernel::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Moment constants of a kernel `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `K(0)`.
    pub k0: f64,
    /// `int K`.
    pub mu0: f64,
    /// `int t^2 K(t) dt`.
    pub mu2: f64,
    /// `int K^2`.
    pub nu0: f64,
    /// `int (K * K)`, equal to `(int K)^2`.
    pub conv_mass: f64,
    /// `{K(0) - nu0 / 2} / {int K - int (K * K) / 2}`.
    pub r_k: f64,
}

impl KernelConstants {
    fn from_parts(k0: f64, mu0: f64, mu2: f64, nu0: f64) -> Self {
        let conv_mass = mu0 * mu0;
        Self {
            k0,
            mu0,
            mu2,
            nu0,
            conv_mass,
            r_k: (k0 - 0.5 * nu0) / (mu0 - 0.5 * conv_mass),
        }
    }
}

/// A kernel together with a bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    kernel: Kernel,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { kernel, bandwidth })
    }

    pub fn epanechnikov(bandwidth: f64) -> Result<Self> {
        Self::new(Kernel::Epanechnikov, bandwidth)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.kernel.clone(), bandwidth)
    }

    /// `K_h(t) = K(t / h) / h`.
    #[inline]
    pub fn scaled(&self, t: f64) -> f64 {
        self.kernel.eval(t / self.bandwidth) / self.bandwidth
    }

    /// Half-width of the window `K_h` is nonzero on.
    pub fn half_width(&self) -> f64 {
        self.kernel.support() * self.bandwidth
    }
}

/// Kernel constants `k0`, `nu0`, `mu2`, `r_K` (closed form or quadrature).
pub fn kernel_constants(kernel: &KernelSpec) -> Result<KernelConstants> {
    kernel.kernel.constants()
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature with Richardson correction.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, name: &str) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = simpson(f, a, b, fa, fm, fb, whole, QUAD_TOL, QUAD_MAX_DEPTH)
        .ok_or_else(|| Error::Quadrature(name.to_string()))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Quadrature(name.to_string()))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}
