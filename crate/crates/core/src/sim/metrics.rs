//! Error metrics and small summary statistics.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::local::CoefficientCurves;
use crate::sim::expr::CoefFn;

/// Root average squared error of the curves against the truth over their grid.
pub fn rase(curves: &CoefficientCurves, truth: &[CoefFn]) -> f64 {
    let m = curves.len();
    if m == 0 {
        return 0.0;
    }
    let sum: f64 = curves
        .grid
        .iter()
        .zip(&curves.values)
        .map(|(&u, row)| row.iter().zip(truth).map(|(a, f)| (a - f.eval(u)).powi(2)).sum::<f64>())
        .sum();
    (sum / m as f64).sqrt()
}

/// `(beta_hat - beta)' Sigma (beta_hat - beta)`.
pub fn gmse(beta_hat: &[f64], beta_true: &[f64], sigma_z: &DMatrix<f64>) -> Result<f64> {
    let d = beta_true.len();
    if beta_hat.len() != d || sigma_z.nrows() != d || sigma_z.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "gmse: beta_hat has length {}, beta_true {d}, sigma_z is {}x{}",
            beta_hat.len(),
            sigma_z.nrows(),
            sigma_z.ncols()
        )));
    }
    let e = DVector::from_iterator(d, beta_hat.iter().zip(beta_true).map(|(a, b)| a - b));
    Ok((e.transpose() * sigma_z * &e)[(0, 0)].max(0.0))
}

/// Median after sorting; `NaN` for an empty slice.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Median absolute deviation divided by 0.6745.
pub fn mad_scaled(xs: &[f64]) -> f64 {
    let med = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    median(&dev) / 0.6745
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Kolmogorov–Smirnov distance between the sample ECDF and chi-square(df).
pub fn ks_chi_square(sample: &[f64], df: f64) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(format!("chi-square df {df}: {e}")))?;
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let mut ks: f64 = 0.0;
    for (k, &x) in v.iter().enumerate() {
        let f = dist.cdf(x.max(0.0));
        ks = ks.max((f - k as f64 / m).abs()).max(((k + 1) as f64 / m - f).abs());
    }
    Ok(ks)
}

/// Average ranks, ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && xs[idx[end + 1]] == xs[idx[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=end] {
            r[i] = avg;
        }
        k = end + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Upper `level` quantile of a sample (the `ceil((1 - level) m)`-th order statistic).
pub fn upper_quantile(sample: &[f64], level: f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let k = (((1.0 - level) * m as f64).ceil() as usize).clamp(1, m);
    v[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curves_with_offset(off: &[f64], truth: &[CoefFn]) -> CoefficientCurves {
        let grid: Vec<f64> = (0..50).map(|k| k as f64 / 49.0).collect();
        let values = grid
            .iter()
            .map(|&u| truth.iter().zip(off).map(|(f, o)| f.eval(u) + o).collect())
            .collect();
        CoefficientCurves {
            derivatives: vec![vec![0.0; truth.len()]; grid.len()],
            grid,
            values,
        }
    }

    #[test]
    fn rase_examples() {
        let truth = vec![CoefFn::parse("sin(u)").unwrap(), CoefFn::parse("u^2").unwrap()];
        assert_eq!(rase(&curves_with_offset(&[0.0, 0.0], &truth), &truth), 0.0);
        assert_abs_diff_eq!(rase(&curves_with_offset(&[-0.7, 0.0], &truth), &truth), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(rase(&curves_with_offset(&[0.3, 0.4], &truth), &truth), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gmse_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(gmse(&[1.0, 1.0], &[0.0, 0.0], &s).unwrap(), 3.0);
        assert_eq!(gmse(&[0.2, 0.1], &[0.2, 0.1], &s).unwrap(), 0.0);
        let i = DMatrix::identity(3, 3);
        assert_abs_diff_eq!(gmse(&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0], &i).unwrap(), 9.0, epsilon = 1e-12);
        assert!(gmse(&[1.0], &[0.0, 0.0], &s).is_err());
    }

    #[test]
    fn summaries() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_abs_diff_eq!(mad_scaled(&[1.0, 2.0, 3.0, 4.0, 100.0]), 1.0 / 0.6745, epsilon = 1e-12);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]), 1.0);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 1.0, 2.0]), 0.7745966692414834, epsilon = 1e-12);
        assert_eq!(upper_quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 3.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let dist = ChiSquared::new(4.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let sample: Vec<f64> = (1..1000).map(|k| dist.inverse_cdf(k as f64 / 1000.0)).collect();
        assert!(ks_chi_square(&sample, 4.0).unwrap() < 0.002);
        assert!(ks_chi_square(&sample, 8.0).unwrap() > 0.2);
    }
}
