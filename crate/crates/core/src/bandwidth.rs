//! K-fold cross-validated bandwidth selection.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{BackfitOptions, SemiEstimator};
use crate::family::Family;
use crate::kernel::{Kernel, KernelSpec};
use crate::sim::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub h_star: f64,
    pub h_grid: Vec<f64>,
    /// Summed held-out deviance per bandwidth; `None` when some fold failed.
    pub cv_scores: Vec<Option<f64>>,
    pub k_folds: usize,
}

/// Fold label of every observation: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub fn fold_labels(n: usize, k_folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, 0));
    let mut labels = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        labels[i] = pos % k_folds;
    }
    labels
}

/// Held-out deviance of the unpenalized semiparametric fit trained without `fold`.
fn fold_deviance(
    data: &Dataset,
    family: Family,
    kernel: &KernelSpec,
    labels: &[usize],
    fold: usize,
    opts: &BackfitOptions,
) -> Result<f64> {
    let train_idx: Vec<usize> = (0..data.n()).filter(|&i| labels[i] != fold).collect();
    let train = data.select_rows(&train_idx)?;
    let est = SemiEstimator::new(&train, family, kernel, opts.clone())?;
    let fit = est.unpenalized_fit()?;
    let mut dev = 0.0;
    for i in (0..data.n()).filter(|&i| labels[i] == fold) {
        let alpha = fit.alpha_curves.interpolate(data.u()[i]);
        let eta: f64 = data.x_row(i).iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>()
            + data.z_row(i).iter().zip(&fit.beta_hat).map(|(z, b)| z * b).sum::<f64>();
        let d = family.unit_deviance(data.y()[i], family.inv_link(eta));
        if !d.is_finite() {
            return Err(Error::Domain {
                family: family.name(),
                index: i,
                eta,
            });
        }
        dev += d;
    }
    Ok(dev)
}

/// Picks `h` from `h_grid` minimizing the K-fold cross-validated deviance.
pub fn select_bandwidth_cv(
    data: &Dataset,
    family: Family,
    kernel: &Kernel,
    h_grid: &[f64],
    k_folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if h_grid.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    if k_folds < 2 || k_folds > data.n() {
        return Err(Error::InvalidArgument(format!(
            "k_folds must lie in [2, n = {}], got {k_folds}",
            data.n()
        )));
    }
    let specs = h_grid
        .iter()
        .map(|&h| KernelSpec::new(kernel.clone(), h))
        .collect::<Result<Vec<_>>>()?;
    let labels = fold_labels(data.n(), k_folds, seed);
    let opts = BackfitOptions::default();
    let cells: Vec<(usize, usize)> = (0..h_grid.len())
        .flat_map(|a| (0..k_folds).map(move |f| (a, f)))
        .collect();
    let devs: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(a, f)| fold_deviance(data, family, &specs[a], &labels, f, &opts).ok())
        .collect();
    let cv_scores: Vec<Option<f64>> = (0..h_grid.len())
        .map(|a| devs[a * k_folds..(a + 1) * k_folds].iter().copied().sum::<Option<f64>>())
        .collect();
    let mut best: Option<usize> = None;
    for (a, s) in cv_scores.iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|b| *s < cv_scores[b].unwrap() || (*s == cv_scores[b].unwrap() && h_grid[a] < h_grid[b])) {
                best = Some(a);
            }
        }
    }
    let best = best.ok_or_else(|| Error::AllFailed("every bandwidth produced a failed fit; widen the grid".into()))?;
    Ok(CvResult {
        h_star: h_grid[best],
        h_grid: h_grid.to_vec(),
        cv_scores,
        k_folds,
    })
}
