//! Sandwich and bootstrap standard errors, Wald intervals and the plug-in
//! comparison of the asymptotic variances of approaches A and B.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::censoring::{self, CensoringModel, CensoringSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{
    solve_workspace, subject_weights, Approach, CoefficientEstimate, FitWorkspace, SolveOptions, Theta,
};
use crate::linalg::{checked_inverse, sandwich, symmetrize};
use crate::rng::substream;

/// Largest tolerated fraction of failed bootstrap replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub b: usize,
    #[serde(default)]
    pub seed: u64,
    /// Keep the censoring model fitted on the full data instead of refitting
    /// it inside each resample.
    #[serde(default)]
    pub frozen_g: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SeMethod {
    Sandwich,
    Bootstrap(BootstrapSpec),
    Both(BootstrapSpec),
}

impl SeMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            SeMethod::Sandwich => Ok(()),
            SeMethod::Bootstrap(b) | SeMethod::Both(b) if b.b >= 1 => Ok(()),
            _ => Err(Error::ConfigInvalid("bootstrap needs B >= 1".into())),
        }
    }

    pub fn bootstrap(&self) -> Option<&BootstrapSpec> {
        match self {
            SeMethod::Sandwich => None,
            SeMethod::Bootstrap(b) | SeMethod::Both(b) => Some(b),
        }
    }

    pub fn wants_sandwich(&self) -> bool {
        !matches!(self, SeMethod::Bootstrap(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Sandwich,
    Bootstrap,
}

#[derive(Debug, Clone)]
pub struct InferenceSummary {
    pub covariance: DMatrix<f64>,
    pub se: Vec<f64>,
    pub method: SeKind,
    /// `-(1/n) dU/dtheta'` at the estimate (zero for bootstrap summaries).
    pub gamma_hat: DMatrix<f64>,
    /// `(1/n)` times the centered outer product of the score terms.
    pub sigma_hat: DMatrix<f64>,
    pub av_diff: Option<DMatrix<f64>>,
    /// Bootstrap replicates that failed and were dropped.
    pub dropped: usize,
}

fn se_from(cov: &DMatrix<f64>) -> Vec<f64> {
    cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// Centered sum of outer products of the rows of `terms`.
fn centered_outer(terms: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = terms.row_mean();
    let centered = DMatrix::from_fn(terms.nrows(), terms.ncols(), |i, j| terms[(i, j)] - mean[j]);
    symmetrize(&(centered.transpose() * &centered))
}

/// Sandwich covariance from a workspace already evaluated at the estimate.
pub fn sandwich_from_workspace(ws: &FitWorkspace) -> Result<InferenceSummary> {
    let n = ws.n() as f64;
    let jinv = checked_inverse(&ws.jacobian)?;
    let meat = centered_outer(&ws.terms);
    let covariance = sandwich(&jinv, &meat);
    Ok(InferenceSummary {
        se: se_from(&covariance),
        covariance,
        method: SeKind::Sandwich,
        gamma_hat: &ws.jacobian / n,
        sigma_hat: meat / n,
        av_diff: None,
        dropped: 0,
    })
}

pub fn sandwich_variance(
    approach: Approach,
    theta_hat: &Theta,
    t0: f64,
    dataset: &Dataset,
    g: &CensoringModel,
) -> Result<InferenceSummary> {
    let mut ws = FitWorkspace::new(approach, t0, dataset, g)?;
    ws.evaluate(&theta_hat.to_dvector());
    sandwich_from_workspace(&ws)
}

/// Bootstrap covariance of the estimate at `t0`. Subjects are resampled with
/// replacement; the censoring model is refitted in each resample unless
/// `spec.frozen_g`, in which case `frozen` (fitted on the full data) supplies
/// the weights.
pub fn bootstrap_se(
    approach: Approach,
    t0: f64,
    dataset: &Dataset,
    censoring_spec: &CensoringSpec,
    spec: &BootstrapSpec,
    frozen: Option<&CensoringModel>,
) -> Result<InferenceSummary> {
    if spec.b < 2 {
        return Err(Error::ConfigInvalid("bootstrap standard errors need B >= 2".into()));
    }
    let frozen_weights = if spec.frozen_g {
        let g = match frozen {
            Some(g) => g.clone(),
            None => censoring::fit(dataset, censoring_spec)?,
        };
        Some(subject_weights(approach, t0, dataset, &g))
    } else {
        None
    };
    let n = dataset.n();
    let fits: Vec<Option<Vec<f64>>> = (0..spec.b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(spec.seed, &[0x626f_6f74, t0.to_bits(), rep as u64]);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = dataset.subset(&idx);
            let ws = match &frozen_weights {
                Some(w) => FitWorkspace::with_weights(approach, t0, &sample, idx.iter().map(|&i| w[i]).collect()),
                None => censoring::fit(&sample, censoring_spec)
                    .and_then(|g| FitWorkspace::new(approach, t0, &sample, &g)),
            };
            let mut ws = ws.ok()?;
            solve_workspace(&mut ws, &SolveOptions::default()).ok().map(|e| e.theta.to_vec())
        })
        .collect();
    let kept: Vec<Vec<f64>> = fits.into_iter().flatten().collect();
    let dropped = spec.b - kept.len();
    if dropped as f64 > MAX_FAILURE_FRACTION * spec.b as f64 || kept.len() < 2 {
        return Err(Error::TooManyFailures { dropped, total: spec.b });
    }
    if dropped > 0 {
        log::warn!("t0 = {t0}: dropped {dropped} of {} bootstrap replicates", spec.b);
    }
    let covariance = sample_covariance(&kept);
    let d = covariance.nrows();
    Ok(InferenceSummary {
        se: se_from(&covariance),
        covariance,
        method: SeKind::Bootstrap,
        gamma_hat: DMatrix::zeros(d, d),
        sigma_hat: DMatrix::zeros(d, d),
        av_diff: None,
        dropped,
    })
}

/// Unbiased sample covariance of a list of vectors.
pub fn sample_covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let k = rows.len();
    let d = rows[0].len();
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= k as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    symmetrize(&(cov / (k as f64 - 1.0)))
}

/// Plug-in estimate of `AV_A - AV_B` at a common `theta`, divided by `n`.
#[derive(Debug, Clone)]
pub struct AvDifference {
    /// `Gamma_A^{-1} (Sigma_A - Sigma_B) Gamma_A^{-T} / n`.
    pub diff: DMatrix<f64>,
    pub gamma_a: DMatrix<f64>,
    pub gamma_b: DMatrix<f64>,
    pub sigma_a: DMatrix<f64>,
    pub sigma_b: DMatrix<f64>,
}

fn uncentered_second_moment(terms: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(terms.transpose() * terms)) / terms.nrows() as f64
}

/// Positive diagonal entries mean approach B is the more efficient one.
pub fn av_difference(theta_hat: &Theta, t0: f64, dataset: &Dataset, g: &CensoringModel) -> Result<AvDifference> {
    let th = theta_hat.to_dvector();
    let n = dataset.n() as f64;
    let mut wa = FitWorkspace::new(Approach::A, t0, dataset, g)?;
    wa.evaluate(&th);
    let mut wb = FitWorkspace::with_weights(Approach::B, t0, dataset, wa.weights.clone())?;
    wb.evaluate(&th);
    let gamma_a = &wa.jacobian / n;
    let gamma_b = &wb.jacobian / n;
    let sigma_a = uncentered_second_moment(&wa.terms);
    let sigma_b = uncentered_second_moment(&wb.terms);
    let ginv = checked_inverse(&gamma_a)?;
    let diff = sandwich(&ginv, &(&sigma_a - &sigma_b)) / n;
    Ok(AvDifference { diff, gamma_a, gamma_b, sigma_a, sigma_b })
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 * (1.0 + level))
}

/// Wald intervals `theta_j -/+ z se_j`.
pub fn wald_ci(estimate: &Theta, se: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::ConfigInvalid(format!("confidence level {level} not in (0, 1)")));
    }
    let z = normal_quantile(level);
    Ok(estimate.to_vec().iter().zip(se).map(|(t, s)| (t - z * s, t + z * s)).collect())
}

/// Attaches a sandwich covariance to a converged estimate.
pub fn with_sandwich(mut est: CoefficientEstimate, ws: &FitWorkspace) -> Result<CoefficientEstimate> {
    est.covariance = Some(sandwich_from_workspace(ws)?.covariance);
    Ok(est)
}
