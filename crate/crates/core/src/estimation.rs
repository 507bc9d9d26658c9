//! IPCW weights, estimating functions and the Newton solver for `theta(t0)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::censoring::{CensoringModel, Query};
use crate::data::{risk_indicator, Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, MAX_CONDITION};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 20;
const DIVERGENCE_NORM: f64 = 50.0;

/// Estimating function.
///
/// `Im` weights the full residual with strict-inequality weights and keeps
/// every subject regardless of `V`. `A` weights the full residual and drops
/// subjects with `V > t0`. `B` weights only the observed response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Im,
    A,
    B,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Im, Approach::A, Approach::B];

    pub fn label(self) -> &'static str {
        match self {
            Approach::Im => "im",
            Approach::A => "a",
            Approach::B => "b",
        }
    }

    pub fn uses_risk_set(self) -> bool {
        !matches!(self, Approach::Im)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "im" => Ok(Approach::Im),
            "a" => Ok(Approach::A),
            "b" => Ok(Approach::B),
            other => Err(Error::ConfigInvalid(format!("unknown approach '{other}'"))),
        }
    }
}

/// Intercept and slopes at one analysis age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn zeros(p: usize) -> Self {
        Theta { alpha: 0.0, beta: vec![0.0; p] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Theta { alpha: v[0], beta: v[1..].to_vec() }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + 1);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Inverse logit of a linear predictor without overflow.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_prob(theta: &Theta, z: &[f64]) -> f64 {
    expit(theta.linear_predictor(z))
}

/// Weight for approaches A and B: `I(U <= t0) delta / G(U) + I(U > t0) / G(t0)`.
pub fn ipcw_weight(record: &SubjectRecord, t0: f64, g: &CensoringModel, index: Option<usize>) -> f64 {
    let q = Query { z: &record.z, v: record.v, subject: index };
    if record.u <= t0 {
        if record.is_event() {
            1.0 / g.survival_at(record.u, &q)
        } else {
            0.0
        }
    } else {
        1.0 / g.survival_at(t0, &q)
    }
}

/// Weight for the Im et al. function: `I(U < t0) delta / G(U) + I(U >= t0) / G(t0)`.
pub fn ipcw_weight_im(record: &SubjectRecord, t0: f64, g: &CensoringModel, index: Option<usize>) -> f64 {
    let q = Query { z: &record.z, v: record.v, subject: index };
    if record.u < t0 {
        if record.is_event() {
            1.0 / g.survival_at(record.u, &q)
        } else {
            0.0
        }
    } else {
        1.0 / g.survival_at(t0, &q)
    }
}

/// Per-subject weights for `approach`, zero for subjects outside the risk set.
/// Training subjects are queried by index so forests can use out-of-bag trees.
pub fn subject_weights(approach: Approach, t0: f64, dataset: &Dataset, g: &CensoringModel) -> Vec<f64> {
    dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| match approach {
            Approach::Im => ipcw_weight_im(r, t0, g, Some(i)),
            _ if !risk_indicator(r, t0) => 0.0,
            _ => ipcw_weight(r, t0, g, Some(i)),
        })
        .collect()
}

/// Weights, risk indicators and per-subject score terms for one
/// `(approach, t0)` pair. `terms` row `i` is subject `i`'s contribution and
/// `jacobian` is minus the derivative of the summed score, both at the
/// `theta` most recently passed to [`FitWorkspace::evaluate`].
#[derive(Debug, Clone)]
pub struct FitWorkspace {
    pub approach: Approach,
    pub t0: f64,
    pub weights: Vec<f64>,
    pub at_risk: Vec<bool>,
    pub terms: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
    response: Vec<f64>,
    design: DMatrix<f64>,
}

impl FitWorkspace {
    pub fn new(approach: Approach, t0: f64, dataset: &Dataset, g: &CensoringModel) -> Result<Self> {
        let weights = subject_weights(approach, t0, dataset, g);
        Self::with_weights(approach, t0, dataset, weights)
    }

    /// Workspace with externally supplied weights (for example, a censoring
    /// model frozen across bootstrap resamples).
    pub fn with_weights(approach: Approach, t0: f64, dataset: &Dataset, mut weights: Vec<f64>) -> Result<Self> {
        let n = dataset.n();
        let d = dataset.p() + 1;
        if weights.len() != n {
            return Err(Error::ConfigInvalid(format!("{} weights for {} subjects", weights.len(), n)));
        }
        let at_risk: Vec<bool> = dataset
            .records()
            .iter()
            .map(|r| !approach.uses_risk_set() || risk_indicator(r, t0))
            .collect();
        if !at_risk.iter().any(|&a| a) {
            return Err(Error::NoAtRiskSubjects(t0));
        }
        for (w, &a) in weights.iter_mut().zip(&at_risk) {
            if !a {
                *w = 0.0;
            }
        }
        let response = dataset
            .records()
            .iter()
            .map(|r| {
                let observed = match approach {
                    Approach::Im => r.u < t0,
                    _ => r.u <= t0,
                };
                if observed && r.is_event() {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let design = DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { dataset.records()[i].z[j - 1] });
        let observed = dataset.observed_event_count(t0);
        if observed < d {
            log::warn!("t0 = {t0}: only {observed} observed events for {d} parameters");
        }
        Ok(FitWorkspace {
            approach,
            t0,
            weights,
            at_risk,
            terms: DMatrix::zeros(n, d),
            jacobian: DMatrix::zeros(d, d),
            response,
            design,
        })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Fills `terms` and `jacobian` at `theta` and returns the summed score.
    pub fn evaluate(&mut self, theta: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        self.jacobian.fill(0.0);
        for i in 0..self.n() {
            if !self.at_risk[i] {
                for j in 0..d {
                    self.terms[(i, j)] = 0.0;
                }
                continue;
            }
            let mut eta = 0.0;
            for j in 0..d {
                eta += self.design[(i, j)] * theta[j];
            }
            let p = expit(eta);
            let w = self.weights[i];
            let y = self.response[i];
            let (resid, curv) = match self.approach {
                Approach::Im | Approach::A => (w * (y - p), w * p * (1.0 - p)),
                Approach::B => (y * w - p, p * (1.0 - p)),
            };
            for j in 0..d {
                let xj = self.design[(i, j)];
                self.terms[(i, j)] = xj * resid;
                if curv != 0.0 {
                    for k in 0..=j {
                        self.jacobian[(j, k)] += xj * self.design[(i, k)] * curv;
                    }
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                self.jacobian[(k, j)] = self.jacobian[(j, k)];
            }
        }
        DVector::from_iterator(d, (0..d).map(|j| self.terms.column(j).iter().sum()))
    }
}

/// Summed estimating function at `theta` and the workspace holding its terms.
pub fn score(
    approach: Approach,
    theta: &Theta,
    t0: f64,
    dataset: &Dataset,
    g: &CensoringModel,
) -> Result<(DVector<f64>, FitWorkspace)> {
    let mut ws = FitWorkspace::new(approach, t0, dataset, g)?;
    let s = ws.evaluate(&theta.to_dvector());
    Ok((s, ws))
}

/// Minus the derivative of the estimating function with respect to `theta`.
pub fn jacobian(
    approach: Approach,
    theta: &Theta,
    t0: f64,
    dataset: &Dataset,
    g: &CensoringModel,
) -> Result<DMatrix<f64>> {
    Ok(score(approach, theta, t0, dataset, g)?.1.jacobian)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: Option<Theta>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, init: None }
    }
}

/// Fitted coefficients at one analysis age.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub t0: f64,
    pub approach: Approach,
    pub theta: Theta,
    pub covariance: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub final_score_norm: f64,
}

impl CoefficientEstimate {
    pub fn se(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }
}

pub fn solve(
    approach: Approach,
    t0: f64,
    dataset: &Dataset,
    g: &CensoringModel,
    opts: &SolveOptions,
) -> Result<CoefficientEstimate> {
    let mut ws = FitWorkspace::new(approach, t0, dataset, g)?;
    solve_workspace(&mut ws, opts)
}

/// Newton-Raphson with step halving on a prepared workspace. On success the
/// workspace holds terms and Jacobian at the returned estimate.
pub fn solve_workspace(ws: &mut FitWorkspace, opts: &SolveOptions) -> Result<CoefficientEstimate> {
    let d = ws.dim();
    let mut theta = match &opts.init {
        Some(t) if t.dim() == d => t.to_dvector(),
        Some(t) => {
            return Err(Error::ConfigInvalid(format!("initial value has dimension {}, expected {d}", t.dim())));
        }
        None => DVector::zeros(d),
    };
    let mut s = ws.evaluate(&theta);
    let mut norm = s.amax();
    let mut iterations = 0;
    let (t0, approach) = (ws.t0, ws.approach);
    let estimate = |theta: &DVector<f64>, converged, iterations, norm| CoefficientEstimate {
        t0,
        approach,
        theta: Theta::from_slice(theta.as_slice()),
        covariance: None,
        converged,
        iterations,
        final_score_norm: norm,
    };
    while !(norm < opts.tol) {
        if iterations == opts.max_iter {
            return Err(Error::FitNonconvergence(Box::new(estimate(&theta, false, iterations, norm))));
        }
        let cond = condition_number(&ws.jacobian);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularJacobian(cond));
        }
        let step = ws.jacobian.clone().lu().solve(&s).ok_or(Error::SingularJacobian(cond))?;
        iterations += 1;
        let mut scale = 1.0;
        let mut candidate = &theta + &step;
        let mut cs = ws.evaluate(&candidate);
        let mut halvings = 0;
        while !(cs.amax() <= norm) && halvings < MAX_HALVINGS {
            scale *= 0.5;
            candidate = &theta + &step * scale;
            cs = ws.evaluate(&candidate);
            halvings += 1;
        }
        if !(cs.amax() <= norm) {
            // no decrease along the Newton direction
            ws.evaluate(&theta);
            return Err(Error::FitNonconvergence(Box::new(estimate(&theta, false, iterations, norm))));
        }
        theta = candidate;
        s = cs;
        norm = s.amax();
        if theta.norm() > DIVERGENCE_NORM {
            return Err(Error::CompleteSeparation(Box::new(estimate(&theta, false, iterations, norm))));
        }
    }
    Ok(estimate(&theta, true, iterations, norm))
}
