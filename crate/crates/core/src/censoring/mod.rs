//! Estimators of the censoring survival function `G(t | z) = P(C >= t | Z = z)`.

mod cox;
mod forest;
mod step;
mod truth;

use serde::{Deserialize, Serialize};

pub use cox::{partial_likelihood, CoxCensoring, CoxSample, PartialLikelihood, COX_MAX_ITER, COX_TOL};
pub use forest::{ForestParams, SurvivalForest};
pub use step::StepSurvival;
pub use truth::TrueCensoring;

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};

/// Lower bound applied to every evaluation of `G`.
pub const EPSILON_G: f64 = 1e-6;

/// Delay between the initial event and entry to follow-up in the gap-time model.
pub const DEFAULT_GAP: f64 = 5.0;

/// Assignment of subjects to strata by cutpoints on one covariate.
/// Stratum `k` holds values in `[cut[k-1], cut[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSpec {
    #[serde(default)]
    pub covariate: usize,
    #[serde(default = "default_cutpoints")]
    pub cutpoints: Vec<f64>,
}

fn default_cutpoints() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_gap() -> f64 {
    DEFAULT_GAP
}

impl Default for StrataSpec {
    fn default() -> Self {
        StrataSpec { covariate: 0, cutpoints: default_cutpoints() }
    }
}

impl StrataSpec {
    pub fn n_strata(&self) -> usize {
        self.cutpoints.len() + 1
    }

    pub fn stratum(&self, z: &[f64]) -> usize {
        let x = z.get(self.covariate).copied().unwrap_or(0.0);
        self.cutpoints.iter().filter(|&&c| x >= c).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CensoringSpec {
    #[serde(alias = "ecdf")]
    StratEcdf(StrataSpec),
    Km,
    Cox,
    #[serde(alias = "coxgap")]
    CoxGap {
        #[serde(default = "default_gap")]
        gap: f64,
    },
    #[serde(alias = "srf")]
    Forest(ForestParams),
    True(TrueCensoring),
}

impl CensoringSpec {
    /// Short label used in output tables.
    pub fn label(&self) -> &'static str {
        match self {
            CensoringSpec::StratEcdf(_) => "ecdf",
            CensoringSpec::Km => "km",
            CensoringSpec::Cox => "cox",
            CensoringSpec::CoxGap { .. } => "coxgap",
            CensoringSpec::Forest(_) => "srf",
            CensoringSpec::True(_) => "true",
        }
    }

    /// Builds a spec from a method name with default hyperparameters.
    /// `true` needs the scenario's censoring law and is rejected here.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "ecdf" | "strat_ecdf" => Ok(CensoringSpec::StratEcdf(StrataSpec::default())),
            "km" => Ok(CensoringSpec::Km),
            "cox" => Ok(CensoringSpec::Cox),
            "coxgap" | "cox_gap" => Ok(CensoringSpec::CoxGap { gap: DEFAULT_GAP }),
            "srf" | "forest" => Ok(CensoringSpec::Forest(ForestParams::default())),
            "true" => Err(Error::ConfigInvalid("censoring method 'true' requires a simulation scenario".into())),
            other => Err(Error::ConfigInvalid(format!("unknown censoring method '{other}'"))),
        }
    }
}

/// Evaluation point for `G`. `v` is only read by gap-time models and the
/// true law; `subject` marks a training subject for out-of-bag forests.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub z: &'a [f64],
    pub v: f64,
    pub subject: Option<usize>,
}

impl<'a> Query<'a> {
    pub fn new(z: &'a [f64], v: f64) -> Self {
        Query { z, v, subject: None }
    }

    pub fn for_subject(record: &'a SubjectRecord, index: usize) -> Self {
        Query { z: &record.z, v: record.v, subject: Some(index) }
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Strata { spec: StrataSpec, curves: Vec<StepSurvival> },
    Marginal(StepSurvival),
    Cox(CoxCensoring),
    Forest(SurvivalForest),
    True(TrueCensoring),
}

/// A fitted censoring survival function.
#[derive(Debug, Clone)]
pub struct CensoringModel {
    method: &'static str,
    fitted: Fitted,
    support_hint: f64,
}

impl CensoringModel {
    pub fn method(&self) -> &'static str {
        self.method
    }

    /// Largest censoring observation used in the fit.
    pub fn support_hint(&self) -> f64 {
        self.support_hint
    }

    /// `G(t | query)`, floored at [`EPSILON_G`].
    pub fn survival_at(&self, t: f64, q: &Query<'_>) -> f64 {
        let g = match &self.fitted {
            Fitted::Strata { spec, curves } => curves[spec.stratum(q.z)].eval(t),
            Fitted::Marginal(curve) => curve.eval(t),
            Fitted::Cox(cox) => cox.survival(t, q.z, q.v),
            Fitted::Forest(forest) => forest.survival(t, q.z, q.subject),
            Fitted::True(law) => law.survival(t, q.z, q.v),
        };
        g.max(EPSILON_G)
    }

    pub fn forest(&self) -> Option<&SurvivalForest> {
        match &self.fitted {
            Fitted::Forest(f) => Some(f),
            _ => None,
        }
    }

    pub fn cox(&self) -> Option<&CoxCensoring> {
        match &self.fitted {
            Fitted::Cox(c) => Some(c),
            _ => None,
        }
    }

    pub fn from_true_law(law: TrueCensoring) -> Self {
        CensoringModel { method: "true", fitted: Fitted::True(law), support_hint: f64::INFINITY }
    }
}

/// Fits the estimator described by `spec`.
pub fn fit(dataset: &Dataset, spec: &CensoringSpec) -> Result<CensoringModel> {
    match spec {
        CensoringSpec::StratEcdf(strata) => fit_stratified_ecdf(dataset, strata),
        CensoringSpec::Km => fit_marginal(dataset),
        CensoringSpec::Cox => fit_cox_censoring(dataset, None),
        CensoringSpec::CoxGap { gap } => fit_cox_censoring(dataset, Some(*gap)),
        CensoringSpec::Forest(params) => fit_survival_forest(dataset, params),
        CensoringSpec::True(law) => Ok(CensoringModel::from_true_law(law.clone())),
    }
}

fn observations(dataset: &Dataset) -> Vec<(f64, bool)> {
    dataset.records().iter().map(SubjectRecord::censoring_observation).collect()
}

fn support(obs: &[(f64, bool)]) -> f64 {
    obs.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max)
}

/// Single-stratum Kaplan-Meier (empirical survival when `c` is observed).
pub fn fit_marginal(dataset: &Dataset) -> Result<CensoringModel> {
    let obs = observations(dataset);
    Ok(CensoringModel {
        method: "km",
        support_hint: support(&obs),
        fitted: Fitted::Marginal(StepSurvival::kaplan_meier(&obs)),
    })
}

pub fn fit_stratified_ecdf(dataset: &Dataset, strata: &StrataSpec) -> Result<CensoringModel> {
    if strata.covariate >= dataset.p() {
        return Err(Error::ConfigInvalid(format!(
            "strata covariate index {} out of range for p = {}",
            strata.covariate,
            dataset.p()
        )));
    }
    if strata.cutpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ConfigInvalid("strata cutpoints must be strictly increasing".into()));
    }
    let mut groups: Vec<Vec<(f64, bool)>> = vec![Vec::new(); strata.n_strata()];
    for r in dataset.records() {
        groups[strata.stratum(&r.z)].push(r.censoring_observation());
    }
    if let Some(k) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyStratum(k));
    }
    let obs = observations(dataset);
    Ok(CensoringModel {
        method: "ecdf",
        support_hint: support(&obs),
        fitted: Fitted::Strata {
            spec: strata.clone(),
            curves: groups.iter().map(|g| StepSurvival::kaplan_meier(g)).collect(),
        },
    })
}

/// Cox model on `C` (`gap = None`) or on the gap time `C - (V + gap)`.
pub fn fit_cox_censoring(dataset: &Dataset, gap: Option<f64>) -> Result<CensoringModel> {
    let (times, events, x) = cox_inputs(dataset, gap)?;
    let model = CoxCensoring::fit(&CoxSample { times: &times, events: &events, x: &x }, gap)?;
    Ok(CensoringModel {
        method: if gap.is_some() { "coxgap" } else { "cox" },
        support_hint: support(&observations(dataset)),
        fitted: Fitted::Cox(model),
    })
}

/// Cox censoring model with coefficients held at `beta`.
pub fn cox_with_coefficients(dataset: &Dataset, beta: &[f64], gap: Option<f64>) -> Result<CensoringModel> {
    if beta.len() != dataset.p() {
        return Err(Error::ConfigInvalid(format!("beta has length {}, expected {}", beta.len(), dataset.p())));
    }
    let (times, events, x) = cox_inputs(dataset, gap)?;
    let model = CoxCensoring::with_coefficients(&CoxSample { times: &times, events: &events, x: &x }, beta, gap);
    Ok(CensoringModel {
        method: if gap.is_some() { "coxgap" } else { "cox" },
        support_hint: support(&observations(dataset)),
        fitted: Fitted::Cox(model),
    })
}

type CoxInputs = (Vec<f64>, Vec<bool>, Vec<Vec<f64>>);

fn cox_inputs(dataset: &Dataset, gap: Option<f64>) -> Result<CoxInputs> {
    if dataset.p() == 0 {
        return Err(Error::ConfigInvalid("Cox censoring model needs at least one covariate".into()));
    }
    let mut times = Vec::with_capacity(dataset.n());
    let mut events = Vec::with_capacity(dataset.n());
    for r in dataset.records() {
        let (c, observed) = r.censoring_observation();
        times.push(match gap {
            Some(g) => c - r.v - g,
            None => c,
        });
        events.push(observed);
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoCensoringObservations);
    }
    let x = dataset.records().iter().map(|r| r.z.clone()).collect();
    Ok((times, events, x))
}

pub fn fit_survival_forest(dataset: &Dataset, params: &ForestParams) -> Result<CensoringModel> {
    let obs = observations(dataset);
    let times: Vec<f64> = obs.iter().map(|o| o.0).collect();
    let events: Vec<bool> = obs.iter().map(|o| o.1).collect();
    let x: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.z.clone()).collect();
    let forest = SurvivalForest::fit(&x, &times, &events, params)?;
    Ok(CensoringModel { method: "srf", support_hint: support(&obs), fitted: Fitted::Forest(forest) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, RawRecord};

    fn dataset(rows: &[(f64, f64, f64, f64, Option<f64>)]) -> Dataset {
        let raw = rows
            .iter()
            .map(|&(u, d, v, z, c)| RawRecord { u, delta: d, v, z: vec![z], c })
            .collect();
        validate_dataset(raw, None).unwrap()
    }

    #[test]
    fn single_stratum_ecdf() {
        let ds = dataset(&[
            (1.0, 0.0, 0.0, 0.1, Some(1.0)),
            (2.0, 0.0, 0.0, 0.2, Some(2.0)),
            (3.0, 0.0, 0.0, 0.3, Some(3.0)),
            (4.0, 0.0, 0.0, 0.4, Some(4.0)),
        ]);
        let g = fit_stratified_ecdf(&ds, &StrataSpec { covariate: 0, cutpoints: vec![] }).unwrap();
        let z = [0.5];
        assert_eq!(g.survival_at(2.5, &Query::new(&z, 0.0)), 0.5);
        assert_eq!(g.survival_at(1.0, &Query::new(&z, 0.0)), 1.0);
    }

    #[test]
    fn quartile_strata_and_empty_stratum() {
        let spec = StrataSpec::default();
        assert_eq!(spec.n_strata(), 4);
        assert_eq!(spec.stratum(&[0.0]), 0);
        assert_eq!(spec.stratum(&[0.25]), 1);
        assert_eq!(spec.stratum(&[0.74]), 2);
        assert_eq!(spec.stratum(&[1.0]), 3);
        let ds = dataset(&[(1.0, 0.0, 0.0, 0.1, Some(1.0)), (2.0, 0.0, 0.0, 0.9, Some(2.0))]);
        assert!(matches!(fit_stratified_ecdf(&ds, &spec), Err(Error::EmptyStratum(1))));
    }

    #[test]
    fn no_c_all_events_gives_one_up_to_max_u() {
        let ds = dataset(&[
            (3.0, 1.0, 0.0, 0.1, None),
            (5.0, 1.0, 0.0, 0.2, None),
            (4.0, 1.0, 0.0, 0.3, None),
        ]);
        let g = fit_stratified_ecdf(&ds, &StrataSpec { covariate: 0, cutpoints: vec![] }).unwrap();
        for t in [0.0, 3.0, 4.5, 5.0, 9.0] {
            assert_eq!(g.survival_at(t, &Query::new(&[0.2], 0.0)), 1.0);
        }
    }

    #[test]
    fn floor_applies() {
        let ds = dataset(&[(1.0, 0.0, 0.0, 0.1, Some(1.0)), (2.0, 0.0, 0.0, 0.2, Some(2.0))]);
        let g = fit_marginal(&ds).unwrap();
        assert_eq!(g.survival_at(10.0, &Query::new(&[0.0], 0.0)), EPSILON_G);
    }

    #[test]
    fn config_json_forms() {
        let f: CensoringSpec =
            serde_json::from_str(r#"{"method":"forest","n_trees":100,"min_node_size":200,"mtry":2,"oob":true,"seed":7}"#)
                .unwrap();
        assert_eq!(
            f,
            CensoringSpec::Forest(ForestParams {
                n_trees: 100,
                min_node_size: 200,
                mtry: Some(2),
                oob_for_insample: true,
                seed: 7
            })
        );
        let e: CensoringSpec = serde_json::from_str(r#"{"method":"ecdf"}"#).unwrap();
        assert_eq!(e, CensoringSpec::StratEcdf(StrataSpec::default()));
        let c: CensoringSpec = serde_json::from_str(r#"{"method":"cox_gap"}"#).unwrap();
        assert_eq!(c, CensoringSpec::CoxGap { gap: 5.0 });
    }

    #[test]
    fn gap_cox_query_at_boundary_is_one() {
        let rows: Vec<_> = (0..30)
            .map(|i| {
                let v = (i % 7) as f64;
                let c = v + 5.0 + 1.0 + (i as f64 * 0.37).fract() * 10.0;
                (c, 0.0, v, (i % 2) as f64, Some(c))
            })
            .collect();
        let ds = dataset(&rows);
        let g = fit_cox_censoring(&ds, Some(5.0)).unwrap();
        assert_eq!(g.survival_at(12.0, &Query::new(&[1.0], 7.0)), 1.0);
        assert!(g.survival_at(30.0, &Query::new(&[1.0], 7.0)) < 1.0);
    }
}
