use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_replication, AgeData};
use super::scenario::{ScenarioConfig, V_SCALE};
use crate::censoring::{self, CensoringModel, CensoringSpec};
use crate::data::{risk_indicator, Dataset};
use crate::error::{Error, Result};
use crate::estimation::{expit, solve_workspace, Approach, FitWorkspace, SolveOptions, Theta};
use crate::inference::sandwich_from_workspace;
use crate::rng::stream_key;

pub const COEFFICIENT_NAMES: [&str; 3] = ["alpha", "beta1", "beta2"];

/// Which estimators to run on every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub approaches: Vec<Approach>,
    pub methods: Vec<CensoringSpec>,
    #[serde(default = "yes")]
    pub sandwich: bool,
}

fn yes() -> bool {
    true
}

impl StudyPlan {
    pub fn new(approaches: Vec<Approach>, methods: Vec<CensoringSpec>) -> Self {
        StudyPlan { approaches, methods, sandwich: true }
    }
}

/// Outcome of one estimator on one replication at one age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub rep: usize,
    pub t0: f64,
    pub approach: Approach,
    pub method: String,
    pub theta: Option<Vec<f64>>,
    pub se: Option<Vec<f64>>,
    /// Row-major sandwich covariance.
    pub covariance: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
    /// Mean predicted event probability over subjects at risk.
    pub mean_pred: Option<f64>,
    /// Delta-method standard error of `mean_pred`.
    pub mean_pred_se: Option<f64>,
}

impl FitRecord {
    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        let c = self.covariance.as_ref()?;
        let d = (c.len() as f64).sqrt().round() as usize;
        Some(DMatrix::from_row_slice(d, d, c))
    }
}

/// Per-replication facts about the data at one age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub rep: usize,
    pub t0: f64,
    pub censoring_rate: f64,
    pub at_risk: usize,
    /// Mean of `P(T <= t0 | Z, T > V)` over subjects at risk.
    pub mean_true_pi: f64,
    /// Mean of `P(T <= t0 | Z)` over subjects at risk, when defined.
    pub mean_true_unconditional: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutput {
    pub scenario: ScenarioConfig,
    pub fits: Vec<FitRecord>,
    pub ages: Vec<AgeSummary>,
}

/// Fits every `(approach, method)` pair at every grid age on `reps`
/// independent replications. Fit failures are recorded, not propagated.
pub fn run_study(scenario: &ScenarioConfig, plan: &StudyPlan) -> Result<StudyOutput> {
    scenario.validate()?;
    if plan.approaches.is_empty() || plan.methods.is_empty() {
        return Err(Error::ConfigInvalid("study needs at least one approach and one censoring method".into()));
    }
    let per_rep: Vec<(Vec<FitRecord>, Vec<AgeSummary>)> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| run_replication(scenario, plan, rep))
        .collect::<Result<_>>()?;
    let mut fits = Vec::new();
    let mut ages = Vec::new();
    for (f, a) in per_rep {
        fits.extend(f);
        ages.extend(a);
    }
    Ok(StudyOutput { scenario: scenario.clone(), fits, ages })
}

/// Forest seeds are mixed with the replication so trees differ across reps.
fn method_for_rep(spec: &CensoringSpec, scenario: &ScenarioConfig, rep: usize) -> CensoringSpec {
    match spec {
        CensoringSpec::Forest(p) => {
            let mut p = p.clone();
            p.seed = stream_key(p.seed, &[scenario.base_seed, rep as u64]);
            CensoringSpec::Forest(p)
        }
        other => other.clone(),
    }
}

fn run_replication(sc: &ScenarioConfig, plan: &StudyPlan, rep: usize) -> Result<(Vec<FitRecord>, Vec<AgeSummary>)> {
    let replication = generate_replication(sc, rep)?;
    // censoring observations (C, Z, V) are shared by every age's dataset
    let first = replication.ages[0].dataset();
    let models: Vec<(String, std::result::Result<CensoringModel, String>)> = plan
        .methods
        .iter()
        .map(|m| (m.label().to_string(), censoring::fit(&first, &method_for_rep(m, sc, rep)).map_err(|e| e.to_string())))
        .collect();
    let mut fits = Vec::new();
    let mut summaries = Vec::new();
    for age in &replication.ages {
        let ds = age.dataset();
        summaries.push(summarize_age(sc, rep, age));
        for (label, g) in &models {
            for &approach in &plan.approaches {
                fits.push(fit_one(rep, age.t0, approach, label, g.as_ref(), &ds, plan.sandwich));
            }
        }
    }
    Ok((fits, summaries))
}

fn summarize_age(sc: &ScenarioConfig, rep: usize, age: &AgeData) -> AgeSummary {
    let risk: Vec<_> = age.records.iter().filter(|r| risk_indicator(&r.record, age.t0)).collect();
    let k = risk.len().max(1) as f64;
    let mean_true_pi = neumaier(risk.iter().map(|r| sc.true_pi(age.t0, &r.record.z, r.record.v))) / k;
    let mean_true_unconditional = sc
        .unconditional_pi(age.t0, &[0.0, 0.0])
        .map(|_| neumaier(risk.iter().map(|r| sc.unconditional_pi(age.t0, &r.record.z).unwrap_or(0.0))) / k);
    AgeSummary {
        rep,
        t0: age.t0,
        censoring_rate: age.censoring_rate(),
        at_risk: risk.len(),
        mean_true_pi,
        mean_true_unconditional,
    }
}

fn fit_one(
    rep: usize,
    t0: f64,
    approach: Approach,
    method: &str,
    g: std::result::Result<&CensoringModel, &String>,
    ds: &Dataset,
    sandwich: bool,
) -> FitRecord {
    let mut out = FitRecord {
        rep,
        t0,
        approach,
        method: method.to_string(),
        theta: None,
        se: None,
        covariance: None,
        converged: false,
        iterations: 0,
        error: None,
        mean_pred: None,
        mean_pred_se: None,
    };
    let g = match g {
        Ok(g) => g,
        Err(e) => {
            out.error = Some(e.clone());
            return out;
        }
    };
    let mut ws = match FitWorkspace::new(approach, t0, ds, g) {
        Ok(ws) => ws,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let est = match solve_workspace(&mut ws, &SolveOptions::default()) {
        Ok(est) => est,
        Err(e) => {
            if let Error::FitNonconvergence(est) | Error::CompleteSeparation(est) = &e {
                out.theta = Some(est.theta.to_vec());
                out.iterations = est.iterations;
            }
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.converged = true;
    out.iterations = est.iterations;
    out.theta = Some(est.theta.to_vec());
    let cov = if sandwich {
        match sandwich_from_workspace(&ws) {
            Ok(s) => Some(s.covariance),
            Err(e) => {
                out.error = Some(e.to_string());
                None
            }
        }
    } else {
        None
    };
    let (mp, mse) = population_prediction(&est.theta, ds, t0, cov.as_ref());
    out.mean_pred = Some(mp);
    out.mean_pred_se = mse;
    if let Some(c) = cov {
        out.se = Some(c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect());
        out.covariance = Some(c.transpose().as_slice().to_vec());
    }
    out
}

/// Mean predicted probability over subjects at risk and its delta-method SE.
fn population_prediction(theta: &Theta, ds: &Dataset, t0: f64, cov: Option<&DMatrix<f64>>) -> (f64, Option<f64>) {
    let d = theta.dim();
    let mut grad = DVector::zeros(d);
    let mut sum = 0.0;
    let mut k = 0usize;
    for r in ds.records().iter().filter(|r| risk_indicator(r, t0)) {
        let p = expit(theta.linear_predictor(&r.z));
        sum += p;
        let w = p * (1.0 - p);
        grad[0] += w;
        for j in 1..d {
            grad[j] += w * r.z[j - 1];
        }
        k += 1;
    }
    if k == 0 {
        return (f64::NAN, None);
    }
    grad /= k as f64;
    let se = cov.map(|c| (grad.transpose() * c * &grad)[(0, 0)].max(0.0).sqrt());
    (sum / k as f64, se)
}

/// Neumaier-compensated sum.
fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean(xs: &[f64]) -> f64 {
    neumaier(xs.iter().copied()) / xs.len() as f64
}

/// Sample standard deviation with divisor `K - 1`; `None` when `K < 2`.
fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((neumaier(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub approach: Approach,
    pub method: String,
    pub t0: f64,
    pub coefficient: String,
    pub truth: Option<f64>,
    /// Converged replications entering the metrics.
    pub k: usize,
    pub failed: usize,
    pub smean: Option<f64>,
    pub ssd: Option<f64>,
    pub smese: Option<f64>,
    pub rsmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringRateRow {
    pub t0: f64,
    pub mean_rate: f64,
    pub sd_rate: Option<f64>,
    pub mean_at_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub censoring_rates: Vec<CensoringRateRow>,
}

impl MetricsTable {
    pub fn get(&self, approach: Approach, method: &str, t0: f64, coefficient: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.approach == approach && r.method == method && r.t0 == t0 && r.coefficient == coefficient)
    }
}

type GroupKey = (String, usize, Approach);

/// Groups fits by (method, age index, approach), preserving first-seen
/// method order.
fn grouped(out: &StudyOutput) -> (Vec<String>, BTreeMap<GroupKey, Vec<&FitRecord>>) {
    let grid = &out.scenario.t0_grid;
    let mut methods: Vec<String> = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<&FitRecord>> = BTreeMap::new();
    for f in &out.fits {
        if !methods.contains(&f.method) {
            methods.push(f.method.clone());
        }
        let k = grid.iter().position(|&t| t == f.t0).unwrap_or(usize::MAX);
        groups.entry((f.method.clone(), k, f.approach)).or_default().push(f);
    }
    (methods, groups)
}

pub fn metrics(out: &StudyOutput) -> MetricsTable {
    let (methods, groups) = grouped(out);
    let grid = &out.scenario.t0_grid;
    let mut rows = Vec::new();
    for method in &methods {
        for (ki, &t0) in grid.iter().enumerate() {
            for approach in Approach::ALL {
                let Some(fits) = groups.get(&(method.clone(), ki, approach)) else { continue };
                let ok: Vec<&&FitRecord> = fits.iter().filter(|f| f.converged).collect();
                let truth = out.scenario.true_theta(t0).map(|t| t.to_vec());
                let d = ok.first().and_then(|f| f.theta.as_ref()).map_or(3, Vec::len);
                for j in 0..d {
                    let est: Vec<f64> = ok.iter().map(|f| f.theta.as_ref().unwrap()[j]).collect();
                    let ses: Vec<f64> = ok.iter().filter_map(|f| f.se.as_ref().map(|s| s[j])).collect();
                    let tj = truth.as_ref().map(|t| t[j]);
                    rows.push(MetricsRow {
                        approach,
                        method: method.clone(),
                        t0,
                        coefficient: COEFFICIENT_NAMES.get(j).map_or(format!("beta{j}"), |s| s.to_string()),
                        truth: tj,
                        k: est.len(),
                        failed: fits.len() - est.len(),
                        smean: (!est.is_empty()).then(|| mean(&est)),
                        ssd: sample_sd(&est),
                        smese: (!ses.is_empty()).then(|| mean(&ses)),
                        rsmse: tj.filter(|_| !est.is_empty()).map(|t| {
                            (neumaier(est.iter().map(|e| (e - t) * (e - t))) / est.len() as f64).sqrt()
                        }),
                    });
                }
            }
        }
    }
    MetricsTable { rows, censoring_rates: censoring_rates(out) }
}

fn censoring_rates(out: &StudyOutput) -> Vec<CensoringRateRow> {
    out.scenario
        .t0_grid
        .iter()
        .map(|&t0| {
            let rates: Vec<f64> = out.ages.iter().filter(|a| a.t0 == t0).map(|a| a.censoring_rate).collect();
            let risk: Vec<f64> = out.ages.iter().filter(|a| a.t0 == t0).map(|a| a.at_risk as f64).collect();
            CensoringRateRow { t0, mean_rate: mean(&rates), sd_rate: sample_sd(&rates), mean_at_risk: mean(&risk) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvDiffRow {
    pub method: String,
    pub t0: f64,
    pub coefficient: String,
    /// Replications where both approaches converged.
    pub k: usize,
    /// `(Var_A - Var_B) / n` of the estimates across replications.
    pub value: Option<f64>,
}

/// Empirical counterpart of the asymptotic-variance difference: sample
/// variances of A and B estimates over paired replications, divided by `n`.
pub fn empirical_av_difference(out: &StudyOutput) -> Result<Vec<AvDiffRow>> {
    let has = |a: Approach| out.fits.iter().any(|f| f.approach == a);
    if !has(Approach::A) || !has(Approach::B) {
        return Err(Error::RequiresBothApproaches);
    }
    let (methods, groups) = grouped(out);
    let n = out.scenario.n as f64;
    let mut rows = Vec::new();
    for method in &methods {
        for (ki, &t0) in out.scenario.t0_grid.iter().enumerate() {
            let (Some(fa), Some(fb)) =
                (groups.get(&(method.clone(), ki, Approach::A)), groups.get(&(method.clone(), ki, Approach::B)))
            else {
                continue;
            };
            let by_rep: BTreeMap<usize, &Vec<f64>> =
                fb.iter().filter(|f| f.converged).map(|f| (f.rep, f.theta.as_ref().unwrap())).collect();
            let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = fa
                .iter()
                .filter(|f| f.converged)
                .filter_map(|f| by_rep.get(&f.rep).map(|b| (f.theta.as_ref().unwrap(), *b)))
                .collect();
            let d = pairs.first().map_or(3, |p| p.0.len());
            for j in 0..d {
                let a: Vec<f64> = pairs.iter().map(|p| p.0[j]).collect();
                let b: Vec<f64> = pairs.iter().map(|p| p.1[j]).collect();
                let value = match (sample_sd(&a), sample_sd(&b)) {
                    (Some(sa), Some(sb)) => Some((sa * sa - sb * sb) / n),
                    _ => None,
                };
                rows.push(AvDiffRow {
                    method: method.clone(),
                    t0,
                    coefficient: COEFFICIENT_NAMES.get(j).map_or(format!("beta{j}"), |s| s.to_string()),
                    k: pairs.len(),
                    value,
                });
            }
        }
    }
    Ok(rows)
}

/// Label of the population-average profile in survival comparisons.
pub const POPULATION_PROFILE: &str = "population";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub profile: String,
    pub approach: Approach,
    pub method: String,
    pub t0: f64,
    pub k: usize,
    /// Mean over replications of the predicted event probability.
    pub mean_pred: f64,
    /// Mean over replications of its delta-method SE.
    pub mean_se: Option<f64>,
    pub sd_pred: Option<f64>,
    /// `P(T <= t0 | Z, T > V)` for the profile (population: averaged over
    /// subjects at risk).
    pub true_pi: f64,
    pub true_unconditional: Option<f64>,
}

impl SurvivalRow {
    pub fn abs_error(&self) -> f64 {
        (self.mean_pred - self.true_pi).abs()
    }
}

fn profile_label(z: &[f64]) -> String {
    let parts: Vec<String> = z.iter().map(|x| format!("{x}")).collect();
    format!("z=({})", parts.join(";"))
}

/// Predicted event probabilities per covariate profile and age, averaged
/// over converged replications, with delta-method SEs and the truth. A
/// profile's `V` is taken as `21 * z1`. The population-average profile is
/// always included.
pub fn survival_comparison(out: &StudyOutput, z_profiles: &[Vec<f64>]) -> Vec<SurvivalRow> {
    let (methods, groups) = grouped(out);
    let sc = &out.scenario;
    let mut rows = Vec::new();
    for method in &methods {
        for (ki, &t0) in sc.t0_grid.iter().enumerate() {
            for approach in Approach::ALL {
                let Some(fits) = groups.get(&(method.clone(), ki, approach)) else { continue };
                let ok: Vec<&&FitRecord> = fits.iter().filter(|f| f.converged && f.mean_pred.is_some()).collect();
                if ok.is_empty() {
                    continue;
                }
                let ages: Vec<&AgeSummary> = out.ages.iter().filter(|a| a.t0 == t0).collect();
                let preds: Vec<f64> = ok.iter().map(|f| f.mean_pred.unwrap()).collect();
                let ses: Vec<f64> = ok.iter().filter_map(|f| f.mean_pred_se).collect();
                let uncond: Vec<f64> = ages.iter().filter_map(|a| a.mean_true_unconditional).collect();
                rows.push(SurvivalRow {
                    profile: POPULATION_PROFILE.to_string(),
                    approach,
                    method: method.clone(),
                    t0,
                    k: ok.len(),
                    mean_pred: mean(&preds),
                    mean_se: (!ses.is_empty()).then(|| mean(&ses)),
                    sd_pred: sample_sd(&preds),
                    true_pi: mean(&ages.iter().map(|a| a.mean_true_pi).collect::<Vec<_>>()),
                    true_unconditional: (!uncond.is_empty()).then(|| mean(&uncond)),
                });
                for z in z_profiles {
                    let mut preds = Vec::new();
                    let mut ses = Vec::new();
                    for f in &ok {
                        let theta = Theta::from_slice(f.theta.as_ref().unwrap());
                        let (p, se) = profile_prediction(&theta, z, f.covariance_matrix().as_ref());
                        preds.push(p);
                        ses.extend(se);
                    }
                    rows.push(SurvivalRow {
                        profile: profile_label(z),
                        approach,
                        method: method.clone(),
                        t0,
                        k: preds.len(),
                        mean_pred: mean(&preds),
                        mean_se: (!ses.is_empty()).then(|| mean(&ses)),
                        sd_pred: sample_sd(&preds),
                        true_pi: sc.true_pi(t0, z, V_SCALE * z[0]),
                        true_unconditional: sc.unconditional_pi(t0, z),
                    });
                }
            }
        }
    }
    rows
}

/// Predicted probability at `z` and its SE `p(1-p) * se(linear predictor)`.
pub fn profile_prediction(theta: &Theta, z: &[f64], cov: Option<&DMatrix<f64>>) -> (f64, Option<f64>) {
    let p = expit(theta.linear_predictor(z));
    let se = cov.map(|c| {
        let mut x = DVector::zeros(theta.dim());
        x[0] = 1.0;
        for (j, v) in z.iter().enumerate() {
            x[j + 1] = *v;
        }
        let var_lp = (x.transpose() * c * &x)[(0, 0)].max(0.0);
        p * (1.0 - p) * var_lp.sqrt()
    });
    (p, se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDiffRow {
    pub profile: String,
    pub approach: Approach,
    pub method: String,
    pub t0: f64,
    pub backward: f64,
    pub inverse: f64,
    /// Difference of mean estimated survival, `(1 - inverse) - (1 - backward)`.
    pub diff: f64,
}

/// Matches rows of two survival comparisons (backward and inverse
/// generators) and reports the difference of mean estimated survival.
pub fn generator_comparison(backward: &[SurvivalRow], inverse: &[SurvivalRow]) -> Vec<GeneratorDiffRow> {
    backward
        .iter()
        .filter_map(|b| {
            inverse
                .iter()
                .find(|i| i.profile == b.profile && i.approach == b.approach && i.method == b.method && i.t0 == b.t0)
                .map(|i| GeneratorDiffRow {
                    profile: b.profile.clone(),
                    approach: b.approach,
                    method: b.method.clone(),
                    t0: b.t0,
                    backward: b.mean_pred,
                    inverse: i.mean_pred,
                    diff: b.mean_pred - i.mean_pred,
                })
        })
        .collect()
}
