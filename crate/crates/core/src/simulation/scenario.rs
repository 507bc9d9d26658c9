use serde::{Deserialize, Serialize};

use crate::censoring::{CensoringSpec, TrueCensoring};
use crate::error::{Error, Result};
use crate::estimation::{expit, Theta};

/// Age at the initial event is `V_SCALE * Z1`.
pub const V_SCALE: f64 = 21.0;
/// Follow-up starts this many years after the initial event.
pub const ENTRY_GAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S11,
    S12,
    S2,
    S3,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Per-age Bernoulli draw followed by a backward walk on the month grid.
    Backward,
    /// One uniform per subject inverted through `pi(.)` on the month grid.
    Inverse,
}

/// Law of `T | Z, T > V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EventModel {
    /// `logit pi(t) = gamma0 + gamma1 t + beta' z`.
    Logistic { gamma0: f64, gamma1: f64, beta: Vec<f64> },
    /// Two logistic arms split at `V = v_threshold`, sharing `gamma1` and
    /// `beta1` (on Z1) and differing in intercept and the Z2 slope.
    Mixture { gamma01: f64, gamma02: f64, gamma1: f64, beta1: f64, beta21: f64, beta22: f64, v_threshold: f64 },
    /// Proportional-hazards Weibull, `S(t|z) = exp(-lambda t^nu exp(beta' z))`.
    Weibull { lambda: f64, nu: f64, beta: Vec<f64> },
}

/// Full parameterization of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub n: usize,
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_step")]
    pub s: f64,
    #[serde(default = "default_floor")]
    pub floor_pi: f64,
    pub a1: f64,
    pub a2: f64,
    pub p_bern: f64,
    /// `C* ~ Weibull(shape0 + shape_slope Z2, scale0 + scale_slope Z2)`.
    pub shape0: f64,
    pub shape_slope: f64,
    pub scale0: f64,
    pub scale_slope: f64,
    pub event: EventModel,
    pub t0_grid: Vec<f64>,
    #[serde(default = "default_generator")]
    pub generator: Generator,
}

fn default_step() -> f64 {
    1.0 / 12.0
}
fn default_floor() -> f64 {
    0.005
}
fn default_generator() -> Generator {
    Generator::Backward
}

impl ScenarioConfig {
    fn base(id: ScenarioId, a: (f64, f64), shape: (f64, f64), scale: (f64, f64), event: EventModel, grid: &[f64]) -> Self {
        ScenarioConfig {
            id,
            n: 7000,
            reps: 1000,
            base_seed: 1,
            s: default_step(),
            floor_pi: default_floor(),
            a1: a.0,
            a2: a.1,
            p_bern: 0.4,
            shape0: shape.0,
            shape_slope: shape.1,
            scale0: scale.0,
            scale_slope: scale.1,
            event,
            t0_grid: grid.to_vec(),
            generator: Generator::Backward,
        }
    }

    /// Heavy censoring, logistic event model.
    pub fn s11() -> Self {
        Self::base(
            ScenarioId::S11,
            (0.94, 1.06),
            (3.34, -0.10),
            (21.0, -2.0),
            EventModel::Logistic { gamma0: -7.5, gamma1: 0.23, beta: vec![-4.83, -1.0] },
            &[21.0, 30.0, 35.0, 40.0],
        )
    }

    /// Light censoring. Event-model values are those of the published truth
    /// rows for this scenario.
    pub fn s12() -> Self {
        Self::base(
            ScenarioId::S12,
            (0.94, 1.06),
            (6.0, -1.0),
            (31.0, -2.0),
            EventModel::Logistic { gamma0: -6.9, gamma1: 0.26, beta: vec![-5.46, 1.5] },
            &[21.0, 30.0, 35.0, 40.0],
        )
    }

    /// Mixture of two logistic arms split by age at the initial event.
    pub fn s2() -> Self {
        Self::base(
            ScenarioId::S2,
            (2.0, 2.0),
            (3.34, -0.10),
            (22.0, -2.0),
            EventModel::Mixture {
                gamma01: -6.3,
                gamma02: -6.9,
                gamma1: 0.30,
                beta1: -6.3,
                beta21: 1.0,
                beta22: 1.6,
                v_threshold: 16.0,
            },
            &[13.0, 14.0, 15.0],
        )
    }

    /// Weibull proportional-hazards event times.
    pub fn s3() -> Self {
        Self::base(
            ScenarioId::S3,
            (0.94, 1.06),
            (3.34, -2.0),
            (20.0, 0.0),
            EventModel::Weibull { lambda: 4.5e-9, nu: 5.0, beta: vec![2.0, -0.3] },
            &[15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "s11" => Ok(Self::s11()),
            "s12" => Ok(Self::s12()),
            "s2" => Ok(Self::s2()),
            "s3" => Ok(Self::s3()),
            other => Err(Error::ConfigInvalid(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.n == 0 || self.reps == 0 {
            return bad("n and reps must be >= 1");
        }
        if !(self.s > 0.0) {
            return bad("backward step s must be positive");
        }
        if !(self.floor_pi > 0.0 && self.floor_pi < 1.0) {
            return bad("floor_pi must lie in (0, 1)");
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0) {
            return bad("Beta parameters must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_bern) {
            return bad("p_bern must lie in [0, 1]");
        }
        for z2 in [0.0, 1.0] {
            if !(self.shape0 + self.shape_slope * z2 > 0.0 && self.scale0 + self.scale_slope * z2 > 0.0) {
                return bad("Weibull censoring parameters must be positive in both Z2 groups");
            }
        }
        crate::data::validate_grid(&self.t0_grid)?;
        match &self.event {
            EventModel::Logistic { beta, .. } | EventModel::Weibull { beta, .. } if beta.len() != 2 => {
                bad("event model needs two slopes (Z1, Z2)")
            }
            EventModel::Weibull { lambda, nu, .. } if !(*lambda > 0.0 && *nu > 0.0) => {
                bad("Weibull event parameters must be positive")
            }
            _ => Ok(()),
        }
    }

    /// The censoring law as a `G` the estimators can use.
    pub fn censoring_law(&self) -> TrueCensoring {
        TrueCensoring {
            shape0: self.shape0,
            shape_slope: self.shape_slope,
            scale0: self.scale0,
            scale_slope: self.scale_slope,
            covariate: 1,
            gap: ENTRY_GAP,
        }
    }

    /// Resolves a censoring-method name, including `true`.
    pub fn censoring_method(&self, name: &str) -> Result<CensoringSpec> {
        if name.trim().eq_ignore_ascii_case("true") {
            Ok(CensoringSpec::True(self.censoring_law()))
        } else {
            CensoringSpec::from_name(name)
        }
    }

    /// `P(T <= t | z, T > v)`; zero for `t <= v`.
    pub fn true_pi(&self, t: f64, z: &[f64], v: f64) -> f64 {
        if t <= v {
            return 0.0;
        }
        match &self.event {
            EventModel::Logistic { gamma0, gamma1, beta } => {
                expit(gamma0 + gamma1 * t + beta[0] * z[0] + beta[1] * z[1])
            }
            EventModel::Mixture { gamma01, gamma02, gamma1, beta1, beta21, beta22, v_threshold } => {
                let (g0, b2) = if v < *v_threshold { (gamma01, beta21) } else { (gamma02, beta22) };
                expit(g0 + gamma1 * t + beta1 * z[0] + b2 * z[1])
            }
            EventModel::Weibull { lambda, nu, beta } => {
                let rate = lambda * (beta[0] * z[0] + beta[1] * z[1]).exp();
                // 1 - S(t)/S(v)
                -(-(rate * (t.powf(*nu) - v.max(0.0).powf(*nu)))).exp_m1()
            }
        }
    }

    /// Whether `t -> pi(t | z, v)` is nondecreasing for every `z` and `v`.
    pub fn pi_nondecreasing(&self) -> bool {
        match &self.event {
            EventModel::Logistic { gamma1, .. } | EventModel::Mixture { gamma1, .. } => *gamma1 >= 0.0,
            EventModel::Weibull { .. } => true,
        }
    }

    /// `P(T <= t | z)` without conditioning on `T > V` (Weibull model only).
    pub fn unconditional_pi(&self, t: f64, z: &[f64]) -> Option<f64> {
        match &self.event {
            EventModel::Weibull { lambda, nu, beta } => {
                let rate = lambda * (beta[0] * z[0] + beta[1] * z[1]).exp();
                Some(-(-(rate * t.max(0.0).powf(*nu))).exp_m1())
            }
            _ => None,
        }
    }

    /// Coefficients of the analysis model at `t0` when the scenario's event
    /// model is logistic among the subjects at risk; `None` otherwise.
    pub fn true_theta(&self, t0: f64) -> Option<Theta> {
        match &self.event {
            EventModel::Logistic { gamma0, gamma1, beta } => {
                Some(Theta { alpha: gamma0 + gamma1 * t0, beta: beta.clone() })
            }
            // only the first arm is at risk before the threshold
            EventModel::Mixture { gamma01, gamma1, beta1, beta21, v_threshold, .. } if t0 <= *v_threshold => {
                Some(Theta { alpha: gamma01 + gamma1 * t0, beta: vec![*beta1, *beta21] })
            }
            _ => None,
        }
    }
}
