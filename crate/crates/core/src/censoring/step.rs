use serde::{Deserialize, Serialize};

/// Left-continuous survival step function `S(t) = P(X >= t)`.
///
/// `surv[k]` is the survival just after `times[k]`; evaluation at `t` uses
/// the last jump strictly before `t`, so mass located at `t` still counts as
/// surviving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl StepSurvival {
    pub fn constant_one() -> Self {
        StepSurvival { times: Vec::new(), surv: Vec::new() }
    }

    /// Kaplan-Meier estimate from `(time, is_event)` pairs. When every pair
    /// is an event this is the empirical survival function.
    pub fn kaplan_meier(obs: &[(f64, bool)]) -> Self {
        let mut sorted: Vec<(f64, bool)> = obs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len() as f64;
        let uncensored = sorted.iter().all(|o| o.1);
        let mut times = Vec::new();
        let mut surv = Vec::new();
        let mut at_risk = sorted.len();
        let mut s = 1.0;
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].0;
            let mut j = i;
            let mut d = 0usize;
            while j < sorted.len() && sorted[j].0 == t {
                d += usize::from(sorted[j].1);
                j += 1;
            }
            if d > 0 {
                // plain counting when uncensored keeps the ECDF exact
                s = if uncensored {
                    (at_risk - d) as f64 / n
                } else {
                    s * (1.0 - d as f64 / at_risk as f64)
                };
                times.push(t);
                surv.push(s);
            }
            at_risk -= j - i;
            i = j;
        }
        StepSurvival { times, surv }
    }

    pub(crate) fn from_parts(times: Vec<f64>, surv: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), surv.len());
        StepSurvival { times, surv }
    }

    pub fn eval(&self, t: f64) -> f64 {
        // number of jump times strictly below t
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.surv
    }
}
