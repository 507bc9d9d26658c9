//! Cox proportional hazards model for the censoring time, fitted by
//! Newton-Raphson on the Breslow partial likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::step::StepSurvival;
use crate::error::{Error, Result};

pub const COX_TOL: f64 = 1e-9;
pub const COX_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;

/// Right-censored sample in the form the partial likelihood needs.
#[derive(Debug, Clone)]
pub struct CoxSample<'a> {
    pub times: &'a [f64],
    pub events: &'a [bool],
    pub x: &'a [Vec<f64>],
}

/// Log partial likelihood with its score and information at `beta`.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

/// Breslow partial likelihood, covariates taken as given (callers center).
pub fn partial_likelihood(sample: &CoxSample<'_>, beta: &DVector<f64>) -> PartialLikelihood {
    let p = beta.len();
    let n = sample.times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample.times[b].total_cmp(&sample.times[a]));

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut loglik = 0.0;
    let mut score = DVector::<f64>::zeros(p);
    let mut information = DMatrix::<f64>::zeros(p, p);

    let mut i = 0;
    while i < n {
        let t = sample.times[order[i]];
        let mut j = i;
        let mut d = 0.0;
        let mut xsum = DVector::<f64>::zeros(p);
        let mut lp_sum = 0.0;
        while j < n && sample.times[order[j]] == t {
            let k = order[j];
            let xk = DVector::from_column_slice(&sample.x[k]);
            let lp = beta.dot(&xk);
            let w = lp.exp();
            s0 += w;
            s1.axpy(w, &xk, 1.0);
            s2.ger(w, &xk, &xk, 1.0);
            if sample.events[k] {
                d += 1.0;
                xsum += &xk;
                lp_sum += lp;
            }
            j += 1;
        }
        if d > 0.0 {
            loglik += lp_sum - d * s0.ln();
            let mean = &s1 / s0;
            score += xsum - &mean * d;
            information += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        i = j;
    }
    PartialLikelihood { loglik, score, information }
}

/// Fitted Cox model for the censoring time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxCensoring {
    pub beta: Vec<f64>,
    /// Covariate means subtracted before fitting.
    pub center: Vec<f64>,
    /// Baseline survival at the centered covariates in product-limit form.
    pub baseline: StepSurvival,
    /// When set, the response is the gap time `C - (V + gap)`.
    pub gap: Option<f64>,
    pub iterations: usize,
}

impl CoxCensoring {
    pub fn fit(sample: &CoxSample<'_>, gap: Option<f64>) -> Result<Self> {
        if !sample.events.iter().any(|&e| e) {
            return Err(Error::NoCensoringObservations);
        }
        let p = sample.x.first().map_or(0, Vec::len);
        let center = column_means(sample.x, p);
        let xc: Vec<Vec<f64>> = sample.x.iter().map(|x| x.iter().zip(&center).map(|(a, m)| a - m).collect()).collect();
        let centered = CoxSample { times: sample.times, events: sample.events, x: &xc };

        let mut beta = DVector::<f64>::zeros(p);
        let mut pl = partial_likelihood(&centered, &beta);
        let mut iterations = 0;
        while pl.score.amax() >= COX_TOL {
            if iterations == COX_MAX_ITER {
                return Err(Error::Nonconvergence(COX_MAX_ITER));
            }
            iterations += 1;
            let step = pl
                .information
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&pl.score))
                .or_else(|| pl.information.clone().lu().solve(&pl.score))
                .ok_or(Error::SingularInformation)?;
            if step.iter().any(|s| !s.is_finite()) {
                return Err(Error::SingularInformation);
            }
            let mut scale = 1.0;
            let mut next = &beta + &step;
            let mut next_pl = partial_likelihood(&centered, &next);
            let mut halvings = 0;
            while !(next_pl.loglik >= pl.loglik - 1e-12 * pl.loglik.abs()) && halvings < MAX_HALVINGS {
                scale *= 0.5;
                next = &beta + &step * scale;
                next_pl = partial_likelihood(&centered, &next);
                halvings += 1;
            }
            if halvings == MAX_HALVINGS {
                // no ascent direction left; accept only if already at the optimum numerically
                if pl.score.amax() < COX_TOL * 1e3 {
                    break;
                }
                return Err(Error::Nonconvergence(iterations));
            }
            beta = next;
            pl = next_pl;
        }
        let baseline = breslow_baseline(&centered, &beta);
        Ok(CoxCensoring { beta: beta.as_slice().to_vec(), center, baseline, gap, iterations })
    }

    /// Model with fixed coefficients; only the baseline is estimated.
    pub fn with_coefficients(sample: &CoxSample<'_>, beta: &[f64], gap: Option<f64>) -> Self {
        let p = beta.len();
        let center = column_means(sample.x, p);
        let xc: Vec<Vec<f64>> = sample.x.iter().map(|x| x.iter().zip(&center).map(|(a, m)| a - m).collect()).collect();
        let centered = CoxSample { times: sample.times, events: sample.events, x: &xc };
        let b = DVector::from_column_slice(beta);
        let baseline = breslow_baseline(&centered, &b);
        CoxCensoring { beta: beta.to_vec(), center, baseline, gap, iterations: 0 }
    }

    /// `P(C >= t | z, v)` before flooring.
    pub fn survival(&self, t: f64, z: &[f64], v: f64) -> f64 {
        let time = match self.gap {
            Some(g) => {
                let gt = t - v - g;
                if gt <= 0.0 {
                    return 1.0;
                }
                gt
            }
            None => t,
        };
        let lp: f64 = self.beta.iter().zip(z).zip(&self.center).map(|((b, x), m)| b * (x - m)).sum();
        self.baseline.eval(time).powf(lp.exp())
    }
}

fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len().max(1) as f64;
    (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Breslow hazard increments `d(t) / sum_{risk set} exp(beta'x)` turned into
/// a product-limit survival curve, which reduces to Kaplan-Meier at beta = 0.
fn breslow_baseline(sample: &CoxSample<'_>, beta: &DVector<f64>) -> StepSurvival {
    let n = sample.times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample.times[b].total_cmp(&sample.times[a]));
    let risk: Vec<f64> = sample
        .x
        .iter()
        .map(|x| x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let mut s0 = 0.0;
    let mut jumps = Vec::new();
    let mut i = 0;
    while i < n {
        let t = sample.times[order[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < n && sample.times[order[j]] == t {
            s0 += risk[order[j]];
            d += usize::from(sample.events[order[j]]);
            j += 1;
        }
        if d > 0 {
            jumps.push((t, d, s0, j));
        }
        i = j;
    }
    jumps.reverse();
    let all_events = sample.events.iter().all(|&e| e);
    let zero_beta = beta.iter().all(|&b| b == 0.0);
    let mut times = Vec::with_capacity(jumps.len());
    let mut surv = Vec::with_capacity(jumps.len());
    let mut s = 1.0;
    for (t, d, s0, at_or_after) in jumps {
        s = if all_events && zero_beta {
            // counting form, identical to the product in exact arithmetic
            (at_or_after - d) as f64 / n as f64
        } else {
            s * (1.0 - d as f64 / s0).max(0.0)
        };
        times.push(t);
        surv.push(s);
    }
    StepSurvival::from_parts(times, surv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logrank_two_groups(times: &[f64], events: &[bool], group: &[bool]) -> (f64, f64) {
        // direct O - E and hypergeometric variance for group 1
        let mut uniq: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let (mut o_minus_e, mut var) = (0.0, 0.0);
        for &t in &uniq {
            let y: f64 = times.iter().filter(|&&s| s >= t).count() as f64;
            let y1: f64 = times.iter().zip(group).filter(|(&s, &g)| s >= t && g).count() as f64;
            let d: f64 = times.iter().zip(events).filter(|(&s, &e)| s == t && e).count() as f64;
            let d1: f64 =
                (0..times.len()).filter(|&i| times[i] == t && events[i] && group[i]).count() as f64;
            o_minus_e += d1 - d * y1 / y;
            if y > 1.0 {
                var += y1 * (y - y1) * d * (y - d) / (y * y * (y - 1.0));
            }
        }
        (o_minus_e, var)
    }

    #[test]
    fn score_at_zero_is_logrank() {
        let times = [3.0, 5.0, 7.0, 2.0, 8.0, 11.0, 4.0, 6.0, 9.0, 10.0];
        let events = [true, true, false, true, true, true, false, true, true, false];
        let group = [true, true, true, true, true, false, false, false, false, false];
        let x: Vec<Vec<f64>> = group.iter().map(|&g| vec![if g { 1.0 } else { 0.0 }]).collect();
        let sample = CoxSample { times: &times, events: &events, x: &x };
        let pl = partial_likelihood(&sample, &DVector::zeros(1));
        let (oe, var) = logrank_two_groups(&times, &events, &group);
        assert!((pl.score[0] - oe).abs() < 1e-8);
        // no tied event times, so the score test equals the log-rank chi-square
        let score_test = pl.score[0] * pl.score[0] / pl.information[(0, 0)];
        assert!((score_test - oe * oe / var).abs() < 1e-8);
    }

    #[test]
    fn identical_covariates_give_zero_beta_and_ecdf() {
        let times = [4.0, 1.0, 3.0, 2.0, 2.0];
        let events = [true; 5];
        let x = vec![vec![0.7]; 5];
        let m = CoxCensoring::fit(&CoxSample { times: &times, events: &events, x: &x }, None).unwrap();
        assert_eq!(m.beta, vec![0.0]);
        for t in [0.5, 1.0, 1.5, 2.0, 2.5, 3.5, 4.0, 5.0] {
            let ecdf = times.iter().filter(|&&c| c >= t).count() as f64 / 5.0;
            assert!((m.survival(t, &[0.7], 0.0) - ecdf).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_direction_of_effect() {
        // higher x -> earlier censoring
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let times: Vec<f64> = (0..40).map(|i| if i % 2 == 1 { 1.0 + (i as f64) * 0.1 } else { 3.0 + (i as f64) * 0.2 }).collect();
        let events = vec![true; 40];
        let m = CoxCensoring::fit(&CoxSample { times: &times, events: &events, x: &x }, None).unwrap();
        assert!(m.beta[0] > 0.5);
        assert!(m.survival(3.0, &[1.0], 0.0) < m.survival(3.0, &[0.0], 0.0));
    }

    #[test]
    fn gap_time_support_starts_after_gap() {
        let times = [1.0, 2.0, 3.0];
        let events = [true; 3];
        let x = vec![vec![0.0], vec![1.0], vec![0.5]];
        let m = CoxCensoring::with_coefficients(&CoxSample { times: &times, events: &events, x: &x }, &[0.0], Some(5.0));
        assert_eq!(m.survival(12.0, &[0.3], 7.0), 1.0);
        assert!((m.survival(14.5, &[0.3], 7.0) - 1.0 / 3.0).abs() < 1e-12);
    }
}
