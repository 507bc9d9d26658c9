use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Weibull};

use super::scenario::{Generator, ScenarioConfig, ENTRY_GAP, V_SCALE};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Ages beyond this are treated as "no event" by the inverse generator.
pub const INVERSE_AGE_CAP: f64 = 150.0;

/// Observed record plus the latent event age used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub record: SubjectRecord,
    /// Latent event age; `INFINITY` when no event was generated.
    pub t_true: f64,
    /// `Y(t0)`, the event indicator at the dataset's analysis age.
    pub y_t0: bool,
}

/// The data analysed at one grid age.
#[derive(Debug, Clone)]
pub struct AgeData {
    pub t0: f64,
    pub records: Vec<LatentRecord>,
}

impl AgeData {
    pub fn dataset(&self) -> Dataset {
        let records = self.records.iter().map(|r| r.record.clone()).collect();
        Dataset::from_validated(records, 2, vec!["z1".into(), "z2".into()])
    }

    /// Fraction of all subjects censored at or before `t0`.
    pub fn censoring_rate(&self) -> f64 {
        let k = self.records.iter().filter(|r| r.record.delta == 0 && r.record.u <= self.t0).count();
        k as f64 / self.records.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub rep_index: usize,
    pub ages: Vec<AgeData>,
}

struct Baseline {
    z: Vec<f64>,
    v: f64,
    c: f64,
}

/// Covariates, initial-event age and censoring age for every subject.
fn draw_baseline<R: Rng>(sc: &ScenarioConfig, rng: &mut R) -> Result<Vec<Baseline>> {
    let invalid = |e: String| Error::ConfigInvalid(e);
    let beta = Beta::new(sc.a1, sc.a2).map_err(|e| invalid(e.to_string()))?;
    let bern = Bernoulli::new(sc.p_bern).map_err(|e| invalid(e.to_string()))?;
    let law = sc.censoring_law();
    let mut weibulls = Vec::with_capacity(2);
    for z2 in [0.0, 1.0] {
        let z = [0.0, z2];
        weibulls.push(Weibull::new(law.scale(&z), law.shape(&z)).map_err(|e| invalid(e.to_string()))?);
    }
    Ok((0..sc.n)
        .map(|_| {
            let z1: f64 = beta.sample(rng);
            let z2 = bern.sample(rng);
            let v = V_SCALE * z1;
            let cstar: f64 = weibulls[usize::from(z2)].sample(rng);
            Baseline { z: vec![z1, f64::from(u8::from(z2))], v, c: cstar + v + ENTRY_GAP }
        })
        .collect())
}

fn observe(b: &Baseline, t: f64, t0: f64) -> LatentRecord {
    let (u, delta) = if t <= b.c { (t, 1) } else { (b.c, 0) };
    LatentRecord {
        record: SubjectRecord { u, delta, v: b.v, z: b.z.clone(), c: Some(b.c) },
        t_true: t,
        y_t0: t <= t0,
    }
}

/// Event age at `t0` by the backward walk; `INFINITY` when `Y(t0) = 0`.
fn backward_event<R: Rng>(sc: &ScenarioConfig, b: &Baseline, t0: f64, rng: &mut R) -> f64 {
    let pi0 = sc.true_pi(t0, &b.z, b.v);
    if rng.random::<f64>() >= pi0 {
        return f64::INFINITY;
    }
    let mut q = 1usize;
    let mut prev = pi0;
    loop {
        let p = sc.true_pi(t0 - q as f64 * sc.s, &b.z, b.v);
        if p < sc.floor_pi {
            break;
        }
        if rng.random::<f64>() < p / prev {
            q += 1;
            prev = p;
        } else {
            break;
        }
    }
    t0 - (q - 1) as f64 * sc.s
}

/// Event age by inverting `pi(.)` on the step grid: the first grid age with
/// `pi >= u`. Monotone laws are searched by bisection, others scanned.
fn inverse_event<R: Rng>(sc: &ScenarioConfig, b: &Baseline, rng: &mut R) -> f64 {
    let target = rng.random::<f64>().max(sc.floor_pi);
    let first = (b.v / sc.s).floor() as i64 + 1;
    let mut last = (INVERSE_AGE_CAP / sc.s).floor() as i64;
    while last as f64 * sc.s > INVERSE_AGE_CAP {
        last -= 1;
    }
    let reached = |k: i64| {
        let t = k as f64 * sc.s;
        t > b.v && sc.true_pi(t, &b.z, b.v) >= target
    };
    if sc.pi_nondecreasing() {
        if first > last || !reached(last) {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (first, last);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        return lo as f64 * sc.s;
    }
    (first..=last).find(|&k| reached(k)).map_or(f64::INFINITY, |k| k as f64 * sc.s)
}

/// One Monte Carlo replication on the stream `(base_seed, rep_index)`.
pub fn generate_replication(sc: &ScenarioConfig, rep_index: usize) -> Result<Replication> {
    sc.validate()?;
    let mut rng = substream(sc.base_seed, &[rep_index as u64]);
    let base = draw_baseline(sc, &mut rng)?;
    let ages = match sc.generator {
        Generator::Backward => sc
            .t0_grid
            .iter()
            .map(|&t0| AgeData {
                t0,
                records: base.iter().map(|b| observe(b, backward_event(sc, b, t0, &mut rng), t0)).collect(),
            })
            .collect(),
        Generator::Inverse => {
            let times: Vec<f64> = base.iter().map(|b| inverse_event(sc, b, &mut rng)).collect();
            sc.t0_grid
                .iter()
                .map(|&t0| AgeData { t0, records: base.iter().zip(&times).map(|(b, &t)| observe(b, t, t0)).collect() })
                .collect()
        }
    };
    Ok(Replication { rep_index, ages })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(generator: Generator) -> ScenarioConfig {
        let mut sc = ScenarioConfig::s11();
        sc.n = 2000;
        sc.generator = generator;
        sc
    }

    #[test]
    fn deterministic_per_rep() {
        let sc = small(Generator::Backward);
        let a = generate_replication(&sc, 3).unwrap();
        let b = generate_replication(&sc, 3).unwrap();
        let c = generate_replication(&sc, 4).unwrap();
        assert_eq!(a.ages[2].records, b.ages[2].records);
        assert_ne!(a.ages[2].records, c.ages[2].records);
    }

    #[test]
    fn support_and_latent_consistency() {
        for generator in [Generator::Backward, Generator::Inverse] {
            let sc = small(generator);
            let rep = generate_replication(&sc, 0).unwrap();
            for age in &rep.ages {
                for r in &age.records {
                    let rec = &r.record;
                    assert!(rec.c.unwrap() >= rec.v + ENTRY_GAP);
                    assert!(rec.u > rec.v);
                    if r.t_true.is_finite() && rec.v < age.t0 {
                        assert_eq!(r.y_t0, r.t_true <= age.t0);
                    }
                    if generator == Generator::Backward && r.t_true.is_finite() {
                        assert!(r.t_true <= age.t0 && r.t_true > rec.v);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_bisection_matches_scan() {
        let sc = ScenarioConfig::s3();
        assert!(sc.pi_nondecreasing());
        let mut rng = substream(5, &[1]);
        for b in draw_baseline(&sc, &mut rng).unwrap().iter().take(300) {
            let mut r1 = substream(9, &[b.v.to_bits()]);
            let mut r2 = r1.clone();
            let fast = inverse_event(&sc, b, &mut r1);
            let target = r2.random::<f64>().max(sc.floor_pi);
            let mut k = (b.v / sc.s).floor() as i64 + 1;
            let slow = loop {
                let t = k as f64 * sc.s;
                if t > INVERSE_AGE_CAP {
                    break f64::INFINITY;
                }
                if t > b.v && sc.true_pi(t, &b.z, b.v) >= target {
                    break t;
                }
                k += 1;
            };
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn backward_event_frequency_matches_pi() {
        let mut sc = small(Generator::Backward);
        sc.n = 20000;
        let rep = generate_replication(&sc, 1).unwrap();
        let age = &rep.ages[1];
        let risk: Vec<&LatentRecord> = age.records.iter().filter(|r| r.record.v < age.t0).collect();
        let k = risk.len() as f64;
        let freq = risk.iter().filter(|r| r.y_t0).count() as f64 / k;
        let pis: Vec<f64> = risk.iter().map(|r| sc.true_pi(age.t0, &r.record.z, r.record.v)).collect();
        let mean_pi = pis.iter().sum::<f64>() / k;
        let var = pis.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (k * k);
        assert!((freq - mean_pi).abs() < 3.0 * var.sqrt(), "{freq} vs {mean_pi}");
    }
}
