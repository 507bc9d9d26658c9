//! Property tests for the invariants the estimators must satisfy on any
//! valid input.

mod common;

use dcreg::censoring::{self, CensoringSpec, ForestParams, Query, StrataSpec};
use dcreg::data::{parse_t0_grid, validate_dataset, Dataset, RawRecord};
use dcreg::estimation::{solve_workspace, subject_weights, Approach, FitWorkspace, SolveOptions};
use dcreg::inference::{av_difference, sandwich_from_workspace};
use dcreg::simulation::{generate_replication, run_study, ScenarioConfig, StudyPlan};
use dcreg::smoothing::{loess, SmoothingSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

const EPS_G: f64 = 1e-6;

/// One subject: z1, z2, v, time to event after v, censoring gap after v + 5.
type Draw = (f64, bool, f64, f64, f64);

fn draw() -> impl Strategy<Value = Draw> {
    (0.0..1.0f64, any::<bool>(), 0.0..15.0f64, 0.05..30.0f64, 0.0..25.0f64)
}

fn build(draws: &[Draw], with_c: bool) -> Dataset {
    let raw = draws
        .iter()
        .map(|&(z1, z2, v, gap_t, gap_c)| {
            let t = v + gap_t;
            let c = v + 5.0 + gap_c;
            let (u, delta) = if t <= c { (t, 1.0) } else { (c, 0.0) };
            RawRecord { u, delta, v, z: vec![z1, f64::from(u8::from(z2))], c: with_c.then_some(c) }
        })
        .collect();
    validate_dataset(raw, None).unwrap()
}

fn methods() -> Vec<CensoringSpec> {
    vec![
        CensoringSpec::StratEcdf(StrataSpec::default()),
        CensoringSpec::Km,
        CensoringSpec::Cox,
        CensoringSpec::CoxGap { gap: 5.0 },
        CensoringSpec::Forest(ForestParams { n_trees: 5, min_node_size: 5, mtry: None, oob_for_insample: true, seed: 4 }),
    ]
}

fn fit_a(ds: &Dataset, t0: f64) -> Option<(FitWorkspace, Vec<f64>)> {
    let g = censoring::fit(ds, &CensoringSpec::Km).ok()?;
    let mut ws = FitWorkspace::new(Approach::A, t0, ds, &g).ok()?;
    let est = solve_workspace(&mut ws, &SolveOptions::default()).ok()?;
    // separated samples have no finite root
    let theta = est.theta.to_vec();
    theta.iter().all(|t| t.abs() < 10.0).then_some((ws, theta))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn survival_is_monotone_bounded_and_floored(draws in prop::collection::vec(draw(), 30..80), with_c in any::<bool>()) {
        let ds = build(&draws, with_c);
        let z = [[0.1, 0.0], [0.6, 1.0], [0.95, 0.0]];
        for spec in methods() {
            let Ok(g) = censoring::fit(&ds, &spec) else { continue };
            let top = g.support_hint().max(1.0) * 1.2;
            for zq in &z {
                let q = Query::new(zq, 3.0);
                let mut prev = f64::INFINITY;
                for k in 0..200 {
                    let t = top * k as f64 / 199.0;
                    let s = g.survival_at(t, &q);
                    prop_assert!((EPS_G..=1.0).contains(&s), "{} at {t}: {s}", g.method());
                    prop_assert!(s <= prev, "{} not monotone at {t}", g.method());
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn duplicating_records_halves_sandwich(draws in prop::collection::vec(draw(), 40..90), t0 in 12.0..30.0f64) {
        let ds = build(&draws, false);
        let twice: Vec<RawRecord> = ds.records().iter().chain(ds.records()).map(RawRecord::from).collect();
        let ds2 = validate_dataset(twice, None).unwrap();
        let (Some((ws1, th1)), Some((ws2, th2))) = (fit_a(&ds, t0), fit_a(&ds2, t0)) else {
            return Err(TestCaseError::reject("fit failed"));
        };
        let (Ok(s1), Ok(s2)) = (sandwich_from_workspace(&ws1), sandwich_from_workspace(&ws2)) else {
            return Err(TestCaseError::reject("singular"));
        };
        for (a, b) in th1.iter().zip(&th2) {
            prop_assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "{th1:?} {th2:?}");
        }
        let half = &s1.covariance / 2.0;
        let diff = max_abs(&(&s2.covariance - &half));
        prop_assert!(diff < 1e-10, "abs diff {diff}");
        prop_assert!(diff <= 1e-6 * max_abs(&half), "rel diff {diff}");
    }

    #[test]
    fn covariance_symmetric_psd(draws in prop::collection::vec(draw(), 40..90), t0 in 12.0..30.0f64) {
        let ds = build(&draws, false);
        let Some((ws, _)) = fit_a(&ds, t0) else { return Err(TestCaseError::reject("fit failed")) };
        let Ok(s) = sandwich_from_workspace(&ws) else { return Err(TestCaseError::reject("singular")) };
        let c = &s.covariance;
        prop_assert_eq!(c, &c.transpose());
        let eig = SymmetricEigen::new(c.clone());
        prop_assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10));
        for (i, se) in s.se.iter().enumerate() {
            prop_assert!((se * se - c[(i, i)]).abs() <= 1e-12 * (1.0 + c[(i, i)]));
        }
    }

    #[test]
    fn affine_rescaling_of_a_covariate(
        draws in prop::collection::vec(draw(), 50..100),
        t0 in 14.0..30.0f64,
        a in prop_oneof![0.3..4.0f64, -4.0..-0.3f64],
        b in -3.0..3.0f64,
    ) {
        let ds = build(&draws, false);
        let moved: Vec<RawRecord> = ds
            .records()
            .iter()
            .map(|r| {
                let mut raw = RawRecord::from(r);
                raw.z[0] = a * raw.z[0] + b;
                raw
            })
            .collect();
        let ds2 = validate_dataset(moved, None).unwrap();
        let (Some((_, th)), Some((_, th2))) = (fit_a(&ds, t0), fit_a(&ds2, t0)) else {
            return Err(TestCaseError::reject("fit failed"));
        };
        let tol = |x: f64| 1e-6 * (1.0 + x.abs());
        prop_assert!((th2[1] - th[1] / a).abs() < tol(th[1] / a));
        prop_assert!((th2[2] - th[2]).abs() < tol(th[2]));
        let alpha = th[0] - b * th[1] / a;
        prop_assert!((th2[0] - alpha).abs() < tol(alpha));
    }

    #[test]
    fn im_equals_a_when_everyone_is_at_risk(draws in prop::collection::vec(draw(), 40..90), t0 in 16.0..30.0f64) {
        let ds = build(&draws, true);
        prop_assume!(ds.records().iter().all(|r| r.v < t0));
        let g = censoring::fit(&ds, &CensoringSpec::Km).unwrap();
        let opts = SolveOptions::default();
        let fit = |ap| FitWorkspace::new(ap, t0, &ds, &g).and_then(|mut ws| solve_workspace(&mut ws, &opts));
        let (Ok(im), Ok(a)) = (fit(Approach::Im), fit(Approach::A)) else {
            return Err(TestCaseError::reject("fit failed"));
        };
        for (x, y) in im.theta.to_vec().iter().zip(a.theta.to_vec()) {
            prop_assert_eq!(*x, y);
        }
    }

    #[test]
    fn csv_round_trip(draws in prop::collection::vec(draw(), 1..40), with_c in any::<bool>()) {
        let ds = build(&draws, with_c);
        let mut buf = Vec::new();
        ds.to_csv_writer(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn loess_constant_and_shift(
        values in prop::collection::vec(-5.0..5.0f64, 8..30),
        k in -100.0..100.0f64,
        span in 0.35..1.0f64,
        degree in 1usize..=2,
    ) {
        let t: Vec<f64> = (0..values.len()).map(|i| 17.0 + i as f64).collect();
        let spec = SmoothingSpec { span, degree };
        let flat = loess(&t, &vec![k; t.len()], &spec).unwrap();
        prop_assert!(flat.iter().all(|v| (v - k).abs() < 1e-10 * (1.0 + k.abs())));
        let base = loess(&t, &values, &spec).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + k).collect();
        let moved = loess(&t, &shifted, &spec).unwrap();
        for (m, b) in moved.iter().zip(&base) {
            prop_assert!((m - b - k).abs() < 1e-9 * (1.0 + k.abs()));
        }
    }

    #[test]
    fn grid_syntax_round_trip(start in 0u32..40, len in 0u32..30, step in 1u32..4) {
        let end = start + len * step;
        let grid = parse_t0_grid(&format!("{start}:{end}:{step}")).unwrap();
        prop_assert_eq!(grid.len() as u32, len + 1);
        for (i, t) in grid.iter().enumerate() {
            prop_assert!((t - f64::from(start + i as u32 * step)).abs() < 1e-9);
        }
    }
}

#[test]
fn av_difference_symmetric_and_zero_without_censoring() {
    let ds = common::uncensored_dataset(500);
    let g = censoring::fit(&ds, &CensoringSpec::Km).unwrap();
    let mut ws = FitWorkspace::new(Approach::A, 25.0, &ds, &g).unwrap();
    let est = solve_workspace(&mut ws, &SolveOptions::default()).unwrap();
    let av = av_difference(&est.theta, 25.0, &ds, &g).unwrap();
    assert_eq!(av.diff, av.diff.transpose());
    assert!(max_abs(&av.diff) == 0.0, "{}", av.diff);

    let censored = build(
        &(0..400).map(|i| (common::weyl(i, 0.618), i % 3 == 0, 10.0 * common::weyl(i, 0.414), 25.0 * common::weyl(i, 0.732), 20.0 * common::weyl(i, 0.236))).collect::<Vec<_>>(),
        true,
    );
    let g = censoring::fit(&censored, &CensoringSpec::Km).unwrap();
    let av = av_difference(&est.theta, 25.0, &censored, &g).unwrap();
    assert_eq!(av.diff, av.diff.transpose());
}

#[test]
fn weights_average_one_under_true_censoring() {
    let mut sc = ScenarioConfig::s11();
    sc.n = 40_000;
    sc.t0_grid = vec![30.0, 40.0];
    let g = censoring::fit(&generate_replication(&sc, 0).unwrap().ages[0].dataset(), &sc.censoring_method("true").unwrap())
        .unwrap();
    for rep in 0..2 {
        let replication = generate_replication(&sc, rep).unwrap();
        for age in &replication.ages {
            let ds = age.dataset();
            let w: Vec<f64> = subject_weights(Approach::A, age.t0, &ds, &g)
                .into_iter()
                .zip(ds.records())
                .filter(|(_, r)| r.v <= age.t0)
                .map(|(w, _)| w)
                .collect();
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * sd / n.sqrt(), "t0 {}: mean {mean}, sd {sd}", age.t0);
        }
    }
}

#[test]
fn censoring_sampler_matches_weibull_law() {
    // probability-integral transform of C* = C - V - 5 under each Z2 law
    let mut sc = ScenarioConfig::s11();
    sc.n = 100_000;
    sc.t0_grid = vec![21.0];
    let law = sc.censoring_law();
    let rep = generate_replication(&sc, 7).unwrap();
    let mut u: Vec<f64> = rep.ages[0]
        .records
        .iter()
        .map(|r| {
            let rec = &r.record;
            let cstar = rec.c.unwrap() - rec.v - 5.0;
            1.0 - (-(cstar / law.scale(&rec.z)).powf(law.shape(&rec.z))).exp()
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    assert!(ks < 0.006, "KS {ks}");
}

#[test]
fn study_independent_of_thread_count() {
    let mut sc = ScenarioConfig::s11();
    sc.n = 600;
    sc.reps = 6;
    sc.t0_grid = vec![21.0, 35.0];
    let plan = StudyPlan::new(
        vec![Approach::A, Approach::B],
        vec![
            sc.censoring_method("true").unwrap(),
            CensoringSpec::Forest(ForestParams { n_trees: 8, min_node_size: 30, mtry: None, oob_for_insample: true, seed: 2 }),
        ],
    );
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_study(&sc, &plan).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.fits, four.fits);
    assert_eq!(one.ages, four.ages);
}

#[test]
fn forest_predictions_bit_identical() {
    let ds = build(
        &(0..300).map(|i| (common::weyl(i, 0.618), i % 2 == 0, 12.0 * common::weyl(i, 0.414), 20.0 * common::weyl(i, 0.732), 20.0 * common::weyl(i, 0.236))).collect::<Vec<_>>(),
        false,
    );
    let spec = CensoringSpec::Forest(ForestParams { n_trees: 20, min_node_size: 10, mtry: Some(1), oob_for_insample: true, seed: 99 });
    let (a, b) = (censoring::fit(&ds, &spec).unwrap(), censoring::fit(&ds, &spec).unwrap());
    for (i, r) in ds.records().iter().enumerate() {
        let q = Query::for_subject(r, i);
        assert_eq!(a.survival_at(r.u, &q).to_bits(), b.survival_at(r.u, &q).to_bits());
    }
}
