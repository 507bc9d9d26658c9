//! Reference implementations used as test oracles. They share no code with
//! the library.

#![allow(dead_code)]

use dcreg::data::{validate_dataset, Dataset, RawRecord};

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                for (v, p) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a.len())
        .map(|i| (0..b[0].len()).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub struct LogisticOracle {
    pub coef: Vec<f64>,
    /// Heteroskedasticity-robust (HC0) covariance.
    pub robust_cov: Vec<Vec<f64>>,
}

/// Logistic maximum likelihood by iteratively reweighted least squares.
pub fn irls(x: &[Vec<f64>], y: &[f64]) -> LogisticOracle {
    let d = x[0].len() + 1;
    let rows: Vec<Vec<f64>> = x.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut beta = vec![0.0; d];
    let prob = |beta: &[f64], r: &[f64]| {
        let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
        1.0 / (1.0 + (-eta).exp())
    };
    for _ in 0..200 {
        let mut xtwx = vec![vec![0.0; d]; d];
        let mut xtwz = vec![0.0; d];
        for (r, &yi) in rows.iter().zip(y) {
            let p = prob(&beta, r);
            let w = p * (1.0 - p);
            let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let z = eta + (yi - p) / w;
            for j in 0..d {
                xtwz[j] += r[j] * w * z;
                for k in 0..d {
                    xtwx[j][k] += r[j] * w * r[k];
                }
            }
        }
        let inv = invert(&xtwx);
        let new: Vec<f64> = (0..d).map(|j| (0..d).map(|k| inv[j][k] * xtwz[k]).sum()).collect();
        let change = new.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = new;
        if change < 1e-14 {
            break;
        }
    }
    let mut bread = vec![vec![0.0; d]; d];
    let mut meat = vec![vec![0.0; d]; d];
    for (r, &yi) in rows.iter().zip(y) {
        let p = prob(&beta, r);
        for j in 0..d {
            for k in 0..d {
                bread[j][k] += r[j] * r[k] * p * (1.0 - p);
                meat[j][k] += r[j] * r[k] * (yi - p) * (yi - p);
            }
        }
    }
    let inv = invert(&bread);
    let robust_cov = mat_mul(&mat_mul(&inv, &meat), &inv);
    LogisticOracle { coef: beta, robust_cov }
}

/// Deterministic pseudo-random numbers in [0, 1) (a Weyl sequence).
pub fn weyl(i: usize, a: f64) -> f64 {
    (i as f64 * a).fract()
}

/// Uncensored data: every subject has an observed event, no `c` column.
pub fn uncensored_dataset(n: usize) -> Dataset {
    let raw = (0..n)
        .map(|i| {
            let z1 = weyl(i + 1, 0.618_033_988_75);
            let z2 = f64::from(u8::from(weyl(i + 1, 0.414_213_562_37) < 0.4));
            let v = 21.0 * z1;
            // event age loosely increasing in z1, decreasing in z2
            let u = v + 0.5 + 30.0 * weyl(i + 1, 0.732_050_807_57) * (1.0 + 0.5 * z2) / (1.0 + 0.3 * z1);
            RawRecord { u, delta: 1.0, v, z: vec![z1, z2], c: None }
        })
        .collect();
    validate_dataset(raw, None).unwrap()
}

/// Oracle inputs at age `t0`: subjects with `V <= t0`, response `U <= t0`.
pub fn oracle_inputs(ds: &Dataset, t0: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let risk: Vec<_> = ds.records().iter().filter(|r| t0 >= r.v).collect();
    (
        risk.iter().map(|r| r.z.clone()).collect(),
        risk.iter().map(|r| f64::from(u8::from(r.u <= t0))).collect(),
    )
}
