//! LOESS smoothing of coefficient trajectories over the analysis-age grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub span: f64,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_degree() -> usize {
    2
}

impl SmoothingSpec {
    pub fn new(span: f64) -> Self {
        SmoothingSpec { span, degree: 2 }
    }

    fn neighbours(&self, m: usize) -> usize {
        ((self.span * m as f64).ceil() as usize).min(m)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(Error::ConfigInvalid(format!("span {} not in (0, 1]", self.span)));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(Error::ConfigInvalid(format!("degree {} not in {{1, 2}}", self.degree)));
        }
        let needed = self.degree + 2;
        if m < needed {
            return Err(Error::InsufficientPoints { needed, got: m });
        }
        if self.neighbours(m) < self.degree + 1 {
            return Err(Error::InsufficientPoints { needed: self.degree + 1, got: self.neighbours(m) });
        }
        Ok(())
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let a = 1.0 - u * u * u;
        a * a * a
    }
}

/// Local polynomial fit at every grid point using the `ceil(span * m)`
/// nearest neighbours with tricube weights. No robustness iterations.
pub fn loess(grid_t: &[f64], values: &[f64], spec: &SmoothingSpec) -> Result<Vec<f64>> {
    let m = grid_t.len();
    if values.len() != m {
        return Err(Error::ConfigInvalid(format!("{} values for {} grid points", values.len(), m)));
    }
    spec.validate(m)?;
    if grid_t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ConfigInvalid("smoothing grid must be strictly increasing".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConfigInvalid("smoothing values must be finite".into()));
    }
    let k = spec.neighbours(m);
    grid_t.iter().map(|&t| local_fit(grid_t, values, t, k, spec.degree)).collect()
}

fn local_fit(grid: &[f64], values: &[f64], t: f64, k: usize, degree: usize) -> Result<f64> {
    let mut dist: Vec<f64> = grid.iter().map(|&x| (x - t).abs()).collect();
    dist.sort_by(f64::total_cmp);
    let dmax = dist[k - 1];
    let rows: Vec<(f64, f64, f64)> = grid
        .iter()
        .zip(values)
        .filter_map(|(&x, &y)| {
            let w = if dmax > 0.0 { tricube((x - t).abs() / dmax) } else { f64::from(x == t) };
            (w > 0.0).then(|| ((x - t) / dmax.max(f64::MIN_POSITIVE), y, w.sqrt()))
        })
        .collect();
    let cols = degree + 1;
    if rows.len() < cols {
        return Err(Error::InsufficientPoints { needed: cols, got: rows.len() });
    }
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i].2 * rows[i].0.powi(j as i32));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2 * r.1));
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|_| Error::InsufficientPoints { needed: cols, got: rows.len() })?;
    Ok(coef[0])
}
