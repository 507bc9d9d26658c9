use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Condition numbers above this are treated as singular.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

pub(crate) fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularJacobian(cond));
    }
    m.clone().try_inverse().ok_or(Error::SingularJacobian(cond))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `a * m * a'`, symmetrized.
pub(crate) fn sandwich(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(a * m * a.transpose()))
}
