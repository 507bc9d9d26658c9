use serde::{Deserialize, Serialize};

/// Known censoring law `C = C* + V + gap` with `C* ~ Weibull(shape, scale)`,
/// both parameters linear in one covariate. Used as the "true G" benchmark in
/// simulation studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCensoring {
    pub shape0: f64,
    pub shape_slope: f64,
    pub scale0: f64,
    pub scale_slope: f64,
    /// Index into `z` of the covariate the parameters depend on.
    pub covariate: usize,
    pub gap: f64,
}

impl TrueCensoring {
    pub fn shape(&self, z: &[f64]) -> f64 {
        self.shape0 + self.shape_slope * z.get(self.covariate).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, z: &[f64]) -> f64 {
        self.scale0 + self.scale_slope * z.get(self.covariate).copied().unwrap_or(0.0)
    }

    /// `P(C >= t | z, v)`.
    pub fn survival(&self, t: f64, z: &[f64], v: f64) -> f64 {
        let gap_time = t - v - self.gap;
        if gap_time <= 0.0 {
            return 1.0;
        }
        (-(gap_time / self.scale(z)).powf(self.shape(z))).exp()
    }
}
