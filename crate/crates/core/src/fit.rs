//! Log-log regression of errors against a discretization parameter.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// One measured level: discretization scale and error with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub scale: f64,
    pub error: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// 95% confidence half-width of the slope.
    pub half_width: f64,
}

impl RateFit {
    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        lo <= self.slope && self.slope <= hi
    }
}

/// Weighted least squares of `log(error)` on `log(scale)`, weighting each
/// level by the inverse variance `(error / se)^2` of its logarithm. Levels
/// without a standard error are weighted equally.
pub fn fit_rate(levels: &[LevelError]) -> Result<RateFit> {
    if levels.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 levels, got {}", levels.len())));
    }
    for l in levels {
        if !(l.error > 0.0 && l.error.is_finite()) || !(l.scale > 0.0) {
            return Err(Error::DegenerateFit(format!("non-positive error {} at scale {}", l.error, l.scale)));
        }
    }
    let weighted = levels.iter().all(|l| l.se > 0.0);
    let w: Vec<f64> = levels.iter().map(|l| if weighted { (l.error / l.se).powi(2) } else { 1.0 }).collect();
    let x: Vec<f64> = levels.iter().map(|l| l.scale.ln()).collect();
    let y: Vec<f64> = levels.iter().map(|l| l.error.ln()).collect();

    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("all levels share one scale".into()));
    }
    let sxy: f64 = w.iter().zip(x.iter().zip(&y)).map(|(w, (x, y))| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;

    let dof = (levels.len() - 2) as f64;
    let rss: f64 = w.iter().zip(x.iter().zip(&y)).map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2)).sum();
    let slope_se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let half_width = t.inverse_cdf(0.975) * slope_se;
    Ok(RateFit { slope, intercept, slope_se, half_width })
}

/// `log2(e_l / e_{l+1})` for consecutive levels.
pub fn pairwise_log2_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
