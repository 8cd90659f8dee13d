use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Lipschitz drift coefficient `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftSpec {
    #[default]
    Zero,
    /// `b(u) = a u + c`.
    Affine { a: f64, c: f64 },
    /// A named bounded Lipschitz function; see [`DriftSpec::REGISTRY`].
    Registry { name: String },
}

impl DriftSpec {
    pub const REGISTRY: [&'static str; 3] = ["sin", "tanh", "cos"];

    pub fn registry(name: &str) -> Result<Self> {
        if Self::REGISTRY.contains(&name) {
            Ok(Self::Registry { name: name.to_string() })
        } else {
            invalid(format!("unknown drift {name:?}; known: {:?}", Self::REGISTRY))
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Affine { a, c } => *a == 0.0 && *c == 0.0,
            Self::Registry { .. } => false,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { a, c } => a * u + c,
            Self::Registry { name } => match name.as_str() {
                "sin" => u.sin(),
                "tanh" => u.tanh(),
                "cos" => u.cos(),
                other => panic!("drift {other:?} is not registered"),
            },
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { a, .. } => a.abs(),
            Self::Registry { .. } => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Registry { name } if !Self::REGISTRY.contains(&name.as_str()) => {
                invalid(format!("unknown drift {name:?}"))
            }
            Self::Affine { a, c } if !(a.is_finite() && c.is_finite()) => invalid("affine drift must be finite"),
            _ => Ok(()),
        }
    }
}

/// Galerkin projection `(b(u), phi_alpha)` of the drift applied to a sine
/// series with `N` modes, by trapezoidal quadrature on `oversample * N`
/// uniform points. Both the synthesis and the analysis are DST-I transforms
/// carried out with one complex FFT of twice the point count.
#[derive(Clone)]
pub struct DriftProjector {
    modes: usize,
    points: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DriftProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftProjector").field("modes", &self.modes).field("points", &self.points).finish()
    }
}

impl DriftProjector {
    pub fn new(modes: usize, oversample: usize) -> Self {
        let points = (oversample.max(2) * modes).max(2);
        let fft = FftPlanner::new().plan_fft_forward(2 * points);
        Self { modes, points, fft }
    }

    /// `sum_q v_q sin(pi alpha q / M)` for `alpha = 1..out.len()`, from interior values `v_1..v_{M-1}`.
    fn dst1(&self, interior: impl Iterator<Item = f64>, out: &mut [f64]) {
        let m = self.points;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * m];
        for (q, v) in interior.enumerate() {
            buf[q + 1].re = v;
            buf[2 * m - q - 1].re = -v;
        }
        self.fft.process(&mut buf);
        for (a, o) in out.iter_mut().enumerate() {
            *o = -0.5 * buf[a + 1].im;
        }
    }

    /// Field values at the interior points `x_q = q / M`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = self.points;
        let mut padded = vec![0.0; m - 1];
        padded[..coeffs.len().min(m - 1)].copy_from_slice(&coeffs[..coeffs.len().min(m - 1)]);
        let mut vals = vec![0.0; m - 1];
        self.dst1(padded.into_iter(), &mut vals);
        vals.iter_mut().for_each(|v| *v *= SQRT_2);
        vals
    }

    /// Writes `(b(u), phi_alpha)` for `alpha = 1..=N` into `out`.
    pub fn project(&self, drift: &DriftSpec, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.modes);
        let vals = self.synthesize(coeffs);
        // b(u) vanishes from the endpoint terms since every phi_alpha does
        self.dst1(vals.into_iter().map(|u| drift.eval(u)), out);
        let w = SQRT_2 / self.points as f64;
        out.iter_mut().for_each(|v| *v *= w);
    }
}
