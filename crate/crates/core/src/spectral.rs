//! Eigensystem of the negative Laplacian on (0, 1), the heat and wave time
//! kernels of the Green's function, and closed-form integrals of both.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Grid;

/// `lambda_alpha = (alpha pi)^2`.
pub fn eigenvalue(alpha: usize) -> f64 {
    let w = frequency(alpha);
    w * w
}

/// `sqrt(lambda_alpha) = alpha pi`.
pub fn frequency(alpha: usize) -> f64 {
    alpha as f64 * PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// One eigenpair; `sqrt(2) sin(alpha pi x)` (Dirichlet) or `sqrt(2) cos(alpha pi x)` (Neumann).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigenMode {
    pub alpha: usize,
    pub boundary: Boundary,
}

impl EigenMode {
    pub fn dirichlet(alpha: usize) -> Self {
        Self { alpha, boundary: Boundary::Dirichlet }
    }

    pub fn neumann(alpha: usize) -> Self {
        Self { alpha, boundary: Boundary::Neumann }
    }

    pub fn eigenvalue(&self) -> f64 {
        eigenvalue(self.alpha)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let arg = frequency(self.alpha) * x;
        match self.boundary {
            Boundary::Dirichlet => SQRT_2 * arg.sin(),
            Boundary::Neumann => SQRT_2 * arg.cos(),
        }
    }
}

/// Which evolution operator the time kernel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// `exp(-lambda t)`
    Heat,
    /// `sin(sqrt(lambda) t) / sqrt(lambda)`
    Wave,
}

/// Temporal factor of the Green's function for mode `alpha`; zero for `t < 0`.
pub fn time_kernel(flavor: Flavor, alpha: usize, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    match flavor {
        Flavor::Heat => (-eigenvalue(alpha) * t).exp(),
        Flavor::Wave => {
            let w = frequency(alpha);
            (w * t).sin() / w
        }
    }
}

/// `int_{s1}^{s2} time_kernel(t - s) ds` in closed form, for `0 <= s1 <= s2 <= t`.
pub fn kernel_time_integral(flavor: Flavor, alpha: usize, s1: f64, s2: f64, t: f64) -> Result<f64> {
    if !(s1 <= s2 && s2 <= t * (1.0 + 1e-14) && s1 >= 0.0) {
        return invalid(format!("need 0 <= s1 <= s2 <= t, got s1={s1}, s2={s2}, t={t}"));
    }
    Ok(kernel_integral_unchecked(flavor, alpha, s2 - s1, (t - s2).max(0.0)))
}

/// Integral of the kernel over an interval of length `len` whose right end
/// lies `lag` before the evaluation time.
pub(crate) fn kernel_integral_unchecked(flavor: Flavor, alpha: usize, len: f64, lag: f64) -> f64 {
    let lam = eigenvalue(alpha);
    match flavor {
        Flavor::Heat => (-lam * lag).exp() * (-(-lam * len).exp_m1()) / lam,
        Flavor::Wave => {
            let w = frequency(alpha);
            // cos(w lag) - cos(w (lag + len)) as a product of sines
            2.0 * (w * (lag + 0.5 * len)).sin() * (0.5 * w * len).sin() / lam
        }
    }
}

/// `int_{s1}^{s2} cos(sqrt(lambda) (t - s)) ds`, the time derivative of the wave
/// kernel integrated over an interval; drives the velocity update.
pub fn wave_velocity_integral(alpha: usize, s1: f64, s2: f64, t: f64) -> f64 {
    let w = frequency(alpha);
    let len = s2 - s1;
    let lag = t - s2;
    2.0 * (w * (lag + 0.5 * len)).cos() * (0.5 * w * len).sin() / w
}

/// `int_a^b phi_alpha(y) dy` for the Dirichlet eigenfunction.
pub fn eigenfunction_interval_integral(alpha: usize, a: f64, b: f64) -> f64 {
    let w = frequency(alpha);
    2.0 * SQRT_2 * (0.5 * w * (a + b)).sin() * (0.5 * w * (b - a)).sin() / w
}

/// `int_{O_j} phi_alpha(y) dy` over space cell `j` of `grid`.
pub fn eigenfunction_cell_integral(alpha: usize, j: usize, grid: &Grid) -> f64 {
    debug_assert!(j < grid.n());
    eigenfunction_interval_integral(alpha, grid.x_node(j), grid.x_node(j + 1))
}

/// `int_0^t kernel(t - s)^2 ds`.
pub fn kernel_square_integral(flavor: Flavor, alpha: usize, t: f64) -> f64 {
    let lam = eigenvalue(alpha);
    match flavor {
        Flavor::Heat => -(-2.0 * lam * t).exp_m1() / (2.0 * lam),
        Flavor::Wave => {
            let w = frequency(alpha);
            (w * t - 0.5 * (2.0 * w * t).sin()) / (2.0 * lam * w)
        }
    }
}
