//! Solvers for the regularized stochastic heat equation
//! `u_t = u_xx + b(u) + xi` on (0, 1) with homogeneous Dirichlet data.
//!
//! [`solve_she_spectral`] advances sine coefficients with the exact heat
//! semigroup, so with zero drift the only error is mode truncation.
//! [`solve_she_fem`] is the linear finite element method on the noise mesh,
//! stepped with backward Euler.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drift::{DriftProjector, DriftSpec};
use crate::error::{invalid, Error, Result};
use crate::quad::GaussRule;
use crate::spectral::{eigenvalue, frequency};
use crate::wong_zakai::{fem_load_row, RegularizedNoise, SlabProjector};

pub const DEFAULT_SPECTRAL_SUBSTEPS: usize = 8;
pub const DEFAULT_FEM_SUBSTEPS: usize = 4;
pub const DRIFT_OVERSAMPLING: usize = 8;

/// Dirichlet sine coefficients `u_1, ..., u_N` at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralHeatState {
    pub time: f64,
    pub coeffs: Vec<f64>,
}

impl SpectralHeatState {
    pub fn zeros(n_modes: usize) -> Self {
        Self { time: 0.0, coeffs: vec![0.0; n_modes] }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `sum_alpha u_alpha phi_alpha(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        sine_series(&self.coeffs, x)
    }
}

/// `sqrt(2) sum_alpha c_alpha sin(alpha pi x)` by the three-term recurrence.
pub fn sine_series(coeffs: &[f64], x: f64) -> f64 {
    let theta = std::f64::consts::PI * x;
    let two_cos = 2.0 * theta.cos();
    let (mut prev, mut cur) = (0.0, theta.sin());
    let mut acc = 0.0;
    for &c in coeffs {
        acc += c * cur;
        let next = two_cos * cur - prev;
        prev = cur;
        cur = next;
    }
    std::f64::consts::SQRT_2 * acc
}

/// Per-mode propagators of the heat semigroup over a step `dt`.
#[derive(Debug, Clone)]
struct HeatPropagator {
    decay: Vec<f64>,
    gain: Vec<f64>,
}

impl HeatPropagator {
    fn new(n_modes: usize, dt: f64) -> Self {
        let (decay, gain) = (1..=n_modes)
            .map(|a| {
                let lam = eigenvalue(a);
                ((-lam * dt).exp(), -(-lam * dt).exp_m1() / lam)
            })
            .unzip();
        Self { decay, gain }
    }
}

/// Reusable stepping machinery for a fixed noise mesh and truncation.
#[derive(Debug, Clone)]
pub struct SpectralHeatSolver {
    n_modes: usize,
    substeps: usize,
    drift: DriftSpec,
    projector: SlabProjector,
    drift_projector: Option<DriftProjector>,
    slab: HeatPropagator,
    sub: HeatPropagator,
}

impl SpectralHeatSolver {
    pub fn new(noise_n: usize, k: f64, n_modes: usize, drift: DriftSpec, substeps: usize) -> Result<Self> {
        if n_modes < 1 {
            return invalid("need at least one mode");
        }
        if substeps < 1 {
            return invalid("need at least one substep per slab");
        }
        drift.validate()?;
        let drift_projector = (!drift.is_zero()).then(|| DriftProjector::new(n_modes, DRIFT_OVERSAMPLING));
        Ok(Self {
            n_modes,
            substeps,
            drift,
            projector: SlabProjector::new(noise_n),
            drift_projector,
            slab: HeatPropagator::new(n_modes, k),
            sub: HeatPropagator::new(n_modes, k / substeps as f64),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Advance `state` across slab `i` of the noise.
    pub fn step(&self, state: &mut SpectralHeatState, noise: &RegularizedNoise, i: usize, forcing: &mut [f64]) -> Result<()> {
        let grid = noise.grid();
        self.projector.project(noise.slab(i), forcing);
        match &self.drift_projector {
            None => {
                for (((u, &p), &d), &g) in state.coeffs.iter_mut().zip(forcing.iter()).zip(&self.slab.decay).zip(&self.slab.gain) {
                    *u = d * *u + p * g;
                }
            }
            Some(dp) => {
                let mut b = vec![0.0; self.n_modes];
                for _ in 0..self.substeps {
                    dp.project(&self.drift, &state.coeffs, &mut b);
                    for a in 0..self.n_modes {
                        let u = &mut state.coeffs[a];
                        *u = self.sub.decay[a] * *u + (forcing[a] + b[a]) * self.sub.gain[a];
                    }
                }
            }
        }
        state.time = grid.t_node(i + 1);
        if state.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(state.time));
        }
        Ok(())
    }

    fn initial(&self, u0: &[f64]) -> SpectralHeatState {
        let mut coeffs = vec![0.0; self.n_modes];
        let len = u0.len().min(self.n_modes);
        coeffs[..len].copy_from_slice(&u0[..len]);
        SpectralHeatState { time: 0.0, coeffs }
    }

    /// Solve to the final time, handing every slab-boundary state to `observe`.
    pub fn run(&self, noise: &RegularizedNoise, u0: &[f64], mut observe: impl FnMut(&SpectralHeatState)) -> Result<SpectralHeatState> {
        let mut state = self.initial(u0);
        observe(&state);
        let mut forcing = vec![0.0; self.n_modes];
        for i in 0..noise.grid().m() {
            self.step(&mut state, noise, i, &mut forcing)?;
            observe(&state);
        }
        Ok(state)
    }
}

/// Spectral solve returning the states at every slab boundary `t_0, ..., t_m`.
pub fn solve_she_spectral(
    noise: &RegularizedNoise,
    u0: &[f64],
    drift: &DriftSpec,
    n_modes: usize,
    substeps: usize,
) -> Result<Vec<SpectralHeatState>> {
    let g = noise.grid();
    let solver = SpectralHeatSolver::new(g.n(), g.k(), n_modes, drift.clone(), substeps)?;
    let mut out = Vec::with_capacity(g.m() + 1);
    solver.run(noise, u0, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Spectral solve returning only the state at the final time.
pub fn solve_she_spectral_final(
    noise: &RegularizedNoise,
    u0: &[f64],
    drift: &DriftSpec,
    n_modes: usize,
    substeps: usize,
) -> Result<SpectralHeatState> {
    let g = noise.grid();
    SpectralHeatSolver::new(g.n(), g.k(), n_modes, drift.clone(), substeps)?.run(noise, u0, |_| {})
}

pub fn write_spectral_trajectory<W: Write>(mut out: W, states: &[SpectralHeatState]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.coeffs.len());
    let header: Vec<String> = std::iter::once("time".to_string()).chain((1..=n).map(|a| format!("u{a}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for s in states {
        let row: Vec<String> = std::iter::once(s.time).chain(s.coeffs.iter().copied()).map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Symmetric tridiagonal matrix stored by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn constant(size: usize, d: f64, o: f64) -> Self {
        Self { diag: vec![d; size], off: vec![o; size.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    /// LU factors for repeated Thomas solves.
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let mut pivots = Vec::with_capacity(n);
        let mut mults = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut p = self.diag[i];
            if i > 0 {
                let l = self.off[i - 1] / pivots[i - 1];
                p -= l * self.off[i - 1];
                mults.push(l);
            }
            if !(p.abs() > 0.0) {
                return invalid(format!("singular tridiagonal matrix at row {i}"));
            }
            pivots.push(p);
        }
        Ok(TridiagonalLu { pivots, mults, upper: self.off.clone() })
    }
}

#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    pivots: Vec<f64>,
    mults: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            b[i] -= self.mults[i - 1] * b[i - 1];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.upper[i] * b[i + 1];
            }
            b[i] /= self.pivots[i];
        }
    }
}

/// Consistent mass `(h/6) tridiag(1, 4, 1)` on the `n - 1` interior nodes.
pub fn mass_matrix(n: usize) -> SymTridiagonal {
    let h = 1.0 / n as f64;
    SymTridiagonal::constant(n - 1, 4.0 * h / 6.0, h / 6.0)
}

/// Stiffness `(1/h) tridiag(-1, 2, -1)` on the `n - 1` interior nodes.
pub fn stiffness_matrix(n: usize) -> SymTridiagonal {
    let h = 1.0 / n as f64;
    SymTridiagonal::constant(n - 1, 2.0 / h, -1.0 / h)
}

/// Smallest eigenvalue of the pencil `A v = lambda M v`.
pub fn discrete_first_eigenvalue(n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let c = (std::f64::consts::PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

/// Interior nodal values of a finite element function on a uniform mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemHeatState {
    pub time: f64,
    pub nodal: Vec<f64>,
}

impl FemHeatState {
    pub fn n(&self) -> usize {
        self.nodal.len() + 1
    }

    /// Value of the piecewise linear interpolant at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.n();
        let s = (x * n as f64).clamp(0.0, n as f64);
        let j = (s.floor() as usize).min(n - 1);
        let w = s - j as f64;
        let node = |i: usize| if i == 0 || i == n { 0.0 } else { self.nodal[i - 1] };
        (1.0 - w) * node(j) + w * node(j + 1)
    }

    /// `U^T M U`.
    pub fn mass_norm_sq(&self) -> f64 {
        let mu = mass_matrix(self.n()).mul(&self.nodal);
        mu.iter().zip(&self.nodal).map(|(a, b)| a * b).sum()
    }
}

/// `(phi_alpha, hat_j)` on a uniform mesh with `n` cells.
pub fn sine_hat_inner(alpha: usize, j: usize, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let s = frequency(alpha);
    std::f64::consts::SQRT_2 * (s * j as f64 * h).sin() * (2.0 - 2.0 * (s * h).cos()) / (s * s * h)
}

/// `P_h u` for a sine series `u`: solve `M U = ((u, hat_j))_j`.
pub fn fem_project_modes(coeffs: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return invalid("a mesh needs at least one interior node");
    }
    let mut load: Vec<f64> = (1..n)
        .map(|j| coeffs.iter().enumerate().map(|(a, c)| c * sine_hat_inner(a + 1, j, n)).sum())
        .collect();
    mass_matrix(n).factor()?.solve_in_place(&mut load);
    Ok(load)
}

/// Nodal interpolant of `f` at the interior nodes.
pub fn fem_interpolate(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    (1..n).map(|j| f(j as f64 / n as f64)).collect()
}

/// Backward Euler stepper for the finite element system on the noise mesh.
#[derive(Debug, Clone)]
pub struct FemHeatSolver {
    n: usize,
    dt: f64,
    substeps: usize,
    drift: DriftSpec,
    mass: SymTridiagonal,
    lu: TridiagonalLu,
}

impl FemHeatSolver {
    pub fn new(n: usize, k: f64, drift: DriftSpec, substeps: usize) -> Result<Self> {
        if n < 2 {
            return invalid("a mesh needs at least one interior node");
        }
        if substeps < 1 {
            return invalid("need at least one substep per slab");
        }
        drift.validate()?;
        let dt = k / substeps as f64;
        let mass = mass_matrix(n);
        let lu = mass.add_scaled(&stiffness_matrix(n), dt).factor()?;
        Ok(Self { n, dt, substeps, drift, mass, lu })
    }

    /// `(M + dt A) u+ = M u + dt (F + h b(u))` repeated over the substeps of one slab.
    pub fn step(&self, state: &mut FemHeatState, load: &[f64], t_end: f64) -> Result<()> {
        let h = 1.0 / self.n as f64;
        for _ in 0..self.substeps {
            let mut rhs = self.mass.mul(&state.nodal);
            for ((r, f), u) in rhs.iter_mut().zip(load).zip(&state.nodal) {
                *r += self.dt * (f + h * self.drift.eval(*u));
            }
            self.lu.solve_in_place(&mut rhs);
            state.nodal = rhs;
        }
        state.time = t_end;
        if state.nodal.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(t_end));
        }
        Ok(())
    }

    pub fn run(&self, noise: &RegularizedNoise, u0: &[f64], mut observe: impl FnMut(&FemHeatState)) -> Result<FemHeatState> {
        let g = noise.grid();
        if g.n() != self.n {
            return invalid(format!("noise mesh has {} cells, finite element mesh has {}", g.n(), self.n));
        }
        if u0.len() != self.n - 1 {
            return invalid(format!("expected {} interior values, got {}", self.n - 1, u0.len()));
        }
        let mut state = FemHeatState { time: 0.0, nodal: u0.to_vec() };
        observe(&state);
        for i in 0..g.m() {
            let load = fem_load_row(noise.slab(i), g.h());
            self.step(&mut state, &load, g.t_node(i + 1))?;
            observe(&state);
        }
        Ok(state)
    }
}

/// Finite element solve from interior nodal values `u0` (typically `P_h u_0`).
pub fn solve_she_fem(noise: &RegularizedNoise, u0: &[f64], drift: &DriftSpec, substeps: usize) -> Result<Vec<FemHeatState>> {
    let g = noise.grid();
    let solver = FemHeatSolver::new(g.n(), g.k(), drift.clone(), substeps)?;
    let mut out = Vec::with_capacity(g.m() + 1);
    solver.run(noise, u0, |s| out.push(s.clone()))?;
    Ok(out)
}

pub fn solve_she_fem_final(noise: &RegularizedNoise, u0: &[f64], drift: &DriftSpec, substeps: usize) -> Result<FemHeatState> {
    let g = noise.grid();
    FemHeatSolver::new(g.n(), g.k(), drift.clone(), substeps)?.run(noise, u0, |_| {})
}

/// `||u_spec - u_fem||` by composite Gauss-Legendre quadrature: each mesh cell
/// is split into enough panels to resolve the highest spectral mode, with
/// `quad_points` nodes per panel.
pub fn l2_error(spec: &SpectralHeatState, fem: &FemHeatState, quad_points: usize) -> Result<f64> {
    if (spec.time - fem.time).abs() > 1e-12 * spec.time.abs().max(1.0) {
        return invalid(format!("states at different times {} and {}", spec.time, fem.time));
    }
    let n = fem.n();
    let rule = GaussRule::new(quad_points.max(1));
    let panels = (spec.coeffs.len() as f64 / n as f64).ceil().max(1.0) as usize;
    let width = 1.0 / (n * panels) as f64;
    let mut acc = 0.0;
    for p in 0..n * panels {
        let a = p as f64 * width;
        acc += rule.integrate(a, a + width, |x| (spec.eval(x) - fem.eval(x)).powi(2));
    }
    Ok(acc.sqrt())
}

/// The same error from `||u||^2 - 2 (u, u_h) + U^T M U`, exact up to rounding.
pub fn l2_error_parseval(spec: &SpectralHeatState, fem: &FemHeatState) -> f64 {
    let n = fem.n();
    let cross: f64 = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(a, c)| c * fem.nodal.iter().enumerate().map(|(j, u)| u * sine_hat_inner(a + 1, j + 1, n)).sum::<f64>())
        .sum();
    let sq = spec.l2_norm().powi(2) - 2.0 * cross + fem.mass_norm_sq();
    sq.max(0.0).sqrt()
}
