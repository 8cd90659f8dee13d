//! Spectral Galerkin solver for the regularized stochastic wave equation
//! `u_tt = u_xx + b(u) + xi` with homogeneous Dirichlet data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drift::{DriftProjector, DriftSpec};
use crate::error::{invalid, Error, Result};
use crate::grid::SobolevIndex;
use crate::heat::DRIFT_OVERSAMPLING;
use crate::spectral::{eigenvalue, frequency};
use crate::wong_zakai::{RegularizedNoise, SlabProjector};

pub const DEFAULT_WAVE_SUBSTEPS: usize = 8;

/// Displacement and velocity coefficients in the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl WaveState {
    pub fn zeros(n_modes: usize) -> Self {
        Self { time: 0.0, u: vec![0.0; n_modes], v: vec![0.0; n_modes] }
    }

    pub fn n_modes(&self) -> usize {
        self.u.len()
    }

    /// `v_alpha^2 + lambda_alpha u_alpha^2` for each mode.
    pub fn mode_energies(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).enumerate().map(|(a, (u, v))| v * v + eigenvalue(a + 1) * u * u).collect()
    }

    pub fn energy(&self) -> f64 {
        self.mode_energies().iter().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        SobolevIndex::L2.norm(&self.u)
    }

    pub fn h1_norm(&self) -> f64 {
        h1_norm(self)
    }
}

/// `(sum_alpha lambda_alpha u_alpha^2)^{1/2}`.
pub fn h1_norm(state: &WaveState) -> f64 {
    SobolevIndex::H1.norm(&state.u)
}

/// `||u - P_N u||` as the Parseval sum over the modes above `n_small`.
pub fn projection_error(state: &WaveState, n_small: usize) -> Result<f64> {
    if n_small >= state.n_modes() {
        return invalid(format!("cut-off {n_small} is not below the {} resolved modes", state.n_modes()));
    }
    Ok(state.u[n_small..].iter().map(|c| c * c).sum::<f64>().sqrt())
}

/// Exact per-mode rotation over a step `dt`, with constant forcing.
#[derive(Debug, Clone)]
struct Rotation {
    cos: Vec<f64>,
    sin_over_w: Vec<f64>,
    w_sin: Vec<f64>,
    /// `2 sin^2(w dt / 2) / lambda`, the displacement response to unit forcing.
    force_u: Vec<f64>,
}

impl Rotation {
    fn new(n_modes: usize, dt: f64) -> Self {
        let mut r = Rotation { cos: vec![], sin_over_w: vec![], w_sin: vec![], force_u: vec![] };
        for a in 1..=n_modes {
            let w = frequency(a);
            let (s, c) = (w * dt).sin_cos();
            let half = (0.5 * w * dt).sin();
            r.cos.push(c);
            r.sin_over_w.push(s / w);
            r.w_sin.push(w * s);
            r.force_u.push(2.0 * half * half / (w * w));
        }
        r
    }

    fn apply(&self, u: &mut [f64], v: &mut [f64], forcing: Option<&[f64]>) {
        for a in 0..u.len() {
            let f = forcing.map_or(0.0, |f| f[a]);
            let (u0, v0) = (u[a], v[a]);
            u[a] = self.cos[a] * u0 + self.sin_over_w[a] * v0 + f * self.force_u[a];
            v[a] = -self.w_sin[a] * u0 + self.cos[a] * v0 + f * self.sin_over_w[a];
        }
    }
}

/// Advance the unforced linear wave equation by `dt` (of either sign).
pub fn free_evolution(state: &mut WaveState, dt: f64) {
    Rotation::new(state.n_modes(), dt).apply(&mut state.u, &mut state.v, None);
    state.time += dt;
}

#[derive(Debug, Clone)]
pub struct SpectralWaveSolver {
    n_modes: usize,
    substeps: usize,
    drift: DriftSpec,
    projector: SlabProjector,
    drift_projector: Option<DriftProjector>,
    slab: Rotation,
    sub: Rotation,
}

impl SpectralWaveSolver {
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
            slab: Rotation::new(n_modes, k),
            sub: Rotation::new(n_modes, k / substeps as f64),
        })
    }

    pub fn step(&self, state: &mut WaveState, noise: &RegularizedNoise, i: usize, forcing: &mut [f64]) -> Result<()> {
        self.projector.project(noise.slab(i), forcing);
        match &self.drift_projector {
            None => self.slab.apply(&mut state.u, &mut state.v, Some(forcing)),
            Some(dp) => {
                let mut b = vec![0.0; self.n_modes];
                for _ in 0..self.substeps {
                    dp.project(&self.drift, &state.u, &mut b);
                    b.iter_mut().zip(forcing.iter()).for_each(|(b, p)| *b += p);
                    self.sub.apply(&mut state.u, &mut state.v, Some(&b));
                }
            }
        }
        state.time = noise.grid().t_node(i + 1);
        if state.u.iter().chain(&state.v).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(state.time));
        }
        Ok(())
    }

    pub fn run(&self, noise: &RegularizedNoise, u0: &[f64], v0: &[f64], mut observe: impl FnMut(&WaveState)) -> Result<WaveState> {
        let mut state = WaveState::zeros(self.n_modes);
        let (lu, lv) = (u0.len().min(self.n_modes), v0.len().min(self.n_modes));
        state.u[..lu].copy_from_slice(&u0[..lu]);
        state.v[..lv].copy_from_slice(&v0[..lv]);
        observe(&state);
        let mut forcing = vec![0.0; self.n_modes];
        for i in 0..noise.grid().m() {
            self.step(&mut state, noise, i, &mut forcing)?;
            observe(&state);
        }
        Ok(state)
    }
}

pub fn solve_swe_spectral(
    noise: &RegularizedNoise,
    u0: &[f64],
    v0: &[f64],
    drift: &DriftSpec,
    n_modes: usize,
    substeps: usize,
) -> Result<Vec<WaveState>> {
    let g = noise.grid();
    let solver = SpectralWaveSolver::new(g.n(), g.k(), n_modes, drift.clone(), substeps)?;
    let mut out = Vec::with_capacity(g.m() + 1);
    solver.run(noise, u0, v0, |s| out.push(s.clone()))?;
    Ok(out)
}

pub fn solve_swe_spectral_final(
    noise: &RegularizedNoise,
    u0: &[f64],
    v0: &[f64],
    drift: &DriftSpec,
    n_modes: usize,
    substeps: usize,
) -> Result<WaveState> {
    let g = noise.grid();
    SpectralWaveSolver::new(g.n(), g.k(), n_modes, drift.clone(), substeps)?.run(noise, u0, v0, |_| {})
}

pub fn write_wave_trajectory<W: Write>(mut out: W, states: &[WaveState]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.n_modes());
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=n).map(|a| format!("u{a}")))
        .chain((1..=n).map(|a| format!("v{a}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for s in states {
        let row: Vec<String> = std::iter::once(s.time).chain(s.u.iter().copied()).chain(s.v.iter().copied()).map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
