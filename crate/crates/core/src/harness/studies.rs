//! Monte Carlo convergence studies.
//!
//! Every study draws one noise field per sample on the finest grid it needs
//! and aggregates it to the coarser levels, so all levels of a sample see the
//! same Brownian sheet. Samples are processed in parallel and reduced in
//! sample order, which makes the output independent of the thread count.

use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Check, ConvergenceReport, LevelRow, Scale, Series};
use crate::error::{Error, Result};
use crate::grid::{Coupling, Grid, GridLadder};
use crate::heat::{fem_project_modes, l2_error, l2_error_parseval, FemHeatSolver, SpectralHeatSolver, SpectralHeatState};
use crate::noise::{aggregate, sample_cell_increments, spatial_covariance, CellIncrements, SpatialCovariance};
use crate::rng::StreamKey;
use crate::spectral::{eigenvalue, Flavor};
use crate::wave::SpectralWaveSolver;
use crate::wong_zakai::{regularize, RegularizedNoise};

/// `(E X^p)^{1/p}` from per-sample values `X`, with its delta-method standard error.
pub fn moment_estimate(values: &[f64], p: u32) -> (f64, f64) {
    let n = values.len() as f64;
    let powers: Vec<f64> = values.iter().map(|v| v.abs().powi(p as i32)).collect();
    let mean = pairwise_sum(&powers) / n;
    let squares: Vec<f64> = powers.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&squares) / (n - 1.0).max(1.0);
    let se_mean = (var / n).sqrt();
    let est = mean.powf(1.0 / p as f64);
    let se = if mean > 0.0 { se_mean / (p as f64 * mean.powf(1.0 - 1.0 / p as f64)) } else { 0.0 };
    (est, se)
}

/// Sum by recursive halving, with plain summation below 32 terms.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Index of the slab boundary at which errors are measured, checked on every grid.
fn eval_index(cfg: &ExperimentConfig, grids: &[&Grid]) -> Result<Vec<usize>> {
    let t = cfg.eval_time();
    grids
        .iter()
        .map(|g| {
            let i = (t / g.k()).round();
            if !(0.0..=g.m() as f64).contains(&i) || (i * g.k() - t).abs() > 1e-12 * g.t_final() {
                Err(Error::Config(format!("evaluation time {t} is not a node of the grid with k = {}", g.k())))
            } else {
                Ok(i as usize)
            }
        })
        .collect()
}

/// Solution coefficients (displacement for the wave equation) at slab boundary `at`.
fn spectral_solution(flavor: Flavor, cfg: &ExperimentConfig, noise: &RegularizedNoise, modes: usize, at: usize) -> Result<Vec<f64>> {
    let g = noise.grid();
    let mut idx = 0;
    let mut captured = None;
    let u0 = cfg.initial.displacement();
    match flavor {
        Flavor::Heat => {
            let solver = SpectralHeatSolver::new(g.n(), g.k(), modes, cfg.drift.clone(), cfg.solver.spectral_substeps)?;
            solver.run(noise, &u0, |s| {
                if idx == at {
                    captured = Some(s.coeffs.clone());
                }
                idx += 1;
            })?;
        }
        Flavor::Wave => {
            let solver = SpectralWaveSolver::new(g.n(), g.k(), modes, cfg.drift.clone(), cfg.solver.wave_substeps)?;
            solver.run(noise, &u0, &cfg.initial.velocity(), |s| {
                if idx == at {
                    captured = Some(s.u.clone());
                }
                idx += 1;
            })?;
        }
    }
    Ok(captured.expect("evaluation index lies on the grid"))
}

/// `sqrt(sum_{alpha <= n} (a_alpha - b_alpha)^2)`, treating missing coefficients as zero.
fn coefficient_distance(a: &[f64], b: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn draw(grid: &Grid, cov: &SpatialCovariance, seed: u64, sample: usize) -> Result<CellIncrements> {
    sample_cell_increments(grid, cov, StreamKey::new(seed, sample as u64))
}

fn coupled(fine: &CellIncrements, grid: &Grid) -> Result<RegularizedNoise> {
    if grid == fine.grid() {
        Ok(regularize(fine))
    } else {
        Ok(regularize(&aggregate(fine, grid)?))
    }
}

fn parallel_samples<T: Send>(cfg: &ExperimentConfig, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.samples).into_par_iter().map(f).collect()
}

/// Per-level errors `errors[sample][level]` summarized into table rows.
fn summarize(cfg: &ExperimentConfig, grids: &[Grid], modes: &[usize], errors: &[Vec<f64>]) -> Vec<LevelRow> {
    (0..grids.len())
        .map(|l| {
            let col: Vec<f64> = errors.iter().map(|e| e[l]).collect();
            let (error, se) = moment_estimate(&col, cfg.moment);
            LevelRow { level: l, h: grids[l].h(), k: grids[l].k(), n_modes: modes[l], error, se, samples: col.len() }
        })
        .collect()
}

fn doubling_check(name: &str, rows: &[LevelRow], doubled: &[LevelRow], tol: f64) -> Check {
    let worst = rows.iter().zip(doubled).map(|(a, b)| ((b.error - a.error) / a.error).abs()).fold(0.0, f64::max);
    Check::new(
        format!("{name} reference truncation"),
        worst <= tol,
        format!("doubling the reference modes changes the errors by at most {worst:.2e} relative (limit {tol})"),
    )
}

fn finish(mut report: ConvergenceReport, start: Instant) -> ConvergenceReport {
    report.metadata.wall_time_s = start.elapsed().as_secs_f64();
    report
}

/// Wong-Zakai error `||u(t) - u_tilde(t)||` of the spectral heat (`Flavor::Heat`)
/// or wave (`Flavor::Wave`) equation against the regularization on a much finer
/// reference grid, measured by Parseval on the common modes.
pub fn run_wz_convergence(cfg: &ExperimentConfig, flavor: Flavor) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let kind = match flavor {
        Flavor::Heat => ExperimentKind::SheWz,
        Flavor::Wave => ExperimentKind::SweWz,
    };
    let finest = *cfg.levels.iter().max().ok_or_else(|| Error::Config("no levels given".into()))?;
    if cfg.reference_n < 4 * finest {
        return Err(Error::Config(format!("reference n = {} is not at least 4 times the finest level {finest}", cfg.reference_n)));
    }
    let coupling = cfg.coupling.clone().unwrap_or(match flavor {
        Flavor::Heat => Coupling::Parabolic,
        Flavor::Wave => Coupling::Hyperbolic,
    });
    let mut ns = cfg.levels.clone();
    ns.push(cfg.reference_n);
    let ladder = GridLadder::new(coupling, &ns, cfg.t_final)?;
    let grids = ladder.levels();
    let reference = ladder.reference();
    let at = eval_index(cfg, &grids.iter().collect::<Vec<_>>())?;
    let cov = spatial_covariance(reference, cfg.hurst)?;
    let modes = cfg.solver.wz_modes_factor * cfg.reference_n;
    let measured = cfg.levels.len();

    let per_sample = parallel_samples(cfg, |s| {
        let fine = draw(reference, &cov, cfg.seed, s)?;
        let noises = grids.iter().map(|g| coupled(&fine, g)).collect::<Result<Vec<_>>>()?;
        let solve_all = |n_modes: usize| -> Result<Vec<Vec<f64>>> {
            noises.iter().zip(&at).map(|(xi, &i)| spectral_solution(flavor, cfg, xi, n_modes, i)).collect()
        };
        // without drift the modes decouple, so a 2N solve also contains the N solve
        let (sol_n, sol_2n) = if cfg.drift.is_zero() {
            let s2 = solve_all(2 * modes)?;
            (s2.clone(), s2)
        } else {
            (solve_all(modes)?, solve_all(2 * modes)?)
        };
        let errs = |sol: &[Vec<f64>], n: usize| -> Vec<f64> {
            (0..measured).map(|l| coefficient_distance(&sol[l], &sol[measured], n)).collect()
        };
        Ok((errs(&sol_n, modes), errs(&sol_2n, 2 * modes)))
    })?;

    let (e_n, e_2n): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let rows = summarize(cfg, &grids[..measured], &vec![modes; measured], &e_n);
    let rows_2n = summarize(cfg, &grids[..measured], &vec![2 * modes; measured], &e_2n);
    let series = Series::new("h", Scale::H, rows, cfg.hurst);

    let mut report = ConvergenceReport::new(kind, cfg);
    report.checks.push(Check::rate(&series, cfg.hurst, cfg.rate_tolerance));
    report.checks.push(Check::monotone(&series));
    report.checks.push(doubling_check("h", &series.rows, &rows_2n, cfg.solver.doubling_tolerance));
    report.notes.push(format!(
        "reference grid n = {}, m = {}, {} modes; errors at t = {}",
        reference.n(),
        reference.m(),
        modes,
        cfg.eval_time()
    ));
    report.series.push(series);
    Ok(finish(report, start))
}

/// Finite element error `||u_tilde - u_tilde_h||` for the heat equation, with
/// the spectral solution on the same regularized noise as reference.
pub fn run_fem_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let coupling = cfg.coupling.clone().unwrap_or(Coupling::Parabolic);
    let ladder = GridLadder::new(coupling, &cfg.levels, cfg.t_final)?;
    let grids = ladder.levels();
    let finest = ladder.reference();
    let at = eval_index(cfg, &grids.iter().collect::<Vec<_>>())?;
    let cov = spatial_covariance(finest, cfg.hurst)?;
    let modes: Vec<usize> = grids.iter().map(|g| cfg.solver.fem_modes_factor * g.n()).collect();
    let u0 = cfg.initial.displacement();
    let u0_nodal = grids.iter().map(|g| fem_project_modes(&u0, g.n())).collect::<Result<Vec<_>>>()?;

    let per_sample = parallel_samples(cfg, |s| {
        let fine = draw(finest, &cov, cfg.seed, s)?;
        let mut e_n = Vec::with_capacity(grids.len());
        let mut e_2n = Vec::with_capacity(grids.len());
        let mut parseval_gap: f64 = 0.0;
        for (l, g) in grids.iter().enumerate() {
            let xi = coupled(&fine, g)?;
            let fem_solver = FemHeatSolver::new(g.n(), g.k(), cfg.drift.clone(), cfg.solver.fem_substeps)?;
            let mut idx = 0;
            let mut fem = None;
            fem_solver.run(&xi, &u0_nodal[l], |st| {
                if idx == at[l] {
                    fem = Some(st.clone());
                }
                idx += 1;
            })?;
            let fem = fem.expect("evaluation index lies on the grid");
            let time = g.t_node(at[l]);
            let (spec_n, spec_2n) = if cfg.drift.is_zero() {
                let c = spectral_solution(Flavor::Heat, cfg, &xi, 2 * modes[l], at[l])?;
                (c[..modes[l]].to_vec(), c)
            } else {
                (
                    spectral_solution(Flavor::Heat, cfg, &xi, modes[l], at[l])?,
                    spectral_solution(Flavor::Heat, cfg, &xi, 2 * modes[l], at[l])?,
                )
            };
            let spec_n = SpectralHeatState { time, coeffs: spec_n };
            let spec_2n = SpectralHeatState { time, coeffs: spec_2n };
            let fem = crate::heat::FemHeatState { time, nodal: fem.nodal };
            let e = l2_error(&spec_n, &fem, cfg.solver.quad_points)?;
            if s == 0 {
                parseval_gap = parseval_gap.max((e - l2_error_parseval(&spec_n, &fem)).abs() / e);
            }
            e_n.push(e);
            e_2n.push(l2_error(&spec_2n, &fem, cfg.solver.quad_points)?);
        }
        Ok((e_n, e_2n, parseval_gap))
    })?;

    let gap = per_sample.iter().map(|p| p.2).fold(0.0, f64::max);
    let e_n: Vec<Vec<f64>> = per_sample.iter().map(|p| p.0.clone()).collect();
    let e_2n: Vec<Vec<f64>> = per_sample.iter().map(|p| p.1.clone()).collect();
    let rows = summarize(cfg, grids, &modes, &e_n);
    let doubled: Vec<usize> = modes.iter().map(|m| 2 * m).collect();
    let rows_2n = summarize(cfg, grids, &doubled, &e_2n);
    let expected = cfg.hurst.min(0.5);
    let series = Series::new("h", Scale::H, rows, expected);

    let mut report = ConvergenceReport::new(ExperimentKind::SheFem, cfg);
    report.checks.push(Check::rate(&series, expected, cfg.rate_tolerance));
    report.checks.push(Check::monotone(&series));
    report.checks.push(doubling_check("h", &series.rows, &rows_2n, cfg.solver.doubling_tolerance));
    report.checks.push(Check::new(
        "quadrature against Parseval",
        gap <= 1e-6,
        format!("largest relative gap on the first sample {gap:.2e}"),
    ));
    report.notes.push(format!("{} finite element substeps per slab; errors at t = {}", cfg.solver.fem_substeps, cfg.eval_time()));
    report.series.push(series);
    Ok(finish(report, start))
}

/// `||u_N - u_ref||` including the reference modes beyond `N`.
fn truncation_error(u_n: &[f64], u_ref: &[f64]) -> f64 {
    let head = coefficient_distance(u_n, u_ref, u_n.len());
    let tail: f64 = u_ref[u_n.len()..].iter().map(|c| c * c).sum();
    (head * head + tail).sqrt()
}

fn h1_of(u: &[f64]) -> f64 {
    u.iter().enumerate().map(|(a, c)| eigenvalue(a + 1) * c * c).sum::<f64>().sqrt()
}

/// Spectral Galerkin study of the wave equation: the truncation error against
/// the number of modes at fixed noise mesh (series `N`), against the noise
/// mesh at a fixed number of modes (series `h`), and the growth of the
/// `H^1` norm of the regularized solution as the mesh is refined (series `h1`).
pub fn run_spectral_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let coupling = cfg.coupling.clone().unwrap_or(Coupling::Hyperbolic);
    let tol_double = cfg.solver.doubling_tolerance;
    let mut report = ConvergenceReport::new(ExperimentKind::SweSpectral, cfg);

    // mode ladder at a fixed noise mesh
    let fixed = *GridLadder::new(coupling.clone(), &[cfg.fixed_n], cfg.t_final)?.reference();
    let at_fixed = eval_index(cfg, &[&fixed])?[0];
    let cov_fixed = spatial_covariance(&fixed, cfg.hurst)?;
    let n_max = *cfg.mode_levels.iter().max().ok_or_else(|| Error::Config("no mode levels given".into()))?;
    let n_ref = cfg.solver.swe_reference_factor * n_max;
    let per_sample = parallel_samples(cfg, |s| {
        let xi = regularize(&draw(&fixed, &cov_fixed, cfg.seed, s)?);
        let (r1, r2) = if cfg.drift.is_zero() {
            let r2 = spectral_solution(Flavor::Wave, cfg, &xi, 2 * n_ref, at_fixed)?;
            (r2[..n_ref].to_vec(), r2)
        } else {
            (spectral_solution(Flavor::Wave, cfg, &xi, n_ref, at_fixed)?, spectral_solution(Flavor::Wave, cfg, &xi, 2 * n_ref, at_fixed)?)
        };
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        for &n in &cfg.mode_levels {
            let u = if cfg.drift.is_zero() { r2[..n].to_vec() } else { spectral_solution(Flavor::Wave, cfg, &xi, n, at_fixed)? };
            e1.push(truncation_error(&u, &r1));
            e2.push(truncation_error(&u, &r2));
        }
        Ok((e1, e2))
    })?;
    let grids_n = vec![fixed; cfg.mode_levels.len()];
    let (e1, e2): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let rows = summarize(cfg, &grids_n, &cfg.mode_levels, &e1);
    let rows_2 = summarize(cfg, &grids_n, &cfg.mode_levels, &e2);
    let series_n = Series::new("N", Scale::N, rows, -1.0);
    report.checks.push(Check::rate(&series_n, -1.0, cfg.rate_tolerance));
    report.checks.push(Check::monotone(&series_n));
    report.checks.push(doubling_check("N", &series_n.rows, &rows_2, tol_double));
    report.series.push(series_n);

    // mesh ladder at a fixed number of modes, and the H^1 growth on the same draws
    let ladder = GridLadder::new(coupling, &cfg.levels, cfg.t_final)?;
    let grids = ladder.levels();
    let finest = ladder.reference();
    let at = eval_index(cfg, &grids.iter().collect::<Vec<_>>())?;
    let cov = spatial_covariance(finest, cfg.hurst)?;
    let n_fixed = cfg.fixed_modes;
    let n_ref_h = cfg.solver.swe_reference_factor * n_fixed;
    let n_h1 = cfg.solver.swe_reference_factor * finest.n();
    let per_sample = parallel_samples(cfg, |s| {
        let fine = draw(finest, &cov, cfg.seed, s)?;
        let mut out = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for (l, g) in grids.iter().enumerate() {
            let xi = coupled(&fine, g)?;
            let big = if cfg.drift.is_zero() { 2 * n_h1.max(n_ref_h) } else { 2 * n_ref_h };
            let r = spectral_solution(Flavor::Wave, cfg, &xi, big, at[l])?;
            let (u, r1, r2) = if cfg.drift.is_zero() {
                (r[..n_fixed].to_vec(), r[..n_ref_h].to_vec(), r[..2 * n_ref_h].to_vec())
            } else {
                (
                    spectral_solution(Flavor::Wave, cfg, &xi, n_fixed, at[l])?,
                    spectral_solution(Flavor::Wave, cfg, &xi, n_ref_h, at[l])?,
                    r.clone(),
                )
            };
            out[0].push(truncation_error(&u, &r1));
            out[1].push(truncation_error(&u, &r2));
            let (h1a, h1b) = if cfg.drift.is_zero() {
                (h1_of(&r[..n_h1]), h1_of(&r[..2 * n_h1]))
            } else {
                (
                    h1_of(&spectral_solution(Flavor::Wave, cfg, &xi, n_h1, at[l])?),
                    h1_of(&spectral_solution(Flavor::Wave, cfg, &xi, 2 * n_h1, at[l])?),
                )
            };
            out[2].push(h1a);
            out[3].push(h1b);
        }
        Ok(out)
    })?;
    let column = |i: usize| -> Vec<Vec<f64>> { per_sample.iter().map(|o| o[i].clone()).collect() };
    let expected = cfg.hurst - 1.0;

    let rows = summarize(cfg, grids, &vec![n_fixed; grids.len()], &column(0));
    let rows_2 = summarize(cfg, grids, &vec![n_fixed; grids.len()], &column(1));
    let series_h = Series::new("h", Scale::H, rows, expected);
    report.checks.push(Check::rate(&series_h, expected, cfg.rate_tolerance));
    report.checks.push(Check::monotone(&series_h));
    report.checks.push(doubling_check("h", &series_h.rows, &rows_2, tol_double));
    report.series.push(series_h);

    let h1_cfg = ExperimentConfig { moment: 2, ..cfg.clone() };
    let rows = summarize(&h1_cfg, grids, &vec![n_h1; grids.len()], &column(2));
    let rows_2 = summarize(&h1_cfg, grids, &vec![2 * n_h1; grids.len()], &column(3));
    let series_h1 = Series::new("h1", Scale::H, rows, expected);
    report.checks.push(Check::rate(&series_h1, expected, cfg.rate_tolerance));
    report.checks.push(Check::monotone(&series_h1));
    report.checks.push(doubling_check("h1", &series_h1.rows, &rows_2, tol_double));
    report.series.push(series_h1);

    report.notes.push(format!(
        "mode ladder on n = {} with reference N = {n_ref}; mesh ladder at N = {n_fixed} with reference N = {n_ref_h}; H1 norm with N = {n_h1}",
        cfg.fixed_n
    ));
    Ok(finish(report, start))
}
