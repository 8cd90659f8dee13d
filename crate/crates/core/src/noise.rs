//! Exact sampling of the cell integrals of white-in-time, fractional-in-space
//! noise, their aggregation across nested grids, and the closed-form
//! isometry for grid step functions.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::rng::StreamKey;

/// Hurst index of the spatial fractional Brownian motion, restricted to `(0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    hurst: f64,
}

impl NoiseModel {
    pub fn new(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(Self { hurst })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `E[W(s, x) W(t, y)]` for the fractional sheet.
    pub fn sheet_covariance(&self, s: f64, x: f64, t: f64, y: f64) -> f64 {
        let two_h = 2.0 * self.hurst;
        s.min(t) * 0.5 * (x.powf(two_h) + y.powf(two_h) - (x - y).abs().powf(two_h))
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst <= 0.5 {
        Ok(())
    } else {
        Err(Error::HurstOutOfRange(hurst, "(0, 1/2]"))
    }
}

/// Covariance `Q` of the increments of a spatial fBm over the cells of a
/// uniform mesh, with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    hurst: f64,
    q: Array2<f64>,
    chol: Array2<f64>,
}

impl SpatialCovariance {
    /// Validate and factor an explicitly given matrix.
    pub fn from_matrix(hurst: f64, q: Array2<f64>) -> Result<Self> {
        check_hurst(hurst)?;
        let n = q.nrows();
        if q.ncols() != n {
            return invalid(format!("covariance must be square, got {:?}", q.dim()));
        }
        for r in 0..n {
            for c in 0..r {
                if q[[r, c]].to_bits() != q[[c, r]].to_bits() {
                    return Err(Error::NotSymmetric { row: r, col: c });
                }
            }
        }
        let chol = cholesky(&q)?;
        Ok(Self { hurst, q, chol })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn cholesky_factor(&self) -> &Array2<f64> {
        &self.chol
    }

    /// Smallest diagonal entry of the Cholesky factor.
    pub fn min_pivot(&self) -> f64 {
        self.chol.diag().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `Q_{jl} = h^{2H} (|d+1|^{2H} + |d-1|^{2H} - 2|d|^{2H}) / 2` with `d = j - l`.
pub fn spatial_covariance(grid: &Grid, hurst: f64) -> Result<SpatialCovariance> {
    check_hurst(hurst)?;
    let n = grid.n();
    let two_h = 2.0 * hurst;
    let scale = grid.h().powf(two_h);
    let lag: Vec<f64> = (0..n)
        .map(|d| {
            let d = d as f64;
            0.5 * scale * ((d + 1.0).powf(two_h) + (d - 1.0).abs().powf(two_h) - 2.0 * d.powf(two_h))
        })
        .collect();
    let q = Array2::from_shape_fn((n, n), |(j, l)| lag[j.abs_diff(l)]);
    SpatialCovariance::from_matrix(hurst, q)
}

/// Dense lower Cholesky factor; breakdown is reported, never regularized.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j).to_owned();
        let d = a[[j, j]] - row_j.slice(ndarray::s![..j]).dot(&row_j.slice(ndarray::s![..j]));
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::CholeskyBreakdown { index: j, pivot: d });
        }
        let pivot = d.sqrt();
        l[[j, j]] = pivot;
        for i in j + 1..n {
            let s = a[[i, j]] - l.row(i).slice(ndarray::s![..j]).dot(&row_j.slice(ndarray::s![..j]));
            l[[i, j]] = s / pivot;
        }
    }
    Ok(l)
}

/// The `m x n` matrix of noise integrals over the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIncrements {
    grid: Grid,
    values: Array2<f64>,
    key: Option<StreamKey>,
}

impl CellIncrements {
    pub fn from_values(grid: Grid, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.m(), grid.n()) {
            return invalid(format!("expected {}x{} increments, got {:?}", grid.m(), grid.n(), values.dim()));
        }
        Ok(Self { grid, values, key: None })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: Array2::zeros((grid.m(), grid.n())), key: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Stream the increments were drawn from, if they were sampled.
    pub fn stream(&self) -> Option<StreamKey> {
        self.key
    }

    /// Row-major CSV with a `T,m,n,H,seed` header line.
    pub fn write_csv<W: Write>(&self, mut out: W, hurst: f64) -> Result<()> {
        let g = &self.grid;
        writeln!(out, "T,m,n,H,seed")?;
        let seed = self.key.map(|k| k.seed.to_string()).unwrap_or_default();
        writeln!(out, "{:.17e},{},{},{:.17e},{}", g.t_final(), g.m(), g.n(), hurst, seed)?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the format of [`CellIncrements::write_csv`], returning the increments and `H`.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, f64)> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines.next().transpose()?.ok_or_else(|| Error::InvalidArgument(format!("missing {what}")))
        };
        if next("header")?.trim() != "T,m,n,H,seed" {
            return invalid("expected a T,m,n,H,seed header");
        }
        let meta = next("metadata line")?;
        let f: Vec<&str> = meta.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return invalid(format!("malformed metadata line {meta:?}"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad count {s:?}")));
        let grid = Grid::new(num(f[0])?, int(f[1])?, int(f[2])?)?;
        let hurst = num(f[3])?;
        let mut values = Array2::zeros((grid.m(), grid.n()));
        for i in 0..grid.m() {
            let row = next("increment row")?;
            let cells: Vec<&str> = row.split(',').collect();
            if cells.len() != grid.n() {
                return invalid(format!("row {i} has {} entries, expected {}", cells.len(), grid.n()));
            }
            for (j, c) in cells.iter().enumerate() {
                values[[i, j]] = num(c.trim())?;
            }
        }
        Ok((Self::from_values(grid, values)?, hurst))
    }
}

/// Draw `sqrt(k) L z` for every time slab, with `z` taken from the
/// `(seed, sample, row)` stream.
pub fn sample_cell_increments(grid: &Grid, cov: &SpatialCovariance, key: StreamKey) -> Result<CellIncrements> {
    if cov.n() != grid.n() {
        return invalid(format!("covariance is {}x{}, grid has n = {}", cov.n(), cov.n(), grid.n()));
    }
    let (m, n) = (grid.m(), grid.n());
    let mut z = Array2::<f64>::zeros((m, n));
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        key.fill_normals(i, row.as_slice_mut().expect("standard layout"));
    }
    let mut values = z.dot(&cov.chol.t());
    values *= grid.k().sqrt();
    Ok(CellIncrements { grid: *grid, values, key: Some(key) })
}

/// Sum fine increments over the blocks of fine cells tiling each coarse cell.
pub fn aggregate(fine: &CellIncrements, coarse: &Grid) -> Result<CellIncrements> {
    let (rt, rx) = coarse.refinement(&fine.grid)?;
    if rt == 1 && rx == 1 {
        return Ok(CellIncrements { grid: *coarse, values: fine.values.clone(), key: fine.key });
    }
    let mut out = Array2::<f64>::zeros((coarse.m(), coarse.n()));
    for (i, mut orow) in out.axis_iter_mut(Axis(0)).enumerate() {
        for fi in i * rt..(i + 1) * rt {
            let frow = fine.values.row(fi);
            for (j, o) in orow.iter_mut().enumerate() {
                for fj in j * rx..(j + 1) * rx {
                    *o += frow[fj];
                }
            }
        }
    }
    Ok(CellIncrements { grid: *coarse, values: out, key: fine.key })
}

/// `int_a^b int_c^d |y - z|^{2H - 2} dz dy` for `a < b <= c < d` and `H < 1/2`.
pub fn singular_cell_integral(a: f64, b: f64, c: f64, d: f64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(Error::HurstOutOfRange(hurst, "(0, 1/2)"));
    }
    if !(a < b && b <= c && c < d) {
        return invalid(format!("cells [{a}, {b}] and [{c}, {d}] overlap or are unordered"));
    }
    let p = 2.0 * hurst;
    let v = ((d - a).powf(p) - (d - b).powf(p) - (c - a).powf(p) + (c - b).powf(p)) / (p * (p - 1.0));
    Ok(v)
}

/// `int_a^b (y^{2H-1} + (1 - y)^{2H-1}) dy`.
pub fn boundary_weight_integral(a: f64, b: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return invalid(format!("[{a}, {b}] is not a subinterval of [0, 1]"));
    }
    let p = 2.0 * hurst;
    Ok((b.powf(p) - a.powf(p) + (1.0 - a).powf(p) - (1.0 - b).powf(p)) / p)
}

/// A function that is constant on the rectangles of a tensor partition of
/// `[t_0, t_P] x [x_0, x_Q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction2D {
    t_breaks: Vec<f64>,
    x_breaks: Vec<f64>,
    coeffs: Array2<f64>,
}

impl StepFunction2D {
    pub fn new(t_breaks: Vec<f64>, x_breaks: Vec<f64>, coeffs: Array2<f64>) -> Result<Self> {
        let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&t_breaks) || !increasing(&x_breaks) {
            return invalid("breakpoints must be strictly increasing with at least one cell");
        }
        if x_breaks[0] < 0.0 || *x_breaks.last().unwrap() > 1.0 || t_breaks[0] < 0.0 {
            return invalid("step function must live in [0, T] x [0, 1]");
        }
        if coeffs.dim() != (t_breaks.len() - 1, x_breaks.len() - 1) {
            return invalid(format!("coefficient shape {:?} does not match the breakpoints", coeffs.dim()));
        }
        Ok(Self { t_breaks, x_breaks, coeffs })
    }

    /// Step function constant on the cells of `grid`.
    pub fn on_grid(grid: &Grid, coeffs: Array2<f64>) -> Result<Self> {
        let t = (0..=grid.m()).map(|i| grid.t_node(i)).collect();
        let x = (0..=grid.n()).map(|j| grid.x_node(j)).collect();
        Self::new(t, x, coeffs)
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { coeffs: &self.coeffs * c, ..self.clone() }
    }
}

/// `E[(int int f dxi)^2]` for a step function, evaluated exactly.
pub fn ito_isometry_variance(f: &StepFunction2D, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let xb = &f.x_breaks;
    let nx = xb.len() - 1;
    let white = hurst == 0.5;

    // pairwise singular integrals and boundary weights depend only on the space partition
    let mut pair = Array2::<f64>::zeros((nx, nx));
    let mut weight = Array1::<f64>::zeros(nx);
    for j in 0..nx {
        weight[j] = if white { xb[j + 1] - xb[j] } else { hurst * boundary_weight_integral(xb[j], xb[j + 1], hurst)? };
        if !white {
            for l in j + 1..nx {
                pair[[j, l]] = hurst * (1.0 - 2.0 * hurst) * singular_cell_integral(xb[j], xb[j + 1], xb[l], xb[l + 1], hurst)?;
            }
        }
    }

    let mut total = 0.0;
    for (p, row) in f.coeffs.axis_iter(Axis(0)).enumerate() {
        let tau = f.t_breaks[p + 1] - f.t_breaks[p];
        let mut slab = 0.0;
        for j in 0..nx {
            slab += weight[j] * row[j] * row[j];
            for l in j + 1..nx {
                let d = row[j] - row[l];
                slab += pair[[j, l]] * d * d;
            }
        }
        total += tau * slab;
    }
    Ok(total)
}

/// `f^T (blockdiag k Q) f` for coefficients on the cells of `grid`.
pub fn covariance_quadratic_form(grid: &Grid, cov: &SpatialCovariance, coeffs: &Array2<f64>) -> Result<f64> {
    if coeffs.dim() != (grid.m(), grid.n()) || cov.n() != grid.n() {
        return invalid("coefficients, covariance and grid disagree in shape");
    }
    let qf = coeffs.dot(cov.matrix());
    Ok(grid.k() * (&qf * coeffs).sum())
}

/// Outcome of comparing the empirical variance of `sum f_ij dW_ij` with the isometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    pub empirical: f64,
    pub closed_form: f64,
    pub z_score: f64,
}

pub fn sampler_isometry_check(f: &StepFunction2D, hurst: f64, grid: &Grid, n_samples: usize, seed: u64) -> Result<IsometryCheck> {
    if f.coeffs.dim() != (grid.m(), grid.n()) {
        return invalid("step function must be constant on the grid cells");
    }
    if n_samples < 2 {
        return invalid("need at least two samples");
    }
    let cov = spatial_covariance(grid, hurst)?;
    let closed_form = ito_isometry_variance(f, hurst)?;
    let squares: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let dw = sample_cell_increments(grid, &cov, StreamKey::new(seed, s)).expect("shapes checked");
            let x = (&dw.values * &f.coeffs).sum();
            x * x
        })
        .collect();
    let n = n_samples as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z_score = if se > 0.0 { (mean - closed_form) / se } else { 0.0 };
    Ok(IsometryCheck { empirical: mean, closed_form, z_score })
}

/// Pooled empirical covariance of the rows of many sampled increment matrices,
/// with the standard error of every entry.
#[derive(Debug, Clone)]
pub struct RowCovarianceEstimate {
    pub mean_products: Array2<f64>,
    pub standard_errors: Array2<f64>,
    pub rows_used: usize,
}

pub fn estimate_row_covariance(grid: &Grid, cov: &SpatialCovariance, n_samples: usize, seed: u64) -> Result<RowCovarianceEstimate> {
    let n = grid.n();
    let blocks: Vec<(Array2<f64>, Array2<f64>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let dw = sample_cell_increments(grid, cov, StreamKey::new(seed, s)).expect("shapes checked");
            let mut sum = Array2::<f64>::zeros((n, n));
            let mut sq = Array2::<f64>::zeros((n, n));
            for row in dw.values.rows() {
                for j in 0..n {
                    for l in 0..n {
                        let p = row[j] * row[l];
                        sum[[j, l]] += p;
                        sq[[j, l]] += p * p;
                    }
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = Array2::<f64>::zeros((n, n));
    let mut sq = Array2::<f64>::zeros((n, n));
    for (a, b) in &blocks {
        sum += a;
        sq += b;
    }
    let rows = (n_samples * grid.m()) as f64;
    let mean = &sum / rows;
    let var = (&sq / rows - &mean * &mean) * (rows / (rows - 1.0));
    let se = var.mapv(|v| (v.max(0.0) / rows).sqrt());
    Ok(RowCovarianceEstimate { mean_products: mean, standard_errors: se, rows_used: rows as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_noise_covariance_is_diagonal() {
        let cov = spatial_covariance(&Grid::new(1.0, 1, 4).unwrap(), 0.5).unwrap();
        assert_eq!(cov.matrix(), &(Array2::<f64>::eye(4) * 0.25));
    }

    #[test]
    fn two_cell_covariance_by_hand() {
        let q = spatial_covariance(&Grid::new(1.0, 1, 2).unwrap(), 0.25).unwrap();
        let q = q.matrix();
        assert_relative_eq!(q[[0, 0]], 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(q[[1, 1]], 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(q[[0, 1]], 0.5 * (1.0 - 2.0 * 0.5f64.sqrt()), max_relative = 1e-14);
    }

    #[test]
    fn covariance_matches_vertex_expansion_of_sheet() {
        // Q_jl = E[(B(x_{j+1}) - B(x_j))(B(x_{l+1}) - B(x_l))] from the sheet at s = t = 1
        let g = Grid::new(1.0, 1, 7).unwrap();
        let model = NoiseModel::new(0.3).unwrap();
        let r = |x: f64, y: f64| model.sheet_covariance(1.0, x, 1.0, y);
        let cov = spatial_covariance(&g, 0.3).unwrap();
        for j in 0..7 {
            for l in 0..7 {
                let (a, b, c, d) = (g.x_node(j), g.x_node(j + 1), g.x_node(l), g.x_node(l + 1));
                let direct = r(b, d) - r(b, c) - r(a, d) + r(a, c);
                assert!((cov.matrix()[[j, l]] - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rough_noise_is_anti_persistent() {
        for &h in &[0.1, 0.2, 0.3, 0.4, 0.45] {
            for n in [2, 5, 16, 64] {
                let cov = spatial_covariance(&Grid::new(1.0, 1, n).unwrap(), h).unwrap();
                for ((j, l), v) in cov.matrix().indexed_iter() {
                    assert!(j == l || *v < 0.0);
                }
            }
        }
    }

    #[test]
    fn cholesky_succeeds_without_jitter_up_to_512_cells() {
        for &h in &[0.05, 0.1, 0.25, 0.4, 0.5] {
            let cov = spatial_covariance(&Grid::new(1.0, 1, 512).unwrap(), h).unwrap();
            assert!(cov.min_pivot() > 0.0);
        }
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let cov = spatial_covariance(&Grid::new(1.0, 1, 20).unwrap(), 0.2).unwrap();
        let l = cov.cholesky_factor();
        let back = l.dot(&l.t());
        for (a, b) in back.iter().zip(cov.matrix().iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn tampered_matrix_is_rejected() {
        let mut q = spatial_covariance(&Grid::new(1.0, 1, 4).unwrap(), 0.3).unwrap().matrix().clone();
        q[[2, 1]] += 1e-15;
        assert!(matches!(SpatialCovariance::from_matrix(0.3, q), Err(Error::NotSymmetric { row: 2, col: 1 })));
        let indefinite = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(SpatialCovariance::from_matrix(0.3, indefinite), Err(Error::CholeskyBreakdown { index: 1, .. })));
    }

    #[test]
    fn hurst_range_is_enforced() {
        let g = Grid::new(1.0, 1, 4).unwrap();
        assert!(spatial_covariance(&g, 0.0).is_err());
        assert!(spatial_covariance(&g, 0.6).is_err());
        assert!(NoiseModel::new(0.5).is_ok());
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = Grid::new(1.0, 6, 8).unwrap();
        let cov = spatial_covariance(&g, 0.3).unwrap();
        let a = sample_cell_increments(&g, &cov, StreamKey::new(5, 9)).unwrap();
        let b = sample_cell_increments(&g, &cov, StreamKey::new(5, 9)).unwrap();
        let c = sample_cell_increments(&g, &cov, StreamKey::new(5, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn single_cell_variance_matches() {
        let g = Grid::new(0.5, 4, 8).unwrap();
        let cov = spatial_covariance(&g, 0.3).unwrap();
        let samples = 20_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for s in 0..samples {
            let v = sample_cell_increments(&g, &cov, StreamKey::new(1, s)).unwrap().values()[[1, 3]];
            acc += v * v;
            acc2 += v.powi(4);
        }
        let mean = acc / samples as f64;
        let se = ((acc2 / samples as f64 - mean * mean) / samples as f64).sqrt();
        let expect = g.k() * g.h().powf(0.6);
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    #[test]
    fn aggregate_two_by_two_sums_everything() {
        let fine = CellIncrements::from_values(Grid::new(1.0, 2, 2).unwrap(), array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let coarse = aggregate(&fine, &Grid::new(1.0, 1, 1).unwrap()).unwrap();
        assert_eq!(coarse.values(), &array![[10.0]]);
    }

    #[test]
    fn aggregate_rejects_non_nested() {
        let fine = CellIncrements::zeros(Grid::new(1.0, 4, 6).unwrap());
        assert!(aggregate(&fine, &Grid::new(1.0, 2, 4).unwrap()).is_err());
    }

    #[test]
    fn aggregated_covariance_is_exactly_the_coarse_covariance() {
        // summing blocks of the fine covariance gives the coarse covariance in closed form
        for &h in &[0.1, 0.3, 0.5] {
            let fine = spatial_covariance(&Grid::new(1.0, 1, 8).unwrap(), h).unwrap();
            let coarse = spatial_covariance(&Grid::new(1.0, 1, 4).unwrap(), h).unwrap();
            for j in 0..4 {
                for l in 0..4 {
                    let s: f64 = (2 * j..2 * j + 2).flat_map(|a| (2 * l..2 * l + 2).map(move |b| (a, b))).map(|(a, b)| fine.matrix()[[a, b]]).sum();
                    assert!((s - coarse.matrix()[[j, l]]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn singular_integral_by_hand() {
        let v = singular_cell_integral(0.0, 1.0, 1.0, 2.0, 0.25).unwrap();
        assert_relative_eq!(v, (2f64.sqrt() - 2.0) / -0.25, max_relative = 1e-14);
        assert!(singular_cell_integral(0.0, 1.0, 0.5, 2.0, 0.25).is_err());
    }

    #[test]
    fn singular_integral_far_field_and_symmetry() {
        let (a, b, c, d) = (0.0, 0.01, 0.2, 0.21);
        let v = singular_cell_integral(a, b, c, d, 0.3).unwrap();
        let mid = 0.01 * 0.01 * 0.2f64.powf(0.6 - 2.0);
        assert!((v / mid - 1.0).abs() < 0.01);
        // mirror image x -> 1 - x swaps the roles of the two cells
        let w = singular_cell_integral(1.0 - d, 1.0 - c, 1.0 - b, 1.0 - a, 0.3).unwrap();
        assert_relative_eq!(v, w, max_relative = 1e-9);
    }

    #[test]
    fn singular_integral_matches_quadrature() {
        let (a, b, c, d, h) = (0.1, 0.3, 0.3, 0.45, 0.2);
        // inner integral over z as a function of r = b - y
        let inner = |r: f64| ((d - b + r).powf(0.4 - 1.0) - (c - b + r).powf(0.4 - 1.0)) / (0.4 - 1.0);
        let rule = crate::quad::GaussRule::new(20);
        let q = crate::quad::geometric_panels(b - a, 80, 0.6)
            .into_iter()
            .map(|(lo, hi)| rule.integrate(lo, hi, inner))
            .sum::<f64>();
        assert_relative_eq!(singular_cell_integral(a, b, c, d, h).unwrap(), q, max_relative = 1e-6);
    }

    #[test]
    fn boundary_weight_examples() {
        for &h in &[0.1, 0.3, 0.5] {
            assert_relative_eq!(boundary_weight_integral(0.0, 1.0, h).unwrap(), 1.0 / h, max_relative = 1e-14);
            let split = boundary_weight_integral(0.0, 0.5, h).unwrap() + boundary_weight_integral(0.5, 1.0, h).unwrap();
            assert_relative_eq!(split, 1.0 / h, max_relative = 1e-14);
        }
        assert_relative_eq!(boundary_weight_integral(0.2, 0.7, 0.5).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn isometry_of_single_cell_is_cell_variance() {
        let g = Grid::new(1.0, 4, 8).unwrap();
        for &h in &[0.1, 0.3, 0.5] {
            let mut c = Array2::zeros((4, 8));
            c[[2, 5]] = 1.0;
            let f = StepFunction2D::on_grid(&g, c).unwrap();
            assert_relative_eq!(ito_isometry_variance(&f, h).unwrap(), g.k() * g.h().powf(2.0 * h), max_relative = 1e-12);
        }
    }

    #[test]
    fn isometry_of_full_slab_is_slab_length() {
        let g = Grid::new(1.0, 4, 8).unwrap();
        let mut c = Array2::zeros((4, 8));
        c.row_mut(0).fill(1.0);
        let f = StepFunction2D::on_grid(&g, c).unwrap();
        assert_relative_eq!(ito_isometry_variance(&f, 0.2).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn isometry_of_zero_is_zero() {
        let g = Grid::new(1.0, 2, 3).unwrap();
        let f = StepFunction2D::on_grid(&g, Array2::zeros((2, 3))).unwrap();
        assert_eq!(ito_isometry_variance(&f, 0.3).unwrap(), 0.0);
        let chk = sampler_isometry_check(&f, 0.3, &g, 10, 0).unwrap();
        assert_eq!((chk.empirical, chk.closed_form, chk.z_score), (0.0, 0.0, 0.0));
    }

    #[test]
    fn white_noise_isometry_is_l2_norm() {
        let g = Grid::new(1.0, 3, 5).unwrap();
        let c = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64) - 0.7 * j as f64);
        let f = StepFunction2D::on_grid(&g, c.clone()).unwrap();
        let l2 = c.iter().map(|v| v * v).sum::<f64>() * g.k() * g.h();
        assert_relative_eq!(ito_isometry_variance(&f, 0.5).unwrap(), l2, max_relative = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn isometry_equals_covariance_quadratic_form(m in 1usize..8, n in 1usize..16, hi in 0usize..4, seed in any::<u64>()) {
            let h = [0.1, 0.25, 0.4, 0.5][hi];
            let g = Grid::new(0.7, m, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Array2::from_shape_fn((m, n), |_| rng.random_range(-2.0..2.0));
            let f = StepFunction2D::on_grid(&g, c.clone()).unwrap();
            let cov = spatial_covariance(&g, h).unwrap();
            let a = ito_isometry_variance(&f, h).unwrap();
            let b = covariance_quadratic_form(&g, &cov, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
            let scaled = ito_isometry_variance(&f.scaled(-3.0), h).unwrap();
            prop_assert!((scaled - 9.0 * a).abs() <= 1e-10 * a.abs().max(1e-300));
        }

        #[test]
        fn aggregation_is_pure_addition(seed in any::<u64>(), rt in 1usize..4, rx in 1usize..4) {
            let coarse = Grid::new(1.0, 2, 3).unwrap();
            let fine = Grid::new(1.0, 2 * rt, 3 * rx).unwrap();
            let cov = spatial_covariance(&fine, 0.3).unwrap();
            let dw = sample_cell_increments(&fine, &cov, StreamKey::new(seed, 0)).unwrap();
            let agg = aggregate(&dw, &coarse).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for fi in i * rt..(i + 1) * rt {
                        for fj in j * rx..(j + 1) * rx {
                            s += dw.values()[[fi, fj]];
                        }
                    }
                    prop_assert_eq!(s.to_bits(), agg.values()[[i, j]].to_bits());
                }
            }
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = Grid::new(1.0, 2, 3).unwrap();
        let cov = spatial_covariance(&g, 0.3).unwrap();
        let dw = sample_cell_increments(&g, &cov, StreamKey::new(4, 0)).unwrap();
        let mut buf = Vec::new();
        dw.write_csv(&mut buf, 0.3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "T,m,n,H,seed");
        assert_eq!(lines.len(), 4);
        let back: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(back, dw.values()[[0, 0]]);
    }
}
