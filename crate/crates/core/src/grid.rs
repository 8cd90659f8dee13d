//! Uniform tensor partitions of `[0, T] x (0, 1)` and nested ladders of them.
//!
//! Cells are half-open, `I_i = (t_i, t_{i+1}]` and `O_j = (x_j, x_{j+1}]`, with
//! the points `t = 0` and `x = 0` assigned to cell 0.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform time-space partition with `m` time slabs of width `k = T/m` and
/// `n` space cells of width `h = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t_final: f64,
    m: usize,
    n: usize,
}

impl Grid {
    pub fn new(t_final: f64, m: usize, n: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return invalid(format!("final time must be positive, got {t_final}"));
        }
        if m == 0 || n == 0 {
            return invalid(format!("cell counts must be positive, got m={m}, n={n}"));
        }
        Ok(Self { t_final, m, n })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of time slabs.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of space cells.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Time step `k = T/m`.
    pub fn k(&self) -> f64 {
        self.t_final / self.m as f64
    }

    /// Space step `h = 1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t_node(&self, i: usize) -> f64 {
        if i == self.m {
            self.t_final
        } else {
            i as f64 * self.k()
        }
    }

    pub fn x_node(&self, j: usize) -> f64 {
        if j == self.n {
            1.0
        } else {
            j as f64 * self.h()
        }
    }

    /// Index of the slab `(t_i, t_{i+1}]` containing `t`, or `None` outside `[0, T]`.
    pub fn locate_time(&self, t: f64) -> Option<usize> {
        locate(t / self.k(), self.m, t >= 0.0 && t <= self.t_final * (1.0 + 1e-14))
    }

    /// Index of the cell `(x_j, x_{j+1}]` containing `x`, or `None` outside `[0, 1]`.
    pub fn locate_space(&self, x: f64) -> Option<usize> {
        locate(x * self.n as f64, self.n, (0.0..=1.0 + 1e-14).contains(&x))
    }

    /// True when every cell of `self` is a union of cells of `fine`.
    pub fn nests_in(&self, fine: &Grid) -> bool {
        same_final_time(self.t_final, fine.t_final)
            && fine.m.is_multiple_of(self.m)
            && fine.n.is_multiple_of(self.n)
    }

    /// Refinement factors `(fine.m / m, fine.n / n)`.
    pub fn refinement(&self, fine: &Grid) -> Result<(usize, usize)> {
        if !self.nests_in(fine) {
            return Err(Error::NotNested(format!(
                "coarse (T={}, m={}, n={}) vs fine (T={}, m={}, n={})",
                self.t_final, self.m, self.n, fine.t_final, fine.m, fine.n
            )));
        }
        Ok((fine.m / self.m, fine.n / self.n))
    }
}

fn same_final_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn locate(scaled: f64, count: usize, inside: bool) -> Option<usize> {
    if !inside {
        return None;
    }
    // a point within rounding of a node belongs to the cell on its left
    let nearest = scaled.round();
    let idx = if (scaled - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        scaled.ceil() as usize
    };
    Some(idx.saturating_sub(1).min(count - 1))
}

/// How the time step is tied to the space step along a ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// `k = h^2`, the optimal choice for the heat equation.
    Parabolic,
    /// `k = h`, the optimal choice for the wave equation.
    Hyperbolic,
    /// Same number of time slabs on every level.
    FixedSlabs(usize),
    /// Time slab counts given explicitly, one per level.
    Explicit(Vec<usize>),
}

/// A nested sequence of grids, coarsest first; the last level is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLadder {
    coupling: Coupling,
    levels: Vec<Grid>,
}

impl GridLadder {
    pub fn new(coupling: Coupling, n_levels: &[usize], t_final: f64) -> Result<Self> {
        if n_levels.is_empty() {
            return invalid("a ladder needs at least one level");
        }
        let slabs: Vec<usize> = match &coupling {
            Coupling::Parabolic => n_levels
                .iter()
                .map(|&n| integral_slabs(t_final * (n * n) as f64, n))
                .collect::<Result<_>>()?,
            Coupling::Hyperbolic => n_levels
                .iter()
                .map(|&n| integral_slabs(t_final * n as f64, n))
                .collect::<Result<_>>()?,
            Coupling::FixedSlabs(m) => vec![*m; n_levels.len()],
            Coupling::Explicit(ms) => {
                if ms.len() != n_levels.len() {
                    return invalid(format!(
                        "{} slab counts given for {} levels",
                        ms.len(),
                        n_levels.len()
                    ));
                }
                ms.clone()
            }
        };
        let levels = n_levels
            .iter()
            .zip(&slabs)
            .map(|(&n, &m)| Grid::new(t_final, m, n))
            .collect::<Result<Vec<_>>>()?;
        for pair in levels.windows(2) {
            if pair[1].n <= pair[0].n && pair[1].m <= pair[0].m {
                return Err(Error::NotNested(format!(
                    "level with n={} does not refine n={}",
                    pair[1].n, pair[0].n
                )));
            }
            pair[0].refinement(&pair[1])?;
        }
        Ok(Self { coupling, levels })
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn levels(&self) -> &[Grid] {
        &self.levels
    }

    pub fn reference(&self) -> &Grid {
        self.levels.last().expect("ladder is never empty")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

fn integral_slabs(value: f64, n: usize) -> Result<usize> {
    let rounded = value.round();
    if rounded < 1.0 || (value - rounded).abs() > 1e-9 * rounded {
        return invalid(format!(
            "coupling gives a fractional slab count {value} for n={n}"
        ));
    }
    Ok(rounded as usize)
}

/// Exponent `beta` of the norm `||u||_beta = ||(-Laplacian)^{beta/2} u||`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0.0);
    pub const H1: SobolevIndex = SobolevIndex(1.0);

    pub fn new(beta: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&beta) {
            return invalid(format!("Sobolev index {beta} outside [-1, 1]"));
        }
        Ok(Self(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `||u||_beta` from Dirichlet mode coefficients `u_1, u_2, ...`.
    pub fn norm(self, coeffs: &[f64]) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(a, &c)| crate::spectral::eigenvalue(a + 1).powf(self.0) * c * c)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn steps_follow_counts() {
        let g = Grid::new(1.0, 4, 2).unwrap();
        assert_eq!(g.k(), 0.25);
        assert_eq!(g.h(), 0.5);
        assert!((g.k() * g.m() as f64 - g.t_final()).abs() <= 1e-12);
    }

    #[test]
    fn single_cell_grid() {
        let g = Grid::new(1.0, 1, 1).unwrap();
        assert_eq!(g.locate_time(0.0), Some(0));
        assert_eq!(g.locate_time(1.0), Some(0));
        assert_eq!(g.locate_space(0.3), Some(0));
        assert_eq!(g.locate_space(1.0), Some(0));
    }

    #[test]
    fn right_endpoint_belongs_to_left_cell() {
        let g = Grid::new(1.0, 4, 2).unwrap();
        assert_eq!(g.locate_time(0.25), Some(0));
        assert_eq!(g.locate_time(0.2500001), Some(1));
        assert_eq!(g.locate_time(0.0), Some(0));
        assert_eq!(g.locate_time(1.0), Some(3));
        assert_eq!(g.locate_space(0.5), Some(0));
        assert_eq!(g.locate_time(1.5), None);
        assert_eq!(g.locate_space(-0.1), None);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Grid::new(0.0, 1, 1).is_err());
        assert!(Grid::new(-1.0, 1, 1).is_err());
        assert!(Grid::new(1.0, 0, 1).is_err());
        assert!(Grid::new(1.0, 1, 0).is_err());
    }

    #[test]
    fn parabolic_ladder_squares_n() {
        let l = GridLadder::new(Coupling::Parabolic, &[8, 16, 32], 1.0).unwrap();
        let ms: Vec<_> = l.levels().iter().map(|g| g.m()).collect();
        assert_eq!(ms, vec![64, 256, 1024]);
        assert_eq!(l.reference().n(), 32);
    }

    #[test]
    fn hyperbolic_ladder() {
        let l = GridLadder::new(Coupling::Hyperbolic, &[8, 16], 1.0).unwrap();
        let ms: Vec<_> = l.levels().iter().map(|g| g.m()).collect();
        assert_eq!(ms, vec![8, 16]);
    }

    #[test]
    fn ladder_rejects_non_nested_levels() {
        let err = GridLadder::new(Coupling::Parabolic, &[8, 12], 1.0).unwrap_err();
        assert!(matches!(err, Error::NotNested(_)));
        assert!(GridLadder::new(Coupling::Parabolic, &[16, 8], 1.0).is_err());
    }

    #[test]
    fn ladder_rejects_fractional_slab_counts() {
        assert!(GridLadder::new(Coupling::Hyperbolic, &[3, 6], 0.5).is_err());
        assert!(GridLadder::new(Coupling::Parabolic, &[2, 4], 0.3).is_err());
    }

    #[test]
    fn sobolev_norm_of_first_mode() {
        let h1 = SobolevIndex::H1.norm(&[1.0]);
        assert!((h1 - std::f64::consts::PI).abs() < 1e-14);
        assert!(SobolevIndex::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn locate_inverts_cell_midpoints(m in 1usize..200, n in 1usize..200, t_final in 0.01f64..10.0) {
            let g = Grid::new(t_final, m, n).unwrap();
            for i in 0..m {
                let mid = 0.5 * (g.t_node(i) + g.t_node(i + 1));
                prop_assert_eq!(g.locate_time(mid), Some(i));
                prop_assert_eq!(g.locate_time(g.t_node(i + 1)), Some(i));
            }
            for j in 0..n {
                let mid = 0.5 * (g.x_node(j) + g.x_node(j + 1));
                prop_assert_eq!(g.locate_space(mid), Some(j));
            }
        }

        #[test]
        fn coarse_cells_tile_fine_blocks(base in 1usize..6, r1 in 1usize..4, r2 in 2usize..4) {
            let ns = [base, base * r1 * r2];
            let l = GridLadder::new(Coupling::Hyperbolic, &ns, 1.0).unwrap();
            let (coarse, fine) = (&l.levels()[0], &l.levels()[1]);
            let (rt, rx) = coarse.refinement(fine).unwrap();
            for i in 0..coarse.m() {
                prop_assert!((coarse.t_node(i) - fine.t_node(i * rt)).abs() < 1e-14);
                prop_assert!((coarse.t_node(i + 1) - fine.t_node((i + 1) * rt)).abs() < 1e-14);
            }
            for j in 0..coarse.n() {
                prop_assert!((coarse.x_node(j) - fine.x_node(j * rx)).abs() < 1e-14);
            }
        }
    }
}
