//! Deterministic oracles for the eigenfunction estimates used by the error
//! analysis: truncated difference sums, the fractional Sobolev integral of an
//! eigenfunction and the cell-averaging defect sums of the time kernels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::quad::{geometric_panels, GaussRule};
use crate::spectral::{eigenvalue, frequency, kernel_square_integral, Boundary, EigenMode, Flavor};

/// A truncated series together with an analytic bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSum {
    pub partial: f64,
    pub tail_bound: f64,
}

impl TruncatedSum {
    pub fn upper(&self) -> f64 {
        self.partial + self.tail_bound
    }
}

/// `sum_{alpha <= N} (e_alpha(y) - e_alpha(z))^2 / lambda_alpha^kappa` for the
/// Dirichlet or Neumann eigenfunctions `e_alpha`.
pub fn lemma_sin_sum(boundary: Boundary, y: f64, z: f64, kappa: f64, n_trunc: usize) -> Result<TruncatedSum> {
    if !(0.5..1.5).contains(&kappa) {
        return invalid(format!("kappa = {kappa} outside [1/2, 3/2)"));
    }
    if n_trunc == 0 {
        return invalid("truncation must keep at least one mode");
    }
    let partial = (1..=n_trunc)
        .map(|a| {
            let e = EigenMode { alpha: a, boundary };
            let d = e.eval(y) - e.eval(z);
            d * d / e.eigenvalue().powf(kappa)
        })
        .sum();
    // (e(y) - e(z))^2 <= 8 and sum_{a > N} (a pi)^{-2 kappa} <= pi^{-2 kappa} N^{1 - 2 kappa} / (2 kappa - 1)
    let tail_bound = if kappa > 0.5 {
        8.0 * std::f64::consts::PI.powf(-2.0 * kappa) * (n_trunc as f64).powf(1.0 - 2.0 * kappa) / (2.0 * kappa - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(TruncatedSum { partial, tail_bound })
}

/// `sum_{alpha <= N} (phi_alpha(y) - phi_alpha(z))^2 int_0^t kernel_alpha(t - s)^2 ds`.
pub fn lemma_phi_sum(flavor: Flavor, y: f64, z: f64, t: f64, n_trunc: usize) -> TruncatedSum {
    let partial = (1..=n_trunc)
        .map(|a| {
            let e = EigenMode::dirichlet(a);
            let d = e.eval(y) - e.eval(z);
            d * d * kernel_square_integral(flavor, a, t)
        })
        .sum();
    let c = match flavor {
        Flavor::Heat => 0.5,
        Flavor::Wave => t,
    };
    let tail_bound = 8.0 * c / (std::f64::consts::PI.powi(2) * n_trunc as f64);
    TruncatedSum { partial, tail_bound }
}

/// `int_0^1 int_0^1 (phi_alpha(y) - phi_alpha(z))^2 / |y - z|^{2 - 2H} dy dz`.
///
/// After rescaling to `u = alpha pi y`, `v = alpha pi z` the integral is split
/// into the band `|u - v| <= 1`, integrated on geometrically graded panels in
/// the offset `u - v`, and its complement, integrated on unit panels.
pub fn lemma_sobolev_integral(alpha: usize, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return invalid(format!("H = {hurst} outside (0, 1/2)"));
    }
    if alpha == 0 {
        return invalid("modes are numbered from 1");
    }
    let rule = GaussRule::new(12);
    let a = frequency(alpha);
    let expo = 2.0 * hurst - 2.0;

    // inner integral over v in [0, a - r] of (sin(v + r) - sin v)^2, by unit panels
    let inner = |r: f64| -> f64 {
        let len = a - r;
        if len <= 0.0 {
            return 0.0;
        }
        let s = (0.5 * r).sin();
        let panels = len.ceil() as usize;
        let width = len / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = p as f64 * width;
            acc += rule.integrate(lo, lo + width, |v| {
                let c = (v + 0.5 * r).cos();
                4.0 * s * s * c * c
            });
        }
        acc
    };

    let band_end = a.min(1.0);
    let mut total = 0.0;
    for (lo, hi) in geometric_panels(band_end, 24, 0.2) {
        total += rule.integrate(lo, hi, |r| r.powf(expo) * inner(r));
    }
    if a > 1.0 {
        let panels = (a - 1.0).ceil() as usize;
        let width = (a - 1.0) / panels as f64;
        for p in 0..panels {
            let lo = 1.0 + p as f64 * width;
            total += rule.integrate(lo, lo + width, |r| r.powf(expo) * inner(r));
        }
    }
    // both orderings of (u, v), times the Jacobian and the sqrt(2) normalisation
    Ok(2.0 * eigenvalue(alpha).powf(-hurst) * 2.0 * total)
}

/// `sum_alpha Psi_alpha(t)` and `sum_alpha Upsilon_alpha(t)`, the defects of
/// replacing the time kernel by its slab average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiUpsilon {
    pub psi: TruncatedSum,
    pub upsilon: TruncatedSum,
}

/// Sums of the per-mode defects over `alpha <= n_trunc` at time `t`.
///
/// Per slab, with `g(s) = kernel(t - s)` (zero for `s > t`) and
/// `G = int_{I_i} g`, the defects are `Upsilon_i = k int g^2 - G^2` and
/// `Psi_i = k^2 int g^2 - k G^2 = k Upsilon_i`; both are evaluated in a
/// cancellation-free form.
pub fn psi_upsilon_sums(flavor: Flavor, grid: &Grid, t: f64, n_trunc: usize) -> Result<PsiUpsilon> {
    if !(0.0..=grid.t_final() * (1.0 + 1e-14)).contains(&t) {
        return invalid(format!("t = {t} outside [0, T]"));
    }
    let k = grid.k();
    let upsilon: f64 = (1..=n_trunc).map(|a| upsilon_mode(flavor, a, grid, t)).sum();
    // Upsilon_alpha <= k int_0^t g^2 <= k c / lambda_alpha
    let c = match flavor {
        Flavor::Heat => 0.5,
        Flavor::Wave => t,
    };
    let tail = k * c / (std::f64::consts::PI.powi(2) * n_trunc as f64);
    Ok(PsiUpsilon {
        psi: TruncatedSum { partial: k * upsilon, tail_bound: k * tail },
        upsilon: TruncatedSum { partial: upsilon, tail_bound: tail },
    })
}

/// `Upsilon_alpha(t)` for a single mode.
pub fn upsilon_mode(flavor: Flavor, alpha: usize, grid: &Grid, t: f64) -> f64 {
    let k = grid.k();
    let lam = eigenvalue(alpha);
    let mut acc = 0.0;
    // walk backwards from the slab holding t; heat contributions decay geometrically
    let last = match grid.locate_time(t) {
        Some(i) => i,
        None => return 0.0,
    };
    for i in (0..=last).rev() {
        let a = grid.t_node(i);
        if a >= t {
            continue;
        }
        let len = k.min(t - a);
        let lag = t - a - len;
        let term = match flavor {
            Flavor::Heat => {
                let decay = (-lam * lag).exp();
                if decay == 0.0 {
                    break;
                }
                let x = lam * len;
                let own = -(-x).exp_m1() * heat_bracket(x);
                let spill = lam * (k - len) * (-(-2.0 * x).exp_m1()) / 2.0;
                decay * decay * (own + spill) / (lam * lam)
            }
            Flavor::Wave => {
                let w = frequency(alpha);
                let x = w * len;
                let centre = (w * (lag + 0.5 * len)).sin();
                let own = 0.5 * x * x_minus_sin(x) - centre * centre * wave_bracket(x);
                let int_sq = (0.5 * len - (2.0 * w * (lag + len)).sin() / (4.0 * w) + (2.0 * w * lag).sin() / (4.0 * w)) / lam;
                own / (lam * lam) + (k - len) * int_sq
            }
        };
        acc += term;
    }
    acc
}

/// `y (1 + e^{-y}) / 2 - (1 - e^{-y})`, which is `y^3/12 + O(y^4)` near zero.
fn heat_bracket(y: f64) -> f64 {
    if y < 0.5 {
        // sum_{p >= 3} (-1)^{p-1} (p - 2) y^p / (2 p!)
        let mut term = y * y / 2.0; // y^2 / 2!
        let mut acc = 0.0;
        for p in 3..30 {
            term *= y / p as f64;
            let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * (p as f64 - 2.0) * term / 2.0;
        }
        acc
    } else {
        0.5 * y * (1.0 + (-y).exp()) + (-y).exp_m1()
    }
}

/// `x - sin x`.
fn x_minus_sin(x: f64) -> f64 {
    if x < 0.5 {
        let mut term = x;
        let mut acc = 0.0;
        for q in 1..15 {
            let p = 2 * q + 1;
            term *= x * x / ((p - 1) * p) as f64;
            acc += if q % 2 == 1 { term } else { -term };
        }
        acc
    } else {
        x - x.sin()
    }
}

/// `2 (1 - cos x) - x sin x`, which is `x^4/12 + O(x^6)` near zero.
fn wave_bracket(x: f64) -> f64 {
    if x < 0.5 {
        let mut fact = 2.0; // (2q)! for q = 1
        let mut pow = x * x;
        let mut acc = 0.0;
        for q in 2..15 {
            fact *= ((2 * q - 1) * 2 * q) as f64;
            pow *= x * x;
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (2 * q - 2) as f64 * pow / fact;
        }
        acc
    } else {
        2.0 * (1.0 - x.cos()) - x * x.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use crate::spectral::time_kernel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sin_sum_vanishes_on_diagonal() {
        let s = lemma_sin_sum(Boundary::Dirichlet, 0.3, 0.3, 1.0, 100).unwrap();
        assert_eq!(s.partial, 0.0);
    }

    #[test]
    fn sin_sum_respects_explicit_constant() {
        let s = lemma_sin_sum(Boundary::Dirichlet, 0.0, 0.5, 1.0, 10_000).unwrap();
        assert!(s.partial <= 8.0 / PI * 0.5, "{}", s.partial);
    }

    #[test]
    fn sin_sum_matches_green_function_identity() {
        // sum 2 sin sin / lambda is the Dirichlet Green's function min(1 - max); the
        // difference sum collapses to |y - z| (1 - |y - z|), and to |y - z| for cosines
        for &(y, z) in &[(0.1, 0.7), (0.25, 0.3), (0.9, 0.05)] {
            let d = f64::abs(y - z);
            let s = lemma_sin_sum(Boundary::Dirichlet, y, z, 1.0, 20_000).unwrap();
            assert!(s.partial <= d * (1.0 - d) && d * (1.0 - d) <= s.upper());
            let c = lemma_sin_sum(Boundary::Neumann, y, z, 1.0, 20_000).unwrap();
            assert!(c.partial <= d && d <= c.upper());
        }
    }

    #[test]
    fn sin_sum_rejects_kappa_out_of_range() {
        assert!(lemma_sin_sum(Boundary::Dirichlet, 0.1, 0.2, 1.5, 10).is_err());
        assert!(lemma_sin_sum(Boundary::Dirichlet, 0.1, 0.2, 0.4, 10).is_err());
    }

    #[test]
    fn sin_sum_is_monotone_in_truncation() {
        let mut prev = 0.0;
        for n in [1, 2, 5, 50, 500] {
            let s = lemma_sin_sum(Boundary::Dirichlet, 0.2, 0.45, 1.2, n).unwrap().partial;
            assert!(s >= prev);
            prev = s;
        }
    }

    /// 1-D reduction: the inner integral over the diagonal offset has a closed form,
    /// `I = 8 int_0^1 r^{2H-2} sin^2(a r/2) [(1 - r) - sin(a r)/a] dr`.
    fn sobolev_by_offset(alpha: usize, hurst: f64) -> f64 {
        let a = frequency(alpha);
        let f = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            r.powf(2.0 * hurst - 2.0) * (0.5 * a * r).sin().powi(2) * ((1.0 - r) - (a * r).sin() / a)
        };
        let panels = 8 * alpha;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = p as f64 / panels as f64;
            let hi = (p + 1) as f64 / panels as f64;
            total += if p == 0 {
                // r^{2H} behaviour at the origin: graded sub-panels
                geometric_panels(hi, 40, 0.5).into_iter().map(|(l, h)| adaptive_simpson(f, l, h, 1e-15)).sum::<f64>()
            } else {
                adaptive_simpson(f, lo, hi, 1e-14)
            };
        }
        8.0 * total
    }

    #[test]
    fn sobolev_integral_matches_offset_reduction() {
        for &h in &[0.1, 0.25, 0.4] {
            for alpha in [1, 2, 7, 20] {
                let q = lemma_sobolev_integral(alpha, h).unwrap();
                let r = sobolev_by_offset(alpha, h);
                assert_relative_eq!(q, r, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn sobolev_integral_rejects_white_noise_case() {
        assert!(lemma_sobolev_integral(1, 0.5).is_err());
        assert!(lemma_sobolev_integral(1, 0.0).is_err());
    }

    #[test]
    fn sobolev_integral_obeys_rescaled_band_bound() {
        // band part <= 4 lambda^{1/2-H}; off-band part <= 2 lambda^{-H} * 8 sqrt(lambda) / (1 - 2H)
        for &h in &[0.1, 0.25, 0.4] {
            for alpha in [1, 8, 31, 64] {
                let lam = eigenvalue(alpha);
                let v = lemma_sobolev_integral(alpha, h).unwrap();
                let bound = 4.0 * lam.powf(0.5 - h) + 16.0 * lam.powf(0.5 - h) / (1.0 - 2.0 * h);
                assert!(v > 0.0 && v <= bound, "H={h} alpha={alpha}: {v} > {bound}");
            }
        }
    }

    fn brute_force_defects(flavor: Flavor, alpha: usize, grid: &Grid, t: f64) -> (f64, f64) {
        let g = |s: f64| time_kernel(flavor, alpha, t - s);
        let (mut psi, mut ups) = (0.0, 0.0);
        for i in 0..grid.m() {
            let (a, b) = (grid.t_node(i), grid.t_node(i + 1));
            let split = |f: &dyn Fn(f64) -> f64| {
                if t > a && t < b {
                    adaptive_simpson(f, a, t, 1e-15) + adaptive_simpson(f, t, b, 1e-15)
                } else {
                    adaptive_simpson(f, a, b, 1e-15)
                }
            };
            let inner = |s: f64| split(&|tau: f64| g(s) - g(tau));
            psi += split(&|s: f64| inner(s).powi(2));
            ups += split(&|s: f64| g(s) * inner(s));
        }
        (psi, ups)
    }

    #[test]
    fn defects_match_brute_force_quadrature() {
        let single = Grid::new(1.0, 1, 1).unwrap();
        for alpha in [1, 2, 5] {
            let (psi, ups) = brute_force_defects(Flavor::Heat, alpha, &single, 1.0);
            let u = upsilon_mode(Flavor::Heat, alpha, &single, 1.0);
            assert!((u - ups).abs() <= 1e-8 * ups.abs().max(1e-3), "alpha {alpha}: {u} vs {ups}");
            assert!((single.k() * u - psi).abs() <= 1e-8 * psi.abs().max(1e-3));
        }
        let g = Grid::new(1.0, 10, 1).unwrap();
        for flavor in [Flavor::Heat, Flavor::Wave] {
            for (alpha, t) in [(1, 1.0), (2, 0.37), (9, 0.55), (30, 0.999)] {
                let (psi, ups) = brute_force_defects(flavor, alpha, &g, t);
                let u = upsilon_mode(flavor, alpha, &g, t);
                assert!((u - ups).abs() <= 1e-9 * ups.abs() + 1e-15, "{flavor:?} {alpha} {t}: {u} vs {ups}");
                assert!((g.k() * u - psi).abs() <= 1e-9 * psi.abs() + 1e-16);
            }
        }
    }

    #[test]
    fn defects_are_non_negative() {
        let g = Grid::new(1.0, 16, 1).unwrap();
        for flavor in [Flavor::Heat, Flavor::Wave] {
            for alpha in 1..200 {
                for t in [0.0, 0.01, 0.5, 0.77, 1.0] {
                    assert!(upsilon_mode(flavor, alpha, &g, t) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn heat_defect_decreases_with_slab_width() {
        let s16 = psi_upsilon_sums(Flavor::Heat, &Grid::new(1.0, 16, 1).unwrap(), 1.0, 2000).unwrap();
        let s128 = psi_upsilon_sums(Flavor::Heat, &Grid::new(1.0, 128, 1).unwrap(), 1.0, 2000).unwrap();
        assert!(s128.psi.partial < s16.psi.partial / 100.0);
    }

    #[test]
    fn series_brackets_join_closed_forms() {
        for x in [0.49999, 0.5] {
            assert_relative_eq!(heat_bracket(x), 0.5 * x * (1.0 + (-x).exp()) + (-x).exp_m1(), max_relative = 1e-9);
            assert_relative_eq!(x_minus_sin(x), x - x.sin(), max_relative = 1e-9);
            assert_relative_eq!(wave_bracket(x), 2.0 * (1.0 - x.cos()) - x * x.sin(), max_relative = 1e-7);
        }
    }

    #[test]
    fn phi_sum_is_bounded_by_lattice_constant() {
        for flavor in [Flavor::Heat, Flavor::Wave] {
            let mut worst: f64 = 0.0;
            for i in 0..16 {
                for j in 0..16 {
                    if i == j {
                        continue;
                    }
                    let (y, z) = (i as f64 / 15.0, j as f64 / 15.0);
                    let s = lemma_phi_sum(flavor, y, z, 1.0, 4000);
                    worst = worst.max(s.upper() / (y - z).abs());
                }
            }
            // kernel^2 integrals are at most c / lambda with c = 1/2 (heat) or t (wave)
            assert!(worst <= 1.0, "{flavor:?}: {worst}");
        }
    }
}
