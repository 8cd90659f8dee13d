use wzgalerkin::heat::SpectralHeatSolver;
use wzgalerkin::noise::{sample_cell_increments, spatial_covariance};
use wzgalerkin::rng::StreamKey;
use wzgalerkin::wave::SpectralWaveSolver;
use wzgalerkin::wong_zakai::regularize;
use wzgalerkin::{Coupling, DriftSpec, GridLadder};

/// `E sup_t ||u(t)||^2` over slab boundaries for each level of a ladder.
fn sup_moments(coupling: Coupling, wave: bool, drift: &DriftSpec) -> Vec<f64> {
    let ladder = GridLadder::new(coupling, &[4, 8, 16], 0.5).unwrap();
    let samples = 40;
    ladder
        .levels()
        .iter()
        .map(|g| {
            let cov = spatial_covariance(g, 0.3).unwrap();
            let modes = 64;
            let mut total = 0.0;
            for s in 0..samples {
                let xi = regularize(&sample_cell_increments(g, &cov, StreamKey::new(77, s)).unwrap());
                let mut sup: f64 = 0.0;
                if wave {
                    let solver = SpectralWaveSolver::new(g.n(), g.k(), modes, drift.clone(), 4).unwrap();
                    solver.run(&xi, &[0.5], &[], |st| sup = sup.max(st.l2_norm().powi(2))).unwrap();
                } else {
                    let solver = SpectralHeatSolver::new(g.n(), g.k(), modes, drift.clone(), 4).unwrap();
                    solver.run(&xi, &[0.5], |st| sup = sup.max(st.l2_norm().powi(2))).unwrap();
                }
                total += sup;
            }
            total / samples as f64
        })
        .collect()
}

#[test]
fn heat_moments_stay_bounded_under_refinement() {
    let m = sup_moments(Coupling::Parabolic, false, &DriftSpec::Affine { a: 0.5, c: 1.0 });
    assert!(m.iter().all(|v| v.is_finite() && *v > 0.0));
    let (lo, hi) = m.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 2.0, "{m:?}");
}

#[test]
fn wave_moments_stay_bounded_under_refinement() {
    let m = sup_moments(Coupling::Hyperbolic, true, &DriftSpec::registry("sin").unwrap());
    let (lo, hi) = m.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 2.0, "{m:?}");
}
