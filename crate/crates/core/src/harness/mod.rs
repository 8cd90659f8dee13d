//! Experiment configuration, convergence studies, oracle checks and reports.

mod checks;
mod config;
mod report;
mod studies;

pub use checks::{run_lemma_checks, run_noise_checks, run_norm_scaling, run_structure_checks};
pub use config::{ExperimentConfig, ExperimentKind, InitialData, SolverSettings};
pub use report::{Check, ConvergenceReport, LevelRow, Metadata, Scale, Series, CSV_HEADER};
pub use studies::{moment_estimate, run_fem_convergence, run_spectral_convergence, run_wz_convergence};

use crate::error::Result;
use crate::spectral::Flavor;

/// Runs the experiment of the given kind.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    match kind {
        ExperimentKind::SheWz => run_wz_convergence(cfg, Flavor::Heat),
        ExperimentKind::SweWz => run_wz_convergence(cfg, Flavor::Wave),
        ExperimentKind::SheFem => run_fem_convergence(cfg),
        ExperimentKind::SweSpectral => run_spectral_convergence(cfg),
        ExperimentKind::NoiseIsometry => run_noise_checks(cfg),
        ExperimentKind::LemmaChecks => run_lemma_checks(cfg),
        ExperimentKind::NormScaling => run_norm_scaling(cfg),
        ExperimentKind::Structure => run_structure_checks(cfg),
    }
}
