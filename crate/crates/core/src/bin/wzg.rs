use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wzgalerkin::harness::{self, ConvergenceReport, ExperimentConfig, ExperimentKind, Scale, Series};

#[derive(Parser)]
#[command(name = "wzg", version, about = "Wong-Zakai Galerkin experiments for stochastic heat and wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Isometry oracle and sampler statistics.
    NoiseCheck(Common),
    /// Deterministic eigenfunction and defect-sum oracles.
    LemmaCheck(Common),
    /// Exponents of the regularized noise norm in h and k.
    NormScaling(Common),
    /// Exact solver identities.
    StructureCheck(Common),
    /// Monte Carlo convergence study.
    Converge {
        study: Study,
        #[command(flatten)]
        common: Common,
    },
    /// Print a report from a JSON sidecar or a convergence CSV.
    Report {
        path: PathBuf,
        /// Regression variable when reading a bare CSV.
        #[arg(long, value_enum, default_value = "h")]
        scale: ScaleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    SheWz,
    SweWz,
    SheFem,
    SweSpectral,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    H,
    K,
    N,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output stem: writes <stem>.csv (or <stem>_<series>.csv) and <stem>.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted config override, e.g. `solver.fem_substeps=8`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(kind: ExperimentKind, c: &Common) -> wzgalerkin::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_json_file(path, kind)?,
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.samples {
        cfg.samples = n;
    }
    cfg.with_overrides(&c.overrides)
}

fn execute(kind: ExperimentKind, c: &Common) -> wzgalerkin::Result<bool> {
    let cfg = load(kind, c)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = c.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| wzgalerkin::Error::Config(e.to_string()))?;
    let report = pool.install(|| harness::run(kind, &cfg))?;
    print!("{report}");
    if let Some(stem) = &c.out {
        for path in report.write(stem)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(report.passed())
}

fn show(path: &Path, scale: ScaleArg) -> wzgalerkin::Result<bool> {
    if path.extension().is_some_and(|e| e == "json") {
        let report = ConvergenceReport::read_json(path)?;
        print!("{report}");
        return Ok(report.passed());
    }
    let scale = match scale {
        ScaleArg::H => Scale::H,
        ScaleArg::K => Scale::K,
        ScaleArg::N => Scale::N,
    };
    let name = path.file_stem().map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned());
    let series = Series::read_csv(name, scale, f64::NAN, path)?;
    println!("{:>5} {:>12} {:>12} {:>6} {:>14} {:>12} {:>8}", "level", "h", "k", "N", "error", "se", "samples");
    for r in &series.rows {
        println!("{:>5} {:>12.5e} {:>12.5e} {:>6} {:>14.6e} {:>12.3e} {:>8}", r.level, r.h, r.k, r.n_modes, r.error, r.se, r.samples);
    }
    match series.fit {
        Some(f) => println!("fitted rate {:.4} +/- {:.4}", f.slope, f.half_width),
        None => println!("fit unavailable"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::NoiseCheck(c) => execute(ExperimentKind::NoiseIsometry, c),
        Command::LemmaCheck(c) => execute(ExperimentKind::LemmaChecks, c),
        Command::NormScaling(c) => execute(ExperimentKind::NormScaling, c),
        Command::StructureCheck(c) => execute(ExperimentKind::Structure, c),
        Command::Converge { study, common } => {
            let kind = match study {
                Study::SheWz => ExperimentKind::SheWz,
                Study::SweWz => ExperimentKind::SweWz,
                Study::SheFem => ExperimentKind::SheFem,
                Study::SweSpectral => ExperimentKind::SweSpectral,
            };
            execute(kind, common)
        }
        Command::Report { path, scale } => show(path, *scale),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
