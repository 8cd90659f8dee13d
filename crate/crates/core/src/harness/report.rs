use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::fit::{fit_rate, pairwise_log2_ratios, LevelError, RateFit};

pub const CSV_HEADER: &str = "level,h,k,N,error,se,samples";

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub h: f64,
    pub k: f64,
    pub n_modes: usize,
    pub error: f64,
    pub se: f64,
    pub samples: usize,
}

/// The discretization parameter an error series is regressed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    H,
    K,
    N,
}

impl Scale {
    pub fn of(self, row: &LevelRow) -> f64 {
        match self {
            Scale::H => row.h,
            Scale::K => row.k,
            Scale::N => row.n_modes as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub scale: Scale,
    pub rows: Vec<LevelRow>,
    pub log2_ratios: Vec<f64>,
    pub fit: Option<RateFit>,
    /// Theoretical slope of `log error` against `log scale`.
    pub expected_rate: f64,
    /// Errors move monotonically in the direction of the expected rate.
    pub monotone: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, scale: Scale, rows: Vec<LevelRow>, expected_rate: f64) -> Self {
        let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let points: Vec<LevelError> = rows.iter().map(|r| LevelError { scale: scale.of(r), error: r.error, se: r.se }).collect();
        let fit = fit_rate(&points).ok();
        // rows run coarse to fine, so the error shrinks when the rate and the scale move together
        let shrinking = match scale {
            Scale::N => expected_rate < 0.0,
            _ => expected_rate > 0.0,
        };
        let monotone = errors.windows(2).all(|w| if shrinking { w[1] < w[0] } else { w[1] > w[0] });
        Self { name: name.into(), scale, rows, log2_ratios: pairwise_log2_ratios(&errors), fit, expected_rate, monotone }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{},{:.17e},{:.17e},{}",
                r.level, r.h, r.k, r.n_modes, r.error, r.se, r.samples
            )?;
        }
        Ok(())
    }

    pub fn read_csv(name: impl Into<String>, scale: Scale, expected_rate: f64, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Config(format!("{} does not start with {CSV_HEADER:?}", path.display()))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Config(format!("{}:{}: malformed row {line:?}", path.display(), i + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let float = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
            rows.push(LevelRow {
                level: int(f[0])?,
                h: float(f[1])?,
                k: float(f[2])?,
                n_modes: int(f[3])?,
                error: float(f[4])?,
                se: float(f[5])?,
                samples: int(f[6])?,
            });
        }
        Ok(Self::new(name, scale, rows, expected_rate))
    }
}

/// A named pass/fail assertion with a human-readable detail line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    /// Fitted slope within `tol` of `expected`.
    pub fn rate(series: &Series, expected: f64, tol: f64) -> Self {
        let name = format!("{} rate", series.name);
        match series.fit {
            Some(f) => Self::new(
                name,
                (f.slope - expected).abs() <= tol,
                format!("slope {:.4} +/- {:.4} (95%), expected {expected:.3} +/- {tol}", f.slope, f.half_width),
            ),
            None => Self::new(name, false, "fit failed"),
        }
    }

    pub fn monotone(series: &Series) -> Self {
        Self::new(
            format!("{} monotone refinement", series.name),
            series.monotone,
            if series.monotone { "errors move monotonically across levels" } else { "non-monotone errors; fit flagged" },
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub git: String,
    pub wall_time_s: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub metadata: Metadata,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn new(kind: ExperimentKind, config: &ExperimentConfig) -> Self {
        Self {
            metadata: Metadata {
                kind,
                config: config.clone(),
                config_hash: config.hash(),
                seed: config.seed,
                git: env!("WZG_GIT_DESCRIBE").to_string(),
                wall_time_s: 0.0,
                threads: rayon::current_num_threads(),
            },
            series: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// CSV path of one series: `<stem>.csv` for a lone series, `<stem>_<series>.csv` otherwise.
    pub fn csv_path(&self, stem: &Path, series: &Series) -> PathBuf {
        let base = stem.to_string_lossy();
        if self.series.len() == 1 {
            PathBuf::from(format!("{base}.csv"))
        } else {
            PathBuf::from(format!("{base}_{}.csv", series.name))
        }
    }

    /// Writes every series as CSV plus a `<stem>.json` sidecar holding the whole report.
    pub fn write(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut written = Vec::new();
        for s in &self.series {
            let path = self.csv_path(stem, s);
            s.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            written.push(path);
        }
        let json = PathBuf::from(format!("{}.json", stem.to_string_lossy()));
        serde_json::to_writer_pretty(std::io::BufWriter::new(std::fs::File::create(&json)?), self)?;
        written.push(json);
        Ok(written)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))?)
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metadata;
        writeln!(f, "{} (seed {}, config {}, {}, {:.1} s on {} threads)", m.kind.name(), m.seed, m.config_hash, m.git, m.wall_time_s, m.threads)?;
        for s in &self.series {
            writeln!(f, "\nseries {} (error against {:?})", s.name, s.scale)?;
            writeln!(f, "{:>5} {:>12} {:>12} {:>6} {:>14} {:>12} {:>8}", "level", "h", "k", "N", "error", "se", "samples")?;
            for r in &s.rows {
                writeln!(f, "{:>5} {:>12.5e} {:>12.5e} {:>6} {:>14.6e} {:>12.3e} {:>8}", r.level, r.h, r.k, r.n_modes, r.error, r.se, r.samples)?;
            }
            let ratios: Vec<String> = s.log2_ratios.iter().map(|r| format!("{r:.3}")).collect();
            writeln!(f, "log2 ratios: [{}]", ratios.join(", "))?;
            match s.fit {
                Some(fit) => writeln!(f, "fitted rate {:.4} +/- {:.4}, expected {:.3}", fit.slope, fit.half_width, s.expected_rate)?,
                None => writeln!(f, "fit unavailable")?,
            }
            if !s.monotone {
                writeln!(f, "WARNING: errors are not monotone across levels")?;
            }
        }
        if !self.checks.is_empty() {
            writeln!(f)?;
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}
