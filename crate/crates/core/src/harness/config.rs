use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::Coupling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SheWz,
    SweWz,
    SheFem,
    SweSpectral,
    NoiseIsometry,
    LemmaChecks,
    NormScaling,
    Structure,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SheWz => "she-wz",
            Self::SweWz => "swe-wz",
            Self::SheFem => "she-fem",
            Self::SweSpectral => "swe-spectral",
            Self::NoiseIsometry => "noise-isometry",
            Self::LemmaChecks => "lemma-checks",
            Self::NormScaling => "norm-scaling",
            Self::Structure => "structure",
        }
    }
}

/// Initial displacement (and, for the wave equation, velocity) in the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    #[default]
    Zero,
    SingleMode { alpha: usize, amplitude: f64 },
    Coefficients {
        u: Vec<f64>,
        #[serde(default)]
        v: Vec<f64>,
    },
}

impl InitialData {
    pub fn displacement(&self) -> Vec<f64> {
        match self {
            Self::Zero => Vec::new(),
            Self::SingleMode { alpha, amplitude } => {
                let mut c = vec![0.0; *alpha];
                c[alpha - 1] = *amplitude;
                c
            }
            Self::Coefficients { u, .. } => u.clone(),
        }
    }

    pub fn velocity(&self) -> Vec<f64> {
        match self {
            Self::Coefficients { v, .. } => v.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Exponential-Euler substeps per slab for the spectral heat solver with drift.
    pub spectral_substeps: usize,
    /// Backward Euler substeps per slab for the finite element solver.
    pub fem_substeps: usize,
    /// Trigonometric-integrator substeps per slab for the wave solver with drift.
    pub wave_substeps: usize,
    /// Modes of the Wong-Zakai solves, as a multiple of the reference mesh size.
    pub wz_modes_factor: usize,
    /// Modes of the spectral reference in the finite element study, per mesh cell.
    pub fem_modes_factor: usize,
    /// Modes of the spectral reference in the wave truncation study, per resolved mode.
    pub swe_reference_factor: usize,
    /// Gauss-Legendre nodes per quadrature panel for finite element errors.
    pub quad_points: usize,
    /// Repeat the reference with twice the modes and require at most this relative change.
    pub doubling_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            spectral_substeps: crate::heat::DEFAULT_SPECTRAL_SUBSTEPS,
            fem_substeps: crate::heat::DEFAULT_FEM_SUBSTEPS,
            wave_substeps: crate::wave::DEFAULT_WAVE_SUBSTEPS,
            wz_modes_factor: 4,
            fem_modes_factor: 16,
            swe_reference_factor: 32,
            quad_points: 5,
            doubling_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hurst: f64,
    pub t_final: f64,
    pub drift: DriftSpec,
    pub initial: InitialData,
    /// Coupling of `k` to `h`; each study picks its own when unset.
    pub coupling: Option<Coupling>,
    /// Space ladder `n` of the measured levels.
    pub levels: Vec<usize>,
    /// Space cells of the reference level in the Wong-Zakai studies.
    pub reference_n: usize,
    /// Mode ladder of the wave truncation study.
    pub mode_levels: Vec<usize>,
    /// Space cells held fixed along the mode ladder (and the norm-scaling time ladder).
    pub fixed_n: usize,
    /// Modes held fixed along the space ladder of the wave truncation study.
    pub fixed_modes: usize,
    /// Time-slab ladder (norm scaling, defect sums).
    pub time_levels: Vec<usize>,
    /// Time slabs held fixed along the norm-scaling space ladder.
    pub fixed_m: usize,
    /// Hurst indices swept by the lemma checks.
    pub hurst_list: Vec<f64>,
    /// Mode truncation of the deterministic lemma sums.
    pub truncation: usize,
    pub samples: usize,
    pub seed: u64,
    /// Moment order `p` of the reported error `(E ||e||^p)^{1/p}`.
    pub moment: u32,
    /// Time at which errors are measured; a node of every level. Defaults to `t_final`.
    pub eval_time: Option<f64>,
    /// Allowed distance of a fitted rate from its theoretical value.
    pub rate_tolerance: f64,
    pub solver: SolverSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hurst: 0.3,
            t_final: 0.5,
            drift: DriftSpec::Zero,
            initial: InitialData::Zero,
            coupling: None,
            levels: vec![8, 16, 32, 64],
            reference_n: 256,
            mode_levels: vec![4, 8, 16, 32],
            fixed_n: 32,
            fixed_modes: 8,
            time_levels: vec![16, 32, 64, 128],
            fixed_m: 4,
            hurst_list: vec![0.1, 0.25, 0.4],
            truncation: 20_000,
            samples: 200,
            seed: 20_240_601,
            moment: 2,
            eval_time: None,
            rate_tolerance: 0.1,
            solver: SolverSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults tuned for each experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self::default();
        match kind {
            ExperimentKind::SweSpectral => Self { rate_tolerance: 0.15, ..base },
            ExperimentKind::NoiseIsometry => Self { samples: 100_000, fixed_n: 8, fixed_m: 4, ..base },
            ExperimentKind::LemmaChecks => Self { t_final: 1.0, ..base },
            ExperimentKind::NormScaling => Self {
                t_final: 1.0,
                levels: vec![8, 16, 32, 64, 128],
                fixed_m: 4,
                time_levels: vec![4, 8, 16, 32, 64],
                fixed_n: 16,
                samples: 2000,
                ..base
            },
            _ => base,
        }
    }

    pub fn from_json_file(path: &Path, kind: ExperimentKind) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, kind)
    }

    /// Parses a JSON object and layers it over the defaults of `kind`.
    pub fn from_json_str(text: &str, kind: ExperimentKind) -> Result<Self> {
        let overlay: Value = serde_json::from_str(text)?;
        let mut value = serde_json::to_value(Self::default_for(kind))?;
        merge(&mut value, overlay);
        Ok(serde_json::from_value(value)?)
    }

    /// Apply `key=value` overrides, where `key` is a dotted path and `value` is
    /// JSON (a bare word is taken as a string).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut value;
            for part in key.split('.') {
                let obj = slot.as_object_mut().ok_or_else(|| Error::Config(format!("{key:?} does not name a config field")))?;
                if !obj.contains_key(part) {
                    return Err(Error::Config(format!("unknown config field {part:?} in {key:?}")));
                }
                slot = obj.get_mut(part).expect("checked above");
            }
            *slot = parsed;
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.samples < 2 {
            return bad(format!("sample count must be at least 2, got {}", self.samples));
        }
        if self.moment < 1 {
            return bad("moment order must be positive".into());
        }
        if !(self.hurst > 0.0 && self.hurst <= 0.5) {
            return bad(format!("H = {} outside (0, 1/2]", self.hurst));
        }
        if !(self.t_final > 0.0) {
            return bad("final time must be positive".into());
        }
        self.drift.validate()
    }

    pub fn eval_time(&self) -> f64 {
        self.eval_time.unwrap_or(self.t_final)
    }

    /// Stable 64-bit FNV-1a hash of the serialized configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::default()
            .with_overrides(&["solver.fem_substeps=8".into(), "hurst=0.5".into(), "levels=[4,8,16]".into()])
            .unwrap();
        assert_eq!(c.solver.fem_substeps, 8);
        assert_eq!(c.hurst, 0.5);
        assert_eq!(c.levels, vec![4, 8, 16]);
        let d = ExperimentConfig::default().with_overrides(&[r#"drift={"kind":"registry","name":"sin"}"#.into()]).unwrap();
        assert_eq!(d.drift, DriftSpec::Registry { name: "sin".into() });
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let c = ExperimentConfig::default();
        assert!(c.with_overrides(&["nonsense=1".into()]).is_err());
        assert!(c.with_overrides(&["hurst".into()]).is_err());
        assert!(c.with_overrides(&["hurst=abc".into()]).is_err());
    }

    #[test]
    fn file_configs_overlay_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"samples": 12, "solver": {"quad_points": 7}}"#).unwrap();
        let c = ExperimentConfig::from_json_file(&path, ExperimentKind::SheFem).unwrap();
        assert_eq!(c.samples, 12);
        assert_eq!(c.solver.quad_points, 7);
        assert_eq!(c.solver.fem_substeps, 4);
        std::fs::write(&path, r#"{"sample": 12}"#).unwrap();
        assert!(ExperimentConfig::from_json_file(&path, ExperimentKind::SheFem).is_err());
    }

    #[test]
    fn validation_and_hash() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        assert!(ExperimentConfig { samples: 1, ..c.clone() }.validate().is_err());
        assert_eq!(c.hash(), ExperimentConfig::default().hash());
        assert_ne!(c.hash(), ExperimentConfig { seed: 1, ..c }.hash());
    }

    #[test]
    fn initial_data_expansion() {
        assert_eq!(InitialData::SingleMode { alpha: 3, amplitude: 2.0 }.displacement(), vec![0.0, 0.0, 2.0]);
        assert!(InitialData::Zero.velocity().is_empty());
    }
}
