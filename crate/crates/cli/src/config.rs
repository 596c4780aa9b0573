use crate::error::CliError;
use histcircle::historic::RhoRule;
use histcircle::random_system::ValidationGrid;
use histcircle::{BaseDynamics, FamilyParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub k: u32,
    pub a: f64,
    pub epsilon: f64,
    pub delta0: f64,
    pub eta: f64,
    pub trap: (f64, f64),
    pub validation_omega_points: usize,
    pub validation_x_points: usize,
}

impl Default for FamilySection {
    fn default() -> Self {
        let p = FamilyParams::default();
        let g = ValidationGrid::default();
        FamilySection {
            k: p.k,
            a: p.a,
            epsilon: p.epsilon,
            delta0: p.delta0,
            eta: p.eta,
            trap: p.trap,
            validation_omega_points: g.omega_points,
            validation_x_points: g.x_points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    pub alpha: f64,
    /// The noise sample every command starts from.
    pub omega0: f64,
}

impl Default for BaseSection {
    fn default() -> Self {
        let b = BaseDynamics::golden();
        BaseSection {
            alpha: b.alpha(),
            omega0: b.omega0.to_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_bisections: usize,
    pub newton_steps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tolerance: 1e-12,
            max_bisections: 200,
            newton_steps: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub level: u32,
    pub residual_samples: usize,
    pub max_cells: u64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            level: 12,
            residual_samples: 4096,
            max_cells: 1 << 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub depth: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection { depth: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub rho: RhoRule,
    pub blocks: usize,
    pub budget: u64,
    pub tolerance: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            rho: RhoRule::default(),
            blocks: 3,
            budget: 10_000_000,
            tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub q_omega: usize,
    pub level: u32,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection { q_omega: 64, level: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    /// Seed of the digit stream s″.
    pub x_star: u64,
    pub sampling: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection {
            x_star: 2024,
            sampling: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub words: usize,
    pub word_length: usize,
    pub equivariance_steps: usize,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            words: 64,
            word_length: 12,
            equivariance_steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub points: usize,
    pub bins: usize,
    pub shadow_block: usize,
    pub shadow_extra_depth: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            points: 20_000,
            bins: 100,
            shadow_block: 2,
            shadow_extra_depth: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessSection {
    pub shifts: u64,
    pub n_min: u64,
    /// Defaults to N_2, the end of the second block.
    pub n_max: Option<u64>,
}

impl Default for WitnessSection {
    fn default() -> Self {
        WitnessSection {
            shifts: 10,
            n_min: 1,
            n_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Everything that determines a run. Sections missing from the file take
/// their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySection,
    pub base: BaseSection,
    pub solver: SolverSection,
    pub grid: GridSection,
    pub decode: DecodeSection,
    pub schedule: ScheduleSection,
    pub target: TargetSection,
    pub seeds: SeedSection,
    pub code: CodeSection,
    pub density: DensitySection,
    pub witness: WitnessSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn family_params(&self) -> FamilyParams {
        let f = &self.family;
        FamilyParams {
            k: f.k,
            a: f.a,
            epsilon: f.epsilon,
            delta0: f.delta0,
            eta: f.eta,
            trap: f.trap,
        }
    }

    pub fn validation_grid(&self) -> ValidationGrid {
        ValidationGrid {
            omega_points: self.family.validation_omega_points,
            x_points: self.family.validation_x_points,
        }
    }

    pub fn base_dynamics(&self) -> BaseDynamics {
        BaseDynamics::new(self.base.alpha, self.base.omega0)
    }

    /// Compact JSON with sorted keys, output paths left out.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("output");
        }
        value.to_string()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
