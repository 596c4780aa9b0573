use crate::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Written next to the outputs of every run, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub cache_enabled: bool,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub outcomes: Vec<Outcome>,
    pub certificates: Map<String, Value>,
    pub outputs: Vec<String>,
    pub error: Option<String>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.exit_code == 0
    }

    pub fn outcome(&self, name: &str) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}
