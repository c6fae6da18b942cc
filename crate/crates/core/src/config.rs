//! Experiment configuration files.
//!
//! ```json
//! {"command": {"name": "bound", "kind": "canonical_vb", "alpha": 2, "beta": 1, "n": 8, "m": 10000},
//!  "master_seed": 7, "format": "csv"}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::DEFAULT_K_MAX;
use crate::distributions::CouplingLaw;
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::report::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_significance() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Quenched pressure of one model.
    Pressure {
        model: ModelConfig,
        #[serde(alias = "M")]
        m: usize,
    },
    Bound(BoundCommand),
    Sweep(SweepCommand),
    /// The acceptance suite, or the listed criteria only.
    Verify {
        #[serde(default)]
        criteria: Vec<u8>,
    },
    Thinning {
        alpha: f64,
        n: usize,
        samples: usize,
        #[serde(default = "default_significance")]
        significance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundCommand {
    /// Coefficient-seminorm bound for two dense i.i.d. models, against an
    /// independent Monte Carlo difference.
    PropA {
        a: ModelConfig,
        b: ModelConfig,
        #[serde(alias = "M")]
        m: usize,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    /// Coupled bound `(1/N) E sum |J - J~|` for two models sharing streams.
    PropB {
        a: ModelConfig,
        b: ModelConfig,
        #[serde(alias = "M")]
        m: usize,
    },
    CanonicalVb {
        alpha: f64,
        beta: f64,
        n: usize,
        #[serde(alias = "M")]
        m: usize,
    },
    CanonicalSk {
        beta: f64,
        n: usize,
        #[serde(alias = "M")]
        m: usize,
    },
    /// Sample variance of the random pressure against the single-coupling
    /// variance.
    Variance {
        model: ModelConfig,
        #[serde(alias = "M")]
        m: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepCommand {
    /// Distance from the Gaussian reference, one row per `N`.
    Delta { law: CouplingLaw, beta: f64, ns: Vec<usize> },
    /// Diluted-vs-dense pressure gap next to the uniform bound, one row per
    /// `alpha`.
    Connectivity {
        beta: f64,
        alphas: Vec<f64>,
        n: usize,
        #[serde(alias = "M")]
        m: usize,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::ConfigInvalid(msg.into())
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(invalid(format!("m must be at least 2, got {m}")));
    }
    Ok(())
}

fn check_model(model: &ModelConfig) -> Result<()> {
    model.build().map(|_| ()).map_err(|e| invalid(e.to_string()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    /// Schema checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(invalid("threads must be positive"));
        }
        match &self.command {
            Command::Pressure { model, m } => {
                check_m(*m)?;
                check_model(model)
            }
            Command::Bound(b) => match b {
                BoundCommand::PropA { a, b, m, .. } | BoundCommand::PropB { a, b, m } => {
                    check_m(*m)?;
                    check_model(a)?;
                    check_model(b)
                }
                BoundCommand::CanonicalVb { alpha, n, m, .. } => {
                    check_m(*m)?;
                    if !(*alpha > 0.0) || *n == 0 {
                        return Err(invalid("canonical_vb needs alpha > 0 and n >= 1"));
                    }
                    Ok(())
                }
                BoundCommand::CanonicalSk { n, m, .. } => {
                    check_m(*m)?;
                    if *n == 0 {
                        return Err(invalid("canonical_sk needs n >= 1"));
                    }
                    Ok(())
                }
                BoundCommand::Variance { model, m } => {
                    check_m(*m)?;
                    check_model(model)
                }
            },
            Command::Sweep(s) => match s {
                SweepCommand::Delta { law, ns, .. } => {
                    law.validate().map_err(|e| invalid(e.to_string()))?;
                    if ns.is_empty() || ns.contains(&0) {
                        return Err(invalid("ns must be a non-empty list of positive sizes"));
                    }
                    Ok(())
                }
                SweepCommand::Connectivity { alphas, n, m, .. } => {
                    check_m(*m)?;
                    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) || *n == 0 {
                        return Err(invalid("connectivity needs positive alphas and n >= 1"));
                    }
                    Ok(())
                }
            },
            Command::Verify { criteria } => {
                let known: Vec<u8> = crate::verify::criteria().iter().map(|c| c.id).collect();
                match criteria.iter().find(|c| !known.contains(c)) {
                    Some(c) => Err(invalid(format!("unknown criterion {c}"))),
                    None => Ok(()),
                }
            }
            Command::Thinning { samples, significance, .. } => {
                if *samples < 10_000 {
                    return Err(invalid("thinning needs at least 10^4 samples"));
                }
                if !(*significance > 0.0 && *significance < 1.0) {
                    return Err(invalid("significance must lie in (0, 1)"));
                }
                Ok(())
            }
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring `threads`, `output` and `format`, which do not change any
    /// number in the output.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            for key in ["threads", "output", "format"] {
                map.remove(key);
            }
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
