use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Layered net whose recurrent matrix starts symmetric.
    SymmetricInit,
    /// Recurrent matrix with a fixed structural asymmetry ratio.
    FixedRatio,
    /// Input to hidden to output, no feedback connections.
    Feedforward,
    /// Layered net with an unconstrained random recurrent matrix.
    Custom,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "EP", alias = "ep")]
    Ep,
    #[serde(rename = "VF", alias = "vf")]
    Vf,
    #[serde(rename = "AEP", alias = "aep")]
    Aep,
    #[serde(rename = "DyadicEP", alias = "dyadic-ep", alias = "dyadic")]
    DyadicEp,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ep => "EP",
            Algorithm::Vf => "VF",
            Algorithm::Aep => "AEP",
            Algorithm::DyadicEp => "DyadicEP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainOnly {
    /// Input weights only (plus the global scale in fixed-ratio nets).
    InputOnly,
    #[default]
    All,
}

impl std::str::FromStr for TrainOnly {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown train-only value {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub method: Algorithm,
    pub hidden_size: usize,
    /// Used by the fixed-ratio experiment only.
    pub r_str: f64,
    pub beta: f64,
    pub dt: f64,
    pub n_free: usize,
    pub n_nudge: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_input_hidden: f64,
    pub lr_hidden_output: f64,
    pub seed: u64,
    pub train_only: TrainOnly,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Use only the first `n` training samples.
    pub train_subset: Option<usize>,
    /// Use only the first `n` test samples.
    pub test_subset: Option<usize>,
    /// Independent seeds for `sweep`.
    pub repetitions: usize,
}

impl RunConfig {
    /// Hyperparameters of the given experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            method: Algorithm::Aep,
            hidden_size: 50,
            r_str: 0.0,
            beta: 0.5,
            dt: 0.5,
            n_free: 20,
            n_nudge: 10,
            epochs: 40,
            batch_size: 64,
            lr_input_hidden: 0.05,
            lr_hidden_output: 0.01,
            seed: 0,
            train_only: TrainOnly::All,
            data_dir: PathBuf::from("data/mnist"),
            output_dir: PathBuf::from("runs"),
            train_subset: None,
            test_subset: None,
            repetitions: 10,
        };
        match experiment {
            Experiment::SymmetricInit | Experiment::Custom => base,
            Experiment::Feedforward => Self {
                hidden_size: 20,
                epochs: 20,
                ..base
            },
            Experiment::FixedRatio => Self {
                dt: 0.3,
                n_free: 30,
                epochs: 30,
                r_str: 0.875,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive".into());
        }
        if !(self.beta.is_finite() && self.beta != 0.0) {
            return bad(format!("beta must be finite and nonzero, got {}", self.beta));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_free == 0 || self.n_nudge == 0 {
            return bad("step counts must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.r_str) {
            return bad(format!("r_str must lie in [0, 1], got {}", self.r_str));
        }
        if !(self.lr_input_hidden.is_finite() && self.lr_hidden_output.is_finite()) {
            return bad("learning rates must be finite".into());
        }
        if matches!(self.train_subset, Some(0)) || matches!(self.test_subset, Some(0)) {
            return bad("subsets must be non-empty".into());
        }
        if self.method == Algorithm::Ep
            && matches!(self.experiment, Experiment::FixedRatio | Experiment::Feedforward | Experiment::Custom)
        {
            return bad(format!(
                "EP needs a symmetric recurrent matrix; not available for {:?}",
                self.experiment
            ));
        }
        Ok(())
    }
}
