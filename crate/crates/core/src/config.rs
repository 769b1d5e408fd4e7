//! JSON experiment configuration.
//!
//! A single document names the traffic sources, the state space, the
//! predictor and its hyperparameters. Unknown keys are rejected and the
//! whole document is validated before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finetune::FinetuneConfig;
use crate::mlp::MlpConfig;
use crate::statespace::{StateSpace, Variant};
use crate::traffic::{generate_synthetic, load_trace, SyntheticSpec, Trace, TraceFormat};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPECPRED_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrafficSource {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: TraceFormat,
    },
}

fn default_format() -> TraceFormat {
    TraceFormat::BinaryLines
}

impl TrafficSource {
    /// Relative file paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Trace> {
        match self {
            TrafficSource::Synthetic(spec) => generate_synthetic(spec),
            TrafficSource::File { path, format } => {
                let path = if path.is_relative() {
                    base.join(path)
                } else {
                    path.clone()
                };
                load_trace(path, *format)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    #[default]
    Markov,
    FtMarkov,
    Mlp,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markov" => Ok(PredictorKind::Markov),
            "ft-markov" => Ok(PredictorKind::FtMarkov),
            "mlp" => Ok(PredictorKind::Mlp),
            other => Err(Error::invalid(format!("unknown predictor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceConfig {
    pub variant: Variant,
    pub order: usize,
    #[serde(default)]
    pub max_states: Option<usize>,
}

impl Default for StateSpaceConfig {
    fn default() -> Self {
        StateSpaceConfig {
            variant: Variant::Smart,
            order: 3,
            max_states: None,
        }
    }
}

impl StateSpaceConfig {
    pub fn build(&self, training: &Trace) -> Result<StateSpace> {
        match self.variant {
            Variant::Full => StateSpace::full(self.order),
            Variant::Simple => StateSpace::simple(self.order),
            Variant::Smart => StateSpace::smart(training, self.order, self.max_states),
        }
    }
}

/// Network hyperparameters; input size comes from the sensing length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSettings {
    /// Number of future slots predicted; defaults to `max_horizon`.
    pub t_train: Option<usize>,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for MlpSettings {
    fn default() -> Self {
        let d = MlpConfig::default();
        MlpSettings {
            t_train: None,
            hidden_sizes: d.hidden_sizes,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            validation_fraction: d.validation_fraction,
            patience: d.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train: Option<TrafficSource>,
    pub test: Option<TrafficSource>,
    pub state_space: StateSpaceConfig,
    /// Sensing length `M`; defaults to the state-space order.
    pub sensing: Option<usize>,
    pub predictor: PredictorKind,
    pub finetune: FinetuneConfig,
    pub mlp: MlpSettings,
    pub max_horizon: usize,
    pub stride: usize,
    pub allow_same_trace: bool,
    pub output_dir: Option<PathBuf>,
    /// Saved model used by `eval`; defaults to the one `train` writes.
    pub model: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: None,
            test: None,
            state_space: StateSpaceConfig::default(),
            sensing: None,
            predictor: PredictorKind::Markov,
            finetune: FinetuneConfig::default(),
            mlp: MlpSettings::default(),
            max_horizon: 10,
            stride: 1,
            allow_same_trace: false,
            output_dir: None,
            model: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidArgument(msg) => {
                Error::InvalidArgument(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn sensing(&self) -> usize {
        self.sensing.unwrap_or(self.state_space.order)
    }

    pub fn mlp_t_train(&self) -> usize {
        self.mlp.t_train.unwrap_or(self.max_horizon)
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            input_size: self.sensing(),
            output_size: self.mlp_t_train(),
            hidden_sizes: self.mlp.hidden_sizes.clone(),
            learning_rate: self.mlp.learning_rate,
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            rng_seed: self.seed,
            validation_fraction: self.mlp.validation_fraction,
            patience: self.mlp.patience,
        }
    }

    /// Output directory: config value, then the environment, then `out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<()> {
        let ss = &self.state_space;
        if ss.order == 0 {
            return Err(Error::invalid("state_space.order must be positive"));
        }
        if ss.max_states == Some(0) {
            return Err(Error::invalid("state_space.max_states must be positive"));
        }
        if ss.max_states.is_some() && ss.variant != Variant::Smart {
            return Err(Error::invalid("state_space.max_states applies to the smart space only"));
        }
        if ss.variant == Variant::Full && ss.order > crate::statespace::MAX_FULL_ORDER {
            return Err(Error::invalid(format!(
                "full state space order {} is intractable; use the smart space",
                ss.order
            )));
        }
        let m = self.sensing();
        if m == 0 {
            return Err(Error::invalid("sensing must be positive"));
        }
        if self.predictor != PredictorKind::Mlp && m > ss.order {
            return Err(Error::invalid(format!(
                "sensing length {m} exceeds the model order {}",
                ss.order
            )));
        }
        if self.max_horizon == 0 {
            return Err(Error::invalid("max_horizon must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        self.finetune.validate()?;
        if self.predictor == PredictorKind::Mlp {
            self.mlp_config().validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_document() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "train": {"synthetic": {"block_size": 3, "n_slots": 600}},
                "test": {"file": {"path": "test.txt"}},
                "state_space": {"variant": "full", "order": 3},
                "sensing": 2,
                "predictor": "ft-markov",
                "finetune": {"t_train": 3, "learning_rate": 0.05, "parameterization": "project"},
                "max_horizon": 10,
                "seed": 4
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.predictor, PredictorKind::FtMarkov);
        assert_eq!(cfg.sensing(), 2);
        assert_eq!(cfg.finetune.t_train, 3);
        assert_eq!(cfg.finetune.epochs, 50);
        assert!(matches!(
            cfg.test,
            Some(TrafficSource::File { format: TraceFormat::BinaryLines, .. })
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"horizon": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"finetune": {"lr": 0.1}}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"train": {"synthetic": {"block_size": 3, "n_slots": 6, "blocks": 1}}}"#
        )
        .is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.sensing = Some(5);
        assert!(cfg.validate().is_err());
        cfg.predictor = PredictorKind::Mlp;
        cfg.validate().unwrap();

        let mut cfg = ExperimentConfig::default();
        cfg.state_space = StateSpaceConfig {
            variant: Variant::Full,
            order: 30,
            max_states: None,
        };
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.state_space.max_states = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn roundtrips_through_json() {
        let cfg = ExperimentConfig {
            train: Some(TrafficSource::Synthetic(SyntheticSpec::periodic(4, 100, 0))),
            ..Default::default()
        };
        let back: ExperimentConfig = serde_json::from_value(cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
