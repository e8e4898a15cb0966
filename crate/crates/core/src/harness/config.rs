use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::federation::{PretrainOptions, Weighting};
use crate::gcn::TrainConfig;
use crate::graph::SbmParams;
use crate::secure::ChannelKind;

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A fresh SBM graph per seed, with a random split.
    Sbm {
        num_nodes: usize,
        num_blocks: usize,
        alpha: f64,
        mu: f64,
        feature_dim: usize,
        #[serde(default = "default_noise")]
        feature_noise: f64,
        /// Training and validation nodes; the rest are test nodes.
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    /// A dataset directory; `split.json` is required.
    Dataset {
        path: PathBuf,
        /// Divide each feature row by its sum.
        #[serde(default)]
        normalize_features: bool,
    },
}

fn default_noise() -> f64 {
    0.5
}

fn default_train_fraction() -> f64 {
    0.2
}

fn default_val_fraction() -> f64 {
    0.2
}

impl DataSource {
    pub fn sbm_params(&self) -> Option<SbmParams> {
        match self {
            DataSource::Sbm {
                num_nodes,
                num_blocks,
                alpha,
                mu,
                feature_dim,
                feature_noise,
                ..
            } => Some(SbmParams::new(
                *num_nodes,
                *num_blocks,
                *alpha,
                *mu,
                *feature_dim,
                *feature_noise,
            )),
            DataSource::Dataset { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            num_layers: t.num_layers,
            hidden_dim: t.hidden_dim,
            dropout: t.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub l2: f64,
    pub local_steps: usize,
    pub rounds: usize,
    pub eval_every: usize,
    pub global_lr: f64,
    pub weighting: Weighting,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            l2: t.l2,
            local_steps: t.local_steps,
            rounds: t.rounds,
            eval_every: t.eval_every,
            global_lr: t.global_lr,
            weighting: Weighting::Uniform,
        }
    }
}

/// One JSON document describing an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub num_clients: usize,
    pub iid_fraction: f64,
    pub hops: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub pretrain: PretrainOptions,
    #[serde(default)]
    pub channel: ChannelKind,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        // Relative dataset paths resolve against the config file.
        if let DataSource::Dataset { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(parent) = path.parent() {
                    *data = parent.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.training.lr,
            l2: self.training.l2,
            local_steps: self.training.local_steps,
            rounds: self.training.rounds,
            dropout: self.model.dropout,
            global_lr: self.training.global_lr,
            eval_every: self.training.eval_every,
            hidden_dim: self.model.hidden_dim,
            num_layers: self.model.num_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iid_fraction) {
            return Err(Error::Config(format!(
                "iid_fraction {} outside [0, 1]",
                self.iid_fraction
            )));
        }
        if self.hops > self.model.num_layers {
            return Err(Error::Config(format!(
                "{} hops exceed the {} model layers",
                self.hops, self.model.num_layers
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be a non-empty list".into()));
        }
        if let DataSource::Sbm {
            train_fraction,
            val_fraction,
            ..
        } = &self.data
        {
            if !(*train_fraction > 0.0
                && *val_fraction >= 0.0
                && train_fraction + val_fraction <= 1.0)
            {
                return Err(Error::Config(format!(
                    "split fractions {train_fraction} and {val_fraction} are invalid"
                )));
            }
        }
        if let Some(p) = self.data.sbm_params() {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form, with the
    /// output directory left out so moving results does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sbm_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "data": {"kind": "sbm", "num_nodes": 60, "num_blocks": 3,
                         "alpha": 0.2, "mu": 0.2, "feature_dim": 4},
                "num_clients": 3, "iid_fraction": 0.5, "hops": 2,
                "training": {"rounds": 4},
                "seeds": [1, 2]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = sbm_config();
        assert_eq!(cfg.model.hidden_dim, 16);
        assert_eq!(cfg.training.lr, 0.5);
        assert_eq!(cfg.channel, ChannelKind::Plain);
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_content_not_output() {
        let cfg = sbm_config();
        let mut moved = cfg.clone();
        moved.out_dir = Some("elsewhere".into());
        assert_eq!(moved.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.hops = 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn cross_field_checks() {
        let mut cfg = sbm_config();
        cfg.hops = 3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = sbm_config();
        cfg.num_clients = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = sbm_config();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
