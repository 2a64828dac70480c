//! TOML run configuration with CLI-flag overrides.
//!
//! Precedence: command-line flag, then `GRASPKIT_*` environment variable
//! (handled by clap), then the config file, then the built-in default.
//! Unknown config keys are rejected.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Shape family: `shoes`, `boxes`, or `mixed`.
    pub family: String,
    pub train_shapes: usize,
    pub test_shapes: usize,
    /// Azimuth counts for the two viewpoint rings.
    pub views_elevated: usize,
    pub views_side: usize,
    pub elevation_deg: f64,
    pub range: f64,
    pub side_height: f64,
    pub gt_cloud_points: usize,
    pub depth_noise_std: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            family: "shoes".into(),
            train_shapes: 20,
            test_shapes: 5,
            views_elevated: 18,
            views_side: 18,
            elevation_deg: 50.0,
            range: 0.5,
            side_height: 0.065,
            gt_cloud_points: 1024,
            depth_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub domain_samples: usize,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub momentum: f64,
    /// Hidden layer sizes of the proposal head and the hypernetwork.
    pub proposal_hidden: Vec<usize>,
    pub hyper_hidden: Vec<usize>,
    pub template_hidden: Vec<usize>,
    /// Domain samples drawn at reconstruction inference time.
    pub inference_samples: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 60,
            lambda_t: 1.0,
            lambda_r: 0.05,
            domain_samples: 256,
            optimizer: "adam".into(),
            momentum: 0.0,
            proposal_hidden: vec![256, 128],
            hyper_hidden: vec![256, 256],
            template_hidden: vec![64, 64],
            inference_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `visible-grasp`, `hidden-grasp`, or `sim-boxes`.
    pub scenario: String,
    /// `proposal+refinement` pairs; empty means the standard eight rows.
    pub combinations: Vec<String>,
    /// Shapes drawn from the dataset (train entries first, then test); 0
    /// means all of them.
    pub bench_shapes: usize,
    pub trials_per_cell: usize,
    pub jobs: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            scenario: "hidden-grasp".into(),
            combinations: Vec::new(),
            bench_shapes: 4,
            trials_per_cell: 25,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: RunConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !matches!(self.dataset.family.as_str(), "shoes" | "boxes" | "mixed") {
            bail!("dataset.family must be shoes, boxes, or mixed");
        }
        if !matches!(self.train.optimizer.as_str(), "adam" | "sgd") {
            bail!("train.optimizer must be adam or sgd");
        }
        Ok(())
    }

    /// Serialize the fully resolved configuration for the run manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_rejected() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);

        let bad = "nonsense = 1\n";
        assert!(toml::from_str::<RunConfig>(bad).is_err());
        let bad_nested = "[dataset]\nbogus = 2\n";
        assert!(toml::from_str::<RunConfig>(bad_nested).is_err());
    }
}
