//! Versioned model checkpoints.
//!
//! Checkpoints are JSON with an explicit `version` field. f64 values are
//! serialized in shortest round-trip form, so save/load is lossless and
//! re-saving an unchanged model is byte-identical.

use crate::channel::SamplingConfig;
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpConfig};
use crate::optim::ModelState;
use crate::tasks::Standardizer;
use crate::train::TrainedModel;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub mlp: MlpConfig,
    pub state: ModelState,
    pub x_map: Standardizer,
    pub y_map: Standardizer,
    /// Sampling distribution the model was trained under.
    pub sampling: SamplingConfig,
    pub use_ema: bool,
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            mlp: *model.mlp.config(),
            state: model.state.clone(),
            x_map: model.x_map.clone(),
            y_map: model.y_map.clone(),
            sampling: model.sampling,
            use_ema: model.use_ema,
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mlp = Mlp::new(self.mlp)?;
        if self.state.weights.len() != mlp.n_params() {
            return Err(Error::Checkpoint("weight vector length mismatch".into()));
        }
        Ok(TrainedModel {
            mlp,
            state: self.state,
            x_map: self.x_map,
            y_map: self.y_map,
            use_ema: self.use_ema,
            sampling: self.sampling,
            loss_log: Vec::new(),
            observed_null_fraction: f64::NAN,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerConfig;
    use crate::tasks::{Family, TaskSpec};
    use crate::train::{train, TrainConfig};

    #[test]
    fn checkpoint_round_trip_is_lossless_and_stable() {
        let task = TaskSpec::new(Family::BivariateNormal { rho: 0.5 }).unwrap();
        let mlp = MlpConfig {
            input_dim: 1,
            width: 8,
            n_blocks: 2,
            time_embed_dim: 4,
            cond_dim: 1,
            output_dim: 1,
        };
        let tc = TrainConfig {
            iterations: 20,
            batch_size: 8,
            ..TrainConfig::desk(3)
        };
        let model = train(&task, mlp, &tc, &OptimizerConfig::default()).unwrap();
        let ck = Checkpoint::from_model(&model);
        let dir = std::env::temp_dir().join("migap-ck-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.json");
        let p2 = dir.join("b.json");
        ck.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        assert_eq!(loaded.state.weights, ck.state.weights);
        assert_eq!(loaded.state.ema_weights, ck.state.ema_weights);
        assert_eq!(loaded.state.step, ck.state.step);
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let model2 = loaded.into_model().unwrap();
        let a = model2.mlp.forward(&model2.state.ema_weights, &[0.3], 1.0, None).unwrap();
        let b = model.mlp.forward(&model.state.ema_weights, &[0.3], 1.0, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let task = TaskSpec::new(Family::BivariateNormal { rho: 0.5 }).unwrap();
        let mlp = MlpConfig {
            input_dim: 1,
            width: 4,
            n_blocks: 1,
            time_embed_dim: 2,
            cond_dim: 1,
            output_dim: 1,
        };
        let tc = TrainConfig {
            iterations: 2,
            batch_size: 4,
            ..TrainConfig::desk(1)
        };
        let model = train(&task, mlp, &tc, &OptimizerConfig::default()).unwrap();
        let mut ck = Checkpoint::from_model(&model);
        ck.version = 99;
        assert!(ck.into_model().is_err());
    }
}
