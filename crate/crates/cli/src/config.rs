//! Pipeline configuration: one TOML file whose keys mirror the library's
//! parameter structs. Every section and key is optional.
//!
//! ```toml
//! seed = 0
//!
//! [space]
//! k = 8            # scale divisor: 1, 2, 4 or 8
//! chan_div = 16    # network channel divisor
//! h = 1.0          # box width and height
//! dz = 0.75        # box depth
//!
//! [data]           # DatasetConfig
//! styles = 10
//! n_rot = 12
//! flips = true
//! n_strands = 1500
//!
//! [train]
//! iters = 2000
//! checkpoint_every = 100
//! [train.hyper]    # Hyper: lr_g, lr_d, beta1, beta2, adam_eps, batch, objective
//! [train.hyper.loss]  # alpha, beta, lambda, content_layers, style_layers
//!
//! [synth]          # SynthParams: iso, smooth_iters, step, max_length, ...
//!
//! [orient]
//! iters = 3        # orientation refinement passes at inference
//! ```

use std::path::Path;

use hairgan::dataset::DatasetConfig;
use hairgan::gan::{Hyper, ScaleConfig};
use hairgan::mspace::{FULL_IMG_RES, FULL_VOL_RES};
use hairgan::synth::SynthParams;
use hairgan::ModelSpace;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub k: usize,
    pub chan_div: usize,
    pub h: f64,
    pub dz: f64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            k: 8,
            chan_div: 16,
            h: 1.0,
            dz: 0.75,
        }
    }
}

impl SpaceConfig {
    pub fn scale(&self) -> Result<ScaleConfig, CliError> {
        ScaleConfig::new(self.k, self.chan_div).map_err(CliError::config)
    }

    pub fn model_space(&self) -> Result<ModelSpace, CliError> {
        self.scale()?;
        ModelSpace::new(
            self.h,
            self.dz,
            FULL_VOL_RES.map(|n| n / self.k),
            FULL_IMG_RES / self.k,
        )
        .map_err(CliError::config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iters: u64,
    pub checkpoint_every: u64,
    pub hyper: Hyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            checkpoint_every: 100,
            hyper: Hyper::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientConfig {
    pub iters: usize,
}

impl Default for OrientConfig {
    fn default() -> Self {
        Self { iters: 3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub space: SpaceConfig,
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub synth: SynthParams,
    pub orient: OrientConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.space.model_space()?;
        self.synth.validate().map_err(CliError::config)?;
        let h = &self.train.hyper;
        if h.batch == 0 || !(h.lr_g >= 0.0 && h.lr_d >= 0.0) {
            return Err(CliError::Config("batch must be >= 1 and learning rates >= 0".into()));
        }
        if self.orient.iters == 0 {
            return Err(CliError::Config("orient.iters must be >= 1".into()));
        }
        Ok(())
    }
}
