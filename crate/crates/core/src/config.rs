//! Run configuration shared by every command. Precedence when assembling
//! it: command-line flags, then the config file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cam::Method;
use crate::error::{Error, Result};
use crate::grouping::DEFAULT_THETA;
use crate::metrics::{PerturbationConfig, DEFAULT_STEP};
use crate::model::{make_tiny_test_cnn, ModelHandle, ScoreMode};
use crate::weighting::{CombineConfig, CombineScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    FdCam,
    GradCam,
    AblationReduced,
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd-cam" | "fdcam" => Ok(MethodName::FdCam),
            "grad-cam" | "gradcam" => Ok(MethodName::GradCam),
            "ablation-reduced" => Ok(MethodName::AblationReduced),
            other => Err(Error::config(format!("unknown method `{other}` (fd-cam, grad-cam, ablation-reduced)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `tiny:<seed>` for the untrained reference CNN, otherwise a checkpoint path.
    pub model: String,
    /// Target layer id; `None` keeps the model's default (last conv stage).
    pub layer: Option<String>,
    pub score_mode: ScoreMode,
    pub method: MethodName,
    pub theta: f64,
    pub bias: f64,
    pub scheme: CombineScheme,
    pub use_grouping: bool,
    pub use_switch_on: bool,
    pub step: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "tiny:0".into(),
            layer: None,
            score_mode: ScoreMode::Probability,
            method: MethodName::FdCam,
            theta: DEFAULT_THETA,
            bias: 0.5,
            scheme: CombineScheme::ExpBias,
            use_grouping: true,
            use_switch_on: true,
            step: DEFAULT_STEP,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Values given explicitly on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub model: Option<String>,
    pub layer: Option<String>,
    pub score_mode: Option<ScoreMode>,
    pub method: Option<MethodName>,
    pub theta: Option<f64>,
    pub bias: Option<f64>,
    pub scheme: Option<CombineScheme>,
    pub step: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e))
    }

    /// Defaults, overlaid by `file` (if any), overlaid by `flags`.
    pub fn resolve(file: Option<&Path>, flags: &ConfigOverrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(v) = &o.model {
            self.model = v.clone();
        }
        if let Some(v) = &o.layer {
            self.layer = Some(v.clone());
        }
        if let Some(v) = o.score_mode {
            self.score_mode = v;
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.theta {
            self.theta = v;
        }
        if let Some(v) = o.bias {
            self.bias = v;
        }
        if let Some(v) = o.scheme {
            self.scheme = v;
        }
        if let Some(v) = o.step {
            self.step = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.combine_config().validate()?;
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(Error::config(format!("step must be in (0, 1), got {}", self.step)));
        }
        Ok(())
    }

    pub fn combine_config(&self) -> CombineConfig {
        CombineConfig {
            scheme: self.scheme,
            bias: self.bias,
            theta: self.theta,
            use_switch_on: self.use_switch_on,
            use_grouping: self.use_grouping,
        }
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodName::FdCam => Method::FdCam(self.combine_config()),
            MethodName::GradCam => Method::GradCam,
            MethodName::AblationReduced => Method::AblationReduced,
        }
    }

    pub fn perturbation_config(&self) -> PerturbationConfig {
        PerturbationConfig { step_fraction: self.step, ..PerturbationConfig::default() }
    }

    pub fn load_model(&self) -> Result<ModelHandle> {
        let base = match self.model.strip_prefix("tiny:") {
            Some(seed) => {
                let seed = seed.parse().map_err(|_| Error::config(format!("bad tiny model seed in `{}`", self.model)))?;
                make_tiny_test_cnn(seed)
            }
            None => ModelHandle::load_checkpoint(Path::new(&self.model))?,
        };
        let base = match &self.layer {
            Some(layer) => base.with_target_layer(layer)?,
            None => base,
        };
        Ok(base.with_score_mode(self.score_mode))
    }
}
