//! Classifier abstraction: forward scoring, target-layer activation capture,
//! activation gradients and channel-masked forward passes.

mod counting;
mod handle;
pub mod network;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Grid, Image};

pub use counting::{CallCounts, CountingModel};
pub use handle::{make_tiny_test_cnn, ModelHandle, TINY_CLASSES};

/// Whether class scores are softmax probabilities or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Probability,
    Logit,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" | "prob" | "softmax" => Ok(ScoreMode::Probability),
            "logit" | "logits" => Ok(ScoreMode::Logit),
            other => Err(Error::config(format!("unknown score mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Probability => "probability",
            ScoreMode::Logit => "logit",
        })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-class scores from one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub values: Vec<f64>,
    pub mode: ScoreMode,
}

impl ClassScores {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.values[class]
    }

    /// Top-1 class; ties resolve to the smaller index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Probabilities regardless of mode (softmax applied to logits).
    pub fn probabilities(&self) -> Vec<f64> {
        match self.mode {
            ScoreMode::Probability => self.values.clone(),
            ScoreMode::Logit => softmax(&self.values),
        }
    }

    pub fn probability(&self, class: usize) -> f64 {
        match self.mode {
            ScoreMode::Probability => self.values[class],
            ScoreMode::Logit => softmax(&self.values)[class],
        }
    }
}

/// The `K × h × w` post-activation output of the target layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStack {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub layer: String,
}

impl ActivationStack {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>, layer: impl Into<String>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::input("activation stack dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::input("activation data length does not match shape"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite activation"));
        }
        Ok(ActivationStack { channels, height, width, data, layer: layer.into() })
    }

    /// Builds a stack from per-channel maps of equal shape.
    pub fn from_maps(maps: &[Grid], layer: impl Into<String>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::input("no channels"))?;
        if maps.iter().any(|m| m.shape() != first.shape()) {
            return Err(Error::input("channel maps differ in shape"));
        }
        let data = maps.iter().flat_map(|m| m.data.iter().copied()).collect();
        Self::new(maps.len(), first.height, first.width, data, layer)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_map(&self, k: usize) -> Grid {
        Grid { height: self.height, width: self.width, data: self.channel(k).to_vec() }
    }

    /// Copy with the channels that are off in `mask` replaced by zeros.
    pub fn masked(&self, mask: &ChannelMask) -> Result<Self> {
        mask.check_len(self.channels)?;
        let mut out = self.clone();
        let n = self.plane_len();
        for (k, &on) in mask.on.iter().enumerate() {
            if !on {
                out.data[k * n..(k + 1) * n].fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Gradients of one class score with respect to every activation pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub class: usize,
}

impl GradientStack {
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }
}

/// Per-channel on/off switches applied at the target layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelMask {
    pub on: Vec<bool>,
}

impl ChannelMask {
    pub fn all_on(k: usize) -> Self {
        ChannelMask { on: vec![true; k] }
    }

    pub fn all_off(k: usize) -> Self {
        ChannelMask { on: vec![false; k] }
    }

    /// Everything on except the listed channels.
    pub fn switch_off(k: usize, channels: &[usize]) -> Self {
        let mut m = Self::all_on(k);
        for &c in channels {
            m.on[c] = false;
        }
        m
    }

    /// Only the listed channels on.
    pub fn switch_on_only(k: usize, channels: &[usize]) -> Self {
        let mut m = Self::all_off(k);
        for &c in channels {
            m.on[c] = true;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.on.iter().all(|&b| b)
    }

    pub(crate) fn check_len(&self, k: usize) -> Result<()> {
        if self.on.len() != k {
            return Err(Error::input(format!("mask has {} entries, target layer has {k} channels", self.on.len())));
        }
        Ok(())
    }
}

/// Anything that maps an image to class scores.
pub trait ScoreModel {
    fn num_classes(&self) -> usize;

    /// Expected input `(height, width)`.
    fn input_size(&self) -> (usize, usize);

    fn score_mode(&self) -> ScoreMode;

    fn forward_scores(&self, image: &Image) -> Result<ClassScores>;
}

/// A convolutional classifier with an addressable target layer.
pub trait LayerModel: ScoreModel {
    fn target_layer(&self) -> &str;

    /// Channel count `K` of the target layer.
    fn num_channels(&self) -> usize;

    fn capture_activations(&self, image: &Image) -> Result<ActivationStack>;

    /// One forward/backward pass returning the target activations together
    /// with the gradient of `class`'s score (in the configured score mode).
    fn activations_and_gradients(&self, image: &Image, class: usize) -> Result<(ActivationStack, GradientStack)>;

    fn activation_gradients(&self, image: &Image, class: usize) -> Result<GradientStack> {
        Ok(self.activations_and_gradients(image, class)?.1)
    }

    /// Forward pass with the off channels of `mask` zeroed at the target layer.
    fn masked_forward(&self, image: &Image, mask: &ChannelMask) -> Result<ClassScores>;

    /// Element `i` equals `masked_forward(image, &masks[i])`.
    fn batch_masked_forward(&self, image: &Image, masks: &[ChannelMask]) -> Result<Vec<ClassScores>> {
        if masks.is_empty() {
            return Err(Error::input("empty mask batch"));
        }
        masks.iter().map(|m| self.masked_forward(image, m)).collect()
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn input_size(&self) -> (usize, usize) {
        (**self).input_size()
    }
    fn score_mode(&self) -> ScoreMode {
        (**self).score_mode()
    }
    fn forward_scores(&self, image: &Image) -> Result<ClassScores> {
        (**self).forward_scores(image)
    }
}

pub(crate) fn check_class(class: usize, num_classes: usize) -> Result<()> {
    if class >= num_classes {
        return Err(Error::input(format!("class {class} out of range (model has {num_classes} classes)")));
    }
    Ok(())
}
