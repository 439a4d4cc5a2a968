use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Conv2d, Layer, Linear, Network, Stage, Tensor};
use super::{
    check_class, softmax, ActivationStack, ChannelMask, ClassScores, GradientStack, LayerModel, ScoreMode, ScoreModel,
};
use crate::error::{Error, Result};
use crate::raster::Image;

/// Class labels of the reference tiny CNN, in output order.
pub const TINY_CLASSES: [&str; 3] = ["square", "circle", "triangle"];

const CHECKPOINT_FORMAT: &str = "fdcam-checkpoint/1";

/// A network plus the explanation settings that go with it: target layer
/// and score mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHandle {
    network: Network,
    class_names: Vec<String>,
    target_stage: usize,
    score_mode: ScoreMode,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    class_names: Vec<String>,
    network: Network,
}

impl ModelHandle {
    /// Wraps a network. The target layer defaults to the last convolutional
    /// stage and the score mode to probability.
    pub fn new(network: Network, class_names: Vec<String>) -> Result<Self> {
        let target_stage = network
            .stages
            .iter()
            .rposition(Stage::is_convolutional)
            .ok_or_else(|| Error::config("network has no convolutional stage"))?;
        let probe = network.forward_range(
            Tensor::zeros(network.input_channels, network.input_height, network.input_width),
            0..network.stages.len(),
        );
        if probe.channels != class_names.len() || probe.height != 1 || probe.width != 1 {
            return Err(Error::config(format!(
                "network output {}x{}x{} does not match {} class names",
                probe.channels,
                probe.height,
                probe.width,
                class_names.len()
            )));
        }
        if network.input_channels != Image::CHANNELS {
            return Err(Error::config("network must take 3-channel input"));
        }
        Ok(ModelHandle { network, class_names, target_stage, score_mode: ScoreMode::Probability })
    }

    pub fn with_target_layer(mut self, id: &str) -> Result<Self> {
        let idx = self.network.stage_index(id).ok_or_else(|| Error::config(format!("unknown layer id `{id}`")))?;
        if !self.network.stages[idx].is_convolutional() {
            return Err(Error::config(format!("layer `{id}` is not convolutional")));
        }
        self.target_stage = idx;
        Ok(self)
    }

    pub fn with_score_mode(mut self, mode: ScoreMode) -> Self {
        self.score_mode = mode;
        self
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }

    /// Hex SHA-256 over every parameter's little-endian bytes, in layer order.
    pub fn parameter_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in self.network.params() {
            for v in p {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn to_tensor(&self, image: &Image) -> Result<Tensor> {
        let (h, w) = self.input_size();
        if image.height != h || image.width != w {
            return Err(Error::input(format!(
                "image is {}x{}, model expects {h}x{w}",
                image.height, image.width
            )));
        }
        Ok(Tensor { channels: 3, height: h, width: w, data: image.data.clone() })
    }

    fn prefix(&self, image: &Image) -> Result<Tensor> {
        let acts = self.network.forward_range(self.to_tensor(image)?, 0..self.target_stage + 1);
        if acts.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite activations at target layer"));
        }
        Ok(acts)
    }

    fn suffix_range(&self) -> std::ops::Range<usize> {
        self.target_stage + 1..self.network.stages.len()
    }

    fn scores_from_tensor(&self, acts: Tensor) -> Result<ClassScores> {
        let logits = self.network.forward_range(acts, self.suffix_range()).data;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite class scores"));
        }
        let values = match self.score_mode {
            ScoreMode::Probability => softmax(&logits),
            ScoreMode::Logit => logits,
        };
        Ok(ClassScores { values, mode: self.score_mode })
    }

    fn stack_from_tensor(&self, t: Tensor) -> ActivationStack {
        ActivationStack {
            channels: t.channels,
            height: t.height,
            width: t.width,
            data: t.data,
            layer: self.target_layer().to_string(),
        }
    }

    /// Runs only the layers after the target layer on a (possibly edited)
    /// activation stack.
    pub fn scores_from_activations(&self, acts: &ActivationStack) -> Result<ClassScores> {
        if acts.channels != self.num_channels() {
            return Err(Error::input("activation stack does not match target layer"));
        }
        self.scores_from_tensor(Tensor {
            channels: acts.channels,
            height: acts.height,
            width: acts.width,
            data: acts.data.clone(),
        })
    }

    fn apply_mask(acts: &Tensor, mask: &ChannelMask) -> Tensor {
        let mut t = acts.clone();
        let n = t.plane_len();
        for (k, &on) in mask.on.iter().enumerate() {
            if !on {
                t.data[k * n..(k + 1) * n].fill(0.0);
            }
        }
        t
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            class_names: self.class_names.clone(),
            network: self.network.clone(),
        };
        let text = serde_json::to_string(&ckpt).map_err(|e| Error::format(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint; target layer and score mode take their defaults.
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, format!("unsupported checkpoint format `{}`", ckpt.format)));
        }
        Self::new(ckpt.network, ckpt.class_names)
    }
}

impl ScoreModel for ModelHandle {
    fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    fn input_size(&self) -> (usize, usize) {
        (self.network.input_height, self.network.input_width)
    }

    fn score_mode(&self) -> ScoreMode {
        self.score_mode
    }

    fn forward_scores(&self, image: &Image) -> Result<ClassScores> {
        let acts = self.prefix(image)?;
        self.scores_from_tensor(acts)
    }
}

impl LayerModel for ModelHandle {
    fn target_layer(&self) -> &str {
        &self.network.stages[self.target_stage].name
    }

    fn num_channels(&self) -> usize {
        match &self.network.stages[self.target_stage].layers[0] {
            Layer::Conv2d(c) => c.out_channels,
            _ => unreachable!("target stage is convolutional"),
        }
    }

    fn capture_activations(&self, image: &Image) -> Result<ActivationStack> {
        Ok(self.stack_from_tensor(self.prefix(image)?))
    }

    fn activations_and_gradients(&self, image: &Image, class: usize) -> Result<(ActivationStack, GradientStack)> {
        check_class(class, self.num_classes())?;
        let acts = self.prefix(image)?;
        let (logits, trace) = self.network.forward_range_traced(acts.clone(), self.suffix_range());
        let mut seed = vec![0.0; logits.data.len()];
        match self.score_mode {
            ScoreMode::Logit => seed[class] = 1.0,
            ScoreMode::Probability => {
                // d p_c / d z_j = p_c (δ_cj − p_j)
                let p = softmax(&logits.data);
                for (j, s) in seed.iter_mut().enumerate() {
                    *s = p[class] * (f64::from(u8::from(j == class)) - p[j]);
                }
            }
        }
        let grad = self.network.backward(&trace, Tensor { data: seed, ..logits }, None);
        if grad.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite gradients"));
        }
        let grads = GradientStack {
            channels: grad.channels,
            height: grad.height,
            width: grad.width,
            data: grad.data,
            class,
        };
        Ok((self.stack_from_tensor(acts), grads))
    }

    fn masked_forward(&self, image: &Image, mask: &ChannelMask) -> Result<ClassScores> {
        mask.check_len(self.num_channels())?;
        let acts = self.prefix(image)?;
        self.scores_from_tensor(Self::apply_mask(&acts, mask))
    }

    /// Shares one prefix pass across the whole batch.
    fn batch_masked_forward(&self, image: &Image, masks: &[ChannelMask]) -> Result<Vec<ClassScores>> {
        if masks.is_empty() {
            return Err(Error::input("empty mask batch"));
        }
        let k = self.num_channels();
        for m in masks {
            m.check_len(k)?;
        }
        let acts = self.prefix(image)?;
        masks.iter().map(|m| self.scores_from_tensor(Self::apply_mask(&acts, m))).collect()
    }
}

/// The reference tiny CNN for 32×32 RGB input:
/// conv1 (8ch, 3×3, pad 1) + ReLU + 2×2 max-pool,
/// conv2 (16ch, 3×3, pad 1) + ReLU + 2×2 max-pool,
/// global average pool, linear head to 3 classes.
///
/// Weights are He-normal from a ChaCha8 stream seeded with `seed`; all
/// biases start at zero. Target layer is `conv2`.
pub fn make_tiny_test_cnn(seed: u64) -> ModelHandle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |n: usize, fan_in: usize, gain: f64| -> Vec<f64> {
        let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("valid std");
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    };
    let mut conv1 = Conv2d::zeros(3, 8, 3, 1);
    conv1.weight = normal(conv1.weight.len(), 27, 2.0);
    let mut conv2 = Conv2d::zeros(8, 16, 3, 1);
    conv2.weight = normal(conv2.weight.len(), 72, 2.0);
    let mut head = Linear::zeros(16, TINY_CLASSES.len());
    head.weight = normal(head.weight.len(), 16, 1.0);

    let network = Network {
        input_channels: 3,
        input_height: 32,
        input_width: 32,
        stages: vec![
            Stage { name: "conv1".into(), layers: vec![Layer::Conv2d(conv1), Layer::Relu, Layer::MaxPool2] },
            Stage { name: "conv2".into(), layers: vec![Layer::Conv2d(conv2), Layer::Relu, Layer::MaxPool2] },
            Stage { name: "head".into(), layers: vec![Layer::GlobalAvgPool, Layer::Linear(head)] },
        ],
    };
    ModelHandle::new(network, TINY_CLASSES.iter().map(|s| s.to_string()).collect())
        .expect("tiny CNN definition is consistent")
}
