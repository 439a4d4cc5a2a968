//! Fitting the tiny CNN on the synthetic shapes data (Adam, softmax
//! cross-entropy, single-threaded and fully deterministic).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::network::Tensor;
use crate::model::{make_tiny_test_cnn, softmax, ModelHandle, ScoreModel};
use crate::raster::Image;
use crate::shapes::ShapesDataset;

/// Held-out accuracy the trained model must reach.
pub const ACCURACY_GATE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Upper bound of the share of pixels zeroed in an augmented sample;
    /// half of all samples are augmented. Keeps scattered missing pixels
    /// from becoming a class cue.
    pub pixel_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { seed: 0, epochs: 20, batch_size: 16, learning_rate: 0.01, pixel_dropout: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub parameter_hash: String,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, p) in params.into_iter().enumerate() {
            for j in 0..p.len() {
                let g = grads[i][j];
                self.m[i][j] = Self::BETA1 * self.m[i][j] + (1.0 - Self::BETA1) * g;
                self.v[i][j] = Self::BETA2 * self.v[i][j] + (1.0 - Self::BETA2) * g * g;
                p[j] -= lr * (self.m[i][j] / c1) / ((self.v[i][j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Fraction of `samples` whose top-1 class matches the label.
pub fn accuracy<M: ScoreModel + ?Sized>(model: &M, samples: &[(Image, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("no samples"));
    }
    let mut correct = 0;
    for (img, label) in samples {
        if model.forward_scores(img)?.argmax() == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains a fresh `make_tiny_test_cnn(config.seed)` on the dataset's train
/// split and reports validation accuracy. Does not enforce the gate.
pub fn train_tiny(ds: &ShapesDataset, config: &TrainConfig) -> Result<(ModelHandle, TrainReport)> {
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::config("epochs and batch size must be positive"));
    }
    let mut model = make_tiny_test_cnn(config.seed);
    let to_pairs = |it: &mut dyn Iterator<Item = &crate::shapes::ShapeSample>| -> Vec<(Image, usize)> {
        it.map(|s| (s.image(), s.kind.class_index())).collect()
    };
    let train = to_pairs(&mut ds.train_samples());
    let val = to_pairs(&mut ds.val_samples());
    if train.is_empty() {
        return Err(Error::input("empty training split"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_7a1e);
    let shapes: Vec<usize> = model.network().params().iter().map(|p| p.len()).collect();
    let mut adam = Adam {
        m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        t: 0,
    };
    let n_stages = model.network().stages.len();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        // step decay over the last third
        let lr = if epoch >= 2 * config.epochs / 3 { config.learning_rate * 0.1 } else { config.learning_rate };
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let net = model.network();
            let mut grads = net.zero_grads();
            for &i in batch {
                let (img, label) = &train[i];
                let mut data = img.data.clone();
                if config.pixel_dropout > 0.0 && rng.gen_bool(0.5) {
                    let share = rng.gen_range(0.0..config.pixel_dropout);
                    let plane = img.pixel_count();
                    for p in 0..plane {
                        if rng.gen_bool(share) {
                            for c in 0..3 {
                                data[c * plane + p] = 0.0;
                            }
                        }
                    }
                }
                let x = Tensor { channels: 3, height: img.height, width: img.width, data };
                let (logits, trace) = net.forward_range_traced(x, 0..n_stages);
                let p = softmax(&logits.data);
                epoch_loss -= p[*label].max(1e-300).ln();
                let mut g = p;
                g[*label] -= 1.0;
                let scale = 1.0 / batch.len() as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                net.backward(&trace, Tensor { data: g, ..logits }, Some(&mut grads));
            }
            adam.step(model.network_mut().params_mut(), &grads, lr);
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::numeric(format!("training diverged at epoch {epoch}")));
        }
        epoch_losses.push(mean);
    }

    let train_accuracy = accuracy(&model, &train)?;
    let val_accuracy = if val.is_empty() { train_accuracy } else { accuracy(&model, &val)? };
    let report = TrainReport {
        config: *config,
        train_samples: train.len(),
        val_samples: val.len(),
        epoch_losses,
        train_accuracy,
        val_accuracy,
        parameter_hash: model.parameter_hash(),
    };
    Ok((model, report))
}
