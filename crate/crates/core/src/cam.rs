//! Composition of channel weights and activation maps into saliency maps.
//!
//! Order of operations: weighted sum at the native `h × w` resolution,
//! ReLU, corner-aligned bilinear upsampling to the input size, min-max
//! normalization (an all-zero map stays all-zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationStack, LayerModel};
use crate::raster::{Grid, Image};
use crate::weighting::{fd_weights, grad_weights, CombineConfig, FdWeights};

/// An `H × W` explanation in [0, 1] for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub map: Grid,
    pub class: usize,
    pub method: String,
}

/// `Σ_k w_k A^k` before any nonlinearity.
pub fn weighted_sum(acts: &ActivationStack, weights: &[f64]) -> Result<Grid> {
    if weights.len() != acts.channels {
        return Err(Error::input(format!("{} weights for {} channels", weights.len(), acts.channels)));
    }
    let mut out = Grid::zeros(acts.height, acts.width);
    for (k, &w) in weights.iter().enumerate() {
        for (o, &a) in out.data.iter_mut().zip(acts.channel(k)) {
            *o += w * a;
        }
    }
    Ok(out)
}

/// ReLU of the weighted sum, upsampled to `out_size` and min-max normalized.
pub fn compose_cam(acts: &ActivationStack, weights: &[f64], out_size: (usize, usize)) -> Result<Grid> {
    let (oh, ow) = out_size;
    if oh < acts.height || ow < acts.width {
        return Err(Error::input(format!(
            "output size {oh}x{ow} smaller than activation size {}x{}",
            acts.height, acts.width
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::numeric("non-finite channel weight"));
    }
    let mut m = weighted_sum(acts, weights)?;
    m.data.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(m.resize_bilinear(oh, ow).min_max_normalized())
}

pub fn grad_cam<M: LayerModel + ?Sized>(model: &M, image: &Image, class: usize) -> Result<SaliencyMap> {
    let (acts, grads) = model.activations_and_gradients(image, class)?;
    let w = grad_weights(&grads);
    let map = compose_cam(&acts, &w.values, (image.height, image.width))?;
    Ok(SaliencyMap { map, class, method: "grad-cam".into() })
}

/// Saliency map plus the intermediate weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCamExplanation {
    pub saliency: SaliencyMap,
    pub weights: FdWeights,
}

pub fn fd_cam_explained<M: LayerModel + ?Sized>(
    model: &M,
    image: &Image,
    class: usize,
    config: &CombineConfig,
) -> Result<FdCamExplanation> {
    let weights = fd_weights(model, image, class, config)?;
    let map = compose_cam(&weights.activations, &weights.omega.values, (image.height, image.width))?;
    let saliency = SaliencyMap { map, class, method: format!("fd-cam({})", config.tag()) };
    Ok(FdCamExplanation { saliency, weights })
}

pub fn fd_cam<M: LayerModel + ?Sized>(model: &M, image: &Image, class: usize, config: &CombineConfig) -> Result<SaliencyMap> {
    Ok(fd_cam_explained(model, image, class, config)?.saliency)
}

/// The explanation methods exposed by the library and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    GradCam,
    FdCam(CombineConfig),
    AblationReduced,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GradCam => "grad-cam",
            Method::FdCam(_) => "fd-cam",
            Method::AblationReduced => "ablation-reduced",
        }
    }

    pub fn explain<M: LayerModel + ?Sized>(&self, model: &M, image: &Image, class: usize) -> Result<SaliencyMap> {
        match self {
            Method::GradCam => grad_cam(model, image, class),
            Method::FdCam(cfg) => fd_cam(model, image, class, cfg),
            Method::AblationReduced => {
                let mut s = fd_cam(model, image, class, &CombineConfig::ablation_reduced())?;
                s.method = "ablation-reduced".into();
                Ok(s)
            }
        }
    }
}

/// Uniform-random saliency keyed by `seed` and the image content; the
/// control that every method should beat.
pub fn random_saliency(image: &Image, seed: u64) -> Grid {
    use rand::{Rng, SeedableRng};
    use sha2::{Digest, Sha256};

    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for v in &image.data {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = rand_chacha::ChaCha8Rng::from_seed(key);
    let data = (0..image.pixel_count()).map(|_| rng.gen::<f64>()).collect();
    Grid { height: image.height, width: image.width, data }
}
