use std::cell::Cell;

use super::{ActivationStack, ChannelMask, ClassScores, GradientStack, LayerModel, ScoreMode, ScoreModel};
use crate::error::Result;
use crate::raster::Image;

/// Number of passes of each kind issued through a [`CountingModel`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    /// Unmasked forward passes.
    pub forward: usize,
    /// Masked forward passes; a batch counts once per mask.
    pub masked: usize,
    /// Forward/backward passes producing gradients.
    pub gradient: usize,
    /// Activation-only captures.
    pub capture: usize,
}

/// Wraps a model and counts every pass it serves.
pub struct CountingModel<M> {
    inner: M,
    counts: Cell<CallCounts>,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel { inner, counts: Cell::new(CallCounts::default()) }
    }

    pub fn counts(&self) -> CallCounts {
        self.counts.get()
    }

    pub fn reset(&self) {
        self.counts.set(CallCounts::default());
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn bump(&self, f: impl FnOnce(&mut CallCounts)) {
        let mut c = self.counts.get();
        f(&mut c);
        self.counts.set(c);
    }
}

impl<M: ScoreModel> ScoreModel for CountingModel<M> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn input_size(&self) -> (usize, usize) {
        self.inner.input_size()
    }

    fn score_mode(&self) -> ScoreMode {
        self.inner.score_mode()
    }

    fn forward_scores(&self, image: &Image) -> Result<ClassScores> {
        self.bump(|c| c.forward += 1);
        self.inner.forward_scores(image)
    }
}

impl<M: LayerModel> LayerModel for CountingModel<M> {
    fn target_layer(&self) -> &str {
        self.inner.target_layer()
    }

    fn num_channels(&self) -> usize {
        self.inner.num_channels()
    }

    fn capture_activations(&self, image: &Image) -> Result<ActivationStack> {
        self.bump(|c| c.capture += 1);
        self.inner.capture_activations(image)
    }

    fn activations_and_gradients(&self, image: &Image, class: usize) -> Result<(ActivationStack, GradientStack)> {
        self.bump(|c| c.gradient += 1);
        self.inner.activations_and_gradients(image, class)
    }

    fn masked_forward(&self, image: &Image, mask: &ChannelMask) -> Result<ClassScores> {
        self.bump(|c| c.masked += 1);
        self.inner.masked_forward(image, mask)
    }

    fn batch_masked_forward(&self, image: &Image, masks: &[ChannelMask]) -> Result<Vec<ClassScores>> {
        self.bump(|c| c.masked += masks.len());
        self.inner.batch_masked_forward(image, masks)
    }
}
