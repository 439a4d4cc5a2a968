//! Class activation maps that combine pooled-gradient channel weights with
//! grouped channel-switching scores, plus the evaluation harness around
//! them: deletion/insertion AUC and the pointing game.
//!
//! The pipeline for one image and class:
//!
//! 1. capture the target layer's activations and the class-score gradients
//!    ([`model::LayerModel`]);
//! 2. group each channel with its most cosine-similar peers ([`grouping`]);
//! 3. score each group by switching it off and by switching only it on
//!    ([`weighting::switch_scores`]);
//! 4. min-max normalize gradient weights and scores and combine them as
//!    `â · e^ŝ − b` ([`weighting::combine_weights`]);
//! 5. weight, sum, ReLU, upsample and normalize the activation maps
//!    ([`cam::compose_cam`]).
//!
//! A small reference CNN ([`model::make_tiny_test_cnn`]) and a synthetic
//! shapes dataset ([`shapes`]) make every step runnable without external
//! weights.

pub mod cam;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grouping;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod render;
pub mod shapes;
pub mod train;
pub mod weighting;

pub use cam::{compose_cam, fd_cam, grad_cam, Method, SaliencyMap};
pub use error::{Error, Result};
pub use model::{make_tiny_test_cnn, LayerModel, ModelHandle, ScoreMode, ScoreModel};
pub use raster::{Grid, Image};
pub use weighting::{fd_weights, CombineConfig, CombineScheme};
