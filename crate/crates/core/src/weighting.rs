//! Channel weights: pooled gradients, grouped switch-off/switch-on scores,
//! min-max normalization and their combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{all_groups, similarity_matrix, ChannelGroup, DEFAULT_THETA};
use crate::model::{check_class, ActivationStack, ChannelMask, GradientStack, LayerModel};
use crate::raster::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Gradient,
    SwitchOff,
    SwitchOn,
    SwitchCombined,
    Normalized,
    Final,
}

/// One scalar per target-layer channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub kind: WeightKind,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, kind: WeightKind) -> Self {
        WeightVector { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How normalized gradient weights `â` and switching scores `ŝ` are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineScheme {
    /// `â · e^ŝ − b`
    #[default]
    ExpBias,
    /// `â · e^ŝ`
    ExpNoBias,
    /// `â · ŝ`
    Product,
    /// The switching score alone, un-normalized.
    ScoreOnly,
}

impl std::str::FromStr for CombineScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "exp_bias" => Ok(CombineScheme::ExpBias),
            "exp_no_bias" => Ok(CombineScheme::ExpNoBias),
            "product" => Ok(CombineScheme::Product),
            "score_only" => Ok(CombineScheme::ScoreOnly),
            other => Err(Error::config(format!("unknown combination scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for CombineScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CombineScheme::ExpBias => "exp_bias",
            CombineScheme::ExpNoBias => "exp_no_bias",
            CombineScheme::Product => "product",
            CombineScheme::ScoreOnly => "score_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombineConfig {
    pub scheme: CombineScheme,
    pub bias: f64,
    /// Group percentile in (0, 100].
    pub theta: f64,
    pub use_switch_on: bool,
    pub use_grouping: bool,
}

impl Default for CombineConfig {
    fn default() -> Self {
        CombineConfig {
            scheme: CombineScheme::ExpBias,
            bias: 0.5,
            theta: DEFAULT_THETA,
            use_switch_on: true,
            use_grouping: true,
        }
    }
}

impl CombineConfig {
    /// Single-channel switch-off scores used directly as weights; this is
    /// the ablation-style reduction with no grouping and no switch-on term.
    pub fn ablation_reduced() -> Self {
        CombineConfig { scheme: CombineScheme::ScoreOnly, use_grouping: false, use_switch_on: false, ..Self::default() }
    }

    /// No grouping, switch-off only, default combination.
    pub fn ungrouped_switch_off() -> Self {
        CombineConfig { use_grouping: false, use_switch_on: false, ..Self::default() }
    }

    /// Grouping with switch-off only, default combination.
    pub fn grouped_switch_off() -> Self {
        CombineConfig { use_switch_on: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bias.is_finite() {
            return Err(Error::config("bias must be finite"));
        }
        if !(self.theta > 0.0 && self.theta <= 100.0) {
            return Err(Error::config(format!("theta must be in (0, 100], got {}", self.theta)));
        }
        Ok(())
    }

    /// Compact description used in method tags.
    pub fn tag(&self) -> String {
        format!(
            "scheme={},theta={},b={},grouping={},switch_on={}",
            self.scheme, self.theta, self.bias, self.use_grouping, self.use_switch_on
        )
    }
}

/// Spatial mean of each channel's gradient.
pub fn grad_weights(grads: &GradientStack) -> WeightVector {
    let n = grads.plane_len() as f64;
    let values = (0..grads.channels).map(|k| grads.channel(k).iter().sum::<f64>() / n).collect();
    WeightVector::new(values, WeightKind::Gradient)
}

/// Per-channel switching scores for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchScores {
    /// Unmasked class score `f_c(X)`.
    pub base_score: f64,
    /// `f_c(X) − f_c(X | group off)`
    pub off: WeightVector,
    /// `f_c(X | only group on)`; absent when switch-on is disabled.
    pub on: Option<WeightVector>,
    /// Mean of `off` and `on`, or `off` alone.
    pub combined: WeightVector,
}

/// Scores every group by switching it off, and (optionally) by switching
/// on only that group. Issues one unmasked pass and one masked batch of
/// `K` or `2K` masks.
pub fn switch_scores<M: LayerModel + ?Sized>(
    model: &M,
    image: &Image,
    groups: &[ChannelGroup],
    class: usize,
    config: &CombineConfig,
) -> Result<SwitchScores> {
    let k = model.num_channels();
    if groups.len() != k {
        return Err(Error::input(format!("{} groups given for {k} channels", groups.len())));
    }
    check_class(class, model.num_classes())?;
    if groups.iter().flat_map(|g| &g.members).any(|&m| m >= k) {
        return Err(Error::input("group member out of channel range"));
    }

    let base_score = model.forward_scores(image)?.get(class);
    let mut masks: Vec<ChannelMask> = groups.iter().map(|g| ChannelMask::switch_off(k, &g.members)).collect();
    if config.use_switch_on {
        masks.extend(groups.iter().map(|g| ChannelMask::switch_on_only(k, &g.members)));
    }
    let scores = model.batch_masked_forward(image, &masks)?;
    if scores.len() != masks.len() {
        return Err(Error::numeric("backend returned wrong number of masked scores"));
    }

    let off: Vec<f64> = scores[..k].iter().map(|s| base_score - s.get(class)).collect();
    let (on, combined) = if config.use_switch_on {
        let on: Vec<f64> = scores[k..].iter().map(|s| s.get(class)).collect();
        let combined = off.iter().zip(&on).map(|(a, b)| (a + b) / 2.0).collect();
        (Some(WeightVector::new(on, WeightKind::SwitchOn)), combined)
    } else {
        (None, off.clone())
    };
    Ok(SwitchScores {
        base_score,
        off: WeightVector::new(off, WeightKind::SwitchOff),
        on,
        combined: WeightVector::new(combined, WeightKind::SwitchCombined),
    })
}

/// `(w − min) / (max − min)`; an all-equal vector maps to all zeros.
pub fn min_max_normalize(w: &WeightVector) -> Result<WeightVector> {
    if w.values.is_empty() {
        return Err(Error::input("cannot normalize an empty weight vector"));
    }
    if w.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite weight"));
    }
    let lo = w.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span <= 1e-12 {
        vec![0.0; w.len()]
    } else {
        w.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    };
    Ok(WeightVector::new(values, WeightKind::Normalized))
}

/// Elementwise combination per `config.scheme`. For `ScoreOnly` the second
/// argument is returned as-is, so raw scores pass straight through.
pub fn combine_weights(alpha_hat: &WeightVector, s_hat: &WeightVector, config: &CombineConfig) -> Result<WeightVector> {
    if alpha_hat.len() != s_hat.len() {
        return Err(Error::input(format!("weight lengths differ: {} vs {}", alpha_hat.len(), s_hat.len())));
    }
    let b = config.bias;
    let values = alpha_hat
        .values
        .iter()
        .zip(&s_hat.values)
        .map(|(&a, &s)| match config.scheme {
            CombineScheme::ExpBias => a * s.exp() - b,
            CombineScheme::ExpNoBias => a * s.exp(),
            CombineScheme::Product => a * s,
            CombineScheme::ScoreOnly => s,
        })
        .collect();
    Ok(WeightVector::new(values, WeightKind::Final))
}

/// Everything computed while weighting one (image, class) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FdWeights {
    pub class: usize,
    pub activations: ActivationStack,
    pub groups: Vec<ChannelGroup>,
    pub alpha: WeightVector,
    pub switch: SwitchScores,
    pub alpha_hat: WeightVector,
    pub s_hat: WeightVector,
    pub omega: WeightVector,
}

/// Debug/regression dump of the weight pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDump {
    pub alpha: Vec<f64>,
    pub s_off: Vec<f64>,
    pub s_on: Option<Vec<f64>>,
    pub s: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub omega: Vec<f64>,
}

impl FdWeights {
    pub fn dump(&self) -> WeightDump {
        WeightDump {
            alpha: self.alpha.values.clone(),
            s_off: self.switch.off.values.clone(),
            s_on: self.switch.on.as_ref().map(|w| w.values.clone()),
            s: self.switch.combined.values.clone(),
            alpha_hat: self.alpha_hat.values.clone(),
            s_hat: self.s_hat.values.clone(),
            omega: self.omega.values.clone(),
        }
    }
}

/// Full weight pipeline: one gradient pass, grouping, switching scores,
/// normalization and combination. With `ScoreOnly` the final weights are
/// the raw switching scores.
pub fn fd_weights<M: LayerModel + ?Sized>(model: &M, image: &Image, class: usize, config: &CombineConfig) -> Result<FdWeights> {
    config.validate()?;
    let (activations, grads) = model.activations_and_gradients(image, class)?;
    let alpha = grad_weights(&grads);
    let groups = if config.use_grouping {
        all_groups(&similarity_matrix(&activations), config.theta)?
    } else {
        (0..activations.channels).map(ChannelGroup::singleton).collect()
    };
    let switch = switch_scores(model, image, &groups, class, config)?;
    let alpha_hat = min_max_normalize(&alpha)?;
    let s_hat = min_max_normalize(&switch.combined)?;
    let omega = match config.scheme {
        CombineScheme::ScoreOnly => combine_weights(&alpha_hat, &switch.combined, config)?,
        _ => combine_weights(&alpha_hat, &s_hat, config)?,
    };
    if omega.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite combined weight"));
    }
    Ok(FdWeights { class, activations, groups, alpha, switch, alpha_hat, s_hat, omega })
}
