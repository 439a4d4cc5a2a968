//! Faithfulness (deletion/insertion curves and their AUC) and
//! discriminability (pointing game).

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedImage, BoundingBox};
use crate::error::{Error, Result};
use crate::model::{check_class, ScoreModel};
use crate::raster::{Grid, Image};

pub const DEFAULT_STEP: f64 = 0.036;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Deletion,
    Insertion,
}

/// Image that perturbed pixels are taken from (deletion) or that the
/// insertion sequence starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Baseline {
    Zeros,
    Blur { kernel: usize, sigma: f64 },
}

impl Baseline {
    pub const DEFAULT_BLUR: Baseline = Baseline::Blur { kernel: 11, sigma: 5.0 };

    pub fn render(&self, image: &Image) -> Result<Image> {
        match *self {
            Baseline::Zeros => Ok(Image::zeros(image.height, image.width)),
            Baseline::Blur { kernel, sigma } => image.gaussian_blur(kernel, sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub step_fraction: f64,
    pub deletion_baseline: Baseline,
    pub insertion_baseline: Baseline,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            step_fraction: DEFAULT_STEP,
            deletion_baseline: Baseline::Zeros,
            insertion_baseline: Baseline::DEFAULT_BLUR,
        }
    }
}

/// Class probability against the fraction of pixels perturbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub direction: Direction,
}

/// Pixel indices ordered by descending saliency, ties by row-major index.
pub fn saliency_order(saliency: &Grid) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..saliency.data.len()).collect();
    idx.sort_by(|&a, &b| saliency.data[b].total_cmp(&saliency.data[a]).then(a.cmp(&b)));
    idx
}

/// Cumulative pixel counts at each recorded point: 0, n, 2n, … and finally
/// all pixels, with `n = max(1, ⌊step · N⌋)`.
pub fn step_counts(total: usize, step_fraction: f64) -> Result<Vec<usize>> {
    if !(step_fraction > 0.0 && step_fraction < 1.0) {
        return Err(Error::input(format!("step fraction must be in (0, 1), got {step_fraction}")));
    }
    if total == 0 {
        return Err(Error::input("image has no pixels"));
    }
    let per_step = ((step_fraction * total as f64).floor() as usize).max(1);
    let mut counts: Vec<usize> = (0..).map(|i| i * per_step).take_while(|&c| c < total).collect();
    counts.push(total);
    Ok(counts)
}

fn perturbation_curve<M: ScoreModel + ?Sized>(
    model: &M,
    start: Image,
    source: &Image,
    saliency: &Grid,
    class: usize,
    step_fraction: f64,
    direction: Direction,
) -> Result<PerturbationCurve> {
    check_class(class, model.num_classes())?;
    if saliency.shape() != (start.height, start.width) {
        return Err(Error::input(format!(
            "saliency is {}x{}, image is {}x{}",
            saliency.height, saliency.width, start.height, start.width
        )));
    }
    let total = start.pixel_count();
    let counts = step_counts(total, step_fraction)?;
    let order = saliency_order(saliency);
    let mut current = start;
    let mut fractions = Vec::with_capacity(counts.len());
    let mut scores = Vec::with_capacity(counts.len());
    let mut done = 0;
    for &c in &counts {
        for &p in &order[done..c] {
            current.copy_pixel_from(source, p);
        }
        done = c;
        fractions.push(c as f64 / total as f64);
        scores.push(model.forward_scores(&current)?.probability(class));
    }
    Ok(PerturbationCurve { fractions, scores, direction })
}

/// Removes pixels in saliency order, replacing them with `baseline`.
pub fn deletion_curve_with<M: ScoreModel + ?Sized>(
    model: &M,
    image: &Image,
    saliency: &Grid,
    class: usize,
    step_fraction: f64,
    baseline: Baseline,
) -> Result<PerturbationCurve> {
    let target = baseline.render(image)?;
    perturbation_curve(model, image.clone(), &target, saliency, class, step_fraction, Direction::Deletion)
}

/// Starts from `baseline` and restores original pixels in saliency order.
pub fn insertion_curve_with<M: ScoreModel + ?Sized>(
    model: &M,
    image: &Image,
    saliency: &Grid,
    class: usize,
    step_fraction: f64,
    baseline: Baseline,
) -> Result<PerturbationCurve> {
    let start = baseline.render(image)?;
    perturbation_curve(model, start, image, saliency, class, step_fraction, Direction::Insertion)
}

/// Deletion curve with the zero baseline.
pub fn deletion_curve<M: ScoreModel + ?Sized>(
    model: &M,
    image: &Image,
    saliency: &Grid,
    class: usize,
    step_fraction: f64,
) -> Result<PerturbationCurve> {
    deletion_curve_with(model, image, saliency, class, step_fraction, Baseline::Zeros)
}

/// Insertion curve starting from an 11×11, σ=5 Gaussian blur of the input.
pub fn insertion_curve<M: ScoreModel + ?Sized>(
    model: &M,
    image: &Image,
    saliency: &Grid,
    class: usize,
    step_fraction: f64,
) -> Result<PerturbationCurve> {
    insertion_curve_with(model, image, saliency, class, step_fraction, Baseline::DEFAULT_BLUR)
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &PerturbationCurve) -> f64 {
    curve
        .fractions
        .windows(2)
        .zip(curve.scores.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Insertion AUC minus deletion AUC; higher is better.
pub fn overall_metric(insertion_auc: f64, deletion_auc: f64) -> f64 {
    insertion_auc - deletion_auc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointingOutcome {
    Hit,
    Miss,
}

/// Tests the saliency argmax (first in row-major order on ties) against the
/// union of `label`'s boxes.
pub fn pointing_game(saliency: &Grid, boxes: &[BoundingBox], label: &str) -> Result<PointingOutcome> {
    let mut relevant = boxes.iter().filter(|b| b.label == label).peekable();
    if relevant.peek().is_none() {
        return Err(Error::input(format!("no annotated box for class `{label}`")));
    }
    let (y, x) = saliency.argmax();
    Ok(if relevant.any(|b| b.contains(x, y)) { PointingOutcome::Hit } else { PointingOutcome::Miss })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointingTally {
    pub hits: usize,
    pub misses: usize,
}

impl PointingTally {
    pub fn record(&mut self, outcome: PointingOutcome) {
        match outcome {
            PointingOutcome::Hit => self.hits += 1,
            PointingOutcome::Miss => self.misses += 1,
        }
    }

    /// `hits / (hits + misses)`, or `None` before anything is recorded.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.hits + self.misses;
        (total > 0).then(|| self.hits as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingRecord {
    pub image: String,
    pub label: String,
    pub class: usize,
    pub point: (usize, usize),
    pub outcome: PointingOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingReport {
    pub tally: PointingTally,
    pub accuracy: f64,
    pub records: Vec<PointingRecord>,
}

/// Runs the pointing game for every annotated class of every image.
/// `classes` maps box labels to class indices; `saliency_for` produces the
/// map for (image, class).
pub fn pointing_accuracy<F>(items: &[AnnotatedImage], classes: &[String], mut saliency_for: F) -> Result<PointingReport>
where
    F: FnMut(&AnnotatedImage, usize) -> Result<Grid>,
{
    let mut tally = PointingTally::default();
    let mut records = Vec::new();
    for item in items {
        let mut labels: Vec<&str> = item.boxes.iter().map(|b| b.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        for label in labels {
            let class = classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::input(format!("{}: label `{label}` is not a model class", item.name)))?;
            let map = saliency_for(item, class)?;
            let outcome = pointing_game(&map, &item.boxes, label)?;
            tally.record(outcome);
            let (y, x) = map.argmax();
            records.push(PointingRecord { image: item.name.clone(), label: label.to_string(), class, point: (x, y), outcome });
        }
    }
    let accuracy = tally.accuracy().ok_or_else(|| Error::input("dataset has no annotated boxes"))?;
    Ok(PointingReport { tally, accuracy, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFaithfulness {
    pub image: String,
    pub class: usize,
    pub deletion: PerturbationCurve,
    pub insertion: PerturbationCurve,
    pub deletion_auc: f64,
    pub insertion_auc: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub config: PerturbationConfig,
    pub images: Vec<ImageFaithfulness>,
    pub mean_deletion_auc: f64,
    pub mean_insertion_auc: f64,
    pub overall: f64,
}

/// Deletion and insertion curves for one image and class.
pub fn image_faithfulness<M: ScoreModel + ?Sized>(
    model: &M,
    name: &str,
    image: &Image,
    saliency: &Grid,
    class: usize,
    config: &PerturbationConfig,
) -> Result<ImageFaithfulness> {
    let deletion = deletion_curve_with(model, image, saliency, class, config.step_fraction, config.deletion_baseline)?;
    let insertion = insertion_curve_with(model, image, saliency, class, config.step_fraction, config.insertion_baseline)?;
    let (deletion_auc, insertion_auc) = (auc(&deletion), auc(&insertion));
    Ok(ImageFaithfulness {
        image: name.to_string(),
        class,
        deletion,
        insertion,
        deletion_auc,
        insertion_auc,
        overall: overall_metric(insertion_auc, deletion_auc),
    })
}

/// Which class each image is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassChoice {
    /// The model's top-1 prediction on the unperturbed image.
    #[default]
    TopPredicted,
    Fixed(usize),
}

/// Deletion/insertion over a set of images, with mean AUCs.
pub fn evaluate_faithfulness<M, F>(
    model: &M,
    images: &[(String, Image)],
    choice: ClassChoice,
    config: &PerturbationConfig,
    mut saliency_for: F,
) -> Result<FaithfulnessReport>
where
    M: ScoreModel + ?Sized,
    F: FnMut(&Image, usize) -> Result<Grid>,
{
    if images.is_empty() {
        return Err(Error::input("no images to evaluate"));
    }
    let mut rows = Vec::with_capacity(images.len());
    for (name, image) in images {
        let class = match choice {
            ClassChoice::TopPredicted => model.forward_scores(image)?.argmax(),
            ClassChoice::Fixed(c) => c,
        };
        let map = saliency_for(image, class)?;
        rows.push(image_faithfulness(model, name, image, &map, class, config)?);
    }
    let n = rows.len() as f64;
    let mean_deletion_auc = rows.iter().map(|r| r.deletion_auc).sum::<f64>() / n;
    let mean_insertion_auc = rows.iter().map(|r| r.insertion_auc).sum::<f64>() / n;
    Ok(FaithfulnessReport {
        config: *config,
        images: rows,
        mean_deletion_auc,
        mean_insertion_auc,
        overall: overall_metric(mean_insertion_auc, mean_deletion_auc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassScores, ScoreMode};

    /// Scores class 0 as the mean of all pixel values; class 1 gets the rest.
    struct MeanProbe;

    impl ScoreModel for MeanProbe {
        fn num_classes(&self) -> usize {
            2
        }
        fn input_size(&self) -> (usize, usize) {
            (2, 2)
        }
        fn score_mode(&self) -> ScoreMode {
            ScoreMode::Probability
        }
        fn forward_scores(&self, image: &Image) -> Result<ClassScores> {
            let m = image.data.iter().sum::<f64>() / image.data.len() as f64;
            Ok(ClassScores { values: vec![m, 1.0 - m], mode: ScoreMode::Probability })
        }
    }

    struct Constant(f64);

    impl ScoreModel for Constant {
        fn num_classes(&self) -> usize {
            2
        }
        fn input_size(&self) -> (usize, usize) {
            (4, 4)
        }
        fn score_mode(&self) -> ScoreMode {
            ScoreMode::Probability
        }
        fn forward_scores(&self, _: &Image) -> Result<ClassScores> {
            Ok(ClassScores { values: vec![self.0, 1.0 - self.0], mode: ScoreMode::Probability })
        }
    }

    #[test]
    fn step_schedule() {
        let c = step_counts(224 * 224, 0.036).unwrap();
        assert_eq!(c.len(), 29);
        assert_eq!(*c.last().unwrap(), 224 * 224);
        for (i, &n) in c.iter().enumerate().take(28) {
            assert!((n as f64 / (224.0 * 224.0) - 0.036 * i as f64).abs() < 1e-3);
        }
        assert_eq!(step_counts(4, 0.25).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(step_counts(4, 0.01).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(step_counts(4, 0.0).is_err());
        assert!(step_counts(4, 1.0).is_err());
    }

    #[test]
    fn flat_curves_for_constant_model() {
        let img = Image::from_planar(4, 4, vec![0.5; 48]).unwrap();
        let sal = Grid::filled(4, 4, 0.3);
        for curve in [
            deletion_curve(&Constant(0.3), &img, &sal, 0, 0.1).unwrap(),
            insertion_curve(&Constant(0.3), &img, &sal, 0, 0.1).unwrap(),
        ] {
            assert!(curve.scores.iter().all(|&s| s == 0.3));
            assert!((auc(&curve) - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_examples() {
        let lin = PerturbationCurve { fractions: vec![0.0, 1.0], scores: vec![1.0, 0.0], direction: Direction::Deletion };
        assert_eq!(auc(&lin), 0.5);
        let three = PerturbationCurve { fractions: vec![0.0, 0.5, 1.0], scores: vec![1.0, 0.5, 0.0], direction: Direction::Deletion };
        assert_eq!(auc(&three), 0.5);
    }

    #[test]
    fn overall_is_difference() {
        assert!((overall_metric(0.5534, 0.1001) - 0.4533).abs() < 1e-12);
        assert!((overall_metric(0.5357, 0.1117) - 0.4240).abs() < 1e-12);
        assert_eq!(overall_metric(0.3, 0.3), 0.0);
    }

    #[test]
    fn mismatched_saliency_and_bad_step() {
        let img = Image::zeros(2, 2);
        assert!(deletion_curve(&MeanProbe, &img, &Grid::zeros(3, 2), 0, 0.25).is_err());
        assert!(deletion_curve(&MeanProbe, &img, &Grid::zeros(2, 2), 0, 1.5).is_err());
        assert!(deletion_curve(&MeanProbe, &img, &Grid::zeros(2, 2), 2, 0.25).is_err());
    }

    #[test]
    fn pointing_examples() {
        let bx = BoundingBox::new("cat", 0, 0, 10, 10).unwrap();
        let mut g = Grid::zeros(32, 32);
        g.set(5, 5, 1.0);
        assert_eq!(pointing_game(&g, std::slice::from_ref(&bx), "cat").unwrap(), PointingOutcome::Hit);
        let mut g = Grid::zeros(32, 32);
        g.set(5, 20, 1.0);
        assert_eq!(pointing_game(&g, std::slice::from_ref(&bx), "cat").unwrap(), PointingOutcome::Miss);
        let far = BoundingBox::new("cat", 1, 1, 10, 10).unwrap();
        assert_eq!(pointing_game(&Grid::filled(32, 32, 0.4), &[far], "cat").unwrap(), PointingOutcome::Miss);
        assert_eq!(pointing_game(&Grid::filled(32, 32, 0.4), std::slice::from_ref(&bx), "cat").unwrap(), PointingOutcome::Hit);
        assert!(pointing_game(&g, &[bx], "dog").is_err());
    }

    #[test]
    fn tally_accuracy() {
        let mut t = PointingTally::default();
        assert_eq!(t.accuracy(), None);
        for o in [PointingOutcome::Hit, PointingOutcome::Hit, PointingOutcome::Miss, PointingOutcome::Hit] {
            t.record(o);
        }
        assert_eq!(t.accuracy(), Some(0.75));
    }
}
