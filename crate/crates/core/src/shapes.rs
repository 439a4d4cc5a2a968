//! Deterministic synthetic dataset: one filled square, circle or triangle
//! per image on a uniform background.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, AnnotatedImage, BoundingBox, SplitManifest, SPLIT_FILE};
use crate::error::{Error, Result};
use crate::model::TINY_CLASSES;
use crate::raster::Image;
use crate::render::save_rgb8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapesDatasetSpec {
    pub image_size: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Share of each class held out for validation.
    pub val_fraction: f64,
}

impl Default for ShapesDatasetSpec {
    fn default() -> Self {
        ShapesDatasetSpec { image_size: 32, samples_per_class: 50, seed: 0, val_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle];

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        TINY_CLASSES[self.class_index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub name: String,
    pub kind: ShapeKind,
    pub size: usize,
    /// Interleaved RGB, `size × size × 3`.
    pub rgb: Vec<u8>,
    pub background: [u8; 3],
    pub bbox: BoundingBox,
}

impl ShapeSample {
    pub fn image(&self) -> Image {
        Image::from_rgb8(self.size, self.size, &self.rgb).expect("sample buffer matches size")
    }

    pub fn annotated(&self) -> AnnotatedImage {
        AnnotatedImage { name: self.name.clone(), image: self.image(), boxes: vec![self.bbox.clone()] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesDataset {
    pub spec: ShapesDatasetSpec,
    pub samples: Vec<ShapeSample>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl ShapesDataset {
    pub fn train_samples(&self) -> impl Iterator<Item = &ShapeSample> {
        self.train.iter().map(|&i| &self.samples[i])
    }

    pub fn val_samples(&self) -> impl Iterator<Item = &ShapeSample> {
        self.val.iter().map(|&i| &self.samples[i])
    }
}

fn rasterize(kind: ShapeKind, size: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = size as f64;
    let inside: Box<dyn Fn(f64, f64) -> bool> = match kind {
        ShapeKind::Square => {
            let side = rng.gen_range(0.3 * n..0.55 * n).round();
            let x0 = rng.gen_range(1.0..n - side - 1.0).round();
            let y0 = rng.gen_range(1.0..n - side - 1.0).round();
            Box::new(move |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
        }
        ShapeKind::Circle => {
            let r = rng.gen_range(0.17 * n..0.28 * n);
            let cx = rng.gen_range(r + 1.0..n - r - 1.0);
            let cy = rng.gen_range(r + 1.0..n - r - 1.0);
            Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
        }
        ShapeKind::Triangle => {
            let base = rng.gen_range(0.38 * n..0.62 * n);
            let height = base * 0.9;
            let x0 = rng.gen_range(1.0..n - base - 1.0);
            let y0 = rng.gen_range(1.0..n - height - 1.0);
            let apex = (x0 + base / 2.0, y0);
            let left = (x0, y0 + height);
            let right = (x0 + base, y0 + height);
            let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
            Box::new(move |x, y| {
                let e1 = edge(apex, right, x, y);
                let e2 = edge(right, left, x, y);
                let e3 = edge(left, apex, x, y);
                (e1 >= 0.0 && e2 >= 0.0 && e3 >= 0.0) || (e1 <= 0.0 && e2 <= 0.0 && e3 <= 0.0)
            })
        }
    };
    // pixel centres
    (0..size * size).map(|p| inside((p % size) as f64 + 0.5, (p / size) as f64 + 0.5)).collect()
}

fn tight_box(mask: &[bool], size: usize, label: &str) -> Result<BoundingBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (p % size, p / size);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    BoundingBox::new(label, x0, y0, x1, y1)
}

pub fn generate_shapes(spec: &ShapesDatasetSpec) -> Result<ShapesDataset> {
    if spec.image_size < 16 {
        return Err(Error::input("shape images must be at least 16 pixels wide"));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::input("samples per class must be positive"));
    }
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(Error::input("validation fraction must be in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.image_size;
    let mut samples = Vec::with_capacity(3 * spec.samples_per_class);
    for kind in ShapeKind::ALL {
        for i in 0..spec.samples_per_class {
            let background = [rng.gen_range(0..=20u8), rng.gen_range(0..=20u8), rng.gen_range(0..=20u8)];
            let fill = [rng.gen_range(130..=255u8), rng.gen_range(130..=255u8), rng.gen_range(130..=255u8)];
            let mask = rasterize(kind, size, &mut rng);
            let rgb = mask.iter().flat_map(|&m| if m { fill } else { background }).collect();
            let bbox = tight_box(&mask, size, kind.label())?;
            samples.push(ShapeSample { name: format!("{}_{i:04}", kind.label()), kind, size, rgb, background, bbox });
        }
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let n_val = (spec.samples_per_class as f64 * spec.val_fraction).round() as usize;
    for c in 0..3 {
        let mut idx: Vec<usize> = (c * spec.samples_per_class..(c + 1) * spec.samples_per_class).collect();
        idx.shuffle(&mut rng);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(ShapesDataset { spec: *spec, samples, train, val })
}

/// Writes `images/*.png`, `annotations/*.json` and `split.json` into `dir`.
pub fn write_dataset(ds: &ShapesDataset, dir: &Path) -> Result<()> {
    for sub in ["images", "annotations"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for s in &ds.samples {
        save_rgb8(&s.image(), &dir.join("images").join(format!("{}.png", s.name)))?;
        let ann = Annotation { image: format!("../images/{}.png", s.name), boxes: vec![s.bbox.clone()] };
        ann.save(&dir.join("annotations").join(format!("{}.json", s.name)))?;
    }
    let listing = |idx: &[usize]| idx.iter().map(|&i| format!("annotations/{}.json", ds.samples[i].name)).collect();
    let manifest = SplitManifest {
        classes: TINY_CLASSES.iter().map(|s| s.to_string()).collect(),
        seed: ds.spec.seed,
        train: listing(&ds.train),
        val: listing(&ds.val),
    };
    let path = dir.join(SPLIT_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
