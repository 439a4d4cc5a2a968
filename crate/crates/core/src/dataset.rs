//! Annotated image sets: bounding boxes, the JSON annotation format,
//! directory loading and the VOC XML importer.
//!
//! Annotation JSON:
//! `{"image": path, "boxes": [{"label": str, "x_min": int, "y_min": int, "x_max": int, "y_max": int}]}`
//! with image paths relative to the annotation file. Box coordinates are
//! pixels, min inclusive and max exclusive.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::render::load_image_file;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub label: String,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(label: impl Into<String>, x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        let b = BoundingBox { label: label.into(), x_min, y_min, x_max, y_max };
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::input(format!("degenerate box {b:?}")));
        }
        Ok(b)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max || self.x_max > width || self.y_max > height {
            return Err(Error::input(format!("box {self:?} does not fit a {width}x{height} image")));
        }
        Ok(())
    }

    /// Maps the box onto a resized image, expanding outward to whole pixels.
    pub fn rescaled(&self, from: (usize, usize), to: (usize, usize)) -> BoundingBox {
        let (fh, fw) = from;
        let (th, tw) = to;
        let sx = tw as f64 / fw as f64;
        let sy = th as f64 / fh as f64;
        let x_min = (self.x_min as f64 * sx).floor() as usize;
        let y_min = (self.y_min as f64 * sy).floor() as usize;
        let x_max = ((self.x_max as f64 * sx).ceil() as usize).clamp(x_min + 1, tw);
        let y_max = ((self.y_max as f64 * sy).ceil() as usize).clamp(y_min + 1, th);
        BoundingBox { label: self.label.clone(), x_min, y_min, x_max, y_max }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub image: String,
    pub boxes: Vec<BoundingBox>,
}

impl Annotation {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Train/validation split written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub classes: Vec<String>,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

pub const SPLIT_FILE: &str = "split.json";

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

/// An image resized to model resolution with boxes mapped accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub name: String,
    pub image: Image,
    pub boxes: Vec<BoundingBox>,
}

fn load_annotated(annotation_path: &Path, size: (usize, usize)) -> Result<AnnotatedImage> {
    let ann = Annotation::load(annotation_path)?;
    let base = annotation_path.parent().unwrap_or(Path::new("."));
    let image_path = base.join(&ann.image);
    let original = load_image_file(&image_path)?;
    let from = (original.height, original.width);
    for b in &ann.boxes {
        b.check_within(original.width, original.height)
            .map_err(|e| Error::format(annotation_path, e))?;
    }
    let image = if from == size { original } else { original.resize_bilinear(size.0, size.1) };
    let boxes = ann.boxes.iter().map(|b| if from == size { b.clone() } else { b.rescaled(from, size) }).collect();
    let name = annotation_path.file_stem().map_or_else(|| ann.image.clone(), |s| s.to_string_lossy().into_owned());
    Ok(AnnotatedImage { name, image, boxes })
}

/// Resolves a dataset path to annotation files:
/// - a split manifest (`split.json`, or a directory containing one): its `val` list;
/// - a single annotation `.json` file;
/// - a directory: every `.json` in `annotations/` (or the directory itself), sorted.
pub fn annotation_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset not found")));
    }
    let manifest = if path.is_dir() { path.join(SPLIT_FILE) } else { path.to_path_buf() };
    if manifest.is_file() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(&manifest, e))?;
        if value.get("val").is_some() {
            let split: SplitManifest = serde_json::from_value(value).map_err(|e| Error::format(&manifest, e))?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            return Ok(split.val.iter().map(|p| base.join(p)).collect());
        }
        if path.is_file() {
            return Ok(vec![path.to_path_buf()]);
        }
    }
    let dir = if path.join("annotations").is_dir() { path.join("annotations") } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != SPLIT_FILE))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every annotated image under `path`, resized to `size = (H, W)`.
pub fn load_dataset(path: &Path, size: (usize, usize)) -> Result<Vec<AnnotatedImage>> {
    annotation_files(path)?.iter().map(|p| load_annotated(p, size)).collect()
}

/// Converts a Pascal VOC XML annotation into the JSON layout. VOC boxes are
/// 1-based and inclusive; they become 0-based with exclusive maxima.
pub fn import_voc(xml: &str, image_prefix: &str) -> Result<Annotation> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::input(format!("VOC XML: {e}")))?;
    let root = doc.root_element();
    let child_text = |node: roxmltree::Node, tag: &str| -> Option<String> {
        node.children().find(|c| c.has_tag_name(tag)).and_then(|c| c.text()).map(|t| t.trim().to_string())
    };
    let filename = child_text(root, "filename").ok_or_else(|| Error::input("VOC XML: missing <filename>"))?;
    let coord = |node: roxmltree::Node, tag: &str| -> Result<usize> {
        let text = child_text(node, tag).ok_or_else(|| Error::input(format!("VOC XML: missing <{tag}>")))?;
        let v: f64 = text.parse().map_err(|_| Error::input(format!("VOC XML: bad <{tag}> `{text}`")))?;
        Ok(v.round().max(0.0) as usize)
    };
    let mut boxes = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let label = child_text(obj, "name").ok_or_else(|| Error::input("VOC XML: object without <name>"))?;
        let bb = obj
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or_else(|| Error::input("VOC XML: object without <bndbox>"))?;
        let x_min = coord(bb, "xmin")?.saturating_sub(1);
        let y_min = coord(bb, "ymin")?.saturating_sub(1);
        boxes.push(BoundingBox::new(label, x_min, y_min, coord(bb, "xmax")?, coord(bb, "ymax")?)?);
    }
    let image = if image_prefix.is_empty() { filename } else { format!("{image_prefix}/{filename}") };
    Ok(Annotation { image, boxes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation_and_containment() {
        assert!(BoundingBox::new("a", 3, 0, 3, 4).is_err());
        let b = BoundingBox::new("a", 0, 0, 10, 10).unwrap();
        assert!(b.contains(0, 0) && b.contains(9, 9));
        assert!(!b.contains(10, 5) && !b.contains(5, 10));
        assert!(b.check_within(10, 10).is_ok());
        assert!(b.check_within(9, 10).is_err());
    }

    #[test]
    fn rescale_expands_to_cover() {
        let b = BoundingBox::new("a", 1, 2, 3, 5).unwrap();
        let r = b.rescaled((10, 10), (32, 32));
        assert_eq!((r.x_min, r.y_min, r.x_max, r.y_max), (3, 6, 10, 16));
    }

    #[test]
    fn annotation_json_layout() {
        let a = Annotation { image: "images/x.png".into(), boxes: vec![BoundingBox::new("square", 1, 2, 3, 4).unwrap()] };
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"image": "images/x.png", "boxes": [{"label": "square", "x_min": 1, "y_min": 2, "x_max": 3, "y_max": 4}]})
        );
    }

    #[test]
    fn voc_import() {
        let xml = r#"<annotation>
  <folder>VOC2007</folder>
  <filename>000001.jpg</filename>
  <object><name>dog</name><bndbox><xmin>48</xmin><ymin>240</ymin><xmax>195</xmax><ymax>371</ymax></bndbox></object>
  <object><name>person</name><difficult>0</difficult><bndbox><xmin>8</xmin><ymin>12</ymin><xmax>352</xmax><ymax>498</ymax></bndbox></object>
</annotation>"#;
        let a = import_voc(xml, "JPEGImages").unwrap();
        assert_eq!(a.image, "JPEGImages/000001.jpg");
        assert_eq!(a.boxes[0], BoundingBox::new("dog", 47, 239, 195, 371).unwrap());
        assert_eq!(a.boxes[1].label, "person");
        assert!(import_voc("<annotation/>", "").is_err());
    }
}
