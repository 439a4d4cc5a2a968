//! Pointing-game accuracy on the generated shapes with their tight boxes.
//!
//! ```bash
//! cargo run --release -p fdcam --example pointing_game
//! ```

use fdcam::cam::random_saliency;
use fdcam::metrics::pointing_accuracy;
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::train::{train_tiny, TrainConfig};
use fdcam::{CombineConfig, Method};

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 100, ..Default::default() })?;
    let (model, _) = train_tiny(&ds, &TrainConfig::default())?;
    let items: Vec<_> = ds.val_samples().map(|s| s.annotated()).collect();
    let classes = model.class_names().to_vec();

    for m in [Some(Method::FdCam(CombineConfig::default())), Some(Method::GradCam), None] {
        let report = pointing_accuracy(&items, &classes, |it, c| match &m {
            Some(m) => Ok(m.explain(&model, &it.image, c)?.map),
            None => Ok(random_saliency(&it.image, 0)),
        })?;
        let name = m.as_ref().map_or("random", |m| m.name());
        println!("{name:<10} {:.4} ({} / {})", report.accuracy, report.tally.hits, report.tally.hits + report.tally.misses);
    }
    Ok(())
}
