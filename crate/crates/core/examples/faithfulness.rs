//! Deletion and insertion AUC for FD-CAM, Grad-CAM and a random map.
//!
//! ```bash
//! cargo run --release -p fdcam --example faithfulness
//! ```

use fdcam::cam::random_saliency;
use fdcam::metrics::{evaluate_faithfulness, ClassChoice, PerturbationConfig};
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::train::{train_tiny, TrainConfig};
use fdcam::{CombineConfig, Method};

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 100, ..Default::default() })?;
    let (model, _) = train_tiny(&ds, &TrainConfig::default())?;
    let images: Vec<_> = ds.val_samples().map(|s| (s.name.clone(), s.image())).collect();
    let pc = PerturbationConfig::default();

    let methods = [Some(Method::FdCam(CombineConfig::default())), Some(Method::GradCam), None];
    for m in &methods {
        let report = evaluate_faithfulness(&model, &images, ClassChoice::TopPredicted, &pc, |img, c| match m {
            Some(m) => Ok(m.explain(&model, img, c)?.map),
            None => Ok(random_saliency(img, 0)),
        })?;
        let name = m.as_ref().map_or("random", |m| m.name());
        println!(
            "{name:<16} insertion {:.4} deletion {:.4} overall {:.4}",
            report.mean_insertion_auc, report.mean_deletion_auc, report.overall
        );
    }
    Ok(())
}
