//! FD-CAM for a trained tiny CNN, with the intermediate weight vectors.
//!
//! ```bash
//! cargo run --release -p fdcam --example fd_cam
//! ```

use fdcam::cam::fd_cam_explained;
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::train::{train_tiny, TrainConfig};
use fdcam::{CombineConfig, ScoreModel};

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 100, ..Default::default() })?;
    let (model, report) = train_tiny(&ds, &TrainConfig::default())?;
    println!("val accuracy {:.3}", report.val_accuracy);

    let sample = ds.val_samples().next().expect("validation split is empty");
    let image = sample.image();
    let class = model.forward_scores(&image)?.argmax();
    let ex = fd_cam_explained(&model, &image, class, &CombineConfig::default())?;
    let w = &ex.weights;

    println!("{}: class {} base score {:.4}", sample.name, model.class_names()[class], w.switch.base_score);
    println!("{:>3} {:>9} {:>9} {:>9} {:>9}", "k", "alpha", "s_off", "s", "omega");
    for k in 0..w.omega.len() {
        println!(
            "{k:>3} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            w.alpha.values[k], w.switch.off.values[k], w.switch.combined.values[k], w.omega.values[k]
        );
    }
    let (y, x) = ex.saliency.map.argmax();
    println!("peak at ({x}, {y}); bbox {:?}", sample.bbox);
    Ok(())
}
