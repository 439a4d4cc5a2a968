//! Grad-CAM on one generated shape using an untrained tiny CNN.
//!
//! ```bash
//! cargo run -p fdcam --example grad_cam
//! ```

use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::{grad_cam, make_tiny_test_cnn, ScoreModel};

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 1, ..Default::default() })?;
    let sample = &ds.samples[0];
    let model = make_tiny_test_cnn(0);
    let image = sample.image();
    let scores = model.forward_scores(&image)?;
    let class = scores.argmax();
    let sal = grad_cam(&model, &image, class)?;

    println!("{} predicted as {} (p = {:.3})", sample.name, model.class_names()[class], scores.probability(class));
    let (y, x) = sal.map.argmax();
    println!("peak at ({x}, {y}); bbox {:?}", sample.bbox);
    Ok(())
}
