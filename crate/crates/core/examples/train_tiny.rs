//! Generates the shapes dataset on disk, trains the tiny CNN and saves a
//! checkpoint that `fdcam --model <path>` accepts.
//!
//! ```bash
//! cargo run --release -p fdcam --example train_tiny -- /tmp/shapes
//! ```

use std::path::PathBuf;

use fdcam::cli::{make_shapes, train_tiny};
use fdcam::shapes::ShapesDatasetSpec;
use fdcam::train::TrainConfig;

fn main() -> fdcam::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fdcam-shapes"), PathBuf::from);
    let spec = ShapesDatasetSpec { samples_per_class: 200, ..Default::default() };
    make_shapes(&spec, &out.join("dataset"))?;
    let trained = train_tiny(&spec, &TrainConfig::default(), &out.join("model"))?;
    for (epoch, loss) in trained.report.epoch_losses.iter().enumerate() {
        println!("epoch {:>2} loss {loss:.4}", epoch + 1);
    }
    println!("train {:.4} val {:.4}", trained.report.train_accuracy, trained.report.val_accuracy);
    println!("dataset:    {}", out.join("dataset").display());
    println!("checkpoint: {}", trained.checkpoint.display());
    Ok(())
}
