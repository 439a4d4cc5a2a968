//! Cosine-similarity channel groups at several group-size percentages.
//!
//! ```bash
//! cargo run -p fdcam --example channel_groups
//! ```

use fdcam::grouping::{all_groups, group_size, similarity_matrix};
use fdcam::model::LayerModel;
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::make_tiny_test_cnn;

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 1, ..Default::default() })?;
    let model = make_tiny_test_cnn(0);
    let acts = model.capture_activations(&ds.samples[1].image())?;
    let matrix = similarity_matrix(&acts);

    for theta in [5.0, 25.0, 50.0, 100.0] {
        let groups = all_groups(&matrix, theta)?;
        println!("theta {theta:>5}: size {}", group_size(acts.channels, theta));
        for g in groups.iter().take(4) {
            println!("  G_{:<2} = {:?}", g.anchor, g.members);
        }
    }
    Ok(())
}
