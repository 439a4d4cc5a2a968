//! Compares the combination schemes and the reduced variants on one image.
//!
//! ```bash
//! cargo run --release -p fdcam --example ablation_variants
//! ```

use fdcam::metrics::{auc, deletion_curve, insertion_curve, DEFAULT_STEP};
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::train::{train_tiny, TrainConfig};
use fdcam::{CombineConfig, CombineScheme, Method, ScoreModel};

fn main() -> fdcam::Result<()> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 100, ..Default::default() })?;
    let (model, _) = train_tiny(&ds, &TrainConfig::default())?;

    let mut variants = vec![("grad-cam", Method::GradCam), ("ablation-reduced", Method::AblationReduced)];
    for scheme in [CombineScheme::ExpBias, CombineScheme::ExpNoBias, CombineScheme::Product, CombineScheme::ScoreOnly] {
        let name = match scheme {
            CombineScheme::ExpBias => "exp-bias",
            CombineScheme::ExpNoBias => "exp-no-bias",
            CombineScheme::Product => "product",
            CombineScheme::ScoreOnly => "score-only",
        };
        variants.push((name, Method::FdCam(CombineConfig { scheme, ..Default::default() })));
    }
    variants.push(("switch-off, no groups", Method::FdCam(CombineConfig::ungrouped_switch_off())));
    // at K = 16 the default theta gives singleton groups
    variants.push(("switch-off, theta 25", Method::FdCam(CombineConfig { theta: 25.0, ..CombineConfig::grouped_switch_off() })));

    for sample in ds.val_samples().take(3) {
        let image = sample.image();
        let class = model.forward_scores(&image)?.argmax();
        println!("{}", sample.name);
        for (name, method) in &variants {
            let sal = method.explain(&model, &image, class)?.map;
            let ins = auc(&insertion_curve(&model, &image, &sal, class, DEFAULT_STEP)?);
            let del = auc(&deletion_curve(&model, &image, &sal, class, DEFAULT_STEP)?);
            println!("  {name:<22} insertion {ins:.4} deletion {del:.4}");
        }
    }
    Ok(())
}
