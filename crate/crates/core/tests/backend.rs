use fdcam::model::{ChannelMask, LayerModel, ScoreMode, ScoreModel};
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::{make_tiny_test_cnn, Image};

fn images() -> Vec<Image> {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 2, seed: 12, ..Default::default() }).unwrap();
    ds.samples.iter().map(|s| s.image()).collect()
}

#[test]
fn masked_forward_matches_manual_replay() {
    let model = make_tiny_test_cnn(1);
    for image in images() {
        let acts = model.capture_activations(&image).unwrap();
        for channels in [vec![0], vec![3, 7, 15], vec![]] {
            let mask = ChannelMask::switch_off(16, &channels);
            let mut zeroed = acts.clone();
            for &k in &channels {
                zeroed.data[k * 64..(k + 1) * 64].fill(0.0);
            }
            let want = model.scores_from_activations(&zeroed).unwrap();
            assert_eq!(model.masked_forward(&image, &mask).unwrap(), want);
        }
    }
}

#[test]
fn batch_equals_sequential() {
    let model = make_tiny_test_cnn(2);
    let image = &images()[3];
    let masks: Vec<_> = (0..16).map(|k| ChannelMask::switch_on_only(16, &[k, (k + 5) % 16])).collect();
    let batch = model.batch_masked_forward(image, &masks).unwrap();
    for (mask, got) in masks.iter().zip(&batch) {
        assert_eq!(&model.masked_forward(image, mask).unwrap(), got);
    }
}

#[test]
fn identity_mask_is_exact() {
    let model = make_tiny_test_cnn(3);
    for image in images() {
        assert_eq!(model.masked_forward(&image, &ChannelMask::all_on(16)).unwrap(), model.forward_scores(&image).unwrap());
    }
}

#[test]
fn all_off_mask_gives_uniform_probabilities() {
    // zero biases: a zeroed target layer leaves nothing downstream
    let model = make_tiny_test_cnn(4);
    let scores = model.masked_forward(&images()[0], &ChannelMask::all_off(16)).unwrap();
    for p in scores.probabilities() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn activation_gradients_match_finite_differences_in_both_modes() {
    for mode in [ScoreMode::Probability, ScoreMode::Logit] {
        let model = make_tiny_test_cnn(5).with_score_mode(mode);
        let image = &images()[1];
        for class in 0..3 {
            let (acts, grads) = model.activations_and_gradients(image, class).unwrap();
            for idx in (0..acts.data.len()).step_by(97) {
                let h = 1e-6;
                let mut a = acts.clone();
                a.data[idx] += h;
                let up = model.scores_from_activations(&a).unwrap().get(class);
                a.data[idx] -= 2.0 * h;
                let down = model.scores_from_activations(&a).unwrap().get(class);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grads.data[idx]).abs() <= 1e-6 * fd.abs().max(1e-3), "{mode} class {class} idx {idx}");
            }
        }
    }
}

#[test]
fn target_layer_can_be_moved_to_conv1() {
    let model = make_tiny_test_cnn(6).with_target_layer("conv1").unwrap();
    let acts = model.capture_activations(&images()[0]).unwrap();
    assert_eq!((acts.channels, acts.height, acts.width), (8, 16, 16));
    assert!(make_tiny_test_cnn(6).with_target_layer("head").is_err());
}
