use fdcam::cam::{compose_cam, fd_cam_explained};
use fdcam::grouping::{all_groups, similarity_matrix};
use fdcam::model::{ChannelMask, CountingModel, LayerModel, ScoreModel};
use fdcam::shapes::{generate_shapes, ShapesDatasetSpec};
use fdcam::weighting::{fd_weights, grad_weights, min_max_normalize};
use fdcam::{make_tiny_test_cnn, CombineConfig, CombineScheme, Image};

fn image(i: usize) -> Image {
    let ds = generate_shapes(&ShapesDatasetSpec { samples_per_class: 2, seed: 30, ..Default::default() }).unwrap();
    ds.samples[i].image()
}

#[test]
fn switch_scores_match_sequential_masks() {
    let model = make_tiny_test_cnn(8);
    let img = image(2);
    let cfg = CombineConfig { theta: 20.0, ..Default::default() };
    let w = fd_weights(&model, &img, 1, &cfg).unwrap();
    let base = model.forward_scores(&img).unwrap().get(1);
    for (k, g) in w.groups.iter().enumerate() {
        let off = base - model.masked_forward(&img, &ChannelMask::switch_off(16, &g.members)).unwrap().get(1);
        let on = model.masked_forward(&img, &ChannelMask::switch_on_only(16, &g.members)).unwrap().get(1);
        assert_eq!(w.switch.off.values[k], off);
        assert_eq!(w.switch.on.as_ref().unwrap().values[k], on);
    }
}

#[test]
fn explanation_matches_composition_of_parts() {
    let model = make_tiny_test_cnn(9);
    let img = image(4);
    let ex = fd_cam_explained(&model, &img, 2, &CombineConfig::default()).unwrap();
    let w = &ex.weights;
    let acts = model.capture_activations(&img).unwrap();
    let (_, grads) = model.activations_and_gradients(&img, 2).unwrap();
    assert_eq!(w.alpha, grad_weights(&grads));
    let a = min_max_normalize(&w.alpha).unwrap();
    let s = min_max_normalize(&w.switch.combined).unwrap();
    let omega: Vec<f64> = a.values.iter().zip(&s.values).map(|(a, s)| a * s.exp() - 0.5).collect();
    assert_eq!(w.omega.values, omega);
    assert_eq!(ex.saliency.map, compose_cam(&acts, &omega, (32, 32)).unwrap());
}

#[test]
fn full_group_makes_scores_constant() {
    // with theta = 100 every group is every channel, so s is flat and
    // normalizes to zero: omega = alpha_hat - b
    let model = make_tiny_test_cnn(10);
    let img = image(0);
    let w = fd_weights(&model, &img, 0, &CombineConfig { theta: 100.0, ..Default::default() }).unwrap();
    assert!(w.groups.iter().all(|g| g.len() == 16));
    assert!(w.s_hat.values.iter().all(|&v| v == 0.0));
    for (o, a) in w.omega.values.iter().zip(&w.alpha_hat.values) {
        assert_eq!(*o, a - 0.5);
    }
}

#[test]
fn schemes_differ_only_in_combination() {
    let model = make_tiny_test_cnn(11);
    let img = image(1);
    let base = fd_weights(&model, &img, 0, &CombineConfig::default()).unwrap();
    for scheme in [CombineScheme::ExpNoBias, CombineScheme::Product] {
        let w = fd_weights(&model, &img, 0, &CombineConfig { scheme, ..Default::default() }).unwrap();
        assert_eq!(w.alpha_hat, base.alpha_hat);
        assert_eq!(w.s_hat, base.s_hat);
        for k in 0..16 {
            let (a, s) = (w.alpha_hat.values[k], w.s_hat.values[k]);
            let want = if scheme == CombineScheme::Product { a * s } else { a * s.exp() };
            assert_eq!(w.omega.values[k], want);
        }
    }
}

#[test]
fn pass_budget_without_switch_on() {
    let model = CountingModel::new(make_tiny_test_cnn(12));
    fd_weights(&model, &image(3), 0, &CombineConfig { use_switch_on: false, ..Default::default() }).unwrap();
    let c = model.counts();
    assert_eq!((c.forward, c.masked, c.gradient, c.capture), (1, 16, 1, 0));
}

#[test]
fn groups_come_from_the_explained_image() {
    let model = make_tiny_test_cnn(13);
    let img = image(5);
    let w = fd_weights(&model, &img, 2, &CombineConfig { theta: 25.0, ..Default::default() }).unwrap();
    let acts = model.capture_activations(&img).unwrap();
    assert_eq!(w.groups, all_groups(&similarity_matrix(&acts), 25.0).unwrap());
}
