use dsalgan::data::{
    corrupt_gaussian, load_mask, make_shapes_corpus, make_shapes_dataset, save_mask, Dataset, ImageTensor, NoiseModel,
    SaliencyMap,
};
use dsalgan::eval::{auc, evaluate_model, f_measures, mae, Prediction, SaliencyPredictor};
use dsalgan::losses::{
    adversarial_gen_loss, cycle_loss, denoise_content_loss, discriminator_loss, saliency_bce_loss, total_denoise_loss,
    total_sod_loss, LossWeights,
};
use dsalgan::nets::{build_denoiser_spec, build_saliency_generator_spec, forward, init_params, init_std, NetworkParams};
use dsalgan::train::{NetConfig, NetSpecs};
use dsalgan::{Result, Tensor};
use proptest::prelude::*;

fn image(c: usize, h: usize, w: usize, values: &[f32]) -> ImageTensor {
    ImageTensor::new(Tensor::from_vec(c, h, w, values.to_vec()).unwrap()).unwrap()
}

fn map(values: Vec<f32>) -> SaliencyMap {
    SaliencyMap::new(Tensor::from_vec(1, 8, 8, values).unwrap()).unwrap()
}

/// 8x8 prediction and binary ground truth with both classes present.
fn pred_and_gt() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
    (prop::collection::vec(0.0f32..=1.0, 64), prop::collection::vec(any::<bool>(), 64), any::<bool>()).prop_map(
        |(mut p, g, coarse)| {
            if coarse {
                p.iter_mut().for_each(|v| *v = (*v * 4.0).round() / 4.0);
            }
            let mut g: Vec<f32> = g.into_iter().map(|b| b as u8 as f32).collect();
            g[0] = 1.0;
            g[1] = 0.0;
            (p, g)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corruption_stays_in_unit_range(values in prop::collection::vec(0.0f32..=1.0, 48), sigma in 0.0f64..300.0, seed: u64) {
        let img = image(3, 4, 4, &values);
        let out = corrupt_gaussian(&img, &NoiseModel::new(sigma, seed).unwrap()).unwrap();
        prop_assert!(out.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
        let again = corrupt_gaussian(&img, &NoiseModel::new(sigma, seed).unwrap()).unwrap();
        prop_assert_eq!(out, again);
    }

    #[test]
    fn zero_sigma_is_identity(values in prop::collection::vec(0.0f32..=1.0, 48), seed: u64) {
        let img = image(3, 4, 4, &values);
        prop_assert_eq!(corrupt_gaussian(&img, &NoiseModel::new(0.0, seed).unwrap()).unwrap(), img);
    }

    #[test]
    fn deviation_grows_with_sigma(values in prop::collection::vec(0.1f32..=0.9, 192), seed: u64) {
        let img = image(3, 8, 8, &values);
        let dev = |sigma: f64| {
            let out = corrupt_gaussian(&img, &NoiseModel::new(sigma, seed).unwrap()).unwrap();
            out.tensor().data().iter().zip(img.tensor().data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
        };
        let devs: Vec<f64> = [10.0, 30.0, 50.0, 80.0].into_iter().map(dev).collect();
        prop_assert!(devs.windows(2).all(|w| w[1] > w[0]), "{:?}", devs);
    }

    #[test]
    fn mask_png_round_trip(bits in prop::collection::vec(any::<bool>(), 64)) {
        let mask = map(bits.into_iter().map(|b| b as u8 as f32).collect());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        save_mask(&path, &mask).unwrap();
        prop_assert_eq!(load_mask(&path, Some((8, 8))).unwrap(), mask);
    }

    #[test]
    fn max_f_dominates_ave_f((p, g) in pred_and_gt()) {
        let f = f_measures(&map(p), &map(g)).unwrap();
        prop_assert!(f.max_f >= f.ave_f);
        prop_assert!((0.0..=1.0).contains(&f.max_f) && (0.0..=1.0).contains(&f.ave_f));
    }

    #[test]
    fn auc_matches_all_pairs((p, g) in pred_and_gt()) {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, ga) in p.iter().zip(&g) {
            for (b, gb) in p.iter().zip(&g) {
                if *ga == 1.0 && *gb == 0.0 {
                    pairs += 1.0;
                    wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                }
            }
        }
        let got = auc(&map(p), &map(g)).unwrap();
        prop_assert!((got - wins / pairs).abs() <= 1e-9);
    }

    #[test]
    fn mae_complement_identity((p, g) in pred_and_gt()) {
        let inverse: Vec<f32> = p.iter().map(|v| 1.0 - v).collect();
        let gt = map(g);
        let sum = mae(&map(p), &gt).unwrap() + mae(&map(inverse), &gt).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "{}", sum);
    }

    #[test]
    fn losses_are_nonnegative_and_totals_add_up(
        a in prop::collection::vec(0.0f32..=1.0, 16),
        b in prop::collection::vec(0.0f32..=1.0, 16),
        s in prop::collection::vec(0.0f32..=1.0, 3),
        w1 in 0.0f64..1.0, w2 in 0.0f64..1.0, w3 in 0.0f64..1.0,
    ) {
        let t = |v: &[f32]| vec![Tensor::from_vec(1, 4, 4, v.to_vec()).unwrap()];
        let mask: Vec<f32> = b.iter().map(|v| (*v > 0.5) as u8 as f32).collect();
        let w = LossWeights { w1, w2, w3, eps: 1e-7 };
        let content = denoise_content_loss(&t(&a), &t(&b), false).unwrap().value as f64;
        let cyc = cycle_loss(&t(&a), &t(&b), true).unwrap().value as f64;
        let bce = saliency_bce_loss(&t(&a), &t(&mask), w.eps).unwrap().value as f64;
        let adv = adversarial_gen_loss(&s, w.eps).unwrap().value as f64;
        let (d, _, _) = discriminator_loss(&s, &s, w.eps).unwrap();
        for v in [content, cyc, bce, adv, d as f64] {
            prop_assert!(v.is_finite() && v >= 0.0);
        }
        prop_assert_eq!(total_denoise_loss(content, adv, &w), content + w1 * adv);
        prop_assert_eq!(total_sod_loss(bce, adv, cyc, &w), bce + w2 * adv + w3 * cyc);
    }

    #[test]
    fn denoiser_preserves_any_size(h in 1usize..12, w in 1usize..12, seed: u64) {
        let spec = build_denoiser_spec(2, 2).unwrap();
        let p: NetworkParams<f32> = init_params(&spec, seed).unwrap();
        let x = Tensor::filled(3, h, w, 0.5f32);
        let y = forward(&spec, &p, &x).unwrap();
        prop_assert_eq!(y.shape(), (3, h, w));
        prop_assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn param_count_is_a_function_of_the_spec(scale in 0.01f64..0.2) {
        let a = build_saliency_generator_spec(scale).unwrap();
        let b = build_saliency_generator_spec(scale).unwrap();
        prop_assert_eq!(a.param_count().unwrap(), b.param_count().unwrap());
        let p: NetworkParams<f32> = init_params(&a, 1).unwrap();
        prop_assert_eq!(p.num_params(), a.param_count().unwrap());
    }
}

#[test]
fn network_outputs_stay_in_range() {
    let net = NetConfig { depth_pairs: 2, base_channels: 4, g3_base_channels: 4, g2_width_scale: 1.0 / 16.0, disc_width_scale: 0.125 };
    for size in [16, 32] {
        let specs = NetSpecs::build(&net, size).unwrap();
        for (k, spec) in specs.iter().into_iter().enumerate() {
            let p: NetworkParams<f32> = init_params(spec, k as u64).unwrap();
            for level in [0.0f32, 0.5, 1.0] {
                let x = Tensor::from_fn(spec.input_channels, size, size, |c, y, x| {
                    (level + 0.1 * ((c + y * 3 + x * 7) % 5) as f32).min(1.0)
                });
                let out = forward(spec, &p, &x).unwrap();
                match out.len() {
                    // discriminator scores are strictly inside (0, 1)
                    1 => assert!(out.data()[0] > 0.0 && out.data()[0] < 1.0, "{}", spec.name),
                    _ => {
                        assert_eq!((out.height(), out.width()), (size, size), "{}", spec.name);
                        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{}", spec.name);
                    }
                }
            }
        }
    }
}

#[test]
fn init_std_follows_fan_in_rule() {
    let spec = build_saliency_generator_spec(1.0).unwrap();
    let p: NetworkParams<f32> = init_params(&spec, 9).unwrap();
    // conv2_a: 3x3 kernel over 64 input channels
    let i = spec.layers.iter().position(|l| l.name == "conv2_a").unwrap();
    let w = &p.layers[i].weight;
    let mean = w.iter().map(|v| *v as f64).sum::<f64>() / w.len() as f64;
    let std = (w.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let target = init_std(spec.layers[i].activation, 3 * 3 * 64);
    assert!((std / target - 1.0).abs() < 0.2, "{std} vs {target}");
}

#[test]
fn bce_is_minimal_at_the_target() {
    for target in [0.0f64, 1.0] {
        let z = vec![Tensor::filled(1, 1, 1, target)];
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let losses: Vec<f64> =
            grid.iter().map(|&p| saliency_bce_loss(&[Tensor::filled(1, 1, 1, p)], &z, 1e-7).unwrap().value).collect();
        let best = losses.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(grid[best], target);
    }
}

#[test]
fn shapes_foreground_fraction_is_moderate() {
    let corpus = make_shapes_corpus(500, 64, &[10.0], 0).unwrap();
    let mean = corpus.iter().map(|s| s.mask.positives() as f64 / (64.0 * 64.0)).sum::<f64>() / 500.0;
    assert!((0.05..=0.5).contains(&mean), "{mean}");
}

/// Predicts the clean image's brightness as saliency.
struct Brightness;

impl SaliencyPredictor for Brightness {
    fn predict(&self, sample: &dsalgan::data::SampleTriplet) -> Result<Prediction> {
        let t = sample.noisy.tensor();
        let m = Tensor::from_fn(1, t.height(), t.width(), |_, y, x| (0..3).map(|c| t.get(c, y, x)).sum::<f32>() / 3.0);
        Ok(Prediction { denoised: sample.noisy.clone(), map: SaliencyMap::new(m)? })
    }
}

#[test]
fn metrics_ignore_image_order() {
    let d = make_shapes_dataset("shapes", 12, 32, 4).unwrap();
    let mut order: Vec<usize> = (0..12).collect();
    order.reverse();
    order.swap(2, 7);
    // noise seeds are per position, so compare at sigma 0
    let shuffled = Dataset {
        name: d.name.clone(),
        ids: order.iter().map(|&i| d.ids[i].clone()).collect(),
        items: order.iter().map(|&i| d.items[i].clone()).collect(),
    };
    let a = evaluate_model(&Brightness, &d, &[0.0], 1).unwrap();
    let b = evaluate_model(&Brightness, &shuffled, &[0.0], 1).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in [(x.auc, y.auc), (x.mae, y.mae), (x.max_f, y.max_f), (x.ave_f, y.ave_f)] {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }
}
