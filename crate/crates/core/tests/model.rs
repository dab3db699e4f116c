use pixmt::autodiff::{Tape, Tensor};
use pixmt::model::{Branch, ConvRow, Model, ModelConfig, ModelKind};
use pixmt::raster::{BinaryImage, FrameSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(kind: ModelKind) -> ModelConfig {
    let row = |in_ch, out_ch, stride| ConvRow { in_ch, out_ch, kernel: 3, stride };
    ModelConfig {
        frame: FrameSpec::new(32, 8, 3, 4, 1).unwrap(),
        rows: vec![row(1, 2, 1), row(2, 3, 2), row(3, 3, 1), row(3, 4, 2)],
        d_model: 4,
        layers: 1,
        heads: 2,
        ff_dim: 8,
        ..ModelConfig::desk(kind)
    }
}

fn random_image(rng: &mut ChaCha8Rng, f: &FrameSpec) -> BinaryImage {
    let px = (0..f.pixel_count()).map(|_| u8::from(rng.random_bool(0.8))).collect();
    BinaryImage::from_pixels(f.height, f.width, px).unwrap()
}

/// `(C, W, H)` as the dimension table reports it, from an NCHW shape.
fn cwh(shape: &[usize]) -> (usize, usize, usize) {
    (shape[1], shape[3], shape[2])
}

#[test]
fn desk_encoder_and_decoder_shapes() {
    let model = Model::new(ModelConfig::desk(ModelKind::Baseline), 0).unwrap();
    let f = model.config().frame;
    let mut tape = Tape::no_grad();
    let x = tape.constant(model.image_tensor(&[&BinaryImage::blank(f.height, f.width)]).unwrap());
    let blocks = model.conv_encode(&mut tape, x, Branch::Source).unwrap();
    let shapes: Vec<_> = blocks.iter().map(|&b| cwh(tape.shape(b))).collect();
    assert_eq!(shapes, [(32, 128, 8), (64, 64, 4), (128, 32, 2), (128, 16, 1)]);
    let out = model.conv_decode(&mut tape, *blocks.last().unwrap()).unwrap();
    assert_eq!(cwh(tape.shape(out)), (1, 256, 16));
}

/// Same-padded convolution written as plain loops over one `[C, H, W]` image.
fn naive_conv(x: &[f32], c: usize, h: usize, w: usize, k: &Tensor, b: &Tensor, stride: usize) -> (Vec<f32>, usize, usize) {
    let (o, ks) = (k.shape()[0], k.shape()[2]);
    let pad = (ks - 1) / 2;
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let mut out = vec![0.0f32; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.data()[oc] as f64;
                for ic in 0..c {
                    for ky in 0..ks {
                        for kx in 0..ks {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let kv = k.data()[((oc * c + ic) * ks + ky) * ks + kx] as f64;
                            acc += kv * x[(ic * h + iy as usize) * w + ix as usize] as f64;
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc as f32;
            }
        }
    }
    (out, oh, ow)
}

#[test]
fn zeroed_last_conv_leaves_the_residual_projection() {
    let mut model = Model::new(toy(ModelKind::Baseline), 5).unwrap();
    for name in ["src_enc.b1.conv2.w", "src_enc.b1.conv2.b"] {
        model.params_mut().by_name_mut(name).unwrap().data_mut().fill(0.0);
    }
    let f = model.config().frame;
    let ink = BinaryImage::from_pixels(f.height, f.width, vec![0; f.pixel_count()]).unwrap();
    let mut tape = Tape::no_grad();
    let x = tape.constant(model.image_tensor(&[&ink]).unwrap());
    let out = *model.conv_encode(&mut tape, x, Branch::Source).unwrap().last().unwrap();
    let got = tape.value(out).data().to_vec();

    let p = |n: &str| model.params().by_name(n).unwrap().clone();
    let input = vec![1.0f32; f.pixel_count()];
    let (h1, _, _) = naive_conv(&input, 1, 8, 32, &p("src_enc.b0.conv1.w"), &p("src_enc.b0.conv1.b"), 1);
    let h1: Vec<f32> = h1.into_iter().map(|v| v.max(0.0)).collect();
    let (h2, oh, ow) = naive_conv(&h1, 2, 8, 32, &p("src_enc.b0.conv2.w"), &p("src_enc.b0.conv2.b"), 2);
    let (r, _, _) = naive_conv(&input, 1, 8, 32, &p("src_enc.b0.proj.w"), &p("src_enc.b0.proj.b"), 2);
    let block0: Vec<f32> = h2.iter().zip(&r).map(|(a, b)| a + b).collect();
    let (expected, _, _) = naive_conv(&block0, 3, oh, ow, &p("src_enc.b1.proj.w"), &p("src_enc.b1.proj.b"), 2);

    assert!(expected.iter().any(|&v| v.abs() > 1e-3), "projection is trivially zero");
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-4, "{g} vs {e}");
    }
}

#[test]
fn pooled_latent_is_the_spatial_mean() {
    let mut tape = Tape::no_grad();
    let c = tape.constant(Tensor::full([1, 3, 2, 4], 2.5));
    let z = Model::pool_to_latent(&mut tape, c).unwrap();
    assert_eq!(tape.value(z).data(), &[2.5, 2.5, 2.5]);
    let two = tape.constant(Tensor::new([1, 1, 1, 2], vec![0.0, 2.0]).unwrap());
    let z = Model::pool_to_latent(&mut tape, two).unwrap();
    assert_eq!(tape.value(z).data(), &[1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Tensor::from_fn([2, 4, 3, 5], |_| rng.random_range(-3.0..3.0));
    let v = tape.constant(t.clone());
    let z = Model::pool_to_latent(&mut tape, v).unwrap();
    for (i, plane) in t.data().chunks(15).enumerate() {
        let mut mean = 0.0f64;
        for &x in plane {
            mean += x as f64 / 15.0;
        }
        assert!((tape.value(z).data()[i] as f64 - mean).abs() < 1e-6);
    }
}

/// The decoder is piecewise linear, so a step may cross a ReLU kink while
/// a small step drowns in 32-bit rounding. Each coordinate is tried at
/// several step sizes and must agree with the analytic value at one of them.
#[test]
fn decoder_gradient_reaches_the_seed() {
    let cfg = ModelConfig { frame: FrameSpec::new(8, 4, 2, 2, 0).unwrap(), ..toy(ModelKind::Baseline) };
    let mut model = Model::new(cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in model.params_mut().by_name_mut("head.w").unwrap().data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let (c, h, w) = model.config().latent_shape();
    let seed = Tensor::from_fn([1, c, h, w], |_| rng.random_range(-1.0..1.0));
    let weights: Vec<f32> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();

    let forward = |x: &Tensor| -> f64 {
        let mut tape = Tape::no_grad();
        let v = tape.constant(x.clone());
        let out = model.conv_decode(&mut tape, v).unwrap();
        tape.value(out).data().iter().zip(&weights).map(|(&o, &w)| o as f64 * w as f64).sum()
    };
    let mut tape = Tape::new();
    let v = tape.leaf(seed.clone());
    let out = model.conv_decode(&mut tape, v).unwrap();
    let loss = tape.weighted_sum(out, weights.clone()).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.get(v).unwrap().to_vec();
    assert!(analytic.iter().any(|&g| g.abs() > 1e-3));

    let mut worst = 0.0f64;
    for i in 0..seed.numel() {
        let mut best = f64::INFINITY;
        for step in [1e-2f32, 3e-3, 1e-3, 3e-4, 1e-4] {
            let mut plus = seed.clone();
            plus.data_mut()[i] += step;
            let mut minus = seed.clone();
            minus.data_mut()[i] -= step;
            let span = (plus.data()[i] - minus.data()[i]) as f64;
            let numeric = (forward(&plus) - forward(&minus)) / span;
            let a = analytic[i] as f64;
            best = best.min((a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0));
        }
        worst = worst.max(best);
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn untrained_models_predict_one_half() {
    for kind in [ModelKind::Baseline, ModelKind::Full] {
        let model = Model::new(ModelConfig::desk(kind), 4).unwrap();
        let f = model.config().frame;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (src, partial) = (random_image(&mut rng, &f), random_image(&mut rng, &f));
        let probs = model.predict(&src, &partial).unwrap();
        assert_eq!((probs.height(), probs.width()), (16, 256));
        assert!(probs.values().iter().all(|&p| p == 0.5));
        let mut tape = Tape::new();
        let logits = model.logits(&mut tape, &[&src], &[&partial]).unwrap();
        let loss = pixmt::trainer::pixel_loss(&mut tape, logits, &[&partial]).unwrap();
        assert!((tape.value(loss).item() as f64 - std::f64::consts::LN_2).abs() < 1e-6);
    }
}

#[test]
fn probabilities_stay_in_range_for_wild_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for kind in [ModelKind::Baseline, ModelKind::Full] {
        let mut model = Model::new(toy(kind), 6).unwrap();
        for t in model.params_mut().tensors_mut() {
            for v in t.data_mut() {
                *v = rng.random_range(-20.0..20.0);
            }
        }
        let f = model.config().frame;
        let probs = model.predict(&random_image(&mut rng, &f), &random_image(&mut rng, &f)).unwrap();
        assert!(probs.values().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn sequence_elements_per_column() {
    let mut model = Model::new(toy(ModelKind::Full), 7).unwrap();
    let (c, h, _) = model.config().latent_shape();
    assert_eq!(c * h, model.config().d_model * 2);

    // identical columns at different positions differ after the positional embedding
    let mut tape = Tape::no_grad();
    let fm = tape.constant(Tensor::full([1, 4, 2, 8], 0.3));
    let seq = model.featmap_to_seq(&mut tape, fm, Branch::Target).unwrap();
    assert_eq!(tape.shape(seq), &[1, 8, 4]);
    let s = tape.value(seq).data();
    assert_ne!(&s[0..4], &s[4..8]);

    // zero embeddings and an identity-like projection expose the flattened columns
    let d = 4;
    let mut proj = vec![0.0f32; d * c * h];
    for i in 0..d {
        proj[i * c * h + i] = 1.0;
    }
    let params = model.params_mut();
    params.by_name_mut("tgt_seq.w").unwrap().data_mut().copy_from_slice(&proj);
    for name in ["pos", "seg.tgt", "tgt_seq.b"] {
        params.by_name_mut(name).unwrap().data_mut().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let map = Tensor::from_fn([1, 4, 2, 8], |_| rng.random_range(-1.0..1.0));
    let mut tape = Tape::no_grad();
    let fm = tape.constant(map.clone());
    let seq = model.featmap_to_seq(&mut tape, fm, Branch::Target).unwrap();
    for col in 0..2 {
        for i in 0..d {
            // feature i of a column is channel i / 2, row i % 2
            let (ch, row) = (i / 2, i % 2);
            let want = map.data()[(ch * 2 + row) * 8 + col];
            assert_eq!(tape.value(seq).data()[col * d + i], want);
        }
    }
}

#[test]
fn full_model_sequence_and_output_shapes() {
    let model = Model::new(toy(ModelKind::Full), 9).unwrap();
    let f = model.config().frame;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let probs = model.full_forward(&random_image(&mut rng, &f), &random_image(&mut rng, &f)).unwrap();
    assert_eq!((probs.height(), probs.width()), (f.height, f.width));
    assert!(model.baseline_forward(&random_image(&mut rng, &f)).is_err());
    let (_, _, w) = ModelConfig::paper(ModelKind::Full).latent_shape();
    assert_eq!(2 * w, 128);
}

#[test]
fn copy_path_ignores_the_source_when_attention_is_off() {
    let mut model = Model::new(toy(ModelKind::Full), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for v in model.params_mut().by_name_mut("head.w").unwrap().data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let names: Vec<String> = model
        .params()
        .iter()
        .map(|(_, n, _)| n.to_string())
        .filter(|n| n.contains(".attn.") || n.contains(".ff1.") || n.contains(".ff2."))
        .collect();
    for n in &names {
        model.params_mut().by_name_mut(n).unwrap().data_mut().fill(0.0);
    }
    let f = model.config().frame;
    let partial = random_image(&mut rng, &f);
    let a = model.full_forward(&random_image(&mut rng, &f), &partial).unwrap();
    let b = model.full_forward(&random_image(&mut rng, &f), &partial).unwrap();
    assert_eq!(a, b);
    let c = model.full_forward(&random_image(&mut rng, &f), &random_image(&mut rng, &f)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn source_parameters_do_not_touch_the_target_encoder() {
    let mut model = Model::new(toy(ModelKind::Full), 11).unwrap();
    let f = model.config().frame;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = random_image(&mut rng, &f);
    let encode = |m: &Model| {
        let mut tape = Tape::no_grad();
        let x = tape.constant(m.image_tensor(&[&img]).unwrap());
        let out = *m.conv_encode(&mut tape, x, Branch::Target).unwrap().last().unwrap();
        tape.value(out).clone()
    };
    let before = encode(&model);
    let src_names: Vec<String> =
        model.params().iter().map(|(_, n, _)| n.to_string()).filter(|n| n.starts_with("src_")).collect();
    assert!(!src_names.is_empty());
    for n in &src_names {
        for v in model.params_mut().by_name_mut(n).unwrap().data_mut() {
            *v += 1.0;
        }
    }
    assert_eq!(encode(&model), before);
}

#[test]
fn from_params_checks_layout() {
    let model = Model::new(toy(ModelKind::Full), 12).unwrap();
    let (cfg, params) = model.clone().into_parts();
    assert_eq!(Model::from_params(cfg.clone(), params).unwrap(), model);
    let other = Model::new(toy(ModelKind::Baseline), 12).unwrap();
    assert!(Model::from_params(cfg, other.params().clone()).is_err());
}
