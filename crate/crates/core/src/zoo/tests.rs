//! Construction, audit, and forward-contract tests for the network zoo.

use super::bundle::{build_bundle, BuildOptions, ModelBundle};
use super::layers::MountedParams;
use super::preset::ArchPreset;
use crate::engine::{Mode, NoiseSpec, Tape, Tensor};
use crate::error::Error;
use crate::trainer::VariantId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk_preset() -> ArchPreset {
    ArchPreset::desk32(6, 2)
}

fn quiet_options() -> BuildOptions {
    BuildOptions { noise: NoiseSpec::off(), first_bn: true }
}

fn desk_bundle(variant: VariantId) -> ModelBundle<f32> {
    build_bundle(&desk_preset(), variant, quiet_options(), 7).unwrap()
}

fn rand_frames(n: usize, hw: usize, c: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * hw * hw * c).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new(vec![n, hw, hw, c], data).unwrap()
}

#[test]
fn bundle_components_match_variant_flags() {
    for variant in VariantId::ALL {
        let b = desk_bundle(variant);
        let f = variant.flags();
        assert_eq!(b.g_aux.is_some(), f.has_aux, "variant {variant} g_aux");
        assert_eq!(b.context.is_some(), f.has_context, "variant {variant} context");
        assert_eq!(b.d_rgb.is_some(), f.has_discriminators, "variant {variant} d_rgb");
        assert_eq!(
            b.d_aux.is_some(),
            f.has_discriminators && f.has_aux,
            "variant {variant} d_aux"
        );
        assert_eq!(b.classifier.is_some(), f.has_classifier, "variant {variant} classifier");
    }
    // The bare supervised variant has no discriminators and no context.
    let a = desk_bundle(VariantId::A);
    assert!(a.d_rgb.is_none() && a.d_aux.is_none() && a.context.is_none());
}

#[test]
fn k_below_2_is_a_parameter_error() {
    let preset = ArchPreset::desk32(1, 2);
    let r = build_bundle::<f32>(&preset, VariantId::A, quiet_options(), 1);
    assert!(matches!(r, Err(Error::Parameter(_))));
}

#[test]
fn instantiated_ladders_equal_preset_ladders() {
    for preset in [desk_preset(), ArchPreset::paper224(6, 2)] {
        let b: ModelBundle<f32> = build_bundle(&preset, VariantId::H, quiet_options(), 3).unwrap();
        for (name, ladder) in b.instantiated_ladders() {
            let want = match name.as_str() {
                "g_rgb" | "g_aux" => preset.gen_conv_ladder(),
                "ctx.rgb" | "ctx.aux" => preset.ctx_conv_ladder(),
                "d_rgb" | "d_aux" => preset.disc_conv_ladder(),
                other => panic!("unexpected network {other}"),
            };
            assert_eq!(ladder, want, "{name} ladder for {:?}", preset.name);
        }
        // Dense ladders and head dims.
        assert_eq!(b.g_rgb.fc1.units(), preset.gen_dense_ladder()[0]);
        assert_eq!(b.g_rgb.fc2.units(), preset.gen_dense_ladder()[1]);
        assert_eq!(b.g_rgb.fc3.units(), preset.k as usize);
        assert_eq!(b.context.as_ref().unwrap().fc.units(), preset.context_dim());
        assert_eq!(b.d_rgb.as_ref().unwrap().fc.units(), 1);
    }
}

#[test]
fn paper224_dense_input_dims_follow_the_published_sizes() {
    let preset = ArchPreset::paper224(17, 1);
    let b: ModelBundle<f32> = build_bundle(&preset, VariantId::H, quiet_options(), 3).unwrap();
    // Generator: 1x1x512 flattened + 256 context.
    assert_eq!(b.g_rgb.fc1.input_dim(), 512 + 256);
    // Context: two 7x7x512 streams + two k-dim codes.
    assert_eq!(
        b.context.as_ref().unwrap().fc.input_dim(),
        2 * 7 * 7 * 512 + 2 * 17
    );
    // Discriminator: 56x56x128 + code.
    assert_eq!(b.d_rgb.as_ref().unwrap().fc.input_dim(), 56 * 56 * 128 + 17);
    // Classifier taps: conv8 flat + dense-256 + raw k.
    assert_eq!(b.classifier.as_ref().unwrap().fc.input_dim(), 512 + 256 + 17);
}

#[test]
fn generator_output_and_taps_have_declared_shapes() {
    let mut b = desk_bundle(VariantId::E); // no context, has classifier
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frame = tape.leaf(rand_frames(2, 32, 3, 8), false);
    let out = b
        .g_rgb
        .forward(&mut tape, frame, None, Mode::Train, true, true, &mut mounted, &mut rng)
        .unwrap();
    assert_eq!(tape.value(out.raw).shape(), &[2, 6]);
    assert_eq!(tape.value(out.taps[0]).shape(), &[2, 64]);
    assert_eq!(tape.value(out.taps[1]).shape(), &[2, 32]);
    assert_eq!(tape.value(out.taps[2]).shape(), &[2, 6]);
}

#[test]
fn generator_with_zero_noise_is_deterministic() {
    let mut b = desk_bundle(VariantId::A);
    let frame = rand_frames(1, 32, 3, 9);
    let run = |b: &mut ModelBundle<f32>| -> Vec<f32> {
        let mut tape = Tape::new();
        let mut mounted = MountedParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = tape.leaf(frame.clone(), false);
        let out = b
            .g_rgb
            .forward(&mut tape, f, None, Mode::Train, false, false, &mut mounted, &mut rng)
            .unwrap();
        tape.value(out.raw).data().to_vec()
    };
    assert_eq!(run(&mut b), run(&mut b));
}

#[test]
fn generator_context_contract_errors() {
    let mut with_ctx = desk_bundle(VariantId::G);
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frame = tape.leaf(rand_frames(1, 32, 3, 10), false);
    // Missing context.
    let r = with_ctx.g_rgb.forward(
        &mut tape, frame, None, Mode::Train, false, false, &mut mounted, &mut rng,
    );
    assert!(matches!(r, Err(Error::Usage(_))));
    // Wrong context width.
    let bad_ctx = tape.leaf(Tensor::zeros(vec![1, 7]), false);
    let r = with_ctx.g_rgb.forward(
        &mut tape, frame, Some(bad_ctx), Mode::Train, false, false, &mut mounted, &mut rng,
    );
    assert!(matches!(r, Err(Error::Dimension(_))));
}

#[test]
fn context_accepts_zero_codes_and_keeps_length_across_variants() {
    // Two-stream (h) and single-stream (g) context vectors share the length.
    let mut h = desk_bundle(VariantId::H);
    let mut g = desk_bundle(VariantId::G);
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let rgb = tape.leaf(rand_frames(2, 32, 3, 11), false);
    let aux = tape.leaf(rand_frames(2, 32, 2, 12), false);
    let zero_codes = tape.leaf(Tensor::zeros(vec![2, 6]), false);
    let ctx_h = h
        .context
        .as_mut()
        .unwrap()
        .forward(&mut tape, rgb, Some(aux), zero_codes, Some(zero_codes), Mode::Train, false, false, &mut mounted)
        .unwrap();
    assert_eq!(tape.value(ctx_h).shape(), &[2, 32]);
    assert!(tape.value(ctx_h).all_finite());
    let ctx_g = g
        .context
        .as_mut()
        .unwrap()
        .forward(&mut tape, rgb, None, zero_codes, None, Mode::Train, false, false, &mut mounted)
        .unwrap();
    assert_eq!(tape.value(ctx_g).shape(), &[2, 32]);
}

#[test]
fn two_stream_context_without_aux_is_usage_error() {
    let mut h = desk_bundle(VariantId::H);
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let rgb = tape.leaf(rand_frames(1, 32, 3, 13), false);
    let codes = tape.leaf(Tensor::zeros(vec![1, 6]), false);
    let r = h.context.as_mut().unwrap().forward(
        &mut tape, rgb, None, codes, Some(codes), Mode::Train, false, false, &mut mounted,
    );
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn context_output_depends_on_previous_codes() {
    let mut g = desk_bundle(VariantId::G);
    let frame = rand_frames(1, 32, 3, 14);
    let run = |net: &mut ModelBundle<f32>, code_val: f32| -> Vec<f32> {
        let mut tape = Tape::new();
        let mut mounted = MountedParams::default();
        let f = tape.leaf(frame.clone(), false);
        let mut code = Tensor::zeros(vec![1, 6]);
        code.data_mut()[2] = code_val;
        let c = tape.leaf(code, false);
        let out = net
            .context
            .as_mut()
            .unwrap()
            .forward(&mut tape, f, None, c, None, Mode::Train, false, false, &mut mounted)
            .unwrap();
        tape.value(out).data().to_vec()
    };
    let base = run(&mut g, 0.0);
    let bumped = run(&mut g, 255.0);
    let delta: f32 = base.iter().zip(&bumped).map(|(a, b)| (a - b).abs()).sum();
    assert!(delta > 1e-3, "context ignored the previous codes (delta {delta})");

    // Jacobian columns: analytic gradient w.r.t. the code is nonzero.
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let f = tape.leaf(frame, false);
    let code = tape.leaf(Tensor::zeros(vec![1, 6]), true);
    let out = g
        .context
        .as_mut()
        .unwrap()
        .forward(&mut tape, f, None, code, None, Mode::Train, false, false, &mut mounted)
        .unwrap();
    let s = tape.sum_all(out);
    tape.backward(s).unwrap();
    let grad = tape.grad(code).unwrap();
    assert!(grad.iter().any(|&gv| gv != 0.0), "zero Jacobian against prev codes");
}

#[test]
fn discriminator_outputs_probabilities_and_reacts_to_codes() {
    let mut b = desk_bundle(VariantId::D);
    let frame = rand_frames(3, 32, 3, 15);
    let run = |b: &mut ModelBundle<f32>, code: Tensor<f32>, mode: Mode| -> Vec<f32> {
        let mut tape = Tape::new();
        let mut mounted = MountedParams::default();
        let f = tape.leaf(frame.clone(), false);
        let c = tape.leaf(code, false);
        let p = b
            .d_rgb
            .as_mut()
            .unwrap()
            .forward(&mut tape, f, c, mode, matches!(mode, Mode::Train), false, &mut mounted)
            .unwrap();
        tape.value(p).data().to_vec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let code_data: Vec<f32> = (0..18).map(|_| rng.gen_range(0.0..255.0)).collect();
    let code = Tensor::new(vec![3, 6], code_data.clone()).unwrap();
    let p = run(&mut b, code.clone(), Mode::Train);
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0), "probabilities out of range: {p:?}");

    // Eval-mode determinism once statistics exist (primed by the train call).
    let e1 = run(&mut b, code.clone(), Mode::Eval);
    let e2 = run(&mut b, code.clone(), Mode::Eval);
    assert_eq!(e1, e2);

    // Finite-difference probe: output moves with the code entries.
    let mut nudged_data = code_data.clone();
    nudged_data[2] += 40.0;
    let nudged = Tensor::new(vec![3, 6], nudged_data).unwrap();
    let p2 = run(&mut b, nudged, Mode::Eval);
    assert!(
        (p2[0] - e1[0]).abs() > 0.0,
        "discriminator output insensitive to code entries"
    );

    // Code length mismatch.
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let f = tape.leaf(frame, false);
    let bad = tape.leaf(Tensor::zeros(vec![3, 4]), false);
    let r = b
        .d_rgb
        .as_mut()
        .unwrap()
        .forward(&mut tape, f, bad, Mode::Eval, false, false, &mut mounted);
    assert!(matches!(r, Err(Error::Dimension(_))));
}

#[test]
fn eval_mode_without_statistics_is_a_state_error() {
    let mut b = desk_bundle(VariantId::D);
    let mut tape = Tape::new();
    let mut mounted = MountedParams::default();
    let f = tape.leaf(rand_frames(1, 32, 3, 17), false);
    let c = tape.leaf(Tensor::zeros(vec![1, 6]), false);
    let r = b
        .d_rgb
        .as_mut()
        .unwrap()
        .forward(&mut tape, f, c, Mode::Eval, false, false, &mut mounted);
    assert!(matches!(r, Err(Error::State(_))));
}

#[test]
fn classifier_distribution_and_tap_count_contract() {
    let b = desk_bundle(VariantId::G);
    let cls = b.classifier.as_ref().unwrap();
    let mut tape = Tape::<f32>::new();
    let mut mounted = MountedParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let t0 = tape.leaf(Tensor::randn(vec![2, 64], 0.0, 1.0, &mut rng), false);
    let t1 = tape.leaf(Tensor::randn(vec![2, 32], 0.0, 1.0, &mut rng), false);
    let t2 = tape.leaf(Tensor::randn(vec![2, 6], 0.0, 1.0, &mut rng), false);
    let dist = cls.forward(&mut tape, &[t0, t1, t2], false, &mut mounted).unwrap();
    assert_eq!(tape.value(dist).shape(), &[2, 6]);
    for row in tape.value(dist).data().chunks_exact(6) {
        let sum: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }
    // Wrong tap count.
    let r = cls.forward(&mut tape, &[t0, t1], false, &mut mounted);
    assert!(matches!(r, Err(Error::Usage(_))));
    // The dual-tap variant expects six.
    let c = desk_bundle(VariantId::C);
    assert_eq!(c.classifier.as_ref().unwrap().expected_taps, 6);
    let r = c.classifier.as_ref().unwrap().forward(&mut tape, &[t0, t1, t2], false, &mut mounted);
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn checkpoint_round_trip_preserves_every_parameter() {
    let b = desk_bundle(VariantId::H);
    let ckpt = b.to_checkpoint().unwrap();
    let mut restored = build_bundle::<f32>(&desk_preset(), VariantId::H, quiet_options(), 99).unwrap();
    let before = restored.params_hash(|_| true);
    let outcome = restored.load_from_checkpoint(&ckpt).unwrap();
    assert!(!outcome.config_hash_mismatch);
    assert_ne!(before, restored.params_hash(|_| true));
    assert_eq!(b.params_hash(|_| true), restored.params_hash(|_| true));
}

#[test]
fn variant_g_checkpoint_into_variant_h_names_missing_tensors() {
    let g = desk_bundle(VariantId::G);
    let ckpt = g.to_checkpoint().unwrap();
    let mut h = desk_bundle(VariantId::H);
    match h.load_from_checkpoint(&ckpt) {
        Err(Error::Incompatibility(msg)) => {
            assert!(msg.contains("d_aux"), "missing tensors not named: {msg}");
            assert!(msg.contains("g_aux"), "missing tensors not named: {msg}");
        }
        other => panic!("expected incompatibility, got {other:?}"),
    }
}

#[test]
fn config_hash_mismatch_is_a_warning_not_an_error() {
    let b = desk_bundle(VariantId::A);
    let ckpt = b.to_checkpoint().unwrap();
    let other_opts = BuildOptions { noise: NoiseSpec::with_rate(0.4), first_bn: true };
    let mut other = build_bundle::<f32>(&desk_preset(), VariantId::A, other_opts, 7).unwrap();
    let outcome = other.load_from_checkpoint(&ckpt).unwrap();
    assert!(outcome.config_hash_mismatch);
}

#[test]
fn audit_reports_the_whole_component_set() {
    let b = desk_bundle(VariantId::H);
    let audit = b.audit();
    let names: Vec<&str> = audit.networks.iter().map(|n| n.name.as_str()).collect();
    assert_eq!(names, vec!["g_rgb", "g_aux", "ctx", "d_rgb", "d_aux", "cls"]);
    assert_eq!(audit.total_params, b.param_count());
    assert!(audit.total_params > 0);
    let g = &audit.networks[0];
    let conv_count = g.layers.iter().filter(|l| l.kind == "conv2d").count();
    assert_eq!(conv_count, 8);
    let dense_count = g.layers.iter().filter(|l| l.kind == "dense").count();
    assert_eq!(dense_count, 3);
}
