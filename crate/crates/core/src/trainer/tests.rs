//! Training-loop contracts: determinism, isolation, variant behavior,
//! recurrence causality, and resumability.

use super::config::TrainConfig;
use super::predict::{predict_sequence, predict_split};
use super::train::{
    discriminator_update, forward_generators, generator_update, train_one_epoch, train_sequences,
    train_step, training_checkpoint, restore_train_state, FrameBatch, TrainState,
};
use super::variant::VariantId;
use crate::codes::ClassId;
use crate::engine::{NoiseSpec, Tensor};
use crate::error::Error;
use crate::synth::{generate_dataset, ActivityScriptConfig, SequenceSample};
use crate::trainer::losses::cgan_loss;
use crate::zoo::{build_bundle, BuildOptions, ModelBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_data(n: usize, frames: usize, seed: u64) -> Vec<SequenceSample> {
    let mut cfg = ActivityScriptConfig::desk_default();
    cfg.sequence_length = frames;
    cfg.seed = seed;
    let (ds, _) = generate_dataset(&cfg, n.max(3), (1.0 - 2e-9, 1e-9, 1e-9)).unwrap();
    ds.train.into_iter().take(n).collect()
}

fn tiny_cfg(variant: VariantId, epochs: u32, wl: usize) -> TrainConfig {
    let mut cfg = TrainConfig::desk(variant, 11);
    cfg.schedule = vec![super::config::ScheduleSegment { learning_rate: 2e-4, epochs }];
    cfg.window_length = wl;
    cfg.batch_size = 8;
    cfg.noise_rate = 0.1;
    cfg
}

fn build_for(cfg: &TrainConfig, seed: u64) -> ModelBundle<f32> {
    let preset = crate::zoo::ArchPreset::desk32(6, 2);
    let options = BuildOptions {
        noise: NoiseSpec::with_rate(cfg.noise_rate),
        first_bn: true,
    };
    build_bundle(&preset, cfg.variant, options, seed).unwrap()
}

#[test]
fn identical_seeds_give_bit_identical_parameters() {
    let data = tiny_data(2, 16, 21);
    let cfg = tiny_cfg(VariantId::H, 1, 8);
    let run = |data: &[SequenceSample]| -> [u8; 32] {
        let mut bundle = build_for(&cfg, 5);
        let (_, log) = train_sequences(&mut bundle, data, &cfg, |_| true).unwrap();
        assert_eq!(log.len(), 1);
        bundle.params_hash(|_| true)
    };
    assert_eq!(run(&data), run(&data));
}

#[test]
fn variant_a_reduces_to_classifier_backprop() {
    let data = tiny_data(2, 8, 22);
    let cfg = tiny_cfg(VariantId::A, 1, 4);
    let mut bundle = build_for(&cfg, 5);
    let mut state = TrainState::new(&cfg);
    let entry = train_one_epoch(&mut bundle, &data, &cfg, &mut state, 1).unwrap();
    assert!(entry.d1_loss.is_none());
    assert!(entry.d2_loss.is_none());
    assert!(entry.g1_adv.is_none());
    assert!(entry.classifier_loss.is_some());
    assert_eq!(state.opt_d.step, 0, "no discriminator step should have run");
    assert!(state.opt_g.step > 0);
}

#[test]
fn updates_are_isolated_between_discriminator_and_generator() {
    let data = tiny_data(2, 8, 23);
    let cfg = tiny_cfg(VariantId::H, 1, 4);
    let mut bundle = build_for(&cfg, 6);
    let mut state = TrainState::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let is_d = ModelBundle::<f32>::is_discriminator_param;
    for step in 0..5 {
        let batch = slice_batch(&data, step % 4);
        let mut fwd = forward_generators(&mut bundle, &batch, &cfg, &mut rng).unwrap();
        let g_before = bundle.params_hash(|n| !is_d(n));
        let d_before = bundle.params_hash(is_d);
        discriminator_update(&mut bundle, &mut fwd, &batch, &cfg, &mut state).unwrap();
        assert_eq!(
            bundle.params_hash(|n| !is_d(n)),
            g_before,
            "discriminator pass touched generator-side parameters"
        );
        assert_ne!(bundle.params_hash(is_d), d_before, "discriminator never moved");
        let d_mid = bundle.params_hash(is_d);
        generator_update(&mut bundle, &mut fwd, &batch, &cfg, &mut state).unwrap();
        assert_eq!(
            bundle.params_hash(is_d),
            d_mid,
            "generator pass touched discriminator parameters"
        );
        assert_ne!(bundle.params_hash(|n| !is_d(n)), g_before, "generator never moved");
    }
}

fn slice_batch(data: &[SequenceSample], t: usize) -> FrameBatch<f32> {
    let hw = data[0].hw();
    let ca = data[0].aux_channels();
    let n = data.len();
    let mut rgb = Vec::new();
    let mut aux = Vec::new();
    let mut labels = Vec::new();
    for s in data {
        let rgb_len = hw * hw * 3;
        let aux_len = hw * hw * ca;
        rgb.extend_from_slice(&s.rgb.data()[t * rgb_len..(t + 1) * rgb_len]);
        aux.extend_from_slice(&s.aux.data()[t * aux_len..(t + 1) * aux_len]);
        labels.push(s.labels[t].index());
    }
    FrameBatch {
        rgb: Tensor::new(vec![n, hw, hw, 3], rgb).unwrap(),
        aux: Some(Tensor::new(vec![n, hw, hw, ca], aux).unwrap()),
        prev_rgb: Tensor::zeros(vec![n, 6]),
        prev_aux: Some(Tensor::zeros(vec![n, 6])),
        labels,
    }
}

#[test]
fn repeated_discriminator_steps_improve_its_objective_on_a_frozen_generator() {
    let data = tiny_data(3, 8, 24);
    let mut cfg = tiny_cfg(VariantId::D, 1, 4);
    cfg.noise_rate = 0.0; // frozen generator must produce identical fakes
    let mut bundle = build_for(&cfg, 7);
    let mut state = TrainState::new(&cfg);
    state.opt_d.set_learning_rate(1e-3);
    let batch = {
        let hw = data[0].hw();
        let n = data.len();
        let mut rgb = Vec::new();
        let mut labels = Vec::new();
        for s in &data {
            let rgb_len = hw * hw * 3;
            rgb.extend_from_slice(&s.rgb.data()[..rgb_len]);
            labels.push(s.labels[0].index());
        }
        FrameBatch {
            rgb: Tensor::new(vec![n, hw, hw, 3], rgb).unwrap(),
            aux: None,
            prev_rgb: Tensor::zeros(vec![n, 6]),
            prev_aux: None,
            labels,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut values = Vec::new();
    for _ in 0..20 {
        let mut fwd = forward_generators(&mut bundle, &batch, &cfg, &mut rng).unwrap();
        let measures = discriminator_update(&mut bundle, &mut fwd, &batch, &cfg, &mut state)
            .unwrap()
            .unwrap();
        values.push(cgan_loss(&measures.rgb_real, &measures.rgb_fake));
    }
    assert!(
        values[19] > values[0],
        "20 D steps should raise the value function: {values:?}"
    );
}

#[test]
fn window_length_one_trains_without_context_carryover() {
    let data = tiny_data(2, 8, 25);
    let cfg = tiny_cfg(VariantId::B, 1, 1);
    let mut bundle = build_for(&cfg, 8);
    let (_, log) = train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
    assert_eq!(log.len(), 1);
    assert!(log[0].classifier_loss.unwrap().is_finite());
}

#[test]
fn classifier_loss_decreases_over_a_few_epochs() {
    let data = tiny_data(3, 32, 26);
    let cfg = tiny_cfg(VariantId::B, 6, 8);
    let mut bundle = build_for(&cfg, 9);
    let (_, log) = train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
    let first = log.first().unwrap().classifier_loss.unwrap();
    let last = log.last().unwrap().classifier_loss.unwrap();
    assert!(
        last < first,
        "classifier loss should decrease: {first:.4} -> {last:.4}"
    );
}

#[test]
fn nan_parameters_abort_with_the_offending_tensor_named() {
    let data = tiny_data(2, 4, 27);
    let cfg = tiny_cfg(VariantId::A, 1, 2);
    let mut bundle = build_for(&cfg, 10);
    bundle.g_rgb.fc1.w.data_mut()[0] = f32::NAN;
    let mut state = TrainState::new(&cfg);
    let batch = {
        let hw = data[0].hw();
        FrameBatch {
            rgb: Tensor::new(
                vec![1, hw, hw, 3],
                data[0].rgb.data()[..hw * hw * 3].to_vec(),
            )
            .unwrap(),
            aux: None,
            prev_rgb: Tensor::zeros(vec![1, 6]),
            prev_aux: None,
            labels: vec![data[0].labels[0].index()],
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    match train_step(&mut bundle, &batch, &cfg, &mut state, &mut rng) {
        Err(Error::Numeric(msg)) => {
            assert!(msg.contains("g_rgb.fc1.w"), "diagnostic does not name the tensor: {msg}")
        }
        Err(other) => panic!("expected numeric error, got {other:?}"),
        Ok(_) => panic!("expected numeric error, step succeeded"),
    }
}

#[test]
fn empty_or_short_datasets_are_usage_errors() {
    let cfg = tiny_cfg(VariantId::A, 1, 8);
    let mut bundle = build_for(&cfg, 11);
    assert!(matches!(
        train_sequences(&mut bundle, &[], &cfg, |_| true),
        Err(Error::Usage(_))
    ));
    let short = tiny_data(1, 4, 28); // 4 < window_length 8
    assert!(matches!(
        train_sequences(&mut bundle, &short, &cfg, |_| true),
        Err(Error::Usage(_))
    ));
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_run_bit_for_bit() {
    let data = tiny_data(2, 16, 29);
    let cfg = tiny_cfg(VariantId::H, 3, 8);
    // Uninterrupted 3 epochs.
    let mut full = build_for(&cfg, 12);
    let (full_state, _) = train_sequences(&mut full, &data, &cfg, |_| true).unwrap();
    // Two epochs, checkpoint, resume for the third.
    let mut part = build_for(&cfg, 12);
    let mut state = TrainState::new(&cfg);
    for epoch in 1..=2 {
        train_one_epoch(&mut part, &data, &cfg, &mut state, epoch).unwrap();
    }
    let ckpt = training_checkpoint(&part, &state).unwrap();
    let mut resumed = build_for(&cfg, 999); // deliberately different init
    resumed.load_from_checkpoint(&ckpt).unwrap();
    let mut rstate = restore_train_state(&ckpt, &cfg, &resumed).unwrap();
    assert_eq!(rstate.completed_epochs, 2);
    train_one_epoch(&mut resumed, &data, &cfg, &mut rstate, 3).unwrap();
    assert_eq!(
        full.params_hash(|_| true),
        resumed.params_hash(|_| true),
        "resumed run diverged from the uninterrupted one"
    );
    assert_eq!(full_state.opt_g.step, rstate.opt_g.step);
    // And the serialized checkpoints are byte-identical too.
    let a = training_checkpoint(&full, &full_state).unwrap().to_bytes();
    let b = training_checkpoint(&resumed, &rstate).unwrap().to_bytes();
    assert_eq!(a, b);
}

#[test]
fn predictions_are_causal_and_deterministic() {
    let data = tiny_data(2, 24, 30);
    let cfg = tiny_cfg(VariantId::H, 1, 8);
    let mut bundle = build_for(&cfg, 13);
    train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
    let p1 = predict_sequence(&mut bundle, &data[0], 5).unwrap();
    let p2 = predict_sequence(&mut bundle, &data[0], 5).unwrap();
    assert_eq!(p1.labels, p2.labels);
    assert_eq!(p1.distributions, p2.distributions);
    assert_eq!(p1.labels.len(), data[0].frames());
    // Corrupt frames after t0: the prefix must be unchanged.
    let t0 = 10;
    let mut corrupted = data[0].clone();
    let hw = corrupted.hw();
    let rgb_len = hw * hw * 3;
    let total = corrupted.frames();
    for t in t0..total {
        for v in corrupted.rgb.data_mut()[t * rgb_len..(t + 1) * rgb_len].iter_mut() {
            *v = 1.0 - *v;
        }
        let aux_len = hw * hw * corrupted.aux_channels();
        for v in corrupted.aux.data_mut()[t * aux_len..(t + 1) * aux_len].iter_mut() {
            *v = 1.0 - *v;
        }
    }
    let p3 = predict_sequence(&mut bundle, &corrupted, 5).unwrap();
    assert_eq!(
        &p1.labels[..t0],
        &p3.labels[..t0],
        "future frames changed past predictions"
    );
    assert_eq!(&p1.distributions[..t0], &p3.distributions[..t0]);
}

#[test]
fn code_argmax_prediction_serves_classifierless_variants() {
    let data = tiny_data(2, 16, 31);
    for variant in [VariantId::D, VariantId::F] {
        let cfg = tiny_cfg(variant, 1, 8);
        let mut bundle = build_for(&cfg, 14);
        train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
        let p = predict_sequence(&mut bundle, &data[0], 3).unwrap();
        assert_eq!(p.labels.len(), data[0].frames());
        for dist in &p.distributions {
            assert_eq!(dist.len(), 6);
            let sum: f32 = dist.iter().sum();
            assert!((sum - 1.0).abs() < 1e-3, "code distribution not normalized: {sum}");
        }
    }
}

#[test]
fn predict_rejects_mismatched_frames() {
    let cfg = tiny_cfg(VariantId::A, 1, 4);
    let mut bundle = build_for(&cfg, 15);
    let data = tiny_data(1, 8, 32);
    train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
    let mut small_cfg = ActivityScriptConfig::desk_default();
    small_cfg.image_hw = 16;
    small_cfg.sequence_length = 8;
    let (small, _) = generate_dataset(&small_cfg, 3, (1.0, 0.0, 0.0)).unwrap();
    assert!(matches!(
        predict_sequence(&mut bundle, &small.train[0], 1),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn predict_split_batches_equal_lengths_consistently() {
    let data = tiny_data(3, 16, 33);
    let cfg = tiny_cfg(VariantId::B, 1, 8);
    let mut bundle = build_for(&cfg, 16);
    train_sequences(&mut bundle, &data, &cfg, |_| true).unwrap();
    let batch = predict_split(&mut bundle, &data, 4).unwrap();
    let single: Vec<Vec<ClassId>> = data
        .iter()
        .map(|s| predict_sequence(&mut bundle, s, 4).unwrap().labels)
        .collect();
    for (b, s) in batch.iter().zip(&single) {
        assert_eq!(&b.labels, s, "batched and single predictions disagree");
    }
}
