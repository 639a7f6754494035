//! Frozen-bundle inference: the same recurrent loop in eval mode.

use crate::codes::{clamp_generated, decode, ClassId, CODE_MAX};
use crate::engine::{Mode, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_corpus, MetricsReport, SequencePrediction, DEFAULT_F1_TAUS};
use crate::seeding::derive_seed;
use crate::synth::SequenceSample;
use crate::zoo::{ModelBundle, MountedParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STREAM_EVAL: u64 = 0xE7A1;

fn check_sample<E: Scalar>(bundle: &ModelBundle<E>, s: &SequenceSample) -> Result<()> {
    let hw = bundle.preset.input_hw;
    if s.hw() != hw {
        return Err(Error::Dimension(format!(
            "sequence frames are {}x{}, preset expects {hw}x{hw}",
            s.hw(),
            s.hw()
        )));
    }
    if bundle.variant.flags().has_aux && s.aux_channels() != bundle.preset.aux_channels {
        return Err(Error::Dimension(format!(
            "sequence aux has {} channels, preset expects {}",
            s.aux_channels(),
            bundle.preset.aux_channels
        )));
    }
    if s.k != bundle.preset.k {
        return Err(Error::Dimension(format!(
            "sequence has k={}, preset expects k={}",
            s.k, bundle.preset.k
        )));
    }
    Ok(())
}

/// Probability-like view of a clamped code for detection confidences.
fn code_distribution<E: Scalar>(code: &[E]) -> Vec<f32> {
    let sum: f64 = code.iter().map(|v| v.to_f64()).sum();
    if sum <= 0.0 {
        return vec![1.0 / code.len() as f32; code.len()];
    }
    code.iter().map(|v| (v.to_f64() / sum) as f32).collect()
}

/// Run several equal-length sequences through the recurrent loop in
/// lockstep. Deterministic when inference noise is off.
pub fn predict_batch<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    samples: &[&SequenceSample],
    seed: u64,
) -> Result<Vec<SequencePrediction>>
where
    StandardNormal: Distribution<E>,
{
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let t_len = samples[0].frames();
    for s in samples {
        check_sample(bundle, s)?;
        if s.frames() != t_len {
            return Err(Error::Usage("predict_batch needs equal-length sequences".into()));
        }
    }
    let flags = bundle.variant.flags();
    let k = bundle.preset.k as usize;
    let n = samples.len();
    let hw = bundle.preset.input_hw;
    let ca = bundle.preset.aux_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EVAL));
    let mut prev_rgb: Tensor<E> = Tensor::zeros(vec![n, k]);
    let mut prev_aux: Tensor<E> = Tensor::zeros(vec![n, k]);
    let mut out: Vec<SequencePrediction> = (0..n)
        .map(|_| SequencePrediction { labels: Vec::with_capacity(t_len), distributions: Vec::with_capacity(t_len) })
        .collect();
    for t in 0..t_len {
        let mut tape: Tape<E> = Tape::new();
        let mut mounted = MountedParams::default();
        let mut rgb_data = Vec::with_capacity(n * hw * hw * 3);
        let mut aux_data = Vec::with_capacity(n * hw * hw * ca);
        for s in samples {
            let rgb_len = hw * hw * 3;
            rgb_data.extend(
                s.rgb.data()[t * rgb_len..(t + 1) * rgb_len]
                    .iter()
                    .map(|&v| E::from_f64(v as f64)),
            );
            if flags.has_aux {
                let aux_len = hw * hw * s.aux_channels();
                aux_data.extend(
                    s.aux.data()[t * aux_len..(t + 1) * aux_len]
                        .iter()
                        .map(|&v| E::from_f64(v as f64)),
                );
            }
        }
        let rgb = tape.leaf(Tensor::new(vec![n, hw, hw, 3], rgb_data)?, false);
        let aux = if flags.has_aux {
            Some(tape.leaf(Tensor::new(vec![n, hw, hw, ca], aux_data)?, false))
        } else {
            None
        };
        let ctx = if flags.has_context {
            let pr = tape.leaf(prev_rgb.clone(), false);
            let pa = flags.has_aux.then(|| tape.leaf(prev_aux.clone(), false));
            let ctx_net = bundle.context.as_mut().expect("flags imply context");
            Some(ctx_net.forward(&mut tape, rgb, aux, pr, pa, Mode::Eval, false, false, &mut mounted)?)
        } else {
            None
        };
        let g1 = bundle
            .g_rgb
            .forward(&mut tape, rgb, ctx, Mode::Eval, false, false, &mut mounted, &mut rng)?;
        let fake_rgb = tape.clamp_range(g1.raw, E::zero(), E::from_f64(CODE_MAX as f64));
        let g2 = match (&mut bundle.g_aux, aux) {
            (Some(g), Some(a)) => {
                Some(g.forward(&mut tape, a, ctx, Mode::Eval, false, false, &mut mounted, &mut rng)?)
            }
            _ => None,
        };
        let fake_aux =
            g2.as_ref().map(|g| tape.clamp_range(g.raw, E::zero(), E::from_f64(CODE_MAX as f64)));

        let dists: Vec<Vec<f32>> = if flags.has_classifier {
            let classifier = bundle.classifier.as_ref().expect("flags imply classifier");
            let taps: Vec<Var> = if bundle.variant.dual_tap_classifier() {
                let g2 = g2.as_ref().expect("dual-tap variant has g_aux");
                g1.taps.iter().chain(g2.taps.iter()).copied().collect()
            } else {
                g1.taps.to_vec()
            };
            let dist = classifier.forward(&mut tape, &taps, false, &mut mounted)?;
            tape.value(dist)
                .data()
                .chunks_exact(k)
                .map(|row| row.iter().map(|v| v.to_f64() as f32).collect())
                .collect()
        } else {
            tape.value(fake_rgb)
                .data()
                .chunks_exact(k)
                .map(code_distribution)
                .collect()
        };
        for (i, dist) in dists.into_iter().enumerate() {
            let label = if flags.has_classifier {
                let mut best = 0;
                for (j, &p) in dist.iter().enumerate() {
                    if p > dist[best] {
                        best = j;
                    }
                }
                ClassId(best as u16)
            } else {
                let row = &tape.value(fake_rgb).data()[i * k..(i + 1) * k];
                let as_f32: Vec<f32> = row.iter().map(|v| v.to_f64() as f32).collect();
                decode(&clamp_generated(&as_f32))
            };
            out[i].labels.push(label);
            out[i].distributions.push(dist);
        }
        prev_rgb = tape.value(fake_rgb).clone();
        if let Some(fa) = fake_aux {
            prev_aux = tape.value(fa).clone();
        }
    }
    Ok(out)
}

/// Predict one sequence (per-frame classes plus distributions).
pub fn predict_sequence<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    sample: &SequenceSample,
    seed: u64,
) -> Result<SequencePrediction>
where
    StandardNormal: Distribution<E>,
{
    Ok(predict_batch(bundle, &[sample], seed)?.remove(0))
}

/// Predict a whole split, batching equal-length sequences together.
pub fn predict_split<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    samples: &[SequenceSample],
    seed: u64,
) -> Result<Vec<SequencePrediction>>
where
    StandardNormal: Distribution<E>,
{
    let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        by_len.entry(s.frames()).or_default().push(i);
    }
    let mut out: Vec<Option<SequencePrediction>> = vec![None; samples.len()];
    for (_, idxs) in by_len {
        let group: Vec<&SequenceSample> = idxs.iter().map(|&i| &samples[i]).collect();
        let preds = predict_batch(bundle, &group, seed)?;
        for (i, p) in idxs.into_iter().zip(preds) {
            out[i] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("all predicted")).collect())
}

/// Predict a split and score it against ground truth.
pub fn evaluate_split<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    samples: &[SequenceSample],
    seed: u64,
) -> Result<MetricsReport>
where
    StandardNormal: Distribution<E>,
{
    let preds = predict_split(bundle, samples, seed)?;
    let truths: Vec<Vec<ClassId>> = samples.iter().map(|s| s.labels.clone()).collect();
    evaluate_corpus(&preds, &truths, &DEFAULT_F1_TAUS)
}
