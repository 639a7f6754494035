//! Alternating adversarial training over recurrent frame windows.
//!
//! Each minibatch is a set of windows advancing in lockstep: at every time
//! offset a frame slice crosses one `train_step` (one discriminator update
//! per stream, then one generator/context/classifier update), and the
//! clamped generated codes feed the next slice's context call, detached.
//! The two updates are separate phases so parameter isolation is observable.

use super::config::{OptimizerChoice, TrainConfig};
use super::losses::{self, LossReport, StreamProbs, PROB_CLAMP};
use crate::codes::CODE_MAX;
use crate::engine::{Mode, OptimizerState, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, EpochLogRecord};
use crate::seeding::derive_seed2;
use crate::synth::SequenceSample;
use crate::zoo::{ModelBundle, MountedParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STREAM_EPOCH: u64 = 0xE0C4;

/// One time slice across a window batch. Codes are in [0,255].
pub struct FrameBatch<E: Scalar> {
    pub rgb: Tensor<E>,
    pub aux: Option<Tensor<E>>,
    pub prev_rgb: Tensor<E>,
    pub prev_aux: Option<Tensor<E>>,
    pub labels: Vec<usize>,
}

pub struct StepOutput<E: Scalar> {
    pub report: LossReport,
    pub codes_rgb: Tensor<E>,
    pub codes_aux: Option<Tensor<E>>,
}

pub struct TrainState<E: Scalar> {
    pub opt_g: OptimizerState<E>,
    pub opt_d: OptimizerState<E>,
    pub completed_epochs: u32,
}

impl<E: Scalar> TrainState<E> {
    pub fn new(cfg: &TrainConfig) -> Self {
        let lr = cfg.learning_rate_at(1);
        let mk = |lr| match cfg.optimizer {
            OptimizerChoice::Adam => OptimizerState::adam(lr),
            OptimizerChoice::Sgd => OptimizerState::sgd(lr),
        };
        TrainState { opt_g: mk(lr), opt_d: mk(lr), completed_epochs: 0 }
    }
}

fn probs_f64<E: Scalar>(tape: &Tape<E>, v: Var) -> Vec<f64> {
    tape.value(v).data().iter().map(|x| x.to_f64()).collect()
}

/// 255-scaled one-hot codes for a label batch.
fn real_codes<E: Scalar>(labels: &[usize], k: usize) -> Result<Tensor<E>> {
    let mut data = vec![E::zero(); labels.len() * k];
    for (i, &c) in labels.iter().enumerate() {
        if c >= k {
            return Err(Error::Parameter(format!("label {c} out of range for k={k}")));
        }
        data[i * k + c] = E::from_f64(CODE_MAX as f64);
    }
    Tensor::new(vec![labels.len(), k], data)
}

fn ensure_finite<E: Scalar>(tape: &Tape<E>, loss: Var, what: &str) -> Result<()> {
    if tape.value(loss).all_finite() {
        return Ok(());
    }
    let detail = tape
        .first_nonfinite()
        .map(|(idx, name)| format!("first non-finite tensor: {name} (node {idx})"))
        .unwrap_or_else(|| "loss is non-finite".to_string());
    Err(Error::Numeric(format!("{what} diverged; {detail}")))
}

/// Route tape gradients back onto bundle parameters through the optimizer.
fn apply_updates<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    tape: &Tape<E>,
    mounted: &MountedParams,
    opt: &mut OptimizerState<E>,
    keep: impl Fn(&str) -> bool,
) -> Result<()> {
    let mut grads: std::collections::HashMap<&str, &[E]> = Default::default();
    for (name, var) in &mounted.entries {
        if keep(name) {
            if let Some(g) = tape.grad(*var) {
                grads.insert(name.as_str(), g);
            }
        }
    }
    if grads.is_empty() {
        return Ok(());
    }
    opt.begin_step();
    let mut failure: Option<Error> = None;
    bundle.visit_params_mut(&mut |name: &str, t: &mut Tensor<E>| {
        if failure.is_some() {
            return;
        }
        if let Some(g) = grads.get(name) {
            if let Err(e) = opt.update_param(name, t, g) {
                failure = Some(e);
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Recorded generator-side forward for one frame slice: the tape plus the
/// handles both update phases need.
pub struct StepForward<E: Scalar> {
    pub tape: Tape<E>,
    mounted: MountedParams,
    rgb: Var,
    aux: Option<Var>,
    pub fake_rgb: Var,
    pub fake_aux: Option<Var>,
    taps_rgb: [Var; 3],
    taps_aux: Option<[Var; 3]>,
}

/// Discriminator probabilities measured during the discriminator update.
pub struct DiscriminatorMeasures {
    pub rgb_real: Vec<f64>,
    pub rgb_fake: Vec<f64>,
    pub aux_real: Option<Vec<f64>>,
    pub aux_fake: Option<Vec<f64>>,
}

/// Run context and generators in train mode, recording the tape.
pub fn forward_generators<E: Scalar, R: Rng>(
    bundle: &mut ModelBundle<E>,
    batch: &FrameBatch<E>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepForward<E>>
where
    StandardNormal: Distribution<E>,
{
    let flags = cfg.variant.flags();
    if cfg.variant != bundle.variant {
        return Err(Error::Usage(format!(
            "config variant {} does not match bundle variant {}",
            cfg.variant, bundle.variant
        )));
    }
    let mut tape: Tape<E> = Tape::new();
    let mut mounted = MountedParams::default();
    let rgb = tape.leaf(batch.rgb.clone(), false);
    let aux = match (&batch.aux, flags.has_aux) {
        (Some(t), true) => Some(tape.leaf(t.clone(), false)),
        (None, true) => return Err(Error::Usage("variant needs an auxiliary stream".into())),
        _ => None,
    };
    let ctx = if flags.has_context {
        let prev_rgb = tape.leaf(batch.prev_rgb.clone(), false);
        let prev_aux = match (&batch.prev_aux, flags.has_aux) {
            (Some(t), true) => Some(tape.leaf(t.clone(), false)),
            (None, true) => {
                return Err(Error::Usage("two-stream variant needs previous aux codes".into()))
            }
            _ => None,
        };
        let ctx_net = bundle.context.as_mut().expect("variant flags imply context");
        Some(ctx_net.forward(
            &mut tape,
            rgb,
            aux,
            prev_rgb,
            prev_aux,
            Mode::Train,
            true,
            true,
            &mut mounted,
        )?)
    } else {
        None
    };
    let code_hi = E::from_f64(CODE_MAX as f64);
    let g1 = bundle
        .g_rgb
        .forward(&mut tape, rgb, ctx, Mode::Train, true, true, &mut mounted, rng)?;
    let fake_rgb = tape.clamp_range(g1.raw, E::zero(), code_hi);
    let g2 = match (&mut bundle.g_aux, aux) {
        (Some(g), Some(a)) => {
            Some(g.forward(&mut tape, a, ctx, Mode::Train, true, true, &mut mounted, rng)?)
        }
        _ => None,
    };
    let fake_aux = g2.as_ref().map(|g| tape.clamp_range(g.raw, E::zero(), code_hi));
    Ok(StepForward {
        tape,
        mounted,
        rgb,
        aux,
        fake_rgb,
        fake_aux,
        taps_rgb: g1.taps,
        taps_aux: g2.map(|g| g.taps),
    })
}

/// Discriminator update: real pair and detached fake pair per stream, one
/// Adam step over discriminator parameters only.
pub fn discriminator_update<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    fwd: &mut StepForward<E>,
    batch: &FrameBatch<E>,
    cfg: &TrainConfig,
    state: &mut TrainState<E>,
) -> Result<Option<DiscriminatorMeasures>> {
    if !cfg.variant.flags().has_discriminators {
        return Ok(None);
    }
    let k = bundle.preset.k as usize;
    let tape = &mut fwd.tape;
    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let real_rgb = tape.leaf(real_codes(&batch.labels, k)?, false);
    let fake_rgb_det = tape.detach(fwd.fake_rgb);
    let d_rgb = bundle.d_rgb.as_mut().expect("variant flags imply d_rgb");
    let p_real1 =
        d_rgb.forward(tape, fwd.rgb, real_rgb, Mode::Train, true, true, &mut fwd.mounted)?;
    let p_fake1 =
        d_rgb.forward(tape, fwd.rgb, fake_rgb_det, Mode::Train, true, true, &mut fwd.mounted)?;
    let mut value_terms = Vec::new();
    let lnr = tape.log_clamped(p_real1, lo, hi);
    value_terms.push(tape.mean_all(lnr));
    let om = tape.one_minus(p_fake1);
    let lnf = tape.log_clamped(om, lo, hi);
    value_terms.push(tape.mean_all(lnf));
    let mut aux_probs = (None, None);
    if let (Some(d_aux), Some(a), Some(fa)) = (bundle.d_aux.as_mut(), fwd.aux, fwd.fake_aux) {
        let real_aux = tape.leaf(real_codes(&batch.labels, k)?, false);
        let fake_aux_det = tape.detach(fa);
        let p_real2 = d_aux.forward(tape, a, real_aux, Mode::Train, true, true, &mut fwd.mounted)?;
        let p_fake2 =
            d_aux.forward(tape, a, fake_aux_det, Mode::Train, true, true, &mut fwd.mounted)?;
        let lnr2 = tape.log_clamped(p_real2, lo, hi);
        value_terms.push(tape.mean_all(lnr2));
        let om2 = tape.one_minus(p_fake2);
        let lnf2 = tape.log_clamped(om2, lo, hi);
        value_terms.push(tape.mean_all(lnf2));
        aux_probs = (Some(probs_f64(tape, p_real2)), Some(probs_f64(tape, p_fake2)));
    }
    let mut value = value_terms[0];
    for &t in &value_terms[1..] {
        value = tape.add(value, t)?;
    }
    let d_loss = tape.scale(value, E::from_f64(-1.0));
    ensure_finite(tape, d_loss, "discriminator loss")?;
    let measures = DiscriminatorMeasures {
        rgb_real: probs_f64(tape, p_real1),
        rgb_fake: probs_f64(tape, p_fake1),
        aux_real: aux_probs.0,
        aux_fake: aux_probs.1,
    };
    tape.backward(d_loss)?;
    apply_updates(
        bundle,
        &fwd.tape,
        &fwd.mounted,
        &mut state.opt_d,
        ModelBundle::<E>::is_discriminator_param,
    )?;
    fwd.tape.zero_grads();
    Ok(Some(measures))
}

/// Generator-side update: adversarial terms against the frozen (already
/// updated) discriminators plus the classifier reinforcement; one Adam step
/// over everything except discriminator parameters. Returns the classifier
/// loss when the variant has one.
pub fn generator_update<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    fwd: &mut StepForward<E>,
    batch: &FrameBatch<E>,
    cfg: &TrainConfig,
    state: &mut TrainState<E>,
) -> Result<Option<f64>> {
    let flags = cfg.variant.flags();
    let tape = &mut fwd.tape;
    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut g_terms: Vec<Var> = Vec::new();
    if flags.has_discriminators {
        // Frozen remount: gradients flow through the discriminator into the
        // generated codes, but its parameters take no update and its running
        // statistics stay untouched.
        let mut frozen = MountedParams::default();
        let adv_term = |tape: &mut Tape<E>, p_fake: Var| -> Var {
            if cfg.saturating_adv {
                let om = tape.one_minus(p_fake);
                let ln = tape.log_clamped(om, lo, hi);
                tape.mean_all(ln)
            } else {
                let ln = tape.log_clamped(p_fake, lo, hi);
                let m = tape.mean_all(ln);
                tape.scale(m, E::from_f64(-1.0))
            }
        };
        let d_rgb = bundle.d_rgb.as_mut().expect("variant flags imply d_rgb");
        let p_fake =
            d_rgb.forward(tape, fwd.rgb, fwd.fake_rgb, Mode::Train, false, false, &mut frozen)?;
        g_terms.push(adv_term(tape, p_fake));
        if let (Some(d_aux), Some(a), Some(fa)) = (bundle.d_aux.as_mut(), fwd.aux, fwd.fake_aux) {
            let p_fake2 = d_aux.forward(tape, a, fa, Mode::Train, false, false, &mut frozen)?;
            g_terms.push(adv_term(tape, p_fake2));
        }
    }
    let mut l_c_value = None;
    if flags.has_classifier {
        let classifier = bundle.classifier.as_ref().expect("variant flags imply classifier");
        let taps: Vec<Var> = if cfg.variant.dual_tap_classifier() {
            let taps2 = fwd.taps_aux.as_ref().ok_or_else(|| {
                Error::Usage("dual-tap classifier needs the auxiliary generator".into())
            })?;
            fwd.taps_rgb.iter().chain(taps2.iter()).copied().collect()
        } else {
            fwd.taps_rgb.to_vec()
        };
        let dist = classifier.forward(tape, &taps, true, &mut fwd.mounted)?;
        let lc = tape.nll_prob(dist, &batch.labels, PROB_CLAMP)?;
        l_c_value = Some(tape.value(lc).data()[0].to_f64());
        if flags.has_discriminators {
            g_terms.push(tape.scale(lc, E::from_f64(cfg.lambda1)));
        } else {
            g_terms.push(lc);
        }
    }
    if g_terms.is_empty() {
        return Err(Error::Usage("variant trains nothing on the generator side".into()));
    }
    let mut g_total = g_terms[0];
    for &t in &g_terms[1..] {
        g_total = tape.add(g_total, t)?;
    }
    ensure_finite(tape, g_total, "generator objective")?;
    tape.backward(g_total)?;
    apply_updates(bundle, &fwd.tape, &fwd.mounted, &mut state.opt_g, |n| {
        !ModelBundle::<E>::is_discriminator_param(n)
    })?;
    Ok(l_c_value)
}

/// One discriminator update per stream followed by one generator-side
/// update, on a single frame slice.
pub fn train_step<E: Scalar, R: Rng>(
    bundle: &mut ModelBundle<E>,
    batch: &FrameBatch<E>,
    cfg: &TrainConfig,
    state: &mut TrainState<E>,
    rng: &mut R,
) -> Result<StepOutput<E>>
where
    StandardNormal: Distribution<E>,
{
    let mut fwd = forward_generators(bundle, batch, cfg, rng)?;
    let measures = discriminator_update(bundle, &mut fwd, batch, cfg, state)?;
    let l_c = generator_update(bundle, &mut fwd, batch, cfg, state)?;
    let report = losses::coupled_loss(
        cfg.variant,
        measures
            .as_ref()
            .map(|m| StreamProbs { real: &m.rgb_real, fake: &m.rgb_fake }),
        measures.as_ref().and_then(|m| match (&m.aux_real, &m.aux_fake) {
            (Some(r), Some(f)) => Some(StreamProbs { real: r, fake: f }),
            _ => None,
        }),
        l_c,
        cfg.lambda1,
    )?;
    Ok(StepOutput {
        report,
        codes_rgb: fwd.tape.value(fwd.fake_rgb).clone(),
        codes_aux: fwd.fake_aux.map(|v| fwd.tape.value(v).clone()),
    })
}

#[derive(Debug, Clone, Copy)]
struct WindowRef {
    seq: usize,
    start: usize,
}

fn gather_slice<E: Scalar>(
    data: &[SequenceSample],
    windows: &[WindowRef],
    t_off: usize,
    need_aux: bool,
    k: usize,
    prev: Option<&StepOutput<E>>,
) -> Result<FrameBatch<E>> {
    let n = windows.len();
    let first = &data[windows[0].seq];
    let hw = first.hw();
    let ca = first.aux_channels();
    let mut rgb = Vec::with_capacity(n * hw * hw * 3);
    let mut aux = Vec::with_capacity(if need_aux { n * hw * hw * ca } else { 0 });
    let mut labels = Vec::with_capacity(n);
    for w in windows {
        let s = &data[w.seq];
        let t = w.start + t_off;
        let rgb_len = hw * hw * 3;
        rgb.extend(
            s.rgb.data()[t * rgb_len..(t + 1) * rgb_len]
                .iter()
                .map(|&v| E::from_f64(v as f64)),
        );
        if need_aux {
            let aux_len = hw * hw * ca;
            aux.extend(
                s.aux.data()[t * aux_len..(t + 1) * aux_len]
                    .iter()
                    .map(|&v| E::from_f64(v as f64)),
            );
        }
        labels.push(s.labels[t].index());
    }
    let prev_rgb = match prev {
        Some(p) => p.codes_rgb.clone(),
        None => Tensor::zeros(vec![n, k]),
    };
    let prev_aux = if need_aux {
        Some(match prev.and_then(|p| p.codes_aux.clone()) {
            Some(t) => t,
            None => Tensor::zeros(vec![n, k]),
        })
    } else {
        None
    };
    Ok(FrameBatch {
        rgb: Tensor::new(vec![n, hw, hw, 3], rgb)?,
        aux: if need_aux { Some(Tensor::new(vec![n, hw, hw, ca], aux)?) } else { None },
        prev_rgb,
        prev_aux,
        labels,
    })
}

/// Mean of per-slice reports.
pub fn mean_report(reports: &[LossReport]) -> LossReport {
    let mean_opt = |f: &dyn Fn(&LossReport) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    LossReport {
        d1_loss: mean_opt(&|r| r.d1_loss),
        d2_loss: mean_opt(&|r| r.d2_loss),
        g1_adv: mean_opt(&|r| r.g1_adv),
        g2_adv: mean_opt(&|r| r.g2_adv),
        classifier_loss: mean_opt(&|r| r.classifier_loss),
        lambda1: reports.first().map(|r| r.lambda1).unwrap_or(0.0),
        coupled_total: reports.iter().map(|r| r.coupled_total).sum::<f64>()
            / reports.len().max(1) as f64,
    }
}

/// Train one epoch (1-based index) over shuffled recurrent windows.
pub fn train_one_epoch<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    data: &[SequenceSample],
    cfg: &TrainConfig,
    state: &mut TrainState<E>,
    epoch: u32,
) -> Result<EpochLogRecord>
where
    StandardNormal: Distribution<E>,
{
    let start_time = std::time::Instant::now();
    let lr = cfg.learning_rate_at(epoch);
    state.opt_g.set_learning_rate(lr);
    state.opt_d.set_learning_rate(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(cfg.seed, STREAM_EPOCH, epoch as u64));
    let wl = cfg.window_length;
    let max_offset = data
        .iter()
        .map(|s| s.frames().saturating_sub(wl))
        .min()
        .unwrap_or(0)
        .min(wl.saturating_sub(1));
    let offset = if max_offset > 0 { rng.gen_range(0..=max_offset) } else { 0 };
    let mut windows = Vec::new();
    for (si, s) in data.iter().enumerate() {
        let mut start = offset;
        while start + wl <= s.frames() {
            windows.push(WindowRef { seq: si, start });
            start += wl;
        }
    }
    for i in (1..windows.len()).rev() {
        windows.swap(i, rng.gen_range(0..=i));
    }
    let flags = cfg.variant.flags();
    let k = bundle.preset.k as usize;
    let mut reports = Vec::new();
    for chunk in windows.chunks(cfg.batch_size) {
        let mut prev: Option<StepOutput<E>> = None;
        for t in 0..wl {
            let batch = gather_slice(data, chunk, t, flags.has_aux, k, prev.as_ref())?;
            let out = train_step(bundle, &batch, cfg, state, &mut rng)?;
            reports.push(out.report.clone());
            prev = Some(out);
        }
    }
    state.completed_epochs = epoch;
    let mean = mean_report(&reports);
    Ok(EpochLogRecord {
        epoch,
        learning_rate: lr,
        d1_loss: mean.d1_loss,
        d2_loss: mean.d2_loss,
        g1_adv: mean.g1_adv,
        g2_adv: mean.g2_adv,
        classifier_loss: mean.classifier_loss,
        lambda1: mean.lambda1,
        coupled_total: mean.coupled_total,
        wall_secs: start_time.elapsed().as_secs_f64(),
    })
}

/// Validate inputs and run the whole schedule, invoking `on_epoch` after
/// each epoch (return false to stop early). Returns the final state and log.
pub fn train_sequences<E: Scalar>(
    bundle: &mut ModelBundle<E>,
    data: &[SequenceSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLogRecord) -> bool,
) -> Result<(TrainState<E>, Vec<EpochLogRecord>)>
where
    StandardNormal: Distribution<E>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("training dataset is empty".into()));
    }
    for (i, s) in data.iter().enumerate() {
        if s.frames() < cfg.window_length {
            return Err(Error::Usage(format!(
                "sequence {i} has {} frames, shorter than window_length {}",
                s.frames(),
                cfg.window_length
            )));
        }
    }
    let mut state = TrainState::new(cfg);
    let mut log = Vec::new();
    for epoch in 1..=cfg.total_epochs() {
        let entry = train_one_epoch(bundle, data, cfg, &mut state, epoch)?;
        let keep_going = on_epoch(&entry);
        log.push(entry);
        if !keep_going {
            break;
        }
    }
    Ok((state, log))
}

/// Bundle + optimizer moments + epoch counter, for bit-identical resume.
pub fn training_checkpoint<E: Scalar>(
    bundle: &ModelBundle<E>,
    state: &TrainState<E>,
) -> Result<Checkpoint> {
    let mut ckpt = bundle.to_checkpoint()?;
    for (prefix, opt) in [("opt_g", &state.opt_g), ("opt_d", &state.opt_d)] {
        for (name, m, v) in opt.export_moments() {
            let len = m.len();
            ckpt.push(&format!("{prefix}.m.{name}"), &Tensor::new(vec![len], m)?)?;
            ckpt.push(&format!("{prefix}.v.{name}"), &Tensor::new(vec![len], v)?)?;
        }
        ckpt.push(
            &format!("{prefix}.step"),
            &Tensor::scalar(E::from_f64(opt.step as f64)),
        )?;
    }
    ckpt.push(
        "trainer.epochs",
        &Tensor::scalar(E::from_f64(state.completed_epochs as f64)),
    )?;
    Ok(ckpt)
}

/// Restore optimizer state saved by [`training_checkpoint`]. The bundle
/// itself is loaded separately via `ModelBundle::load_from_checkpoint`.
pub fn restore_train_state<E: Scalar>(
    ckpt: &Checkpoint,
    cfg: &TrainConfig,
    bundle: &ModelBundle<E>,
) -> Result<TrainState<E>> {
    let mut state = TrainState::new(cfg);
    for (prefix, opt) in [("opt_g", &mut state.opt_g), ("opt_d", &mut state.opt_d)] {
        let mut moments = Vec::new();
        for name in bundle.param_names() {
            let m_name = format!("{prefix}.m.{name}");
            if ckpt.get_raw(&m_name).is_some() {
                let m = ckpt.get::<E>(&m_name)?;
                let v = ckpt.get::<E>(&format!("{prefix}.v.{name}"))?;
                moments.push((name.clone(), m.into_data(), v.into_data()));
            }
        }
        opt.import_moments(moments);
        opt.step = ckpt.get::<E>(&format!("{prefix}.step"))?.data()[0].to_f64() as u64;
    }
    state.completed_epochs = ckpt.get::<E>("trainer.epochs")?.data()[0].to_f64() as u32;
    Ok(state)
}
