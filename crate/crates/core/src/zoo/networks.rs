//! The four network families: action generators, context extractor,
//! discriminators, and the classifier tap head.

use super::layers::{ConvBlock, DenseLayer, MountedParams, ParamVisitor, ParamVisitorMut};
use super::preset::ArchPreset;
use crate::engine::{Mode, NoiseSpec, Scalar, Tape, Var};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Codes are kept in [0,255] externally; network inputs scale them down so
/// every concatenated feature is O(1).
pub const CODE_SCALE: f64 = 1.0 / 255.0;

fn conv_chain<E: Scalar, R: Rng>(
    prefix: &str,
    cin: usize,
    ladder: &[usize],
    first_bn: bool,
    rng: &mut R,
) -> Vec<ConvBlock<E>>
where
    StandardNormal: Distribution<E>,
{
    let mut blocks = Vec::with_capacity(ladder.len());
    let mut c = cin;
    for (i, &cout) in ladder.iter().enumerate() {
        let with_bn = first_bn || i > 0;
        blocks.push(ConvBlock::new(format!("{prefix}.conv{}", i + 1), c, cout, with_bn, rng));
        c = cout;
    }
    blocks
}

fn run_chain<E: Scalar>(
    blocks: &mut [ConvBlock<E>],
    tape: &mut Tape<E>,
    mut x: Var,
    mode: Mode,
    update_stats: bool,
    train_params: bool,
    mounted: &mut MountedParams,
) -> Result<Var> {
    for b in blocks.iter_mut() {
        x = b.forward(tape, x, mode, update_stats, train_params, mounted)?;
    }
    Ok(x)
}

/// Encoder generator: eight conv_BN_ReLU blocks, flatten, optional context
/// concat, then dense 256w -> 128w -> k with the noise dropout inside the
/// dense stack. The final layer is linear; its raw output is clamped to code
/// range downstream.
pub struct ActionGenerator<E: Scalar> {
    pub name: String,
    pub blocks: Vec<ConvBlock<E>>,
    pub fc1: DenseLayer<E>,
    pub fc2: DenseLayer<E>,
    pub fc3: DenseLayer<E>,
    pub context_dim: usize,
    pub noise: NoiseSpec,
}

pub struct GeneratorOut {
    pub raw: Var,
    /// Tapped activations: last conv block (flattened), first dense output,
    /// and the raw k-dim output.
    pub taps: [Var; 3],
}

impl<E: Scalar> ActionGenerator<E> {
    pub fn new<R: Rng>(
        name: &str,
        preset: &ArchPreset,
        in_channels: usize,
        context_dim: usize,
        noise: NoiseSpec,
        first_bn: bool,
        rng: &mut R,
    ) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        let ladder = preset.gen_conv_ladder();
        let blocks = conv_chain(name, in_channels, &ladder, first_bn, rng);
        let flat = preset.spatial_after(ladder.len()).pow(2) * ladder[ladder.len() - 1];
        let dense = preset.gen_dense_ladder();
        ActionGenerator {
            name: name.to_string(),
            blocks,
            fc1: DenseLayer::new(format!("{name}.fc1"), flat + context_dim, dense[0], rng),
            fc2: DenseLayer::new(format!("{name}.fc2"), dense[0], dense[1], rng),
            fc3: DenseLayer::new(format!("{name}.fc3"), dense[1], dense[2], rng),
            context_dim,
            noise,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].cin()
    }

    pub fn k(&self) -> usize {
        self.fc3.units()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng>(
        &mut self,
        tape: &mut Tape<E>,
        frame: Var,
        context: Option<Var>,
        mode: Mode,
        update_stats: bool,
        train_params: bool,
        mounted: &mut MountedParams,
        rng: &mut R,
    ) -> Result<GeneratorOut> {
        match (self.context_dim, context) {
            (0, Some(_)) => {
                return Err(Error::Usage(format!(
                    "{} was built without a context input",
                    self.name
                )))
            }
            (d, Some(c)) if d > 0 => {
                let s = tape.value(c).shape();
                if s.len() != 2 || s[1] != d {
                    return Err(Error::Dimension(format!(
                        "{} expects context [N,{d}], got {s:?}",
                        self.name
                    )));
                }
            }
            (d, None) if d > 0 => {
                return Err(Error::Usage(format!(
                    "{} requires a context vector",
                    self.name
                )))
            }
            _ => {}
        }
        let conv_out = run_chain(
            &mut self.blocks,
            tape,
            frame,
            mode,
            update_stats,
            train_params,
            mounted,
        )?;
        let flat = tape.flatten(conv_out)?;
        let fc_in = match context {
            Some(c) => tape.concat(&[flat, c])?,
            None => flat,
        };
        let noisy = |tape: &mut Tape<E>, x: Var, rng: &mut R, noise: &NoiseSpec| -> Result<Var> {
            let active = match mode {
                Mode::Train => true,
                Mode::Eval => noise.active_at_inference,
            };
            if active && noise.rate > 0.0 {
                tape.dropout(x, noise.rate, rng)
            } else {
                Ok(x)
            }
        };
        let d1 = self.fc1.forward(tape, fc_in, train_params, mounted)?;
        let a1 = tape.relu(d1);
        let x1 = noisy(tape, a1, rng, &self.noise)?;
        let d2 = self.fc2.forward(tape, x1, train_params, mounted)?;
        let a2 = tape.relu(d2);
        let x2 = noisy(tape, a2, rng, &self.noise)?;
        let raw = self.fc3.forward(tape, x2, train_params, mounted)?;
        Ok(GeneratorOut { raw, taps: [flat, a1, raw] })
    }

    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        for b in &self.blocks {
            b.visit(v);
        }
        self.fc1.visit(v);
        self.fc2.visit(v);
        self.fc3.visit(v);
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        for b in &mut self.blocks {
            b.visit_mut(v);
        }
        self.fc1.visit_mut(v);
        self.fc2.visit_mut(v);
        self.fc3.visit_mut(v);
    }
}

/// Context extractor: one five-block conv chain per available modality; the
/// flattened features concatenate with the previous action codes (scaled to
/// O(1)) and a linear layer produces the context embedding.
pub struct ContextExtractor<E: Scalar> {
    pub name: String,
    pub rgb_chain: Vec<ConvBlock<E>>,
    pub aux_chain: Option<Vec<ConvBlock<E>>>,
    pub fc: DenseLayer<E>,
    pub out_dim: usize,
    pub k: usize,
}

impl<E: Scalar> ContextExtractor<E> {
    pub fn new<R: Rng>(
        preset: &ArchPreset,
        two_stream: bool,
        first_bn: bool,
        rng: &mut R,
    ) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        let name = "ctx";
        let ladder = preset.ctx_conv_ladder();
        let rgb_chain = conv_chain(&format!("{name}.rgb"), preset.rgb_channels, &ladder, first_bn, rng);
        let aux_chain = two_stream
            .then(|| conv_chain(&format!("{name}.aux"), preset.aux_channels, &ladder, first_bn, rng));
        let flat = preset.spatial_after(ladder.len()).pow(2) * ladder[ladder.len() - 1];
        let k = preset.k as usize;
        let streams = if two_stream { 2 } else { 1 };
        let fc_in = flat * streams + k * streams;
        let out_dim = preset.context_dim();
        ContextExtractor {
            name: name.to_string(),
            rgb_chain,
            aux_chain,
            fc: DenseLayer::new(format!("{name}.fc"), fc_in, out_dim, rng),
            out_dim,
            k,
        }
    }

    fn check_code(&self, tape: &Tape<E>, code: Var) -> Result<()> {
        let s = tape.value(code).shape();
        if s.len() != 2 || s[1] != self.k {
            return Err(Error::Dimension(format!(
                "previous code must be [N,{}], got {s:?}",
                self.k
            )));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &mut self,
        tape: &mut Tape<E>,
        rgb: Var,
        aux: Option<Var>,
        prev_code_rgb: Var,
        prev_code_aux: Option<Var>,
        mode: Mode,
        update_stats: bool,
        train_params: bool,
        mounted: &mut MountedParams,
    ) -> Result<Var> {
        self.check_code(tape, prev_code_rgb)?;
        let rgb_out = run_chain(
            &mut self.rgb_chain,
            tape,
            rgb,
            mode,
            update_stats,
            train_params,
            mounted,
        )?;
        let rgb_flat = tape.flatten(rgb_out)?;
        let code_rgb = tape.scale(prev_code_rgb, E::from_f64(CODE_SCALE));
        let mut parts = vec![rgb_flat];
        if let Some(chain) = &mut self.aux_chain {
            let aux_frame = aux.ok_or_else(|| {
                Error::Usage("two-stream context extractor needs the auxiliary frame".into())
            })?;
            let aux_out = run_chain(chain, tape, aux_frame, mode, update_stats, train_params, mounted)?;
            let aux_flat = tape.flatten(aux_out)?;
            parts.push(aux_flat);
            let pc = prev_code_aux.ok_or_else(|| {
                Error::Usage("two-stream context extractor needs the auxiliary previous code".into())
            })?;
            self.check_code(tape, pc)?;
            parts.push(code_rgb);
            parts.push(tape.scale(pc, E::from_f64(CODE_SCALE)));
        } else {
            parts.push(code_rgb);
        }
        let cat = tape.concat(&parts)?;
        self.fc.forward(tape, cat, train_params, mounted)
    }

    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        for b in &self.rgb_chain {
            b.visit(v);
        }
        if let Some(chain) = &self.aux_chain {
            for b in chain {
                b.visit(v);
            }
        }
        self.fc.visit(v);
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        for b in &mut self.rgb_chain {
            b.visit_mut(v);
        }
        if let Some(chain) = &mut self.aux_chain {
            for b in chain {
                b.visit_mut(v);
            }
        }
        self.fc.visit_mut(v);
    }
}

/// Shallow discriminator: two conv_BN_ReLU blocks on the frame, flatten,
/// concat the (scaled) action code, one dense unit, logistic squashing.
pub struct Discriminator<E: Scalar> {
    pub name: String,
    pub blocks: Vec<ConvBlock<E>>,
    pub fc: DenseLayer<E>,
    pub k: usize,
}

impl<E: Scalar> Discriminator<E> {
    pub fn new<R: Rng>(
        name: &str,
        preset: &ArchPreset,
        in_channels: usize,
        first_bn: bool,
        rng: &mut R,
    ) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        let ladder = preset.disc_conv_ladder();
        let blocks = conv_chain(name, in_channels, &ladder, first_bn, rng);
        let flat = preset.spatial_after(ladder.len()).pow(2) * ladder[ladder.len() - 1];
        let k = preset.k as usize;
        Discriminator {
            name: name.to_string(),
            blocks,
            fc: DenseLayer::new(format!("{name}.fc"), flat + k, 1, rng),
            k,
        }
    }

    /// Probability in (0,1) that (frame, code) is a real pair.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &mut self,
        tape: &mut Tape<E>,
        frame: Var,
        code: Var,
        mode: Mode,
        update_stats: bool,
        train_params: bool,
        mounted: &mut MountedParams,
    ) -> Result<Var> {
        let s = tape.value(code).shape();
        if s.len() != 2 || s[1] != self.k {
            return Err(Error::Dimension(format!(
                "{} expects codes [N,{}], got {s:?}",
                self.name, self.k
            )));
        }
        let conv_out = run_chain(
            &mut self.blocks,
            tape,
            frame,
            mode,
            update_stats,
            train_params,
            mounted,
        )?;
        let flat = tape.flatten(conv_out)?;
        let scaled = tape.scale(code, E::from_f64(CODE_SCALE));
        let cat = tape.concat(&[flat, scaled])?;
        let logit = self.fc.forward(tape, cat, train_params, mounted)?;
        Ok(tape.sigmoid(logit))
    }

    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        for b in &self.blocks {
            b.visit(v);
        }
        self.fc.visit(v);
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        for b in &mut self.blocks {
            b.visit_mut(v);
        }
        self.fc.visit_mut(v);
    }
}

/// Softmax classifier over concatenated generator taps.
pub struct ClassifierHead<E: Scalar> {
    pub fc: DenseLayer<E>,
    pub expected_taps: usize,
}

impl<E: Scalar> ClassifierHead<E> {
    pub fn new<R: Rng>(input_dim: usize, k: usize, expected_taps: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        ClassifierHead {
            fc: DenseLayer::new("cls.fc".into(), input_dim, k, rng),
            expected_taps,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape<E>,
        taps: &[Var],
        train_params: bool,
        mounted: &mut MountedParams,
    ) -> Result<Var> {
        if taps.len() != self.expected_taps {
            return Err(Error::Usage(format!(
                "classifier expects {} taps, got {}",
                self.expected_taps,
                taps.len()
            )));
        }
        let flat: Result<Vec<Var>> = taps.iter().map(|&t| tape.flatten(t)).collect();
        let cat = tape.concat(&flat?)?;
        let logits = self.fc.forward(tape, cat, train_params, mounted)?;
        tape.softmax(logits)
    }

    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        self.fc.visit(v);
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        self.fc.visit_mut(v);
    }
}
