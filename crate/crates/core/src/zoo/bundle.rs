//! The wired network set for one ablation variant, with construction,
//! architecture audit, and checkpoint round-tripping.

use super::layers::{ParamVisitor, ParamVisitorMut};
use super::networks::{ActionGenerator, ClassifierHead, ContextExtractor, Discriminator};
use super::preset::{ArchPreset, LayerSpec, BN_EPS, BN_MOMENTUM};
use crate::engine::{NoiseSpec, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::io::{ArchAuditRecord, Checkpoint, LayerAudit, NetworkAudit};
use crate::seeding::derive_seed2;
use crate::trainer::variant::VariantId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

const STREAM_INIT: u64 = 0x1417;

/// Build-time knobs beyond the preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub noise: NoiseSpec,
    /// Batch norm on the first conv of each chain (on by default).
    pub first_bn: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { noise: NoiseSpec::default(), first_bn: true }
    }
}

pub struct ModelBundle<E: Scalar> {
    pub preset: ArchPreset,
    pub variant: VariantId,
    pub options: BuildOptions,
    pub g_rgb: ActionGenerator<E>,
    pub g_aux: Option<ActionGenerator<E>>,
    pub context: Option<ContextExtractor<E>>,
    pub d_rgb: Option<Discriminator<E>>,
    pub d_aux: Option<Discriminator<E>>,
    pub classifier: Option<ClassifierHead<E>>,
}

/// Allocate and initialize every network the variant calls for. Weights are
/// N(0, 0.02); batch-norm gains are N(1, 0.02).
pub fn build_bundle<E: Scalar>(
    preset: &ArchPreset,
    variant: VariantId,
    options: BuildOptions,
    seed: u64,
) -> Result<ModelBundle<E>>
where
    StandardNormal: Distribution<E>,
{
    preset.validate()?;
    options.noise.validate()?;
    let flags = variant.flags();
    let ctx_dim = if flags.has_context { preset.context_dim() } else { 0 };
    let net_rng = |idx: u64| ChaCha8Rng::seed_from_u64(derive_seed2(seed, STREAM_INIT, idx));
    let g_rgb = ActionGenerator::new(
        "g_rgb",
        preset,
        preset.rgb_channels,
        ctx_dim,
        options.noise,
        options.first_bn,
        &mut net_rng(0),
    );
    let g_aux = flags.has_aux.then(|| {
        ActionGenerator::new(
            "g_aux",
            preset,
            preset.aux_channels,
            ctx_dim,
            options.noise,
            options.first_bn,
            &mut net_rng(1),
        )
    });
    let context = flags.has_context.then(|| {
        ContextExtractor::new(preset, flags.has_aux, options.first_bn, &mut net_rng(2))
    });
    let d_rgb = flags
        .has_discriminators
        .then(|| Discriminator::new("d_rgb", preset, preset.rgb_channels, options.first_bn, &mut net_rng(3)));
    let d_aux = (flags.has_discriminators && flags.has_aux)
        .then(|| Discriminator::new("d_aux", preset, preset.aux_channels, options.first_bn, &mut net_rng(4)));
    let classifier = flags.has_classifier.then(|| {
        let ladder = preset.gen_conv_ladder();
        let flat = preset.spatial_after(ladder.len()).pow(2) * ladder[ladder.len() - 1];
        let per_gen = flat + preset.gen_dense_ladder()[0] + preset.k as usize;
        let taps = if variant.dual_tap_classifier() { 6 } else { 3 };
        let input = per_gen * (taps / 3);
        ClassifierHead::new(input, preset.k as usize, taps, &mut net_rng(5))
    });
    Ok(ModelBundle {
        preset: *preset,
        variant,
        options,
        g_rgb,
        g_aux,
        context,
        d_rgb,
        d_aux,
        classifier,
    })
}

impl<E: Scalar> ModelBundle<E> {
    pub fn visit_params<V: ParamVisitor<E>>(&self, v: &mut V) {
        self.g_rgb.visit(v);
        if let Some(g) = &self.g_aux {
            g.visit(v);
        }
        if let Some(c) = &self.context {
            c.visit(v);
        }
        if let Some(d) = &self.d_rgb {
            d.visit(v);
        }
        if let Some(d) = &self.d_aux {
            d.visit(v);
        }
        if let Some(c) = &self.classifier {
            c.visit(v);
        }
    }

    pub fn visit_params_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        self.g_rgb.visit_mut(v);
        if let Some(g) = &mut self.g_aux {
            g.visit_mut(v);
        }
        if let Some(c) = &mut self.context {
            c.visit_mut(v);
        }
        if let Some(d) = &mut self.d_rgb {
            d.visit_mut(v);
        }
        if let Some(d) = &mut self.d_aux {
            d.visit_mut(v);
        }
        if let Some(c) = &mut self.classifier {
            c.visit_mut(v);
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |n: &str, _: &Tensor<E>| names.push(n.to_string()));
        names
    }

    pub fn param_count(&self) -> u64 {
        let mut count = 0u64;
        self.visit_params(&mut |_: &str, t: &Tensor<E>| count += t.numel() as u64);
        count
    }

    /// Is this parameter part of a discriminator?
    pub fn is_discriminator_param(name: &str) -> bool {
        name.starts_with("d_rgb.") || name.starts_with("d_aux.")
    }

    /// Hash of all parameter bytes, for isolation checks.
    pub fn params_hash(&self, filter: impl Fn(&str) -> bool) -> [u8; 32] {
        let mut hasher = Sha256::new();
        self.visit_params(&mut |n: &str, t: &Tensor<E>| {
            if filter(n) {
                hasher.update(n.as_bytes());
                for v in t.data() {
                    hasher.update(v.to_le_bytes_vec());
                }
            }
        });
        hasher.finalize().into()
    }

    /// Stable hash of the architecture-relevant configuration, stored in
    /// checkpoints; mismatch on load is a warning, not an error.
    pub fn config_hash(&self) -> [u8; 32] {
        let desc = format!(
            "{}|{}|{}|{}|{}|{}|{}|{:.6}|{}|{}",
            self.preset.name,
            self.preset.input_hw,
            self.preset.width_num,
            self.preset.width_den,
            self.preset.k,
            self.preset.aux_channels,
            self.variant,
            self.options.noise.rate,
            self.options.noise.active_at_inference,
            self.options.first_bn,
        );
        Sha256::digest(desc.as_bytes()).into()
    }

    fn visit_state(&self, v: &mut impl ParamVisitor<E>) {
        for b in &self.g_rgb.blocks {
            b.visit_state(v);
        }
        if let Some(g) = &self.g_aux {
            for b in &g.blocks {
                b.visit_state(v);
            }
        }
        if let Some(c) = &self.context {
            for b in &c.rgb_chain {
                b.visit_state(v);
            }
            if let Some(chain) = &c.aux_chain {
                for b in chain {
                    b.visit_state(v);
                }
            }
        }
        if let Some(d) = &self.d_rgb {
            for b in &d.blocks {
                b.visit_state(v);
            }
        }
        if let Some(d) = &self.d_aux {
            for b in &d.blocks {
                b.visit_state(v);
            }
        }
    }

    /// All parameters plus batch-norm state, in deterministic order.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(self.config_hash());
        let mut err = None;
        self.visit_params(&mut |n: &str, t: &Tensor<E>| {
            if err.is_none() {
                if let Err(e) = ckpt.push(n, t) {
                    err = Some(e);
                }
            }
        });
        self.visit_state(&mut |n: &str, t: &Tensor<E>| {
            if err.is_none() {
                if let Err(e) = ckpt.push(n, t) {
                    err = Some(e);
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(ckpt),
        }
    }

    /// Load parameters and batch-norm state from a checkpoint. Missing
    /// tensors are an incompatibility error listing every absent name; a
    /// config-hash mismatch only produces a warning flag.
    pub fn load_from_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<LoadOutcome> {
        let mut required = self.param_names();
        self.visit_state(&mut |n: &str, _: &Tensor<E>| required.push(n.to_string()));
        let missing = ckpt.missing_from(&required);
        if !missing.is_empty() {
            return Err(Error::Incompatibility(format!(
                "checkpoint is missing {} tensors: {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        let mut failure: Option<Error> = None;
        self.visit_params_mut(&mut |n: &str, t: &mut Tensor<E>| {
            if failure.is_some() {
                return;
            }
            match ckpt.get::<E>(n) {
                Ok(loaded) if loaded.shape() == t.shape() => *t = loaded,
                Ok(loaded) => {
                    failure = Some(Error::Incompatibility(format!(
                        "tensor {n} has shape {:?}, expected {:?}",
                        loaded.shape(),
                        t.shape()
                    )))
                }
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        self.load_state(ckpt)?;
        Ok(LoadOutcome { config_hash_mismatch: ckpt.config_hash != self.config_hash() })
    }

    fn load_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let mut load = |name: &str| ckpt.get::<E>(name);
        for b in &mut self.g_rgb.blocks {
            b.visit_state_mut(&mut load)?;
        }
        if let Some(g) = &mut self.g_aux {
            for b in &mut g.blocks {
                b.visit_state_mut(&mut load)?;
            }
        }
        if let Some(c) = &mut self.context {
            for b in &mut c.rgb_chain {
                b.visit_state_mut(&mut load)?;
            }
            if let Some(chain) = &mut c.aux_chain {
                for b in chain {
                    b.visit_state_mut(&mut load)?;
                }
            }
        }
        if let Some(d) = &mut self.d_rgb {
            for b in &mut d.blocks {
                b.visit_state_mut(&mut load)?;
            }
        }
        if let Some(d) = &mut self.d_aux {
            for b in &mut d.blocks {
                b.visit_state_mut(&mut load)?;
            }
        }
        Ok(())
    }

    /// Layer-by-layer description of what was actually instantiated.
    pub fn audit(&self) -> ArchAuditRecord {
        let mut networks = Vec::new();
        let conv_audit = |blocks: &Vec<super::layers::ConvBlock<E>>| -> Vec<LayerAudit> {
            let mut layers = Vec::new();
            for b in blocks {
                let params = b.w.numel()
                    + b.bias.as_ref().map_or(0, |t| t.numel())
                    + b.bn.as_ref().map_or(0, |bn| bn.gamma.numel() + bn.beta.numel());
                layers.push(LayerAudit {
                    kind: "conv2d".into(),
                    detail: format!("4x4/2 {}->{}", b.cin(), b.cout()),
                    params: b.w.numel() as u64 + b.bias.as_ref().map_or(0, |t| t.numel() as u64),
                });
                if b.bn.is_some() {
                    layers.push(LayerAudit {
                        kind: "batch_norm".into(),
                        detail: format!("{}ch", b.cout()),
                        params: 2 * b.cout() as u64,
                    });
                }
                layers.push(LayerAudit { kind: "relu".into(), detail: String::new(), params: 0 });
                let _ = params;
            }
            layers
        };
        let dense_audit = |d: &super::layers::DenseLayer<E>| LayerAudit {
            kind: "dense".into(),
            detail: format!("{}->{}", d.input_dim(), d.units()),
            params: (d.w.numel() + d.b.numel()) as u64,
        };
        let gen_audit = |g: &ActionGenerator<E>| {
            let mut layers = conv_audit(&g.blocks);
            layers.push(LayerAudit { kind: "flatten".into(), detail: String::new(), params: 0 });
            if g.context_dim > 0 {
                layers.push(LayerAudit {
                    kind: "concat".into(),
                    detail: format!("+context[{}]", g.context_dim),
                    params: 0,
                });
            }
            for (i, fc) in [&g.fc1, &g.fc2, &g.fc3].into_iter().enumerate() {
                layers.push(dense_audit(fc));
                if i < 2 {
                    layers.push(LayerAudit { kind: "relu".into(), detail: String::new(), params: 0 });
                    if g.noise.rate > 0.0 {
                        layers.push(LayerAudit {
                            kind: "dropout".into(),
                            detail: format!("{:.2}", g.noise.rate),
                            params: 0,
                        });
                    }
                }
            }
            let params: u64 = {
                let mut c = 0u64;
                g.visit(&mut |_: &str, t: &Tensor<E>| c += t.numel() as u64);
                c
            };
            (layers, params)
        };
        let (layers, params) = gen_audit(&self.g_rgb);
        networks.push(NetworkAudit { name: "g_rgb".into(), layers, params });
        if let Some(g) = &self.g_aux {
            let (layers, params) = gen_audit(g);
            networks.push(NetworkAudit { name: "g_aux".into(), layers, params });
        }
        if let Some(c) = &self.context {
            let mut layers = conv_audit(&c.rgb_chain);
            if let Some(chain) = &c.aux_chain {
                layers.extend(conv_audit(chain));
            }
            layers.push(LayerAudit { kind: "flatten".into(), detail: String::new(), params: 0 });
            layers.push(LayerAudit {
                kind: "concat".into(),
                detail: "+prev codes".into(),
                params: 0,
            });
            layers.push(dense_audit(&c.fc));
            let mut params = 0u64;
            c.visit(&mut |_: &str, t: &Tensor<E>| params += t.numel() as u64);
            networks.push(NetworkAudit { name: "ctx".into(), layers, params });
        }
        for d in [self.d_rgb.as_ref(), self.d_aux.as_ref()].into_iter().flatten() {
            let mut layers = conv_audit(&d.blocks);
            layers.push(LayerAudit { kind: "flatten".into(), detail: String::new(), params: 0 });
            layers.push(LayerAudit { kind: "concat".into(), detail: "+code".into(), params: 0 });
            layers.push(dense_audit(&d.fc));
            let mut params = 0u64;
            d.visit(&mut |_: &str, t: &Tensor<E>| params += t.numel() as u64);
            networks.push(NetworkAudit { name: d.name.clone(), layers, params });
        }
        if let Some(c) = &self.classifier {
            let layers = vec![
                LayerAudit {
                    kind: "concat".into(),
                    detail: format!("{} taps", c.expected_taps),
                    params: 0,
                },
                dense_audit(&c.fc),
                LayerAudit { kind: "softmax".into(), detail: String::new(), params: 0 },
            ];
            let mut params = 0u64;
            c.visit(&mut |_: &str, t: &Tensor<E>| params += t.numel() as u64);
            networks.push(NetworkAudit { name: "cls".into(), layers, params });
        }
        ArchAuditRecord {
            preset: self.preset.name.to_string(),
            variant: self.variant.to_string(),
            networks,
            total_params: self.param_count(),
        }
    }

    /// Conv ladders as instantiated, for comparison with the preset.
    pub fn instantiated_ladders(&self) -> Vec<(String, Vec<usize>)> {
        let chain = |blocks: &Vec<super::layers::ConvBlock<E>>| -> Vec<usize> {
            blocks.iter().map(|b| b.cout()).collect()
        };
        let mut out = vec![("g_rgb".to_string(), chain(&self.g_rgb.blocks))];
        if let Some(g) = &self.g_aux {
            out.push(("g_aux".into(), chain(&g.blocks)));
        }
        if let Some(c) = &self.context {
            out.push(("ctx.rgb".into(), chain(&c.rgb_chain)));
            if let Some(a) = &c.aux_chain {
                out.push(("ctx.aux".into(), chain(a)));
            }
        }
        if let Some(d) = &self.d_rgb {
            out.push(("d_rgb".into(), chain(&d.blocks)));
        }
        if let Some(d) = &self.d_aux {
            out.push(("d_aux".into(), chain(&d.blocks)));
        }
        out
    }

    /// Declared layer stack of the rgb generator (for the audit tests).
    pub fn declared_generator_stack(preset: &ArchPreset, with_context: bool, noise_rate: f64) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for &c in &preset.gen_conv_ladder() {
            out.push(LayerSpec::conv(c));
            out.push(LayerSpec::BatchNorm { eps: BN_EPS, momentum: BN_MOMENTUM });
            out.push(LayerSpec::Relu);
        }
        out.push(LayerSpec::Flatten);
        if with_context {
            out.push(LayerSpec::Concat);
        }
        let dense = preset.gen_dense_ladder();
        for (i, &u) in dense.iter().enumerate() {
            out.push(LayerSpec::Dense { units: u });
            if i < 2 {
                out.push(LayerSpec::Relu);
                if noise_rate > 0.0 {
                    out.push(LayerSpec::Dropout { rate: noise_rate });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOutcome {
    pub config_hash_mismatch: bool,
}
