//! Parameterized layer blocks shared by all four network families.

use super::preset::{BN_EPS, BN_MOMENTUM};
use crate::engine::{Mode, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const INIT_STD: f64 = 0.02;

/// Parameter leaves mounted onto a tape during one forward pass, in
/// traversal order, so gradients can be routed back to named tensors.
#[derive(Default)]
pub struct MountedParams {
    pub entries: Vec<(String, Var)>,
}

impl MountedParams {
    fn mount<E: Scalar>(
        &mut self,
        tape: &mut Tape<E>,
        name: &str,
        tensor: &Tensor<E>,
        train: bool,
    ) -> Var {
        let var = tape.leaf_named(tensor.clone(), train, name);
        if train {
            self.entries.push((name.to_string(), var));
        }
        var
    }
}

pub struct BatchNorm<E: Scalar> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub batches_seen: u64,
    pub eps: f64,
    pub momentum: f64,
}

impl<E: Scalar> BatchNorm<E> {
    pub fn new<R: Rng>(channels: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        BatchNorm {
            gamma: Tensor::randn(vec![channels], E::one(), E::from_f64(INIT_STD), rng),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], E::one()),
            batches_seen: 0,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }
}

pub struct ConvBlock<E: Scalar> {
    pub name: String,
    pub w: Tensor<E>,
    /// Present only when the block has no batch norm (BN cancels a constant
    /// channel shift, so a bias there would be a dead parameter).
    pub bias: Option<Tensor<E>>,
    pub bn: Option<BatchNorm<E>>,
}

impl<E: Scalar> ConvBlock<E> {
    pub fn new<R: Rng>(name: String, cin: usize, cout: usize, with_bn: bool, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        ConvBlock {
            name,
            w: Tensor::randn(vec![4, 4, cin, cout], E::zero(), E::from_f64(INIT_STD), rng),
            bias: (!with_bn).then(|| Tensor::zeros(vec![cout])),
            bn: with_bn.then(|| BatchNorm::new(cout, rng)),
        }
    }

    pub fn cout(&self) -> usize {
        self.w.shape()[3]
    }

    pub fn cin(&self) -> usize {
        self.w.shape()[2]
    }

    /// conv -> (batch norm) -> relu.
    pub fn forward(
        &mut self,
        tape: &mut Tape<E>,
        x: Var,
        mode: Mode,
        update_stats: bool,
        train_params: bool,
        mounted: &mut MountedParams,
    ) -> Result<Var> {
        let w = mounted.mount(tape, &format!("{}.w", self.name), &self.w, train_params);
        let b = match &self.bias {
            Some(bias) => mounted.mount(tape, &format!("{}.b", self.name), bias, train_params),
            None => tape.leaf(Tensor::zeros(vec![self.cout()]), false),
        };
        let mut y = tape.conv2d(x, w, b)?;
        if let Some(bn) = &mut self.bn {
            let gamma = mounted.mount(tape, &format!("{}.bn.gamma", self.name), &bn.gamma, train_params);
            let beta = mounted.mount(tape, &format!("{}.bn.beta", self.name), &bn.beta, train_params);
            y = match mode {
                Mode::Train => {
                    let (out, mean, var) = tape.batch_norm_train(y, gamma, beta, bn.eps)?;
                    if update_stats {
                        let m = E::from_f64(bn.momentum);
                        let one_m = E::from_f64(1.0 - bn.momentum);
                        for ((rm, rv), (bm, bv)) in bn
                            .running_mean
                            .data_mut()
                            .iter_mut()
                            .zip(bn.running_var.data_mut().iter_mut())
                            .zip(mean.data().iter().zip(var.data()))
                        {
                            *rm = *rm * m + *bm * one_m;
                            *rv = *rv * m + *bv * one_m;
                        }
                        bn.batches_seen += 1;
                    }
                    out
                }
                Mode::Eval => {
                    if bn.batches_seen == 0 {
                        return Err(Error::State(format!(
                            "{}: eval-mode batch norm has no accumulated statistics",
                            self.name
                        )));
                    }
                    tape.batch_norm_eval(y, gamma, beta, &bn.running_mean, &bn.running_var, bn.eps)?
                }
            };
        }
        Ok(tape.relu(y))
    }
}

pub struct DenseLayer<E: Scalar> {
    pub name: String,
    pub w: Tensor<E>,
    pub b: Tensor<E>,
}

impl<E: Scalar> DenseLayer<E> {
    pub fn new<R: Rng>(name: String, input: usize, units: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        DenseLayer {
            name,
            w: Tensor::randn(vec![input, units], E::zero(), E::from_f64(INIT_STD), rng),
            b: Tensor::zeros(vec![units]),
        }
    }

    pub fn units(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn forward(
        &self,
        tape: &mut Tape<E>,
        x: Var,
        train_params: bool,
        mounted: &mut MountedParams,
    ) -> Result<Var> {
        let w = mounted.mount(tape, &format!("{}.w", self.name), &self.w, train_params);
        let b = mounted.mount(tape, &format!("{}.b", self.name), &self.b, train_params);
        tape.dense(x, w, b)
    }
}

/// Visitor plumbing shared by optimizers, checkpoints, and audits.
pub trait ParamVisitor<E: Scalar> {
    fn visit(&mut self, name: &str, tensor: &Tensor<E>);
}

pub trait ParamVisitorMut<E: Scalar> {
    fn visit(&mut self, name: &str, tensor: &mut Tensor<E>);
}

impl<E: Scalar, F: FnMut(&str, &Tensor<E>)> ParamVisitor<E> for F {
    fn visit(&mut self, name: &str, tensor: &Tensor<E>) {
        self(name, tensor)
    }
}

impl<E: Scalar, F: FnMut(&str, &mut Tensor<E>)> ParamVisitorMut<E> for F {
    fn visit(&mut self, name: &str, tensor: &mut Tensor<E>) {
        self(name, tensor)
    }
}

impl<E: Scalar> ConvBlock<E> {
    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        v.visit(&format!("{}.w", self.name), &self.w);
        if let Some(bias) = &self.bias {
            v.visit(&format!("{}.b", self.name), bias);
        }
        if let Some(bn) = &self.bn {
            v.visit(&format!("{}.bn.gamma", self.name), &bn.gamma);
            v.visit(&format!("{}.bn.beta", self.name), &bn.beta);
        }
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        v.visit(&format!("{}.w", self.name), &mut self.w);
        if let Some(bias) = &mut self.bias {
            v.visit(&format!("{}.b", self.name), bias);
        }
        if let Some(bn) = &mut self.bn {
            v.visit(&format!("{}.bn.gamma", self.name), &mut bn.gamma);
            v.visit(&format!("{}.bn.beta", self.name), &mut bn.beta);
        }
    }

    /// Non-trainable state (running statistics), included in checkpoints.
    pub fn visit_state<V: ParamVisitor<E>>(&self, v: &mut V) {
        if let Some(bn) = &self.bn {
            v.visit(&format!("{}.bn.running_mean", self.name), &bn.running_mean);
            v.visit(&format!("{}.bn.running_var", self.name), &bn.running_var);
            v.visit(
                &format!("{}.bn.count", self.name),
                &Tensor::scalar(E::from_f64(bn.batches_seen as f64)),
            );
        }
    }

    pub fn visit_state_mut(&mut self, f: &mut impl FnMut(&str) -> Result<Tensor<E>>) -> Result<()> {
        if let Some(bn) = &mut self.bn {
            bn.running_mean = f(&format!("{}.bn.running_mean", self.name))?;
            bn.running_var = f(&format!("{}.bn.running_var", self.name))?;
            let count = f(&format!("{}.bn.count", self.name))?;
            bn.batches_seen = count.data()[0].to_f64() as u64;
        }
        Ok(())
    }
}

impl<E: Scalar> DenseLayer<E> {
    pub fn visit<V: ParamVisitor<E>>(&self, v: &mut V) {
        v.visit(&format!("{}.w", self.name), &self.w);
        v.visit(&format!("{}.b", self.name), &self.b);
    }

    pub fn visit_mut<V: ParamVisitorMut<E>>(&mut self, v: &mut V) {
        v.visit(&format!("{}.w", self.name), &mut self.w);
        v.visit(&format!("{}.b", self.name), &mut self.b);
    }
}
