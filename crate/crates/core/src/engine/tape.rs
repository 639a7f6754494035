//! Reverse-mode autodiff over a linear tape of recorded operations.
//!
//! Values are immutable once recorded; gradients live in a parallel buffer
//! so backward can read node values while accumulating input gradients.
//! Reductions accumulate in f64 regardless of the element type.

use super::conv::{col2im_acc, im2col, ConvGeom, KERNEL};
use super::matmul::{mm_acc, mm_at_acc, transpose};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::Rng;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<E: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<E>,
    },
    BnTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<E>,
        inv_std: Vec<f64>,
    },
    BnEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu {
        x: Var,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Softmax {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<u8>,
        scale: E,
    },
    Reshape {
        x: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    Sigmoid {
        x: Var,
    },
    LogClamped {
        x: Var,
        lo: f64,
        hi: f64,
    },
    OneMinus {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: E,
    },
    MeanAll {
        x: Var,
    },
    SumAll {
        x: Var,
    },
    NllProb {
        probs: Var,
        classes: Vec<usize>,
        lo: f64,
    },
    ClampRange {
        x: Var,
        lo: E,
        hi: E,
    },
}

impl<E: Scalar> Op<E> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::BnTrain { .. } => "batch_norm(train)",
            Op::BnEval { .. } => "batch_norm(eval)",
            Op::Relu { .. } => "relu",
            Op::Dense { .. } => "dense",
            Op::Softmax { .. } => "softmax",
            Op::Dropout { .. } => "dropout",
            Op::Reshape { .. } => "reshape",
            Op::Concat { .. } => "concat",
            Op::Sigmoid { .. } => "sigmoid",
            Op::LogClamped { .. } => "log",
            Op::OneMinus { .. } => "one_minus",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::MeanAll { .. } => "mean",
            Op::SumAll { .. } => "sum",
            Op::NllProb { .. } => "nll",
            Op::ClampRange { .. } => "clamp",
        }
    }
}

struct Node<E: Scalar> {
    value: Tensor<E>,
    requires: bool,
    op: Op<E>,
    label: Option<String>,
}

/// Recorded computation. One tape per forward/backward cycle.
pub struct Tape<E: Scalar> {
    nodes: Vec<Node<E>>,
    grads: Vec<Option<Vec<E>>>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<E>, requires: bool, op: Op<E>) -> Var {
        self.nodes.push(Node {
            value,
            requires,
            op,
            label: None,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.iter_mut() {
            *g = None;
        }
    }

    /// First node (in creation order) holding a non-finite element.
    pub fn first_nonfinite(&self) -> Option<(usize, String)> {
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.value.all_finite() {
                let what = node
                    .label
                    .clone()
                    .unwrap_or_else(|| format!("{} #{i}", node.op.name()));
                return Some((i, what));
            }
        }
        None
    }

    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn leaf_named(&mut self, value: Tensor<E>, requires_grad: bool, label: &str) -> Var {
        let v = self.push(value, requires_grad, Op::Leaf);
        self.nodes[v.0].label = Some(label.to_string());
        v
    }

    /// New leaf sharing the value of `v` but cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, false, Op::Leaf)
    }

    // ---- forward ops ------------------------------------------------------

    /// 4x4 stride-2 convolution over NHWC input with [4,4,cin,cout] filters.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        let bs = self.nodes[b.0].value.shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::Dimension(format!("conv2d input must be NHWC, got {xs:?}")));
        }
        if ws.len() != 4 || ws[0] != KERNEL || ws[1] != KERNEL {
            return Err(Error::Dimension(format!("conv2d filters must be 4x4xCinxCout, got {ws:?}")));
        }
        if xs[3] != ws[2] {
            return Err(Error::Dimension(format!(
                "conv2d channel mismatch: input has {}, filters expect {}",
                xs[3], ws[2]
            )));
        }
        if bs != [ws[3]] {
            return Err(Error::Dimension(format!("conv2d bias must be [{}], got {bs:?}", ws[3])));
        }
        let geom = ConvGeom::new(xs[0], xs[1], xs[2], xs[3], ws[3]);
        let cols = im2col(self.nodes[x.0].value.data(), &geom);
        let rows = geom.rows();
        let mut out = vec![E::zero(); rows * geom.cout];
        mm_acc(
            &cols,
            self.nodes[w.0].value.data(),
            &mut out,
            rows,
            geom.patch(),
            geom.cout,
        );
        let bias = self.nodes[b.0].value.data();
        for orow in out.chunks_exact_mut(geom.cout) {
            for (o, &bv) in orow.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let requires = self.req(x) || self.req(w) || self.req(b);
        let value = Tensor::new(vec![geom.n, geom.out_h, geom.out_w, geom.cout], out)?;
        let keep_cols = if requires { cols } else { Vec::new() };
        Ok(self.push(value, requires, Op::Conv2d { x, w, b, geom, cols: keep_cols }))
    }

    /// Train-mode batch norm over NHWC input, normalizing per channel.
    /// Returns the node plus the batch mean/variance used, so the caller can
    /// maintain running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Tensor<E>, Tensor<E>)> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::Dimension(format!("batch_norm input must be NHWC, got {xs:?}")));
        }
        let c = xs[3];
        if self.nodes[gamma.0].value.shape() != [c] || self.nodes[beta.0].value.shape() != [c] {
            return Err(Error::Dimension("batch_norm gamma/beta must be length-C".into()));
        }
        let data = self.nodes[x.0].value.data();
        let m = xs[0] * xs[1] * xs[2];
        let mut mean = vec![0.0f64; c];
        for row in data.chunks_exact(c) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v.to_f64();
            }
        }
        for v in mean.iter_mut() {
            *v /= m as f64;
        }
        let mut var = vec![0.0f64; c];
        for row in data.chunks_exact(c) {
            for ((acc, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.to_f64() - mu;
                *acc += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= m as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let mut xhat = vec![E::zero(); data.len()];
        let mut out = vec![E::zero(); data.len()];
        for (row_i, row) in data.chunks_exact(c).enumerate() {
            let base = row_i * c;
            for (j, &v) in row.iter().enumerate() {
                let xh = (v.to_f64() - mean[j]) * inv_std[j];
                xhat[base + j] = E::from_f64(xh);
                out[base + j] = E::from_f64(xh * g[j].to_f64() + bt[j].to_f64());
            }
        }
        let requires = self.req(x) || self.req(gamma) || self.req(beta);
        let value = Tensor::new(xs, out)?;
        let mean_t = Tensor::new(vec![c], mean.iter().map(|&v| E::from_f64(v)).collect())?;
        let var_t = Tensor::new(vec![c], var.iter().map(|&v| E::from_f64(v)).collect())?;
        let keep_xhat = if requires { xhat } else { Vec::new() };
        let node = self.push(
            value,
            requires,
            Op::BnTrain { x, gamma, beta, xhat: keep_xhat, inv_std },
        );
        Ok((node, mean_t, var_t))
    }

    /// Eval-mode batch norm with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &Tensor<E>,
        var: &Tensor<E>,
        eps: f64,
    ) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::Dimension(format!("batch_norm input must be NHWC, got {xs:?}")));
        }
        let c = xs[3];
        if mean.shape() != [c] || var.shape() != [c] {
            return Err(Error::Dimension("batch_norm running stats must be length-C".into()));
        }
        let inv_std: Vec<f64> = var.data().iter().map(|v| 1.0 / (v.to_f64() + eps).sqrt()).collect();
        let mean_f: Vec<f64> = mean.data().iter().map(|v| v.to_f64()).collect();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let data = self.nodes[x.0].value.data();
        let mut out = vec![E::zero(); data.len()];
        for (row_i, row) in data.chunks_exact(c).enumerate() {
            let base = row_i * c;
            for (j, &v) in row.iter().enumerate() {
                let xh = (v.to_f64() - mean_f[j]) * inv_std[j];
                out[base + j] = E::from_f64(xh * g[j].to_f64() + bt[j].to_f64());
            }
        }
        let requires = self.req(x) || self.req(gamma) || self.req(beta);
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, requires, Op::BnEval { x, gamma, beta, mean: mean_f, inv_std }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0]
                .value
                .data()
                .iter()
                .map(|&v| v.max_s(E::zero()))
                .collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::Relu { x })
    }

    /// y = x·w + b for x:[N,D], w:[D,U], b:[U].
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        let bs = self.nodes[b.0].value.shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 {
            return Err(Error::Dimension(format!("dense expects 2-d input/weights, got {xs:?} and {ws:?}")));
        }
        if xs[1] != ws[0] {
            return Err(Error::Dimension(format!(
                "dense inner dimensions disagree: {} vs {}",
                xs[1], ws[0]
            )));
        }
        if bs != [ws[1]] {
            return Err(Error::Dimension(format!("dense bias must be [{}], got {bs:?}", ws[1])));
        }
        let (n, d, u) = (xs[0], xs[1], ws[1]);
        let mut out = vec![E::zero(); n * u];
        mm_acc(
            self.nodes[x.0].value.data(),
            self.nodes[w.0].value.data(),
            &mut out,
            n,
            d,
            u,
        );
        let bias = self.nodes[b.0].value.data();
        for row in out.chunks_exact_mut(u) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let requires = self.req(x) || self.req(w) || self.req(b);
        let value = Tensor::new(vec![n, u], out)?;
        Ok(self.push(value, requires, Op::Dense { x, w, b }))
    }

    /// Row-wise softmax for [N,K], stabilized by max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        if xs.len() != 2 {
            return Err(Error::Dimension(format!("softmax expects [N,K], got {xs:?}")));
        }
        let k = xs[1];
        let data = self.nodes[x.0].value.data();
        let mut out = vec![E::zero(); data.len()];
        for (row_i, row) in data.chunks_exact(k).enumerate() {
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.to_f64()));
            let mut denom = 0.0f64;
            let base = row_i * k;
            for (j, &v) in row.iter().enumerate() {
                let e = (v.to_f64() - mx).exp();
                out[base + j] = E::from_f64(e);
                denom += e;
            }
            for o in &mut out[base..base + k] {
                *o = E::from_f64(o.to_f64() / denom);
            }
        }
        let requires = self.req(x);
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, requires, Op::Softmax { x }))
    }

    /// Inverted dropout: zero each element with probability `rate`, scale
    /// survivors by 1/(1-rate). `rate == 0` is the identity.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate must be in [0,1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let n = self.nodes[x.0].value.numel();
        let mask: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() >= rate)).collect();
        let scale = E::from_f64(1.0 / (1.0 - rate));
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0]
                .value
                .data()
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| if m == 1 { v * scale } else { E::zero() })
                .collect(),
        )?;
        let requires = self.req(x);
        Ok(self.push(value, requires, Op::Dropout { x, mask, scale }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.nodes[x.0].value.clone().reshaped(shape)?;
        let requires = self.req(x);
        Ok(self.push(value, requires, Op::Reshape { x }))
    }

    /// Flatten [N, ...] to [N, rest].
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.shape().to_vec();
        if s.is_empty() {
            return Err(Error::Dimension("flatten needs at least one axis".into()));
        }
        let rest: usize = s[1..].iter().product();
        self.reshape(x, vec![s[0], rest])
    }

    /// Concatenate [N,D_i] matrices along the feature axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Usage("concat needs at least one input".into()));
        }
        let n = self.nodes[xs[0].0].value.shape()[0];
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.nodes[v.0].value.shape();
            if s.len() != 2 || s[0] != n {
                return Err(Error::Dimension(format!(
                    "concat expects [N,D] inputs with shared N={n}, got {s:?}"
                )));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![E::zero(); n * total];
        let mut offset = 0;
        for (&v, &wd) in xs.iter().zip(&widths) {
            let data = self.nodes[v.0].value.data();
            for row in 0..n {
                out[row * total + offset..row * total + offset + wd]
                    .copy_from_slice(&data[row * wd..(row + 1) * wd]);
            }
            offset += wd;
        }
        let requires = xs.iter().any(|&v| self.req(v));
        let value = Tensor::new(vec![n, total], out)?;
        Ok(self.push(value, requires, Op::Concat { xs: xs.to_vec() }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0]
                .value
                .data()
                .iter()
                .map(|&v| {
                    let xf = v.to_f64();
                    let y = if xf >= 0.0 {
                        1.0 / (1.0 + (-xf).exp())
                    } else {
                        let e = xf.exp();
                        e / (1.0 + e)
                    };
                    E::from_f64(y)
                })
                .collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::Sigmoid { x })
    }

    /// ln(clamp(x, lo, hi)); gradient is zero in the clamped regions.
    pub fn log_clamped(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0]
                .value
                .data()
                .iter()
                .map(|&v| E::from_f64(v.to_f64().clamp(lo, hi).ln()))
                .collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::LogClamped { x, lo, hi })
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0].value.data().iter().map(|&v| E::one() - v).collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::OneMinus { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(Error::Dimension("add expects identical shapes".into()));
        }
        let value = Tensor::new(
            self.nodes[a.0].value.shape().to_vec(),
            self.nodes[a.0]
                .value
                .data()
                .iter()
                .zip(self.nodes[b.0].value.data())
                .map(|(&x, &y)| x + y)
                .collect(),
        )?;
        let requires = self.req(a) || self.req(b);
        Ok(self.push(value, requires, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(Error::Dimension("mul expects identical shapes".into()));
        }
        let value = Tensor::new(
            self.nodes[a.0].value.shape().to_vec(),
            self.nodes[a.0]
                .value
                .data()
                .iter()
                .zip(self.nodes[b.0].value.data())
                .map(|(&x, &y)| x * y)
                .collect(),
        )?;
        let requires = self.req(a) || self.req(b);
        Ok(self.push(value, requires, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: E) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0].value.data().iter().map(|&v| v * c).collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::Scale { x, c })
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let data = self.nodes[x.0].value.data();
        let sum: f64 = data.iter().map(|v| v.to_f64()).sum();
        let value = Tensor::scalar(E::from_f64(sum / data.len() as f64));
        let requires = self.req(x);
        self.push(value, requires, Op::MeanAll { x })
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let data = self.nodes[x.0].value.data();
        let sum: f64 = data.iter().map(|v| v.to_f64()).sum();
        let value = Tensor::scalar(E::from_f64(sum));
        let requires = self.req(x);
        self.push(value, requires, Op::SumAll { x })
    }

    /// Mean negative log-likelihood of the given classes under row-wise
    /// probability vectors, clamping probabilities at `lo` before the log.
    pub fn nll_prob(&mut self, probs: Var, classes: &[usize], lo: f64) -> Result<Var> {
        let s = self.nodes[probs.0].value.shape().to_vec();
        if s.len() != 2 || s[0] != classes.len() {
            return Err(Error::Dimension(format!(
                "nll expects [N,K] probabilities with N={} classes, got {s:?}",
                classes.len()
            )));
        }
        let k = s[1];
        let data = self.nodes[probs.0].value.data();
        let mut acc = 0.0f64;
        for (i, &c) in classes.iter().enumerate() {
            if c >= k {
                return Err(Error::Parameter(format!("class {c} out of range for k={k}")));
            }
            acc -= data[i * k + c].to_f64().max(lo).ln();
        }
        let value = Tensor::scalar(E::from_f64(acc / classes.len() as f64));
        let requires = self.req(probs);
        Ok(self.push(
            value,
            requires,
            Op::NllProb { probs, classes: classes.to_vec(), lo },
        ))
    }

    /// Elementwise clamp to [lo, hi]; gradient passes through inside the range.
    pub fn clamp_range(&mut self, x: Var, lo: E, hi: E) -> Var {
        let value = Tensor::new(
            self.nodes[x.0].value.shape().to_vec(),
            self.nodes[x.0]
                .value
                .data()
                .iter()
                .map(|&v| v.max_s(lo).min_s(hi))
                .collect(),
        )
        .expect("same shape");
        let requires = self.req(x);
        self.push(value, requires, Op::ClampRange { x, lo, hi })
    }

    // ---- backward ---------------------------------------------------------

    /// Populate gradients of everything the scalar `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.grads[loss.0]
            .get_or_insert_with(|| vec![E::zero(); 1])[0] += E::one();
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc_grad(grads: &mut [Option<Vec<E>>], v: Var, len: usize, f: impl FnOnce(&mut [E])) {
        let buf = grads[v.0].get_or_insert_with(|| vec![E::zero(); len]);
        f(buf);
    }

    fn propagate(&mut self, i: usize, g: &[E]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let need = |v: Var| nodes[v.0].requires;
        let numel = |v: Var| nodes[v.0].value.numel();
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let rows = geom.rows();
                let patch = geom.patch();
                if need(*b) {
                    Self::acc_grad(grads, *b, geom.cout, |db| {
                        for grow in g.chunks_exact(geom.cout) {
                            for (d, &gv) in db.iter_mut().zip(grow) {
                                *d += gv;
                            }
                        }
                    });
                }
                if need(*w) {
                    Self::acc_grad(grads, *w, patch * geom.cout, |dw| {
                        mm_at_acc(cols, g, dw, rows, patch, geom.cout);
                    });
                }
                if need(*x) {
                    let wt = transpose(nodes[w.0].value.data(), patch, geom.cout);
                    let mut dcols = vec![E::zero(); rows * patch];
                    mm_acc(g, &wt, &mut dcols, rows, geom.cout, patch);
                    Self::acc_grad(grads, *x, numel(*x), |dx| {
                        col2im_acc(&dcols, geom, dx);
                    });
                }
            }
            Op::BnTrain { x, gamma, beta, xhat, inv_std } => {
                let c = inv_std.len();
                let m = numel(*x) / c;
                let gamma_v = nodes[gamma.0].value.data();
                if need(*beta) {
                    Self::acc_grad(grads, *beta, c, |db| {
                        let mut acc = vec![0.0f64; c];
                        for grow in g.chunks_exact(c) {
                            for (a, &gv) in acc.iter_mut().zip(grow) {
                                *a += gv.to_f64();
                            }
                        }
                        for (d, a) in db.iter_mut().zip(acc) {
                            *d += E::from_f64(a);
                        }
                    });
                }
                if need(*gamma) {
                    Self::acc_grad(grads, *gamma, c, |dg| {
                        let mut acc = vec![0.0f64; c];
                        for (grow, xrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                            for ((a, &gv), &xh) in acc.iter_mut().zip(grow).zip(xrow) {
                                *a += gv.to_f64() * xh.to_f64();
                            }
                        }
                        for (d, a) in dg.iter_mut().zip(acc) {
                            *d += E::from_f64(a);
                        }
                    });
                }
                if need(*x) {
                    // dx = gamma*inv_std*(dy - mean(dy) - xhat*mean(dy*xhat))
                    let mut mean_dy = vec![0.0f64; c];
                    let mut mean_dyx = vec![0.0f64; c];
                    for (grow, xrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for ((j, &gv), &xh) in grow.iter().enumerate().zip(xrow) {
                            mean_dy[j] += gv.to_f64();
                            mean_dyx[j] += gv.to_f64() * xh.to_f64();
                        }
                    }
                    for v in mean_dy.iter_mut() {
                        *v /= m as f64;
                    }
                    for v in mean_dyx.iter_mut() {
                        *v /= m as f64;
                    }
                    Self::acc_grad(grads, *x, numel(*x), |dx| {
                        for ((grow, xrow), dxrow) in g
                            .chunks_exact(c)
                            .zip(xhat.chunks_exact(c))
                            .zip(dx.chunks_exact_mut(c))
                        {
                            for j in 0..c {
                                let t = grow[j].to_f64() - mean_dy[j]
                                    - xrow[j].to_f64() * mean_dyx[j];
                                dxrow[j] += E::from_f64(gamma_v[j].to_f64() * inv_std[j] * t);
                            }
                        }
                    });
                }
            }
            Op::BnEval { x, gamma, beta, mean, inv_std } => {
                let c = inv_std.len();
                let gamma_v = nodes[gamma.0].value.data();
                if need(*beta) {
                    Self::acc_grad(grads, *beta, c, |db| {
                        let mut acc = vec![0.0f64; c];
                        for grow in g.chunks_exact(c) {
                            for (a, &gv) in acc.iter_mut().zip(grow) {
                                *a += gv.to_f64();
                            }
                        }
                        for (d, a) in db.iter_mut().zip(acc) {
                            *d += E::from_f64(a);
                        }
                    });
                }
                if need(*gamma) {
                    let xv = nodes[x.0].value.data();
                    Self::acc_grad(grads, *gamma, c, |dg| {
                        let mut acc = vec![0.0f64; c];
                        for (grow, xrow) in g.chunks_exact(c).zip(xv.chunks_exact(c)) {
                            for j in 0..c {
                                let xh = (xrow[j].to_f64() - mean[j]) * inv_std[j];
                                acc[j] += grow[j].to_f64() * xh;
                            }
                        }
                        for (d, a) in dg.iter_mut().zip(acc) {
                            *d += E::from_f64(a);
                        }
                    });
                }
                if need(*x) {
                    Self::acc_grad(grads, *x, numel(*x), |dx| {
                        for (grow, dxrow) in g.chunks_exact(c).zip(dx.chunks_exact_mut(c)) {
                            for j in 0..c {
                                dx_add(dxrow, j, gamma_v[j].to_f64() * inv_std[j] * grow[j].to_f64());
                            }
                        }
                    });
                }
            }
            Op::Relu { x } => {
                let xv = nodes[x.0].value.data();
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > E::zero() {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let xs = nodes[x.0].value.shape();
                let (n, d) = (xs[0], xs[1]);
                let u = nodes[w.0].value.shape()[1];
                if need(*b) {
                    Self::acc_grad(grads, *b, u, |db| {
                        for grow in g.chunks_exact(u) {
                            for (dv, &gv) in db.iter_mut().zip(grow) {
                                *dv += gv;
                            }
                        }
                    });
                }
                if need(*w) {
                    let xv = nodes[x.0].value.data();
                    Self::acc_grad(grads, *w, d * u, |dw| {
                        mm_at_acc(xv, g, dw, n, d, u);
                    });
                }
                if need(*x) {
                    let wt = transpose(nodes[w.0].value.data(), d, u);
                    Self::acc_grad(grads, *x, n * d, |dx| {
                        mm_acc(g, &wt, dx, n, u, d);
                    });
                }
            }
            Op::Softmax { x } => {
                let k = nodes[i].value.shape()[1];
                let y = nodes[i].value.data();
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((grow, yrow), dxrow) in g
                        .chunks_exact(k)
                        .zip(y.chunks_exact(k))
                        .zip(dx.chunks_exact_mut(k))
                    {
                        let dot: f64 = grow
                            .iter()
                            .zip(yrow)
                            .map(|(&gv, &yv)| gv.to_f64() * yv.to_f64())
                            .sum();
                        for j in 0..k {
                            dxrow[j] +=
                                E::from_f64(yrow[j].to_f64() * (grow[j].to_f64() - dot));
                        }
                    }
                });
            }
            Op::Dropout { x, mask, scale } => {
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((d, &gv), &m) in dx.iter_mut().zip(g).zip(mask) {
                        if m == 1 {
                            *d += gv * *scale;
                        }
                    }
                });
            }
            Op::Reshape { x } => {
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d += gv;
                    }
                });
            }
            Op::Concat { xs } => {
                let total = nodes[i].value.shape()[1];
                let n = nodes[i].value.shape()[0];
                let mut offset = 0;
                for &v in xs {
                    let wd = nodes[v.0].value.shape()[1];
                    if need(v) {
                        Self::acc_grad(grads, v, n * wd, |dx| {
                            for row in 0..n {
                                let src = &g[row * total + offset..row * total + offset + wd];
                                for (d, &gv) in dx[row * wd..(row + 1) * wd].iter_mut().zip(src) {
                                    *d += gv;
                                }
                            }
                        });
                    }
                    offset += wd;
                }
            }
            Op::Sigmoid { x } => {
                let y = nodes[i].value.data();
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
                        let yf = yv.to_f64();
                        *d += E::from_f64(gv.to_f64() * yf * (1.0 - yf));
                    }
                });
            }
            Op::LogClamped { x, lo, hi } => {
                let xv = nodes[x.0].value.data();
                let (lo, hi) = (*lo, *hi);
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        let vf = v.to_f64();
                        if vf >= lo && vf <= hi {
                            *d += E::from_f64(gv.to_f64() / vf);
                        }
                    }
                });
            }
            Op::OneMinus { x } => {
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if need(v) {
                        Self::acc_grad(grads, v, numel(v), |dx| {
                            for (d, &gv) in dx.iter_mut().zip(g) {
                                *d += gv;
                            }
                        });
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if need(*a) {
                    Self::acc_grad(grads, *a, numel(*a), |dx| {
                        for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(bv) {
                            *d += gv * v;
                        }
                    });
                }
                if need(*b) {
                    Self::acc_grad(grads, *b, numel(*b), |dx| {
                        for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(av) {
                            *d += gv * v;
                        }
                    });
                }
            }
            Op::Scale { x, c } => {
                let c = *c;
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d += gv * c;
                    }
                });
            }
            Op::MeanAll { x } => {
                let n = numel(*x);
                let gv = g[0];
                let inv = E::from_f64(1.0 / n as f64);
                Self::acc_grad(grads, *x, n, |dx| {
                    for d in dx.iter_mut() {
                        *d += gv * inv;
                    }
                });
            }
            Op::SumAll { x } => {
                let n = numel(*x);
                let gv = g[0];
                Self::acc_grad(grads, *x, n, |dx| {
                    for d in dx.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::NllProb { probs, classes, lo } => {
                let k = nodes[probs.0].value.shape()[1];
                let pv = nodes[probs.0].value.data();
                let n = classes.len();
                let gv = g[0].to_f64();
                let lo = *lo;
                Self::acc_grad(grads, *probs, n * k, |dp| {
                    for (row, &c) in classes.iter().enumerate() {
                        let p = pv[row * k + c].to_f64();
                        if p >= lo {
                            dp[row * k + c] += E::from_f64(-gv / (n as f64 * p));
                        }
                    }
                });
            }
            Op::ClampRange { x, lo, hi } => {
                let xv = nodes[x.0].value.data();
                let (lo, hi) = (*lo, *hi);
                Self::acc_grad(grads, *x, numel(*x), |dx| {
                    for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v >= lo && v <= hi {
                            *d += gv;
                        }
                    }
                });
            }
        }
    }
}

fn dx_add<E: Scalar>(row: &mut [E], j: usize, v: f64) {
    row[j] += E::from_f64(v);
}
