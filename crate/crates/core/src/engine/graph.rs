use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use rayon::prelude::*;

use super::kernels::{self, ConvAlgo, ConvGeometry};
use super::{parallel_enabled, Scalar, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Train/eval switch for batchnorm and dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

/// Running per-channel statistics of a batchnorm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: Tensor::zeros(vec![channels]),
            var: Tensor::ones(vec![channels]),
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        kernels: usize,
        bias: usize,
        filters: usize,
        geom: ConvGeometry,
        // Empty when the forward pass ran the direct kernel.
        cols: Vec<Vec<T>>,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    Relu {
        input: usize,
    },
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Dropout {
        input: usize,
        mask: Option<Vec<T>>,
    },
    Dense {
        input: usize,
        weights: usize,
        bias: usize,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    GlobalAvgPool {
        input: usize,
    },
    Reshape {
        input: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Sum {
        input: usize,
    },
    Scale {
        input: usize,
        factor: T,
    },
    Select {
        input: usize,
        index: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of executed operations.
///
/// Nodes are stored in execution order, so every operation's inputs precede
/// it and a single reverse sweep is a valid backward traversal.
pub struct Graph<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    conv_algo: ConvAlgo,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn map_samples<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    if parallel_enabled() && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn shape4(t: &Tensor<impl Scalar>, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::Shape(format!("{what} must be 4-D, got {s:?}"))),
    }
}

fn shape2(t: &Tensor<impl Scalar>, what: &str) -> Result<[usize; 2]> {
    match *t.shape() {
        [r, c] => Ok([r, c]),
        ref s => Err(Error::Shape(format!("{what} must be 2-D, got {s:?}"))),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            conv_algo: ConvAlgo::default(),
        }
    }

    pub fn with_conv_algo(mut self, algo: ConvAlgo) -> Self {
        self.conv_algo = algo;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[self.check(var)].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[self.check(var)].requires_grad
    }

    fn check(&self, var: Var) -> usize {
        assert_eq!(var.graph, self.id, "variable belongs to a different graph");
        var.index
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push_op(&mut self, value: Tensor<T>, inputs: &[usize], op: Op<T>, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(value, requires_grad, op))
    }

    /// Records a leaf value.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Records a constant leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xi, ki, bi) = (self.check(input), self.check(kernels), self.check(bias));
        let [n, c, h, w] = shape4(&self.nodes[xi].value, "conv2d input")?;
        let [f, kc, kh, kw] = shape4(&self.nodes[ki].value, "conv2d kernels")?;
        if kc != c {
            return Err(Error::Shape(format!("conv2d: input has {c} channels, kernels expect {kc}")));
        }
        if self.nodes[bi].value.shape() != [f] {
            return Err(Error::Shape(format!(
                "conv2d: bias shape {:?}, expected [{f}]",
                self.nodes[bi].value.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        let geom = ConvGeometry::new(c, h, w, kh, kw, stride, padding).ok_or_else(|| {
            Error::Shape(format!("conv2d: kernel {kh}x{kw} exceeds padded input {h}x{w} (pad {padding})"))
        })?;
        let x = self.nodes[xi].value.data();
        let kern = self.nodes[ki].value.data();
        let b = self.nodes[bi].value.data();
        let per_in = c * h * w;
        let algo = self.conv_algo;
        let results = map_samples(n, |s| {
            let xs = &x[s * per_in..(s + 1) * per_in];
            match algo {
                ConvAlgo::Im2col => kernels::conv2d_gemm_sample(xs, kern, b, f, &geom),
                ConvAlgo::Direct => (kernels::conv2d_direct_sample(xs, kern, b, f, &geom), Vec::new()),
            }
        });
        let mut out = Vec::with_capacity(n * f * geom.out_len());
        let mut cols = Vec::new();
        for (o, col) in results {
            out.extend_from_slice(&o);
            if !col.is_empty() {
                cols.push(col);
            }
        }
        let value = Tensor::new(vec![n, f, geom.out_h, geom.out_w], out)?;
        self.push_op(
            value,
            &[xi, ki, bi],
            Op::Conv2d {
                input: xi,
                kernels: ki,
                bias: bi,
                filters: f,
                geom,
                cols,
            },
            "conv2d",
        )
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let xi = self.check(input);
        let [n, c, h, w] = shape4(&self.nodes[xi].value, "maxpool2d input")?;
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument("maxpool2d window and stride must be positive".into()));
        }
        if window > h || window > w {
            return Err(Error::Shape(format!("maxpool2d: window {window} exceeds spatial extent {h}x{w}")));
        }
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        let x = self.nodes[xi].value.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + i * stride * w + j * stride;
                    for di in 0..window {
                        for dj in 0..window {
                            let idx = base + (i * stride + di) * w + j * stride + dj;
                            // Strict comparison keeps the first maximum in row-major order.
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push_op(value, &[xi], Op::MaxPool { input: xi, argmax }, "maxpool2d")
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let xi = self.check(input);
        let value = self.nodes[xi].value.map(|v| if v > T::zero() { v } else { T::zero() });
        self.push_op(value, &[xi], Op::Relu { input: xi }, "relu")
    }

    /// Per-channel batch normalization of a `[N,C,H,W]` tensor.
    ///
    /// In train mode the batch statistics normalize the input and `stats` is
    /// updated as `running = (1 - momentum)·running + momentum·batch`, using
    /// the unbiased batch variance. Eval mode normalizes with `stats`.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats<T>,
        mode: Mode,
        momentum: T,
        eps: T,
    ) -> Result<Var> {
        let (xi, gi, bi) = (self.check(input), self.check(gamma), self.check(beta));
        let [n, c, h, w] = shape4(&self.nodes[xi].value, "batchnorm input")?;
        for (what, t) in [
            ("gamma", &self.nodes[gi].value),
            ("beta", &self.nodes[bi].value),
            ("running mean", &stats.mean),
            ("running var", &stats.var),
        ] {
            if t.shape() != [c] {
                return Err(Error::Shape(format!("batchnorm {what} shape {:?}, expected [{c}]", t.shape())));
            }
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::InvalidArgument("batchnorm in train mode needs a batch of at least 2".into()));
        }
        let hw = h * w;
        let m = n * hw;
        let x = self.nodes[xi].value.data();
        let (mean, inv_std): (Vec<T>, Vec<T>) = match mode {
            Mode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut sum = T::zero();
                    for s in 0..n {
                        sum += x[(s * c + ch) * hw..(s * c + ch + 1) * hw].iter().copied().sum::<T>();
                    }
                    let mu = sum / T::from_usize(m);
                    let mut sq = T::zero();
                    for s in 0..n {
                        for &v in &x[(s * c + ch) * hw..(s * c + ch + 1) * hw] {
                            sq += (v - mu) * (v - mu);
                        }
                    }
                    mean[ch] = mu;
                    var[ch] = sq / T::from_usize(m);
                }
                let unbias = T::from_usize(m) / T::from_usize(m - 1);
                let keep = T::one() - momentum;
                for ch in 0..c {
                    let rm = &mut stats.mean.data_mut()[ch];
                    *rm = keep * *rm + momentum * mean[ch];
                    let rv = &mut stats.var.data_mut()[ch];
                    *rv = keep * *rv + momentum * var[ch] * unbias;
                }
                let inv = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv)
            }
            Mode::Eval => (
                stats.mean.data().to_vec(),
                stats.var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect(),
            ),
        };
        let g = self.nodes[gi].value.data();
        let b = self.nodes[bi].value.data();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
                for idx in range {
                    let xh = (x[idx] - mean[ch]) * inv_std[ch];
                    xhat[idx] = xh;
                    out[idx] = g[ch] * xh + b[ch];
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.push_op(
            value,
            &[xi, gi, bi],
            Op::BatchNorm {
                input: xi,
                gamma: gi,
                beta: bi,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
            "batchnorm",
        )
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn dropout(&mut self, input: Var, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let xi = self.check(input);
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            let value = self.nodes[xi].value.clone();
            return self.push_op(value, &[xi], Op::Dropout { input: xi, mask: None }, "dropout");
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let x = &self.nodes[xi].value;
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep_scale })
            .collect();
        let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push_op(value, &[xi], Op::Dropout { input: xi, mask: Some(mask) }, "dropout")
    }

    /// Affine map `input[N,D] · weights[D,K] + bias[K]`.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.check(input), self.check(weights), self.check(bias));
        let [n, d] = shape2(&self.nodes[xi].value, "dense input")?;
        let [wd, k] = shape2(&self.nodes[wi].value, "dense weights")?;
        if wd != d {
            return Err(Error::Shape(format!("dense: input has {d} features, weights expect {wd}")));
        }
        if self.nodes[bi].value.shape() != [k] {
            return Err(Error::Shape(format!(
                "dense: bias shape {:?}, expected [{k}]",
                self.nodes[bi].value.shape()
            )));
        }
        let b = self.nodes[bi].value.data();
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(b);
        }
        kernels::gemm_acc(self.nodes[xi].value.data(), self.nodes[wi].value.data(), &mut out, n, d, k);
        let value = Tensor::new(vec![n, k], out)?;
        self.push_op(
            value,
            &[xi, wi, bi],
            Op::Dense {
                input: xi,
                weights: wi,
                bias: bi,
            },
            "dense",
        )
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let li = self.check(logits);
        let [n, k] = shape2(&self.nodes[li].value, "logits")?;
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} rows of logits", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {k} classes")));
        }
        let z = self.nodes[li].value.data();
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &z[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let denom: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            for (j, &v) in row.iter().enumerate() {
                probs[r * k + j] = (v - max).exp() / denom;
            }
            loss += log_denom - (row[label] - max);
        }
        let value = Tensor::scalar(loss / T::from_usize(n));
        self.push_op(
            value,
            &[li],
            Op::SoftmaxCrossEntropy {
                logits: li,
                probs,
                labels: labels.to_vec(),
            },
            "softmax_cross_entropy",
        )
    }

    pub fn global_average_pool(&mut self, input: Var) -> Result<Var> {
        let xi = self.check(input);
        let [n, c, h, w] = shape4(&self.nodes[xi].value, "global_average_pool input")?;
        let hw = h * w;
        let denom = T::from_usize(hw);
        let out = self.nodes[xi]
            .value
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() / denom)
            .collect();
        let value = Tensor::new(vec![n, c], out)?;
        self.push_op(value, &[xi], Op::GlobalAvgPool { input: xi }, "global_average_pool")
    }

    /// Collapses all but the leading dimension.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.reshape(input, vec![n, rest])
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let xi = self.check(input);
        let value = self.nodes[xi].value.clone().reshape(shape)?;
        self.push_op(value, &[xi], Op::Reshape { input: xi }, "reshape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a), self.check(b));
        let value = self.zip_with(ai, bi, "add", |x, y| x + y)?;
        self.push_op(value, &[ai, bi], Op::Add { a: ai, b: bi }, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a), self.check(b));
        let value = self.zip_with(ai, bi, "mul", |x, y| x * y)?;
        self.push_op(value, &[ai, bi], Op::Mul { a: ai, b: bi }, "mul")
    }

    fn zip_with(&self, a: usize, b: usize, op: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let xi = self.check(input);
        let value = Tensor::scalar(self.nodes[xi].value.data().iter().copied().sum());
        self.push_op(value, &[xi], Op::Sum { input: xi }, "sum")
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let xi = self.check(input);
        let value = self.nodes[xi].value.map(|v| v * factor);
        self.push_op(value, &[xi], Op::Scale { input: xi, factor }, "scale")
    }

    /// Picks one element (flat row-major index) as a scalar.
    pub fn select(&mut self, input: Var, index: usize) -> Result<Var> {
        let xi = self.check(input);
        let len = self.nodes[xi].value.len();
        if index >= len {
            return Err(Error::InvalidArgument(format!("select index {index} out of {len}")));
        }
        let value = Tensor::scalar(self.nodes[xi].value.data()[index]);
        self.push_op(value, &[xi], Op::Select { input: xi, index }, "select")
    }

    /// Reverse-mode sweep from `loss`, which must be the scalar node that
    /// terminates the record.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if loss.graph != self.id {
            return Err(Error::BackwardTarget("loss belongs to a different record".into()));
        }
        if loss.index + 1 != self.nodes.len() {
            return Err(Error::BackwardTarget("record does not terminate in the given loss".into()));
        }
        if !self.nodes[loss.index].value.is_scalar() {
            return Err(Error::BackwardTarget(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[loss.index].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(vec![T::one()]);
        for i in (0..=loss.index).rev() {
            let Some(dy) = grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { graph: self.id, grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], target: usize, contribution: Vec<T>) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn backward_node(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                filters,
                geom,
                cols,
            } => {
                let (input, kernels, bias, f) = (*input, *kernels, *bias, *filters);
                let n = self.nodes[input].value.shape()[0];
                let p = geom.out_len();
                let k = geom.patch_len();
                let per_in = geom.channels * geom.height * geom.width;
                let x = self.nodes[input].value.data();
                let w = self.nodes[kernels].value.data();
                let need_x = self.nodes[input].requires_grad;
                let need_w = self.nodes[kernels].requires_grad;
                let parts = map_samples(n, |s| {
                    let dy_s = &dy[s * f * p..(s + 1) * f * p];
                    let dx = need_x.then(|| {
                        let mut dcols = vec![T::zero(); k * p];
                        kernels::gemm_tn_acc(w, dy_s, &mut dcols, k, f, p);
                        kernels::col2im(&dcols, geom)
                    });
                    let dw = need_w.then(|| {
                        let owned;
                        let col: &[T] = if cols.is_empty() {
                            owned = kernels::im2col(&x[s * per_in..(s + 1) * per_in], geom);
                            &owned
                        } else {
                            &cols[s]
                        };
                        let mut dw = vec![T::zero(); f * k];
                        kernels::gemm_nt_acc(dy_s, col, &mut dw, f, p, k);
                        dw
                    });
                    (dx, dw)
                });
                let mut dx_all = Vec::with_capacity(if need_x { n * per_in } else { 0 });
                let mut dw_all = vec![T::zero(); f * k];
                for (dx, dw) in parts {
                    if let Some(dx) = dx {
                        dx_all.extend(dx);
                    }
                    if let Some(dw) = dw {
                        for (a, b) in dw_all.iter_mut().zip(dw) {
                            *a += b;
                        }
                    }
                }
                let mut db = vec![T::zero(); f];
                for s in 0..n {
                    for (fi, d) in db.iter_mut().enumerate() {
                        *d += dy[(s * f + fi) * p..(s * f + fi + 1) * p].iter().copied().sum::<T>();
                    }
                }
                if need_x {
                    self.accumulate(grads, input, dx_all);
                }
                if need_w {
                    self.accumulate(grads, kernels, dw_all);
                }
                self.accumulate(grads, bias, db);
            }
            Op::MaxPool { input, argmax } => {
                let mut dx = vec![T::zero(); self.nodes[*input].value.len()];
                for (&src, &g) in argmax.iter().zip(dy) {
                    dx[src] += g;
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Relu { input } => {
                let x = self.nodes[*input].value.data();
                let dx = x
                    .iter()
                    .zip(dy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let [n, c, h, w] = shape4(&self.nodes[*input].value, "batchnorm input")?;
                let hw = h * w;
                let m = T::from_usize(n * hw);
                let g = self.nodes[*gamma].value.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        for idx in (s * c + ch) * hw..(s * c + ch + 1) * hw {
                            dgamma[ch] += dy[idx] * xhat[idx];
                            dbeta[ch] += dy[idx];
                        }
                    }
                }
                let mut dx = vec![T::zero(); dy.len()];
                for s in 0..n {
                    for ch in 0..c {
                        for idx in (s * c + ch) * hw..(s * c + ch + 1) * hw {
                            dx[idx] = if *batch_stats {
                                // dxhat = dy·γ; dx = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                                g[ch] * inv_std[ch] / m * (m * dy[idx] - dbeta[ch] - xhat[idx] * dgamma[ch])
                            } else {
                                dy[idx] * g[ch] * inv_std[ch]
                            };
                        }
                    }
                }
                self.accumulate(grads, *input, dx);
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Dropout { input, mask } => {
                let dx = match mask {
                    Some(mask) => dy.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                    None => dy.to_vec(),
                };
                self.accumulate(grads, *input, dx);
            }
            Op::Dense { input, weights, bias } => {
                let [n, d] = shape2(&self.nodes[*input].value, "dense input")?;
                let k = self.nodes[*bias].value.len();
                if self.nodes[*input].requires_grad {
                    let mut dx = vec![T::zero(); n * d];
                    kernels::gemm_nt_acc(dy, self.nodes[*weights].value.data(), &mut dx, n, k, d);
                    self.accumulate(grads, *input, dx);
                }
                if self.nodes[*weights].requires_grad {
                    let mut dw = vec![T::zero(); d * k];
                    kernels::gemm_tn_acc(self.nodes[*input].value.data(), dy, &mut dw, d, n, k);
                    self.accumulate(grads, *weights, dw);
                }
                let mut db = vec![T::zero(); k];
                for row in dy.chunks(k) {
                    for (a, &b) in db.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                self.accumulate(grads, *bias, db);
            }
            Op::SoftmaxCrossEntropy { logits, probs, labels } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = dy[0] / T::from_usize(n);
                let mut dz: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    dz[r * k + l] -= scale;
                }
                self.accumulate(grads, *logits, dz);
            }
            Op::GlobalAvgPool { input } => {
                let shape = self.nodes[*input].value.shape();
                let hw = shape[2] * shape[3];
                let denom = T::from_usize(hw);
                let mut dx = Vec::with_capacity(self.nodes[*input].value.len());
                for &g in dy {
                    dx.extend(std::iter::repeat_n(g / denom, hw));
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Reshape { input } => self.accumulate(grads, *input, dy.to_vec()),
            Op::Add { a, b } => {
                self.accumulate(grads, *a, dy.to_vec());
                self.accumulate(grads, *b, dy.to_vec());
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                let da = dy.iter().zip(vb).map(|(&g, &y)| g * y).collect();
                let db = dy.iter().zip(va).map(|(&g, &x)| g * x).collect();
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Sum { input } => {
                let len = self.nodes[*input].value.len();
                self.accumulate(grads, *input, vec![dy[0]; len]);
            }
            Op::Scale { input, factor } => {
                let dx = dy.iter().map(|&g| g * *factor).collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Select { input, index } => {
                let mut dx = vec![T::zero(); self.nodes[*input].value.len()];
                dx[*index] = dy[0];
                self.accumulate(grads, *input, dx);
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    graph: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `var`, if it requires one and
    /// the loss depends on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        assert_eq!(var.graph, self.graph, "variable belongs to a different graph");
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`], with an absent gradient reported as zeros of
    /// the given shape.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}
