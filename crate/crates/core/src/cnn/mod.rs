//! The 12-layer scratch CNN: four conv/max-pool stages with one batchnorm
//! after the last convolution, then flatten, dropout and a dense head.
//!
//! ```text
//! conv1 → relu → pool1 → conv2 → relu → pool2 → conv3 → relu → pool3
//!   → conv4 → batchnorm → relu → pool4 → flatten → dropout → dense(2)
//! ```
//!
//! The flatten output is the extracted feature vector and the post-ReLU
//! conv4 activation is the Grad-CAM target layer.

mod search;
mod train;

use crate::engine::init::kaiming_uniform;
use crate::engine::kernels::window_out;
use crate::engine::{BatchNormStats, Graph, Mode, Scalar, Tensor, Var};
use crate::features::FeatureMatrix;
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

pub use search::{random_search, SearchOutcome, SearchSpace, TrialResult};
pub use train::{train, EpochLog, TrainConfig, TrainOutcome, EPOCH_CSV_HEADER};

pub const CONV_LAYERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride 1 with "same" padding for odd kernels.
    pub fn same(filters: usize, kernel: usize) -> Self {
        ConvSpec {
            filters,
            kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_size: usize,
    pub convs: Vec<ConvSpec>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dropout: f64,
    pub classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            input_size: 32,
            convs: [32, 64, 128, 128].iter().map(|&f| ConvSpec::same(f, 3)).collect(),
            pool_window: 2,
            pool_stride: 2,
            dropout: 0.3,
            classes: 2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    MaxPool,
    BatchNorm,
    Flatten,
    Dropout,
    Dense,
}

/// Spatial extents through the network for one spec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSizes {
    /// Output size of each convolution.
    pub conv: Vec<usize>,
    /// Output size of each max-pool.
    pub pool: Vec<usize>,
}

impl ModelSpec {
    /// The default architecture with its input size and filter counts scaled
    /// down, for fast tests.
    pub fn tiny(input_size: usize, filters: [usize; 4]) -> Self {
        ModelSpec {
            input_size,
            convs: filters.iter().map(|&f| ConvSpec::same(f, 3)).collect(),
            ..Self::default()
        }
    }

    /// Layer inventory in execution order (activations are not layers).
    pub fn layers(&self) -> Vec<LayerKind> {
        use LayerKind::*;
        let mut out = Vec::new();
        for i in 0..self.convs.len() {
            out.push(Conv2d);
            if i + 1 == self.convs.len() {
                out.push(BatchNorm);
            }
            out.push(MaxPool);
        }
        out.extend([Flatten, Dropout, Dense]);
        out
    }

    pub fn stage_sizes(&self) -> Result<StageSizes> {
        let mut size = self.input_size;
        let mut conv = Vec::new();
        let mut pool = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            size = window_out(size, c.kernel, c.stride, c.padding)
                .ok_or_else(|| Error::Shape(format!("conv{} kernel {} does not fit a {size}px input", i + 1, c.kernel)))?;
            conv.push(size);
            if self.pool_window > size {
                return Err(Error::Shape(format!("pool{} window {} exceeds {size}px", i + 1, self.pool_window)));
            }
            size = (size - self.pool_window) / self.pool_stride + 1;
            pool.push(size);
        }
        Ok(StageSizes { conv, pool })
    }

    pub fn validate(&self) -> Result<()> {
        if self.convs.len() != CONV_LAYERS {
            return Err(Error::InvalidArgument(format!(
                "architecture needs exactly {CONV_LAYERS} conv layers, got {}",
                self.convs.len()
            )));
        }
        if self.convs.iter().any(|c| c.filters == 0 || c.kernel == 0 || c.stride == 0) {
            return Err(Error::InvalidArgument("conv filters, kernel and stride must be positive".into()));
        }
        if self.input_size == 0 || self.pool_window == 0 || self.pool_stride == 0 || self.classes < 2 {
            return Err(Error::InvalidArgument("input size, pooling and class count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.stage_sizes().map(|_| ())
    }

    /// Spatial size of the last conv activation (Grad-CAM resolution).
    pub fn activation_size(&self) -> Result<usize> {
        Ok(*self.stage_sizes()?.conv.last().expect("four stages"))
    }

    /// Length of the flatten output.
    pub fn feature_dim(&self) -> Result<usize> {
        let s = *self.stage_sizes()?.pool.last().expect("four stages");
        Ok(self.convs.last().expect("four stages").filters * s * s)
    }

    /// Parameter names and shapes in storage order.
    pub fn parameter_layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let mut out = Vec::new();
        let mut channels = 1;
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{}.weight", i + 1), vec![c.filters, channels, c.kernel, c.kernel]));
            out.push((format!("conv{}.bias", i + 1), vec![c.filters]));
            channels = c.filters;
        }
        out.push(("bn.gamma".into(), vec![channels]));
        out.push(("bn.beta".into(), vec![channels]));
        let d = self.feature_dim()?;
        out.push(("dense.weight".into(), vec![d, self.classes]));
        out.push(("dense.bias".into(), vec![self.classes]));
        Ok(out)
    }
}

const BN_GAMMA: usize = 2 * CONV_LAYERS;
const BN_BETA: usize = BN_GAMMA + 1;
const DENSE_W: usize = BN_GAMMA + 2;
const DENSE_B: usize = BN_GAMMA + 3;

/// Graph handles produced by one forward pass.
pub struct ForwardOutput {
    pub logits: Var,
    /// Post-ReLU output of the last convolution, `[N, F₄, h, w]`.
    pub activations: Var,
    /// Flatten output, `[N, D]`.
    pub features: Var,
    /// Parameter leaves in [`Cnn::parameters`] order.
    pub params: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn<T> {
    spec: ModelSpec,
    params: Vec<Tensor<T>>,
    bn_stats: BatchNormStats<T>,
    epochs_trained: usize,
}

impl<T: Scalar> Cnn<T> {
    /// Kaiming-uniform weights, zero biases, unit gamma, zero beta.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let layout = spec.parameter_layout()?;
        let mut rng = seeded(seed);
        let params = layout
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".weight") {
                    let fan_in = if shape.len() == 4 { shape[1] * shape[2] * shape[3] } else { shape[0] };
                    kaiming_uniform(shape, fan_in, &mut rng)
                } else if name == "bn.gamma" {
                    Tensor::ones(shape)
                } else {
                    Tensor::zeros(shape)
                }
            })
            .collect();
        Ok(Self::with_parts(spec, params, None, 0))
    }

    /// All parameters zero (gamma included).
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let params = spec.parameter_layout()?.into_iter().map(|(_, s)| Tensor::zeros(s)).collect();
        Ok(Self::with_parts(spec, params, None, 0))
    }

    /// Assembles a model from parameters in [`ModelSpec::parameter_layout`]
    /// order; shapes are checked.
    pub fn from_parameters(
        spec: ModelSpec,
        params: Vec<Tensor<T>>,
        bn_stats: BatchNormStats<T>,
        epochs_trained: usize,
    ) -> Result<Self> {
        let layout = spec.parameter_layout()?;
        if layout.len() != params.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", layout.len(), params.len())));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", p.shape())));
            }
        }
        let c = spec.convs.last().expect("validated").filters;
        if bn_stats.mean.shape() != [c] || bn_stats.var.shape() != [c] {
            return Err(Error::Shape("batchnorm running statistics do not match conv4".into()));
        }
        Ok(Self::with_parts(spec, params, Some(bn_stats), epochs_trained))
    }

    fn with_parts(spec: ModelSpec, params: Vec<Tensor<T>>, stats: Option<BatchNormStats<T>>, epochs: usize) -> Self {
        let c = spec.convs.last().expect("validated").filters;
        Cnn {
            spec,
            params,
            bn_stats: stats.unwrap_or_else(|| BatchNormStats::new(c)),
            epochs_trained: epochs,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.spec
            .parameter_layout()
            .expect("validated at construction")
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    pub fn bn_stats(&self) -> &BatchNormStats<T> {
        &self.bn_stats
    }

    pub fn set_bn_stats(&mut self, stats: BatchNormStats<T>) {
        self.bn_stats = stats;
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub fn set_epochs_trained(&mut self, epochs: usize) {
        self.epochs_trained = epochs;
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    pub fn dense_weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params[DENSE_W]
    }

    pub fn cast<U: Scalar>(&self) -> Cnn<U> {
        Cnn {
            spec: self.spec.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            bn_stats: BatchNormStats {
                mean: self.bn_stats.mean.cast(),
                var: self.bn_stats.var.cast(),
            },
            epochs_trained: self.epochs_trained,
        }
    }

    /// Records the network on `g`. In train mode the updated batchnorm
    /// running statistics are returned alongside; the model itself is not
    /// modified.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        input: Var,
        mode: Mode,
        rng: &mut Rng,
        trainable: bool,
    ) -> Result<(ForwardOutput, BatchNormStats<T>)> {
        let params: Vec<Var> = self.params.iter().map(|p| g.leaf(p.clone(), trainable)).collect();
        self.forward_with(g, input, params, mode, rng)
    }

    /// Like [`Cnn::forward`] but with caller-supplied parameter nodes, in
    /// [`Cnn::parameters`] order. Only the batchnorm running statistics are
    /// taken from `self`.
    pub fn forward_with(
        &self,
        g: &mut Graph<T>,
        input: Var,
        params: Vec<Var>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(ForwardOutput, BatchNormStats<T>)> {
        let s = self.spec.input_size;
        let shape = g.value(input).shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != s || shape[3] != s {
            return Err(Error::Shape(format!("model expects [N, 1, {s}, {s}] input, got {shape:?}")));
        }
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!("expected {} parameter nodes, got {}", self.params.len(), params.len())));
        }
        let mut stats = self.bn_stats.clone();
        let mut x = input;
        let mut activations = None;
        for (i, c) in self.spec.convs.iter().enumerate() {
            x = g.conv2d(x, params[2 * i], params[2 * i + 1], c.stride, c.padding)?;
            if i + 1 == self.spec.convs.len() {
                x = g.batchnorm(
                    x,
                    params[BN_GAMMA],
                    params[BN_BETA],
                    &mut stats,
                    mode,
                    T::from_f64(self.spec.bn_momentum),
                    T::from_f64(self.spec.bn_eps),
                )?;
                x = g.relu(x)?;
                activations = Some(x);
            } else {
                x = g.relu(x)?;
            }
            x = g.maxpool2d(x, self.spec.pool_window, self.spec.pool_stride)?;
        }
        let features = g.flatten(x)?;
        let dropped = g.dropout(features, self.spec.dropout, mode, rng)?;
        let logits = g.dense(dropped, params[DENSE_W], params[DENSE_B])?;
        Ok((
            ForwardOutput {
                logits,
                activations: activations.expect("four stages"),
                features,
                params,
            },
            stats,
        ))
    }

    /// Eval-mode logits and flatten features for a batch, processed in
    /// chunks of `chunk` images.
    pub fn infer(&self, images: &Tensor<T>, chunk: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = images.shape()[0];
        let mut logits = Vec::new();
        let mut feats = Vec::new();
        let mut rng = seeded(0);
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let part: Vec<Tensor<T>> = (start..end).map(|i| images.sample(i)).collect();
            let refs: Vec<&Tensor<T>> = part.iter().collect();
            let batch = Tensor::stack(&refs)?;
            let mut g = Graph::new();
            let x = g.constant(batch);
            let (out, _) = self.forward(&mut g, x, Mode::Eval, &mut rng, false)?;
            logits.extend_from_slice(g.value(out.logits).data());
            feats.extend_from_slice(g.value(out.features).data());
            start = end;
        }
        let k = self.spec.classes;
        let d = feats.len() / n.max(1);
        Ok((Tensor::new(vec![n, k], logits)?, Tensor::new(vec![n, d], feats)?))
    }

    /// Eval-mode class predictions.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.infer(images, 64)?.0.argmax_rows())
    }
}

/// Flatten-layer activations of every image, in input order.
pub fn extract_features<T: Scalar>(model: &Cnn<T>, images: &crate::dataset::ImageSet) -> Result<FeatureMatrix> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    let (_, feats) = model.infer(&images.images.cast(), 64)?;
    let dim = feats.shape()[1];
    FeatureMatrix::new(
        images.ids.clone(),
        images.labels.iter().map(|&l| l as u8).collect(),
        dim,
        feats.to_f64_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_is_twelve_layers() {
        let layers = ModelSpec::default().layers();
        assert_eq!(layers.len(), 12);
        let count = |k| layers.iter().filter(|&&l| l == k).count();
        assert_eq!(count(LayerKind::Conv2d), 4);
        assert_eq!(count(LayerKind::MaxPool), 4);
        assert_eq!(count(LayerKind::BatchNorm), 1);
        assert_eq!(count(LayerKind::Flatten), 1);
        assert_eq!(count(LayerKind::Dropout), 1);
        assert_eq!(count(LayerKind::Dense), 1);
    }

    #[test]
    fn default_shapes() {
        let spec = ModelSpec::default();
        let sizes = spec.stage_sizes().unwrap();
        assert_eq!(sizes.conv, vec![32, 16, 8, 4]);
        assert_eq!(sizes.pool, vec![16, 8, 4, 2]);
        assert_eq!(spec.activation_size().unwrap(), 4);
        assert_eq!(spec.feature_dim().unwrap(), 512);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = ModelSpec::default();
        spec.convs.pop();
        assert!(spec.validate().is_err());
        assert!(ModelSpec::tiny(8, [1, 1, 1, 1]).validate().is_err());
        assert!(ModelSpec::tiny(16, [1, 1, 1, 1]).validate().is_ok());
        let spec = ModelSpec {
            dropout: 1.0,
            ..ModelSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
