//! Grad-CAM heatmaps from the last convolutional layer and their overlays.

use crate::cnn::Cnn;
use crate::dataset::resize_bilinear;
use crate::engine::{Graph, Mode, Scalar, Tensor, Var};
use crate::rng::seeded;
use crate::{Error, Result};

/// A network Grad-CAM can explain: an eval-mode forward that exposes the
/// target convolutional activations.
pub trait CamModel<T: Scalar> {
    fn input_size(&self) -> usize;

    fn is_trained(&self) -> bool;

    /// Records an eval-mode forward of `input` (`[1, 1, S, S]`), returning
    /// the logits `[1, K]` and the target activations `[1, F, h, w]`.
    fn record(&self, g: &mut Graph<T>, input: Var) -> Result<(Var, Var)>;
}

impl<T: Scalar> CamModel<T> for Cnn<T> {
    fn input_size(&self) -> usize {
        self.spec().input_size
    }

    fn is_trained(&self) -> bool {
        Cnn::is_trained(self)
    }

    fn record(&self, g: &mut Graph<T>, input: Var) -> Result<(Var, Var)> {
        let (out, _) = self.forward(g, input, Mode::Eval, &mut seeded(0), false)?;
        Ok((out.logits, out.activations))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Upsample {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub id: String,
    pub class: usize,
    /// Side length; `values` is `size × size`, row-major, in `[0, 1]`.
    pub size: usize,
    pub values: Vec<f32>,
    /// Extremes of the upsampled map before normalization.
    pub raw_min: f64,
    pub raw_max: f64,
    /// `ReLU(Σ α_k A_k)` at activation resolution.
    pub coarse: Vec<f64>,
    pub coarse_size: (usize, usize),
    /// Channel weights: spatial means of `∂y_c/∂A`.
    pub alpha: Vec<f64>,
    /// The map was identically zero.
    pub degenerate: bool,
}

impl Heatmap {
    /// Index of the largest value, first on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        crate::dataset::netpbm::encode_pgm(self.size, self.size, &crate::dataset::netpbm::quantize(&self.values))
    }

    /// Sidecar text: target class and raw range.
    pub fn sidecar(&self) -> String {
        format!(
            "id={}\nclass={}\nraw_min={:e}\nraw_max={:e}\ndegenerate={}\n",
            self.id, self.class, self.raw_min, self.raw_max, self.degenerate
        )
    }
}

fn argmax<V: PartialOrd + Copy>(values: &[V]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn nearest(src: &[f32], w: usize, h: usize, size: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let sy = (y * h) / size;
        for x in 0..size {
            out.push(src[sy * w + (x * w) / size]);
        }
    }
    out
}

/// Grad-CAM for one image and target class.
pub fn gradcam<T: Scalar, M: CamModel<T>>(
    model: &M,
    id: &str,
    image: &Tensor<T>,
    class: usize,
    upsample: Upsample,
) -> Result<Heatmap> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    let s = model.input_size();
    if image.shape() != [1, 1, s, s] {
        return Err(Error::Shape(format!("Grad-CAM expects [1, 1, {s}, {s}], got {:?}", image.shape())));
    }
    let mut g = Graph::new();
    // Marking the input as differentiable makes every activation carry a gradient.
    let x = g.leaf(image.clone(), true);
    let (logits, acts) = model.record(&mut g, x)?;
    let k = g.value(logits).len();
    if class >= k {
        return Err(Error::InvalidArgument(format!("target class {class} outside 0..{k}")));
    }
    let score = g.select(logits, class)?;
    let grads = g.backward(score)?;
    let a = g.value(acts);
    let (h, w) = match a.shape() {
        [1, _, h, w] => (*h, *w),
        other => return Err(Error::Shape(format!("activations must be [1, F, h, w], got {other:?}"))),
    };
    let da = grads.get_or_zeros(acts, a.shape());
    let hw = h * w;
    let alpha: Vec<f64> = da
        .data()
        .chunks_exact(hw)
        .map(|c| c.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64)
        .collect();
    let mut coarse = vec![0.0; hw];
    for (ch, &wk) in a.data().chunks_exact(hw).zip(&alpha) {
        for (c, v) in coarse.iter_mut().zip(ch) {
            *c += wk * v.as_f64();
        }
    }
    coarse.iter_mut().for_each(|v| *v = v.max(0.0));

    let coarse32: Vec<f32> = coarse.iter().map(|&v| v as f32).collect();
    let mut values = match upsample {
        Upsample::Bilinear => resize_bilinear(&coarse32, w, h, s, s),
        Upsample::Nearest => nearest(&coarse32, w, h, s),
    };
    let raw_min = values.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let raw_max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let degenerate = raw_max <= 0.0;
    if degenerate {
        log::warn!("{id}: Grad-CAM map is identically zero");
        values.iter_mut().for_each(|v| *v = 0.0);
    } else if raw_max > raw_min {
        let range = (raw_max - raw_min) as f32;
        let min = raw_min as f32;
        values.iter_mut().for_each(|v| *v = ((*v - min) / range).clamp(0.0, 1.0));
    } else {
        values.iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(Heatmap {
        id: id.to_string(),
        class,
        size: s,
        values,
        raw_min,
        raw_max,
        coarse,
        coarse_size: (h, w),
        alpha,
        degenerate,
    })
}

/// Jet-style color ramp: dark blue at 0 through cyan, yellow, to dark red at 1.
pub fn jet(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    let ramp = |c: f32| (1.5 - (4.0 * v - c).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

/// Blends the colored heatmap over a grayscale image. Each pixel's blend
/// weight is `alpha · h`, so cold regions keep the original intensity.
/// Returns interleaved RGB in `[0, 1]`.
pub fn overlay(gray: &[f32], heatmap: &Heatmap, alpha: f32) -> Result<Vec<f32>> {
    if gray.len() != heatmap.values.len() {
        return Err(Error::Shape(format!(
            "image has {} pixels, heatmap {}",
            gray.len(),
            heatmap.values.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(gray.len() * 3);
    for (&p, &h) in gray.iter().zip(&heatmap.values) {
        let wt = alpha * h;
        for c in jet(h) {
            out.push((1.0 - wt) * p + wt * c);
        }
    }
    Ok(out)
}
