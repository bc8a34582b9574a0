//! Synthetic stand-in for brain MRI slices.
//!
//! Negatives are smooth low-frequency texture inside an elliptical head
//! mask. Positives add one bright Gaussian blob inside the mask, truncated
//! at twice its recorded radius; the blob disk is the ground-truth region
//! for localization checks.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::GrayImage;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

/// Blob geometry in units of the image side, so it rasterizes at any size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Blob {
    /// Pixels whose centers lie within `radius` of the blob center.
    pub fn mask(&self, size: usize) -> Vec<bool> {
        let s = size as f64;
        (0..size * size)
            .map(|i| {
                let x = ((i % size) as f64 + 0.5) / s - self.cx;
                let y = ((i / size) as f64 + 0.5) / s - self.cy;
                x * x + y * y <= self.radius * self.radius
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthImage {
    pub id: String,
    pub label: u8,
    /// Intensities in `[0, 1]`.
    pub pixels: GrayImage,
    pub blob: Option<Blob>,
    pub texture_seed: u64,
}

impl SynthImage {
    /// The same slice without its blob.
    pub fn negative_counterpart(&self) -> GrayImage {
        render(self.pixels.width, self.texture_seed, None)
    }
}

struct Head {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
}

impl Head {
    fn from_rng(rng: &mut crate::rng::Rng) -> Head {
        Head {
            cx: 0.5 + rng.gen_range(-0.03..0.03),
            cy: 0.5 + rng.gen_range(-0.03..0.03),
            ax: 0.40 + rng.gen_range(-0.03..0.03),
            ay: 0.34 + rng.gen_range(-0.03..0.03),
        }
    }

    /// Normalized elliptical radius; < 1 inside.
    fn rho(&self, x: f64, y: f64) -> f64 {
        (((x - self.cx) / self.ax).powi(2) + ((y - self.cy) / self.ay).powi(2)).sqrt()
    }
}

fn gaussian_blur(src: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * src[y * size + clamp(x as isize + i as isize - radius)])
                .sum::<f64>()
                / total;
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp[clamp(y as isize + i as isize - radius) * size + x])
                .sum::<f64>()
                / total;
        }
    }
    out
}

/// Renders one slice from its texture seed, optionally adding a blob.
pub fn render(size: usize, texture_seed: u64, blob: Option<&Blob>) -> GrayImage {
    let mut rng = seeded(texture_seed);
    let head = Head::from_rng(&mut rng);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.sample(StandardNormal)).collect();
    let mut texture = gaussian_blur(&noise, size, size as f64 / 16.0);
    let mean = texture.iter().sum::<f64>() / texture.len() as f64;
    let std = (texture.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / texture.len() as f64)
        .sqrt()
        .max(1e-12);
    for v in &mut texture {
        *v = (*v - mean) / std;
    }
    let s = size as f64;
    let data = (0..size * size)
        .map(|i| {
            let x = ((i % size) as f64 + 0.5) / s;
            let y = ((i / size) as f64 + 0.5) / s;
            if head.rho(x, y) >= 1.0 {
                return 0.0;
            }
            let mut v = 0.35 + 0.08 * texture[i];
            if let Some(b) = blob {
                let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
                if d2 <= (2.0 * b.radius).powi(2) {
                    let sigma = b.radius / 2.0;
                    v += b.amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    GrayImage {
        width: size,
        height: size,
        data,
    }
}

fn sample_blob(texture_seed: u64, blob_seed: u64) -> Blob {
    // the head geometry is the first draw of the texture stream
    let head = Head::from_rng(&mut seeded(texture_seed));
    let mut rng = seeded(blob_seed);
    let radius = rng.gen_range(0.12..0.20);
    let amplitude = rng.gen_range(0.35..0.55);
    loop {
        let cx = rng.gen_range(0.0..1.0);
        let cy = rng.gen_range(0.0..1.0);
        if head.rho(cx, cy) <= 0.55 {
            return Blob {
                cx,
                cy,
                radius,
                amplitude,
            };
        }
    }
}

/// Generates `count_per_class` negatives followed by as many positives.
pub fn synthesize(count_per_class: usize, size: usize, seed: u64) -> Result<Vec<SynthImage>> {
    if count_per_class == 0 {
        return Err(Error::InvalidArgument("synthesize needs at least one image per class".into()));
    }
    if size < 4 {
        return Err(Error::InvalidArgument(format!("synthetic image size {size} is too small")));
    }
    let mut out = Vec::with_capacity(2 * count_per_class);
    for label in 0..2u8 {
        let class_seed = derive_seed(seed, label as u64);
        for i in 0..count_per_class {
            let texture_seed = derive_seed(class_seed, 2 * i as u64);
            let blob = (label == 1).then(|| sample_blob(texture_seed, derive_seed(class_seed, 2 * i as u64 + 1)));
            out.push(SynthImage {
                id: format!("{}/synth_{i:04}", if label == 1 { "yes" } else { "no" }),
                label,
                pixels: render(size, texture_seed, blob.as_ref()),
                blob,
                texture_seed,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let a = synthesize(3, 32, 5).unwrap();
        let b = synthesize(3, 32, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pixels, y.pixels);
            assert_eq!(x.blob, y.blob);
        }
        let c = synthesize(3, 32, 6).unwrap();
        assert_ne!(a[0].pixels, c[0].pixels);
    }

    #[test]
    fn classes_and_value_range() {
        let imgs = synthesize(4, 64, 1).unwrap();
        assert_eq!(imgs.iter().filter(|i| i.label == 0).count(), 4);
        assert!(imgs.iter().all(|i| (i.label == 1) == i.blob.is_some()));
        assert!(imgs.iter().all(|i| i.pixels.data.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn blob_difference_is_local() {
        for img in synthesize(10, 64, 2).unwrap().into_iter().filter(|i| i.label == 1) {
            let blob = img.blob.unwrap();
            let base = img.negative_counterpart();
            let mut changed = 0;
            for (i, (a, b)) in img.pixels.data.iter().zip(&base.data).enumerate() {
                if a != b {
                    changed += 1;
                    let x = ((i % 64) as f64 + 0.5) / 64.0 - blob.cx;
                    let y = ((i / 64) as f64 + 0.5) / 64.0 - blob.cy;
                    assert!((x * x + y * y).sqrt() <= 2.0 * blob.radius + 1e-9);
                }
            }
            assert!(changed > 0);
        }
    }

    #[test]
    fn blob_mask_scales_with_resolution() {
        let b = Blob {
            cx: 0.5,
            cy: 0.5,
            radius: 0.25,
            amplitude: 0.5,
        };
        let frac = |s: usize| b.mask(s).iter().filter(|&&m| m).count() as f64 / (s * s) as f64;
        let area = std::f64::consts::PI * 0.25 * 0.25;
        assert!((frac(256) - area).abs() < 0.01);
        assert!((frac(32) - area).abs() < 0.03);
    }

    #[test]
    fn fast_enough() {
        let start = std::time::Instant::now();
        synthesize(200, 64, 0).unwrap();
        assert!(start.elapsed().as_secs_f64() < 5.0);
    }
}
