use super::{GrayImage, RawImage};
use crate::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(image: &RawImage) -> Result<GrayImage> {
    let data = match image.channels {
        1 => image.data.clone(),
        3 => image
            .data
            .chunks_exact(3)
            .map(|px| LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2])
            .collect(),
        c => return Err(Error::InvalidArgument(format!("unsupported channel count {c}"))),
    };
    Ok(GrayImage {
        width: image.width,
        height: image.height,
        data,
    })
}

/// Bilinear resampling with half-pixel centers (corner-aligned = false):
/// output pixel `x` samples source coordinate `(x + 0.5)·in/out − 0.5`,
/// clamped to the valid range.
pub fn resize_bilinear(src: &[f32], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    assert_eq!(src.len(), width * height, "source size");
    let axis = |out: usize, input: usize| -> Vec<(usize, usize, f32)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let xs = axis(out_w, width);
    let ys = axis(out_h, height);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let bottom = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

pub fn resize(image: &GrayImage, size: usize) -> GrayImage {
    GrayImage {
        width: size,
        height: size,
        data: resize_bilinear(&image.data, image.width, image.height, size, size),
    }
}

/// Maps `[0, 255]` intensities to `[0, 1]`.
pub fn normalize(image: &GrayImage) -> Result<GrayImage> {
    if let Some(bad) = image.data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("pixel value {bad} outside [0, 255]")));
    }
    Ok(GrayImage {
        width: image.width,
        height: image.height,
        data: image.data.iter().map(|v| v / 255.0).collect(),
    })
}

/// Grayscale, resize to `size`×`size`, then normalize.
pub fn preprocess(image: &RawImage, size: usize) -> Result<GrayImage> {
    normalize(&resize(&to_grayscale(image)?, size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(channels: usize, data: Vec<f32>) -> RawImage {
        RawImage {
            width: data.len() / channels,
            height: 1,
            channels,
            data,
        }
    }

    #[test]
    fn grayscale_examples() {
        let white = to_grayscale(&raw(3, vec![255.0, 255.0, 255.0])).unwrap();
        assert!((white.data[0] - 255.0).abs() < 1e-4);
        let red = to_grayscale(&raw(3, vec![255.0, 0.0, 0.0])).unwrap();
        assert!((red.data[0] - 76.245).abs() < 1e-4);
        let gray = raw(1, vec![3.0, 200.0]);
        assert_eq!(to_grayscale(&gray).unwrap().data, gray.data);
        assert!(to_grayscale(&raw(2, vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = GrayImage {
            width: 5,
            height: 5,
            data: (0..25).map(|i| (i * 7 % 11) as f32).collect(),
        };
        assert_eq!(resize(&img, 5), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = GrayImage {
            width: 2,
            height: 2,
            data: vec![0.7; 4],
        };
        for s in [1, 3, 7, 32] {
            assert!(resize(&img, s).data.iter().all(|&v| (v - 0.7).abs() < 1e-6));
        }
    }

    #[test]
    fn resize_ramp_matches_hand_computation() {
        // v(r, c) = 4r + c; each 2x2 output samples the midpoint of a 2x2 block
        let img = GrayImage {
            width: 4,
            height: 4,
            data: (0..16).map(|i| i as f32).collect(),
        };
        assert_eq!(resize(&img, 2).data, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn normalize_examples() {
        let img = GrayImage {
            width: 3,
            height: 1,
            data: vec![255.0, 0.0, 127.0],
        };
        let n = normalize(&img).unwrap();
        assert_eq!(n.data[0], 1.0);
        assert_eq!(n.data[1], 0.0);
        assert!((n.data[2] - 0.498_04).abs() < 1e-5);
        let bad = GrayImage {
            width: 1,
            height: 1,
            data: vec![256.0],
        };
        assert!(normalize(&bad).is_err());
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let img = RawImage {
            width: 7,
            height: 5,
            channels: 3,
            data: (0..105).map(|i| (i * 37 % 256) as f32).collect(),
        };
        let once = preprocess(&img, 4).unwrap();
        let again_raw = RawImage {
            width: 4,
            height: 4,
            channels: 1,
            data: once.data.iter().map(|v| v * 255.0).collect(),
        };
        let twice = preprocess(&again_raw, 4).unwrap();
        for (a, b) in once.data.iter().zip(&twice.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
