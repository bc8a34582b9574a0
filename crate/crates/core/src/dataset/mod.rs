//! Image ingestion, preprocessing and train/validation splits.

pub mod netpbm;
mod preprocess;
mod split;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::engine::Tensor;
use crate::{Error, Result};

pub use preprocess::{normalize, preprocess, resize, resize_bilinear, to_grayscale, LUMA};
pub use split::{split, DatasetManifest, ManifestEntry, Split, MANIFEST_HEADER};
pub use synth::{synthesize, Blob, SynthImage};

/// Decoded image with 1 or 3 interleaved channels, samples in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Single-channel image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    /// `size`×`size` intensities in `[0, 1]`.
    pub pixels: GrayImage,
    /// 0 = no tumor, 1 = tumor.
    pub label: u8,
    pub split: Split,
}

/// Subdirectory names of the two classes under a dataset root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub positive: String,
    pub negative: String,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            positive: "yes".into(),
            negative: "no".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RawRecord {
    pub id: String,
    pub label: u8,
    pub image: RawImage,
}

#[derive(Clone, Debug)]
pub struct DecodeFailure {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub records: Vec<RawRecord>,
    pub failures: Vec<DecodeFailure>,
    /// Decoded records per class, indexed by label.
    pub counts: [usize; 2],
}

/// Share of undecodable files above which loading fails.
pub const MAX_FAILURE_RATE: f64 = 0.10;

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_none_or(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Decodes every file of the two class subdirectories.
///
/// Undecodable files are logged and skipped unless more than
/// [`MAX_FAILURE_RATE`] of all files fail.
pub fn load_directory(root: &Path, layout: &Layout) -> Result<LoadReport> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    let classes = [(0u8, &layout.negative), (1u8, &layout.positive)];
    let mut listed = Vec::new();
    for (label, sub) in classes {
        for path in list_files(&root.join(sub))? {
            listed.push((label, sub.as_str(), path));
        }
    }
    let decoded: Vec<std::result::Result<RawRecord, DecodeFailure>> = listed
        .par_iter()
        .map(|(label, sub, path)| {
            let fail = |message: String| DecodeFailure {
                path: path.clone(),
                message,
            };
            let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| fail("file name is not UTF-8".into()))?;
            if name.contains(['\t', '\n', '\r', ',']) {
                return Err(fail("file name contains a tab, comma or line break".into()));
            }
            let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
            let image = netpbm::decode(&bytes).map_err(fail)?;
            Ok(RawRecord {
                id: format!("{sub}/{name}"),
                label: *label,
                image,
            })
        })
        .collect();
    let total = decoded.len();
    let mut records = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for item in decoded {
        match item {
            Ok(r) => records.push(r),
            Err(f) => {
                log::warn!("skipping {}: {}", f.path.display(), f.message);
                failures.push(f);
            }
        }
    }
    let mut counts = [0usize; 2];
    for r in &records {
        counts[r.label as usize] += 1;
    }
    for (label, sub) in classes {
        if counts[label as usize] == 0 {
            return Err(Error::NoImages(root.join(sub)));
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
        });
    }
    Ok(LoadReport {
        records,
        failures,
        counts,
    })
}

/// A batch of preprocessed images as an engine tensor.
#[derive(Clone, Debug)]
pub struct ImageSet {
    pub ids: Vec<String>,
    /// `[N, 1, S, S]`.
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn from_images<'a>(items: impl IntoIterator<Item = (&'a str, &'a GrayImage, u8)>) -> Result<ImageSet> {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let mut dims = None;
        for (id, img, label) in items {
            if *dims.get_or_insert((img.height, img.width)) != (img.height, img.width) {
                return Err(Error::Shape(format!("image {id} has a different size")));
            }
            ids.push(id.to_string());
            labels.push(label as usize);
            data.extend_from_slice(&img.data);
        }
        let (h, w) = dims.ok_or_else(|| Error::InvalidArgument("empty image set".into()))?;
        Ok(ImageSet {
            images: Tensor::new(vec![ids.len(), 1, h, w], data)?,
            ids,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Images at the given positions, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        let per: usize = self.images.shape()[1..].iter().product();
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        ImageSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            images: Tensor::new(shape, data).expect("selection shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Preprocessed images with their split assignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<LabeledImage>,
    pub failures: Vec<DecodeFailure>,
}

impl Dataset {
    pub fn load(root: &Path, layout: &Layout, target_size: usize, fraction: f64, seed: u64) -> Result<Dataset> {
        let report = load_directory(root, layout)?;
        let mut ds = Self::from_records(report.records, target_size, fraction, seed)?;
        ds.manifest.source = root.display().to_string();
        ds.failures = report.failures;
        Ok(ds)
    }

    pub fn from_records(records: Vec<RawRecord>, target_size: usize, fraction: f64, seed: u64) -> Result<Dataset> {
        if target_size == 0 {
            return Err(Error::InvalidArgument("target size must be positive".into()));
        }
        let keys: Vec<(String, u8)> = records.iter().map(|r| (r.id.clone(), r.label)).collect();
        let mut manifest = split(&keys, fraction, seed)?;
        manifest.target_size = target_size;
        let pixels: Vec<GrayImage> = records
            .par_iter()
            .map(|r| preprocess(&r.image, target_size))
            .collect::<Result<_>>()?;
        let images = records
            .into_iter()
            .zip(pixels)
            .zip(&manifest.entries)
            .map(|((r, pixels), entry)| LabeledImage {
                id: r.id,
                pixels,
                label: r.label,
                split: entry.split,
            })
            .collect();
        Ok(Dataset {
            manifest,
            images,
            failures: Vec::new(),
        })
    }

    /// Runs synthetic slices through the same preprocessing chain as files.
    pub fn from_synthetic(images: &[SynthImage], target_size: usize, fraction: f64, seed: u64) -> Result<Dataset> {
        let records = images.iter().map(synthetic_record).collect();
        let mut ds = Self::from_records(records, target_size, fraction, seed)?;
        ds.manifest.source = "synthetic".into();
        Ok(ds)
    }

    /// Reassigns splits from a previously written manifest; every image must
    /// appear in it.
    pub fn apply_manifest(&mut self, entries: &[ManifestEntry]) -> Result<()> {
        let lookup: std::collections::HashMap<&str, &ManifestEntry> = entries.iter().map(|e| (e.id.as_str(), e)).collect();
        for img in &mut self.images {
            let entry = lookup
                .get(img.id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("image {} missing from manifest", img.id)))?;
            img.split = entry.split;
        }
        for (img, entry) in self.images.iter().zip(&mut self.manifest.entries) {
            entry.split = img.split;
        }
        Ok(())
    }

    pub fn set(&self, split: Option<Split>) -> Result<ImageSet> {
        ImageSet::from_images(
            self.images
                .iter()
                .filter(|i| split.is_none_or(|s| i.split == s))
                .map(|i| (i.id.as_str(), &i.pixels, i.label)),
        )
    }

    pub fn train(&self) -> Result<ImageSet> {
        self.set(Some(Split::Train))
    }

    pub fn val(&self) -> Result<ImageSet> {
        self.set(Some(Split::Val))
    }
}

/// Converts a synthetic slice into a raw single-channel record.
pub fn synthetic_record(img: &SynthImage) -> RawRecord {
    RawRecord {
        id: img.id.clone(),
        label: img.label,
        image: RawImage {
            width: img.pixels.width,
            height: img.pixels.height,
            channels: 1,
            data: img.pixels.data.iter().map(|v| v * 255.0).collect(),
        },
    }
}

/// Writes slices as binary PGM files under `<root>/yes` and `<root>/no`.
pub fn write_synthetic(root: &Path, images: &[SynthImage], layout: &Layout) -> Result<()> {
    for sub in [&layout.positive, &layout.negative] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for img in images {
        let sub = if img.label == 1 { &layout.positive } else { &layout.negative };
        let name = img.id.rsplit('/').next().unwrap_or(&img.id);
        let path = root.join(sub).join(format!("{name}.pgm"));
        let bytes = netpbm::encode_pgm(img.pixels.width, img.pixels.height, &netpbm::quantize(&img.pixels.data));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
