//! `TSCK` checkpoint files. All integers and floats are little-endian:
//!
//! ```text
//! magic "TSCK" | u8 version = 1
//! spec:    u32 input_size | u32 n_conv | n_conv × (u32 filters, u32 kernel, u32 stride, u32 padding)
//!          u32 pool_window | u32 pool_stride | f64 dropout | u32 classes | f64 bn_momentum | f64 bn_eps
//! run:     u64 seed | u32 epoch | f32 best_val_accuracy
//! tensors: u32 count | count × (u16 name_len, name bytes, u8 ndim, ndim × u32 dim, f32 data…)
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Tensors appear in parameter order followed by `bn.running_mean` and
//! `bn.running_var`.

use std::path::Path;

use crate::cnn::{Cnn, ConvSpec, ModelSpec};
use crate::engine::{BatchNormStats, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSCK";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Cnn<f32>,
    pub seed: u64,
    pub best_val_accuracy: f32,
}

impl Checkpoint {
    pub fn new(model: Cnn<f32>, seed: u64, best_val_accuracy: f32) -> Self {
        Checkpoint {
            model,
            seed,
            best_val_accuracy,
        }
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    out.extend_from_slice(&u32_of(v, what)?.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::InvalidArgument(format!("tensor name {name} too long")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        put_u32(out, d, "dimension")?;
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let m = &ck.model;
    let spec = m.spec();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u32(&mut out, spec.input_size, "input size")?;
    put_u32(&mut out, spec.convs.len(), "conv count")?;
    for c in &spec.convs {
        for v in [c.filters, c.kernel, c.stride, c.padding] {
            put_u32(&mut out, v, "conv field")?;
        }
    }
    put_u32(&mut out, spec.pool_window, "pool window")?;
    put_u32(&mut out, spec.pool_stride, "pool stride")?;
    out.extend_from_slice(&spec.dropout.to_le_bytes());
    put_u32(&mut out, spec.classes, "classes")?;
    out.extend_from_slice(&spec.bn_momentum.to_le_bytes());
    out.extend_from_slice(&spec.bn_eps.to_le_bytes());

    out.extend_from_slice(&ck.seed.to_le_bytes());
    put_u32(&mut out, m.epochs_trained(), "epoch")?;
    out.extend_from_slice(&ck.best_val_accuracy.to_le_bytes());

    let names = m.parameter_names();
    put_u32(&mut out, names.len() + 2, "tensor count")?;
    for (name, t) in names.iter().zip(m.parameters()) {
        put_tensor(&mut out, name, t)?;
    }
    put_tensor(&mut out, "bn.running_mean", &m.bn_stats().mean)?;
    put_tensor(&mut out, "bn.running_var", &m.bn_stats().var)?;
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Integrity(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?;
        let ndim = self.take(1)?[0] as usize;
        let shape = (0..ndim).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = count
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Integrity(format!("{name}: shape {shape:?} overflows")))?;
        let data = self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        Ok((name, Tensor::new(shape, data)?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 1 || &bytes[..4] != MAGIC {
        return Err(Error::Integrity("missing TSCK magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes.len() < 9 {
        return Err(Error::Integrity("file truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 5 };
    let input_size = r.u32()?;
    let n_conv = r.u32()?;
    if n_conv > 64 {
        return Err(Error::Integrity(format!("implausible conv count {n_conv}")));
    }
    let convs = (0..n_conv)
        .map(|_| {
            Ok(ConvSpec {
                filters: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
                padding: r.u32()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = ModelSpec {
        input_size,
        convs,
        pool_window: r.u32()?,
        pool_stride: r.u32()?,
        dropout: r.f64()?,
        classes: r.u32()?,
        bn_momentum: r.f64()?,
        bn_eps: r.f64()?,
    };
    spec.validate().map_err(|e| Error::Integrity(format!("embedded model spec: {e}")))?;
    let seed = u64::from_le_bytes(r.array()?);
    let epoch = r.u32()?;
    let best_val_accuracy = f32::from_le_bytes(r.array()?);

    let layout = spec.parameter_layout()?;
    let count = r.u32()?;
    if count != layout.len() + 2 {
        return Err(Error::Integrity(format!("expected {} tensors, found {count}", layout.len() + 2)));
    }
    let c = spec.convs.last().expect("validated").filters;
    let expected = layout
        .into_iter()
        .chain([("bn.running_mean".to_string(), vec![c]), ("bn.running_var".to_string(), vec![c])]);
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in expected {
        let (name, t) = r.tensor()?;
        if name != want_name || t.shape() != want_shape.as_slice() {
            return Err(Error::Integrity(format!(
                "tensor {name} {:?} does not match spec entry {want_name} {want_shape:?}",
                t.shape()
            )));
        }
        tensors.push(t);
    }
    if r.pos != body.len() {
        return Err(Error::Integrity(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let var = tensors.pop().expect("two stats");
    let mean = tensors.pop().expect("two stats");
    let model = Cnn::from_parameters(spec, tensors, BatchNormStats { mean, var }, epoch)?;
    Ok(Checkpoint {
        model,
        seed,
        best_val_accuracy,
    })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
