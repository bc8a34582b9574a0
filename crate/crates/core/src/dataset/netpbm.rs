//! PGM/PPM (netpbm `P2`, `P3`, `P5`, `P6`) decoding and binary encoding.

use super::RawImage;

/// Decodes a PGM or PPM file. Sample values are rescaled from `0..=maxval`
/// to `0..=255`.
pub fn decode(bytes: &[u8]) -> Result<RawImage, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    let (channels, ascii) = match magic.as_str() {
        "P2" => (1, true),
        "P3" => (3, true),
        "P5" => (1, false),
        "P6" => (3, false),
        other => return Err(format!("unsupported netpbm magic {other:?}")),
    };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or("image dimensions overflow")?;
    let scale = 255.0 / maxval as f32;
    let mut data = Vec::with_capacity(count);
    if ascii {
        for _ in 0..count {
            let v = cur.number()?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f32 * scale);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        if !cur.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            return Err("missing whitespace after header".into());
        }
        cur.pos += 1;
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        let raster = &bytes[cur.pos..];
        if raster.len() < count * width_bytes {
            return Err(format!("truncated raster: need {} bytes, have {}", count * width_bytes, raster.len()));
        }
        for i in 0..count {
            let v = if width_bytes == 2 {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
            } else {
                raster[i] as usize
            };
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f32 * scale);
        }
    }
    Ok(RawImage {
        width,
        height,
        channels,
        data,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(b) = self.peek() {
            if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.peek().is_some_and(|b| !b.is_ascii_whitespace() && b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("unexpected end of header".into());
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize, String> {
        let tok = self.token()?;
        tok.parse().map_err(|_| format!("expected a number, found {tok:?}"))
    }
}

/// Binary `P5` encoding of an 8-bit grayscale raster.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary `P6` encoding of an interleaved 8-bit RGB raster.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "pixel count");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Quantizes `[0, 1]` intensities to bytes, rounding to nearest.
pub fn quantize(values: &[f32]) -> Vec<u8> {
    values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}
