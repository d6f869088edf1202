//! Segment-highlight and segment-contrast enhancement over 8-bit rasters,
//! plus binary PPM (P6) / PGM (P5) reading and writing.
//!
//! A mask value `v` is read as the soft weight `m = v / 255`. Highlight adds
//! `round(gain * m)` to every channel; contrast scales each channel by
//! `m + dim * (1 - m)`, leaving fully masked pixels untouched and dimming
//! fully unmasked ones to `dim`.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GAIN: u8 = 96;
pub const DEFAULT_DIM: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image is {image:?} but mask is {mask:?}")]
    DimensionMismatch { image: (usize, usize), mask: (usize, usize) },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed netpbm data: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImageError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl MaskBuffer {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn value(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    /// Soft weight in `[0, 1]`; 255 maps to exactly 1.0.
    pub fn weight(&self, index: usize) -> f64 {
        f64::from(self.values[index]) / 255.0
    }

    /// Maps every weight to 0 or 1: `m >= threshold` becomes fully masked.
    pub fn binarize(&self, threshold: f64) -> Result<Self, ImageError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ImageError::InvalidParam(format!("threshold {threshold} is outside [0, 1]")));
        }
        let values = (0..self.values.len())
            .map(|i| if self.weight(i) >= threshold { 255 } else { 0 })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            values,
        })
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidParam(format!("dimensions must be positive, got {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(ImageError::InvalidParam(format!("{width}x{height} needs {} samples, got {len}", width * height)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnhanceMode {
    Highlight,
    Contrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhanceParams {
    pub mode: EnhanceMode,
    pub gain: u8,
    pub dim: f64,
    /// Binarize the mask at this weight before enhancing.
    pub threshold: Option<f64>,
}

impl EnhanceParams {
    pub fn new(mode: EnhanceMode) -> Self {
        Self {
            mode,
            gain: DEFAULT_GAIN,
            dim: DEFAULT_DIM,
            threshold: None,
        }
    }
}

/// Applies the configured transform.
pub fn enhance(img: &ImageBuffer, mask: &MaskBuffer, params: &EnhanceParams) -> Result<ImageBuffer, ImageError> {
    let binarized;
    let mask = match params.threshold {
        Some(t) => {
            binarized = mask.binarize(t)?;
            &binarized
        }
        None => mask,
    };
    match params.mode {
        EnhanceMode::Highlight => enhance_highlight(img, mask, params.gain),
        EnhanceMode::Contrast => enhance_contrast(img, mask, params.dim),
    }
}

/// `clamp(p + round(gain * m), 0, 255)`; rounding is half away from zero.
pub fn highlight_channel(p: u8, m: f64, gain: u8) -> u8 {
    let add = (f64::from(gain) * m).round();
    (f64::from(p) + add).clamp(0.0, 255.0) as u8
}

/// `clamp(round(p * (m + dim * (1 - m))), 0, 255)`.
pub fn contrast_channel(p: u8, m: f64, dim: f64) -> u8 {
    let factor = m + dim * (1.0 - m);
    (f64::from(p) * factor).round().clamp(0.0, 255.0) as u8
}

fn check_pair(img: &ImageBuffer, mask: &MaskBuffer) -> Result<(), ImageError> {
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(ImageError::DimensionMismatch {
            image: (img.width, img.height),
            mask: (mask.width, mask.height),
        });
    }
    Ok(())
}

fn map_pixels(img: &ImageBuffer, mask: &MaskBuffer, f: impl Fn(u8, f64) -> u8) -> ImageBuffer {
    let pixels = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, px)| {
            let m = mask.weight(i);
            [f(px[0], m), f(px[1], m), f(px[2], m)]
        })
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        pixels,
    }
}

pub fn enhance_highlight(img: &ImageBuffer, mask: &MaskBuffer, gain: u8) -> Result<ImageBuffer, ImageError> {
    check_pair(img, mask)?;
    Ok(map_pixels(img, mask, |p, m| highlight_channel(p, m, gain)))
}

pub fn enhance_contrast(img: &ImageBuffer, mask: &MaskBuffer, dim: f64) -> Result<ImageBuffer, ImageError> {
    if !(0.0..=1.0).contains(&dim) {
        return Err(ImageError::InvalidParam(format!("dim {dim} is outside [0, 1]")));
    }
    check_pair(img, mask)?;
    Ok(map_pixels(img, mask, |p, m| contrast_channel(p, m, dim)))
}

// Netpbm

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(data: &[u8], magic: &[u8; 2]) -> Result<Header, ImageError> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(ImageError::Format(format!(
            "expected magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // Whitespace and `#` comments may precede each field.
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while data.get(pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if k == 0 && pos == 2 {
            return Err(ImageError::Format("missing whitespace after magic".into()));
        }
        let start = pos;
        while data.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Format("truncated or non-numeric header".into()));
        }
        *field = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Format("header value out of range".into()))?;
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Format("missing whitespace after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::Format(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Format(format!("dimensions must be positive, got {width}x{height}")));
    }
    Ok(Header {
        width,
        height,
        payload_start: pos,
    })
}

fn payload<'a>(data: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8], ImageError> {
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImageError::Format("dimensions overflow".into()))?;
    let body = &data[header.payload_start..];
    if body.len() < expected {
        return Err(ImageError::Format(format!("truncated payload: {} of {expected} bytes", body.len())));
    }
    if body.len() > expected {
        return Err(ImageError::Format(format!("{} trailing bytes after payload", body.len() - expected)));
    }
    Ok(body)
}

pub fn decode_ppm(data: &[u8]) -> Result<ImageBuffer, ImageError> {
    let header = parse_header(data, b"P6")?;
    let body = payload(data, &header, 3)?;
    let pixels = body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    ImageBuffer::new(header.width, header.height, pixels)
}

pub fn decode_pgm(data: &[u8]) -> Result<MaskBuffer, ImageError> {
    let header = parse_header(data, b"P5")?;
    let body = payload(data, &header, 1)?;
    MaskBuffer::new(header.width, header.height, body.to_vec())
}

/// Canonical form: `P6\n<w> <h>\n255\n` followed by the raster.
pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().flatten());
    out
}

pub fn encode_pgm(mask: &MaskBuffer) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.values);
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ImageError> {
    fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    fs::write(path, bytes).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    decode_ppm(&read_bytes(path.as_ref())?)
}

pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<(), ImageError> {
    write_bytes(path.as_ref(), &encode_ppm(img))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskBuffer, ImageError> {
    decode_pgm(&read_bytes(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &MaskBuffer) -> Result<(), ImageError> {
    write_bytes(path.as_ref(), &encode_pgm(mask))
}
