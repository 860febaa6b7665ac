use std::io::Cursor;

use image::{ImageFormat, ImageReader};

use crate::error::ImagingError;
use crate::mask::BinaryMask;

/// Grayscale image with pixels in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    /// Values are clamped into [0, 1].
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, ImagingError> {
        if pixels.len() != width * height {
            return Err(ImagingError::BufferLength {
                width,
                height,
                len: pixels.len(),
            });
        }
        let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Rounds to 8-bit levels.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }
}

/// Per-pixel foreground probabilities in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, ImagingError> {
        if values.len() != width * height {
            return Err(ImagingError::BufferLength {
                width,
                height,
                len: values.len(),
            });
        }
        Ok(Self { width, height, values })
    }

    /// 8-bit quantization, `round(p * 255)`. Thresholding the quantized map
    /// at `q >= theta * 255` agrees with `p >= theta` whenever `theta * 255`
    /// sits halfway between two levels (for example `theta = 0.5`).
    pub fn quantized(&self) -> Vec<u8> {
        self.values.iter().map(|&v| quantize(v)).collect()
    }
}

/// 24-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit grayscale raster decoded from a PNG container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawGray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Decodes a PNG, converting colour images to 8-bit luma.
pub fn decode_gray(bytes: &[u8]) -> Result<RawGray, ImagingError> {
    let reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let img = reader
        .decode()
        .map_err(|e| ImagingError::Corrupt(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(ImagingError::Corrupt(format!("zero-sized image {w}x{h}")));
    }
    let expected = w * h * img.color().bytes_per_pixel() as usize;
    if img.as_bytes().len() != expected {
        return Err(ImagingError::Corrupt(format!(
            "pixel buffer holds {} bytes, expected {expected}",
            img.as_bytes().len()
        )));
    }
    let luma = img.into_luma8();
    Ok(RawGray {
        width: w,
        height: h,
        pixels: luma.into_raw(),
    })
}

/// Reads only the PNG header.
pub fn png_dimensions(bytes: &[u8]) -> Result<(usize, usize), ImagingError> {
    let reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| ImagingError::Corrupt(e.to_string()))?;
    Ok((w as usize, h as usize))
}

/// True when the bytes are not a fully decodable, non-empty image.
pub fn detect_corrupt(bytes: &[u8]) -> bool {
    decode_gray(bytes).is_err()
}

fn encode_png(width: usize, height: usize, data: &[u8], color: image::ExtendedColorType) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    image::write_buffer_with_format(
        &mut Cursor::new(&mut out),
        data,
        width as u32,
        height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn encode_gray_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>, ImagingError> {
    if pixels.len() != width * height {
        return Err(ImagingError::BufferLength {
            width,
            height,
            len: pixels.len(),
        });
    }
    encode_png(width, height, pixels, image::ExtendedColorType::L8)
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>, ImagingError> {
    let flat: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    encode_png(img.width, img.height, &flat, image::ExtendedColorType::Rgb8)
}

/// Mask as a black/white PNG (0 and 255).
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, ImagingError> {
    let px: Vec<u8> = mask.as_slice().iter().map(|&v| v * 255).collect();
    encode_gray_png(mask.width(), mask.height(), &px)
}

/// Any pixel at or above mid-gray is foreground.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, ImagingError> {
    let raw = decode_gray(bytes)?;
    Ok(BinaryMask::from_fn(raw.width, raw.height, |r, c| {
        raw.pixels[r * raw.width + c] >= 128
    }))
}
