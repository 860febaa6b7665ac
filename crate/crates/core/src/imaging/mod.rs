//! Image I/O, preprocessing and prediction post-processing.
//!
//! All raster I/O uses PNG: 8-bit grayscale for inputs, masks and probability
//! maps, 24-bit RGB for overlays.

mod postprocess;
mod preprocess;
mod types;

pub use postprocess::{binarize, binarize_quantized, overlay, remove_small_components};
pub use preprocess::{
    crop_image, crop_mask, equalize_hist, normalize01, random_crop_resize, resize_bilinear,
    resize_nearest, sample_crop_window, CropWindow,
};
pub use types::{
    decode_gray, decode_mask_png, detect_corrupt, encode_gray_png, encode_mask_png,
    encode_rgb_png, png_dimensions, GrayImage, ProbabilityMap, RawGray, RgbImage,
};

/// Default overlay opacity.
pub const DEFAULT_ALPHA: f32 = 0.4;

/// Decoding, normalization and contrast correction followed by a bilinear
/// resize to `size`×`size`. This is the input transform shared by training,
/// evaluation and prediction.
pub fn preprocess_png(bytes: &[u8], size: usize) -> Result<GrayImage, crate::error::ImagingError> {
    let raw = decode_gray(bytes)?;
    let img = normalize01(raw.width, raw.height, &raw.pixels)?;
    resize_bilinear(&equalize_hist(&img), size, size)
}
