use std::collections::VecDeque;

use super::types::{GrayImage, ProbabilityMap, RgbImage};
use crate::error::ImagingError;
use crate::mask::BinaryMask;

/// Foreground iff `p >= theta`.
pub fn binarize(p: &ProbabilityMap, theta: f32) -> BinaryMask {
    BinaryMask::from_fn(p.width, p.height, |r, c| p.values[r * p.width + c] >= theta)
}

/// Threshold an 8-bit quantized probability map: foreground iff
/// `q >= theta * 255`.
pub fn binarize_quantized(width: usize, height: usize, q: &[u8], theta: f32) -> BinaryMask {
    let cut = theta as f64 * 255.0;
    BinaryMask::from_fn(width, height, |r, c| q[r * width + c] as f64 >= cut)
}

/// Sizes of 4-connected foreground components; `labels` holds a component
/// index + 1 per pixel (0 for background).
fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if labels[start] != 0 || mask.as_slice()[start] == 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let neighbours = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
            ];
            for j in neighbours.into_iter().flatten() {
                if labels[j] == 0 && mask.as_slice()[j] != 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Zeroes every 4-connected component with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area == 0 {
        return mask.clone();
    }
    let (labels, sizes) = label_components(mask);
    let values: Vec<u8> = labels
        .iter()
        .map(|&l| u8::from(l != 0 && sizes[l as usize - 1] >= min_area))
        .collect();
    BinaryMask::from_row_major(mask.width(), mask.height(), &values)
        .expect("dimensions come from an existing mask")
}

/// Renders the grayscale image as RGB and blends masked pixels toward red:
/// `out = (1 - alpha) * gray + alpha * (255, 0, 0)`.
pub fn overlay(img: &GrayImage, mask: &BinaryMask, alpha: f32) -> Result<RgbImage, ImagingError> {
    if (img.width, img.height) != (mask.width(), mask.height()) {
        return Err(ImagingError::DimensionMismatch(
            img.width,
            img.height,
            mask.width(),
            mask.height(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ImagingError::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let pixels = img
        .pixels
        .iter()
        .zip(mask.as_slice())
        .map(|(&g, &m)| {
            let gray = g as f64 * 255.0;
            if m == 0 {
                let v = gray.round() as u8;
                [v, v, v]
            } else {
                let a = alpha as f64;
                let red = ((1.0 - a) * gray + a * 255.0).round() as u8;
                let other = ((1.0 - a) * gray).round() as u8;
                [red, other, other]
            }
        })
        .collect();
    Ok(RgbImage {
        width: img.width,
        height: img.height,
        pixels,
    })
}
