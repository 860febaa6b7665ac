use rand::Rng;

use super::types::{quantize, GrayImage};
use crate::error::ImagingError;
use crate::mask::BinaryMask;

/// Maps 8-bit levels to [0, 1] by dividing by 255.
pub fn normalize01(width: usize, height: usize, raw: &[u8]) -> Result<GrayImage, ImagingError> {
    GrayImage::new(width, height, raw.iter().map(|&v| v as f32 / 255.0).collect())
}

/// Source coordinate for corner-aligned sampling.
fn corner_aligned(out: usize, out_len: usize, in_len: usize) -> f64 {
    if out_len <= 1 {
        (in_len as f64 - 1.0) / 2.0
    } else {
        out as f64 * (in_len as f64 - 1.0) / (out_len as f64 - 1.0)
    }
}

/// Bilinear resize with corner alignment: the corner pixels of input and
/// output coincide.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImagingError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::InvalidArgument(format!(
            "output size {out_w}x{out_h} must be positive"
        )));
    }
    if (out_w, out_h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let sy = corner_aligned(oy, out_h, img.height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = corner_aligned(ox, out_w, img.width);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = sx - x0 as f64;
            let p = |r: usize, c: usize| img.get(r, c) as f64;
            let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
            let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
            pixels.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    GrayImage::new(out_w, out_h, pixels)
}

/// Nearest-neighbour resize; output stays binary.
pub fn resize_nearest(mask: &BinaryMask, out_w: usize, out_h: usize) -> BinaryMask {
    if (out_w, out_h) == (mask.width(), mask.height()) {
        return mask.clone();
    }
    BinaryMask::from_fn(out_w, out_h, |r, c| {
        mask.get(r * mask.height() / out_h, c * mask.width() / out_w)
    })
}

/// Global 256-bin histogram equalization.
///
/// Level `v` maps to `(cdf(v) - cdf_min) / (1 - cdf_min)`, where `cdf_min`
/// is the cumulative fraction at the lowest occupied level. An image with a
/// single occupied level is returned unchanged.
pub fn equalize_hist(img: &GrayImage) -> GrayImage {
    let levels: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    let mut hist = [0u64; 256];
    for &l in &levels {
        hist[l as usize] += 1;
    }
    let total = levels.len() as f64;
    let Some(first) = hist.iter().position(|&c| c > 0) else {
        return img.clone();
    };
    let cdf_min = hist[first] as f64 / total;
    if hist[first] as f64 == total {
        return img.clone();
    }
    let mut lut = [0.0f32; 256];
    let mut running = 0u64;
    for (level, &count) in hist.iter().enumerate() {
        running += count;
        let cdf = running as f64 / total;
        lut[level] = ((cdf - cdf_min) / (1.0 - cdf_min)).clamp(0.0, 1.0) as f32;
    }
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: levels.iter().map(|&l| lut[l as usize]).collect(),
    }
}

/// Axis-aligned crop rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Draws a square-fraction crop: side fraction uniform in `[min_frac, 1]`,
/// offset uniform over all positions that keep the window inside.
pub fn sample_crop_window<R: Rng + ?Sized>(
    rng: &mut R,
    width: usize,
    height: usize,
    min_frac: f32,
) -> Result<CropWindow, ImagingError> {
    if !(min_frac > 0.0 && min_frac <= 1.0) {
        return Err(ImagingError::InvalidArgument(format!(
            "min_frac must lie in (0, 1], got {min_frac}"
        )));
    }
    let frac = rng.random_range(min_frac..=1.0) as f64;
    let cw = ((width as f64 * frac).round() as usize).clamp(1, width);
    let ch = ((height as f64 * frac).round() as usize).clamp(1, height);
    let x = rng.random_range(0..=width - cw);
    let y = rng.random_range(0..=height - ch);
    Ok(CropWindow {
        x,
        y,
        width: cw,
        height: ch,
    })
}

pub fn crop_image(img: &GrayImage, win: CropWindow) -> GrayImage {
    let mut px = Vec::with_capacity(win.width * win.height);
    for r in win.y..win.y + win.height {
        px.extend_from_slice(&img.pixels[r * img.width + win.x..r * img.width + win.x + win.width]);
    }
    GrayImage {
        width: win.width,
        height: win.height,
        pixels: px,
    }
}

pub fn crop_mask(mask: &BinaryMask, win: CropWindow) -> BinaryMask {
    BinaryMask::from_fn(win.width, win.height, |r, c| mask.get(win.y + r, win.x + c))
}

/// Crops image and mask with one random window and resizes both back to
/// their original size (bilinear for the image, nearest for the mask).
pub fn random_crop_resize<R: Rng + ?Sized>(
    img: &GrayImage,
    mask: &BinaryMask,
    rng: &mut R,
    min_frac: f32,
) -> Result<(GrayImage, BinaryMask), ImagingError> {
    if (img.width, img.height) != (mask.width(), mask.height()) {
        return Err(ImagingError::DimensionMismatch(
            img.width,
            img.height,
            mask.width(),
            mask.height(),
        ));
    }
    let win = sample_crop_window(rng, img.width, img.height, min_frac)?;
    let image = resize_bilinear(&crop_image(img, win), img.width, img.height)?;
    let mask = resize_nearest(&crop_mask(mask, win), mask.width(), mask.height());
    Ok((image, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_levels() {
        let g = normalize01(3, 1, &[0, 255, 128]).unwrap();
        assert_eq!(g.pixels[0], 0.0);
        assert_eq!(g.pixels[1], 1.0);
        assert!((g.pixels[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn bilinear_basics() {
        let c = GrayImage::filled(5, 4, 0.3);
        let r = resize_bilinear(&c, 7, 9).unwrap();
        assert!(r.pixels.iter().all(|&v| (v - 0.3).abs() < 1e-7));

        let img = GrayImage::new(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 2).unwrap(), img);

        let two = GrayImage::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(resize_bilinear(&two, 3, 1).unwrap().pixels, vec![0.0, 0.5, 1.0]);
        assert!(resize_bilinear(&two, 0, 1).is_err());
    }

    #[test]
    fn nearest_basics() {
        let one = BinaryMask::from_fn(1, 1, |_, _| true);
        assert_eq!(resize_nearest(&one, 4, 4).count_ones(), 16);

        let checker = BinaryMask::from_fn(2, 2, |r, c| (r + c) % 2 == 0);
        assert_eq!(resize_nearest(&checker, 2, 2), checker);
        let big = resize_nearest(&checker, 4, 4);
        let oracle = BinaryMask::from_fn(4, 4, |r, c| checker.get(r / 2, c / 2));
        assert_eq!(big, oracle);
    }

    #[test]
    fn equalize_constant_and_uniform() {
        let c = GrayImage::filled(4, 4, 0.4);
        assert_eq!(equalize_hist(&c), c);

        let uniform = GrayImage::new(16, 16, (0..256).map(|v| v as f32 / 255.0).collect()).unwrap();
        let eq = equalize_hist(&uniform);
        for (a, b) in eq.pixels.iter().zip(&uniform.pixels) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn equalize_two_levels_uses_min_shift() {
        // 25% at 0.2, 75% at 0.8: cdf 0.25 and 1.0, shifted by cdf_min = 0.25
        let mut px = vec![0.2f32; 4];
        px.extend(vec![0.8f32; 12]);
        let eq = equalize_hist(&GrayImage::new(4, 4, px).unwrap());
        assert_eq!(eq.pixels[0], 0.0);
        assert_eq!(eq.pixels[15], 1.0);
    }

    #[test]
    fn crop_identity_at_full_fraction() {
        let img = GrayImage::new(4, 3, (0..12).map(|v| v as f32 / 12.0).collect()).unwrap();
        let mask = BinaryMask::from_fn(4, 3, |r, c| r == c);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (i2, m2) = random_crop_resize(&img, &mask, &mut rng, 1.0).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn crop_is_reproducible() {
        let img = GrayImage::new(16, 16, (0..256).map(|v| v as f32 / 255.0).collect()).unwrap();
        let mask = BinaryMask::from_fn(16, 16, |r, c| r > 4 && c < 9);
        let a = random_crop_resize(&img, &mask, &mut ChaCha8Rng::seed_from_u64(3), 0.5).unwrap();
        let b = random_crop_resize(&img, &mask, &mut ChaCha8Rng::seed_from_u64(3), 0.5).unwrap();
        assert_eq!(a, b);
        assert!(random_crop_resize(&img, &mask, &mut ChaCha8Rng::seed_from_u64(3), 0.0).is_err());
    }

    #[test]
    fn crop_mask_count_matches_window_oracle() {
        let (w, h) = (32usize, 24usize);
        let img = GrayImage::filled(w, h, 0.5);
        let mask = BinaryMask::from_fn(w, h, |r, c| (r / 3 + c / 5) % 2 == 0);
        for seed in 0..20 {
            let win = sample_crop_window(&mut ChaCha8Rng::seed_from_u64(seed), w, h, 0.4).unwrap();
            // independent index math: output pixel (r, c) reads window cell
            // (r * win_h / h, c * win_w / w)
            let mut expected = 0;
            for r in 0..h {
                for c in 0..w {
                    let sr = win.y + r * win.height / h;
                    let sc = win.x + c * win.width / w;
                    expected += usize::from(mask.get(sr, sc));
                }
            }
            let (_, m) = random_crop_resize(&img, &mask, &mut ChaCha8Rng::seed_from_u64(seed), 0.4).unwrap();
            assert_eq!(m.count_ones(), expected, "seed {seed}");
            // each window cell is replicated at most ceil(w/win_w)*ceil(h/win_h) times
            let reps = w.div_ceil(win.width) * h.div_ceil(win.height);
            let inside = crop_mask(&mask, win).count_ones();
            assert!(inside <= mask.count_ones());
            assert!(m.count_ones() <= inside * reps);
        }
    }
}
