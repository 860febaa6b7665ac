use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::index::image_path;
use crate::error::DataError;
use crate::imaging;
use crate::mask::BinaryMask;
use crate::rle;

const BACKGROUND: f32 = 0.25;
const FOREGROUND: f32 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub image_size: usize,
    /// Fraction of samples (rounded to nearest) drawn without an ellipse.
    pub empty_fraction: f64,
    pub noise_std: f32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_samples: 16,
            image_size: 64,
            empty_fraction: 0.3,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

/// Filled ellipse in pixel coordinates; `angle` rotates the `a` axis away
/// from the column axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl Ellipse {
    /// Whether the centre of pixel `(row, col)` lies inside.
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (dx, dy) = (col as f64 + 0.5 - self.cx, row as f64 + 0.5 - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    pub fn mask(&self, size: usize) -> BinaryMask {
        BinaryMask::from_fn(size, size, |r, c| self.contains(r, c))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub id: String,
    pub ellipse: Option<Ellipse>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub csv_path: PathBuf,
    pub image_dir: PathBuf,
    pub samples: Vec<SyntheticSample>,
}

pub fn synthetic_id(i: usize) -> String {
    format!("synth_{i:05}")
}

/// Draws one sample: dark noisy background with an optional brighter ellipse.
/// Returns the 8-bit pixels and the exact mask.
pub fn draw_sample<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    with_ellipse: bool,
    noise_std: f32,
) -> Result<(Vec<u8>, Option<Ellipse>), DataError> {
    let noise = Normal::new(0.0f32, noise_std.max(0.0))
        .map_err(|e| DataError::InvalidArgument(format!("noise_std: {e}")))?;
    let s = size as f64;
    let ellipse = with_ellipse.then(|| Ellipse {
        cx: rng.random_range(0.3 * s..0.7 * s),
        cy: rng.random_range(0.3 * s..0.7 * s),
        a: rng.random_range(0.12 * s..0.25 * s),
        b: rng.random_range(0.12 * s..0.25 * s),
        angle: rng.random_range(0.0..std::f64::consts::PI),
    });
    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let inside = ellipse.is_some_and(|e| e.contains(r, c));
            let base = if inside { FOREGROUND } else { BACKGROUND };
            let v = (base + noise.sample(rng)).clamp(0.0, 1.0);
            pixels.push((v * 255.0).round() as u8);
        }
    }
    Ok((pixels, ellipse))
}

/// Writes `index.csv` and `images/<id>.png` under `out_dir`. Output is a
/// pure function of the config.
pub fn generate_synthetic(cfg: &SyntheticConfig, out_dir: &Path) -> Result<SyntheticDataset, DataError> {
    if cfg.image_size < 8 {
        return Err(DataError::InvalidArgument(format!(
            "image_size must be at least 8, got {}",
            cfg.image_size
        )));
    }
    if !(0.0..=1.0).contains(&cfg.empty_fraction) {
        return Err(DataError::InvalidArgument(format!(
            "empty_fraction must lie in [0, 1], got {}",
            cfg.empty_fraction
        )));
    }
    if !(cfg.noise_std >= 0.0) {
        return Err(DataError::InvalidArgument("noise_std must be non-negative".into()));
    }
    let image_dir = out_dir.join("images");
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Write { path, source }
    };
    fs::create_dir_all(&image_dir).map_err(write_err(&image_dir))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_empty = (cfg.n_samples as f64 * cfg.empty_fraction).round() as usize;
    let mut has_ellipse: Vec<bool> = (0..cfg.n_samples).map(|i| i >= n_empty).collect();
    has_ellipse.shuffle(&mut rng);

    let mut csv = String::from("ImageId,EncodedPixels\n");
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for (i, &positive) in has_ellipse.iter().enumerate() {
        let id = synthetic_id(i);
        let (pixels, ellipse) = draw_sample(&mut rng, cfg.image_size, positive, cfg.noise_std)?;
        let png = imaging::encode_gray_png(cfg.image_size, cfg.image_size, &pixels)
            .map_err(|source| DataError::Image { id: id.clone(), source })?;
        let path = image_path(&image_dir, &id);
        fs::write(&path, png).map_err(write_err(&path))?;
        let mask = match ellipse {
            Some(e) => e.mask(cfg.image_size),
            None => BinaryMask::zeros(cfg.image_size, cfg.image_size),
        };
        csv.push_str(&format!("{id},{}\n", rle::encode(&mask)));
        samples.push(SyntheticSample { id, ellipse });
    }
    let csv_path = out_dir.join("index.csv");
    fs::write(&csv_path, csv).map_err(write_err(&csv_path))?;
    Ok(SyntheticDataset {
        csv_path,
        image_dir,
        samples,
    })
}
