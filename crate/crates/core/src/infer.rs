//! Inference: probability maps, post-processing, prediction and evaluation.

use crate::data::{Batches, DatasetIndex};
use crate::error::{Error, ImagingError, ModelError, Result};
use crate::imaging::{self, GrayImage, ProbabilityMap, RgbImage};
use crate::mask::BinaryMask;
use crate::metrics::{self, EvalEntry, EvalReport};
use crate::model::{Mode, UNet};
use crate::rle;
use crate::tensor::{no_grad, Tensor};

pub const DEFAULT_THETA: f32 = 0.5;
pub const DEFAULT_MIN_AREA: usize = 32;
pub const EVAL_BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Preprocessed input at model resolution.
    pub image: GrayImage,
    pub prob: ProbabilityMap,
    pub mask: BinaryMask,
    pub rle: String,
    pub overlay: RgbImage,
}

pub fn check_theta(theta: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

/// Eval-mode forward without graph construction; one map per batch item.
pub fn probability_maps(model: &UNet, images: &Tensor) -> Result<Vec<ProbabilityMap>> {
    let out = no_grad(|| model.forward(images, Mode::Eval))?;
    let &[n, c, h, w] = out.shape() else {
        unreachable!("model output is 4-D")
    };
    let plane = h * w;
    (0..n)
        .map(|i| {
            let start = i * c * plane;
            ProbabilityMap::new(w, h, out.data()[start..start + plane].to_vec()).map_err(Error::from)
        })
        .collect()
}

/// Threshold on the 8-bit quantized map, then drop components smaller than
/// `min_area`. Anything holding the quantized map can reproduce the mask.
pub fn postprocess(prob: &ProbabilityMap, theta: f32, min_area: usize) -> BinaryMask {
    let raw = imaging::binarize_quantized(prob.width, prob.height, &prob.quantized(), theta);
    imaging::remove_small_components(&raw, min_area)
}

/// Full single-image pipeline on PNG bytes.
pub fn predict(model: &UNet, png: &[u8], theta: f32, min_area: usize) -> Result<Prediction> {
    check_theta(theta)?;
    if imaging::detect_corrupt(png) {
        return Err(ImagingError::Corrupt("input is not a decodable PNG".into()).into());
    }
    let size = model.config().image_size;
    let image = imaging::preprocess_png(png, size)?;
    let x = Tensor::new(image.pixels.clone(), &[1, 1, size, size])?;
    let prob = probability_maps(model, &x)?.remove(0);
    let mask = postprocess(&prob, theta, min_area);
    let overlay = imaging::overlay(&image, &mask, imaging::DEFAULT_ALPHA)?;
    Ok(Prediction {
        rle: rle::encode(&mask),
        image,
        prob,
        mask,
        overlay,
    })
}

/// Mean BCE (every pixel weighted equally) and per-sample scores over an
/// index, in index order.
pub fn score_index(
    model: &UNet,
    index: &DatasetIndex,
    batch_size: usize,
    theta: f32,
    min_area: usize,
) -> Result<(f64, Vec<EvalEntry>)> {
    check_theta(theta)?;
    if model.config().image_size != index.image_size {
        return Err(ModelError::BadInput {
            what: "image size",
            detail: format!(
                "model expects {0}x{0}, dataset yields {1}x{1}",
                model.config().image_size,
                index.image_size
            ),
        }
        .into());
    }
    let mut loss_sum = 0.0f64;
    let mut entries = Vec::with_capacity(index.len());
    for batch in Batches::new(index, batch_size, None, None)? {
        let batch = batch?;
        let probs = probability_maps(model, &batch.images)?;
        let p = Tensor::new(probs.iter().flat_map(|m| m.values.iter().copied()).collect(), batch.masks.shape())?;
        let loss = no_grad(|| metrics::bce_loss(&p, &batch.masks))?.item()?;
        loss_sum += loss as f64 * batch.len() as f64;
        let s = index.image_size;
        for (i, (id, prob)) in batch.ids.into_iter().zip(&probs).enumerate() {
            let truth = &batch.masks.data()[i * s * s..(i + 1) * s * s];
            let truth = BinaryMask::from_fn(s, s, |r, c| truth[r * s + c] >= 0.5);
            let pred = postprocess(prob, theta, min_area);
            entries.push(EvalEntry {
                sample_id: id,
                dice: metrics::dice(&pred, &truth)?,
                iou: metrics::iou(&pred, &truth)?,
            });
        }
    }
    let n = entries.len().max(1) as f64;
    Ok((loss_sum / n, entries))
}

pub fn evaluate(model: &UNet, index: &DatasetIndex, theta: f32, min_area: usize) -> Result<EvalReport> {
    let (_, entries) = score_index(model, index, EVAL_BATCH, theta, min_area)?;
    Ok(metrics::aggregate(entries, theta, min_area)?)
}
