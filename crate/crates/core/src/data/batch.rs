use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::index::DatasetIndex;
use crate::error::DataError;
use crate::imaging;
use crate::tensor::Tensor;

/// Smallest crop side, as a fraction of the image, used by augmentation.
pub const AUGMENT_MIN_FRAC: f32 = 0.8;

/// Images and masks stacked as N×1×S×S tensors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    pub images: Tensor,
    pub masks: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Fraction `val_fraction` of the entries (rounded to nearest) goes to the
/// validation split; the rest trains. Membership depends only on `seed`.
pub fn split(
    index: &DatasetIndex,
    val_fraction: f64,
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex), DataError> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(DataError::InvalidArgument(format!(
            "val_fraction must lie in [0, 1], got {val_fraction}"
        )));
    }
    let n = index.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, train) = order.split_at(n_val);
    let (mut val, mut train) = (val.to_vec(), train.to_vec());
    val.sort_unstable();
    train.sort_unstable();
    Ok((index.subset(&train), index.subset(&val)))
}

/// Iterator over mini-batches of a dataset.
pub struct Batches<'a> {
    index: &'a DatasetIndex,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Option<ChaCha8Rng>,
}

impl<'a> Batches<'a> {
    /// `shuffle_seed = None` keeps index order. Augmentation draws from its
    /// own stream derived from `aug_seed`.
    pub fn new(
        index: &'a DatasetIndex,
        batch_size: usize,
        shuffle_seed: Option<u64>,
        aug_seed: Option<u64>,
    ) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::InvalidArgument("batch_size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..index.len()).collect();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        Ok(Self {
            index,
            order,
            pos: 0,
            batch_size,
            augment: aug_seed.map(ChaCha8Rng::seed_from_u64),
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn load(&mut self, positions: &[usize]) -> Result<Batch, DataError> {
        let s = self.index.image_size;
        let mut ids = Vec::with_capacity(positions.len());
        let mut images = Vec::with_capacity(positions.len() * s * s);
        let mut masks = Vec::with_capacity(positions.len() * s * s);
        for &p in positions {
            let mut sample = self.index.load_sample(p)?;
            if let Some(rng) = self.augment.as_mut() {
                let (img, mask) = imaging::random_crop_resize(&sample.image, &sample.mask, rng, AUGMENT_MIN_FRAC)
                    .map_err(|source| DataError::Image {
                        id: sample.id.clone(),
                        source,
                    })?;
                sample.image = img;
                sample.mask = mask;
            }
            images.extend_from_slice(&sample.image.pixels);
            masks.extend(sample.mask.to_f32());
            ids.push(sample.id);
        }
        let shape = [positions.len(), 1, s, s];
        let invalid = |e: crate::error::TensorError| DataError::InvalidArgument(e.to_string());
        Ok(Batch {
            ids,
            images: Tensor::new(images, &shape).map_err(invalid)?,
            masks: Tensor::new(masks, &shape).map_err(invalid)?,
        })
    }
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let positions = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(self.load(&positions))
    }
}
