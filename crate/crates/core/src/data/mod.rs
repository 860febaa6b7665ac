//! Dataset index, splitting, batching and the synthetic generator.

mod batch;
mod index;
mod synthetic;

pub use batch::{split, Batch, Batches, AUGMENT_MIN_FRAC};
pub use index::{image_path, load_index, DatasetIndex, IndexEntry, LoadReport, Sample, CSV_HEADER};
pub use synthetic::{
    draw_sample, generate_synthetic, synthetic_id, Ellipse, SyntheticConfig, SyntheticDataset,
    SyntheticSample,
};
