#![allow(dead_code)]

pub mod gradcheck;
pub mod rle_oracle;

use std::path::Path;

use pneumoseg::data::{generate_synthetic, load_index, DatasetIndex, SyntheticConfig};
use pneumoseg::model::{ModelConfig, UNet};

/// Writes a synthetic dataset under `dir` and loads its index.
pub fn synthetic_index(dir: &Path, n: usize, size: usize, seed: u64) -> DatasetIndex {
    let ds = generate_synthetic(
        &SyntheticConfig {
            n_samples: n,
            image_size: size,
            seed,
            ..Default::default()
        },
        dir,
    )
    .unwrap();
    let (index, report) = load_index(&std::fs::read(&ds.csv_path).unwrap(), &ds.image_dir, size).unwrap();
    assert!(report.missing.is_empty() && report.corrupt.is_empty());
    index
}

pub fn small_config(size: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        depth: 2,
        base_channels: 8,
        blocks_per_stage: 2,
        image_size: size,
        seed,
        ..Default::default()
    }
}

pub fn small_model(size: usize, seed: u64) -> UNet {
    UNet::build(small_config(size, seed)).unwrap()
}
