use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{DataError, ImagingError};
use crate::imaging::{self, GrayImage};
use crate::mask::BinaryMask;
use crate::rle;

/// Expected CSV header.
pub const CSV_HEADER: [&str; 2] = ["ImageId", "EncodedPixels"];

/// One image and its merged mask, stored as canonical RLE over the image's
/// native width and height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub rle: String,
    pub width: usize,
    pub height: usize,
}

/// A preprocessed training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    /// Directory holding `<ImageId>.png`.
    pub root: PathBuf,
    /// Side length samples are resized to.
    pub image_size: usize,
}

/// Rows that were dropped while loading an index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub missing: Vec<String>,
    pub corrupt: Vec<String>,
}

pub fn image_path(root: &Path, id: &str) -> PathBuf {
    root.join(format!("{id}.png"))
}

/// Parses an `ImageId,EncodedPixels` CSV. Rows sharing an id are merged by
/// pixelwise OR. Ids whose image file is missing or corrupt are skipped and
/// listed in the returned report.
pub fn load_index(
    csv_bytes: &[u8],
    root: &Path,
    image_size: usize,
) -> Result<(DatasetIndex, LoadReport), DataError> {
    if image_size == 0 {
        return Err(DataError::InvalidArgument("image_size must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let header = reader.headers().map_err(|e| DataError::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(DataError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(u64, String)>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 || record[0].is_empty() {
            return Err(DataError::Csv {
                line,
                reason: format!("expected `id,rle`, found {} fields", record.len()),
            });
        }
        let id = record[0].to_string();
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((line, record[1].to_string()));
    }

    let mut report = LoadReport::default();
    let mut entries = Vec::with_capacity(order.len());
    for id in order {
        let path = image_path(root, &id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(_) => {
                report.missing.push(id);
                continue;
            }
        };
        let raw = match imaging::decode_gray(&bytes) {
            Ok(raw) => raw,
            Err(_) => {
                report.corrupt.push(id);
                continue;
            }
        };
        let mut mask = BinaryMask::zeros(raw.width, raw.height);
        for (line, text) in &rows[&id] {
            let m = rle::decode(text, raw.width, raw.height).map_err(|e| DataError::Csv {
                line: *line,
                reason: format!("{id}: {e}"),
            })?;
            mask.union_with(&m);
        }
        entries.push(IndexEntry {
            rle: rle::encode(&mask),
            id,
            width: raw.width,
            height: raw.height,
        });
    }
    Ok((
        DatasetIndex {
            entries,
            root: root.to_path_buf(),
            image_size,
        },
        report,
    ))
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// Index restricted to the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            entries: positions.iter().map(|&i| self.entries[i].clone()).collect(),
            root: self.root.clone(),
            image_size: self.image_size,
        }
    }

    /// Reads and preprocesses one sample: decode, normalize, equalize,
    /// resize the image bilinearly and the mask by nearest neighbour.
    pub fn load_sample(&self, position: usize) -> Result<Sample, DataError> {
        let entry = &self.entries[position];
        let path = image_path(&self.root, &entry.id);
        let bytes = std::fs::read(&path).map_err(|source| DataError::Io {
            id: entry.id.clone(),
            path: path.clone(),
            source,
        })?;
        let image_err = |source: ImagingError| DataError::Image {
            id: entry.id.clone(),
            source,
        };
        let raw = imaging::decode_gray(&bytes).map_err(image_err)?;
        if (raw.width, raw.height) != (entry.width, entry.height) {
            return Err(image_err(ImagingError::DimensionMismatch(
                raw.width,
                raw.height,
                entry.width,
                entry.height,
            )));
        }
        let img = imaging::normalize01(raw.width, raw.height, &raw.pixels).map_err(image_err)?;
        let img = imaging::resize_bilinear(&imaging::equalize_hist(&img), self.image_size, self.image_size)
            .map_err(image_err)?;
        let mask = rle::decode(&entry.rle, entry.width, entry.height).map_err(|source| DataError::Rle {
            id: entry.id.clone(),
            source,
        })?;
        Ok(Sample {
            id: entry.id.clone(),
            image: img,
            mask: imaging::resize_nearest(&mask, self.image_size, self.image_size),
        })
    }
}
