use crate::error::RleError;

/// Binary segmentation mask, stored row-major with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    /// Any nonzero input value is stored as 1.
    pub fn from_row_major(width: usize, height: usize, values: &[u8]) -> Result<Self, RleError> {
        if width == 0 || height == 0 {
            return Err(RleError::ZeroDimension { width, height });
        }
        assert_eq!(values.len(), width * height, "mask buffer length");
        Ok(Self {
            width,
            height,
            pixels: values.iter().map(|&v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(u8::from(f(row, col)));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.pixels[row * self.width + col] = u8::from(on);
    }

    /// Row-major {0,1} values.
    pub fn as_slice(&self) -> &[u8] {
        &self.pixels
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0)
    }

    /// Pixelwise OR with another mask of equal size.
    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a |= b;
        }
    }

    /// Values as f32 0.0/1.0, row-major.
    pub fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&v| v as f32).collect()
    }
}
