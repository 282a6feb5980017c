//! Image data handling: IDX container parsing, labeled datasets, and the
//! augmentations used for positive pairs and distribution shifts.

pub mod augment;
pub mod idx;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_for;

/// Dense image with pixels in `[0, 1]`, row-major, channel-last:
/// `pixels[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Image {
    /// Builds an image, clamping pixels into `[0, 1]`. Non-finite pixel
    /// values are an error.
    pub fn new(height: usize, width: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                got: pixels.len(),
            });
        }
        for p in &mut pixels {
            if !p.is_finite() {
                return Err(Error::Numeric("image pixel is not finite".into()));
            }
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape {
            height: self.height,
            width: self.width,
            channels: self.channels,
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Flattens to a column vector in pixel order.
    pub fn to_column(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.pixels)
    }

    /// Rebuilds an image from a flattened column.
    pub fn from_column(shape: ImageShape, column: &DVector<f64>) -> Result<Self> {
        if column.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: column.len(),
            });
        }
        Image::new(
            shape.height,
            shape.width,
            shape.channels,
            column.as_slice().to_vec(),
        )
    }
}

/// Replicates a grayscale image across three channels.
pub fn to_three_channel(img: &Image) -> Result<Image> {
    if img.channels != 1 {
        return Err(Error::InvalidConfig(format!(
            "to_three_channel expects 1 channel, got {}",
            img.channels
        )));
    }
    let mut pixels = Vec::with_capacity(img.pixels.len() * 3);
    for &p in &img.pixels {
        pixels.extend_from_slice(&[p, p, p]);
    }
    Image::new(img.height, img.width, 3, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Images with class labels in `0..=9`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
    pub split: SplitTag,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<u8>, split: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: images.len(),
                got: labels.len(),
            });
        }
        if images.is_empty() {
            return Err(Error::EmptyInput { what: "dataset" });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::InvalidConfig(format!(
                "labels must be in 0..=9, got {bad}"
            )));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    /// Loads an MNIST-style pair of IDX files (raw or gzip-compressed).
    pub fn load_idx_pair(
        images_path: &std::path::Path,
        labels_path: &std::path::Path,
        split: SplitTag,
    ) -> Result<Self> {
        let images = idx::parse_idx_images(&idx::read_idx_auto(images_path)?)?;
        let labels = idx::parse_idx_labels(&idx::read_idx_auto(labels_path)?)?;
        Self::new(images, labels, split)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Seeded subsample without replacement, preserving original order.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidConfig(format!(
                "subsample count {count} out of range for {} samples",
                self.len()
            )));
        }
        let mut rng = rng_for(seed, "subsample", 0);
        // Partial Fisher-Yates: the first `count` slots end up holding a
        // uniform draw without replacement.
        let mut indices: Vec<usize> = (0..self.len()).collect();
        for i in 0..count {
            let j = i + rand::Rng::random_range(&mut rng, 0..indices.len() - i);
            indices.swap(i, j);
        }
        let mut chosen: Vec<usize> = indices[..count].to_vec();
        chosen.sort_unstable();
        Ok(Self {
            images: chosen.iter().map(|&i| self.images[i].clone()).collect(),
            labels: chosen.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        })
    }

    /// Flattens every image into a column of an input matrix. All images
    /// must share one shape.
    pub fn to_inputs(&self) -> Result<(DMatrix<f64>, ImageShape)> {
        let shape = self.images[0].shape();
        for (i, img) in self.images.iter().enumerate() {
            if img.shape() != shape {
                return Err(Error::InvalidConfig(format!(
                    "image {i} has shape {:?}, expected {:?}",
                    img.shape(),
                    shape
                )));
            }
        }
        let mut inputs = DMatrix::zeros(shape.len(), self.len());
        for (i, img) in self.images.iter().enumerate() {
            inputs.column_mut(i).copy_from_slice(img.pixels());
        }
        Ok((inputs, shape))
    }

    /// Labels widened for embedding-set storage.
    pub fn labels_i32(&self) -> Vec<i32> {
        self.labels.iter().map(|&l| i32::from(l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, value: f64) -> Image {
        Image::new(h, w, 1, vec![value; h * w]).unwrap()
    }

    #[test]
    fn image_clamps_pixels() {
        let img = Image::new(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn image_rejects_bad_shapes_and_nan() {
        assert!(Image::new(0, 2, 1, vec![]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.0]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn three_channel_replicates_gray() {
        let img = Image::new(1, 2, 1, vec![0.5, 0.0]).unwrap();
        let rgb = to_three_channel(&img).unwrap();
        assert_eq!(rgb.channels(), 3);
        assert_eq!(rgb.pixels(), &[0.5, 0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(to_three_channel(&rgb).is_err());
    }

    #[test]
    fn column_roundtrip_preserves_pixels() {
        let img = Image::new(2, 2, 3, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let col = img.to_column();
        let back = Image::from_column(img.shape(), &col).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn dataset_validates_lengths_and_labels() {
        let imgs = vec![gray(2, 2, 0.1), gray(2, 2, 0.2)];
        assert!(LabeledDataset::new(imgs.clone(), vec![1], SplitTag::Train).is_err());
        assert!(LabeledDataset::new(imgs.clone(), vec![1, 10], SplitTag::Train).is_err());
        assert!(LabeledDataset::new(imgs, vec![1, 9], SplitTag::Train).is_ok());
    }

    #[test]
    fn subsample_is_seeded_and_order_preserving() {
        let imgs: Vec<Image> = (0..50).map(|i| gray(2, 2, i as f64 / 50.0)).collect();
        let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
        let ds = LabeledDataset::new(imgs, labels, SplitTag::Train).unwrap();
        let a = ds.subsample(20, 5).unwrap();
        let b = ds.subsample(20, 5).unwrap();
        let c = ds.subsample(20, 6).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_ne!(a.labels, c.labels);
        assert_eq!(a.len(), 20);
        // Original order: pixel values must be non-decreasing.
        let values: Vec<f64> = a.images.iter().map(|im| im.pixels()[0]).collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn to_inputs_flattens_columns() {
        let imgs = vec![gray(2, 2, 0.25), gray(2, 2, 0.75)];
        let ds = LabeledDataset::new(imgs, vec![0, 1], SplitTag::Test).unwrap();
        let (inputs, shape) = ds.to_inputs().unwrap();
        assert_eq!(inputs.nrows(), 4);
        assert_eq!(inputs.ncols(), 2);
        assert_eq!(shape.len(), 4);
        assert_eq!(inputs[(2, 1)], 0.75);
    }
}
