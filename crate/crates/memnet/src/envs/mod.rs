//! Data sources: the corridor gridworld, IDX image files, synthetic shapes.

pub mod gridworld;
pub mod idx;
pub mod shapes;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A labeled image collection, flattened to `[n, width * height]` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub width: usize,
    pub height: usize,
}

impl ImageSet {
    pub fn new(images: Tensor, labels: Vec<usize>, width: usize, height: usize) -> Result<Self> {
        let shape = images.shape().to_vec();
        if shape.len() != 2 || shape[1] != width * height || shape[0] != labels.len() {
            return Err(Error::Contract {
                op: "ImageSet",
                msg: format!(
                    "images {:?} do not match {} labels at {}x{}",
                    shape,
                    labels.len(),
                    width,
                    height
                ),
            });
        }
        Ok(ImageSet {
            images,
            labels,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    /// Indices of all images with the given label.
    pub fn class_indices(&self, class_id: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class_id)
            .collect()
    }

    /// Mean image of a class, or None if the class is absent.
    pub fn class_centroid(&self, class_id: usize) -> Option<Tensor> {
        let idx = self.class_indices(class_id);
        if idx.is_empty() {
            return None;
        }
        let d = self.width * self.height;
        let mut mean = vec![0.0; d];
        for &i in &idx {
            for (m, v) in mean.iter_mut().zip(self.image(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= idx.len() as f64;
        }
        Some(Tensor::vector(mean))
    }
}
