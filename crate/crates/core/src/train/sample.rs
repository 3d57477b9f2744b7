use crate::error::{Error, Result};
use crate::metrics::{extract_boundary, GrayMap};
use crate::tensor::Tensor;

/// One image with its saliency and boundary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    /// Planar RGB, `3 * height * width` values in `[0, 1]`.
    pub image: Vec<f64>,
    pub saliency: GrayMap,
    pub boundary: GrayMap,
    /// Seed the sample was generated from.
    pub seed: u64,
}

impl Sample {
    /// Builds a sample, deriving the boundary from the saliency mask.
    pub fn new(height: usize, width: usize, image: Vec<f64>, saliency: GrayMap, seed: u64) -> Result<Self> {
        if image.len() != 3 * height * width || saliency.height() != height || saliency.width() != width {
            return Err(Error::shape(
                "sample",
                format!("image/mask do not match {height}x{width}"),
            ));
        }
        let boundary = extract_boundary(&saliency)?;
        Ok(Sample {
            height,
            width,
            image,
            saliency,
            boundary,
            seed,
        })
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.image[c * n..(c + 1) * n]
    }
}

/// Samples stacked into `[N, C, H, W]` tensors.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub images: Tensor,
    pub saliency_gt: Tensor,
    pub boundary_gt: Tensor,
    pub seeds: Vec<u64>,
}

impl SampleBatch {
    pub fn stack(samples: &[&Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (h, w) = (first.height, first.width);
        if samples.iter().any(|s| (s.height, s.width) != (h, w)) {
            return Err(Error::shape("batch", "samples differ in size"));
        }
        let n = samples.len();
        let mut images = Vec::with_capacity(n * 3 * h * w);
        let mut sal = Vec::with_capacity(n * h * w);
        let mut bnd = Vec::with_capacity(n * h * w);
        for s in samples {
            images.extend_from_slice(&s.image);
            sal.extend_from_slice(s.saliency.data());
            bnd.extend_from_slice(s.boundary.data());
        }
        Ok(SampleBatch {
            images: Tensor::new(&[n, 3, h, w], images)?,
            saliency_gt: Tensor::new(&[n, 1, h, w], sal)?,
            boundary_gt: Tensor::new(&[n, 1, h, w], bnd)?,
            seeds: samples.iter().map(|s| s.seed).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}
