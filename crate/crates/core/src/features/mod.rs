//! Dense grid sampling and upright SIFT descriptors.

mod cache;
mod sift;

pub use cache::{cache_path, read_descriptor_cache, write_descriptor_cache};
pub use sift::{sift_descriptor, SiftKernel};

use thiserror::Error;

use crate::corpus::Image;

/// 4×4 spatial cells × 8 orientation bins.
pub const DESCRIPTOR_LEN: usize = 128;
pub const SPATIAL_CELLS: usize = 4;
pub const ORIENTATION_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("invalid grid parameters: {0}")]
    InvalidParams(String),
    #[error("image {width}x{height} is smaller than one {patch}x{patch} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("patch centered at ({x}, {y}) does not fit inside the image")]
    PatchOutOfBounds { x: u32, y: u32 },
    #[error("descriptor cache: {0}")]
    Cache(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FeaturesError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridParams {
    pub stride: usize,
    pub patch_size: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            stride: 6,
            patch_size: 16,
        }
    }
}

impl GridParams {
    pub fn new(stride: usize, patch_size: usize) -> Result<Self> {
        let p = GridParams { stride, patch_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(FeaturesError::InvalidParams("stride must be >= 1".into()));
        }
        if self.patch_size < 4 || !self.patch_size.is_multiple_of(4) {
            return Err(FeaturesError::InvalidParams(format!(
                "patch size {} must be a positive multiple of 4",
                self.patch_size
            )));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        self.patch_size / 2
    }
}

/// Patch center. The patch spans columns `x - p/2 .. x + p/2` (exclusive
/// end), and likewise for rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u8; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn zeros() -> Self {
        Descriptor([0; DESCRIPTOR_LEN])
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }
}

/// Descriptors of one image in grid order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorSet {
    pub source: String,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// Number of grid positions along one axis of length `extent`.
pub fn grid_positions(extent: usize, params: &GridParams) -> usize {
    if extent < params.patch_size {
        0
    } else {
        // centers h, h + stride, ... up to extent - h
        (extent - params.patch_size) / params.stride + 1
    }
}

/// Row-major grid of patch centers whose patches lie fully inside a
/// `width × height` image.
pub fn dense_grid(width: usize, height: usize, params: &GridParams) -> Result<Vec<Keypoint>> {
    params.validate()?;
    if width < params.patch_size || height < params.patch_size {
        return Err(FeaturesError::ImageTooSmall {
            width,
            height,
            patch: params.patch_size,
        });
    }
    let h = params.half();
    let cols = grid_positions(width, params);
    let rows = grid_positions(height, params);
    let mut kps = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            kps.push(Keypoint {
                x: (h + c * params.stride) as u32,
                y: (h + r * params.stride) as u32,
            });
        }
    }
    Ok(kps)
}

/// One descriptor per [`dense_grid`] keypoint, in grid order.
pub fn extract_dense_sift(image: &Image, params: &GridParams) -> Result<DescriptorSet> {
    let keypoints = dense_grid(image.width(), image.height(), params)?;
    let kernel = SiftKernel::new(params.patch_size);
    let descriptors = keypoints
        .iter()
        .map(|kp| kernel.describe(image, *kp))
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptorSet {
        source: String::new(),
        keypoints,
        descriptors,
    })
}
