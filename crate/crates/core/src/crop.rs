//! Patching large maps for per-patch processing, and merging per-patch
//! detections back into map coordinates.
//!
//! Edge patches are padded (not shrunk) so every patch has uniform
//! dimensions for detector clients. All functions are pure; patches are
//! independent work items for parallel tasks.

use thiserror::Error;

use crate::client::RawDetection;
use crate::geo::{PixelBBox, PixelPoint};
use crate::model::{RasterMap, Rgb, WHITE};

#[derive(Debug, Error)]
pub enum CropError {
    #[error("invalid patch grid: {0}")]
    InvalidGrid(String),
}

/// The patch lattice: `patch_size` square tiles placed every `stride`
/// pixels. `stride == patch_size` (the default) tiles without overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGrid {
    pub patch_size: u32,
    pub stride: u32,
    pub pad_color: Rgb,
}

impl Default for PatchGrid {
    fn default() -> Self {
        Self { patch_size: 1000, stride: 1000, pad_color: WHITE }
    }
}

impl PatchGrid {
    pub fn new(patch_size: u32, stride: u32, pad_color: Rgb) -> Result<Self, CropError> {
        if patch_size == 0 || stride == 0 || stride > patch_size {
            return Err(CropError::InvalidGrid(format!(
                "need 0 < stride <= patch_size, got stride {stride}, size {patch_size}"
            )));
        }
        Ok(Self { patch_size, stride, pad_color })
    }

    /// Number of patch origins along an axis of length `dim`: the lattice
    /// `0, stride, 2*stride, ...` continues until a patch reaches the end.
    pub fn count_along(&self, dim: u32) -> u32 {
        if dim <= self.patch_size {
            1
        } else {
            (dim - self.patch_size).div_ceil(self.stride) + 1
        }
    }
}

/// One tile of the map. `origin` is the tile's top-left in map coordinates;
/// the image is always `patch_size` square (padded at the map edge).
#[derive(Debug, Clone)]
pub struct Patch {
    pub origin: PixelPoint,
    pub image: RasterMap,
}

impl Patch {
    /// Translates a patch-local point into map coordinates.
    pub fn to_global(&self, local: &PixelPoint) -> PixelPoint {
        PixelPoint::new(local.x + self.origin.x, local.y + self.origin.y)
    }

    /// Translates a map point into patch-local coordinates.
    pub fn to_local(&self, global: &PixelPoint) -> PixelPoint {
        PixelPoint::new(global.x - self.origin.x, global.y - self.origin.y)
    }

    pub fn bbox_to_global(&self, local: &PixelBBox) -> PixelBBox {
        local.translated(self.origin.x, self.origin.y)
    }

    pub fn bbox_to_local(&self, global: &PixelBBox) -> PixelBBox {
        global.translated(-self.origin.x, -self.origin.y)
    }
}

/// Cuts the map into patches. The union of unpadded patch areas covers the
/// map exactly; each patch image id is `{map_id}_{ox}_{oy}`.
pub fn crop(map: &RasterMap, grid: &PatchGrid) -> Vec<Patch> {
    let nx = grid.count_along(map.width);
    let ny = grid.count_along(map.height);
    let size = grid.patch_size;
    let mut patches = Vec::with_capacity((nx * ny) as usize);
    for iy in 0..ny {
        for ix in 0..nx {
            let ox = ix * grid.stride;
            let oy = iy * grid.stride;
            let mut image = RasterMap::filled(
                format!("{}_{}_{}", map.id, ox, oy),
                size,
                size,
                grid.pad_color,
            );
            let copy_w = size.min(map.width.saturating_sub(ox));
            let copy_h = size.min(map.height.saturating_sub(oy));
            for y in 0..copy_h {
                for x in 0..copy_w {
                    image.set(x, y, map.get(ox + x, oy + y));
                }
            }
            patches.push(Patch { origin: PixelPoint::new(ox as f64, oy as f64), image });
        }
    }
    patches
}

/// Greedy per-class non-maximum suppression.
///
/// Detections are sorted by confidence descending (ties broken by smaller
/// `(y, x)` box origin, then class, for determinism); a box is kept iff its
/// IoU with every already-kept box of the same class is below the threshold.
pub fn merge_detections(mut dets: Vec<RawDetection>, iou_threshold: f64) -> Vec<RawDetection> {
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.min.y.total_cmp(&b.bbox.min.y))
            .then(a.bbox.min.x.total_cmp(&b.bbox.min.x))
            .then(a.class.cmp(&b.class))
    });
    let mut kept: Vec<RawDetection> = Vec::new();
    for det in dets {
        let overlaps = kept
            .iter()
            .any(|k| k.class == det.class && k.bbox.iou(&det.bbox) >= iou_threshold);
        if !overlaps {
            kept.push(det);
        }
    }
    kept
}
