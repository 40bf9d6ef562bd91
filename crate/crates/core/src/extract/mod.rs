//! Classical, testable stand-ins and shared data models for the neural
//! extractors: color-signature polygon extraction, line-graph refinement,
//! and point-detection plumbing.
//!
//! The baseline disambiguates legend items by color only; items sharing a
//! color are reported as collisions ([`signature_collisions`]), not
//! resolved by description text.

pub mod color;
pub mod lines;
pub mod mask;
pub mod points;
pub mod vectorize;

pub use color::{swatch_signature, ColorSignature};
pub use lines::refine_line_graph;
pub use mask::{extract_polygons_by_color, LabelMask};
pub use points::{detect_points, DetectionOutcome, PointDetection};
pub use vectorize::{rasterize_polygons, vectorize_mask, MaskPolygon};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("swatch inner region has zero area after trimming")]
    ZeroAreaSwatch,
    #[error("no color signatures supplied")]
    EmptySignatures,
    #[error("swatch bbox lies outside the raster")]
    SwatchOutOfBounds,
    #[error(transparent)]
    Client(#[from] crate::client::ClientError),
}

/// Indices of signature pairs whose combined color distance is below
/// `min_separation` — legend items the color baseline cannot tell apart.
pub fn signature_collisions(signatures: &[ColorSignature], min_separation: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..signatures.len() {
        let a = signatures[i].normalized();
        for j in i + 1..signatures.len() {
            let b = signatures[j].normalized();
            if color::normalized_distance(&a, &b) < min_separation {
                out.push((i, j));
            }
        }
    }
    out
}
