//! Georeferencing: anchoring map pixels to Earth coordinates.
//!
//! Two complementary paths produce ground control points:
//!
//! - **Text-based** ([`text`]): refine the content-area corners, validate
//!   the eight geocoordinate labels expected around them, and pair labels
//!   with corners. When labels fail the heuristic, fuzzy place-name
//!   retrieval against a topographic-map index ([`topo`]) supplies the
//!   geography instead.
//! - **Visual-based** ([`visual`]): match keypoints against candidate
//!   topographic rasters inside a distance buffer, fit a homography with
//!   RANSAC, and gate on inlier confidence so low-confidence alignments are
//!   discarded rather than emitted.

pub mod text;
pub mod topo;
pub mod visual;

use thiserror::Error;

use crate::client::ClientError;
use crate::geo::GeoError;

#[derive(Debug, Error)]
pub enum GeorefError {
    #[error("need at least 4 keypoint matches, got {0}")]
    InsufficientMatches(usize),
    #[error("no consensus: best inlier set is smaller than 4")]
    NoConsensus,
    #[error("missing corner estimate: {0}")]
    MissingCorner(&'static str),
    #[error("corner estimates are inconsistent with pixel quadrants: {0}")]
    InconsistentCorners(String),
    #[error("record bbox is degenerate (zero extent)")]
    DegenerateBBox,
    #[error("model returned an empty title")]
    EmptyTitle,
    #[error("cannot parse coordinate text: {0:?}")]
    UnparseableCoordinate(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("topo index error: {0}")]
    TopoIndex(String),
}
