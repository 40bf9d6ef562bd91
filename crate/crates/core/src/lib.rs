//! Core library for digitizing scanned geologic maps.
//!
//! The pipeline georeferences a scanned map (anchoring pixels to Earth
//! coordinates) and extracts vector features (polygons, line graphs, point
//! symbols) tagged with legend semantics. Learned components (layout
//! segmentation, keypoint matching, symbol detection) sit behind pluggable
//! clients so the whole pipeline runs offline against stubs; classical
//! baselines cover the gaps.
//!
//! Module map:
//! - [`geo`] — pixel/geo points, homographies, geodesic distance.
//! - [`model`] — the map document model and all serialized inputs/outputs.
//! - [`client`] — model/matcher/detector client traits, stubs, HTTP impls.
//! - [`layout`] — legend-pair prompt construction/parsing and layout
//!   segmentation (client-backed with a heuristic fallback).
//! - [`crop`] — patch grids for large maps and detection merging.
//! - [`georef`] — text-based and visual georeferencing.
//! - [`extract`] — color-signature polygon extraction, line-graph
//!   refinement, point-detection plumbing.
//! - [`synth`] — synthetic training-patch generation for point symbols.
//! - [`eval`] — the full evaluation-metric suite.

pub mod client;
pub mod crop;
pub mod eval;
pub mod extract;
pub mod geo;
pub mod georef;
pub mod layout;
pub mod model;
pub mod synth;
