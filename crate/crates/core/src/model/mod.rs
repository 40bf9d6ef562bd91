//! The document model for a scanned map and all serialized inputs/outputs.
//!
//! Types are immutable after load. The color model is RGB 8-bit at this
//! layer; other color spaces are computed views (see `extract::color`).

mod gcps;
mod geojson;
mod raster;

pub use gcps::{load_gcps, save_gcps, GCP_SCHEMA_VERSION};
pub use geojson::save_features_geojson;
pub use raster::{load_raster, save_raster_png};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::geo::{GroundControlPoint, Homography, PixelBBox, PixelPoint};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

/// RGB triple, 8 bits per channel.
pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];

/// An in-memory scanned map: row-major RGB pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMap {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pixels: Vec<Rgb>,
}

impl RasterMap {
    pub fn new(id: impl Into<String>, width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::Validation("raster dimensions must be >= 1".into()));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ModelError::Validation(format!(
                "pixel buffer length {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self { id: id.into(), width, height, pixels })
    }

    pub fn filled(id: impl Into<String>, width: u32, height: u32, color: Rgb) -> Self {
        Self {
            id: id.into(),
            width,
            height,
            pixels: vec![color; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, color: Rgb) {
        self.pixels[(y as usize) * (self.width as usize) + x as usize] = color;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn in_bounds(&self, p: &PixelPoint) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    pub fn bounds(&self) -> PixelBBox {
        PixelBBox::from_coords(0.0, 0.0, self.width as f64, self.height as f64)
            .expect("raster bounds are always valid")
    }

    pub fn diagonal_px(&self) -> f64 {
        ((self.width as f64).powi(2) + (self.height as f64).powi(2)).sqrt()
    }

    /// Copies the axis-aligned integer subregion `[x0, x1) x [y0, y1)`.
    pub fn crop_region(&self, x0: u32, y0: u32, x1: u32, y1: u32, id: impl Into<String>) -> Result<RasterMap, ModelError> {
        if x1 <= x0 || y1 <= y0 || x1 > self.width || y1 > self.height {
            return Err(ModelError::Validation(format!(
                "crop region ({x0},{y0})-({x1},{y1}) outside {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (x1 - x0, y1 - y0);
        let mut pixels = Vec::with_capacity((w as usize) * (h as usize));
        for y in y0..y1 {
            let row = (y as usize) * (self.width as usize);
            pixels.extend_from_slice(&self.pixels[row + x0 as usize..row + x1 as usize]);
        }
        RasterMap::new(id, w, h, pixels)
    }
}

/// The kind of feature a legend entry describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Polygon,
    Line,
    Point,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureKind::Polygon => write!(f, "polygon"),
            FeatureKind::Line => write!(f, "line"),
            FeatureKind::Point => write!(f, "point"),
        }
    }
}

/// One legend entry: a swatch box plus the paired description box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendItem {
    pub label: String,
    pub kind: FeatureKind,
    pub swatch_bbox: PixelBBox,
    pub description_bbox: PixelBBox,
    #[serde(default)]
    pub description_text: String,
}

/// The layout of a sheet: content area, legend regions, and legend entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLayout {
    pub content_bbox: PixelBBox,
    #[serde(default)]
    pub legend_region_bboxes: Vec<PixelBBox>,
    #[serde(default)]
    pub title_bbox: Option<PixelBBox>,
    #[serde(default)]
    pub items: Vec<LegendItem>,
}

impl MapLayout {
    /// Checks invariants against the map the layout was derived from.
    /// Items outside every legend region are reported, not rejected.
    pub fn validate(&self, map_width: u32, map_height: u32) -> Result<Vec<String>, ModelError> {
        let bounds = PixelBBox::from_coords(0.0, 0.0, map_width as f64, map_height as f64)
            .expect("bounds valid");
        if !bounds.contains_bbox(&self.content_bbox) {
            return Err(ModelError::Validation("content bbox outside map bounds".into()));
        }
        let mut flagged = Vec::new();
        for item in &self.items {
            if item.label.is_empty() {
                return Err(ModelError::Validation("legend item with empty label".into()));
            }
            if !bounds.contains_bbox(&item.swatch_bbox) || !bounds.contains_bbox(&item.description_bbox) {
                return Err(ModelError::Validation(format!(
                    "legend item '{}' has bbox outside map bounds",
                    item.label
                )));
            }
            let in_region = self
                .legend_region_bboxes
                .iter()
                .any(|r| r.contains_bbox(&item.swatch_bbox));
            if !in_region {
                flagged.push(item.label.clone());
            }
        }
        Ok(flagged)
    }
}

/// A polygon feature: closed outer ring plus closed hole rings, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonFeature {
    pub label: String,
    pub outer: Vec<PixelPoint>,
    #[serde(default)]
    pub holes: Vec<Vec<PixelPoint>>,
}

/// A line feature as a node/edge graph (paths may branch at junctions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineGraph {
    pub label: String,
    pub nodes: Vec<PixelPoint>,
    /// Node-index pairs; stored with the smaller index first, no self-loops,
    /// no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl LineGraph {
    pub fn new(label: impl Into<String>, nodes: Vec<PixelPoint>, edges: Vec<(usize, usize)>) -> Result<Self, ModelError> {
        let mut normalized = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::new();
        for (a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(ModelError::Validation(format!("edge ({a},{b}) references missing node")));
            }
            if a == b {
                return Err(ModelError::Validation(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(ModelError::Validation(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            normalized.push(e);
        }
        Ok(Self { label: label.into(), nodes, edges: normalized })
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(a, b)| *a == node || *b == node).count()
    }
}

/// A detected point symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFeature {
    pub label: String,
    pub point: PixelPoint,
    pub confidence: f64,
}

/// Everything extracted from one map, still in pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorFeatureSet {
    #[serde(default)]
    pub polygons: Vec<PolygonFeature>,
    #[serde(default)]
    pub lines: Vec<LineGraph>,
    #[serde(default)]
    pub points: Vec<PointFeature>,
}

/// Signed shoelace area of a closed ring (first vertex repeated last).
/// Positive sign is the outer-ring orientation convention throughout.
pub fn ring_signed_area(ring: &[PixelPoint]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    acc / 2.0
}

fn ring_is_closed(ring: &[PixelPoint]) -> bool {
    ring.len() >= 4 && ring.first() == ring.last()
}

impl VectorFeatureSet {
    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty() && self.lines.is_empty() && self.points.is_empty()
    }

    /// Asserts ring closure and orientation (outer positive, holes negative)
    /// plus point-confidence ranges.
    pub fn validate(&self) -> Result<(), ModelError> {
        for poly in &self.polygons {
            if !ring_is_closed(&poly.outer) {
                return Err(ModelError::Validation(format!(
                    "polygon '{}' outer ring is not closed",
                    poly.label
                )));
            }
            if ring_signed_area(&poly.outer) <= 0.0 {
                return Err(ModelError::Validation(format!(
                    "polygon '{}' outer ring has non-positive orientation",
                    poly.label
                )));
            }
            for (i, hole) in poly.holes.iter().enumerate() {
                if !ring_is_closed(hole) {
                    return Err(ModelError::Validation(format!(
                        "polygon '{}' hole {i} is not closed",
                        poly.label
                    )));
                }
                if ring_signed_area(hole) >= 0.0 {
                    return Err(ModelError::Validation(format!(
                        "polygon '{}' hole {i} has non-negative orientation",
                        poly.label
                    )));
                }
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(ModelError::Validation(format!(
                    "point '{}' confidence {} out of range",
                    p.label, p.confidence
                )));
            }
        }
        Ok(())
    }
}

/// Georeferencing output for one map: at least one GCP, optionally a full
/// pixel-to-lon/lat homography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcpSet {
    pub map_id: String,
    pub gcps: Vec<GroundControlPoint>,
    #[serde(default)]
    pub homography: Option<Homography>,
}

impl GcpSet {
    pub fn new(map_id: impl Into<String>, gcps: Vec<GroundControlPoint>, homography: Option<Homography>) -> Result<Self, ModelError> {
        if gcps.is_empty() {
            return Err(ModelError::Validation("GCP set must contain at least one GCP".into()));
        }
        for g in &gcps {
            if !(0.0..=1.0).contains(&g.confidence) {
                return Err(ModelError::Validation(format!("GCP confidence {} out of range", g.confidence)));
            }
        }
        Ok(Self { map_id: map_id.into(), gcps, homography })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_square(scale: f64) -> Vec<PixelPoint> {
        vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(scale, 0.0),
            PixelPoint::new(scale, scale),
            PixelPoint::new(0.0, scale),
            PixelPoint::new(0.0, 0.0),
        ]
    }

    #[test]
    fn raster_accessors() {
        let mut m = RasterMap::filled("t", 3, 2, WHITE);
        m.set(2, 1, [1, 2, 3]);
        assert_eq!(m.get(2, 1), [1, 2, 3]);
        assert_eq!(m.get(0, 0), WHITE);
        assert_eq!(m.pixels().len(), 6);
    }

    #[test]
    fn raster_rejects_bad_buffer() {
        assert!(RasterMap::new("t", 2, 2, vec![WHITE; 3]).is_err());
        assert!(RasterMap::new("t", 0, 2, vec![]).is_err());
    }

    #[test]
    fn crop_region_contents() {
        let mut m = RasterMap::filled("t", 4, 4, WHITE);
        m.set(2, 1, BLACK);
        let c = m.crop_region(2, 1, 4, 3, "sub").unwrap();
        assert_eq!((c.width, c.height), (2, 2));
        assert_eq!(c.get(0, 0), BLACK);
        assert_eq!(c.get(1, 1), WHITE);
    }

    #[test]
    fn ring_orientation_validation() {
        let mut set = VectorFeatureSet::default();
        set.polygons.push(PolygonFeature { label: "a".into(), outer: closed_square(4.0), holes: vec![] });
        assert!(set.validate().is_ok());

        // reversed outer ring flips the signed area
        let mut rev = closed_square(4.0);
        rev.reverse();
        set.polygons[0].outer = rev;
        assert!(set.validate().is_err());
    }

    #[test]
    fn unclosed_ring_rejected() {
        let mut set = VectorFeatureSet::default();
        let mut ring = closed_square(4.0);
        ring.pop();
        set.polygons.push(PolygonFeature { label: "a".into(), outer: ring, holes: vec![] });
        assert!(set.validate().is_err());
    }

    #[test]
    fn hole_orientation_must_be_negative() {
        let mut hole = closed_square(1.0);
        hole.reverse(); // clockwise -> negative area
        let set = VectorFeatureSet {
            polygons: vec![PolygonFeature { label: "a".into(), outer: closed_square(4.0), holes: vec![hole] }],
            ..Default::default()
        };
        assert!(set.validate().is_ok());
    }

    #[test]
    fn line_graph_invariants() {
        let nodes = vec![PixelPoint::new(0.0, 0.0), PixelPoint::new(1.0, 0.0)];
        assert!(LineGraph::new("f", nodes.clone(), vec![(0, 1)]).is_ok());
        assert!(LineGraph::new("f", nodes.clone(), vec![(0, 0)]).is_err());
        assert!(LineGraph::new("f", nodes.clone(), vec![(0, 1), (1, 0)]).is_err());
        assert!(LineGraph::new("f", nodes, vec![(0, 2)]).is_err());
    }

    #[test]
    fn gcp_set_requires_points() {
        assert!(GcpSet::new("m", vec![], None).is_err());
    }

    #[test]
    fn layout_validate_flags_out_of_region_items() {
        let layout = MapLayout {
            content_bbox: PixelBBox::from_coords(0.0, 0.0, 50.0, 100.0).unwrap(),
            legend_region_bboxes: vec![PixelBBox::from_coords(50.0, 0.0, 100.0, 100.0).unwrap()],
            title_bbox: None,
            items: vec![LegendItem {
                label: "qa".into(),
                kind: FeatureKind::Polygon,
                swatch_bbox: PixelBBox::from_coords(10.0, 10.0, 20.0, 20.0).unwrap(),
                description_bbox: PixelBBox::from_coords(60.0, 10.0, 90.0, 20.0).unwrap(),
                description_text: String::new(),
            }],
        };
        let flagged = layout.validate(100, 100).unwrap();
        assert_eq!(flagged, vec!["qa".to_string()]);
    }
}
