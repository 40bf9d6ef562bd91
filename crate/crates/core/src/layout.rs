//! Map layout analysis plumbing.
//!
//! Legend-pair inference runs as few-shot prompting of a vision/language
//! model: the prompt carries an annotated example legend area, and the query
//! entries use the literal placeholder token `"??"` for the coordinates the
//! model must fill in. Segmentation of the sheet into content and legend
//! areas goes through a [`ModelClient`] when one is configured, with a
//! deterministic ink-density fallback otherwise.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::client::{ClientError, ModelClient, ModelRequest};
use crate::geo::{PixelBBox, PixelPoint};
use crate::model::{MapLayout, RasterMap};

/// Placeholder token for coordinates the model must infer.
pub const PLACEHOLDER: &str = "??";

/// Number of annotated example pairs that yields the most accurate
/// extractions; the default unless a caller overrides it.
pub const DEFAULT_N_EXAMPLES: usize = 15;

/// Column/row bin width for the fallback ink-density profile, in pixels.
const PROFILE_BIN_PX: u32 = 16;

/// A profile bin counts as dense when its ink density reaches this fraction
/// of the densest bin.
const DENSITY_THRESHOLD_FRAC: f64 = 0.25;

/// Pixels with luminance below this are "ink" for the fallback profile.
const INK_LUMINANCE: f64 = 230.0;

const PAIR_INSTRUCTION: &str = "Each legend entry in the image pairs a small symbol swatch with its \
text description. Using the annotated examples, return the query list with every \"??\" replaced \
by [x0, y0, x1, y1] pixel coordinates for the corresponding box in the query image.";

const SEGMENT_INSTRUCTION: &str = "Segment the map sheet into its content area and legend areas. \
Return JSON with content_bbox, legend_region_bboxes, optional title_bbox, and items.";

const TITLE_INSTRUCTION: &str = "Return only the map title from the input map image.";

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("example has no annotated pairs")]
    EmptyExample,
    #[error("bbox outside example image: {0}")]
    BBoxOutOfBounds(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// One annotated legend-item/description pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendPair {
    pub item_bbox: PixelBBox,
    pub description_bbox: PixelBBox,
}

/// An annotated example legend area used to condition the model.
#[derive(Debug, Clone, PartialEq)]
pub struct IclExample {
    pub image_ref: String,
    pub image_bounds: PixelBBox,
    pub pairs: Vec<LegendPair>,
}

impl IclExample {
    pub fn new(image_ref: impl Into<String>, image_bounds: PixelBBox, pairs: Vec<LegendPair>) -> Result<Self, LayoutError> {
        if pairs.is_empty() {
            return Err(LayoutError::EmptyExample);
        }
        for p in &pairs {
            if !image_bounds.contains_bbox(&p.item_bbox) || !image_bounds.contains_bbox(&p.description_bbox) {
                return Err(LayoutError::BBoxOutOfBounds(format!("{p:?}")));
            }
        }
        Ok(Self { image_ref: image_ref.into(), image_bounds, pairs })
    }
}

/// A rendered few-shot prompt. Query entries hold [`PLACEHOLDER`] for both
/// boxes until the model answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclPrompt {
    pub instruction: String,
    pub examples: Vec<LegendPair>,
    pub query_legend_bbox: PixelBBox,
    /// Each entry is a pair of placeholder strings before model invocation.
    pub query_entries: Vec<(String, String)>,
}

impl IclPrompt {
    /// Serializes the prompt as the JSON document sent to the model.
    pub fn render(&self) -> String {
        let examples: Vec<Value> = self
            .examples
            .iter()
            .map(|p| {
                json!({
                    "item_bbox": bbox_to_array(&p.item_bbox),
                    "description_bbox": bbox_to_array(&p.description_bbox),
                })
            })
            .collect();
        let query: Vec<Value> = self
            .query_entries
            .iter()
            .map(|(a, b)| json!({ "item_bbox": a, "description_bbox": b }))
            .collect();
        serde_json::to_string_pretty(&json!({
            "instruction": self.instruction,
            "examples": examples,
            "query_legend_bbox": bbox_to_array(&self.query_legend_bbox),
            "query": query,
        }))
        .expect("prompt serialization cannot fail")
    }

    /// Parses a rendered prompt back into its structure.
    pub fn parse(text: &str) -> Result<IclPrompt, LayoutError> {
        let v: Value = serde_json::from_str(strip_fences(text))
            .map_err(|e| LayoutError::MalformedDocument(e.to_string()))?;
        let instruction = v
            .get("instruction")
            .and_then(Value::as_str)
            .ok_or_else(|| LayoutError::MalformedDocument("missing instruction".into()))?
            .to_string();
        let examples = v
            .get("examples")
            .and_then(Value::as_array)
            .ok_or_else(|| LayoutError::MalformedDocument("missing examples".into()))?
            .iter()
            .map(|e| {
                Ok(LegendPair {
                    item_bbox: bbox_from_value(e.get("item_bbox"))?,
                    description_bbox: bbox_from_value(e.get("description_bbox"))?,
                })
            })
            .collect::<Result<Vec<_>, LayoutError>>()?;
        let query_legend_bbox = bbox_from_value(v.get("query_legend_bbox"))?;
        let query_entries = v
            .get("query")
            .and_then(Value::as_array)
            .ok_or_else(|| LayoutError::MalformedDocument("missing query".into()))?
            .iter()
            .map(|e| {
                let a = e.get("item_bbox").and_then(Value::as_str).unwrap_or(PLACEHOLDER);
                let b = e.get("description_bbox").and_then(Value::as_str).unwrap_or(PLACEHOLDER);
                (a.to_string(), b.to_string())
            })
            .collect();
        Ok(IclPrompt { instruction, examples, query_legend_bbox, query_entries })
    }
}

/// Builds the few-shot prompt: the task instruction, at most `n_examples`
/// annotated pairs from `example` (clamped to what is available), and one
/// query entry with placeholder coordinates.
pub fn build_icl_prompt(example: &IclExample, query_legend_bbox: PixelBBox, n_examples: usize) -> IclPrompt {
    let n = n_examples.min(example.pairs.len());
    IclPrompt {
        instruction: PAIR_INSTRUCTION.to_string(),
        examples: example.pairs[..n].to_vec(),
        query_legend_bbox,
        query_entries: vec![(PLACEHOLDER.to_string(), PLACEHOLDER.to_string())],
    }
}

/// The outcome of parsing a model response: resolved pairs plus the number
/// of entries dropped because their placeholders were never filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPairs {
    pub pairs: Vec<LegendPair>,
    pub dropped: usize,
}

/// Parses a model response into legend pairs.
///
/// Accepts either a bare JSON array of entries or an object carrying the
/// filled `query` list, with or without Markdown code fences. Entries whose
/// boxes are not 4 numeric coordinates are dropped and counted; resolved
/// boxes are clipped to `legend_bbox`.
pub fn parse_icl_response(text: &str, legend_bbox: &PixelBBox) -> Result<ParsedPairs, LayoutError> {
    let v: Value = serde_json::from_str(strip_fences(text))
        .map_err(|e| LayoutError::MalformedDocument(e.to_string()))?;
    let entries = match &v {
        Value::Array(a) => a.clone(),
        Value::Object(o) => o
            .get("query")
            .or_else(|| o.get("pairs"))
            .and_then(Value::as_array)
            .cloned()
            .ok_or_else(|| LayoutError::MalformedDocument("no query/pairs array".into()))?,
        _ => return Err(LayoutError::MalformedDocument("expected array or object".into())),
    };

    let mut pairs = Vec::new();
    let mut dropped = 0;
    for entry in entries {
        let item = resolved_bbox(entry.get("item_bbox"));
        let desc = resolved_bbox(entry.get("description_bbox"));
        match (item, desc) {
            (Some(i), Some(d)) => {
                match (i.clipped_to(legend_bbox), d.clipped_to(legend_bbox)) {
                    (Some(ic), Some(dc)) => pairs.push(LegendPair { item_bbox: ic, description_bbox: dc }),
                    _ => dropped += 1, // entirely outside the legend region
                }
            }
            _ => dropped += 1,
        }
    }
    Ok(ParsedPairs { pairs, dropped })
}

/// Segments the sheet into content and legend areas.
///
/// With a client, the client's JSON layout response is taken verbatim
/// (bboxes clipped to the sheet). Without one, a deterministic ink-density
/// profile splits the sheet: the largest dense block of columns/rows is the
/// content area; inked regions to the right of and below it become legend
/// regions.
pub fn segment_layout(map: &RasterMap, client: Option<&dyn ModelClient>) -> Result<MapLayout, LayoutError> {
    match client {
        Some(c) => {
            let request = ModelRequest::new(map.id.clone(), "layout", SEGMENT_INSTRUCTION, "")
                .attach_image(map)?;
            let response = c.complete(&request)?;
            let mut layout: MapLayout = serde_json::from_str(strip_fences(&response))
                .map_err(|e| LayoutError::MalformedDocument(e.to_string()))?;
            let bounds = map.bounds();
            layout.content_bbox = layout
                .content_bbox
                .clipped_to(&bounds)
                .ok_or_else(|| LayoutError::MalformedDocument("content bbox outside sheet".into()))?;
            layout.legend_region_bboxes = layout
                .legend_region_bboxes
                .iter()
                .filter_map(|b| b.clipped_to(&bounds))
                .collect();
            Ok(layout)
        }
        None => Ok(fallback_segment(map)),
    }
}

/// Reads the map title via the model client; multi-line responses are
/// trimmed to the first non-empty line.
pub fn request_title(map: &RasterMap, client: &dyn ModelClient) -> Result<String, LayoutError> {
    let request = ModelRequest::new(map.id.clone(), "title", TITLE_INSTRUCTION, "").attach_image(map)?;
    Ok(client.complete(&request)?)
}

fn luminance(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn fallback_segment(map: &RasterMap) -> MapLayout {
    let (w, h) = (map.width, map.height);
    let full = map.bounds();

    let n_cols = w.div_ceil(PROFILE_BIN_PX) as usize;
    let mut col_ink = vec![0u64; n_cols];
    let mut col_area = vec![0u64; n_cols];
    for y in 0..h {
        for x in 0..w {
            let bin = (x / PROFILE_BIN_PX) as usize;
            col_area[bin] += 1;
            if luminance(map.get(x, y)) < INK_LUMINANCE {
                col_ink[bin] += 1;
            }
        }
    }
    let col_density: Vec<f64> = col_ink
        .iter()
        .zip(&col_area)
        .map(|(i, a)| *i as f64 / *a as f64)
        .collect();
    let max_density = col_density.iter().cloned().fold(0.0, f64::max);
    if max_density == 0.0 {
        return MapLayout { content_bbox: full, legend_region_bboxes: vec![], title_bbox: None, items: vec![] };
    }
    let threshold = DENSITY_THRESHOLD_FRAC * max_density;
    let (c0, c1) = largest_dense_run(&col_density, threshold);
    let content_x0 = c0 as u32 * PROFILE_BIN_PX;
    let content_x1 = ((c1 as u32 + 1) * PROFILE_BIN_PX).min(w);

    // Row profile restricted to the content columns.
    let n_rows = h.div_ceil(PROFILE_BIN_PX) as usize;
    let mut row_ink = vec![0u64; n_rows];
    let mut row_area = vec![0u64; n_rows];
    for y in 0..h {
        let bin = (y / PROFILE_BIN_PX) as usize;
        for x in content_x0..content_x1 {
            row_area[bin] += 1;
            if luminance(map.get(x, y)) < INK_LUMINANCE {
                row_ink[bin] += 1;
            }
        }
    }
    let row_density: Vec<f64> = row_ink
        .iter()
        .zip(&row_area)
        .map(|(i, a)| if *a == 0 { 0.0 } else { *i as f64 / *a as f64 })
        .collect();
    let row_max = row_density.iter().cloned().fold(0.0, f64::max);
    let (r0, r1) = if row_max > 0.0 {
        largest_dense_run(&row_density, DENSITY_THRESHOLD_FRAC * row_max)
    } else {
        (0, n_rows.saturating_sub(1))
    };
    let content_y0 = r0 as u32 * PROFILE_BIN_PX;
    let content_y1 = ((r1 as u32 + 1) * PROFILE_BIN_PX).min(h);

    let content_bbox = PixelBBox::from_coords(
        content_x0 as f64,
        content_y0 as f64,
        content_x1 as f64,
        content_y1 as f64,
    )
    .expect("content bbox ordered by construction");

    let mut legend_region_bboxes = Vec::new();
    if let Some(b) = ink_extent(map, content_x1, 0, w, h) {
        legend_region_bboxes.push(b);
    }
    if let Some(b) = ink_extent(map, content_x0, content_y1, content_x1, h) {
        legend_region_bboxes.push(b);
    }

    MapLayout { content_bbox, legend_region_bboxes, title_bbox: None, items: vec![] }
}

/// Longest contiguous run of bins at or above the threshold (first on ties).
fn largest_dense_run(density: &[f64], threshold: f64) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut best_len = 0usize;
    let mut run_start: Option<usize> = None;
    for (i, &d) in density.iter().enumerate() {
        if d >= threshold {
            if run_start.is_none() {
                run_start = Some(i);
            }
            let start = run_start.unwrap();
            if i - start + 1 > best_len {
                best_len = i - start + 1;
                best = (start, i);
            }
        } else {
            run_start = None;
        }
    }
    best
}

/// Bounding box of inked pixels inside `[x0, x1) x [y0, y1)`, if any.
fn ink_extent(map: &RasterMap, x0: u32, y0: u32, x1: u32, y1: u32) -> Option<PixelBBox> {
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for y in y0..y1 {
        for x in x0..x1 {
            if luminance(map.get(x, y)) < INK_LUMINANCE {
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
    }
    if min_x == u32::MAX {
        return None;
    }
    Some(
        PixelBBox::new(
            PixelPoint::new(min_x as f64, min_y as f64),
            PixelPoint::new(max_x as f64 + 1.0, max_y as f64 + 1.0),
        )
        .expect("extent ordered"),
    )
}

fn strip_fences(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        // drop the info string on the opening fence
        let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
        if let Some(inner) = body.rsplit_once("```") {
            return inner.0.trim();
        }
        return body.trim();
    }
    trimmed
}

fn bbox_to_array(b: &PixelBBox) -> Value {
    json!([b.min.x, b.min.y, b.max.x, b.max.y])
}

fn bbox_from_value(v: Option<&Value>) -> Result<PixelBBox, LayoutError> {
    resolved_bbox(v).ok_or_else(|| LayoutError::MalformedDocument(format!("bad bbox: {v:?}")))
}

/// `Some(bbox)` only when the value is 4 finite numbers in order.
fn resolved_bbox(v: Option<&Value>) -> Option<PixelBBox> {
    let arr = v?.as_array()?;
    if arr.len() != 4 {
        return None;
    }
    let mut c = [0f64; 4];
    for (i, x) in arr.iter().enumerate() {
        c[i] = x.as_f64()?;
    }
    PixelBBox::from_coords(c[0], c[1], c[2], c[3]).ok()
}
