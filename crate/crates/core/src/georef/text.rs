//! Text-based georeferencing.
//!
//! Rectangular content areas carry geocoordinate labels at their four
//! corners. The pipeline refines each approximate corner inside a buffer
//! window (binarize, clean with morphology, find the border lines with a
//! Hough transform, intersect them), validates that the recognized labels
//! form exactly two distinct latitudes and two distinct longitudes across
//! eight labels, and pairs values with corners assuming canonical north-up
//! orientation. Recognized label text arrives from a client or fixture;
//! this module does no OCR.

use serde::{Deserialize, Serialize};

use super::{topo::TopoRecord, GeorefError};
use crate::client::ModelClient;
use crate::geo::{fit_homography, GeoPoint, GroundControlPoint, PixelPoint};
use crate::layout::request_title;
use crate::model::{GcpSet, RasterMap};

/// Side of the square refinement window centered on each approximate corner.
pub const CORNER_WINDOW_PX: u32 = 1000;

/// Hough lines within this many degrees of horizontal/vertical qualify.
const HOUGH_ANGLE_TOL_DEG: usize = 5;

/// A Hough line needs at least this fraction of the window side in votes.
const HOUGH_MIN_VOTE_FRAC: f64 = 0.4;

/// The four corners of a content area, in pixel-quadrant terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CornerId {
    NW,
    NE,
    SW,
    SE,
}

impl CornerId {
    pub const ALL: [CornerId; 4] = [CornerId::NW, CornerId::NE, CornerId::SW, CornerId::SE];

    pub fn name(&self) -> &'static str {
        match self {
            CornerId::NW => "NW",
            CornerId::NE => "NE",
            CornerId::SW => "SW",
            CornerId::SE => "SE",
        }
    }
}

/// A corner position before and after refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerEstimate {
    pub corner_id: CornerId,
    pub approx: PixelPoint,
    pub refined: Option<PixelPoint>,
}

impl CornerEstimate {
    pub fn new(corner_id: CornerId, approx: PixelPoint) -> Self {
        Self { corner_id, approx, refined: None }
    }

    /// The refined point when present, otherwise the approximation.
    pub fn position(&self) -> PixelPoint {
        self.refined.unwrap_or(self.approx)
    }
}

/// Which axis a coordinate label measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Lat,
    Lon,
}

/// A recognized geocoordinate label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoLabel {
    pub text: String,
    pub value: f64,
    pub axis: Axis,
    /// Center of the recognized text on the sheet.
    pub anchor: PixelPoint,
}

impl GeoLabel {
    pub fn new(text: impl Into<String>, value: f64, axis: Axis, anchor: PixelPoint) -> Result<Self, GeorefError> {
        let range = match axis {
            Axis::Lat => -90.0..=90.0,
            Axis::Lon => -180.0..=180.0,
        };
        if !value.is_finite() || !range.contains(&value) {
            return Err(GeorefError::InvalidParams(format!("label value {value} out of range for {axis:?}")));
        }
        Ok(Self { text: text.into(), value, axis, anchor })
    }
}

// ---------------------------------------------------------------------------
// Corner refinement

/// Refines an approximate corner to the intersection of the strongest
/// near-horizontal and near-vertical border lines inside a window of
/// `window` px (clipped at the image edges) centered on `approx`.
///
/// Steps: Otsu binarization, 3x3 morphological opening then closing to
/// suppress text specks, Hough line detection (1 px rho, 1 degree theta),
/// then intersect the strongest line of each family. When either family has
/// no line above the vote floor, `approx` is returned unchanged.
pub fn refine_corner(map: &RasterMap, approx: &PixelPoint, window: u32) -> PixelPoint {
    let half = (window / 2) as i64;
    let cx = approx.x.round() as i64;
    let cy = approx.y.round() as i64;
    let x0 = cx.saturating_sub(half).max(0) as u32;
    let y0 = cy.saturating_sub(half).max(0) as u32;
    let x1 = ((cx + half) as u32).min(map.width);
    let y1 = ((cy + half) as u32).min(map.height);
    if x1 <= x0 || y1 <= y0 {
        return *approx;
    }
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);

    let mut gray = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = map.get(x0 + x as u32, y0 + y as u32);
            gray[y * w + x] = (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as u8;
        }
    }

    let threshold = match otsu_threshold(&gray) {
        Some(t) => t,
        None => return *approx, // uniform window, nothing to refine against
    };
    let mut fg: Vec<bool> = gray.iter().map(|&g| g < threshold).collect();
    fg = morphological_open(&fg, w, h);
    fg = morphological_close(&fg, w, h);

    let min_votes = (HOUGH_MIN_VOTE_FRAC * w.min(h) as f64) as u32;
    let (horizontal, vertical) = hough_axis_lines(&fg, w, h, min_votes);
    let (h_line, v_line) = match (horizontal, vertical) {
        (Some(hl), Some(vl)) => (hl, vl),
        _ => return *approx,
    };

    match intersect_hough_lines(&h_line, &v_line) {
        Some((x, y)) => PixelPoint::new(x + x0 as f64, y + y0 as f64),
        None => *approx,
    }
}

/// Otsu's threshold over an 8-bit histogram. `None` when the window has no
/// intensity variance (e.g. blank paper).
fn otsu_threshold(gray: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &g in gray {
        hist[g as usize] += 1;
    }
    let total = gray.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best_t = None;
    let mut best_var = 0.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        sum0 += t as f64 * hist[t] as f64;
        let mean0 = sum0 / w0;
        let mean1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mean0 - mean1) * (mean0 - mean1);
        if between > best_var {
            best_var = between;
            best_t = Some(t as u8 + 1); // foreground: gray < threshold
        }
    }
    best_t
}

fn erode3(src: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            'kernel: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64
                        || !src[ny as usize * w + nx as usize]
                    {
                        all = false;
                        break 'kernel;
                    }
                }
            }
            out[y * w + x] = all;
        }
    }
    out
}

fn dilate3(src: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            'kernel: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64
                        && src[ny as usize * w + nx as usize]
                    {
                        any = true;
                        break 'kernel;
                    }
                }
            }
            out[y * w + x] = any;
        }
    }
    out
}

fn morphological_open(src: &[bool], w: usize, h: usize) -> Vec<bool> {
    dilate3(&erode3(src, w, h), w, h)
}

fn morphological_close(src: &[bool], w: usize, h: usize) -> Vec<bool> {
    erode3(&dilate3(src, w, h), w, h)
}

/// A line in Hough normal form: `x cos(theta) + y sin(theta) = rho`.
#[derive(Debug, Clone, Copy)]
struct HoughLine {
    rho: f64,
    theta_deg: usize,
    votes: u32,
}

/// Strongest near-horizontal and near-vertical lines above the vote floor.
///
/// Vote accumulation only covers the two angle families of interest
/// (within [`HOUGH_ANGLE_TOL_DEG`] of each axis); a full 180-degree sweep
/// would cost 18x more and contribute nothing here.
fn hough_axis_lines(fg: &[bool], w: usize, h: usize, min_votes: u32) -> (Option<HoughLine>, Option<HoughLine>) {
    let rho_max = ((w * w + h * h) as f64).sqrt().ceil() as i64;
    let n_rho = (2 * rho_max + 1) as usize;

    // near-horizontal lines have normals near 90 degrees; near-vertical
    // normals sit near 0/180.
    let mut angles: Vec<usize> = Vec::new();
    angles.extend(90 - HOUGH_ANGLE_TOL_DEG..=90 + HOUGH_ANGLE_TOL_DEG);
    angles.extend(0..=HOUGH_ANGLE_TOL_DEG);
    angles.extend(180 - HOUGH_ANGLE_TOL_DEG..180);

    let trig: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let r = (a as f64).to_radians();
            (r.cos(), r.sin())
        })
        .collect();

    let mut acc = vec![0u32; angles.len() * n_rho];
    for y in 0..h {
        for x in 0..w {
            if !fg[y * w + x] {
                continue;
            }
            for (ai, &(c, s)) in trig.iter().enumerate() {
                let rho = (x as f64 * c + y as f64 * s).round() as i64;
                let idx = ai * n_rho + (rho + rho_max) as usize;
                acc[idx] += 1;
            }
        }
    }

    let mut best_h: Option<HoughLine> = None;
    let mut best_v: Option<HoughLine> = None;
    for (ai, &theta) in angles.iter().enumerate() {
        for r in 0..n_rho {
            let votes = acc[ai * n_rho + r];
            if votes < min_votes {
                continue;
            }
            let line = HoughLine { rho: (r as i64 - rho_max) as f64, theta_deg: theta, votes };
            let near_horizontal = (90 - HOUGH_ANGLE_TOL_DEG..=90 + HOUGH_ANGLE_TOL_DEG).contains(&theta);
            let slot = if near_horizontal { &mut best_h } else { &mut best_v };
            if slot.is_none() || votes > slot.unwrap().votes {
                *slot = Some(line);
            }
        }
    }
    (best_h, best_v)
}

fn intersect_hough_lines(a: &HoughLine, b: &HoughLine) -> Option<(f64, f64)> {
    let (ta, tb) = ((a.theta_deg as f64).to_radians(), (b.theta_deg as f64).to_radians());
    let (ca, sa) = (ta.cos(), ta.sin());
    let (cb, sb) = (tb.cos(), tb.sin());
    let det = ca * sb - cb * sa;
    if det.abs() < 1e-9 {
        return None;
    }
    let x = (a.rho * sb - b.rho * sa) / det;
    let y = (b.rho * ca - a.rho * cb) / det;
    Some((x, y))
}

// ---------------------------------------------------------------------------
// Coordinate label parsing and validation

/// Parses a coordinate label: decimal (`117.5`, `117.5°`) or DMS
/// (`117°30′`, `117°30′15″`) with an optional N/S/E/W suffix. S and W
/// negate; the suffix also hints the axis.
pub fn parse_coordinate_text(text: &str) -> Result<(f64, Option<Axis>), GeorefError> {
    let original = text;
    let mut s = text.trim();
    if s.is_empty() {
        return Err(GeorefError::UnparseableCoordinate(original.into()));
    }

    let mut sign = 1.0;
    let mut axis = None;
    if let Some(last) = s.chars().last() {
        match last.to_ascii_uppercase() {
            'N' => axis = Some(Axis::Lat),
            'S' => {
                axis = Some(Axis::Lat);
                sign = -1.0;
            }
            'E' => axis = Some(Axis::Lon),
            'W' => {
                axis = Some(Axis::Lon);
                sign = -1.0;
            }
            _ => {}
        }
        if axis.is_some() {
            s = s[..s.len() - last.len_utf8()].trim_end();
        }
    }
    if let Some(rest) = s.strip_prefix('-') {
        sign = -sign;
        s = rest;
    }

    const MINUTE_MARKS: [char; 3] = ['\u{2032}', '\'', '\u{2019}'];
    const SECOND_MARKS: [char; 3] = ['\u{2033}', '"', '\u{201D}'];

    let parse_num = |t: &str| -> Result<f64, GeorefError> {
        let t = t.trim();
        t.parse::<f64>().map_err(|_| GeorefError::UnparseableCoordinate(original.into()))
    };

    let value = match s.find('\u{00B0}') {
        None => parse_num(s)?,
        Some(deg_pos) => {
            let degrees = parse_num(&s[..deg_pos])?;
            let rest = s[deg_pos + '\u{00B0}'.len_utf8()..].trim();
            if rest.is_empty() {
                degrees
            } else {
                let min_pos = rest
                    .find(MINUTE_MARKS)
                    .ok_or_else(|| GeorefError::UnparseableCoordinate(original.into()))?;
                let minutes = parse_num(&rest[..min_pos])?;
                let mark_len = rest[min_pos..].chars().next().unwrap().len_utf8();
                let after_min = rest[min_pos + mark_len..].trim();
                let seconds = if after_min.is_empty() {
                    0.0
                } else {
                    let sec_pos = after_min
                        .find(SECOND_MARKS)
                        .or_else(|| {
                            // two apostrophes also read as a second mark
                            after_min.find("''")
                        })
                        .ok_or_else(|| GeorefError::UnparseableCoordinate(original.into()))?;
                    parse_num(&after_min[..sec_pos])?
                };
                if !(0.0..60.0).contains(&minutes) || !(0.0..60.0).contains(&seconds) {
                    return Err(GeorefError::UnparseableCoordinate(original.into()));
                }
                degrees + minutes / 60.0 + seconds / 3600.0
            }
        }
    };
    Ok((sign * value, axis))
}

/// Why a label set failed the geocoordinate heuristic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum RejectReason {
    /// Not exactly eight labels.
    WrongCount { found: usize },
    /// Not exactly two distinct values per axis.
    WrongUniques { unique_lats: usize, unique_lons: usize },
    /// Some corner region does not contribute one latitude and one longitude.
    BadCornerDistribution,
}

/// The accepted outcome: two distinct latitudes and longitudes, each sorted
/// ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedCoordinates {
    pub lats: [f64; 2],
    pub lons: [f64; 2],
}

/// Equality tolerance when grouping label degree values.
const VALUE_EPS: f64 = 1e-9;

fn unique_sorted(values: &mut Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for &v in values.iter() {
        if out.last().map_or(true, |&u| (v - u).abs() > VALUE_EPS) {
            out.push(v);
        }
    }
    out
}

/// The corner-label heuristic: accept iff there are exactly eight labels,
/// exactly two distinct latitude and two distinct longitude values, and each
/// corner region (quadrant of the anchor cloud) contributes one latitude and
/// one longitude.
///
/// Acceptance is invariant under permutation of the label list.
pub fn validate_geocoordinates(labels: &[GeoLabel]) -> Result<ValidatedCoordinates, RejectReason> {
    if labels.len() != 8 {
        return Err(RejectReason::WrongCount { found: labels.len() });
    }
    let mut lats: Vec<f64> = labels.iter().filter(|l| l.axis == Axis::Lat).map(|l| l.value).collect();
    let mut lons: Vec<f64> = labels.iter().filter(|l| l.axis == Axis::Lon).map(|l| l.value).collect();
    let unique_lats = unique_sorted(&mut lats);
    let unique_lons = unique_sorted(&mut lons);
    if unique_lats.len() != 2 || unique_lons.len() != 2 {
        return Err(RejectReason::WrongUniques {
            unique_lats: unique_lats.len(),
            unique_lons: unique_lons.len(),
        });
    }

    // Quadrants come from the anchor cloud itself: split at the midpoint of
    // the anchors' extent; each quadrant must hold one lat and one lon label.
    let min_x = labels.iter().map(|l| l.anchor.x).fold(f64::INFINITY, f64::min);
    let max_x = labels.iter().map(|l| l.anchor.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = labels.iter().map(|l| l.anchor.y).fold(f64::INFINITY, f64::min);
    let max_y = labels.iter().map(|l| l.anchor.y).fold(f64::NEG_INFINITY, f64::max);
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);

    let mut lat_per_quadrant = [0usize; 4];
    let mut lon_per_quadrant = [0usize; 4];
    for l in labels {
        let q = (usize::from(l.anchor.x >= cx)) | (usize::from(l.anchor.y >= cy) << 1);
        match l.axis {
            Axis::Lat => lat_per_quadrant[q] += 1,
            Axis::Lon => lon_per_quadrant[q] += 1,
        }
    }
    for q in 0..4 {
        if lat_per_quadrant[q] != 1 || lon_per_quadrant[q] != 1 {
            return Err(RejectReason::BadCornerDistribution);
        }
    }

    Ok(ValidatedCoordinates {
        lats: [unique_lats[0], unique_lats[1]],
        lons: [unique_lons[0], unique_lons[1]],
    })
}

// ---------------------------------------------------------------------------
// GCP assembly

fn corner_lookup(corners: &[CornerEstimate]) -> Result<[&CornerEstimate; 4], GeorefError> {
    let mut slots: [Option<&CornerEstimate>; 4] = [None; 4];
    for c in corners {
        let i = match c.corner_id {
            CornerId::NW => 0,
            CornerId::NE => 1,
            CornerId::SW => 2,
            CornerId::SE => 3,
        };
        slots[i] = Some(c);
    }
    for (i, id) in CornerId::ALL.iter().enumerate() {
        if slots[i].is_none() {
            return Err(GeorefError::MissingCorner(id.name()));
        }
    }
    let [nw, ne, sw, se] = slots.map(|s| s.unwrap());

    // corner ids must agree with pixel quadrants
    let ok = nw.position().x < ne.position().x
        && sw.position().x < se.position().x
        && nw.position().y < sw.position().y
        && ne.position().y < se.position().y;
    if !ok {
        return Err(GeorefError::InconsistentCorners(
            "corner positions do not form NW/NE/SW/SE quadrants".into(),
        ));
    }
    Ok([nw, ne, sw, se])
}

fn gcp_set_from_corner_geo(
    map_id: &str,
    corners: [&CornerEstimate; 4],
    geo: [GeoPoint; 4],
) -> Result<GcpSet, GeorefError> {
    let gcps: Vec<GroundControlPoint> = corners
        .iter()
        .zip(geo)
        .map(|(c, g)| GroundControlPoint::new(c.position(), g))
        .collect();
    let pairs: Vec<(PixelPoint, PixelPoint)> = gcps
        .iter()
        .map(|g| (g.pixel, PixelPoint::new(g.geo.lon, g.geo.lat)))
        .collect();
    // The lon/lat embedding is affine for an axis-aligned quadrangle; a
    // failed fit (degenerate pixels) just means no stored homography.
    let homography = fit_homography(&pairs).ok();
    GcpSet::new(map_id, gcps, homography).map_err(|e| GeorefError::InvalidParams(e.to_string()))
}

/// Pairs validated label values with the four corners under canonical
/// orientation: the larger latitude goes to the smaller-y corners (NW, NE)
/// and the westmost longitude (smaller signed value) to the smaller-x
/// corners (NW, SW).
pub fn assemble_gcps(
    map_id: &str,
    corners: &[CornerEstimate],
    coords: &ValidatedCoordinates,
) -> Result<GcpSet, GeorefError> {
    let ordered = corner_lookup(corners)?;
    let (lat_lo, lat_hi) = (coords.lats[0], coords.lats[1]);
    let (lon_west, lon_east) = (coords.lons[0], coords.lons[1]);
    let geo = [
        GeoPoint::new(lon_west, lat_hi)?, // NW
        GeoPoint::new(lon_east, lat_hi)?, // NE
        GeoPoint::new(lon_west, lat_lo)?, // SW
        GeoPoint::new(lon_east, lat_lo)?, // SE
    ];
    gcp_set_from_corner_geo(map_id, ordered, geo)
}

/// Aligns the four detected corners to the bounding coordinates of a
/// retrieved topographic record (NW to (min lon, max lat), and so on).
pub fn corners_to_bbox_gcps(
    map_id: &str,
    corners: &[CornerEstimate],
    record: &TopoRecord,
) -> Result<GcpSet, GeorefError> {
    let b = &record.bbox;
    if b.max.lon - b.min.lon <= 0.0 || b.max.lat - b.min.lat <= 0.0 {
        return Err(GeorefError::DegenerateBBox);
    }
    let ordered = corner_lookup(corners)?;
    let geo = [
        GeoPoint::new(b.min.lon, b.max.lat)?, // NW
        GeoPoint::new(b.max.lon, b.max.lat)?, // NE
        GeoPoint::new(b.min.lon, b.min.lat)?, // SW
        GeoPoint::new(b.max.lon, b.min.lat)?, // SE
    ];
    gcp_set_from_corner_geo(map_id, ordered, geo)
}

// ---------------------------------------------------------------------------
// Title and toponyms

/// Reads the map title through the model client; the response is trimmed to
/// its first non-empty line.
pub fn extract_title(map: &RasterMap, client: &dyn ModelClient) -> Result<String, GeorefError> {
    let response = request_title(map, client).map_err(|e| GeorefError::InvalidParams(e.to_string()))?;
    let title = response
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or(GeorefError::EmptyTitle)?;
    Ok(title)
}

const US_STATES: [&str; 50] = [
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado", "Connecticut",
    "Delaware", "Florida", "Georgia", "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa",
    "Kansas", "Kentucky", "Louisiana", "Maine", "Maryland", "Massachusetts", "Michigan",
    "Minnesota", "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire",
    "New Jersey", "New Mexico", "New York", "North Carolina", "North Dakota", "Ohio",
    "Oklahoma", "Oregon", "Pennsylvania", "Rhode Island", "South Carolina", "South Dakota",
    "Tennessee", "Texas", "Utah", "Vermont", "Virginia", "Washington", "West Virginia",
    "Wisconsin", "Wyoming",
];

/// Rule-based toponym fallback: capitalized n-grams immediately before
/// "Quadrangle" or "County", plus any US state names present in the title.
pub fn extract_toponyms(title: &str) -> Vec<String> {
    let tokens: Vec<&str> = title.split_whitespace().collect();
    let clean = |t: &str| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
    let is_capitalized = |t: &str| clean(t).chars().next().is_some_and(|c| c.is_uppercase());

    let mut out: Vec<String> = Vec::new();
    let mut push_unique = |name: String| {
        if !name.is_empty() && !out.contains(&name) {
            out.push(name);
        }
    };

    for (i, tok) in tokens.iter().enumerate() {
        let word = clean(tok).to_lowercase();
        if word == "quadrangle" || word == "county" {
            let mut start = i;
            while start > 0 && is_capitalized(tokens[start - 1]) {
                let prev = clean(tokens[start - 1]).to_lowercase();
                if prev == "the" || prev == "quadrangle" || prev == "county" {
                    break;
                }
                start -= 1;
            }
            if start < i {
                let gram: Vec<String> = tokens[start..i].iter().map(|t| clean(t)).collect();
                push_unique(gram.join(" "));
            }
        }
    }

    for state in US_STATES {
        let lowered = title.to_lowercase();
        if lowered.contains(&state.to_lowercase()) {
            push_unique(state.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientError, FnModelClient, ModelRequest};
    use crate::geo::GeoBBox;
    use crate::model::WHITE;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    // -- corner refinement ---------------------------------------------------

    fn draw_hline(map: &mut RasterMap, y: u32, thickness: u32) {
        for dy in 0..thickness {
            for x in 0..map.width {
                map.set(x, y + dy, [0, 0, 0]);
            }
        }
    }

    fn draw_vline(map: &mut RasterMap, x: u32, thickness: u32) {
        for dx in 0..thickness {
            for y in 0..map.height {
                map.set(x + dx, y, [0, 0, 0]);
            }
        }
    }

    #[test]
    fn refine_finds_crossing_lines() {
        let mut map = RasterMap::filled("w", 1200, 1200, WHITE);
        draw_hline(&mut map, 480, 3);
        draw_vline(&mut map, 620, 3);
        let refined = refine_corner(&map, &PixelPoint::new(600.0, 500.0), 1000);
        assert!(refined.distance(&PixelPoint::new(620.0, 480.0)) <= 2.0, "refined {refined:?}");
    }

    #[test]
    fn refine_blank_window_falls_back() {
        let map = RasterMap::filled("w", 1200, 1200, WHITE);
        let approx = PixelPoint::new(600.0, 500.0);
        assert_eq!(refine_corner(&map, &approx, 1000), approx);
    }

    #[test]
    fn refine_survives_text_specks() {
        let mut map = RasterMap::filled("w", 1200, 1200, WHITE);
        draw_hline(&mut map, 480, 3);
        draw_vline(&mut map, 620, 3);
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..200 {
            let x = rng.gen_range(120..1080);
            let y = rng.gen_range(120..1080);
            for dy in 0..2u32 {
                for dx in 0..2u32 {
                    map.set(x + dx, y + dy, [20, 20, 20]);
                }
            }
        }
        let refined = refine_corner(&map, &PixelPoint::new(600.0, 500.0), 1000);
        assert!(refined.distance(&PixelPoint::new(620.0, 480.0)) <= 2.0, "refined {refined:?}");
    }

    #[test]
    fn refine_window_clips_at_edges() {
        let mut map = RasterMap::filled("w", 400, 400, WHITE);
        draw_hline(&mut map, 50, 3);
        draw_vline(&mut map, 60, 3);
        let refined = refine_corner(&map, &PixelPoint::new(30.0, 30.0), 1000);
        assert!(refined.distance(&PixelPoint::new(60.0, 50.0)) <= 2.0, "refined {refined:?}");
    }

    // -- coordinate parsing ---------------------------------------------------

    #[test]
    fn parse_decimal_and_degree_forms() {
        assert_eq!(parse_coordinate_text("34\u{00B0}").unwrap(), (34.0, None));
        assert_eq!(parse_coordinate_text("117.5").unwrap(), (117.5, None));
        assert_eq!(parse_coordinate_text("117.5\u{00B0}").unwrap(), (117.5, None));
    }

    #[test]
    fn parse_dms_forms() {
        let (v, _) = parse_coordinate_text("117\u{00B0}30\u{2032}").unwrap();
        assert!((v - 117.5).abs() < 1e-12);
        let (v, axis) = parse_coordinate_text("117\u{00B0}30\u{2032}15\u{2033}W").unwrap();
        assert!((v - (-(117.0 + 30.0 / 60.0 + 15.0 / 3600.0))).abs() < 1e-9);
        assert_eq!(axis, Some(Axis::Lon));
    }

    #[test]
    fn parse_suffixes_set_axis_and_sign() {
        assert_eq!(parse_coordinate_text("34.5N").unwrap(), (34.5, Some(Axis::Lat)));
        assert_eq!(parse_coordinate_text("34.5 S").unwrap(), (-34.5, Some(Axis::Lat)));
        assert_eq!(parse_coordinate_text("117E").unwrap(), (117.0, Some(Axis::Lon)));
    }

    #[test]
    fn parse_rejects_garbage() {
        for bad in ["", "abc", "12x34", "117\u{00B0}70\u{2032}"] {
            assert!(parse_coordinate_text(bad).is_err(), "{bad:?} parsed");
        }
    }

    // -- validation ------------------------------------------------------------

    fn eight_valid_labels() -> Vec<GeoLabel> {
        // anchors near the four corners of a 1000x1000 sheet
        let corners = [(50.0, 50.0), (950.0, 50.0), (50.0, 950.0), (950.0, 950.0)];
        let lats = [34.5, 34.5, 34.0, 34.0];
        let lons = [-117.5, -117.0, -117.5, -117.0];
        let mut labels = Vec::new();
        for i in 0..4 {
            let (x, y) = corners[i];
            labels.push(GeoLabel::new("lat", lats[i], Axis::Lat, PixelPoint::new(x, y + 5.0)).unwrap());
            labels.push(GeoLabel::new("lon", lons[i], Axis::Lon, PixelPoint::new(x + 5.0, y)).unwrap());
        }
        labels
    }

    #[test]
    fn accepts_canonical_eight_labels() {
        let got = validate_geocoordinates(&eight_valid_labels()).unwrap();
        assert_eq!(got.lats, [34.0, 34.5]);
        assert_eq!(got.lons, [-117.5, -117.0]);
    }

    #[test]
    fn acceptance_invariant_under_permutation() {
        let mut labels = eight_valid_labels();
        let want = validate_geocoordinates(&labels).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            for i in (1..labels.len()).rev() {
                labels.swap(i, rng.gen_range(0..=i));
            }
            assert_eq!(validate_geocoordinates(&labels).unwrap(), want);
        }
    }

    #[test]
    fn rejects_wrong_count() {
        let mut labels = eight_valid_labels();
        labels.pop();
        assert_eq!(
            validate_geocoordinates(&labels),
            Err(RejectReason::WrongCount { found: 7 })
        );
    }

    #[test]
    fn rejects_wrong_uniques() {
        let mut labels = eight_valid_labels();
        labels[0].value = 35.0; // third distinct latitude
        assert_eq!(
            validate_geocoordinates(&labels),
            Err(RejectReason::WrongUniques { unique_lats: 3, unique_lons: 2 })
        );
    }

    #[test]
    fn rejects_bad_corner_distribution() {
        let mut labels = eight_valid_labels();
        // move the NW latitude label into the NE quadrant; values stay valid
        labels[0].anchor = PixelPoint::new(900.0, 60.0);
        assert_eq!(validate_geocoordinates(&labels), Err(RejectReason::BadCornerDistribution));
    }

    // -- assembly ---------------------------------------------------------------

    fn unit_corners() -> Vec<CornerEstimate> {
        vec![
            CornerEstimate::new(CornerId::NW, PixelPoint::new(0.0, 0.0)),
            CornerEstimate::new(CornerId::NE, PixelPoint::new(1.0, 0.0)),
            CornerEstimate::new(CornerId::SW, PixelPoint::new(0.0, 1.0)),
            CornerEstimate::new(CornerId::SE, PixelPoint::new(1.0, 1.0)),
        ]
    }

    #[test]
    fn assemble_pairs_values_canonically() {
        let coords = ValidatedCoordinates { lats: [34.0, 35.0], lons: [-118.0, -117.0] };
        let set = assemble_gcps("m", &unit_corners(), &coords).unwrap();
        let find = |x: f64, y: f64| {
            set.gcps
                .iter()
                .find(|g| g.pixel == PixelPoint::new(x, y))
                .map(|g| (g.geo.lon, g.geo.lat))
                .unwrap()
        };
        assert_eq!(find(0.0, 0.0), (-118.0, 35.0)); // NW
        assert_eq!(find(1.0, 0.0), (-117.0, 35.0)); // NE
        assert_eq!(find(0.0, 1.0), (-118.0, 34.0)); // SW
        assert_eq!(find(1.0, 1.0), (-117.0, 34.0)); // SE
        assert!(set.homography.is_some());
    }

    #[test]
    fn assemble_eastern_hemisphere_westmost_is_smaller_signed() {
        let coords = ValidatedCoordinates { lats: [10.0, 11.0], lons: [10.0, 11.0] };
        let set = assemble_gcps("m", &unit_corners(), &coords).unwrap();
        let nw = set.gcps.iter().find(|g| g.pixel == PixelPoint::new(0.0, 0.0)).unwrap();
        assert_eq!(nw.geo.lon, 10.0);
    }

    #[test]
    fn assemble_latitude_decreases_with_y() {
        let coords = ValidatedCoordinates { lats: [34.0, 35.0], lons: [-118.0, -117.0] };
        let set = assemble_gcps("m", &unit_corners(), &coords).unwrap();
        for a in &set.gcps {
            for b in &set.gcps {
                if a.pixel.y < b.pixel.y {
                    assert!(a.geo.lat > b.geo.lat);
                }
                if (a.pixel.y - b.pixel.y).abs() < 1e-12 {
                    assert_eq!(a.geo.lat, b.geo.lat);
                }
                if (a.pixel.x - b.pixel.x).abs() < 1e-12 {
                    assert_eq!(a.geo.lon, b.geo.lon);
                }
            }
        }
    }

    #[test]
    fn assemble_missing_corner_errors() {
        let mut corners = unit_corners();
        corners.remove(2);
        let coords = ValidatedCoordinates { lats: [34.0, 35.0], lons: [-118.0, -117.0] };
        assert!(matches!(
            assemble_gcps("m", &corners, &coords),
            Err(GeorefError::MissingCorner("SW"))
        ));
    }

    #[test]
    fn bbox_gcps_match_assemble_pairing() {
        let record = TopoRecord {
            id: "t".into(),
            quadrangle_name: "Q".into(),
            state: "S".into(),
            county: None,
            bbox: GeoBBox::from_degrees(-118.0, 34.0, -117.0, 35.0).unwrap(),
            scale: None,
        };
        let via_bbox = corners_to_bbox_gcps("m", &unit_corners(), &record).unwrap();
        let coords = ValidatedCoordinates { lats: [34.0, 35.0], lons: [-118.0, -117.0] };
        let via_labels = assemble_gcps("m", &unit_corners(), &coords).unwrap();
        assert_eq!(via_bbox.gcps, via_labels.gcps);
    }

    #[test]
    fn bbox_gcps_reject_degenerate_record() {
        let record = TopoRecord {
            id: "t".into(),
            quadrangle_name: "Q".into(),
            state: "S".into(),
            county: None,
            bbox: GeoBBox::from_degrees(-118.0, 34.0, -118.0, 35.0).unwrap(),
            scale: None,
        };
        assert!(matches!(
            corners_to_bbox_gcps("m", &unit_corners(), &record),
            Err(GeorefError::DegenerateBBox)
        ));
    }

    #[test]
    fn bbox_gcps_use_approx_when_unrefined() {
        let record = TopoRecord {
            id: "t".into(),
            quadrangle_name: "Q".into(),
            state: "S".into(),
            county: None,
            bbox: GeoBBox::from_degrees(-118.0, 34.0, -117.0, 35.0).unwrap(),
            scale: None,
        };
        let set = corners_to_bbox_gcps("m", &unit_corners(), &record).unwrap();
        assert_eq!(set.gcps[0].pixel, PixelPoint::new(0.0, 0.0));
    }

    // -- title and toponyms ------------------------------------------------------

    #[test]
    fn title_takes_first_non_empty_line() {
        let map = RasterMap::filled("m", 4, 4, WHITE);
        let c = FnModelClient(|_: &ModelRequest| Ok("\n\n  Geologic Map of X\nsecond line".to_string()));
        assert_eq!(extract_title(&map, &c).unwrap(), "Geologic Map of X");

        let fixed = FnModelClient(|_: &ModelRequest| Ok("A Title".to_string()));
        assert_eq!(extract_title(&map, &fixed).unwrap(), "A Title");
    }

    #[test]
    fn empty_title_is_an_error() {
        let map = RasterMap::filled("m", 4, 4, WHITE);
        let c = FnModelClient(|_: &ModelRequest| Ok("   \n ".to_string()));
        assert!(matches!(extract_title(&map, &c), Err(GeorefError::EmptyTitle)));
        let failing = FnModelClient(|_: &ModelRequest| {
            Err(ClientError::Transport("down".into()))
        });
        assert!(extract_title(&map, &failing).is_err());
    }

    #[test]
    fn toponyms_from_typical_title() {
        let got = extract_toponyms(
            "Geologic Map of the Nazareth Quadrangle, Northampton County, Pennsylvania",
        );
        assert_eq!(got, vec!["Nazareth".to_string(), "Northampton".to_string(), "Pennsylvania".to_string()]);
    }

    #[test]
    fn toponyms_multiword_and_states() {
        let got = extract_toponyms("Geology of the Mountain Top Mercury Deposit, Southwestern Alaska");
        assert!(got.contains(&"Alaska".to_string()));
        let got2 = extract_toponyms("Geologic Map of the Santa Rosa Quadrangle, New Mexico");
        assert!(got2.contains(&"Santa Rosa".to_string()));
        assert!(got2.contains(&"New Mexico".to_string()));
    }
}
