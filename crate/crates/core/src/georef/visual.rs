//! Visual-based georeferencing.
//!
//! Candidate topographic sheets inside a 10 km buffer of the text-derived
//! anchor are matched against the query map by a [`MatcherClient`]. RANSAC
//! fits the query-to-candidate homography on the confident matches, each
//! candidate is scored by the mean confidence of its inliers, and the best
//! candidate is accepted only when that mean reaches 0.5 — low-confidence
//! alignments are discarded rather than emitted.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::topo::{TopoIndex, TopoRecord};
use super::GeorefError;
use crate::client::{ClientError, KeypointMatch, MatcherClient};
use crate::geo::{
    fit_homography, geodesic_distance_km, GeoBBox, GeoPoint, GroundControlPoint, Homography,
    PixelPoint,
};
use crate::model::{GcpSet, RasterMap};

/// Buffer distance for candidate selection, in kilometers.
pub const CANDIDATE_BUFFER_KM: f64 = 10.0;

/// Keypoint matches must exceed this confidence to enter the final fit.
pub const MATCH_CONFIDENCE_FLOOR: f64 = 0.5;

/// A candidate whose mean inlier confidence falls below this is discarded.
pub const MEAN_CONFIDENCE_GATE: f64 = 0.5;

/// RANSAC stops early once this probability of having seen an outlier-free
/// sample is reached (never exceeding the configured iteration cap).
const RANSAC_CONFIDENCE: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub reproj_threshold_px: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 2000, reproj_threshold_px: 3.0, seed: 0 }
    }
}

impl RansacParams {
    fn validate(&self) -> Result<(), GeorefError> {
        if self.iterations == 0 {
            return Err(GeorefError::InvalidParams("iterations must be >= 1".into()));
        }
        if !(self.reproj_threshold_px > 0.0) {
            return Err(GeorefError::InvalidParams("reproj threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// When the 0.5 confidence filter is applied relative to RANSAC.
/// Pre-filtering is the conservative default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceFilter {
    PreRansac,
    PostRansac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualGeorefParams {
    pub ransac: RansacParams,
    pub confidence_filter: ConfidenceFilter,
}

impl Default for VisualGeorefParams {
    fn default() -> Self {
        Self { ransac: RansacParams::default(), confidence_filter: ConfidenceFilter::PreRansac }
    }
}

/// Geographic anchor produced by the text path: either a point or a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeoAnchor {
    Point(GeoPoint),
    BBox(GeoBBox),
}

/// Distance from the anchor to a record's bbox; containment counts as zero.
pub fn anchor_distance_km(anchor: &GeoAnchor, bbox: &GeoBBox) -> f64 {
    match anchor {
        GeoAnchor::Point(p) => {
            let nearest = bbox.clamp(p);
            geodesic_distance_km(p, &nearest)
        }
        GeoAnchor::BBox(a) => {
            if a.intersects(bbox) {
                return 0.0;
            }
            // Per-axis nearest coordinates between two AABBs: the facing
            // endpoints where intervals are disjoint, any shared value where
            // they overlap.
            let (lon_a, lon_b) = nearest_interval(a.min.lon, a.max.lon, bbox.min.lon, bbox.max.lon);
            let (lat_a, lat_b) = nearest_interval(a.min.lat, a.max.lat, bbox.min.lat, bbox.max.lat);
            geodesic_distance_km(
                &GeoPoint { lon: lon_a, lat: lat_a },
                &GeoPoint { lon: lon_b, lat: lat_b },
            )
        }
    }
}

fn nearest_interval(a0: f64, a1: f64, b0: f64, b1: f64) -> (f64, f64) {
    if a1 < b0 {
        (a1, b0)
    } else if b1 < a0 {
        (a0, b1)
    } else {
        let mid = a0.max(b0).min(a1).min(b1);
        (mid, mid)
    }
}

/// All records within `buffer_km` of the anchor, in index order.
pub fn select_candidates(anchor: &GeoAnchor, index: &TopoIndex, buffer_km: f64) -> Vec<TopoRecord> {
    index
        .records()
        .iter()
        .filter(|r| anchor_distance_km(anchor, &r.bbox) <= buffer_km)
        .cloned()
        .collect()
}

/// Seeded RANSAC homography estimation.
///
/// Each iteration samples 4 matches, fits, and counts matches whose
/// reprojection error is below the threshold; the best consensus set is
/// refit by least squares. Identical inputs and seed give identical output.
/// Every returned inlier reprojects within the threshold under the returned
/// homography.
pub fn ransac_homography(
    matches: &[KeypointMatch],
    params: &RansacParams,
) -> Result<(Homography, Vec<usize>), GeorefError> {
    params.validate()?;
    let n = matches.len();
    if n < 4 {
        return Err(GeorefError::InsufficientMatches(n));
    }

    let reproj_ok = |h: &Homography, m: &KeypointMatch| -> bool {
        match h.apply(&m.query_px) {
            Ok(p) => p.distance(&m.candidate_px) < params.reproj_threshold_px,
            Err(_) => false,
        }
    };
    let consensus = |h: &Homography| -> Vec<usize> {
        (0..n).filter(|&i| reproj_ok(h, &matches[i])).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<usize>)> = None;
    let mut needed = params.iterations;

    let mut iter = 0usize;
    while iter < needed {
        iter += 1;
        // sample 4 distinct indices
        let mut idx = [0usize; 4];
        let mut k = 0;
        while k < 4 {
            let cand = rng.gen_range(0..n);
            if !idx[..k].contains(&cand) {
                idx[k] = cand;
                k += 1;
            }
        }
        let pairs: Vec<(PixelPoint, PixelPoint)> =
            idx.iter().map(|&i| (matches[i].query_px, matches[i].candidate_px)).collect();
        let h = match fit_homography(&pairs) {
            Ok(h) => h,
            Err(_) => continue, // degenerate sample, skip
        };
        let inliers = consensus(&h);
        let improved = match &best {
            Some((_, cur)) => inliers.len() > cur.len(),
            None => !inliers.is_empty(),
        };
        if improved {
            let w = inliers.len() as f64 / n as f64;
            best = Some((h, inliers));
            // adaptive termination: enough iterations that an outlier-free
            // sample was drawn with RANSAC_CONFIDENCE probability
            let p_sample = w.powi(4);
            if p_sample >= 1.0 {
                needed = iter;
            } else if p_sample > 0.0 {
                let est = ((1.0 - RANSAC_CONFIDENCE).ln() / (1.0 - p_sample).ln()).ceil();
                needed = needed.min((est as usize).max(1));
            }
        }
    }

    let (sample_h, sample_inliers) = best.ok_or(GeorefError::NoConsensus)?;
    if sample_inliers.len() < 4 {
        return Err(GeorefError::NoConsensus);
    }

    // Least-squares refit on the consensus set, keeping the refit only if it
    // retains a valid consensus.
    let refit_pairs: Vec<(PixelPoint, PixelPoint)> = sample_inliers
        .iter()
        .map(|&i| (matches[i].query_px, matches[i].candidate_px))
        .collect();
    let (h, inliers) = match fit_homography(&refit_pairs) {
        Ok(refit) => {
            let refit_inliers = consensus(&refit);
            if refit_inliers.len() >= 4 {
                (refit, refit_inliers)
            } else {
                (sample_h, sample_inliers)
            }
        }
        Err(_) => (sample_h, sample_inliers),
    };

    debug_assert!(inliers.iter().all(|&i| reproj_ok(&h, &matches[i])));
    Ok((h, inliers))
}

/// One candidate's alignment outcome.
#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub record: TopoRecord,
    pub homography: Option<Homography>,
    pub inliers: Vec<KeypointMatch>,
    /// Mean confidence of the inliers (0 when there are none).
    pub mean_confidence: f64,
}

impl CandidateResult {
    fn failed(record: TopoRecord) -> Self {
        Self { record, homography: None, inliers: Vec::new(), mean_confidence: 0.0 }
    }
}

fn mean_confidence(matches: &[KeypointMatch]) -> f64 {
    if matches.is_empty() {
        0.0
    } else {
        matches.iter().map(|m| m.confidence).sum::<f64>() / matches.len() as f64
    }
}

/// The candidate with the highest mean inlier confidence, or `None` when no
/// candidate has a homography or the best mean is below the 0.5 gate.
pub fn score_and_select(results: Vec<CandidateResult>) -> Option<CandidateResult> {
    let best = results
        .into_iter()
        .filter(|r| r.homography.is_some())
        .max_by(|a, b| {
            a.mean_confidence
                .total_cmp(&b.mean_confidence)
                .then_with(|| b.record.id.cmp(&a.record.id))
        })?;
    if best.mean_confidence < MEAN_CONFIDENCE_GATE {
        return None;
    }
    Some(best)
}

/// Source of candidate raster images, keyed by topo record.
pub trait CandidateRasterSource: Sync {
    fn raster(&self, record: &TopoRecord) -> Result<Option<RasterMap>, ClientError>;
}

impl CandidateRasterSource for std::collections::HashMap<String, RasterMap> {
    fn raster(&self, record: &TopoRecord) -> Result<Option<RasterMap>, ClientError> {
        Ok(self.get(&record.id).cloned())
    }
}

/// Affine pixel-to-geo mapping for a georeferenced candidate raster: pixel
/// (0,0) is the record bbox's NW corner, (w,h) its SE corner.
pub fn candidate_pixel_to_geo(record: &TopoRecord, width: u32, height: u32) -> Result<Homography, GeorefError> {
    let b = &record.bbox;
    let dlon = b.max.lon - b.min.lon;
    let dlat = b.max.lat - b.min.lat;
    if dlon <= 0.0 || dlat <= 0.0 {
        return Err(GeorefError::DegenerateBBox);
    }
    Ok(Homography::new([
        [dlon / width as f64, 0.0, b.min.lon],
        [0.0, -dlat / height as f64, b.max.lat],
        [0.0, 0.0, 1.0],
    ])?)
}

fn evaluate_candidate(
    query: &RasterMap,
    record: &TopoRecord,
    raster: &RasterMap,
    matcher: &dyn MatcherClient,
    params: &VisualGeorefParams,
    seed: u64,
) -> Result<CandidateResult, GeorefError> {
    let matches = matcher.match_keypoints(query, raster)?;
    let ransac = RansacParams { seed, ..params.ransac };

    let (h, inliers): (Homography, Vec<KeypointMatch>) = match params.confidence_filter {
        ConfidenceFilter::PreRansac => {
            let confident: Vec<KeypointMatch> = matches
                .iter()
                .filter(|m| m.confidence > MATCH_CONFIDENCE_FLOOR)
                .copied()
                .collect();
            if confident.len() < 4 {
                return Ok(CandidateResult::failed(record.clone()));
            }
            match ransac_homography(&confident, &ransac) {
                Ok((h, idx)) => (h, idx.into_iter().map(|i| confident[i]).collect()),
                Err(GeorefError::InsufficientMatches(_)) | Err(GeorefError::NoConsensus) => {
                    return Ok(CandidateResult::failed(record.clone()));
                }
                Err(e) => return Err(e),
            }
        }
        ConfidenceFilter::PostRansac => {
            let (_, idx) = match ransac_homography(&matches, &ransac) {
                Ok(v) => v,
                Err(GeorefError::InsufficientMatches(_)) | Err(GeorefError::NoConsensus) => {
                    return Ok(CandidateResult::failed(record.clone()));
                }
                Err(e) => return Err(e),
            };
            let confident: Vec<KeypointMatch> = idx
                .into_iter()
                .map(|i| matches[i])
                .filter(|m| m.confidence > MATCH_CONFIDENCE_FLOOR)
                .collect();
            if confident.len() < 4 {
                return Ok(CandidateResult::failed(record.clone()));
            }
            let pairs: Vec<(PixelPoint, PixelPoint)> =
                confident.iter().map(|m| (m.query_px, m.candidate_px)).collect();
            match fit_homography(&pairs) {
                Ok(h) => (h, confident),
                Err(_) => return Ok(CandidateResult::failed(record.clone())),
            }
        }
    };

    let mean = mean_confidence(&inliers);
    Ok(CandidateResult { record: record.clone(), homography: Some(h), inliers, mean_confidence: mean })
}

/// Runs the full visual path: match each candidate, gate, select the best,
/// and compose the query-to-candidate homography with the candidate's
/// pixel-to-geo mapping. Returns `None` when no candidate passes gating.
///
/// Candidates are evaluated in parallel; RANSAC is seeded per candidate as
/// `params.ransac.seed + index` so results are deterministic.
pub fn georeference_visual(
    query: &RasterMap,
    candidates: &[TopoRecord],
    matcher: &dyn MatcherClient,
    rasters: &dyn CandidateRasterSource,
    params: &VisualGeorefParams,
) -> Result<Option<GcpSet>, GeorefError> {
    params.ransac.validate()?;

    let results: Vec<Result<Option<(CandidateResult, u32, u32)>, GeorefError>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let raster = match rasters.raster(record)? {
                Some(r) => r,
                None => return Ok(None),
            };
            let seed = params.ransac.seed.wrapping_add(i as u64);
            let result = evaluate_candidate(query, record, &raster, matcher, params, seed)?;
            Ok(Some((result, raster.width, raster.height)))
        })
        .collect();

    let mut evaluated = Vec::new();
    let mut dims = std::collections::HashMap::new();
    for r in results {
        if let Some((res, w, h)) = r? {
            dims.insert(res.record.id.clone(), (w, h));
            evaluated.push(res);
        }
    }

    let best = match score_and_select(evaluated) {
        Some(b) => b,
        None => return Ok(None),
    };
    let (cw, ch) = dims[&best.record.id];
    let pixel_to_geo = candidate_pixel_to_geo(&best.record, cw, ch)?;
    let h_query_to_candidate = best.homography.expect("selected candidate has a homography");
    let composed = pixel_to_geo.compose(&h_query_to_candidate)?;

    let (w, h) = (query.width as f64, query.height as f64);
    let corners = [
        PixelPoint::new(0.0, 0.0),
        PixelPoint::new(w, 0.0),
        PixelPoint::new(0.0, h),
        PixelPoint::new(w, h),
    ];
    let mut gcps = Vec::with_capacity(4);
    for c in corners {
        let g = composed.apply(&c)?;
        let geo = GeoPoint::new(g.x, g.y)?;
        gcps.push(
            GroundControlPoint::with_confidence(c, geo, best.mean_confidence.clamp(0.0, 1.0))
                .map_err(GeorefError::Geo)?,
        );
    }
    let set = GcpSet::new(query.id.clone(), gcps, Some(composed))
        .map_err(|e| GeorefError::InvalidParams(e.to_string()))?;
    Ok(Some(set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn record_with_bbox(id: &str, min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> TopoRecord {
        TopoRecord {
            id: id.into(),
            quadrangle_name: id.into(),
            state: "X".into(),
            county: None,
            bbox: GeoBBox::from_degrees(min_lon, min_lat, max_lon, max_lat).unwrap(),
            scale: None,
        }
    }

    // one degree of latitude is ~111.195 km; use that to plant distances
    const KM_PER_DEG: f64 = 111.19507932613371;

    #[test]
    fn candidate_containment_counts_as_zero() {
        let anchor = GeoAnchor::Point(GeoPoint::new(-117.5, 34.5).unwrap());
        let idx = TopoIndex::from_records(vec![record_with_bbox("inside", -118.0, 34.0, -117.0, 35.0)]).unwrap();
        let got = select_candidates(&anchor, &idx, CANDIDATE_BUFFER_KM);
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn candidate_buffer_boundary() {
        // record bboxes offset north of the anchor by a controlled distance
        let anchor = GeoAnchor::Point(GeoPoint::new(0.0, 0.0).unwrap());
        let at = |km: f64| {
            let deg = km / KM_PER_DEG;
            record_with_bbox("r", -1.0, deg, 1.0, deg + 1.0)
        };
        assert!(anchor_distance_km(&anchor, &at(9.9).bbox) < CANDIDATE_BUFFER_KM);
        assert!(anchor_distance_km(&anchor, &at(10.1).bbox) > CANDIDATE_BUFFER_KM);

        let idx = TopoIndex::from_records(vec![at(9.9)]).unwrap();
        assert_eq!(select_candidates(&anchor, &idx, CANDIDATE_BUFFER_KM).len(), 1);
        let idx = TopoIndex::from_records(vec![at(10.1)]).unwrap();
        assert!(select_candidates(&anchor, &idx, CANDIDATE_BUFFER_KM).is_empty());
    }

    #[test]
    fn candidate_bbox_anchor() {
        let anchor = GeoAnchor::BBox(GeoBBox::from_degrees(-1.0, -1.0, 0.0, 0.0).unwrap());
        let overlapping = record_with_bbox("o", -0.5, -0.5, 0.5, 0.5);
        assert_eq!(anchor_distance_km(&anchor, &overlapping.bbox), 0.0);
        let east = record_with_bbox("e", 0.05, -1.0, 1.0, 0.0);
        let d = anchor_distance_km(&anchor, &east.bbox);
        assert!((d - 0.05 * KM_PER_DEG).abs() < 0.1, "distance {d}");
    }

    #[test]
    fn empty_index_no_candidates() {
        let anchor = GeoAnchor::Point(GeoPoint::new(0.0, 0.0).unwrap());
        let idx = TopoIndex::from_records(vec![]).unwrap();
        assert!(select_candidates(&anchor, &idx, CANDIDATE_BUFFER_KM).is_empty());
    }

    fn planted_matches(h: &Homography, n_inliers: usize, n_outliers: usize, seed: u64) -> Vec<KeypointMatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for _ in 0..n_inliers {
            let q = PixelPoint::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
            let c = h.apply(&q).unwrap();
            out.push(KeypointMatch { query_px: q, candidate_px: c, confidence: rng.gen_range(0.6..1.0) });
        }
        for _ in 0..n_outliers {
            out.push(KeypointMatch {
                query_px: PixelPoint::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)),
                candidate_px: PixelPoint::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)),
                confidence: rng.gen_range(0.6..1.0),
            });
        }
        out
    }

    fn planted_h() -> Homography {
        Homography::new([
            [0.9, 0.05, 12.0],
            [-0.04, 1.1, -8.0],
            [1e-5, -2e-5, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn ransac_recovers_planted_transform() {
        let truth = planted_h();
        let matches = planted_matches(&truth, 20, 10, 42);
        let (h, inliers) = ransac_homography(&matches, &RansacParams::default()).unwrap();
        assert!(inliers.len() >= 20, "found {} inliers", inliers.len());
        for m in &matches[..20] {
            let p = h.apply(&m.query_px).unwrap();
            assert!(p.distance(&m.candidate_px) <= 1e-3, "reproj {}", p.distance(&m.candidate_px));
        }
    }

    #[test]
    fn ransac_three_matches_insufficient() {
        let matches = planted_matches(&planted_h(), 3, 0, 1);
        assert!(matches!(
            ransac_homography(&matches, &RansacParams::default()),
            Err(GeorefError::InsufficientMatches(3))
        ));
    }

    #[test]
    fn ransac_collinear_queries_fail() {
        let matches: Vec<KeypointMatch> = (0..10)
            .map(|i| KeypointMatch {
                query_px: PixelPoint::new(i as f64, i as f64),
                candidate_px: PixelPoint::new(i as f64 * 2.0, i as f64),
                confidence: 0.9,
            })
            .collect();
        assert!(matches!(
            ransac_homography(&matches, &RansacParams::default()),
            Err(GeorefError::NoConsensus)
        ));
    }

    #[test]
    fn ransac_deterministic_for_fixed_seed() {
        let matches = planted_matches(&planted_h(), 15, 15, 7);
        let params = RansacParams { seed: 99, ..Default::default() };
        let (h1, in1) = ransac_homography(&matches, &params).unwrap();
        let (h2, in2) = ransac_homography(&matches, &params).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(in1, in2);
    }

    #[test]
    fn ransac_monotone_gating() {
        // raising the confidence floor never increases the candidate pool
        let matches = planted_matches(&planted_h(), 20, 5, 3);
        let pool = |floor: f64| matches.iter().filter(|m| m.confidence > floor).count();
        assert!(pool(0.5) >= pool(0.7));
        assert!(pool(0.7) >= pool(0.9));
    }

    #[test]
    fn score_and_select_gate_boundaries() {
        let mk = |id: &str, mean: f64| CandidateResult {
            record: record_with_bbox(id, 0.0, 0.0, 1.0, 1.0),
            homography: Some(Homography::identity()),
            inliers: vec![],
            mean_confidence: mean,
        };
        // argmax
        let best = score_and_select(vec![mk("a", 0.7), mk("b", 0.6)]).unwrap();
        assert_eq!(best.record.id, "a");
        // below gate
        assert!(score_and_select(vec![mk("a", 0.49)]).is_none());
        // at the gate exactly: "below 0.5" is discarded, 0.5 itself is not
        assert!(score_and_select(vec![mk("a", 0.50)]).is_some());
        assert!(score_and_select(vec![mk("a", 0.51)]).is_some());
        // empty
        assert!(score_and_select(vec![]).is_none());
        // no homography
        let mut nohomo = mk("a", 0.9);
        nohomo.homography = None;
        assert!(score_and_select(vec![nohomo]).is_none());
    }

    struct PlantedMatcher {
        per_candidate: HashMap<String, Vec<KeypointMatch>>,
    }

    impl MatcherClient for PlantedMatcher {
        fn match_keypoints(&self, _q: &RasterMap, c: &RasterMap) -> Result<Vec<KeypointMatch>, ClientError> {
            Ok(self.per_candidate.get(&c.id).cloned().unwrap_or_default())
        }
    }

    #[test]
    fn visual_path_composes_known_affine() {
        // Identity query->candidate matches on a candidate whose raster maps
        // linearly onto a known bbox; corner geo coordinates follow by hand.
        let query = RasterMap::filled("q", 100, 100, [255, 255, 255]);
        let record = record_with_bbox("cand", -118.0, 34.0, -117.0, 35.0);
        let cand_raster = RasterMap::filled("cand", 200, 200, [255, 255, 255]);

        // identity-scaled matches: query (x, y) -> candidate (2x, 2y)
        let mut matches = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = PixelPoint::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            matches.push(KeypointMatch {
                query_px: q,
                candidate_px: PixelPoint::new(2.0 * q.x, 2.0 * q.y),
                confidence: 0.9,
            });
        }
        let matcher = PlantedMatcher { per_candidate: HashMap::from([("cand".to_string(), matches)]) };
        let mut rasters = HashMap::new();
        rasters.insert("cand".to_string(), cand_raster);

        let got = georeference_visual(&query, &[record], &matcher, &rasters, &VisualGeorefParams::default())
            .unwrap()
            .expect("gating passes");
        // query corner (0,0) -> candidate (0,0) -> geo (-118, 35)
        let nw = got.gcps.iter().find(|g| g.pixel == PixelPoint::new(0.0, 0.0)).unwrap();
        assert!((nw.geo.lon - (-118.0)).abs() < 1e-6);
        assert!((nw.geo.lat - 35.0).abs() < 1e-6);
        // query corner (100,100) -> candidate (200,200) -> geo (-117, 34)
        let se = got.gcps.iter().find(|g| g.pixel == PixelPoint::new(100.0, 100.0)).unwrap();
        assert!((se.geo.lon - (-117.0)).abs() < 1e-6);
        assert!((se.geo.lat - 34.0).abs() < 1e-6);
        assert!(got.homography.is_some());
    }

    #[test]
    fn visual_path_rejects_three_matches() {
        let query = RasterMap::filled("q", 100, 100, [255, 255, 255]);
        let record = record_with_bbox("cand", -118.0, 34.0, -117.0, 35.0);
        let matches: Vec<KeypointMatch> = (0..3)
            .map(|i| KeypointMatch {
                query_px: PixelPoint::new(i as f64, 0.0),
                candidate_px: PixelPoint::new(i as f64, 0.0),
                confidence: 0.9,
            })
            .collect();
        let matcher = PlantedMatcher { per_candidate: HashMap::from([("cand".to_string(), matches)]) };
        let mut rasters = HashMap::new();
        rasters.insert("cand".to_string(), RasterMap::filled("cand", 10, 10, [0, 0, 0]));
        let got = georeference_visual(&query, &[record], &matcher, &rasters, &VisualGeorefParams::default()).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn visual_path_rejects_low_confidence_matches() {
        let query = RasterMap::filled("q", 100, 100, [255, 255, 255]);
        let record = record_with_bbox("cand", -118.0, 34.0, -117.0, 35.0);
        let mut matches = Vec::new();
        for i in 0..20 {
            matches.push(KeypointMatch {
                query_px: PixelPoint::new(i as f64 * 3.0, (i % 5) as f64 * 7.0),
                candidate_px: PixelPoint::new(i as f64 * 3.0, (i % 5) as f64 * 7.0),
                confidence: 0.3,
            });
        }
        let matcher = PlantedMatcher { per_candidate: HashMap::from([("cand".to_string(), matches)]) };
        let mut rasters = HashMap::new();
        rasters.insert("cand".to_string(), RasterMap::filled("cand", 10, 10, [0, 0, 0]));
        let got = georeference_visual(&query, &[record], &matcher, &rasters, &VisualGeorefParams::default()).unwrap();
        assert!(got.is_none(), "confidence 0.3 everywhere must not georeference");
    }

    #[test]
    fn post_ransac_filter_mode_works() {
        let truth = planted_h();
        let matches = planted_matches(&truth, 25, 5, 11);
        let query = RasterMap::filled("q", 100, 100, [255, 255, 255]);
        let record = record_with_bbox("cand", -118.0, 34.0, -117.0, 35.0);
        let matcher = PlantedMatcher { per_candidate: HashMap::from([("cand".to_string(), matches)]) };
        let mut rasters = HashMap::new();
        rasters.insert("cand".to_string(), RasterMap::filled("cand", 10, 10, [0, 0, 0]));
        let params = VisualGeorefParams {
            confidence_filter: ConfidenceFilter::PostRansac,
            ..Default::default()
        };
        let got = georeference_visual(&query, &[record], &matcher, &rasters, &params).unwrap();
        assert!(got.is_some());
    }
}
