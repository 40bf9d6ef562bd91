//! The versioned GCP document: a UTF-8 JSON file with
//! `{schema_version, map_id, gcps: [{px, py, lon, lat, confidence}], homography?}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcpSet, ModelError};
use crate::geo::{GeoPoint, GroundControlPoint, Homography, PixelPoint};

pub const GCP_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GcpDoc {
    schema_version: u32,
    map_id: String,
    gcps: Vec<GcpEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    homography: Option<[f64; 9]>,
}

#[derive(Serialize, Deserialize)]
struct GcpEntry {
    px: f64,
    py: f64,
    lon: f64,
    lat: f64,
    confidence: f64,
}

pub fn save_gcps(set: &GcpSet, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let doc = GcpDoc {
        schema_version: GCP_SCHEMA_VERSION,
        map_id: set.map_id.clone(),
        gcps: set
            .gcps
            .iter()
            .map(|g| GcpEntry {
                px: g.pixel.x,
                py: g.pixel.y,
                lon: g.geo.lon,
                lat: g.geo.lat,
                confidence: g.confidence,
            })
            .collect(),
        homography: set.homography.as_ref().map(|h| h.to_row_major()),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| ModelError::InvalidDocument(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_gcps(path: impl AsRef<Path>) -> Result<GcpSet, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;

    // Check the version before strict field decoding so old documents get
    // the version error, not a field error.
    let probe: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ModelError::InvalidDocument(e.to_string()))?;
    let found = probe
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::InvalidDocument("missing schema_version".into()))? as u32;
    if found != GCP_SCHEMA_VERSION {
        return Err(ModelError::SchemaVersionMismatch { expected: GCP_SCHEMA_VERSION, found });
    }

    let doc: GcpDoc =
        serde_json::from_str(&text).map_err(|e| ModelError::InvalidDocument(e.to_string()))?;
    let mut gcps = Vec::with_capacity(doc.gcps.len());
    for e in &doc.gcps {
        let geo = GeoPoint::new(e.lon, e.lat)
            .map_err(|err| ModelError::Validation(err.to_string()))?;
        let gcp = GroundControlPoint::with_confidence(PixelPoint::new(e.px, e.py), geo, e.confidence)
            .map_err(|err| ModelError::Validation(err.to_string()))?;
        gcps.push(gcp);
    }
    let homography = match doc.homography {
        Some(v) => Some(
            Homography::from_row_major(&v).map_err(|e| ModelError::Validation(e.to_string()))?,
        ),
        None => None,
    };
    GcpSet::new(doc.map_id, gcps, homography)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> GcpSet {
        let gcps = vec![
            GroundControlPoint::new(PixelPoint::new(0.0, 0.0), GeoPoint::new(-118.0, 35.0).unwrap()),
            GroundControlPoint::new(PixelPoint::new(100.0, 0.0), GeoPoint::new(-117.0, 35.0).unwrap()),
            GroundControlPoint::new(PixelPoint::new(0.0, 100.0), GeoPoint::new(-118.0, 34.0).unwrap()),
            GroundControlPoint::with_confidence(
                PixelPoint::new(100.0, 100.0),
                GeoPoint::new(-117.0, 34.0).unwrap(),
                0.75,
            )
            .unwrap(),
        ];
        GcpSet::new("fixture", gcps, Some(Homography::translation(2.0, 3.0))).unwrap()
    }

    #[test]
    fn round_trip_is_field_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gcps.json");
        let set = sample_set();
        save_gcps(&set, &path).unwrap();
        let loaded = load_gcps(&path).unwrap();
        assert_eq!(loaded, set);
    }

    #[test]
    fn missing_geo_member_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"schema_version":1,"map_id":"m","gcps":[{"px":1.0,"py":2.0,"confidence":1.0}]}"#,
        )
        .unwrap();
        match load_gcps(&path) {
            Err(ModelError::InvalidDocument(_)) => {}
            other => panic!("expected invalid-document, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.json");
        std::fs::write(&path, r#"{"schema_version":9,"map_id":"m","gcps":[]}"#).unwrap();
        match load_gcps(&path) {
            Err(ModelError::SchemaVersionMismatch { expected: 1, found: 9 }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_confidence_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conf.json");
        std::fs::write(
            &path,
            r#"{"schema_version":1,"map_id":"m","gcps":[{"px":0.0,"py":0.0,"lon":1.0,"lat":1.0,"confidence":1.5}]}"#,
        )
        .unwrap();
        match load_gcps(&path) {
            Err(ModelError::Validation(_)) => {}
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
