//! GeoJSON-style feature output.
//!
//! When a georeferencing homography is available, coordinates are emitted as
//! lon/lat; otherwise raw pixel coordinates are emitted and the collection
//! carries the nonstandard top-level marker `"crs": "pixel"`.

use std::path::Path;

use serde_json::{json, Value};

use super::{GcpSet, LineGraph, ModelError, VectorFeatureSet};
use crate::geo::{Homography, PixelPoint};

pub fn save_features_geojson(
    features: &VectorFeatureSet,
    gcps: Option<&GcpSet>,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    features.validate()?;
    let transform = gcps.and_then(|g| g.homography.as_ref());

    let mut out = Vec::new();
    for poly in &features.polygons {
        let mut rings = Vec::with_capacity(1 + poly.holes.len());
        rings.push(ring_coords(&poly.outer, transform)?);
        for hole in &poly.holes {
            rings.push(ring_coords(hole, transform)?);
        }
        out.push(feature(json!({ "type": "Polygon", "coordinates": rings }), &poly.label, "polygon", None));
    }
    for line in &features.lines {
        let segments = graph_to_paths(line)
            .into_iter()
            .map(|chain| coords_of(&chain, transform))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(feature(
            json!({ "type": "MultiLineString", "coordinates": segments }),
            &line.label,
            "line",
            None,
        ));
    }
    for pt in &features.points {
        let c = point_coords(&pt.point, transform)?;
        out.push(feature(json!({ "type": "Point", "coordinates": c }), &pt.label, "point", Some(pt.confidence)));
    }

    let mut doc = json!({ "type": "FeatureCollection", "features": out });
    if transform.is_none() {
        doc["crs"] = Value::String("pixel".into());
    }
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| ModelError::InvalidDocument(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })
}

fn feature(geometry: Value, label: &str, kind: &str, confidence: Option<f64>) -> Value {
    json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": {
            "label": label,
            "kind": kind,
            "confidence": confidence.unwrap_or(1.0),
        },
    })
}

fn point_coords(p: &PixelPoint, transform: Option<&Homography>) -> Result<Value, ModelError> {
    let q = match transform {
        Some(h) => h.apply(p).map_err(|e| ModelError::Validation(e.to_string()))?,
        None => *p,
    };
    Ok(json!([q.x, q.y]))
}

fn coords_of(pts: &[PixelPoint], transform: Option<&Homography>) -> Result<Value, ModelError> {
    let mut arr = Vec::with_capacity(pts.len());
    for p in pts {
        arr.push(point_coords(p, transform)?);
    }
    Ok(Value::Array(arr))
}

fn ring_coords(ring: &[PixelPoint], transform: Option<&Homography>) -> Result<Value, ModelError> {
    coords_of(ring, transform)
}

/// Decomposes a line graph into maximal chains: every path runs between
/// nodes of degree != 2 (or around a pure cycle).
pub fn graph_to_paths(g: &LineGraph) -> Vec<Vec<PixelPoint>> {
    let n = g.nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut visited = std::collections::HashSet::new();
    let mut paths = Vec::new();

    let edge_key = |a: usize, b: usize| (a.min(b), a.max(b));

    // Chains anchored at endpoints/junctions first.
    for start in 0..n {
        if adj[start].len() == 2 {
            continue;
        }
        for &next in &adj[start] {
            if visited.contains(&edge_key(start, next)) {
                continue;
            }
            let mut chain = vec![g.nodes[start]];
            let mut prev = start;
            let mut cur = next;
            visited.insert(edge_key(prev, cur));
            chain.push(g.nodes[cur]);
            while adj[cur].len() == 2 {
                let nxt = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                if visited.contains(&edge_key(cur, nxt)) {
                    break;
                }
                visited.insert(edge_key(cur, nxt));
                chain.push(g.nodes[nxt]);
                prev = cur;
                cur = nxt;
            }
            paths.push(chain);
        }
    }
    // Remaining pure cycles.
    for start in 0..n {
        for &next in &adj[start] {
            if visited.contains(&edge_key(start, next)) {
                continue;
            }
            let mut chain = vec![g.nodes[start]];
            let mut prev = start;
            let mut cur = next;
            visited.insert(edge_key(prev, cur));
            chain.push(g.nodes[cur]);
            while cur != start {
                let nxt = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                if visited.contains(&edge_key(cur, nxt)) {
                    break;
                }
                visited.insert(edge_key(cur, nxt));
                chain.push(g.nodes[nxt]);
                prev = cur;
                cur = nxt;
            }
            paths.push(chain);
        }
    }
    paths
}
