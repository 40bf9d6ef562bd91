//! The topographic-map index: georeferenced reference sheets keyed by
//! quadrangle name, retrieved by fuzzy place-name matching.
//!
//! Source file is delimiter-separated text with header
//! `id,quadrangle_name,state,county,min_lon,min_lat,max_lon,max_lat,scale`
//! (county and scale may be empty).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GeorefError;
use crate::geo::GeoBBox;

/// Scores below this floor are excluded from retrieval results.
pub const FUZZY_SCORE_FLOOR: f64 = 0.55;

/// One georeferenced topographic sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoRecord {
    pub id: String,
    pub quadrangle_name: String,
    pub state: String,
    #[serde(default)]
    pub county: Option<String>,
    pub bbox: GeoBBox,
    #[serde(default)]
    pub scale: Option<u32>,
}

/// Immutable record collection plus precomputed normalized name fields;
/// shareable across workers.
#[derive(Debug, Clone)]
pub struct TopoIndex {
    records: Vec<TopoRecord>,
    normalized_names: Vec<Vec<String>>,
    by_id: HashMap<String, usize>,
}

impl TopoIndex {
    pub fn from_records(records: Vec<TopoRecord>) -> Result<Self, GeorefError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.id.clone(), i).is_some() {
                return Err(GeorefError::TopoIndex(format!("duplicate record id {}", r.id)));
            }
        }
        let normalized_names = records
            .iter()
            .map(|r| {
                let mut names = vec![normalize_name(&r.quadrangle_name), normalize_name(&r.state)];
                if let Some(c) = &r.county {
                    names.push(normalize_name(c));
                }
                names
            })
            .collect();
        Ok(Self { records, normalized_names, by_id })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, GeorefError> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| GeorefError::TopoIndex(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row.map_err(|e| GeorefError::TopoIndex(e.to_string()))?;
            let bbox = GeoBBox::from_degrees(row.min_lon, row.min_lat, row.max_lon, row.max_lat)
                .map_err(|e| GeorefError::TopoIndex(format!("record {}: {e}", row.id)))?;
            records.push(TopoRecord {
                id: row.id,
                quadrangle_name: row.quadrangle_name,
                state: row.state,
                county: row.county.filter(|c| !c.is_empty()),
                bbox,
                scale: row.scale,
            });
        }
        Self::from_records(records)
    }

    pub fn records(&self) -> &[TopoRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&TopoRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Deserialize)]
struct CsvRow {
    id: String,
    quadrangle_name: String,
    state: String,
    #[serde(default)]
    county: Option<String>,
    min_lon: f64,
    min_lat: f64,
    max_lon: f64,
    max_lat: f64,
    #[serde(default)]
    scale: Option<u32>,
}

/// Case-folds, strips punctuation, drops generic cartographic words
/// ("quadrangle", "quad", "sheet", "map"), and collapses whitespace.
pub fn normalize_name(s: &str) -> String {
    let lowered: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "quadrangle" | "quad" | "sheet" | "map"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Classic dynamic-programming Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev/max_len` on normalized strings; 1.0 when both normalize to empty.
fn similarity(norm_a: &str, norm_b: &str) -> f64 {
    let max_len = norm_a.chars().count().max(norm_b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(norm_a, norm_b) as f64 / max_len as f64
}

/// Fuzzy retrieval: each record scores the mean over toponyms of its best
/// name-field similarity. Results are sorted descending (ties by record id)
/// and scores below [`FUZZY_SCORE_FLOOR`] are excluded.
pub fn retrieve_topo_candidates(
    toponyms: &[String],
    index: &TopoIndex,
    limit: usize,
) -> Vec<(TopoRecord, f64)> {
    if toponyms.is_empty() || index.is_empty() {
        return Vec::new();
    }
    let normalized: Vec<String> = toponyms.iter().map(|t| normalize_name(t)).collect();
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (i, names) in index.normalized_names.iter().enumerate() {
        let mut total = 0.0;
        for t in &normalized {
            let best = names
                .iter()
                .map(|n| similarity(t, n))
                .fold(f64::NEG_INFINITY, f64::max);
            total += best;
        }
        let score = total / normalized.len() as f64;
        if score >= FUZZY_SCORE_FLOOR {
            scored.push((i, score));
        }
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.records[a.0].id.cmp(&index.records[b.0].id))
    });
    scored
        .into_iter()
        .take(limit)
        .map(|(i, s)| (index.records[i].clone(), s))
        .collect()
}
