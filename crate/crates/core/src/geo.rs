//! Foundational geometric and geodesic types shared by every stage.
//!
//! Everything here is immutable after construction and safe to use from any
//! number of workers. Pixel coordinates follow image convention: x grows
//! right, y grows down, origin at the top-left corner of the sheet.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometers (IUGG mean radius R1).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Determinant magnitude below which a 3x3 system is treated as singular.
pub const DET_EPSILON: f64 = 1e-12;

/// Projective w-component magnitude below which a projection is degenerate.
pub const PROJECTION_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: {0}")]
    InvalidCoordinate(String),
    #[error("homography fit needs at least 4 point pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("degenerate point configuration (collinear or coincident sources)")]
    DegenerateConfiguration,
    #[error("degenerate projection: homogeneous w-component is ~0")]
    DegenerateProjection,
    #[error("matrix is not invertible")]
    SingularMatrix,
}

/// A location on the scanned sheet, in pixels from the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A WGS84 longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    /// Builds a geographic point, rejecting out-of-range or non-finite values.
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidCoordinate(format!("lon {lon}")));
        }
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidCoordinate(format!("lat {lat}")));
        }
        Ok(Self { lon, lat })
    }
}

/// A (pixel, geographic) correspondence — the unit of georeferencing output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundControlPoint {
    pub pixel: PixelPoint,
    pub geo: GeoPoint,
    /// Confidence in [0, 1]; defaults to 1.0 for heuristically derived GCPs.
    pub confidence: f64,
}

impl GroundControlPoint {
    pub fn new(pixel: PixelPoint, geo: GeoPoint) -> Self {
        Self { pixel, geo, confidence: 1.0 }
    }

    pub fn with_confidence(pixel: PixelPoint, geo: GeoPoint, confidence: f64) -> Result<Self, GeoError> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(GeoError::InvalidCoordinate(format!("confidence {confidence}")));
        }
        Ok(Self { pixel, geo, confidence })
    }
}

/// Axis-aligned pixel rectangle; `min` and `max` are corner coordinates
/// (a box covering one pixel spans exactly 1.0 per axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBBox {
    pub min: PixelPoint,
    pub max: PixelPoint,
}

impl PixelBBox {
    pub fn new(min: PixelPoint, max: PixelPoint) -> Result<Self, GeoError> {
        if min.x > max.x || min.y > max.y {
            return Err(GeoError::InvalidCoordinate(format!(
                "bbox min ({}, {}) exceeds max ({}, {})",
                min.x, min.y, max.x, max.y
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_coords(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeoError> {
        Self::new(PixelPoint::new(x0, y0), PixelPoint::new(x1, y1))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_bbox(&self, other: &PixelBBox) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Intersection area divided by union area; 0 when either box is empty.
    pub fn iou(&self, other: &PixelBBox) -> f64 {
        let ix = (self.max.x.min(other.max.x) - self.min.x.max(other.min.x)).max(0.0);
        let iy = (self.max.y.min(other.max.y) - self.min.y.max(other.min.y)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clips this box to `bounds`; `None` when they do not overlap.
    pub fn clipped_to(&self, bounds: &PixelBBox) -> Option<PixelBBox> {
        let x0 = self.min.x.max(bounds.min.x);
        let y0 = self.min.y.max(bounds.min.y);
        let x1 = self.max.x.min(bounds.max.x);
        let y1 = self.max.y.min(bounds.max.y);
        if x0 > x1 || y0 > y1 {
            None
        } else {
            Some(PixelBBox { min: PixelPoint::new(x0, y0), max: PixelPoint::new(x1, y1) })
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> PixelBBox {
        PixelBBox {
            min: PixelPoint::new(self.min.x + dx, self.min.y + dy),
            max: PixelPoint::new(self.max.x + dx, self.max.y + dy),
        }
    }
}

/// Axis-aligned geographic rectangle in lon/lat degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl GeoBBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<Self, GeoError> {
        if min.lon > max.lon || min.lat > max.lat {
            return Err(GeoError::InvalidCoordinate(format!(
                "geo bbox min ({}, {}) exceeds max ({}, {})",
                min.lon, min.lat, max.lon, max.lat
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_degrees(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeoError> {
        Self::new(GeoPoint::new(min_lon, min_lat)?, GeoPoint::new(max_lon, max_lat)?)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.min.lon && p.lon <= self.max.lon && p.lat >= self.min.lat && p.lat <= self.max.lat
    }

    /// Nearest point of the box to `p` (the point itself when contained).
    pub fn clamp(&self, p: &GeoPoint) -> GeoPoint {
        GeoPoint {
            lon: p.lon.clamp(self.min.lon, self.max.lon),
            lat: p.lat.clamp(self.min.lat, self.max.lat),
        }
    }

    pub fn intersects(&self, other: &GeoBBox) -> bool {
        self.min.lon <= other.max.lon
            && other.min.lon <= self.max.lon
            && self.min.lat <= other.max.lat
            && other.min.lat <= self.max.lat
    }
}

/// Great-circle distance in kilometers by the haversine formula on a sphere
/// of radius [`EARTH_RADIUS_KM`]. Sub-0.5% from ellipsoidal values at
/// quadrangle scale, which is all the georeferencing metrics require.
pub fn geodesic_distance_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let sin_dlat = (dlat / 2.0).sin();
    let sin_dlon = (dlon / 2.0).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    // asin formulation; h is clamped against rounding drift above 1.
    2.0 * EARTH_RADIUS_KM * h.min(1.0).sqrt().asin()
}

/// A 3x3 projective transform between two planes, stored row-major and
/// normalized so `h[2][2] == 1` whenever that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    /// Validates invertibility and normalizes the matrix.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, GeoError> {
        for row in &m {
            for v in row {
                if !v.is_finite() {
                    return Err(GeoError::InvalidCoordinate("non-finite matrix entry".into()));
                }
            }
        }
        if det3(&m).abs() < DET_EPSILON {
            return Err(GeoError::SingularMatrix);
        }
        let mut h = m;
        if m[2][2].abs() > PROJECTION_EPSILON {
            let s = m[2][2];
            for row in &mut h {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Ok(Self { h })
    }

    pub fn identity() -> Self {
        Self { h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]] }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.h;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self, GeoError> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    /// Projects a point: `(h·[x,y,1])_{xy} / w`.
    pub fn apply(&self, p: &PixelPoint) -> Result<PixelPoint, GeoError> {
        let m = &self.h;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < PROJECTION_EPSILON {
            return Err(GeoError::DegenerateProjection);
        }
        Ok(PixelPoint::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Homography, GeoError> {
        let m = &self.h;
        let det = det3(m);
        if det.abs() < DET_EPSILON {
            return Err(GeoError::SingularMatrix);
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut inv = adj;
        for row in &mut inv {
            for v in row.iter_mut() {
                *v /= det;
            }
        }
        Homography::new(inv)
    }

    /// Composes transforms: `(self ∘ other)(p) == self(other(p))`.
    pub fn compose(&self, other: &Homography) -> Result<Homography, GeoError> {
        let a = &self.h;
        let b = &other.h;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Homography::new(out)
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Least-squares direct-linear-transform fit of the homography taking each
/// `pairs[i].0` to `pairs[i].1`, with Hartley coordinate normalization on
/// both sides for conditioning.
///
/// Exactly homography-consistent, non-degenerate inputs are recovered to
/// better than 1e-6 px reprojection.
pub fn fit_homography(pairs: &[(PixelPoint, PixelPoint)]) -> Result<Homography, GeoError> {
    if pairs.len() < 4 {
        return Err(GeoError::InsufficientPairs(pairs.len()));
    }
    let src: Vec<PixelPoint> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<PixelPoint> = pairs.iter().map(|p| p.1).collect();
    if points_collinear(&src) {
        return Err(GeoError::DegenerateConfiguration);
    }

    let t_src = normalizing_transform(&src);
    let t_dst = normalizing_transform(&dst);

    let n = pairs.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n, 9);
    for (i, (s, d)) in pairs.iter().enumerate() {
        let (sx, sy) = apply_affine(&t_src, s);
        let (dx, dy) = apply_affine(&t_dst, d);
        // Two DLT rows per correspondence.
        a[(2 * i, 0)] = -sx;
        a[(2 * i, 1)] = -sy;
        a[(2 * i, 2)] = -1.0;
        a[(2 * i, 6)] = dx * sx;
        a[(2 * i, 7)] = dx * sy;
        a[(2 * i, 8)] = dx;
        a[(2 * i + 1, 3)] = -sx;
        a[(2 * i + 1, 4)] = -sy;
        a[(2 * i + 1, 5)] = -1.0;
        a[(2 * i + 1, 6)] = dy * sx;
        a[(2 * i + 1, 7)] = dy * sy;
        a[(2 * i + 1, 8)] = dy;
    }

    // Null vector of A via the symmetric eigenproblem on A^T A (a thin SVD
    // of the 2n x 9 system would not expose the null space).
    let ata = a.transpose() * &a;
    let eigen = nalgebra::SymmetricEigen::new(ata);
    let idx = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .ok_or(GeoError::DegenerateConfiguration)?;
    let hv = eigen.eigenvectors.column(idx);
    let hn = [
        [hv[0], hv[1], hv[2]],
        [hv[3], hv[4], hv[5]],
        [hv[6], hv[7], hv[8]],
    ];
    if det3(&hn).abs() < DET_EPSILON {
        return Err(GeoError::DegenerateConfiguration);
    }

    // Denormalize: H = T_dst^-1 · Hn · T_src
    let t_dst_inv = invert_affine(&t_dst);
    let h = mat_mul(&mat_mul(&t_dst_inv, &hn), &t_src);
    Homography::new(h).map_err(|_| GeoError::DegenerateConfiguration)
}

/// Affine normalization [Hartley]: translate the centroid to the origin and
/// scale so the mean distance from it is sqrt(2).
fn normalizing_transform(pts: &[PixelPoint]) -> [[f64; 3]; 3] {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]
}

fn apply_affine(t: &[[f64; 3]; 3], p: &PixelPoint) -> (f64, f64) {
    (t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2])
}

fn invert_affine(t: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    // Only for the scale+translation form produced above.
    let s = t[0][0];
    [[1.0 / s, 0.0, -t[0][2] / s], [0.0, 1.0 / s, -t[1][2] / s], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// True when all points lie within numerical tolerance of a single line
/// (coincident sets count as collinear).
fn points_collinear(pts: &[PixelPoint]) -> bool {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let dx = p.x - cx;
        let dy = p.y - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Eigenvalues of the 2x2 scatter matrix; the smaller one vanishes on a line.
    let tr = sxx + syy;
    if tr < 1e-12 {
        return true; // all points coincident
    }
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lambda_min = tr / 2.0 - disc;
    lambda_min / tr < 1e-10
}
