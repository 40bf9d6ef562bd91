//! Color signatures across RGB, HSV, CIELAB, and YUV, and the combined
//! distance used for pixel-to-legend assignment.
//!
//! Conversions are the standard ones: sRGB gamma + D65 white point for
//! CIELAB, BT.601 coefficients for YUV. For distance computation every
//! space is scaled to unit component range and the four per-space Euclidean
//! distances are averaged; hue uses circular difference.

use serde::{Deserialize, Serialize};

use super::ExtractError;
use crate::geo::PixelBBox;
use crate::model::{LegendItem, RasterMap, Rgb};

/// Fraction of the swatch kept per axis when sampling its interior (trims
/// borders and tick marks).
const SWATCH_INNER_FRAC: f64 = 0.6;

/// Mean swatch color of one legend item, expressed in all four spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorSignature {
    pub label: String,
    /// Mean RGB, 0..=255 per channel.
    pub rgb: [f64; 3],
    /// Hue 0..360, saturation and value 0..=1.
    pub hsv: [f64; 3],
    /// CIELAB under D65: L 0..=100, a/b roughly -128..=127.
    pub lab: [f64; 3],
    /// BT.601: Y 0..=1, U -0.436..=0.436, V -0.615..=0.615.
    pub yuv: [f64; 3],
}

impl ColorSignature {
    pub fn from_rgb(label: impl Into<String>, rgb: [f64; 3]) -> Self {
        let unit = [rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0];
        Self {
            label: label.into(),
            rgb,
            hsv: rgb_to_hsv(unit),
            lab: rgb_to_lab(unit),
            yuv: rgb_to_yuv(unit),
        }
    }

    /// All four vectors with every component scaled to [0, 1].
    pub fn normalized(&self) -> NormalizedColor {
        NormalizedColor {
            rgb: [self.rgb[0] / 255.0, self.rgb[1] / 255.0, self.rgb[2] / 255.0],
            hsv: normalize_hsv(self.hsv),
            lab: normalize_lab(self.lab),
            yuv: normalize_yuv(self.yuv),
        }
    }
}

/// Unit-range representation used for distance arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedColor {
    pub rgb: [f64; 3],
    /// hue component is circular in [0, 1)
    pub hsv: [f64; 3],
    pub lab: [f64; 3],
    pub yuv: [f64; 3],
}

impl NormalizedColor {
    pub fn of_pixel(p: Rgb) -> Self {
        let unit = [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0];
        Self {
            rgb: unit,
            hsv: normalize_hsv(rgb_to_hsv(unit)),
            lab: normalize_lab(rgb_to_lab(unit)),
            yuv: normalize_yuv(rgb_to_yuv(unit)),
        }
    }
}

fn normalize_hsv(hsv: [f64; 3]) -> [f64; 3] {
    [hsv[0] / 360.0, hsv[1], hsv[2]]
}

fn normalize_lab(lab: [f64; 3]) -> [f64; 3] {
    [lab[0] / 100.0, (lab[1] + 128.0) / 255.0, (lab[2] + 128.0) / 255.0]
}

fn normalize_yuv(yuv: [f64; 3]) -> [f64; 3] {
    [yuv[0], (yuv[1] + 0.436) / 0.872, (yuv[2] + 0.615) / 1.230]
}

/// Mean of the four per-space Euclidean distances on unit-scaled components.
pub fn normalized_distance(a: &NormalizedColor, b: &NormalizedColor) -> f64 {
    let euclid = |x: &[f64; 3], y: &[f64; 3]| -> f64 {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        let d2 = x[2] - y[2];
        (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
    };
    // hue is circular: 0.99 and 0.01 are 0.02 apart
    let mut dh = (a.hsv[0] - b.hsv[0]).abs();
    if dh > 0.5 {
        dh = 1.0 - dh;
    }
    let ds = a.hsv[1] - b.hsv[1];
    let dv = a.hsv[2] - b.hsv[2];
    let hsv_dist = (dh * dh + ds * ds + dv * dv).sqrt();

    (euclid(&a.rgb, &b.rgb) + hsv_dist + euclid(&a.lab, &b.lab) + euclid(&a.yuv, &b.yuv)) / 4.0
}

/// Mean color over the inner 60% (per axis) of the item's swatch bbox,
/// expressed in all four color spaces. Only pixels entirely inside the
/// trimmed region count; a swatch too small to contain one is an error.
pub fn swatch_signature(map: &RasterMap, item: &LegendItem) -> Result<ColorSignature, ExtractError> {
    let b = &item.swatch_bbox;
    if !map.bounds().contains_bbox(b) {
        return Err(ExtractError::SwatchOutOfBounds);
    }
    let trim = (1.0 - SWATCH_INNER_FRAC) / 2.0;
    let inner = PixelBBox::from_coords(
        b.min.x + trim * b.width(),
        b.min.y + trim * b.height(),
        b.max.x - trim * b.width(),
        b.max.y - trim * b.height(),
    )
    .expect("trimming preserves ordering");

    let x_start = inner.min.x.ceil() as i64;
    let x_end = (inner.max.x - 1.0).floor() as i64;
    let y_start = inner.min.y.ceil() as i64;
    let y_end = (inner.max.y - 1.0).floor() as i64;
    if x_end < x_start || y_end < y_start {
        return Err(ExtractError::ZeroAreaSwatch);
    }

    let mut sum = [0.0f64; 3];
    let mut count = 0u64;
    for y in y_start..=y_end {
        for x in x_start..=x_end {
            let p = map.get(x as u32, y as u32);
            sum[0] += p[0] as f64;
            sum[1] += p[1] as f64;
            sum[2] += p[2] as f64;
            count += 1;
        }
    }
    let mean = [sum[0] / count as f64, sum[1] / count as f64, sum[2] / count as f64];
    Ok(ColorSignature::from_rgb(item.label.clone(), mean))
}

/// sRGB (unit) to HSV: hue 0..360, saturation/value 0..=1.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

fn srgb_linearize(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB (unit) to CIELAB under D65.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let r = srgb_linearize(rgb[0]);
    let g = srgb_linearize(rgb[1]);
    let b = srgb_linearize(rgb[2]);

    // sRGB -> XYZ (D65)
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    // D65 reference white
    let (xn, yn, zn) = (0.95047, 1.0, 1.08883);
    let f = |t: f64| -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / xn), f(y / yn), f(z / zn));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB (unit) to BT.601 YUV.
pub fn rgb_to_yuv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    [y, 0.492 * (b - y), 0.877 * (r - y)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureKind, WHITE};

    fn item(swatch: PixelBBox) -> LegendItem {
        LegendItem {
            label: "unit".into(),
            kind: FeatureKind::Polygon,
            swatch_bbox: swatch,
            description_bbox: swatch,
            description_text: String::new(),
        }
    }

    #[test]
    fn pure_red_reference_values() {
        let sig = ColorSignature::from_rgb("r", [255.0, 0.0, 0.0]);
        assert_eq!(sig.hsv[0], 0.0);
        assert_eq!(sig.hsv[1], 1.0);
        assert_eq!(sig.hsv[2], 1.0);
        // CIELAB(D65) for sRGB red: L*=53.24, a*=80.09, b*=67.20
        assert!((sig.lab[0] - 53.24).abs() < 0.05, "L {}", sig.lab[0]);
        assert!((sig.lab[1] - 80.09).abs() < 0.05, "a {}", sig.lab[1]);
        assert!((sig.lab[2] - 67.20).abs() < 0.05, "b {}", sig.lab[2]);
        assert!((sig.yuv[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn hsv_reference_points() {
        assert_eq!(rgb_to_hsv([0.0, 1.0, 0.0])[0], 120.0);
        assert_eq!(rgb_to_hsv([0.0, 0.0, 1.0])[0], 240.0);
        let gray = rgb_to_hsv([0.5, 0.5, 0.5]);
        assert_eq!(gray[0], 0.0);
        assert_eq!(gray[1], 0.0);
        assert_eq!(rgb_to_lab([1.0, 1.0, 1.0])[0].round(), 100.0);
        assert!(rgb_to_lab([0.0, 0.0, 0.0])[0].abs() < 1e-9);
    }

    #[test]
    fn uniform_swatch_mean_is_exact() {
        let mut map = RasterMap::filled("m", 20, 20, WHITE);
        for y in 0..10 {
            for x in 0..10 {
                map.set(x, y, [255, 0, 0]);
            }
        }
        let sig = swatch_signature(&map, &item(PixelBBox::from_coords(0.0, 0.0, 10.0, 10.0).unwrap())).unwrap();
        assert_eq!(sig.rgb, [255.0, 0.0, 0.0]);
        assert_eq!(sig.hsv[0], 0.0);
    }

    #[test]
    fn trim_excludes_two_pixel_border() {
        let mut map = RasterMap::filled("m", 10, 10, [0, 0, 0]);
        // red core with 2 px black border inside a 10x10 swatch
        for y in 2..8 {
            for x in 2..8 {
                map.set(x, y, [255, 0, 0]);
            }
        }
        let sig = swatch_signature(&map, &item(PixelBBox::from_coords(0.0, 0.0, 10.0, 10.0).unwrap())).unwrap();
        assert_eq!(sig.rgb, [255.0, 0.0, 0.0]);
    }

    #[test]
    fn tiny_swatch_is_zero_area() {
        let map = RasterMap::filled("m", 10, 10, WHITE);
        let err = swatch_signature(&map, &item(PixelBBox::from_coords(3.0, 3.0, 4.0, 4.0).unwrap()));
        assert!(matches!(err, Err(ExtractError::ZeroAreaSwatch)));
    }

    #[test]
    fn identical_colors_have_zero_distance() {
        let a = ColorSignature::from_rgb("a", [120.0, 200.0, 40.0]).normalized();
        let b = ColorSignature::from_rgb("b", [120.0, 200.0, 40.0]).normalized();
        assert_eq!(normalized_distance(&a, &b), 0.0);
        let c = ColorSignature::from_rgb("c", [0.0, 0.0, 0.0]).normalized();
        assert!(normalized_distance(&a, &c) > 0.3);
    }

    #[test]
    fn hue_distance_is_circular() {
        // hues 1 degree either side of 0 must be close, not a full turn apart
        let a = ColorSignature::from_rgb("a", [255.0, 10.0, 14.0]).normalized();
        let b = ColorSignature::from_rgb("b", [255.0, 14.0, 10.0]).normalized();
        assert!(normalized_distance(&a, &b) < 0.05);
    }
}
