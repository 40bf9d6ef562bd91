//! Raster file IO. PNG and GeoTIFF-as-plain-raster are supported; GeoTIFF
//! tags beyond pixel data are ignored.

use std::path::Path;

use image::ImageReader;

use super::{ModelError, RasterMap, Rgb};

/// Loads a raster map; the id defaults to the file stem.
pub fn load_raster(path: impl AsRef<Path>) -> Result<RasterMap, ModelError> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "map".to_string());

    let reader = ImageReader::open(path).map_err(|e| ModelError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let reader = reader.with_guessed_format().map_err(|e| ModelError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Tiff) => {}
        Some(other) => return Err(ModelError::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(ModelError::UnsupportedFormat("unrecognized".into())),
    }
    let img = reader
        .decode()
        .map_err(|e| ModelError::UnreadableFile { path: path.to_path_buf(), reason: e.to_string() })?
        .into_rgb8();

    let (width, height) = (img.width(), img.height());
    let pixels: Vec<Rgb> = img.pixels().map(|p| p.0).collect();
    RasterMap::new(id, width, height, pixels)
}

/// Writes the raster as PNG. Encoding is deterministic for identical input.
pub fn save_raster_png(map: &RasterMap, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut buf = image::RgbImage::new(map.width, map.height);
    for y in 0..map.height {
        for x in 0..map.width {
            buf.put_pixel(x, y, image::Rgb(map.get(x, y)));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })
}
