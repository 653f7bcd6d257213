//! Grayscale rasters, PGM (P2/P5) I/O, bilinear resampling and dataset manifests.
//!
//! Intensities are normalized to `[0.0, 1.0]` at load time by dividing each
//! sample by the file's `maxval`, so every later stage works on one range.

use std::fmt;
use std::fs;
use std::io;
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("malformed image {}: {reason}", path.display())]
    MalformedImage { path: PathBuf, reason: String },
    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("maxval {0} is outside [1, 65535]")]
    InvalidMaxval(u32),
    #[error("malformed manifest {}: {reason}", path.display())]
    MalformedManifest { path: PathBuf, reason: String },
}

impl ImageError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            ImageError::FileNotFound(path.to_path_buf())
        } else {
            ImageError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

/// Width and height of a raster in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: usize,
    pub height: usize,
}

impl ImageDims {
    pub fn new(width: usize, height: usize) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        Ok(ImageDims { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

impl Default for ImageDims {
    fn default() -> Self {
        ImageDims {
            width: 64,
            height: 64,
        }
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for ImageDims {
    type Err = String;

    /// Parses `WxH`, e.g. `64x64`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let width = w
            .trim()
            .parse()
            .map_err(|_| format!("bad width in {s:?}"))?;
        let height = h
            .trim()
            .parse()
            .map_err(|_| format!("bad height in {s:?}"))?;
        ImageDims::new(width, height).map_err(|e| e.to_string())
    }
}

/// Single-channel raster with row-major intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        let dims = ImageDims::new(width, height)?;
        if pixels.len() != dims.pixel_count() {
            return Err(ImageError::LengthMismatch {
                expected: dims.pixel_count(),
                actual: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::IntensityOutOfRange { index, value });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(dims: ImageDims, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(dims.pixel_count());
        for y in 0..dims.height {
            for x in 0..dims.width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        GrayImage {
            width: dims.width,
            height: dims.height,
            pixels,
        }
    }

    /// Inverse of [`flatten`].
    pub fn from_pixel_vector(dims: ImageDims, vector: PixelVector) -> Result<Self, ImageError> {
        GrayImage::new(dims.width, dims.height, vector.into_inner())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims {
            width: self.width,
            height: self.height,
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Flattened image: one real per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PixelVector(Vec<f64>);

impl PixelVector {
    pub fn new(values: Vec<f64>) -> Self {
        PixelVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PixelVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for PixelVector {
    fn from(values: Vec<f64>) -> Self {
        PixelVector(values)
    }
}

pub fn flatten(image: &GrayImage) -> PixelVector {
    PixelVector(image.pixels.clone())
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

// --- PGM ---------------------------------------------------------------------

pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ImageError::io(path, e))?;
    decode_pgm(&bytes).map_err(|reason| ImageError::MalformedImage {
        path: path.to_path_buf(),
        reason,
    })
}

/// Writes `image` as a binary (P5) PGM, quantizing each intensity to
/// `round(i * maxval)`.
pub fn save_grayscale(
    image: &GrayImage,
    path: impl AsRef<Path>,
    maxval: u32,
) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_pgm(image, maxval)?;
    fs::write(path, bytes).map_err(|e| ImageError::io(path, e))
}

pub fn encode_pgm(image: &GrayImage, maxval: u32) -> Result<Vec<u8>, ImageError> {
    if !(1..=65535).contains(&maxval) {
        return Err(ImageError::InvalidMaxval(maxval));
    }
    let header = format!("P5\n{} {}\n{}\n", image.width, image.height, maxval);
    let wide = maxval > 255;
    let mut out = Vec::with_capacity(header.len() + image.pixels.len() * if wide { 2 } else { 1 });
    out.extend_from_slice(header.as_bytes());
    let scale = f64::from(maxval);
    for &p in &image.pixels {
        let sample = (p * scale).round() as u32;
        if wide {
            out.extend_from_slice(&(sample as u16).to_be_bytes());
        } else {
            out.push(sample as u8);
        }
    }
    Ok(out)
}

/// Decodes a P2 (ASCII) or P5 (binary) PGM. The error string describes the
/// first defect found.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err("bad magic number (expected P2 or P5)".into()),
    };
    cursor.pos = 2;
    let width = cursor.next_number("width")?;
    let height = cursor.next_number("height")?;
    let maxval = cursor.next_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside [1, 65535]"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| "dimensions overflow".to_string())?;
    let scale = maxval as f64;

    let mut pixels = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err("missing whitespace after maxval".into()),
        }
        let raster = &bytes[cursor.pos..];
        let sample_size = if maxval > 255 { 2 } else { 1 };
        if raster.len() < count * sample_size {
            return Err(format!(
                "truncated payload: {} bytes, expected {}",
                raster.len(),
                count * sample_size
            ));
        }
        for i in 0..count {
            let v = if sample_size == 2 {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
            } else {
                raster[i] as usize
            };
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            pixels.push(v as f64 / scale);
        }
    } else {
        for i in 0..count {
            let v = cursor
                .next_number("sample")
                .map_err(|_| format!("truncated payload at sample {i} of {count}"))?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            pixels.push(v as f64 / scale);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("{what} out of range"))
    }
}

// --- resampling --------------------------------------------------------------

fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear resampling with corner-aligned sampling: output corners land
/// exactly on input corners.
pub fn resize_bilinear(
    image: &GrayImage,
    target_width: usize,
    target_height: usize,
) -> Result<GrayImage, ImageError> {
    let dims = ImageDims::new(target_width, target_height)?;
    if dims == image.dims() {
        return Ok(image.clone());
    }
    let (sw, sh) = (image.width, image.height);
    Ok(GrayImage::from_fn(dims, |x, y| {
        let sx = source_coord(x, sw, target_width);
        let sy = source_coord(y, sh, target_height);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
        let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
        let top = lerp(image.get(x0, y0), image.get(x1, y0), tx);
        let bottom = lerp(image.get(x0, y1), image.get(x1, y1), tx);
        lerp(top, bottom, ty)
    }))
}

// --- manifests ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split tag {other:?} (expected train or test)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub visual_path: PathBuf,
    pub thermal_path: PathBuf,
    pub subject: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    class_labels: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest; class labels are collected in order of first appearance.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self, String> {
        for (i, e) in entries.iter().enumerate() {
            if e.visual_path == e.thermal_path {
                return Err(format!(
                    "entry {i}: visual and thermal paths are identical ({})",
                    e.visual_path.display()
                ));
            }
        }
        let class_labels = labels_in_order(entries.iter().map(|e| e.subject.as_str()));
        Ok(DatasetManifest {
            entries,
            class_labels,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn labels_in_order<'a>(subjects: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for s in subjects {
        if !labels.iter().any(|l| l == s) {
            labels.push(s.to_string());
        }
    }
    labels
}

pub const MANIFEST_HEADER: [&str; 4] = ["visual_path", "thermal_path", "subject", "split"];

/// Reads a `visual_path,thermal_path,subject,split` CSV. Relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ImageError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ImageError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let malformed = |reason: String| ImageError::MalformedManifest {
        path: path.to_path_buf(),
        reason,
    };
    let rows = read_csv_rows(&text, &MANIFEST_HEADER).map_err(malformed)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let split = row[3]
            .parse()
            .map_err(|e: String| malformed(format!("line {line}: {e}")))?;
        if row[2].is_empty() {
            return Err(malformed(format!("line {line}: empty subject")));
        }
        entries.push(ManifestEntry {
            visual_path: base.join(&row[0]),
            thermal_path: base.join(&row[1]),
            subject: row[2].clone(),
            split,
        });
    }
    DatasetManifest::from_entries(entries).map_err(malformed)
}

/// Writes the manifest with paths relative to `base` where possible.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_io = |e: csv::Error| ImageError::io(path, io::Error::other(e));
    w.write_record(MANIFEST_HEADER).map_err(to_io)?;
    for e in &manifest.entries {
        w.write_record([
            relative_to(&e.visual_path, base),
            relative_to(&e.thermal_path, base),
            e.subject.clone(),
            e.split.to_string(),
        ])
        .map_err(to_io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ImageError::io(path, io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| ImageError::io(path, e))
}

pub(crate) fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Parses CSV text whose header must equal `header` exactly. Returns data rows
/// tagged with their 1-based line number.
pub(crate) fn read_csv_rows(
    text: &str,
    header: &[&str],
) -> Result<Vec<(u64, Vec<String>)>, String> {
    if text.trim().is_empty() {
        return Err("empty file".into());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| e.to_string())?.clone();
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    for name in header {
        if !found.contains(name) {
            return Err(format!("missing column {name:?} in header {found:?}"));
        }
    }
    if found != header {
        return Err(format!(
            "header must be {:?}, found {found:?}",
            header.join(",")
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            ));
        }
        rows.push((line, record.iter().map(|f| f.trim().to_string()).collect()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, px: &[f64]) -> GrayImage {
        GrayImage::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn p5_max_sample_maps_to_one() {
        let g = decode_pgm(b"P5\n1 1\n255\n\xff").unwrap();
        assert_eq!(g, img(1, 1, &[1.0]));
    }

    #[test]
    fn p2_zero_sample_maps_to_zero() {
        let g = decode_pgm(b"P2\n1 1\n255\n0\n").unwrap();
        assert_eq!(g, img(1, 1, &[0.0]));
    }

    #[test]
    fn p5_sample_51_is_point_two() {
        // 51 / 255 = 0.2 exactly in decimal; compare against the f64 quotient
        let g = decode_pgm(b"P5 1 1 255\n\x33").unwrap();
        assert_eq!(g.pixels()[0], 51.0 / 255.0);
        assert!((g.pixels()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn header_comments_and_sixteen_bit_samples() {
        let g = decode_pgm(b"P5\n# made by hand\n2 1 # trailing\n65535\n\x00\x00\xff\xff").unwrap();
        assert_eq!(g.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_pgms_are_rejected() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00")
            .unwrap_err()
            .contains("magic"));
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00\x00")
            .unwrap_err()
            .contains("truncated"));
        assert!(decode_pgm(b"P5\n1 1\n0\n\x00")
            .unwrap_err()
            .contains("maxval"));
        assert!(decode_pgm(b"P2\n2 1\n255\n3")
            .unwrap_err()
            .contains("truncated"));
        assert!(decode_pgm(b"P2\n1 1\n10\n11")
            .unwrap_err()
            .contains("exceeds"));
        assert!(decode_pgm(b"").is_err());
    }

    #[test]
    fn missing_file_is_file_not_found() {
        let err = load_grayscale("/definitely/not/here.pgm").unwrap_err();
        assert!(matches!(err, ImageError::FileNotFound(_)));
    }

    #[test]
    fn save_quantizes_by_rounding() {
        let raster = |v: f64| encode_pgm(&img(1, 1, &[v]), 255).unwrap();
        assert_eq!(*raster(1.0).last().unwrap(), 255);
        assert_eq!(*raster(0.0).last().unwrap(), 0);
        // round(0.5 * 255) = round(127.5) = 128
        assert_eq!(*raster(0.5).last().unwrap(), 128);
        assert!(matches!(
            encode_pgm(&img(1, 1, &[0.0]), 0),
            Err(ImageError::InvalidMaxval(0))
        ));
        assert!(encode_pgm(&img(1, 1, &[0.0]), 65536).is_err());
    }

    #[test]
    fn save_to_missing_directory_fails() {
        let err = save_grayscale(&img(1, 1, &[0.0]), "/no/such/dir/x.pgm", 255).unwrap_err();
        assert!(matches!(
            err,
            ImageError::FileNotFound(_) | ImageError::Io { .. }
        ));
    }

    #[test]
    fn gray_image_validates() {
        assert!(GrayImage::new(0, 1, vec![]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn resize_identity_and_constants() {
        let px: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let g = img(4, 4, &px);
        assert_eq!(resize_bilinear(&g, 4, 4).unwrap(), g);

        let c = img(3, 2, &[0.3; 6]);
        for (w, h) in [(1, 1), (5, 7), (2, 9)] {
            let r = resize_bilinear(&c, w, h).unwrap();
            assert!(r.pixels().iter().all(|&v| v == 0.3));
        }
        assert!(matches!(
            resize_bilinear(&c, 0, 3),
            Err(ImageError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn resize_two_to_three_is_corner_aligned() {
        let r = resize_bilinear(&img(2, 1, &[0.0, 1.0]), 3, 1).unwrap();
        assert_eq!(r.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn flatten_and_reshape() {
        let g = img(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let v = flatten(&g);
        assert_eq!(v.as_slice(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(GrayImage::from_pixel_vector(g.dims(), v).unwrap(), g);
        let tall = img(1, 3, &[0.1, 0.2, 0.3]);
        assert_eq!(flatten(&tall).as_slice(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn dims_parse() {
        assert_eq!(
            "64x48".parse::<ImageDims>().unwrap(),
            ImageDims::new(64, 48).unwrap()
        );
        assert!("64".parse::<ImageDims>().is_err());
        assert!("0x4".parse::<ImageDims>().is_err());
        assert_eq!(ImageDims::default().to_string(), "64x64");
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("m.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn manifest_two_rows_one_class() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            "visual_path,thermal_path,subject,split\r\nv1.pgm,t1.pgm,s1,train\r\nv2.pgm,t2.pgm,s1,test\r\n",
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.class_labels(), &["s1".to_string()]);
        assert_eq!(m.entries()[0].visual_path, dir.path().join("v1.pgm"));
        assert_eq!(m.entries()[1].split, Split::Test);
    }

    #[test]
    fn manifest_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let bad = [
            "visual_path,thermal_path,subject,split\nv.pgm,t.pgm,s1,validate\n",
            "",
            "visual_path,thermal_path,subject\nv.pgm,t.pgm,s1\n",
            "visual_path,thermal_path,subject,split\nv.pgm,v.pgm,s1,train\n",
            "visual_path,thermal_path,subject,split\nv.pgm,t.pgm,s1\n",
        ];
        for body in bad {
            let p = write_manifest(dir.path(), body);
            assert!(
                matches!(load_manifest(&p), Err(ImageError::MalformedManifest { .. })),
                "accepted {body:?}"
            );
        }
    }

    #[test]
    fn manifest_ten_classes() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("visual_path,thermal_path,subject,split\n");
        for c in 0..10 {
            for i in 0..20 {
                let split = if i < 10 { "train" } else { "test" };
                body.push_str(&format!("v{c}_{i}.pgm,t{c}_{i}.pgm,s{c},{split}\n"));
            }
        }
        let m = load_manifest(write_manifest(dir.path(), &body)).unwrap();
        assert_eq!(m.len(), 200);
        assert_eq!(m.class_labels().len(), 10);
        assert_eq!(
            m.entries()
                .iter()
                .filter(|e| e.split == Split::Train)
                .count(),
            100
        );
    }

    #[test]
    fn manifest_save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::from_entries(vec![ManifestEntry {
            visual_path: dir.path().join("a/v.pgm"),
            thermal_path: dir.path().join("a/t.pgm"),
            subject: "x".into(),
            split: Split::Train,
        }])
        .unwrap();
        let p = dir.path().join("m.csv");
        save_manifest(&m, &p).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .contains("a/v.pgm,a/t.pgm,x,train"));
        assert_eq!(load_manifest(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn pgm_round_trip_within_half_step(
            px in proptest::collection::vec(0.0f64..=1.0, 1..40),
            maxval in 1u32..=65535,
        ) {
            let g = GrayImage::new(px.len(), 1, px.clone()).unwrap();
            let back = decode_pgm(&encode_pgm(&g, maxval).unwrap()).unwrap();
            let tol = 1.0 / (2.0 * maxval as f64) + 1e-12;
            for (a, b) in px.iter().zip(back.pixels()) {
                prop_assert!((a - b).abs() <= tol);
            }
        }

        #[test]
        fn resize_stays_in_unit_range(
            px in proptest::collection::vec(0.0f64..=1.0, 6),
            w in 1usize..9, h in 1usize..9,
        ) {
            let g = GrayImage::new(3, 2, px).unwrap();
            let r = resize_bilinear(&g, w, h).unwrap();
            prop_assert_eq!(r.dims(), ImageDims::new(w, h).unwrap());
            prop_assert!(r.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
