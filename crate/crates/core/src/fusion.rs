//! Pixel-level fusion of registered visual/thermal pairs.
//!
//! Every fused pixel is `a * V(x, y) + b * T(x, y)` with constant weights
//! `a + b = 1`, so fused intensities stay inside `[0, 1]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{
    self, labels_in_order, read_csv_rows, relative_to, DatasetManifest, GrayImage, ImageDims,
    ImageError, Split,
};

pub const DEFAULT_VISUAL_WEIGHT: f64 = 0.70;
pub const DEFAULT_THERMAL_WEIGHT: f64 = 0.30;
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
pub const FUSED_MAXVAL: u32 = 255;
pub const FUSED_MANIFEST_HEADER: [&str; 3] = ["fused_path", "subject", "split"];

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion weights must lie in [0, 1] and sum to 1 (visual {visual}, thermal {thermal})")]
    InvalidWeights { visual: f64, thermal: f64 },
    #[error("dimension mismatch: visual {visual}, thermal {thermal}")]
    DimensionMismatch {
        visual: ImageDims,
        thermal: ImageDims,
    },
    #[error("manifest entry {index} ({subject}, {}): {source}", visual.display())]
    Entry {
        index: usize,
        subject: String,
        visual: PathBuf,
        #[source]
        source: Box<FusionError>,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl FusionError {
    /// The innermost error, skipping any per-entry context.
    pub fn root(&self) -> &FusionError {
        match self {
            FusionError::Entry { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Convex visual/thermal weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    visual: f64,
    thermal: f64,
}

impl FusionWeights {
    pub fn new(visual: f64, thermal: f64) -> Result<Self, FusionError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&visual)
            || !unit.contains(&thermal)
            || (visual + thermal - 1.0).abs() > WEIGHT_SUM_TOLERANCE
        {
            return Err(FusionError::InvalidWeights { visual, thermal });
        }
        Ok(FusionWeights { visual, thermal })
    }

    pub fn visual(&self) -> f64 {
        self.visual
    }

    pub fn thermal(&self) -> f64 {
        self.thermal
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            visual: DEFAULT_VISUAL_WEIGHT,
            thermal: DEFAULT_THERMAL_WEIGHT,
        }
    }
}

pub fn fuse_weighted(
    visual: &GrayImage,
    thermal: &GrayImage,
    weights: FusionWeights,
) -> Result<GrayImage, FusionError> {
    if visual.dims() != thermal.dims() {
        return Err(FusionError::DimensionMismatch {
            visual: visual.dims(),
            thermal: thermal.dims(),
        });
    }
    let (a, b) = (weights.visual, weights.thermal);
    let pixels = visual
        .pixels()
        .iter()
        .zip(thermal.pixels())
        .map(|(&v, &t)| imageio::clamp_unit(a * v + b * t))
        .collect();
    Ok(GrayImage::new(visual.width(), visual.height(), pixels)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedEntry {
    pub fused_path: PathBuf,
    pub subject: String,
    pub split: Split,
}

/// Fused images with their subject and split, in the order of the source manifest.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FusedManifest {
    entries: Vec<FusedEntry>,
    class_labels: Vec<String>,
}

impl FusedManifest {
    pub fn from_entries(entries: Vec<FusedEntry>) -> Self {
        let class_labels = labels_in_order(entries.iter().map(|e| e.subject.as_str()));
        FusedManifest {
            entries,
            class_labels,
        }
    }

    pub fn entries(&self) -> &[FusedEntry] {
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

    pub fn split(&self, split: Split) -> impl Iterator<Item = &FusedEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Writes `fused_path,subject,split`, with paths relative to the CSV's directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let to_io = |e: csv::Error| ImageError::io(path, std::io::Error::other(e));
        w.write_record(FUSED_MANIFEST_HEADER).map_err(to_io)?;
        for e in &self.entries {
            w.write_record([
                relative_to(&e.fused_path, base),
                e.subject.clone(),
                e.split.to_string(),
            ])
            .map_err(to_io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| ImageError::io(path, std::io::Error::other(e.to_string())))?;
        fs::write(path, bytes).map_err(|e| ImageError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ImageError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let malformed = |reason: String| ImageError::MalformedManifest {
            path: path.to_path_buf(),
            reason,
        };
        let rows = read_csv_rows(&text, &FUSED_MANIFEST_HEADER).map_err(malformed)?;
        let mut entries = Vec::with_capacity(rows.len());
        for (line, row) in rows {
            let split = row[2]
                .parse()
                .map_err(|e: String| malformed(format!("line {line}: {e}")))?;
            if row[1].is_empty() {
                return Err(malformed(format!("line {line}: empty subject")));
            }
            entries.push(FusedEntry {
                fused_path: base.join(&row[0]),
                subject: row[1].clone(),
                split,
            });
        }
        Ok(FusedManifest::from_entries(entries))
    }
}

/// Loads, optionally resizes, and fuses every pair in `manifest`, writing
/// `fused_NNNN.pgm` files (maxval 255) into `output_dir`.
///
/// With `target_dims = None` the pair must already share dimensions. Stops at
/// the first failing entry and reports its index and paths.
pub fn fuse_dataset(
    manifest: &DatasetManifest,
    weights: FusionWeights,
    output_dir: impl AsRef<Path>,
    target_dims: Option<ImageDims>,
) -> Result<FusedManifest, FusionError> {
    let output_dir = output_dir.as_ref();
    if manifest.is_empty() {
        return Ok(FusedManifest::default());
    }
    fs::create_dir_all(output_dir).map_err(|e| ImageError::io(output_dir, e))?;
    let width = manifest.len().saturating_sub(1).to_string().len().max(4);

    let mut entries = Vec::with_capacity(manifest.len());
    for (index, entry) in manifest.entries().iter().enumerate() {
        let fused_path = output_dir.join(format!("fused_{index:0width$}.pgm"));
        let fuse_one = || -> Result<(), FusionError> {
            let mut visual = imageio::load_grayscale(&entry.visual_path)?;
            let mut thermal = imageio::load_grayscale(&entry.thermal_path)?;
            if let Some(d) = target_dims {
                visual = imageio::resize_bilinear(&visual, d.width, d.height)?;
                thermal = imageio::resize_bilinear(&thermal, d.width, d.height)?;
            }
            let fused = fuse_weighted(&visual, &thermal, weights)?;
            imageio::save_grayscale(&fused, &fused_path, FUSED_MAXVAL)?;
            Ok(())
        };
        fuse_one().map_err(|source| FusionError::Entry {
            index,
            subject: entry.subject.clone(),
            visual: entry.visual_path.clone(),
            source: Box::new(source),
        })?;
        entries.push(FusedEntry {
            fused_path,
            subject: entry.subject.clone(),
            split: entry.split,
        });
    }
    Ok(FusedManifest::from_entries(entries))
}
