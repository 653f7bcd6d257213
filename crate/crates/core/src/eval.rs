//! Train/test protocol over fused images, recognition reports, and a seeded
//! synthetic stand-in dataset.
//!
//! The protocol: build the eigenspace from the training split only, project
//! both splits, fit input standardization on the training projections, train
//! the MLP, then classify every test projection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigenspace::{self, EigenError, Eigenspace};
use crate::fusion::{FusedEntry, FusedManifest, FusionError, FusionWeights};
use crate::imageio::{
    self, flatten, DatasetManifest, GrayImage, ImageDims, ImageError, ManifestEntry, PixelVector,
    Split,
};
use crate::mlp::{self, Hyperparameters, InputScaler, MlpError, MlpModel, Sample, TrainingHistory};

pub const OVERALL_LABEL: &str = "__overall__";
pub const REPORT_CSV_HEADER: [&str; 4] = ["class", "test_count", "correct", "rate"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("{}: image is {actual}, expected {expected}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        expected: ImageDims,
        actual: ImageDims,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report parse error: {0}")]
    Parse(String),
}

/// Everything the protocol needs beyond the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    /// Eigenfaces to keep; `None` means `min(N - 1, 40)`.
    pub k: Option<usize>,
    pub hidden: usize,
    pub hyper: Hyperparameters,
    /// Echoed into the report; fusion happens before the protocol runs.
    pub weights: FusionWeights,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            k: None,
            hidden: mlp::DEFAULT_HIDDEN,
            hyper: Hyperparameters::default(),
            weights: FusionWeights::default(),
        }
    }
}

/// The effective configuration of a run, as recorded in its report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub dims: String,
    pub visual_weight: f64,
    pub thermal_weight: f64,
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub target_loss: f64,
    pub seed: u64,
    /// Absent when the report was produced from saved model files.
    pub epochs_run: Option<usize>,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub overall_rate: f64,
    pub per_class_rate: BTreeMap<String, f64>,
    /// Rows are true classes, columns predicted, both in `classes` order.
    pub confusion: Vec<Vec<u64>>,
    pub test_count: u64,
    pub config_echo: ConfigEcho,
}

impl EvalReport {
    /// Fills rates from a confusion matrix.
    pub fn from_confusion(
        classes: Vec<String>,
        confusion: Vec<Vec<u64>>,
        config_echo: ConfigEcho,
    ) -> Self {
        let test_count: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let per_class_rate = classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let row: u64 = confusion[i].iter().sum();
                let rate = if row == 0 {
                    0.0
                } else {
                    confusion[i][i] as f64 / row as f64
                };
                (c.clone(), rate)
            })
            .collect();
        EvalReport {
            classes,
            overall_rate: if test_count == 0 {
                0.0
            } else {
                correct as f64 / test_count as f64
            },
            per_class_rate,
            confusion,
            test_count,
            config_echo,
        }
    }

    pub fn correct(&self) -> u64 {
        (0..self.confusion.len())
            .map(|i| self.confusion[i][i])
            .sum()
    }

    pub fn class_test_count(&self, class: usize) -> u64 {
        self.confusion[class].iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!(
                "unknown report format {s:?} (expected csv or json)"
            )),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = REPORT_CSV_HEADER.join(",");
    out.push('\n');
    for (i, class) in report.classes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{:.4}\n",
            csv_field(class),
            report.class_test_count(i),
            report.confusion[i][i],
            report.per_class_rate[class]
        ));
    }
    out.push_str(&format!(
        "{OVERALL_LABEL},{},{},{:.4}\n",
        report.test_count,
        report.correct(),
        report.overall_rate
    ));
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One parsed row of a CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub class: String,
    pub test_count: u64,
    pub correct: u64,
    pub rate: f64,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, EvalError> {
    let rows = imageio::read_csv_rows(text, &REPORT_CSV_HEADER).map_err(EvalError::Parse)?;
    rows.into_iter()
        .map(|(line, r)| {
            let bad = |what: &str| EvalError::Parse(format!("line {line}: bad {what}"));
            Ok(ReportRow {
                class: r[0].clone(),
                test_count: r[1].parse().map_err(|_| bad("test_count"))?,
                correct: r[2].parse().map_err(|_| bad("correct"))?,
                rate: r[3].parse().map_err(|_| bad("rate"))?,
            })
        })
        .collect()
}

pub fn export_report(
    report: &EvalReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| EvalError::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    fs::write(path, body).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_report_json(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Parse(e.to_string()))
}

// --- protocol ----------------------------------------------------------------

/// Eigenspace and classifier fitted on the training split.
#[derive(Clone, Debug)]
pub struct TrainedPipeline {
    pub classes: Vec<String>,
    pub eigenspace: Eigenspace,
    pub model: MlpModel,
    pub history: TrainingHistory,
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub report: EvalReport,
    pub trained: TrainedPipeline,
}

fn class_index(classes: &[String], subject: &str) -> usize {
    classes
        .iter()
        .position(|c| c == subject)
        .expect("subject listed in class labels")
}

fn load_vectors<'a>(
    entries: impl Iterator<Item = &'a FusedEntry>,
    expected: &mut Option<ImageDims>,
) -> Result<Vec<PixelVector>, EvalError> {
    entries
        .map(|e| {
            let img = imageio::load_grayscale(&e.fused_path)?;
            match expected {
                Some(d) if *d != img.dims() => Err(EvalError::DimensionMismatch {
                    path: e.fused_path.clone(),
                    expected: *d,
                    actual: img.dims(),
                }),
                _ => {
                    *expected = Some(img.dims());
                    Ok(flatten(&img))
                }
            }
        })
        .collect()
}

fn require_classes(manifest: &FusedManifest, splits: &[Split]) -> Result<(), EvalError> {
    let classes = manifest.class_labels();
    if classes.len() < 2 {
        return Err(EvalError::InsufficientData(format!(
            "need at least 2 classes, found {}",
            classes.len()
        )));
    }
    for class in classes {
        for &split in splits {
            if !manifest.split(split).any(|e| &e.subject == class) {
                return Err(EvalError::InsufficientData(format!(
                    "class {class:?} has no {split} images"
                )));
            }
        }
    }
    Ok(())
}

/// Builds the eigenspace from the training split only.
pub fn build_eigenspace(
    manifest: &FusedManifest,
    k: Option<usize>,
) -> Result<Eigenspace, EvalError> {
    require_classes(manifest, &[Split::Train])?;
    let mut dims = None;
    let vectors = load_vectors(manifest.split(Split::Train), &mut dims)?;
    let dims = dims.expect("at least one training image");
    let k = k.unwrap_or_else(|| eigenspace::default_k(vectors.len()));
    Ok(Eigenspace::build(&vectors, dims, k)?)
}

/// Projects the training split, fits the input scaler and trains the MLP.
/// Output units follow `manifest.class_labels()` order.
pub fn train_classifier(
    space: &Eigenspace,
    manifest: &FusedManifest,
    config: &ProtocolConfig,
) -> Result<(MlpModel, TrainingHistory), EvalError> {
    require_classes(manifest, &[Split::Train])?;
    config.hyper.validate()?;
    let classes = manifest.class_labels();
    let train: Vec<&FusedEntry> = manifest.split(Split::Train).collect();
    let mut dims = Some(space.dims());
    let vectors = load_vectors(train.iter().copied(), &mut dims)?;
    let features = vectors
        .iter()
        .map(|v| space.project(v).map(|f| f.coords))
        .collect::<Result<Vec<_>, _>>()?;
    let scaler = InputScaler::fit(&features)?;
    let samples = train
        .iter()
        .zip(&features)
        .map(|(e, f)| {
            Ok(Sample {
                input: scaler.transform(f)?,
                target: mlp::one_hot(class_index(classes, &e.subject), classes.len()),
            })
        })
        .collect::<Result<Vec<_>, MlpError>>()?;

    let mut model = MlpModel::new(
        &[space.k(), config.hidden, classes.len()],
        config.hyper.seed,
    )?;
    let history = model.train(&samples, &config.hyper)?;
    model.set_scaler(Some(scaler))?;
    Ok((model, history))
}

/// Fits eigenspace, input scaler and MLP using training entries only; test
/// files are never opened.
pub fn fit(
    manifest: &FusedManifest,
    config: &ProtocolConfig,
) -> Result<TrainedPipeline, EvalError> {
    let eigenspace = build_eigenspace(manifest, config.k)?;
    let (model, history) = train_classifier(&eigenspace, manifest, config)?;
    Ok(TrainedPipeline {
        classes: manifest.class_labels().to_vec(),
        eigenspace,
        model,
        history,
    })
}

impl ConfigEcho {
    pub fn new(
        space: &Eigenspace,
        model: &MlpModel,
        config: &ProtocolConfig,
        history: Option<&TrainingHistory>,
    ) -> Self {
        let sizes = model.layer_sizes();
        ConfigEcho {
            k: space.k(),
            dims: space.dims().to_string(),
            visual_weight: config.weights.visual(),
            thermal_weight: config.weights.thermal(),
            hidden: if sizes.len() > 2 { sizes[1] } else { 0 },
            learning_rate: config.hyper.learning_rate,
            momentum: config.hyper.momentum,
            max_epochs: config.hyper.max_epochs,
            target_loss: config.hyper.target_loss,
            seed: config.hyper.seed,
            epochs_run: history.map(TrainingHistory::epochs_run),
            final_loss: history.map(TrainingHistory::final_loss),
        }
    }
}

/// Classifies every entry of `split` and tabulates the confusion matrix.
/// `classes` gives the meaning of each output unit.
pub fn evaluate(
    space: &Eigenspace,
    model: &MlpModel,
    classes: &[String],
    manifest: &FusedManifest,
    split: Split,
    config_echo: ConfigEcho,
) -> Result<EvalReport, EvalError> {
    let c = classes.len();
    if model.output_dim() != c || model.input_dim() != space.k() {
        return Err(EvalError::InvalidParameters(format!(
            "model maps {} inputs to {} classes; eigenspace has k = {} and manifest lists {c} classes",
            model.input_dim(),
            model.output_dim(),
            space.k()
        )));
    }
    let mut confusion = vec![vec![0u64; c]; c];
    let mut dims = Some(space.dims());
    let entries: Vec<&FusedEntry> = manifest.split(split).collect();
    let vectors = load_vectors(entries.iter().copied(), &mut dims)?;
    for (entry, v) in entries.iter().zip(&vectors) {
        let truth = classes
            .iter()
            .position(|l| l == &entry.subject)
            .ok_or_else(|| {
                EvalError::InsufficientData(format!("unknown class {:?}", entry.subject))
            })?;
        let coords = space.project(v)?.coords;
        let predicted = model.classify(&model.prepare(&coords)?)?.class;
        confusion[truth][predicted] += 1;
    }
    Ok(EvalReport::from_confusion(
        classes.to_vec(),
        confusion,
        config_echo,
    ))
}

/// Full protocol: fit on the train split, report on the test split.
pub fn run_protocol(
    manifest: &FusedManifest,
    config: &ProtocolConfig,
) -> Result<ProtocolOutcome, EvalError> {
    require_classes(manifest, &[Split::Train, Split::Test])?;
    let trained = fit(manifest, config)?;
    let echo = ConfigEcho::new(
        &trained.eigenspace,
        &trained.model,
        config,
        Some(&trained.history),
    );
    let report = evaluate(
        &trained.eigenspace,
        &trained.model,
        &trained.classes,
        manifest,
        Split::Test,
        echo,
    )?;
    Ok(ProtocolOutcome { report, trained })
}

/// Reassigns splits: within each class, a seeded shuffle puts the first
/// `ceil(n / 2)` entries in train and the rest in test. Entry order is kept.
pub fn resplit_per_class(manifest: &DatasetManifest, seed: u64) -> DatasetManifest {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut entries: Vec<ManifestEntry> = manifest.entries().to_vec();
    for class in manifest.class_labels() {
        let mut idx: Vec<usize> = (0..entries.len())
            .filter(|&i| &entries[i].subject == class)
            .collect();
        idx.shuffle(&mut rng);
        let cut = idx.len().div_ceil(2);
        for (rank, &i) in idx.iter().enumerate() {
            entries[i].split = if rank < cut {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    DatasetManifest::from_entries(entries).expect("paths unchanged")
}

// --- synthetic data ----------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dims: ImageDims,
    /// Standard deviation of the per-pixel Gaussian noise added to each
    /// sample; 0 reproduces the class templates exactly.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            train_per_class: 10,
            test_per_class: 10,
            dims: ImageDims::default(),
            separation: 0.3,
            seed: 42,
        }
    }
}

pub const SYNTH_MANIFEST: &str = "manifest.csv";

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    amplitude: f64,
}

impl Blob {
    fn random(rng: &mut impl Rng, amplitude: (f64, f64), radius: (f64, f64)) -> Self {
        Blob {
            cx: rng.random_range(0.2..0.8),
            cy: rng.random_range(0.2..0.8),
            radius: rng.random_range(radius.0..radius.1),
            amplitude: rng.random_range(amplitude.0..amplitude.1)
                * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let d2 = (u - self.cx).powi(2) + (v - self.cy).powi(2);
        self.amplitude * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

/// Smooth template: a face-like oval shared by every class plus
/// class-specific blobs.
fn template(dims: ImageDims, base: f64, blobs: &[Blob]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.pixel_count());
    for y in 0..dims.height {
        for x in 0..dims.width {
            let u = (x as f64 + 0.5) / dims.width as f64;
            let v = (y as f64 + 0.5) / dims.height as f64;
            let oval = ((u - 0.5) / 0.36).powi(2) + ((v - 0.5) / 0.46).powi(2);
            let face = if oval < 1.0 { base } else { 0.08 };
            let value = face + blobs.iter().map(|b| b.at(u, v)).sum::<f64>();
            out.push(value.clamp(0.0, 1.0));
        }
    }
    out
}

fn noisy(
    template: &[f64],
    noise: Option<&Normal<f64>>,
    rng: &mut impl Rng,
    dims: ImageDims,
) -> GrayImage {
    let pixels: Vec<f64> = template
        .iter()
        .map(|&t| match noise {
            Some(n) => (t + n.sample(rng)).clamp(0.0, 1.0),
            None => t,
        })
        .collect();
    GrayImage::new(dims.width, dims.height, pixels).expect("clamped pixels")
}

/// Writes `visual/` and `thermal/` PGMs plus `manifest.csv` under `out_dir`
/// and returns the manifest. Identical configs produce identical bytes.
pub fn make_synthetic_dataset(
    config: &SynthConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, EvalError> {
    let out_dir = out_dir.as_ref();
    if config.classes == 0 || config.train_per_class == 0 {
        return Err(EvalError::InvalidParameters(
            "classes and train_per_class must be at least 1".into(),
        ));
    }
    if !(config.separation >= 0.0 && config.separation.is_finite()) {
        return Err(EvalError::InvalidParameters(format!(
            "separation must be a finite non-negative noise level, got {}",
            config.separation
        )));
    }
    let dims = config.dims;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let templates: Vec<(Vec<f64>, Vec<f64>)> = (0..config.classes)
        .map(|_| {
            let visual: Vec<Blob> = (0..6)
                .map(|_| Blob::random(&mut rng, (0.15, 0.35), (0.04, 0.12)))
                .collect();
            let thermal: Vec<Blob> = (0..4)
                .map(|_| Blob::random(&mut rng, (0.2, 0.4), (0.08, 0.2)))
                .collect();
            (
                template(dims, 0.45, &visual),
                template(dims, 0.55, &thermal),
            )
        })
        .collect();
    let noise = (config.separation > 0.0)
        .then(|| Normal::new(0.0, config.separation).expect("valid sigma"));

    let io_err = |path: &Path, source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let (vdir, tdir) = (out_dir.join("visual"), out_dir.join("thermal"));
    fs::create_dir_all(&vdir).map_err(|e| io_err(&vdir, e))?;
    fs::create_dir_all(&tdir).map_err(|e| io_err(&tdir, e))?;

    let per_class = config.train_per_class + config.test_per_class;
    let mut entries = Vec::with_capacity(config.classes * per_class);
    for (c, (vt, tt)) in templates.iter().enumerate() {
        let subject = format!("s{:02}", c + 1);
        for i in 0..per_class {
            let name = format!("{subject}_{i:03}.pgm");
            let (vp, tp) = (vdir.join(&name), tdir.join(&name));
            imageio::save_grayscale(&noisy(vt, noise.as_ref(), &mut rng, dims), &vp, 255)?;
            imageio::save_grayscale(&noisy(tt, noise.as_ref(), &mut rng, dims), &tp, 255)?;
            entries.push(ManifestEntry {
                visual_path: vp,
                thermal_path: tp,
                subject: subject.clone(),
                split: if i < config.train_per_class {
                    Split::Train
                } else {
                    Split::Test
                },
            });
        }
    }
    let manifest = DatasetManifest::from_entries(entries).map_err(EvalError::InvalidParameters)?;
    imageio::save_manifest(&manifest, out_dir.join(SYNTH_MANIFEST))?;
    Ok(manifest)
}
