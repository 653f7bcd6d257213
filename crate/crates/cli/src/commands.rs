use std::fs;
use std::path::{Path, PathBuf};

use thermovis::eval::{self, ConfigEcho, ReportFormat, SYNTH_MANIFEST};
use thermovis::fusion::fuse_dataset;
use thermovis::imageio::load_manifest;
use thermovis::{
    Eigenspace, FusedManifest, FusionWeights, ImageDims, MlpModel, ProtocolConfig, Split,
    SynthConfig,
};

use crate::config::{resolve_hyper, resolve_weights, FileConfig};
use crate::{
    EigenArgs, EigenFlags, EvalArgs, Failure, FuseArgs, FuseFlags, IoFlags, PipelineArgs,
    SynthArgs, TrainArgs, TrainFlags, WeightFlags,
};

pub const FUSED_MANIFEST: &str = "fused.csv";
pub const EIGENSPACE_FILE: &str = "eigenspace.feig";
pub const MODEL_FILE: &str = "model.fmlp";
pub const REPORT_STEM: &str = "report";

struct Paths {
    manifest: PathBuf,
    out: PathBuf,
}

fn required(flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or(file).ok_or_else(|| {
        Failure::Usage(format!(
            "--{name} is required (or set `{name}` in the config file)"
        ))
    })
}

fn paths(io: IoFlags, cfg: &mut FileConfig) -> Result<Paths, Failure> {
    Ok(Paths {
        manifest: required(io.manifest, cfg.manifest.take(), "manifest")?,
        out: required(io.out, cfg.out.take(), "out")?,
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))
}

fn weights(flags: &WeightFlags, cfg: &FileConfig) -> Result<FusionWeights, Failure> {
    resolve_weights(
        flags.visual_weight.or(cfg.visual_weight),
        flags.thermal_weight.or(cfg.thermal_weight),
    )
}

fn dims(flags: &FuseFlags, cfg: &FileConfig) -> Result<ImageDims, Failure> {
    Ok(flags.dims.or(cfg.dims()?).unwrap_or_default())
}

fn protocol(
    weights: FusionWeights,
    eigen: Option<&EigenFlags>,
    train: &TrainFlags,
    cfg: &FileConfig,
) -> Result<ProtocolConfig, Failure> {
    let hyper = resolve_hyper(
        train.lr.or(cfg.lr),
        train.momentum.or(cfg.momentum),
        train.epochs.or(cfg.epochs),
        train.target_loss.or(cfg.target_loss),
        train.seed.or(cfg.seed),
    )?;
    Ok(ProtocolConfig {
        k: eigen.and_then(|e| e.k).or(cfg.k),
        hidden: train
            .hidden
            .or(cfg.hidden)
            .unwrap_or(ProtocolConfig::default().hidden),
        hyper,
        weights,
    })
}

/// Loads the raw manifest, optionally resplits it, fuses into `dir` and
/// writes the fused manifest next to the images.
fn fuse_into(
    manifest: &Path,
    flags: &FuseFlags,
    cfg: &FileConfig,
    dir: &Path,
) -> Result<FusedManifest, Failure> {
    let weights = weights(&flags.weights, cfg)?;
    let dims = dims(flags, cfg)?;
    let mut raw = load_manifest(manifest)?;
    if let Some(seed) = flags.resplit_seed.or(cfg.resplit_seed) {
        raw = eval::resplit_per_class(&raw, seed);
    }
    let fused = fuse_dataset(&raw, weights, dir, Some(dims))?;
    create_dir(dir)?;
    fused.save(dir.join(FUSED_MANIFEST))?;
    Ok(fused)
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    let out = required(args.out, cfg.out.clone(), "out")?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        classes: args.classes.or(cfg.classes).unwrap_or(d.classes),
        train_per_class: args
            .train_per_class
            .or(cfg.train_per_class)
            .unwrap_or(d.train_per_class),
        test_per_class: args
            .test_per_class
            .or(cfg.test_per_class)
            .unwrap_or(d.test_per_class),
        dims: args.dims.or(cfg.dims()?).unwrap_or(d.dims),
        separation: args.separation.or(cfg.separation).unwrap_or(d.separation),
        seed: args.seed.or(cfg.seed).unwrap_or(d.seed),
    };
    let manifest = eval::make_synthetic_dataset(&config, &out)?;
    println!(
        "wrote {} pairs for {} subjects to {}",
        manifest.len(),
        manifest.class_labels().len(),
        out.join(SYNTH_MANIFEST).display()
    );
    Ok(())
}

pub fn fuse(args: FuseArgs) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(args.io.config.as_deref())?;
    let p = paths(args.io, &mut cfg)?;
    let fused = fuse_into(&p.manifest, &args.fuse, &cfg, &p.out)?;
    println!(
        "fused {} pairs into {}",
        fused.len(),
        p.out.join(FUSED_MANIFEST).display()
    );
    Ok(())
}

pub fn eigen(args: EigenArgs) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(args.io.config.as_deref())?;
    let p = paths(args.io, &mut cfg)?;
    let manifest = FusedManifest::load(&p.manifest)?;
    let space = eval::build_eigenspace(&manifest, args.eigen.k.or(cfg.k))?;
    create_dir(&p.out)?;
    let path = p.out.join(EIGENSPACE_FILE);
    space.save(&path)?;
    println!(
        "kept {} eigenfaces from {} training images ({}); wrote {}",
        space.k(),
        space.training_count(),
        space.dims(),
        path.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(args.io.config.as_deref())?;
    let p = paths(args.io, &mut cfg)?;
    let config = protocol(FusionWeights::default(), None, &args.train, &cfg)?;
    let manifest = FusedManifest::load(&p.manifest)?;
    let space = Eigenspace::load(
        args.eigenspace
            .unwrap_or_else(|| p.out.join(EIGENSPACE_FILE)),
    )?;
    let (model, history) = eval::train_classifier(&space, &manifest, &config)?;
    create_dir(&p.out)?;
    let path = p.out.join(MODEL_FILE);
    model.save(&path)?;
    println!(
        "trained {:?} for {} epochs, final loss {:.6} ({:?}); wrote {}",
        model.layer_sizes(),
        history.epochs_run(),
        history.final_loss(),
        history.stop_reason,
        path.display()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(args.io.config.as_deref())?;
    let p = paths(args.io, &mut cfg)?;
    let config = protocol(weights(&args.weights, &cfg)?, None, &args.train, &cfg)?;
    let format = args.format.or(cfg.format()?).unwrap_or(ReportFormat::Csv);
    let manifest = FusedManifest::load(&p.manifest)?;
    let space = Eigenspace::load(
        args.eigenspace
            .unwrap_or_else(|| p.out.join(EIGENSPACE_FILE)),
    )?;
    let model = MlpModel::load(args.model.unwrap_or_else(|| p.out.join(MODEL_FILE)))?;
    let echo = ConfigEcho::new(&space, &model, &config, None);
    let report = eval::evaluate(
        &space,
        &model,
        manifest.class_labels(),
        &manifest,
        Split::Test,
        echo,
    )?;
    create_dir(&p.out)?;
    let path = p.out.join(format!("{REPORT_STEM}.{}", format.extension()));
    eval::export_report(&report, &path, format)?;
    println!(
        "overall recognition rate {:.4} ({}/{}); wrote {}",
        report.overall_rate,
        report.correct(),
        report.test_count,
        path.display()
    );
    Ok(())
}

pub fn pipeline(args: PipelineArgs) -> Result<(), Failure> {
    let mut cfg = FileConfig::load(args.io.config.as_deref())?;
    let p = paths(args.io, &mut cfg)?;
    let config = protocol(
        weights(&args.fuse.weights, &cfg)?,
        Some(&args.eigen),
        &args.train,
        &cfg,
    )?;
    let formats = match args.format.or(cfg.format()?) {
        Some(f) => vec![f],
        None => vec![ReportFormat::Csv, ReportFormat::Json],
    };
    let fused = fuse_into(&p.manifest, &args.fuse, &cfg, &p.out.join("fused"))?;
    let outcome = eval::run_protocol(&fused, &config)?;
    outcome
        .trained
        .eigenspace
        .save(p.out.join(EIGENSPACE_FILE))?;
    outcome.trained.model.save(p.out.join(MODEL_FILE))?;
    for format in formats {
        let path = p.out.join(format!("{REPORT_STEM}.{}", format.extension()));
        eval::export_report(&outcome.report, &path, format)?;
    }
    let report = &outcome.report;
    println!(
        "k = {}, epochs = {}, final loss = {:.6}",
        report.config_echo.k,
        outcome.trained.history.epochs_run(),
        outcome.trained.history.final_loss()
    );
    println!(
        "overall recognition rate {:.4} ({}/{})",
        report.overall_rate,
        report.correct(),
        report.test_count
    );
    Ok(())
}
