use std::fs;
use std::path::Path;

use tempfile::TempDir;
use thermovis::eval::{self, ConfigEcho};
use thermovis::fusion::fuse_dataset;
use thermovis::{FusedManifest, FusionWeights, ProtocolConfig, Split, SynthConfig};

fn synth_fused(config: &SynthConfig, root: &Path) -> FusedManifest {
    let raw = eval::make_synthetic_dataset(config, root.join("raw")).unwrap();
    fuse_dataset(&raw, FusionWeights::default(), root.join("fused"), None).unwrap()
}

fn protocol_for(seed: u64) -> ProtocolConfig {
    let mut config = ProtocolConfig::default();
    config.hyper.seed = seed;
    config
}

#[test]
fn synthetic_run_covers_whole_test_split() {
    let dir = TempDir::new().unwrap();
    let synth = SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    };
    let fused = synth_fused(&synth, dir.path());
    assert_eq!(fused.len(), 200);
    let outcome = eval::run_protocol(&fused, &protocol_for(1)).unwrap();
    let report = &outcome.report;
    assert_eq!(report.test_count, 100);
    assert_eq!(report.classes.len(), 10);
    assert_eq!(outcome.trained.eigenspace.k(), 40);
    for i in 0..10 {
        assert_eq!(report.class_test_count(i), 10);
    }
    assert!(report.overall_rate >= 0.95, "rate {}", report.overall_rate);
}

#[test]
fn training_split_is_recognised_perfectly() {
    let dir = TempDir::new().unwrap();
    let synth = SynthConfig {
        classes: 5,
        seed: 2,
        ..SynthConfig::default()
    };
    let fused = synth_fused(&synth, dir.path());
    let config = protocol_for(2);
    let trained = eval::fit(&fused, &config).unwrap();
    let echo = ConfigEcho::new(
        &trained.eigenspace,
        &trained.model,
        &config,
        Some(&trained.history),
    );
    let report = eval::evaluate(
        &trained.eigenspace,
        &trained.model,
        &trained.classes,
        &fused,
        Split::Train,
        echo,
    )
    .unwrap();
    assert_eq!(report.test_count, 50);
    assert_eq!(report.overall_rate, 1.0);
}

#[test]
fn test_images_never_influence_fitting() {
    let dir = TempDir::new().unwrap();
    let synth = SynthConfig {
        classes: 4,
        dims: "32x32".parse().unwrap(),
        seed: 3,
        ..SynthConfig::default()
    };
    let fused = synth_fused(&synth, dir.path());
    let config = protocol_for(3);
    let before = eval::fit(&fused, &config).unwrap();

    for e in fused.split(Split::Test) {
        fs::remove_file(&e.fused_path).unwrap();
    }
    let after = eval::fit(&fused, &config).unwrap();
    assert_eq!(before.eigenspace.to_bytes(), after.eigenspace.to_bytes());
    assert_eq!(before.model.to_bytes(), after.model.to_bytes());
    assert!(eval::run_protocol(&fused, &config).is_err());
}

#[test]
fn repeated_runs_are_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let synth = SynthConfig {
        classes: 3,
        dims: "24x24".parse().unwrap(),
        seed: 4,
        ..SynthConfig::default()
    };
    let ra = eval::run_protocol(&synth_fused(&synth, a.path()), &protocol_for(4)).unwrap();
    let rb = eval::run_protocol(&synth_fused(&synth, b.path()), &protocol_for(4)).unwrap();
    assert_eq!(ra.report, rb.report);
    assert_eq!(ra.trained.model.to_bytes(), rb.trained.model.to_bytes());
    assert_eq!(
        ra.trained.eigenspace.to_bytes(),
        rb.trained.eigenspace.to_bytes()
    );
}

#[test]
fn more_eigenfaces_do_not_hurt_on_average() {
    let mut single = 0.0;
    let mut full = 0.0;
    let seeds = 1..=5u64;
    for seed in seeds.clone() {
        let dir = TempDir::new().unwrap();
        let synth = SynthConfig {
            seed,
            dims: "32x32".parse().unwrap(),
            ..SynthConfig::default()
        };
        let fused = synth_fused(&synth, dir.path());
        let classes = fused.class_labels().len();
        for (k, total) in [(1, &mut single), (classes - 1, &mut full)] {
            let config = ProtocolConfig {
                k: Some(k),
                ..protocol_for(seed)
            };
            *total += eval::run_protocol(&fused, &config)
                .unwrap()
                .report
                .overall_rate;
        }
    }
    let n = seeds.count() as f64;
    assert!(
        single / n <= full / n,
        "k=1 mean {} vs k=C-1 mean {}",
        single / n,
        full / n
    );
}
