mod common;

use std::fs;

use common::{files, pipeline, samix, FIXTURE, SMALL};

use samix::io::checkpoint;
use samix::io::mapfile::MapFile;
use samix::maps::{DistanceMap, SpectralMap};
use samix::pipeline::{run_benchmark, BenchmarkConfig};

#[test]
fn pipeline_reruns_are_byte_identical_and_match_library() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "5");
    pipeline(b.path(), "5");
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa, fb);
    assert!(fa.len() > 100);
    for f in &fa {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{}", f.display());
    }

    let v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    let mut cfg = BenchmarkConfig {
        synth: serde_json::from_value(v["synth"].clone()).unwrap(),
        augment: serde_json::from_value(v["augment"].clone()).unwrap(),
        dodiss: serde_json::from_value(v["dodiss"].clone()).unwrap(),
        train: serde_json::from_value(v["train"].clone()).unwrap(),
        ..Default::default()
    };
    cfg.model.height = 16;
    cfg.model.width = 16;
    cfg.model.hidden = 8;
    let run = run_benchmark(&cfg.with_seed(5)).unwrap();
    let sens = MapFile::read(&a.path().join("sens.samx")).unwrap().into_sensitivity().unwrap();
    assert_eq!(sens.map, run.sensitivity_before.map);
    assert_eq!(sens.clean_error, run.sensitivity_before.clean_error);
    let dist = MapFile::read(&a.path().join("dist.samx")).unwrap().into_distance().unwrap();
    assert_eq!(dist.map, run.distance.map);
    assert_eq!(checkpoint::load(&a.path().join("src.bin")).unwrap(), run.source_only);
    assert_eq!(checkpoint::load(&a.path().join("samix.bin")).unwrap(), run.samix);

    let manifest = fs::read_to_string(a.path().join("mixed/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().next().unwrap(), "file,source,target,lambda,loss");
    assert_eq!(manifest.lines().count(), 21);
    let range = fs::read_to_string(a.path().join("sens.range.txt")).unwrap();
    assert!(range.starts_with("min=") && range.contains("\nmax="));
}

#[test]
fn distance_map_of_identical_dirs_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), SMALL).unwrap();
    samix(d, &["gen-synth", "--out", "d", "--config", "cfg.json"]).summary();
    let s = samix(d, &["distance-map", "--source", "d/source_val", "--target", "d/source_val", "--out", "z.samx"]).summary();
    assert_eq!(s["max"], 0.0);
    let map = MapFile::read(&d.join("z.samx")).unwrap();
    assert!(map.map.values().iter().all(|v| *v == 0.0));
}

#[test]
fn dodiss_with_zero_distance_is_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), SMALL).unwrap();
    samix(d, &["gen-synth", "--out", "d", "--config", "cfg.json"]).summary();
    let zero = DistanceMap {
        map: SpectralMap::constant(16, 16, 0.0),
        source_id: "a".into(),
        target_id: "b".into(),
        source_samples: 1,
        target_samples: 1,
    };
    MapFile::from_distance(&zero).write(&d.join("zero.samx")).unwrap();
    let fixture = format!("{FIXTURE} uniform 2");
    let s = samix(
        d,
        &[
            "dodiss", "--source", "d/source_val", "--labels", "d/source_val/labels.csv", "--distance", "zero.samx",
            "--oracle-cmd", &fixture, "--out", "s.samx",
        ],
    )
    .summary();
    let sens = MapFile::read(&d.join("s.samx")).unwrap().into_sensitivity().unwrap();
    assert!(sens.map.values().iter().all(|v| *v == sens.clean_error));
    assert_eq!(s["clean_error"], sens.clean_error);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(samix(d, &["no-such-command"]).code, 1);
    assert_eq!(samix(d, &["eval", "--data", "x"]).code, 1);
    fs::write(d.join("bad.json"), r#"{"sed": 1}"#).unwrap();
    assert_eq!(samix(d, &["gen-synth", "--out", "o", "--config", "bad.json"]).code, 1);
    let r = samix(d, &["distance-map", "--source", "missing", "--target", "missing", "--out", "o.samx"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("missing"));
    assert_eq!(samix(d, &["dodiss", "--out", "o.samx"]).code, 1);

    fs::write(d.join("cfg.json"), SMALL).unwrap();
    samix(d, &["gen-synth", "--out", "g", "--config", "cfg.json"]).summary();
    let wrong = format!("{FIXTURE} wrong-id");
    let r = samix(d, &["eval", "--data", "g/source_val", "--labels", "g/source_val/labels.csv", "--oracle-cmd", &wrong]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    let uniform = format!("{FIXTURE} uniform");
    let s = samix(d, &["eval", "--data", "g/source_val", "--labels", "g/source_val/labels.csv", "--oracle-cmd", &uniform])
        .summary();
    assert_eq!(s["items"], 20);
}
