mod common;

use std::fs;
use std::time::Duration;

use samix::image::Image;
use samix::io::dataset::{load_corpus, load_images, save_corpus, save_images, save_png};
use samix::io::heatmap::{export_heatmap, heatmap_pixels, sidecar_path};
use samix::io::mapfile::{MapFile, MapKind};
use samix::io::protocol::{serve, wire_rounded, SubprocessOracle};
use samix::maps::{SensitivityMap, SpectralMap};
use samix::model::{ModelSpec, ToyModel};
use samix::{Error, LabeledCorpus, PredictionOracle};

const FIXTURE: &str = env!("CARGO_BIN_EXE_oracle-fixture");
const SAMIX: &str = env!("CARGO_BIN_EXE_samix");

fn fixture(mode: &str) -> SubprocessOracle {
    SubprocessOracle::spawn(&[FIXTURE.to_string(), mode.to_string()], 1).unwrap()
}

fn quantized(h: usize, w: usize, c: usize, seed: u64) -> Image {
    let mut rng = common::rng(seed);
    let img = common::random_image(h, w, c, &mut rng);
    Image::new(h, w, c, img.data().iter().map(|v| (v * 255.0).round() / 255.0).collect()).unwrap()
}

#[test]
fn png_round_trip_and_normalization() {
    let dir = tempfile::tempdir().unwrap();
    let gray = Image::new(2, 2, 1, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
    save_png(&gray, &dir.path().join("b.png")).unwrap();
    let rgb = quantized(2, 2, 3, 1);
    let rgb_dir = dir.path().join("rgb");
    save_images(&[rgb.clone()], &rgb_dir, "x").unwrap();
    let set = load_images(&rgb_dir).unwrap();
    assert_eq!(set.names, vec!["x_00000.png"]);
    for (a, b) in set.images[0].data().iter().zip(rgb.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    let back = load_images(dir.path()).unwrap();
    assert_eq!(back.images[0].data()[0], 0.0);
    assert_eq!(back.images[0].data()[1], 1.0);
}

#[test]
fn corpus_ordering_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let imgs: Vec<Image> = (0..3).map(|k| quantized(4, 4, 1, k)).collect();
    let corpus = LabeledCorpus::new(imgs.clone(), vec![1, 0, 1], 2).unwrap();
    let csv = save_corpus(&corpus, &d.join("c"), "im").unwrap();
    let (names, loaded) = load_corpus(&d.join("c"), &csv).unwrap();
    assert_eq!(names, vec!["im_00000.png", "im_00001.png", "im_00002.png"]);
    assert_eq!(loaded.labels(), &[1, 0, 1]);
    assert_eq!(loaded.images().len(), 3);

    let empty = d.join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(load_images(&empty).is_err());

    let write = |name: &str, body: &str| {
        let p = d.join(name);
        fs::write(&p, body).unwrap();
        p
    };
    let missing_file = write("l1.csv", "filename,label\nim_00000.png,0\nim_00001.png,0\nim_00002.png,1\nnope.png,1\n");
    assert!(load_corpus(&d.join("c"), &missing_file).unwrap_err().to_string().contains("nope.png"));
    let missing_label = write("l2.csv", "im_00000.png,0\nim_00001.png,1\n");
    assert!(load_corpus(&d.join("c"), &missing_label).unwrap_err().to_string().contains("im_00002.png"));
    let duplicate = write("l3.csv", "im_00000.png,0\nim_00000.png,1\nim_00001.png,1\nim_00002.png,1\n");
    assert!(load_corpus(&d.join("c"), &duplicate).is_err());

    save_png(&quantized(5, 4, 1, 9), &d.join("c").join("zz.png")).unwrap();
    let err = load_images(&d.join("c")).unwrap_err().to_string();
    assert!(err.contains("zz.png"), "{err}");
}

#[test]
fn heatmap_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.png");
    export_heatmap(&SpectralMap::constant(3, 3, 0.0), &out).unwrap();
    let img = load_images(dir.path()).unwrap().images.remove(0);
    assert!(img.data().iter().all(|v| (v - 128.0 / 255.0).abs() < 1e-12));
    assert_eq!(fs::read_to_string(sidecar_path(&out)).unwrap(), "min=0.0\nmax=0.0\n");

    let two = SpectralMap::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(heatmap_pixels(&two).unwrap().0, vec![0, 255, 255, 0]);

    // Rank order survives the 8-bit rendering.
    let mut rng = common::rng(3);
    let values: Vec<f64> = (0..64).map(|k| k as f64 * 3.7 + rand::Rng::random::<f64>(&mut rng)).collect();
    let mut shuffled = values.clone();
    rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
    let map = SpectralMap::new(8, 8, shuffled.clone()).unwrap();
    let (pixels, range) = heatmap_pixels(&map).unwrap();
    assert_eq!((range.min, range.max), map.min_max());
    for a in 0..64 {
        for b in 0..64 {
            if shuffled[a] < shuffled[b] {
                assert!(pixels[a] <= pixels[b]);
            }
        }
    }
}

#[test]
fn mapfile_rejects_corruption_and_wrong_kind() {
    let s = SensitivityMap::uniform(4, 4, 0.25);
    let bytes = MapFile::from_sensitivity(&s).to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"SAMX");
    assert_eq!(bytes[6], 2);
    assert!(MapFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(MapFile::from_bytes(&bytes[..20]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(MapFile::from_bytes(&bad).is_err());
    let f = MapFile::from_bytes(&bytes).unwrap();
    assert_eq!(f.kind, MapKind::Sensitivity);
    assert!(f.clone().into_distance().is_err());
    assert_eq!(f.into_sensitivity().unwrap(), s);
}

#[test]
fn fixture_uniform_child() {
    let oracle = SubprocessOracle::spawn(&[FIXTURE.to_string(), "uniform".into(), "3".into()], 2).unwrap();
    let batch: Vec<Image> = (0..5).map(|k| quantized(4, 3, 3, k)).collect();
    let probs = oracle.predict(&batch).unwrap();
    assert_eq!(probs.len(), 5);
    assert!(probs.iter().flatten().all(|p| *p == 1.0 / 3.0));
    assert!((oracle.loss(&batch, &[0, 1, 2, 0, 1]).unwrap() - 3f64.ln()).abs() < 1e-12);
    assert!(oracle.id().starts_with("subprocess:"));
}

#[test]
fn fixture_failures_surface_as_protocol_errors() {
    let batch = vec![quantized(4, 4, 1, 0)];
    for mode in ["wrong-id", "error", "garbage", "exit"] {
        let err = fixture(mode).predict(&batch).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{mode}: {err}");
    }
    let hang = fixture("hang").with_timeout(Duration::from_millis(300));
    let err = hang.predict(&batch).unwrap_err();
    assert!(err.to_string().contains("timed out") || matches!(err, Error::Protocol(_)), "{err}");
    assert!(SubprocessOracle::spawn_command("/definitely/not/a/binary", 1).is_err());
}

#[test]
fn served_model_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec { height: 8, width: 8, channels: 3, pool_grid: Some(4), hidden: 7, classes: 3 };
    let model = ToyModel::new(spec, 12).unwrap();
    let ckpt = dir.path().join("m.bin");
    samix::io::checkpoint::save(&model, &ckpt).unwrap();
    let argv = [SAMIX.to_string(), "serve-model".into(), "--checkpoint".into(), ckpt.display().to_string()];
    let remote = SubprocessOracle::spawn(&argv, 2).unwrap();

    let mut rng = common::rng(4);
    let batch: Vec<Image> = (0..6).map(|_| common::random_image(8, 8, 3, &mut rng)).collect();
    let rounded = wire_rounded(&batch).unwrap();
    assert_eq!(remote.predict(&batch).unwrap(), model.predict(&rounded).unwrap());
    let labels = [0, 1, 2, 2, 1, 0];
    assert_eq!(remote.loss(&batch, &labels).unwrap(), model.loss(&rounded, &labels).unwrap());
    for (a, b) in remote.predict(&batch).unwrap().iter().flatten().zip(model.predict(&batch).unwrap().iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn in_process_serve_loop() {
    let spec = ModelSpec { height: 4, width: 4, channels: 1, pool_grid: None, hidden: 3, classes: 2 };
    let model = ToyModel::new(spec, 1).unwrap();
    let (shape, data) = samix::io::protocol::encode_batch(&[quantized(4, 4, 1, 2)]).unwrap();
    let input = format!(
        "{}\nnot json\n{}\n",
        serde_json::json!({"id": 7, "op": "predict", "shape": shape, "data": data}),
        serde_json::json!({"id": 8, "op": "loss", "shape": shape, "data": data}),
    );
    let mut out = Vec::new();
    serve(&model, input.as_bytes(), &mut out).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["id"], 7);
    assert_eq!(lines[0]["probs"].as_array().unwrap().len(), 1);
    assert!(lines[1]["error"].is_string());
    assert_eq!(lines[2]["id"], 8);
    assert!(lines[2]["error"].is_string());
}
