#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samix::image::Image;
use samix::{LabeledCorpus, PredictionOracle, Result};

pub const SAMIX: &str = env!("CARGO_BIN_EXE_samix");
pub const FIXTURE: &str = env!("CARGO_BIN_EXE_oracle-fixture");

pub const SMALL: &str = r#"{
  "synth": {"size": 16, "source_train": 60, "source_val": 20, "target_test": 20},
  "model": {"pool_grid": 8, "hidden": 8},
  "augment": {"samples_per_image": 8},
  "dodiss": {"max_samples": 10, "parseval_units": true},
  "train": {"epochs": 2, "learning_rate": 0.1, "supervise_mixed": true}
}"#;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn summary(&self) -> serde_json::Value {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        let line = self.stdout.lines().last().expect("summary line");
        serde_json::from_str(line).expect("summary is JSON")
    }
}

pub fn samix(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(SAMIX).current_dir(dir).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Runs every stage on freshly generated data under `dir`.
pub fn pipeline(dir: &Path, seed: &str) {
    fs::write(dir.join("cfg.json"), SMALL).unwrap();
    let c = ["--config", "cfg.json", "--seed", seed];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(&c).map(|s| s.to_string()).collect() };
    let steps: Vec<Vec<String>> = vec![
        with(&["gen-synth", "--out", "d"]),
        with(&["train", "--source", "d/source_train", "--labels", "d/source_train/labels.csv", "--out", "src.bin"]),
        with(&["augment-target", "--target", "d/target_train", "--out", "pool"]),
        with(&["distance-map", "--source", "d/source_train", "--target", "pool", "--out", "dist.samx"]),
        with(&[
            "dodiss", "--source", "d/source_train", "--labels", "d/source_train/labels.csv", "--distance",
            "dist.samx", "--checkpoint", "src.bin", "--out", "sens.samx",
        ]),
        with(&[
            "mix", "--source", "d/source_val", "--labels", "d/source_val/labels.csv", "--target", "pool",
            "--sensitivity", "sens.samx", "--checkpoint", "src.bin", "--out", "mixed",
        ]),
        with(&[
            "train", "--source", "d/source_train", "--labels", "d/source_train/labels.csv", "--target", "pool",
            "--sensitivity", "sens.samx", "--out", "samix.bin", "--log", "log.json",
        ]),
        vec!["heatmap".into(), "--map".into(), "sens.samx".into(), "--out".into(), "sens.png".into()],
    ];
    for args in steps {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let summary = samix(dir, &refs).summary();
        assert_eq!(summary["command"], args[0].as_str());
    }
}

pub fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> Image {
    let data = (0..h * w * c).map(|_| rng.random::<f64>()).collect();
    Image::new(h, w, c, data).unwrap()
}

/// Closed-form unit cosine at signed frequency `(i, j)`.
pub fn cosine_basis(i: i64, j: i64, h: usize, w: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..h * w)
        .map(|p| {
            let (r, c) = ((p / w) as f64, (p % w) as f64);
            (2.0 * PI * (i as f64 * r / h as f64 + j as f64 * c / w as f64)).cos()
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-class problem carried by a set of frequencies: class `y` adds
/// `(2y - 1) * amplitude` times the sum of the band's cosines.
pub struct BandProblem {
    pub size: usize,
    pub band: Vec<(i64, i64)>,
    bases: Vec<Vec<f64>>,
}

impl BandProblem {
    pub fn new(size: usize, band: Vec<(i64, i64)>) -> Self {
        let bases = band.iter().map(|&(i, j)| cosine_basis(i, j, size, size)).collect();
        Self { size, band, bases }
    }

    pub fn corpus(&self, n: usize, amplitude: f64, noise: f64, seed: u64) -> LabeledCorpus {
        let mut rng = rng(seed);
        let px = self.size * self.size;
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let y = k % 2;
            let s = if y == 1 { amplitude } else { -amplitude };
            let mut data: Vec<f64> = (0..px).map(|_| 0.5 + noise * (rng.random::<f64>() - 0.5)).collect();
            for b in &self.bases {
                for (d, v) in data.iter_mut().zip(b) {
                    *d += s * v;
                }
            }
            images.push(Image::new(self.size, self.size, 1, data).unwrap());
            labels.push(y);
        }
        LabeledCorpus::new(images, labels, 2).unwrap()
    }

    /// Band frequencies and their conjugates, as centered offsets.
    pub fn band_offsets(&self) -> Vec<usize> {
        let n = self.size as i64;
        let wrap = |v: i64| (v + n / 2).rem_euclid(n) as usize;
        let mut out = Vec::new();
        for &(i, j) in &self.band {
            out.push(wrap(i) * self.size + wrap(j));
            out.push(wrap(-i) * self.size + wrap(-j));
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl PredictionOracle for BandProblem {
    fn id(&self) -> String {
        "band-classifier".into()
    }

    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        Ok(batch
            .iter()
            .map(|img| {
                let centered: Vec<f64> = img.channel(0).iter().map(|v| v - 0.5).collect();
                let score: f64 = self.bases.iter().map(|b| dot(&centered, b)).sum();
                if score > 0.0 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                }
            })
            .collect())
    }
}

/// Relative error with both values near zero counted as agreement.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn brute_force_w1(a: &[f64], b: &[f64]) -> f64 {
    permutations(a.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(k, &j)| (a[k] - b[j]).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / a.len() as f64
}

/// Amplitude swap coded with a direct O(n^4) DFT.
pub fn naive_amplitude_swap(src: &[f64], tgt: &[f64], h: usize, w: usize) -> Vec<f64> {
    let dft = |x: &[f64]| -> Vec<(f64, f64)> {
        (0..h * w)
            .map(|f| {
                let (k, l) = (f / w, f % w);
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (p, &v)| {
                    let t = -2.0 * PI * ((k * (p / w)) as f64 / h as f64 + (l * (p % w)) as f64 / w as f64);
                    (re + v * t.cos(), im + v * t.sin())
                })
            })
            .collect()
    };
    let (fs, ft) = (dft(src), dft(tgt));
    let mixed: Vec<(f64, f64)> = fs
        .iter()
        .zip(&ft)
        .map(|(&(sr, si), &(tr, ti))| {
            let amp = (tr * tr + ti * ti).sqrt();
            let phase = si.atan2(sr);
            (amp * phase.cos(), amp * phase.sin())
        })
        .collect();
    (0..h * w)
        .map(|p| {
            let (r, c) = (p / w, p % w);
            mixed.iter().enumerate().fold(0.0, |acc, (f, &(re, im))| {
                let t = 2.0 * PI * (((f / w) * r) as f64 / h as f64 + ((f % w) * c) as f64 / w as f64);
                acc + re * t.cos() - im * t.sin()
            }) / (h * w) as f64
        })
        .collect()
}

/// Maximizer of `f` on the 1001-point grid over [0, 1].
pub fn grid_argmax(f: &dyn Fn(f64) -> f64) -> f64 {
    (0..=1000)
        .map(|k| k as f64 / 1000.0)
        .fold((0.0, f64::NEG_INFINITY), |(bx, by), x| {
            let y = f(x);
            if y > by {
                (x, y)
            } else {
                (bx, by)
            }
        })
        .0
}
