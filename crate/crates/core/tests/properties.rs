mod common;

use proptest::prelude::*;
use samix::augment::{flip, jigsaw, rotate, AugmentPlan, Flip};
use samix::distance::{distance_map, collect_amplitudes, wasserstein1};
use samix::dodiss::{dodiss_map, DodissConfig};
use samix::image::Image;
use samix::io::checkpoint;
use samix::io::mapfile::{MapFile, MapKind};
use samix::maps::SpectralMap;
use samix::model::{js_divergence, ModelSpec, ToyModel};
use samix::samix::mix_amplitude;
use samix::spectral::{fft2, fourier_basis, ifft2, perturb, FrequencyIndex, Sign};
use samix::{LabeledCorpus, PredictionOracle};

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..12, 2usize..12)
}

fn image_strategy() -> impl Strategy<Value = Image> {
    dims().prop_flat_map(|(h, w)| {
        proptest::collection::vec(0.0f64..1.0, h * w).prop_map(move |d| Image::new(h, w, 1, d).unwrap())
    })
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..100.0, 1..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_round_trip(img in image_strategy()) {
        let (h, w, _) = img.dims();
        let back = ifft2(&fft2(img.channel(0), h, w).unwrap()).unwrap();
        for (a, b) in img.channel(0).iter().zip(&back.values) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_amplitude_is_pixel_sum(img in image_strategy()) {
        let (h, w, _) = img.dims();
        let spec = fft2(img.channel(0), h, w).unwrap();
        let sum: f64 = img.channel(0).iter().sum();
        prop_assert!((spec.amplitude_at(FrequencyIndex::DC) - sum.abs()).abs() < 1e-9);
    }

    #[test]
    fn amplitude_is_hermitian(img in image_strategy()) {
        let (h, w, _) = img.dims();
        let spec = fft2(img.channel(0), h, w).unwrap();
        let map = SpectralMap::new(h, w, spec.amplitude().to_vec()).unwrap();
        prop_assert!(map.hermitian_defect() < 1e-9);
    }

    #[test]
    fn amplitude_invariant_under_circular_shift(img in image_strategy(), dr in 0usize..12, dc in 0usize..12) {
        let (h, w, _) = img.dims();
        let src = img.channel(0);
        let shifted: Vec<f64> = (0..h * w)
            .map(|p| src[((p / w + dr) % h) * w + (p % w + dc) % w])
            .collect();
        let a = fft2(src, h, w).unwrap();
        let b = fft2(&shifted, h, w).unwrap();
        for (x, y) in a.amplitude().iter().zip(b.amplitude()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn basis_is_unit_real_cosine((h, w) in dims(), fi in 0.0f64..1.0, fj in 0.0f64..1.0) {
        let i = (fi * h as f64) as i64 - (h / 2) as i64;
        let j = (fj * w as f64) as i64 - (w / 2) as i64;
        let u = fourier_basis(FrequencyIndex::new(i, j), h, w).unwrap();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-9);
        let reference = common::cosine_basis(i, j, h, w);
        for (a, b) in u.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn perturb_is_linear_and_odd(img in image_strategy(), m in 0.0f64..5.0, fi in 0.0f64..1.0) {
        let h = img.height();
        let idx = FrequencyIndex::new((fi * h as f64) as i64 - (h / 2) as i64, 0);
        let plus = perturb(&img, idx, m, Sign::Plus).unwrap();
        let minus = perturb(&img, idx, m, Sign::Minus).unwrap();
        let delta: f64 = plus.data().iter().zip(img.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((delta - m).abs() < 1e-9);
        for ((p, q), x) in plus.data().iter().zip(minus.data()).zip(img.data()) {
            prop_assert!((q - (2.0 * x - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn w1_equal_length_is_mean_sorted_difference(
        (a, b) in (1usize..20).prop_flat_map(|n| (
            proptest::collection::vec(0.0f64..100.0, n),
            proptest::collection::vec(0.0f64..100.0, n),
        ))
    ) {
        let n = a.len() as f64;
        let expected: f64 = sorted(a.clone()).iter().zip(&sorted(b.clone())).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
        prop_assert_eq!(wasserstein1(&a, &b).unwrap(), expected);
    }

    #[test]
    fn w1_symmetric_nonnegative_and_zero_on_self(a in samples(), b in samples()) {
        let ab = wasserstein1(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w1_of_scaled_copy_is_mean(a in samples()) {
        let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!((wasserstein1(&a, &doubled).unwrap() - mean).abs() < 1e-9);
    }

    #[test]
    fn mix_is_nonnegative_and_linear(
        v in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..1.0), 1..30),
        lambda in 0.0f64..1.0,
        k in 0.0f64..3.0,
    ) {
        let a_s: Vec<f64> = v.iter().map(|t| t.0).collect();
        let a_t: Vec<f64> = v.iter().map(|t| t.1).collect();
        let m: Vec<f64> = v.iter().map(|t| t.2).collect();
        let out = mix_amplitude(&a_s, &a_t, &m, lambda).unwrap();
        prop_assert!(out.iter().all(|x| *x >= 0.0));
        let scaled_s: Vec<f64> = a_s.iter().map(|x| k * x).collect();
        let scaled_t: Vec<f64> = a_t.iter().map(|x| k * x).collect();
        let scaled = mix_amplitude(&scaled_s, &scaled_t, &m, lambda).unwrap();
        for (x, y) in out.iter().zip(&scaled) {
            prop_assert!((k * x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn js_bounded_and_symmetric(p in proptest::collection::vec(0.0f64..1.0, 2..6), q in proptest::collection::vec(0.0f64..1.0, 2..6)) {
        let n = p.len().min(q.len());
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| (x + 1e-9 / n as f64) / s).collect::<Vec<_>>()
        };
        let (p, q) = (norm(&p[..n]), norm(&q[..n]));
        let pq = js_divergence(&p, &q).unwrap();
        prop_assert!((-1e-15..=2f64.ln() + 1e-12).contains(&pq));
        prop_assert!((pq - js_divergence(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn geometric_transforms_preserve_intensities(n in 2usize..10, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let img = common::random_image(n, n, 1, &mut rng);
        let base = sorted(img.data().to_vec());
        for q in 0..4u8 {
            prop_assert_eq!(&sorted(rotate(&img, q).unwrap().data().to_vec()), &base);
        }
        for axis in [Flip::Horizontal, Flip::Vertical] {
            prop_assert_eq!(&sorted(flip(&img, axis).data().to_vec()), &base);
        }
        if n % 2 == 0 {
            prop_assert_eq!(&sorted(jigsaw(&img, 2, &mut rng).unwrap().data().to_vec()), &base);
        }
    }

    #[test]
    fn mapfile_round_trip_is_byte_identical(
        (h, w, values) in dims().prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(-1e6f64..1e6, h * w))),
        key in "[a-z_]{1,8}",
        value in "[ -~]{0,16}",
    ) {
        let f = MapFile {
            kind: MapKind::Sensitivity,
            map: SpectralMap::new(h, w, values).unwrap(),
            metadata: vec![(key, value)],
        };
        let bytes = f.to_bytes().unwrap();
        let back = MapFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical(hidden in 1usize..6, classes in 2usize..4, seed in any::<u64>()) {
        let spec = ModelSpec { height: 4, width: 4, channels: 1, pool_grid: Some(2), hidden, classes };
        let model = ToyModel::new(spec, seed).unwrap();
        let bytes = checkpoint::to_bytes(&model).unwrap();
        let back = checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(checkpoint::to_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn distance_map_is_hermitian_and_nonnegative() {
    let mut rng = common::rng(4);
    let a: Vec<Image> = (0..5).map(|_| common::random_image(7, 6, 3, &mut rng)).collect();
    let b: Vec<Image> = (0..3).map(|_| common::random_image(7, 6, 3, &mut rng)).collect();
    let d = distance_map(&collect_amplitudes(&a).unwrap(), &collect_amplitudes(&b).unwrap()).unwrap();
    assert_eq!(d.map.hermitian_defect(), 0.0);
    assert!(d.map.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
    assert_eq!((d.source_samples, d.target_samples), (15, 9));
}

#[test]
fn dodiss_is_deterministic_bounded_and_symmetric() {
    let mut rng = common::rng(9);
    let images: Vec<Image> = (0..24).map(|_| common::random_image(8, 8, 1, &mut rng)).collect();
    let labels: Vec<usize> = (0..24).map(|k| k % 2).collect();
    let corpus = LabeledCorpus::new(images.clone(), labels, 2).unwrap();
    let spec = ModelSpec { height: 8, width: 8, channels: 1, pool_grid: None, hidden: 6, classes: 2 };
    let model = ToyModel::new(spec, 1).unwrap();
    let target: Vec<Image> = images.iter().map(|i| rotate(i, 1).unwrap()).collect();
    let d = distance_map(&collect_amplitudes(&images).unwrap(), &collect_amplitudes(&target).unwrap()).unwrap();
    let cfg = DodissConfig { seed: 3, batch_size: 5, ..Default::default() };
    let a = dodiss_map(&model, &corpus, &d, &cfg).unwrap();
    let b = dodiss_map(&model, &corpus, &d, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a.map.hermitian_defect(), 0.0);
    assert!(model.id().starts_with("toy-model"));
}

#[test]
fn augmentation_is_seeded() {
    let mut rng = common::rng(2);
    let shots = vec![common::random_image(9, 9, 3, &mut rng)];
    let plan = AugmentPlan { samples_per_image: 12, seed: 5, ..Default::default() };
    let a = samix::augment::augment_target(&shots, &plan).unwrap();
    let b = samix::augment::augment_target(&shots, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 12);
    assert!(a.iter().all(|i| i.dims() == (9, 9, 3)));
}
