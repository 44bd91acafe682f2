use biomark_core::attacks::{apply_attack, AttackKind, AttackSpec};
use biomark_core::imaging::GrayImage;
use biomark_core::synth;
use proptest::prelude::*;

#[test]
fn gaussian_noise_variance() {
    let img = GrayImage::filled(512, 512, 128);
    let out = apply_attack(&img, &AttackSpec::seeded(AttackKind::GaussianNoise, 8.0, 5).unwrap()).unwrap();
    let n = out.data().len() as f64;
    let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = out.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - 64.0).abs() <= 6.4, "variance {var}");
}

#[test]
fn salt_pepper_hit_rate() {
    let img = GrayImage::filled(512, 512, 100);
    let out = apply_attack(&img, &AttackSpec::seeded(AttackKind::SaltPepper, 0.05, 9).unwrap()).unwrap();
    let hits = out.data().iter().filter(|&&v| v != 100).count() as f64 / (512.0 * 512.0);
    assert!((hits - 0.05).abs() < 0.003, "{hits}");
    assert!(out.data().iter().all(|&v| v == 0 || v == 100 || v == 255));
}

#[test]
fn jpeg_error_shrinks_with_quality() {
    let img = synth::carrier(256, 4);
    let err = |q: f64| {
        let out = apply_attack(&img, &AttackSpec::new(AttackKind::Jpeg, q).unwrap()).unwrap();
        img.data()
            .iter()
            .zip(out.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
    };
    let errs: Vec<f64> = [20.0, 50.0, 80.0, 95.0].iter().map(|&q| err(q)).collect();
    assert!(errs.windows(2).all(|w| w[0] > w[1]), "{errs:?}");
}

fn kind_strategy() -> impl Strategy<Value = AttackSpec> {
    (0usize..7, 0.0f64..1.0, any::<u64>()).prop_map(|(k, t, seed)| {
        let kind = AttackKind::ALL[k];
        let level = match kind {
            AttackKind::Contrast => 0.25 + 1.75 * t,
            AttackKind::Luminance => -64.0 + 128.0 * t,
            AttackKind::Crop => 0.05 + 0.95 * t,
            AttackKind::Tamper => t,
            AttackKind::GaussianNoise => 32.0 * t,
            AttackKind::SaltPepper => 0.1 * t,
            AttackKind::Jpeg => 10.0 + 90.0 * t,
        };
        AttackSpec::seeded(kind, level, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attacks_are_deterministic_and_keep_dimensions(spec in kind_strategy(), w in 8usize..80, h in 8usize..80, s in any::<u64>()) {
        let img = GrayImage::from_fn(w, h, |x, y| ((x * 31 + y * 17) as u64 ^ s) as u8);
        let a = apply_attack(&img, &spec).unwrap();
        prop_assert_eq!((a.width(), a.height()), (w, h));
        prop_assert_eq!(&a, &apply_attack(&img, &spec).unwrap());
    }

    #[test]
    fn textual_form_roundtrips(spec in kind_strategy()) {
        let back: AttackSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back.kind, spec.kind);
        prop_assert_eq!(back.level, spec.level);
        if matches!(spec.kind, AttackKind::Tamper | AttackKind::GaussianNoise | AttackKind::SaltPepper) {
            prop_assert_eq!(back.rng_seed, spec.rng_seed);
        }
    }
}
