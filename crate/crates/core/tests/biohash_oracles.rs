use biomark_core::biohash::{
    biohash, generate_projection, hamming, verify, BioCode, ProjectionStream, Seed, PRNG_DOMAIN,
};
use biomark_core::fingercode::FingerCode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Reference xoshiro256** straight from its published definition.
struct Xoshiro([u64; 4]);

impl Xoshiro {
    fn next(&mut self) -> u64 {
        let s = &mut self.0;
        let out = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        out
    }
}

fn oracle_stream(seed: &Seed) -> impl FnMut() -> f64 {
    let digest = Sha256::new()
        .chain_update(PRNG_DOMAIN)
        .chain_update(seed.as_bytes())
        .finalize();
    let mut state = [0u64; 4];
    for (i, w) in state.iter_mut().enumerate() {
        *w = u64::from_le_bytes(digest[8 * i..8 * i + 8].try_into().unwrap());
    }
    let mut rng = Xoshiro(state);
    move || (rng.next() >> 11) as f64 / 9007199254740992.0 * 2.0 - 1.0
}

/// Textbook classical Gram-Schmidt on the first `m` draws of length `n`.
fn oracle_projection(seed: &Seed, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut draw = oracle_stream(seed);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for _ in 0..m {
        let v: Vec<f64> = (0..n).map(|_| draw()).collect();
        let mut u = v.clone();
        for b in &out {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for k in 0..n {
                u[k] -= c * b[k];
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(u.iter().map(|x| x / norm).collect());
    }
    out
}

fn documented_seed() -> Seed {
    Seed::from_hex("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f").unwrap()
}

#[test]
fn stream_matches_reference_generator() {
    let seed = documented_seed();
    let mut ours = ProjectionStream::new(&seed);
    let mut reference = oracle_stream(&seed);
    for _ in 0..1000 {
        assert_eq!(ours.next_unit().to_bits(), reference().to_bits());
    }
}

#[test]
fn small_projection_matches_independent_gram_schmidt() {
    let seed = documented_seed();
    let ours = generate_projection(&seed, 4, 2).unwrap();
    let oracle = oracle_projection(&seed, 4, 2);
    for (a, b) in ours.iter().zip(&oracle) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{ours:?} vs {oracle:?}");
        }
    }
}

#[test]
fn small_biohash_matches_explicit_dot_products() {
    let seed = documented_seed();
    let v = oracle_projection(&seed, 4, 2);
    let f = [1.0, 2.0, 3.0, 4.0];
    let expected: Vec<bool> = v
        .iter()
        .map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() >= 0.0)
        .collect();
    let code = biohash(&FingerCode::new(f.to_vec()), &seed, 2, 0.0).unwrap();
    assert_eq!(code.bits(), expected.as_slice());
}

#[test]
fn golden_biocode_is_frozen() {
    // Pinned output: any change to the PRNG, its seeding or the
    // orthonormalisation order shows up here on every platform.
    let fc = FingerCode::new((0..512).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect());
    let code = biohash(&fc, &documented_seed(), 256, 0.0).unwrap();
    assert_eq!(code.to_hex(), GOLDEN);
}

// Also reproduced by a NumPy re-implementation (smallest |projection| 0.0069,
// far from any rounding boundary).
const GOLDEN: &str = "b0d70773e5c22235456f5b81d29f46f509043fd0871d2465e07deffe84e22e01";

#[test]
fn hamming_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a: Vec<bool> = (0..256).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..256).map(|_| rng.random()).collect();
        let mut naive = 0;
        for i in 0..256 {
            if a[i] != b[i] {
                naive += 1;
            }
        }
        assert_eq!(hamming(&BioCode::from_bits(a), &BioCode::from_bits(b)).unwrap(), naive);
    }
}

#[test]
fn verify_boundary_accepts() {
    let a = BioCode::from_bits(vec![false; 256]);
    let mut bits = vec![false; 256];
    bits[..64].iter_mut().for_each(|b| *b = true);
    let b = BioCode::from_bits(bits);
    let v = verify(&a, &b, 0.25).unwrap();
    assert!(v.accepted);
    assert_eq!(v.distance, 0.25);
    assert!(!verify(&a, &a.complement(), 0.99).unwrap().accepted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_scaling_keeps_the_code(seed in any::<[u8; 32]>(), c in 0.01f64..100.0, fseed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(fseed);
        let f: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let scaled: Vec<f64> = f.iter().map(|x| x * c).collect();
        let seed = Seed(seed);
        let a = biohash(&FingerCode::new(f), &seed, 32, 0.0).unwrap();
        let b = biohash(&FingerCode::new(scaled), &seed, 32, 0.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projections_are_orthonormal(seed in any::<[u8; 32]>(), n in 1usize..48, frac in 0.0f64..1.0) {
        let m = ((n as f64 * frac) as usize).max(1);
        let v = generate_projection(&Seed(seed), n, m).unwrap();
        for i in 0..m {
            for j in 0..m {
                let d: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - expected).abs() <= 1e-8);
            }
        }
    }
}
