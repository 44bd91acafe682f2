//! Synthetic, license-free fixtures: textured carrier images and
//! fingerprint-like ridge patterns with per-user parameters and per-sample
//! distortions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::GrayImage;

const CARRIER_DOMAIN: u64 = 1;
const FINGER_DOMAIN: u64 = 2;
const SAMPLE_DOMAIN: u64 = 3;

fn rng_for(domain: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, v) in seed.chunks_mut(8).zip([domain, a, b, c]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Smooth random field: bilinear-interpolated lattice noise over octaves.
fn lattice_noise(rng: &mut impl Rng, w: usize, h: usize, cell: usize) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = y / cell;
        let fy = smooth((y % cell) as f64 / cell as f64);
        for x in 0..w {
            let gx = x / cell;
            let fx = smooth((x % cell) as f64 / cell as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - fx) + g(gx + 1, gy) * fx;
            let bottom = g(gx, gy + 1) * (1.0 - fx) + g(gx + 1, gy + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Natural-looking carrier: multi-octave shading and texture plus fine
/// grain, stretched into `[48, 208]`.
pub fn carrier(size: usize, seed: u64) -> GrayImage {
    let mut rng = rng_for(CARRIER_DOMAIN, seed, size as u64, 0);
    let mut field = vec![0.0; size * size];
    for (cell, amp) in [(128, 1.0), (64, 0.6), (32, 0.4), (16, 0.25), (8, 0.15), (4, 0.08)] {
        let cell = cell.min(size.max(2) / 2).max(1);
        for (f, n) in field.iter_mut().zip(lattice_noise(&mut rng, size, size, cell)) {
            *f += amp * n;
        }
    }
    let (lo, hi) = field
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let grain = Normal::new(0.0, 3.0).unwrap();
    let data = field
        .iter()
        .map(|&v| {
            let base = 52.0 + 152.0 * (v - lo) / (hi - lo).max(1e-12);
            (base + grain.sample(&mut rng)).round().clamp(48.0, 208.0) as u8
        })
        .collect();
    GrayImage::new(size, size, data).unwrap()
}

/// Per-finger pattern parameters.
#[derive(Debug, Clone, Copy)]
pub struct FingerParams {
    pub frequency: f64,
    pub orientation: f64,
    pub core: (f64, f64),
    pub swirl: f64,
    pub wave: (f64, f64, f64),
    pub phase: f64,
    pub ellipse: (f64, f64),
}

impl FingerParams {
    pub fn random(user: u64, seed: u64) -> Self {
        let mut rng = rng_for(FINGER_DOMAIN, seed, user, 0);
        Self {
            frequency: rng.random_range(0.07..0.13),
            orientation: rng.random_range(0.0..PI),
            core: (rng.random_range(0.35..0.65), rng.random_range(0.3..0.6)),
            swirl: rng.random_range(0.3..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
            wave: (
                rng.random_range(0.2..0.6),
                rng.random_range(1.0..3.0),
                rng.random_range(0.0..2.0 * PI),
            ),
            phase: rng.random_range(0.0..2.0 * PI),
            ellipse: (rng.random_range(0.36..0.46), rng.random_range(0.42..0.49)),
        }
    }
}

/// Capture `sample` of finger `user` drawn from corpus `seed`.
pub fn fingerprint_sample(user: u64, sample: u64, seed: u64, size: usize) -> GrayImage {
    let params = FingerParams::random(user, seed);
    let mut rng = rng_for(SAMPLE_DOMAIN, seed, user, sample);
    fingerprint(&params, size, &mut rng)
}

/// One capture of a finger: ridge pattern under a small rigid motion,
/// elastic jitter, gain change and sensor noise.
pub fn fingerprint(params: &FingerParams, size: usize, rng: &mut impl Rng) -> GrayImage {
    let rot: f64 = rng.random_range(-0.08..0.08);
    let (tx, ty): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let gain: f64 = rng.random_range(0.85..1.15);
    let jitter: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(1.0..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let noise = Normal::new(0.0, 10.0).unwrap();

    let s = size as f64;
    let (cx, cy) = (params.core.0 * s, params.core.1 * s);
    let (rs, rc) = rot.sin_cos();
    GrayImage::from_fn(size, size, |x, y| {
        let (mut u, mut v) = (x as f64 - s / 2.0 - tx, y as f64 - s / 2.0 - ty);
        (u, v) = (rc * u + rs * v, -rs * u + rc * v);
        for &(amp, freq, px, py) in &jitter {
            u += amp * (2.0 * PI * freq * v / s + px).sin();
            v += amp * (2.0 * PI * freq * u / s + py).sin();
        }
        let (u, v) = (u + s / 2.0, v + s / 2.0);
        let (ex, ey) = (
            (u - s / 2.0) / (params.ellipse.0 * s),
            (v - s / 2.0) / (params.ellipse.1 * s),
        );
        let r2 = ex * ex + ey * ey;
        let theta = params.orientation
            + 0.5 * params.swirl * (v - cy).atan2(u - cx)
            + params.wave.0 * (2.0 * PI * params.wave.1 * v / s + params.wave.2).sin();
        let ridge = (2.0 * PI * params.frequency * (u * theta.cos() + v * theta.sin()) + params.phase).cos();
        let inside = (1.0 - r2).clamp(0.0, 0.15) / 0.15;
        let value = 200.0 - inside * gain * (70.0 + 60.0 * ridge);
        (value + noise.sample(rng)).round().clamp(0.0, 255.0) as u8
    })
}
