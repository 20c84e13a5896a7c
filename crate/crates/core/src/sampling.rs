//! Random streams and stratified sample patterns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::Vec3;

pub type PixelRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one pixel of one frame at one iteration.
pub fn pixel_rng(seed: u64, iteration: u64, frame: u64, pixel: u64) -> PixelRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed) ^ splitmix(iteration.wrapping_add(0x5151)));
    rng.set_stream((frame << 32) ^ pixel);
    rng
}

/// `n` points in `[0,1)²`: a jittered grid when `n` is a perfect square,
/// Latin-hypercube otherwise.
pub fn stratified_2d(n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let k = (n as f64).sqrt().round() as usize;
    if k * k == n {
        let inv = 1.0 / k as f64;
        let mut out = Vec::with_capacity(n);
        for i in 0..k {
            for j in 0..k {
                out.push(((i as f64 + rng.gen::<f64>()) * inv, (j as f64 + rng.gen::<f64>()) * inv));
            }
        }
        return out;
    }
    latin_hypercube(n, rng)
}

/// `n` points in `[0,1)²` with exactly one point per `1/n` slab along each
/// axis. The first axis is a regular lattice under one random shift
/// (systematic sampling), which beats independent jitter when the first
/// coordinate walks a space-filling curve.
pub fn latin_hypercube(n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let inv = 1.0 / n as f64;
    let mut ys: Vec<usize> = (0..n).collect();
    ys.shuffle(rng);
    let shift: f64 = rng.gen();
    (0..n)
        .map(|i| ((i as f64 + shift) * inv, (ys[i] as f64 + rng.gen::<f64>()) * inv))
        .collect()
}

/// Cosine-weighted hemisphere direction around +z via the concentric disk
/// mapping.
pub fn cosine_hemisphere(u: (f64, f64)) -> Vec3 {
    let (a, b) = (2.0 * u.0 - 1.0, 2.0 * u.1 - 1.0);
    let (r, phi) = if a == 0.0 && b == 0.0 {
        (0.0, 0.0)
    } else if a.abs() > b.abs() {
        (a, std::f64::consts::FRAC_PI_4 * (b / a))
    } else {
        (b, std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (a / b))
    };
    let (x, y) = (r * phi.cos(), r * phi.sin());
    Vec3::new(x, y, (1.0 - x * x - y * y).max(0.0).sqrt())
}
