//! Seeded random fields used by tests, suites and ensembles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{spectral, ScalarField, TorusGrid, VelocityField};
use crate::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sub-seed for ensemble member `index`, independent of execution order.
pub fn member_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean-zero real field built from the modes `0 < max|k_j| ≤ kmax` with
/// random phases and amplitudes `~ 1/|k|`, normalized to `max |f| = 1`.
pub fn band_limited_field(grid: TorusGrid, kmax: usize, seed: u64) -> ScalarField {
    let mut rng = rng(seed);
    let n = grid.n();
    let kmax = kmax.min(spectral::dealias_cutoff(n) as usize) as i64;
    let mut spec = vec![Complex64::default(); grid.len()];
    let to_index = |k: i64| k.rem_euclid(n as i64) as usize;
    let (lo2, hi2) = if grid.dim() == 1 { (0, 0) } else { (-kmax, kmax) };
    for k1 in 0..=kmax {
        for k2 in lo2..=hi2 {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            let amp: f64 = rng.gen_range(0.2..1.0) / ((k1 * k1 + k2 * k2) as f64).sqrt();
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let c = Complex64::from_polar(0.5 * amp, phase);
            let (i, j) = (to_index(k1), to_index(k2));
            let (mi, mj) = (to_index(-k1), to_index(-k2));
            if grid.dim() == 1 {
                spec[i] += c;
                spec[mi] += c.conj();
            } else {
                spec[i * n + j] += c;
                spec[mi * n + mj] += c.conj();
            }
        }
    }
    let f = ScalarField::from_spectrum(grid, &spec);
    let m = f.max_abs();
    f.scaled(1.0 / m)
}

/// Divergence-free drift from a random stream function, scaled so that
/// `max |v| = vmax` on the grid.
pub fn random_velocity(grid: TorusGrid, kmax: usize, vmax: f64, seed: u64) -> Result<VelocityField> {
    let stream = band_limited_field(grid, kmax, seed);
    let v = crate::field::make_divfree_velocity(&stream)?;
    let m = v.max_abs();
    let scaled = v.scaled(vmax / m);
    // re-measure μ for the rescaled field
    VelocityField::from_components(grid, scaled.components().to_vec())
}
