//! FFT plumbing for periodic grids.
//!
//! Spectra are stored in standard FFT ordering and normalized so that
//! `f(x) = Σ_ξ f̂(ξ) e^{iξ·x}`, i.e. the forward transform divides by `Nⁿ`.
//! With the Riemann measure `hⁿ` this gives Parseval as
//! `hⁿ Σ|f|² = V Σ|f̂|²`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusGrid;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn transform_in_place(grid: &TorusGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    match grid.dim() {
        1 => fft.process_with_scratch(data, &mut scratch),
        _ => {
            // rows are contiguous along axis 1
            fft.process_with_scratch(data, &mut scratch);
            let mut col = vec![Complex64::default(); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                fft.process_with_scratch(&mut col, &mut scratch);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
    }
}

/// Normalized forward transform of real grid values.
pub fn forward(grid: &TorusGrid, values: &[f64]) -> Vec<Complex64> {
    debug_assert_eq!(values.len(), grid.len());
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_in_place(grid, &mut data, false);
    let scale = 1.0 / grid.len() as f64;
    for c in &mut data {
        *c *= scale;
    }
    data
}

/// Inverse transform returning the real part.
pub fn inverse_real(grid: &TorusGrid, spectrum: &[Complex64]) -> Vec<f64> {
    debug_assert_eq!(spectrum.len(), grid.len());
    let mut data = spectrum.to_vec();
    transform_in_place(grid, &mut data, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Signed integer frequency of FFT index `k` on `n` points: `{−n/2, …, n/2−1}`.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Integer lattice frequencies for every flat spectral index.
pub fn integer_modes(grid: &TorusGrid) -> Vec<[i64; 2]> {
    let n = grid.n();
    match grid.dim() {
        1 => (0..n).map(|k| [signed_index(k, n), 0]).collect(),
        _ => (0..n * n)
            .map(|idx| [signed_index(idx / n, n), signed_index(idx % n, n)])
            .collect(),
    }
}

/// Physical wavevectors ξ = (2π/Lbox)·k for every flat spectral index.
pub fn wavevectors(grid: &TorusGrid) -> Vec<[f64; 2]> {
    let dk = 2.0 * PI / grid.lbox();
    integer_modes(grid)
        .into_iter()
        .map(|[a, b]| [a as f64 * dk, b as f64 * dk])
        .collect()
}

/// Largest integer mode kept by the 2/3 rule: products of two kept fields
/// never alias back into the kept band.
pub fn dealias_cutoff(n: usize) -> i64 {
    ((n - 1) / 3) as i64
}

/// Mask of modes kept by the 2/3 rule (box truncation per axis).
pub fn dealias_mask(grid: &TorusGrid) -> Vec<bool> {
    let kc = dealias_cutoff(grid.n());
    integer_modes(grid)
        .into_iter()
        .map(|[a, b]| a.abs() <= kc && b.abs() <= kc)
        .collect()
}

pub fn apply_mask(spectrum: &mut [Complex64], mask: &[bool]) {
    for (c, &keep) in spectrum.iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::default();
        }
    }
}

/// Spectral derivative multiplier `iξ_axis`, zeroed on the Nyquist line so
/// that derivatives of real fields stay real.
pub fn derivative_multipliers(grid: &TorusGrid, axis: usize) -> Vec<Complex64> {
    let n = grid.n() as i64;
    let dk = 2.0 * PI / grid.lbox();
    integer_modes(grid)
        .into_iter()
        .map(|k| {
            if k[axis] == -n / 2 {
                Complex64::default()
            } else {
                Complex64::new(0.0, k[axis] as f64 * dk)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_exact_to_roundoff() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(dim, n) in &[(1usize, 64usize), (2, 32), (2, 128)] {
            let grid = TorusGrid::new(dim, n, 2.0 * PI).unwrap();
            let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = inverse_real(&grid, &forward(&grid, &v));
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = v.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-12 * scale, "dim={dim} n={n} err={err}");
        }
    }

    #[test]
    fn single_mode_lands_on_its_lattice_point() {
        let grid = TorusGrid::new(2, 16, 2.0 * PI).unwrap();
        let f: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                (3.0 * x[0] - 2.0 * x[1]).cos()
            })
            .collect();
        let s = forward(&grid, &f);
        let modes = integer_modes(&grid);
        for (c, k) in s.iter().zip(&modes) {
            let expected = if *k == [3, -2] || *k == [-3, 2] { 0.5 } else { 0.0 };
            assert!((c.re - expected).abs() < 1e-14 && c.im.abs() < 1e-14, "{k:?} {c}");
        }
    }

    #[test]
    fn cutoff_prevents_aliasing() {
        for n in [8usize, 16, 64, 256] {
            let k = dealias_cutoff(n);
            assert!(3 * k < n as i64);
            assert!(3 * (k + 1) >= n as i64);
        }
    }
}
