//! Periodic grid fields and the norms the estimates are stated in.

mod io;
mod norms;
pub mod spectral;

pub use io::{raw_bytes, read_csv, read_raw, write_csv, write_raw};
pub use norms::{
    besov_seminorm, bmo_norm_estimate, holder_sampling_stride,
    holder_seminorm, lp_norm, sobolev_seminorm, truncate_clamp, HOLDER_FULL_SCAN_MAX,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform periodic grid on `[0, Lbox)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    lbox: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, lbox: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension {
                dim,
                what: "torus grids are 1-D or 2-D".into(),
            });
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Argument(format!(
                "points per dimension must be a power of two >= 8, got {n}"
            )));
        }
        if !(lbox.is_finite() && lbox > 0.0) {
            return Err(Error::Argument(format!("period length must be positive, got {lbox}")));
        }
        Ok(Self { dim, n, lbox })
    }

    /// `2π`-periodic grid.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lbox(&self) -> f64 {
        self.lbox
    }

    /// Total number of lattice points `Nⁿ`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice spacing `h = Lbox/N`.
    pub fn spacing(&self) -> f64 {
        self.lbox / self.n as f64
    }

    /// Riemann-sum measure `hⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.lbox.powi(self.dim as i32)
    }

    /// Multi-index of a flat index (second entry is 0 in 1-D).
    #[inline]
    pub fn index(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    #[inline]
    pub fn flat(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    /// Coordinates of a lattice point (second entry is 0 in 1-D).
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let [i, j] = self.index(flat);
        [i as f64 * h, j as f64 * h]
    }

    /// Periodic displacement `x − y` reduced to the fundamental cell `[−L/2, L/2)`.
    #[inline]
    pub fn displacement(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let l = self.lbox;
        let wrap = |d: f64| d - l * (d / l + 0.5).floor();
        match self.dim {
            1 => [wrap(x[0] - y[0]), 0.0],
            _ => [wrap(x[0] - y[0]), wrap(x[1] - y[1])],
        }
    }

    /// Torus distance.
    #[inline]
    pub fn distance(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let d = self.displacement(x, y);
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    /// Volume of the unit ball in this dimension.
    pub fn unit_ball_volume(&self) -> f64 {
        unit_ball_volume(self.dim)
    }
}

/// `v_n`: 2 for n = 1, π for n = 2.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        _ => PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim + 2),
    }
}

// Γ(m/2) for integer m >= 1
fn gamma_half_integer(m: usize) -> f64 {
    if m == 1 {
        PI.sqrt()
    } else if m == 2 {
        1.0
    } else {
        (m as f64 / 2.0 - 1.0) * gamma_half_integer(m - 2)
    }
}

/// Real-valued grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "expected {} values for the grid, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at lattice index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn from_spectrum(grid: TorusGrid, spectrum: &[Complex64]) -> Self {
        Self {
            grid,
            values: spectral::inverse_real(&grid, spectrum),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        spectral::forward(&self.grid, &self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn pointwise_mul(&self, other: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// Grid integral `hⁿ Σ f`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Grid pairing `hⁿ Σ f g`.
    pub fn pairing(&self, other: &ScalarField) -> f64 {
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Applies a real Fourier multiplier `m(ξ)` given per flat spectral index.
    pub fn apply_multiplier(&self, multiplier: &[f64]) -> Self {
        let mut s = self.spectrum();
        for (c, &m) in s.iter_mut().zip(multiplier) {
            *c *= m;
        }
        Self::from_spectrum(self.grid, &s)
    }

    /// Projection onto the 2/3-rule band.
    pub fn dealiased(&self) -> Self {
        let mut s = self.spectrum();
        spectral::apply_mask(&mut s, &spectral::dealias_mask(&self.grid));
        Self::from_spectrum(self.grid, &s)
    }
}

/// Divergence-free drift sampled on a grid, with a recorded bmo bound μ.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
    bmo_bound: f64,
}

impl VelocityField {
    pub fn zero(grid: TorusGrid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
            bmo_bound: 0.0,
        }
    }

    /// Spatially constant drift `c` (trivially divergence free).
    pub fn constant(grid: TorusGrid, c: [f64; 2]) -> Self {
        let components = (0..grid.dim()).map(|d| vec![c[d]; grid.len()]).collect();
        let bmo_bound = c[..grid.dim()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            grid,
            components,
            bmo_bound,
        }
    }

    /// Builds a field from components, checking the divergence invariant and
    /// recording `max(bmo estimate of each component)` as μ.
    pub fn from_components(grid: TorusGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Argument("velocity components do not match the grid".into()));
        }
        let mut v = Self {
            grid,
            components,
            bmo_bound: 0.0,
        };
        let vmax = v.max_abs();
        let div = v.max_divergence();
        if div > 1e-10 * vmax.max(f64::MIN_POSITIVE) && div > 1e-300 {
            return Err(Error::Argument(format!(
                "velocity is not divergence free: max |div v| = {div:e}, max |v| = {vmax:e}"
            )));
        }
        v.bmo_bound = v.measured_bmo()?;
        Ok(v)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn bmo_bound(&self) -> f64 {
        self.bmo_bound
    }

    /// Replaces the recorded bound; it may only grow past the measured estimate.
    pub fn with_bmo_bound(mut self, mu: f64) -> Result<Self> {
        let measured = self.measured_bmo()?;
        if mu < measured {
            return Err(Error::Argument(format!(
                "recorded bmo bound {mu} is below the measured estimate {measured}"
            )));
        }
        self.bmo_bound = mu;
        Ok(self)
    }

    fn measured_bmo(&self) -> Result<f64> {
        if self.grid.lbox() <= 2.0 {
            // the |B| > 1 branch needs a box larger than the unit-volume ball
            return Ok(self.max_abs() * 2.0);
        }
        let mut mu = 0.0f64;
        for c in &self.components {
            let f = ScalarField::from_values(self.grid, c.clone())?;
            mu = mu.max(bmo_norm_estimate(&f)?);
        }
        Ok(mu)
    }

    /// `max_x |v(x)|` (Euclidean length).
    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c[i] * c[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Spectral divergence `Σ_j ∂_j v_j` at every lattice point.
    pub fn divergence(&self) -> ScalarField {
        let mut acc = vec![Complex64::default(); self.grid.len()];
        for (axis, c) in self.components.iter().enumerate() {
            let s = spectral::forward(&self.grid, c);
            let d = spectral::derivative_multipliers(&self.grid, axis);
            for ((a, x), m) in acc.iter_mut().zip(&s).zip(&d) {
                *a += x * m;
            }
        }
        ScalarField::from_spectrum(self.grid, &acc)
    }

    pub fn max_divergence(&self) -> f64 {
        self.divergence().max_abs()
    }

    /// Applies the same real multiplier to every component.
    pub(crate) fn map_spectral(&self, multiplier: &[f64]) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| {
                let mut s = spectral::forward(&self.grid, c);
                for (x, &m) in s.iter_mut().zip(multiplier) {
                    *x *= m;
                }
                spectral::inverse_real(&self.grid, &s)
            })
            .collect();
        Self {
            grid: self.grid,
            components,
            bmo_bound: self.bmo_bound,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .map(|comp| comp.iter().map(|v| v * c).collect())
                .collect(),
            bmo_bound: self.bmo_bound * c.abs(),
        }
    }
}

/// `v = (−∂₂φ, ∂₁φ)` from a stream function φ (2-D only).
pub fn make_divfree_velocity(stream: &ScalarField) -> Result<VelocityField> {
    let grid = *stream.grid();
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            dim: grid.dim(),
            what: "divergence-free velocities are built from a 2-D stream function".into(),
        });
    }
    let s = stream.spectrum();
    let derive = |axis: usize| {
        let m = spectral::derivative_multipliers(&grid, axis);
        let d: Vec<Complex64> = s.iter().zip(&m).map(|(a, b)| a * b).collect();
        spectral::inverse_real(&grid, &d)
    };
    let d1 = derive(0);
    let d2 = derive(1);
    let v1: Vec<f64> = d2.into_iter().map(|x| -x).collect();
    VelocityField::from_components(grid, vec![v1, d1])
}
