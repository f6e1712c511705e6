use super::{spectral, ScalarField, TorusGrid};
use crate::{Error, Result};

/// Riemann-sum `Lᵖ` norm `(hⁿ Σ|f|ᵖ)^{1/p}`; `p = ∞` gives `max |f|`.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Argument(format!("Lp norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let dv = f.grid().cell_volume();
    let s: f64 = if p == 1.0 {
        f.values().iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        f.values().iter().map(|v| v * v).sum()
    } else {
        f.values().iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((dv * s).powf(1.0 / p))
}

/// Grids up to this size get the exhaustive pair scan in the Hölder seminorm.
pub const HOLDER_FULL_SCAN_MAX: usize = 128;

/// Lattice stride used by [`holder_seminorm`] on this grid: 1 in 1-D and up
/// to [`HOLDER_FULL_SCAN_MAX`] points per side, 4 beyond.
pub fn holder_sampling_stride(grid: &TorusGrid) -> usize {
    if grid.dim() == 1 || grid.n() <= HOLDER_FULL_SCAN_MAX {
        1
    } else {
        4
    }
}

/// `sup |f(x) − f(y)| / d(x, y)^γ` over lattice pairs with the torus metric.
///
/// Pairs are drawn from the sub-lattice given by [`holder_sampling_stride`].
pub fn holder_seminorm(f: &ScalarField, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Argument(format!("Hölder exponent must lie in (0,1), got {gamma}")));
    }
    let grid = f.grid();
    let n = grid.n();
    let stride = holder_sampling_stride(grid);
    let m = n / stride;
    let h = grid.spacing() * stride as f64;
    let vals = f.values();
    let mut best = 0.0f64;
    match grid.dim() {
        1 => {
            let sample: Vec<f64> = (0..m).map(|i| vals[i * stride]).collect();
            for o in 1..=m / 2 {
                let w = (o as f64 * h).powf(-gamma);
                let mut local = 0.0f64;
                for i in 0..m {
                    local = local.max((sample[i] - sample[(i + o) % m]).abs());
                }
                best = best.max(local * w);
            }
        }
        _ => {
            let sample: Vec<f64> = (0..m * m)
                .map(|idx| vals[(idx / m) * stride * n + (idx % m) * stride])
                .collect();
            // offsets (o1, o2) with o1 in [0, m/2] cover every pair up to symmetry
            for o1 in 0..=m / 2 {
                for o2 in 0..m {
                    if o1 == 0 && (o2 == 0 || o2 > m / 2) {
                        continue;
                    }
                    let d1 = o1 as f64;
                    let d2 = if o2 <= m / 2 { o2 as f64 } else { (m - o2) as f64 };
                    let dist = h * (d1 * d1 + d2 * d2).sqrt();
                    let w = dist.powf(-gamma);
                    let mut local = 0.0f64;
                    for i in 0..m {
                        let row = &sample[i * m..(i + 1) * m];
                        let other = &sample[((i + o1) % m) * m..((i + o1) % m + 1) * m];
                        for j in 0..m {
                            let d = (row[j] - other[(j + o2) % m]).abs();
                            if d > local {
                                local = d;
                            }
                        }
                    }
                    best = best.max(local * w);
                }
            }
        }
    }
    Ok(best)
}

/// Discrete homogeneous Besov seminorm
/// `(Σ_{0<|y|≤L/2} hⁿ Σ_x hⁿ |f(x) − f(x−y)|ᵖ / |y|^{n+ps})^{1/p}` with periodic shifts.
pub fn besov_seminorm(f: &ScalarField, s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Argument(format!("Besov smoothness must lie in (0,1), got {s}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Argument(format!("Besov integrability needs 1 <= p < inf, got {p}")));
    }
    let grid = f.grid();
    let n = grid.n();
    let h = grid.spacing();
    let dv = grid.cell_volume();
    let dim = grid.dim() as f64;
    let half = grid.lbox() / 2.0;
    let vals = f.values();
    let pow = |d: f64| -> f64 {
        if p == 2.0 {
            d * d
        } else if p == 4.0 {
            let q = d * d;
            q * q
        } else {
            d.abs().powf(p)
        }
    };
    let mut total = 0.0;
    let signed = |o: usize| -> f64 {
        if o <= n / 2 {
            o as f64
        } else {
            o as f64 - n as f64
        }
    };
    match grid.dim() {
        1 => {
            for o in 1..n {
                let r = (signed(o) * h).abs();
                if r > half {
                    continue;
                }
                let mut acc = 0.0;
                for i in 0..n {
                    acc += pow(vals[i] - vals[(i + n - o) % n]);
                }
                total += dv * acc * dv / r.powf(dim + p * s);
            }
        }
        _ => {
            for o1 in 0..n {
                for o2 in 0..n {
                    if o1 == 0 && o2 == 0 {
                        continue;
                    }
                    let y1 = signed(o1) * h;
                    let y2 = signed(o2) * h;
                    let r = (y1 * y1 + y2 * y2).sqrt();
                    if r > half {
                        continue;
                    }
                    let mut acc = 0.0;
                    for i in 0..n {
                        let row = &vals[i * n..(i + 1) * n];
                        let src = (i + n - o1) % n;
                        let other = &vals[src * n..(src + 1) * n];
                        for j in 0..n {
                            acc += pow(row[j] - other[(j + n - o2) % n]);
                        }
                    }
                    total += dv * acc * dv / r.powf(dim + p * s);
                }
            }
        }
    }
    Ok(total.powf(1.0 / p))
}

/// Spectral `Ḣˢ` seminorm `(V Σ |ξ|^{2s} |f̂(ξ)|²)^{1/2}`; the zero mode is
/// dropped for `s > 0`, so `s = 0` reproduces the `L²` norm.
pub fn sobolev_seminorm(f: &ScalarField, s: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Argument(format!("Sobolev order must be >= 0, got {s}")));
    }
    let grid = f.grid();
    let spec = f.spectrum();
    let xi = spectral::wavevectors(grid);
    let mut acc = 0.0;
    for (c, k) in spec.iter().zip(&xi) {
        let k2 = k[0] * k[0] + k[1] * k[1];
        let w = if s == 0.0 {
            1.0
        } else if k2 == 0.0 {
            0.0
        } else {
            k2.powf(s)
        };
        acc += w * c.norm_sqr();
    }
    Ok((grid.volume() * acc).sqrt())
}

/// Local bmo estimate: mean oscillation on periodic balls with `|B| ≤ 1`,
/// plain average of `|f|` on balls with `|B| > 1`.
///
/// Balls have dyadic radii `2h, 4h, …, ≤ Lbox/2` and centers on a
/// sub-lattice of stride `N/16`; the result is the maximum over that family.
pub fn bmo_norm_estimate(f: &ScalarField) -> Result<f64> {
    let grid = f.grid();
    if grid.lbox() <= 2.0 {
        return Err(Error::Precondition(format!(
            "bmo estimate needs Lbox > 2 so both ball regimes exist, got {}",
            grid.lbox()
        )));
    }
    let n = grid.n();
    let h = grid.spacing();
    let stride = (n / 16).max(1);
    let vals = f.values();
    let vn = grid.unit_ball_volume();
    let dim = grid.dim();
    let mut best = 0.0f64;
    let mut radius = 2.0 * h;
    while radius <= grid.lbox() / 2.0 + 1e-12 {
        let reach = (radius / h).floor() as i64;
        let mut offsets: Vec<(i64, i64)> = Vec::new();
        let (lo2, hi2) = if dim == 1 { (0, 0) } else { (-reach, reach) };
        for a in -reach..=reach {
            for b in lo2..=hi2 {
                let d = h * ((a * a + b * b) as f64).sqrt();
                if d <= radius + 1e-12 {
                    offsets.push((a, b));
                }
            }
        }
        // the same torus point can be reached by two offsets once the radius
        // passes half the box
        let mut offsets: Vec<(usize, usize)> = offsets
            .into_iter()
            .map(|(a, b)| (a.rem_euclid(n as i64) as usize, b.rem_euclid(n as i64) as usize))
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        let small = vn * radius.powi(dim as i32) <= 1.0;
        let centers_per_axis = n / stride;
        let centers2 = if dim == 1 { 1 } else { centers_per_axis };
        let mut buf = Vec::with_capacity(offsets.len());
        for ci in 0..centers_per_axis {
            for cj in 0..centers2 {
                buf.clear();
                let c0 = ci * stride;
                let c1 = cj * stride;
                for &(a, b) in &offsets {
                    let i = (c0 + a) % n;
                    let idx = if dim == 1 { i } else { i * n + (c1 + b) % n };
                    buf.push(vals[idx]);
                }
                let count = buf.len() as f64;
                let q = if small {
                    let avg = buf.iter().sum::<f64>() / count;
                    buf.iter().map(|v| (v - avg).abs()).sum::<f64>() / count
                } else {
                    buf.iter().map(|v| v.abs()).sum::<f64>() / count
                };
                best = best.max(q);
            }
        }
        radius *= 2.0;
    }
    Ok(best)
}

/// Clamps every value to `[−k, k]`.
pub fn truncate_clamp(f: &ScalarField, k: f64) -> Result<ScalarField> {
    if !(k > 0.0) {
        return Err(Error::Argument(format!("clamp level must be positive, got {k}")));
    }
    Ok(f.map(|v| v.clamp(-k, k)))
}
