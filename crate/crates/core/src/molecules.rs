//! r-molecules: construction, the three defining conditions, backward
//! evolution under the dual equation with envelope tracking, the center ODE,
//! and the duality transfer defect.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::field::{holder_seminorm, lp_norm, spectral, unit_ball_volume, ScalarField, TorusGrid};
use crate::kernel::{fmt_f64, KernelCase, KernelSpec, SymbolTable};
use crate::solver::{solve_backward_dual, solve_backward_dual_from, solve_forward, Drift, SolverConfig, Trajectory};
use crate::{Error, Result};

/// `C_cal` in `K = C_cal(μ+1)/(ω−γ)`. A dyadic scan of drift-free case-(d)
/// molecule runs (Lbox = 4, N = 256, r ∈ [0.08, 0.45], T0 = 0.5) has no
/// envelope violation up to 4 and height violations from 16 on; frozen at a
/// quarter of the largest admissible value so `(μ+1) ≤ 2` still fits.
pub const DEFAULT_C_CAL: f64 = 1.0;

/// Default window factor `ε_win`: windows have length `ε_win·r`.
pub const DEFAULT_WINDOW_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoleculeParams {
    pub dim: usize,
    /// Hardy index σ ∈ (n/(n+1), 1).
    pub sigma: f64,
    /// γ = n(1/σ − 1).
    pub gamma: f64,
    pub omega: f64,
    pub r: f64,
    pub x0: [f64; 2],
}

impl MoleculeParams {
    pub fn new(dim: usize, sigma: f64, omega: f64, r: f64, x0: [f64; 2]) -> Result<Self> {
        let gamma = dim as f64 * (1.0 / sigma - 1.0);
        let p = Self {
            dim,
            sigma,
            gamma,
            omega,
            r,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from γ; σ = n/(n+γ).
    pub fn from_gamma(dim: usize, gamma: f64, omega: f64, r: f64, x0: [f64; 2]) -> Result<Self> {
        let p = Self {
            dim,
            sigma: dim as f64 / (dim as f64 + gamma),
            gamma,
            omega,
            r,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim as f64;
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::UnsupportedDimension {
                dim: self.dim,
                what: "molecules".into(),
            });
        }
        if !(self.sigma > n / (n + 1.0) && self.sigma < 1.0) {
            return Err(Error::Argument(format!("σ = {} must lie in (n/(n+1), 1)", self.sigma)));
        }
        if (self.gamma - n * (1.0 / self.sigma - 1.0)).abs() > 1e-12 {
            return Err(Error::Argument("γ must equal n(1/σ − 1)".into()));
        }
        if !(0.0 < self.gamma && self.gamma < self.omega && self.omega < 1.0) {
            return Err(Error::Argument(format!(
                "need 0 < γ < ω < 1, got γ = {}, ω = {}",
                self.gamma, self.omega
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Argument(format!("r = {} must be positive", self.r)));
        }
        Ok(())
    }

    /// Extra ordering required by the kernel: ω < 2δ in case (c).
    pub fn validate_for(&self, spec: &KernelSpec) -> Result<()> {
        self.validate()?;
        if spec.case == KernelCase::C && self.omega >= 2.0 * spec.delta {
            return Err(Error::Argument(format!(
                "case (c) needs ω < 2δ, got ω = {}, δ = {}",
                self.omega, spec.delta
            )));
        }
        Ok(())
    }

    pub fn is_small(&self) -> bool {
        self.r < 1.0
    }

    pub fn concentration_bound(&self) -> f64 {
        self.r.powf(self.omega - self.gamma)
    }

    pub fn height_bound(&self) -> f64 {
        self.r.powf(-(self.dim as f64 + self.gamma))
    }

    pub fn to_entries(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (k("dim"), self.dim.to_string()),
            (k("sigma"), fmt_f64(self.sigma)),
            (k("omega"), fmt_f64(self.omega)),
            (k("r"), fmt_f64(self.r)),
            (k("x0"), format!("{},{}", fmt_f64(self.x0[0]), fmt_f64(self.x0[1]))),
        ]
    }

    /// Reads `dim`, `omega`, `r`, `x0` and one of `sigma` / `gamma`.
    pub fn from_entries(map: &BTreeMap<String, String>, prefix: &str) -> Result<Self> {
        let key = |s: &str| format!("{prefix}{s}");
        let num = |s: &str| -> Result<Option<f64>> {
            match map.get(&key(s)) {
                None => Ok(None),
                Some(v) => v.trim().parse::<f64>().map(Some).map_err(|_| Error::Config {
                    key: key(s),
                    reason: format!("not a number: {v:?}"),
                }),
            }
        };
        let need = |s: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Config {
                key: key(s),
                reason: "missing".into(),
            })
        };
        let dim = num("dim")?.unwrap_or(2.0) as usize;
        let omega = need("omega", num("omega")?)?;
        let r = need("r", num("r")?)?;
        let x0 = match map.get(&key("x0")) {
            None => [0.0, 0.0],
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config {
                        key: key("x0"),
                        reason: format!("expected two comma-separated numbers, got {v:?}"),
                    })?;
                match parts.as_slice() {
                    [a] => [*a, 0.0],
                    [a, b] => [*a, *b],
                    _ => {
                        return Err(Error::Config {
                            key: key("x0"),
                            reason: "expected one or two coordinates".into(),
                        })
                    }
                }
            }
        };
        let out = match (num("sigma")?, num("gamma")?) {
            (Some(s), _) => Self::new(dim, s, omega, r, x0),
            (None, Some(g)) => Self::from_gamma(dim, g, omega, r, x0),
            (None, None) => {
                return Err(Error::Config {
                    key: key("gamma"),
                    reason: "one of sigma or gamma is required".into(),
                })
            }
        };
        out.map_err(|e| Error::Config {
            key: format!("{prefix}*"),
            reason: e.to_string(),
        })
    }
}

/// `K = C_cal(μ+1)/(ω−γ)`.
pub fn choose_k(mu: f64, omega: f64, gamma: f64, c_cal: f64) -> Result<f64> {
    if !(omega > gamma) {
        return Err(Error::Argument(format!("need ω > γ, got ω = {omega}, γ = {gamma}")));
    }
    if !(mu >= 0.0) || !(c_cal > 0.0) {
        return Err(Error::Argument("need μ ≥ 0 and C_cal > 0".into()));
    }
    Ok(c_cal * (mu + 1.0) / (omega - gamma))
}

fn gaussian(grid: &TorusGrid, x: [f64; 2], c: [f64; 2], sd: f64) -> f64 {
    let d = grid.distance(x, c);
    (-0.5 * d * d / (sd * sd)).exp()
}

/// Builds ψ₀: for r < 1 a dipole of two Gaussians (standard deviation r/4)
/// centred at `x₀ ± (r/4)e₁`, for r ≥ 1 a single Gaussian. The profile is
/// projected onto the solver band, the mean removed for small molecules, and
/// rescaled so that `‖ψ₀‖∞` is 90% of the height bound.
pub fn build_molecule(params: &MoleculeParams, grid: &TorusGrid) -> Result<ScalarField> {
    params.validate()?;
    if grid.dim() != params.dim {
        return Err(Error::Argument("molecule and grid dimensions differ".into()));
    }
    let r = params.r;
    if r >= grid.lbox() / 8.0 {
        return Err(Error::Precondition(format!(
            "r = {r} does not fit the torus (need r < Lbox/8 = {})",
            grid.lbox() / 8.0
        )));
    }
    if r < 4.0 * grid.spacing() * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "grid does not resolve r = {r} (need r ≥ 4h = {})",
            4.0 * grid.spacing()
        )));
    }
    let sd = r / 4.0;
    let x0 = params.x0;
    let raw = if params.is_small() {
        let a = [x0[0] + r / 4.0, x0[1]];
        let b = [x0[0] - r / 4.0, x0[1]];
        ScalarField::from_fn(*grid, |x| gaussian(grid, x, a, sd) - gaussian(grid, x, b, sd))
    } else {
        ScalarField::from_fn(*grid, |x| gaussian(grid, x, x0, sd))
    };
    let mut s = raw.spectrum();
    spectral::apply_mask(&mut s, &spectral::dealias_mask(grid));
    if params.is_small() {
        s[0] = Complex64::default();
    }
    let banded = ScalarField::from_spectrum(*grid, &s);
    let m = banded.max_abs();
    if !(m > 0.0) {
        return Err(Error::Numerical("molecule profile vanished after band projection".into()));
    }
    let mut out = banded.scaled(0.9 * params.height_bound() / m);
    if params.is_small() {
        // remove round-off in the mean
        let mean = out.mean();
        out.values_mut().iter_mut().for_each(|v| *v -= mean);
    }
    let rep = check_molecule(&out, params);
    if !rep.pass {
        return Err(Error::Precondition(format!(
            "grid does not resolve r = {r}: the band-limited profile breaks the molecule conditions \
             (concentration {:.4} of bound, height {:.4} of bound)",
            rep.concentration / rep.concentration_bound,
            rep.height / rep.height_bound
        )));
    }
    Ok(out)
}

/// `∫|f||x − c|^ω` with the torus metric.
pub fn concentration(f: &ScalarField, center: [f64; 2], omega: f64) -> f64 {
    let g = f.grid();
    let dv = g.cell_volume();
    f.values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() * g.distance(g.point(i), center).powf(omega))
        .sum::<f64>()
        * dv
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoleculeReport {
    pub concentration: f64,
    pub concentration_bound: f64,
    pub concentration_pass: bool,
    pub height: f64,
    pub height_bound: f64,
    pub height_pass: bool,
    /// `hⁿΣψ`
    pub integral: f64,
    /// Whether the moment condition applies (r < 1).
    pub moment_required: bool,
    pub moment_pass: bool,
    pub l1: f64,
    /// `v_n r^{−γ}`
    pub l1_bound: f64,
    /// `‖ψ‖₁ r^γ`, the constant in `‖ψ‖₁ ≤ C r^{−γ}`.
    pub l1_constant: f64,
    pub pass: bool,
}

/// Measures the three defining conditions of an r-molecule.
pub fn check_molecule(f: &ScalarField, params: &MoleculeParams) -> MoleculeReport {
    let conc = concentration(f, params.x0, params.omega);
    let height = f.max_abs();
    let integral = f.integral();
    let l1 = f.values().iter().map(|v| v.abs()).sum::<f64>() * f.grid().cell_volume();
    let cb = params.concentration_bound();
    let hb = params.height_bound();
    let moment_required = params.is_small();
    let moment_pass = !moment_required || integral.abs() <= 1e-12 * l1.max(f64::MIN_POSITIVE);
    let concentration_pass = conc <= cb;
    let height_pass = height <= hb;
    MoleculeReport {
        concentration: conc,
        concentration_bound: cb,
        concentration_pass,
        height,
        height_bound: hb,
        height_pass,
        integral,
        moment_required,
        moment_pass,
        l1,
        l1_bound: unit_ball_volume(params.dim) * params.r.powf(-params.gamma),
        l1_constant: l1 * params.r.powf(params.gamma),
        pass: concentration_pass && height_pass && moment_pass,
    }
}

/// Average of `v` over lattice points in the periodic ball `B(x, radius)`.
fn ball_average(v: &crate::field::VelocityField, x: [f64; 2], radius: f64) -> Result<[f64; 2]> {
    let g = v.grid();
    let (mut sum, mut count) = ([0.0; 2], 0usize);
    for i in 0..g.len() {
        if g.distance(g.point(i), x) <= radius {
            for (axis, s) in sum.iter_mut().enumerate().take(g.dim()) {
                *s += v.component(axis)[i];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Precondition(format!(
            "ball of radius {radius:e} around {x:?} contains no lattice point"
        )));
    }
    Ok([sum[0] / count as f64, sum[1] / count as f64])
}

fn wrap(x: [f64; 2], lbox: f64) -> [f64; 2] {
    [x[0].rem_euclid(lbox), x[1].rem_euclid(lbox)]
}

/// Explicit Euler for `x′(s) = mean of v(·, t_anchor − s) over B(x(s), r + Ks)`.
/// Returns one center per entry of `times` (relative to `s_offset`, which
/// enters the radius and the drift time).
pub fn evolve_center_from(
    drift: &Drift,
    t_anchor: f64,
    s_offset: f64,
    r: f64,
    x0: [f64; 2],
    k: f64,
    times: &[f64],
) -> Result<Vec<[f64; 2]>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("center times must be increasing".into()));
    }
    let lbox = drift.grid().lbox();
    let mut out = Vec::with_capacity(times.len());
    let mut x = wrap(x0, lbox);
    let mut last = times.first().copied().unwrap_or(0.0);
    for &t in times {
        let ds = t - last;
        if ds > 0.0 {
            let s = s_offset + last;
            let v = ball_average(drift.at(t_anchor - s), x, r + k * s)?;
            x = wrap([x[0] + ds * v[0], x[1] + ds * v[1]], lbox);
        }
        last = t;
        out.push(x);
    }
    Ok(out)
}

/// [`evolve_center_from`] for a run anchored at the last entry of `times`.
pub fn evolve_center(drift: &Drift, r: f64, x0: [f64; 2], k: f64, times: &[f64]) -> Result<Vec<[f64; 2]>> {
    let anchor = times.last().copied().unwrap_or(0.0);
    evolve_center_from(drift, anchor, 0.0, r, x0, k, times)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeState {
    pub s: f64,
    pub k: f64,
    /// (concentration, height, L¹)
    pub measured: [f64; 3],
    /// ((r+Ks)^{ω−γ}, (r+Ks)^{−(n+γ)}, v_n(r+Ks)^{−γ})
    pub bounds: [f64; 3],
    pub center: [f64; 2],
    pub violated: [bool; 3],
}

impl EnvelopeState {
    pub fn any_violation(&self) -> bool {
        self.violated.iter().any(|&v| v)
    }

    /// `measured / bound` per quantity.
    pub fn ratios(&self) -> [f64; 3] {
        [
            self.measured[0] / self.bounds[0],
            self.measured[1] / self.bounds[1],
            self.measured[2] / self.bounds[2],
        ]
    }
}

pub fn envelope_bounds(params: &MoleculeParams, k: f64, s: f64) -> [f64; 3] {
    let f = params.r + k * s;
    let n = params.dim as f64;
    [
        f.powf(params.omega - params.gamma),
        f.powf(-(n + params.gamma)),
        unit_ball_volume(params.dim) * f.powf(-params.gamma),
    ]
}

fn envelope_at(f: &ScalarField, params: &MoleculeParams, k: f64, s: f64, center: [f64; 2]) -> EnvelopeState {
    let measured = [
        concentration(f, center, params.omega),
        f.max_abs(),
        f.values().iter().map(|v| v.abs()).sum::<f64>() * f.grid().cell_volume(),
    ];
    let bounds = envelope_bounds(params, k, s);
    let slack = 1.0 + 1e-12;
    EnvelopeState {
        s,
        k,
        measured,
        bounds,
        center,
        violated: [
            measured[0] > bounds[0] * slack,
            measured[1] > bounds[1] * slack,
            measured[2] > bounds[2] * slack,
        ],
    }
}

/// Envelope states along a backward trajectory, with `centers[i]` the
/// evolved center at `traj.times[i] + s_offset`.
pub fn track_envelopes_from(
    traj: &Trajectory,
    params: &MoleculeParams,
    k: f64,
    centers: &[[f64; 2]],
    s_offset: f64,
) -> Result<Vec<EnvelopeState>> {
    if centers.len() != traj.len() {
        return Err(Error::Argument(format!(
            "{} centers for {} trajectory states",
            centers.len(),
            traj.len()
        )));
    }
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(centers)
        .map(|((&t, f), &c)| envelope_at(f, params, k, s_offset + t, c))
        .collect())
}

pub fn track_envelopes(traj: &Trajectory, params: &MoleculeParams, k: f64, centers: &[[f64; 2]]) -> Result<Vec<EnvelopeState>> {
    track_envelopes_from(traj, params, k, centers, 0.0)
}

/// CSV with header `s,concentration,height,l1,bound_concentration,bound_height,bound_l1,cx,cy`.
pub fn envelopes_to_csv(states: &[EnvelopeState]) -> String {
    let mut out = String::from("s,concentration,height,l1,bound_concentration,bound_height,bound_l1,cx,cy\n");
    for e in states {
        let cols: Vec<String> = [e.s]
            .iter()
            .chain(&e.measured)
            .chain(&e.bounds)
            .chain(&e.center)
            .map(|&x| fmt_f64(x))
            .collect();
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub k: f64,
    pub window: f64,
    pub windows: usize,
    /// Σ s_i ≥ T0
    pub elapsed: f64,
    pub envelopes: Vec<EnvelopeState>,
    pub violations: usize,
    pub final_l1: f64,
    /// `v_n (K·T0)^{−γ}`
    pub l1_cap: f64,
    /// `final ‖ψ‖₁ · T0^γ`, the measured C in `‖ψ‖₁ ≤ C T0^{−γ}`.
    pub measured_c: f64,
}

/// Number of windows of length `ε_win·r` needed to reach `T0`.
pub fn window_count(r: f64, t0: f64, window_factor: f64) -> usize {
    let n = t0 / (window_factor * r);
    (n - 1e-9).ceil().max(1.0) as usize
}

/// Backward evolution of ψ₀ in windows `s_i = ε_win·r` until `Σ s_i ≥ T0`,
/// tracking the envelopes with continuous radius `r + Ks` and the center
/// ODE. Violations are counted, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn iterate_molecule(
    psi0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    params: &MoleculeParams,
    k: f64,
    t0: f64,
    window_factor: f64,
    cfg: &SolverConfig,
) -> Result<IterationReport> {
    params.validate()?;
    if !(t0 > 0.0) || !(window_factor > 0.0) || !(k > 0.0) {
        return Err(Error::Argument("need T0 > 0, ε_win > 0 and K > 0".into()));
    }
    let window = window_factor * params.r;
    let windows = window_count(params.r, t0, window_factor);
    let anchor = windows as f64 * window;
    let mut envelopes = Vec::new();
    let mut psi = psi0.clone();
    let mut center = params.x0;
    for i in 0..windows {
        let s0 = i as f64 * window;
        let traj = solve_backward_dual_from(&psi, drift, table, cfg, anchor, s0, window)?;
        let centers = evolve_center_from(drift, anchor, s0, params.r, center, k, &traj.times)?;
        let states = track_envelopes_from(&traj, params, k, &centers, s0)?;
        // window starts repeat the previous window's last state
        let skip = usize::from(i > 0);
        envelopes.extend(states.into_iter().skip(skip));
        center = *centers.last().unwrap();
        psi = traj.last().clone();
    }
    let violations = envelopes.iter().filter(|e| e.any_violation()).count();
    let final_l1 = lp_norm(&psi, 1.0)?;
    Ok(IterationReport {
        k,
        window,
        windows,
        elapsed: anchor,
        envelopes,
        violations,
        final_l1,
        l1_cap: unit_ball_volume(params.dim) * (k * t0).powf(-params.gamma),
        measured_c: final_l1 * t0.powf(params.gamma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferReport {
    /// `⟨θ(t), ψ₀⟩`
    pub lhs: f64,
    /// `⟨θ₀, ψ(t)⟩`
    pub rhs: f64,
    pub defect: f64,
}

/// Relative defect of `⟨θ(t), ψ₀⟩ = ⟨θ₀, ψ(t)⟩` between a forward run and a
/// backward dual run to the same horizon.
pub fn transfer_check(
    theta0: &ScalarField,
    psi0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    t: f64,
) -> Result<TransferReport> {
    if theta0.grid() != psi0.grid() {
        return Err(Error::Argument("θ₀ and ψ₀ live on different grids".into()));
    }
    if t == 0.0 {
        let p = theta0.pairing(psi0);
        return Ok(TransferReport {
            lhs: p,
            rhs: p,
            defect: 0.0,
        });
    }
    let cfg = SolverConfig { t_final: t, ..*cfg };
    let fwd = solve_forward(theta0, drift, table, &cfg)?;
    let bwd = solve_backward_dual(psi0, drift, table, &cfg, t)?;
    let lhs = fwd.last().pairing(psi0);
    let rhs = theta0.pairing(bwd.last());
    let defect = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
    Ok(TransferReport { lhs, rhs, defect })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    /// `(r, x0, |⟨θ, ψ⟩|)` per family member.
    pub pairings: Vec<(f64, [f64; 2], f64)>,
    pub max_pairing: f64,
    pub holder_seminorm: f64,
    pub gamma: f64,
}

/// `max |⟨θ, ψ⟩|` over a molecule family next to the direct Hölder seminorm.
pub fn holder_by_duality(theta: &ScalarField, family: &[MoleculeParams]) -> Result<DualityReport> {
    if family.is_empty() {
        return Err(Error::Argument("molecule family is empty".into()));
    }
    let gamma = family[0].gamma;
    let mut pairings = Vec::with_capacity(family.len());
    for p in family {
        let psi = build_molecule(p, theta.grid())?;
        pairings.push((p.r, p.x0, theta.pairing(&psi).abs()));
    }
    let max_pairing = pairings.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(DualityReport {
        pairings,
        max_pairing,
        holder_seminorm: holder_seminorm(theta, gamma)?,
        gamma,
    })
}
