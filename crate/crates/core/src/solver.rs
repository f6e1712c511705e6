//! Time stepping for `∂tθ = ∇·(vθ) − Lθ + εΔθ` and its backward dual
//! `∂sψ = −∇·(v(t−s)ψ) − Lψ + εΔψ` on the torus.
//!
//! States live in the 2/3-rule band. The drift is projected onto the same
//! band, so the transport operator `A θ = P∇·(vθ)` is exactly skew in the
//! grid inner product.
//!
//! `ExponentialEuler` is a Lie splitting: a classical RK4 step for the
//! transport followed by the exact multiplier `e^{−dt(a(ξ)+ε|ξ|²)}`. RK4's
//! stability polynomial has modulus ≤ 1 on the imaginary interval
//! `[−2√2, 2√2]`, which the CFL bound keeps us inside, so the L² norm is
//! non-increasing step by step. `DuhamelPicard` iterates the integral form
//! on windows sized by [`contraction_budget`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{spectral, ScalarField, TorusGrid, VelocityField};
use crate::kernel::{fmt_f64, KernelCase, KernelSpec, SymbolTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    DuhamelPicard,
    ExponentialEuler,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "duhamelpicard" | "picard" => Some(Scheme::DuhamelPicard),
            "exponentialeuler" | "exponential" => Some(Scheme::ExponentialEuler),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::DuhamelPicard => "duhamel_picard",
            Scheme::ExponentialEuler => "exponential_euler",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Viscosity ε ≥ 0.
    pub epsilon: f64,
    pub dt: f64,
    /// Horizon T.
    pub t_final: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// The constant C in `C(Φ(T′,ε) + (T′/ε)^{1/2}‖v‖∞)`.
    pub budget_constant: f64,
    /// Largest admissible `dt · max(a(ξ) + ε|ξ|²)` over the band. The
    /// multiplier is exact, so this only guards against steps so coarse that
    /// the splitting error swamps the transport.
    pub stiffness_cap: f64,
}

impl SolverConfig {
    pub fn new(epsilon: f64, dt: f64, t_final: f64) -> Self {
        Self {
            epsilon,
            dt,
            t_final,
            scheme: Scheme::ExponentialEuler,
            picard_tol: 1e-12,
            picard_max_iter: 200,
            budget_constant: 1.0,
            stiffness_cap: 64.0,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Argument(format!("epsilon = {} must be ≥ 0", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::Argument(format!(
                "horizon T = {} is shorter than dt = {}",
                self.t_final, self.dt
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Argument("picard_tol must be positive".into()));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::Argument("picard_max_iter must be at least 1".into()));
        }
        if !(self.budget_constant > 0.0) {
            return Err(Error::Argument("budget constant must be positive".into()));
        }
        if !(self.stiffness_cap > 0.0) {
            return Err(Error::Argument("stiffness cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub min: f64,
    pub max: f64,
    /// `hⁿ Σ θ`
    pub integral: f64,
}

impl StepDiagnostics {
    pub fn of(t: f64, f: &ScalarField) -> Self {
        let dv = f.grid().cell_volume();
        let (mut l1, mut l2, mut linf, mut sum) = (0.0, 0.0, 0.0f64, 0.0);
        for &x in f.values() {
            l1 += x.abs();
            l2 += x * x;
            linf = linf.max(x.abs());
            sum += x;
        }
        Self {
            t,
            l1: l1 * dv,
            l2: (l2 * dv).sqrt(),
            linf,
            min: f.min(),
            max: f.max(),
            integral: sum * dv,
        }
    }
}

/// States and per-step diagnostics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScalarField>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, f: ScalarField) -> Result<()> {
        if !f.is_finite() {
            return Err(Error::Numerical(format!("non-finite state at t = {t}")));
        }
        self.diagnostics.push(StepDiagnostics::of(t, &f));
        self.times.push(t);
        self.states.push(f);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &ScalarField {
        &self.states[0]
    }

    pub fn last(&self) -> &ScalarField {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV time series `t,l1,l2,linf,min,max`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,l1,l2,linf,min,max\n");
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(d.t),
                fmt_f64(d.l1),
                fmt_f64(d.l2),
                fmt_f64(d.linf),
                fmt_f64(d.min),
                fmt_f64(d.max)
            );
        }
        out
    }
}

/// A drift that is either static or given at equally spaced times
/// `0, dt, 2dt, …` and sampled at the nearest stored time.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Static(VelocityField),
    Sampled { dt: f64, fields: Vec<VelocityField> },
}

impl From<VelocityField> for Drift {
    fn from(v: VelocityField) -> Self {
        Drift::Static(v)
    }
}

impl Drift {
    pub fn zero(grid: TorusGrid) -> Self {
        Drift::Static(VelocityField::zero(grid))
    }

    pub fn sampled(dt: f64, fields: Vec<VelocityField>) -> Result<Self> {
        if fields.is_empty() || !(dt > 0.0) {
            return Err(Error::Argument("sampled drift needs dt > 0 and at least one field".into()));
        }
        let g = *fields[0].grid();
        if fields.iter().any(|f| *f.grid() != g) {
            return Err(Error::Argument("sampled drift fields live on different grids".into()));
        }
        Ok(Drift::Sampled { dt, fields })
    }

    pub fn grid(&self) -> &TorusGrid {
        match self {
            Drift::Static(v) => v.grid(),
            Drift::Sampled { fields, .. } => fields[0].grid(),
        }
    }

    fn index_at(&self, t: f64) -> usize {
        match self {
            Drift::Static(_) => 0,
            Drift::Sampled { dt, fields } => {
                let i = (t / dt).round().max(0.0) as usize;
                i.min(fields.len() - 1)
            }
        }
    }

    pub fn at(&self, t: f64) -> &VelocityField {
        match self {
            Drift::Static(v) => v,
            Drift::Sampled { fields, .. } => &fields[self.index_at(t)],
        }
    }

    /// `sup_t max_x |v|`.
    pub fn max_abs(&self) -> f64 {
        match self {
            Drift::Static(v) => v.max_abs(),
            Drift::Sampled { fields, .. } => fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max),
        }
    }

    /// `sup_t μ(t)`.
    pub fn bmo_bound(&self) -> f64 {
        match self {
            Drift::Static(v) => v.bmo_bound(),
            Drift::Sampled { fields, .. } => fields.iter().map(|f| f.bmo_bound()).fold(0.0, f64::max),
        }
    }

    fn count(&self) -> usize {
        match self {
            Drift::Static(_) => 1,
            Drift::Sampled { fields, .. } => fields.len(),
        }
    }

    fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}

fn ensure_same_grid(a: &TorusGrid, b: &TorusGrid, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("{what}: grids differ ({a:?} vs {b:?})")));
    }
    Ok(())
}

fn squared_moduli(grid: &TorusGrid) -> Vec<f64> {
    spectral::wavevectors(grid)
        .into_iter()
        .map(|k| k[0] * k[0] + k[1] * k[1])
        .collect()
}

/// `e^{ε τ Δ} f`.
pub fn heat_semigroup(f: &ScalarField, tau: f64, epsilon: f64) -> Result<ScalarField> {
    if !(tau >= 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Argument(format!("heat semigroup needs tau ≥ 0 and ε ≥ 0, got {tau}, {epsilon}")));
    }
    if tau == 0.0 || epsilon == 0.0 {
        return Ok(f.clone());
    }
    let m: Vec<f64> = squared_moduli(f.grid())
        .into_iter()
        .map(|k2| (-epsilon * tau * k2).exp())
        .collect();
    Ok(f.apply_multiplier(&m))
}

/// `L f` as the Fourier multiplier `a(ξ)`.
pub fn apply_levy(f: &ScalarField, table: &SymbolTable) -> Result<ScalarField> {
    ensure_same_grid(f.grid(), table.grid(), "apply_levy")?;
    Ok(f.apply_multiplier(table.values()))
}

/// `v ∗ ω_ε` with the unit-mass Gaussian `ω_ε` of standard deviation ε,
/// i.e. the multiplier `e^{−ε²|ξ|²/2}`.
pub fn mollify_velocity(v: &VelocityField, epsilon: f64) -> Result<VelocityField> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("mollifier width must be positive, got {epsilon}")));
    }
    let m: Vec<f64> = squared_moduli(v.grid())
        .into_iter()
        .map(|k2| (-0.5 * epsilon * epsilon * k2).exp())
        .collect();
    Ok(v.map_spectral(&m))
}

/// `Φ(T′, ε)` for the kernel's case.
pub fn phi(tprime: f64, epsilon: f64, spec: &KernelSpec) -> f64 {
    let r = tprime / epsilon;
    match spec.case {
        KernelCase::A => {
            tprime.powf(1.0 - spec.beta) / epsilon.powf(spec.beta)
                + tprime.powf(1.0 - spec.delta) / epsilon.powf(spec.delta)
        }
        KernelCase::B => tprime.powf(1.0 - spec.alpha) / epsilon.powf(spec.alpha),
        KernelCase::C => r.sqrt() + tprime + tprime.powf(1.0 - spec.delta) / epsilon.powf(spec.delta),
        KernelCase::D => r.sqrt(),
    }
}

/// `C(Φ(T′,ε) + (T′/ε)^{1/2} v_inf)`; the Picard map is a contraction with
/// ratio at most this value.
pub fn contraction_budget(tprime: f64, epsilon: f64, v_inf: f64, spec: &KernelSpec, c: f64) -> Result<f64> {
    if !(tprime > 0.0 && epsilon > 0.0) {
        return Err(Error::Argument(format!(
            "contraction budget needs T′ > 0 and ε > 0, got {tprime}, {epsilon}"
        )));
    }
    Ok(c * (phi(tprime, epsilon, spec) + (tprime / epsilon).sqrt() * v_inf))
}

/// Budget with `Φ ≡ 0`, for tables without a kernel (pure transport).
fn budget_for(table: &SymbolTable, tprime: f64, epsilon: f64, v_inf: f64, c: f64) -> Result<f64> {
    match table.spec() {
        Some(spec) => contraction_budget(tprime, epsilon, v_inf, spec, c),
        None if table.max() == 0.0 => {
            if !(tprime > 0.0 && epsilon > 0.0) {
                return Err(Error::Argument("contraction budget needs T′ > 0 and ε > 0".into()));
            }
            Ok(c * (tprime / epsilon).sqrt() * v_inf)
        }
        None => Err(Error::Argument(
            "symbol table carries no kernel spec, so Φ(T′,ε) is undefined; attach one with with_spec".into(),
        )),
    }
}

/// Smallest budget constant `C` for which `C(Φ + (T′/ε)^{1/2} v_inf)` bounds
/// the L²-operator norm of the discrete Duhamel map for every
/// `T′ ∈ [T′_lo, T′_hi]`, measured on the table's band.
///
/// Uses `‖e^{ετΔ}L‖ = sup a(ξ)e^{−ετ|ξ|²}` and
/// `‖e^{ετΔ}∇·‖ ≤ sup |ξ|e^{−ετ|ξ|²}`, both decreasing in τ, so left Riemann
/// sums on a geometric τ grid over-estimate their integrals.
pub fn calibrate_budget_constant(table: &SymbolTable, epsilon: f64, tprime_lo: f64, tprime_hi: f64) -> Result<f64> {
    let spec = table
        .spec()
        .ok_or_else(|| Error::Argument("symbol table carries no kernel spec".into()))?;
    if !(epsilon > 0.0 && tprime_lo > 0.0 && tprime_hi >= tprime_lo) {
        return Err(Error::Argument("calibration needs ε > 0 and 0 < T′_lo ≤ T′_hi".into()));
    }
    let grid = table.grid();
    let mask = spectral::dealias_mask(grid);
    let mut pairs: Vec<(f64, f64)> = squared_moduli(grid)
        .into_iter()
        .zip(table.values())
        .zip(&mask)
        .filter(|(_, &keep)| keep)
        .map(|((k2, &a), _)| (k2, a))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    pairs.dedup();
    let sup_levy = |tau: f64| pairs.iter().map(|&(k2, a)| a * (-epsilon * tau * k2).exp()).fold(0.0, f64::max);
    let sup_grad = |tau: f64| {
        pairs
            .iter()
            .map(|&(k2, _)| k2.sqrt() * (-epsilon * tau * k2).exp())
            .fold(0.0, f64::max)
    };
    let steps = 400;
    let t0 = tprime_lo * 1e-4;
    let ratio = (tprime_hi / t0).powf(1.0 / steps as f64);
    let mut c = 0.0f64;
    let (mut il, mut ig) = (sup_levy(0.0) * t0, sup_grad(0.0) * t0);
    let mut t = t0;
    for _ in 0..steps {
        let next = t * ratio;
        il += sup_levy(t) * (next - t);
        ig += sup_grad(t) * (next - t);
        t = next;
        if t >= tprime_lo * (1.0 - 1e-12) {
            let root = (t / epsilon).sqrt();
            c = c.max(il / phi(t, epsilon, spec)).max(ig / root);
        }
    }
    Ok(c)
}

/// Spectral work shared by both schemes.
struct Stepper {
    grid: TorusGrid,
    mask: Vec<bool>,
    deriv: Vec<Vec<Complex64>>,
    k2: Vec<f64>,
}

impl Stepper {
    fn new(grid: TorusGrid) -> Self {
        Self {
            grid,
            mask: spectral::dealias_mask(&grid),
            deriv: (0..grid.dim()).map(|a| spectral::derivative_multipliers(&grid, a)).collect(),
            k2: squared_moduli(&grid),
        }
    }

    fn project(&self, values: &[f64]) -> Vec<Complex64> {
        let mut s = spectral::forward(&self.grid, values);
        spectral::apply_mask(&mut s, &self.mask);
        s
    }

    /// Band-projected drift components in physical space.
    fn band_drift(&self, v: &VelocityField) -> Vec<Vec<f64>> {
        v.components()
            .iter()
            .map(|c| spectral::inverse_real(&self.grid, &self.project(c)))
            .collect()
    }

    /// `P∇·(vθ)` for band-limited `θ̂`.
    fn transport(&self, theta: &[Complex64], v: &[Vec<f64>]) -> Vec<Complex64> {
        let phys = spectral::inverse_real(&self.grid, theta);
        let mut acc = vec![Complex64::default(); theta.len()];
        let mut prod = vec![0.0; phys.len()];
        for (axis, comp) in v.iter().enumerate() {
            for ((p, &x), &c) in prod.iter_mut().zip(&phys).zip(comp) {
                *p = x * c;
            }
            let s = spectral::forward(&self.grid, &prod);
            for ((a, x), m) in acc.iter_mut().zip(&s).zip(&self.deriv[axis]) {
                *a += x * m;
            }
        }
        spectral::apply_mask(&mut acc, &self.mask);
        acc
    }

    /// One RK4 step of `θ′ = sign·Aθ`.
    fn rk4_transport(&self, theta: &mut [Complex64], v: &[Vec<f64>], dt: f64, sign: f64) {
        let h = sign * dt;
        let stage = |base: &[Complex64], k: &[Complex64], c: f64| -> Vec<Complex64> {
            base.iter().zip(k).map(|(b, k)| b + k * c).collect()
        };
        let k1 = self.transport(theta, v);
        let k2 = self.transport(&stage(theta, &k1, 0.5 * h), v);
        let k3 = self.transport(&stage(theta, &k2, 0.5 * h), v);
        let k4 = self.transport(&stage(theta, &k3, h), v);
        for i in 0..theta.len() {
            theta[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
    }

    fn l2(&self, s: &[Complex64]) -> f64 {
        (self.grid.volume() * s.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    fn to_field(&self, s: &[Complex64]) -> Result<ScalarField> {
        ScalarField::from_values(self.grid, spectral::inverse_real(&self.grid, s))
    }
}

/// Number of steps and the effective step `T/steps ≤ dt`.
fn step_count(t_final: f64, dt: f64) -> (usize, f64) {
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, t_final / steps as f64)
}

fn check_preconditions(
    theta0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    dt: f64,
) -> Result<()> {
    cfg.validate()?;
    ensure_same_grid(theta0.grid(), table.grid(), "initial state vs symbol table")?;
    ensure_same_grid(theta0.grid(), drift.grid(), "initial state vs drift")?;
    let grid = theta0.grid();
    let vmax = drift.max_abs();
    let h = grid.spacing();
    if vmax > 0.0 && dt > h / (2.0 * vmax) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "CFL violated: dt = {dt:e} > h/(2 max|v|) = {:e}",
            h / (2.0 * vmax)
        )));
    }
    let mask = spectral::dealias_mask(grid);
    let stiff = squared_moduli(grid)
        .iter()
        .zip(table.values())
        .zip(&mask)
        .filter(|(_, &keep)| keep)
        .map(|((k2, a), _)| a + cfg.epsilon * k2)
        .fold(0.0, f64::max);
    if dt * stiff > cfg.stiffness_cap {
        return Err(Error::Precondition(format!(
            "stiffness bound violated: dt·max(a+ε|ξ|²) = {:e} exceeds the cap {}",
            dt * stiff,
            cfg.stiffness_cap
        )));
    }
    if !theta0.is_finite() {
        return Err(Error::Numerical("initial state is not finite".into()));
    }
    Ok(())
}

/// Direction of time for the transport term.
#[derive(Clone, Copy)]
enum Direction {
    Forward,
    /// Backward dual to horizon `t`: drift sampled at `t − s`, sign flipped.
    Backward(f64),
}

fn run(theta0: &ScalarField, drift: &Drift, table: &SymbolTable, cfg: &SolverConfig, horizon: f64, dir: Direction) -> Result<Trajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    // a horizon shorter than dt is taken in one step
    let cfg = SolverConfig {
        t_final: horizon,
        dt: cfg.dt.min(horizon),
        ..*cfg
    };
    let (steps, dt) = step_count(horizon, cfg.dt);
    check_preconditions(theta0, drift, table, &cfg, dt)?;
    match cfg.scheme {
        Scheme::ExponentialEuler => run_exponential(theta0, drift, table, &cfg, steps, dt, dir),
        Scheme::DuhamelPicard => run_picard_chain(theta0, drift, table, &cfg, steps, dt, dir),
    }
}

fn drift_time(dir: Direction, s: f64) -> (f64, f64) {
    match dir {
        Direction::Forward => (s, 1.0),
        Direction::Backward(t) => (t - s, -1.0),
    }
}

fn run_exponential(
    theta0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    steps: usize,
    dt: f64,
    dir: Direction,
) -> Result<Trajectory> {
    let st = Stepper::new(*theta0.grid());
    let decay: Vec<f64> = st
        .k2
        .iter()
        .zip(table.values())
        .map(|(k2, a)| (-dt * (a + cfg.epsilon * k2)).exp())
        .collect();
    let moving = !drift.is_zero();
    let mut cache: Vec<Option<Vec<Vec<f64>>>> = vec![None; drift.count()];
    let mut theta = st.project(theta0.values());
    let mut traj = Trajectory::new();
    traj.push(0.0, st.to_field(&theta)?)?;
    for n in 0..steps {
        let s_mid = (n as f64 + 0.5) * dt;
        if moving {
            let (t, sign) = drift_time(dir, s_mid);
            let idx = drift.index_at(t);
            if cache[idx].is_none() {
                cache[idx] = Some(st.band_drift(drift.at(t)));
            }
            st.rk4_transport(&mut theta, cache[idx].as_ref().unwrap(), dt, sign);
        }
        for (c, m) in theta.iter_mut().zip(&decay) {
            *c *= m;
        }
        traj.push((n + 1) as f64 * dt, st.to_field(&theta)?)?;
    }
    Ok(traj)
}

/// Largest window `T′` (a multiple of `dt`) with budget ≤ 1/2.
fn picard_window(table: &SymbolTable, cfg: &SolverConfig, v_inf: f64, dt: f64) -> Result<usize> {
    let budget = |t: f64| budget_for(table, t, cfg.epsilon, v_inf, cfg.budget_constant);
    if budget(dt)? > 0.5 {
        return Err(Error::Precondition(format!(
            "no Picard window: the contraction budget at T′ = dt = {dt:e} is {:.4} > 1/2; reduce dt",
            budget(dt)?
        )));
    }
    let (mut lo, mut hi) = (1usize, 2usize);
    while budget(hi as f64 * dt)? <= 0.5 && hi < (1 << 30) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if budget(mid as f64 * dt)? <= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn run_picard_chain(
    theta0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    steps: usize,
    dt: f64,
    dir: Direction,
) -> Result<Trajectory> {
    if cfg.epsilon <= 0.0 {
        return Err(Error::Precondition(
            "the Duhamel–Picard scheme needs ε > 0 (the budget diverges as ε → 0)".into(),
        ));
    }
    let st = Stepper::new(*theta0.grid());
    let mut window = picard_window(table, cfg, drift.max_abs(), dt)?;
    let mut traj = Trajectory::new();
    let mut theta = st.project(theta0.values());
    traj.push(0.0, st.to_field(&theta)?)?;
    let mut done = 0;
    while done < steps {
        window = window.min(steps - done);
        let (t, sign) = drift_time(dir, done as f64 * dt + 0.5 * window as f64 * dt);
        let v = drift.at(t).scaled(sign);
        let out = picard_core(&st, &theta, &v, table, cfg, window, dt)?;
        for (m, s) in out.path.iter().enumerate().skip(1) {
            traj.push((done + m) as f64 * dt, st.to_field(s)?)?;
        }
        theta = out.path.last().unwrap().clone();
        done += window;
    }
    Ok(traj)
}

struct PicardCore {
    path: Vec<Vec<Complex64>>,
    increments: Vec<f64>,
}

/// Fixed point of the left-endpoint Duhamel map on `m` sub-steps of size `dt`.
fn picard_core(
    st: &Stepper,
    theta0: &[Complex64],
    v: &VelocityField,
    table: &SymbolTable,
    cfg: &SolverConfig,
    m: usize,
    dt: f64,
) -> Result<PicardCore> {
    let heat_step: Vec<f64> = st.k2.iter().map(|k2| (-cfg.epsilon * dt * k2).exp()).collect();
    let ve = mollify_velocity(v, cfg.epsilon)?;
    let moving = ve.max_abs() > 0.0;
    let vb = st.band_drift(&ve);
    // e^{ε t_j Δ} θ0
    let mut free = Vec::with_capacity(m + 1);
    free.push(theta0.to_vec());
    for j in 0..m {
        let next: Vec<Complex64> = free[j].iter().zip(&heat_step).map(|(c, h)| c * h).collect();
        free.push(next);
    }
    let mut path = free.clone();
    let scale = st.l2(theta0).max(f64::MIN_POSITIVE);
    let mut increments = Vec::new();
    for _ in 0..cfg.picard_max_iter {
        let mut next = Vec::with_capacity(m + 1);
        next.push(theta0.to_vec());
        let mut acc = vec![Complex64::default(); theta0.len()];
        for j in 0..m {
            // F_j = P∇·(v_ε θ_j) − a θ_j
            let mut f: Vec<Complex64> = path[j].iter().zip(table.values()).map(|(c, a)| -c * a).collect();
            if moving {
                for (x, t) in f.iter_mut().zip(st.transport(&path[j], &vb)) {
                    *x += t;
                }
            }
            for ((s, x), h) in acc.iter_mut().zip(&f).zip(&heat_step) {
                *s = (*s + x * dt) * h;
            }
            next.push(free[j + 1].iter().zip(&acc).map(|(a, b)| a + b).collect());
        }
        let inc = next
            .iter()
            .zip(&path)
            .map(|(a, b)| {
                let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                st.l2(&d)
            })
            .fold(0.0, f64::max);
        path = next;
        if !inc.is_finite() {
            return Err(Error::Numerical("Picard iterate is not finite".into()));
        }
        increments.push(inc);
        if inc <= cfg.picard_tol * scale {
            return Ok(PicardCore { path, increments });
        }
    }
    Err(Error::Numerical(format!(
        "Picard iteration did not reach tolerance {:e} within {} iterations (last increment {:e})",
        cfg.picard_tol,
        cfg.picard_max_iter,
        increments.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Result of [`picard_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PicardSolution {
    /// θ(·, T′)
    pub state: ScalarField,
    /// `max_m ‖θ^{k+1}(t_m) − θ^k(t_m)‖₂` per iteration.
    pub increments: Vec<f64>,
    pub budget: f64,
    pub substeps: usize,
}

impl PicardSolution {
    /// Ratios of successive increments above `floor` (smaller ones are
    /// round-off dominated).
    pub fn increment_ratios(&self, floor: f64) -> Vec<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Solves the integral form on `[0, T′]` by Picard iteration with the
/// mollified drift `v_ε`, after checking that the contraction budget is ≤ 1/2.
pub fn picard_solve(
    theta0: &ScalarField,
    v: &VelocityField,
    table: &SymbolTable,
    cfg: &SolverConfig,
    tprime: f64,
) -> Result<PicardSolution> {
    cfg.validate()?;
    ensure_same_grid(theta0.grid(), table.grid(), "initial state vs symbol table")?;
    ensure_same_grid(theta0.grid(), v.grid(), "initial state vs drift")?;
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Precondition("Picard iteration needs ε > 0".into()));
    }
    let ve = mollify_velocity(v, cfg.epsilon)?;
    let budget = budget_for(table, tprime, cfg.epsilon, ve.max_abs(), cfg.budget_constant)?;
    if budget > 0.5 {
        return Err(Error::Precondition(format!(
            "smallness condition C(Φ(T′,ε) + (T′/ε)^(1/2)‖v‖∞) ≤ 1/2 violated: budget = {budget:.6} at T′ = {tprime:e}, ε = {:e}",
            cfg.epsilon
        )));
    }
    let (m, dt) = step_count(tprime, cfg.dt);
    let st = Stepper::new(*theta0.grid());
    let theta = st.project(theta0.values());
    let out = picard_core(&st, &theta, v, table, cfg, m, dt)?;
    Ok(PicardSolution {
        state: st.to_field(out.path.last().unwrap())?,
        increments: out.increments,
        budget,
        substeps: m,
    })
}

/// Marches the forward problem from `theta0` to `cfg.t_final`.
pub fn solve_forward(theta0: &ScalarField, drift: &Drift, table: &SymbolTable, cfg: &SolverConfig) -> Result<Trajectory> {
    run(theta0, drift, table, cfg, cfg.t_final, Direction::Forward)
}

/// Marches the backward dual problem from `psi0` over `s ∈ [0, t_final]`
/// with the drift sampled at `t_final − s`.
pub fn solve_backward_dual(
    psi0: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    t_final: f64,
) -> Result<Trajectory> {
    run(psi0, drift, table, cfg, t_final, Direction::Backward(t_final))
}

/// Backward dual over `s ∈ [s_start, s_start + span]` of a run anchored at
/// `t_anchor`: the drift is sampled at `t_anchor − s`. Times in the returned
/// trajectory are relative to `s_start`.
pub fn solve_backward_dual_from(
    psi: &ScalarField,
    drift: &Drift,
    table: &SymbolTable,
    cfg: &SolverConfig,
    t_anchor: f64,
    s_start: f64,
    span: f64,
) -> Result<Trajectory> {
    run(psi, drift, table, cfg, span, Direction::Backward(t_anchor - s_start))
}

/// `‖L h_{ετ}‖₁` and the small-time exponent predicted for the kernel's case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatLevyNorm {
    pub eps_tau: f64,
    pub value: f64,
    pub predicted_exponent: f64,
}

/// Predicted power of `ετ` in the small-time bound on `‖L h_{ετ}‖₁`.
pub fn predicted_heat_levy_exponent(spec: &KernelSpec) -> f64 {
    match spec.case {
        KernelCase::A => -spec.beta.max(spec.delta),
        KernelCase::B => -spec.alpha,
        KernelCase::C | KernelCase::D => -0.5,
    }
}

/// Grid L¹ norm of `L` applied to the periodic heat kernel at time `ετ`.
pub fn heat_levy_l1_norm(table: &SymbolTable, tau: f64, epsilon: f64) -> Result<HeatLevyNorm> {
    let et = tau * epsilon;
    if !(et > 0.0) {
        return Err(Error::Argument(format!("need τ·ε > 0, got {et}")));
    }
    let grid = table.grid();
    let inv_vol = 1.0 / grid.volume();
    let spec: Vec<Complex64> = squared_moduli(grid)
        .iter()
        .zip(table.values())
        .map(|(k2, a)| Complex64::new(inv_vol * a * (-et * k2).exp(), 0.0))
        .collect();
    let f = ScalarField::from_spectrum(*grid, &spec);
    let value = grid.cell_volume() * f.values().iter().map(|x| x.abs()).sum::<f64>();
    Ok(HeatLevyNorm {
        eps_tau: et,
        value,
        predicted_exponent: table.spec().map(predicted_heat_levy_exponent).unwrap_or(f64::NAN),
    })
}

/// `cos(ξ_k·x)` sampled on the grid for the integer mode `k`.
pub fn mode_field(grid: TorusGrid, k: [i64; 2]) -> ScalarField {
    let dk = 2.0 * PI / grid.lbox();
    ScalarField::from_fn(grid, |x| (dk * (k[0] as f64 * x[0] + k[1] as f64 * x[1])).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::compute_symbol;
    use crate::random::{band_limited_field, random_velocity};

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::standard(2, n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn heat_semigroup_identities() {
        let g = grid(32);
        let f = band_limited_field(g, 6, 1);
        assert_eq!(heat_semigroup(&f, 0.0, 0.3).unwrap(), f);
        let m = mode_field(g, [2, 1]);
        let out = heat_semigroup(&m, 0.5, 0.1).unwrap();
        let expect = m.scaled((-0.1f64 * 0.5 * 5.0).exp());
        for (a, b) in out.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let two = heat_semigroup(&heat_semigroup(&f, 0.2, 0.1).unwrap(), 0.3, 0.1).unwrap();
        let one = heat_semigroup(&f, 0.5, 0.1).unwrap();
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(heat_semigroup(&f, -1.0, 0.1).is_err());
    }

    #[test]
    fn levy_multiplier_on_modes_and_constants() {
        let g = grid(32);
        let t = SymbolTable::power(g, 2.0, 0.5);
        let c = apply_levy(&ScalarField::constant(g, 3.0), &t).unwrap();
        assert!(c.max_abs() < 1e-13);
        let m = mode_field(g, [3, 0]);
        let out = apply_levy(&m, &t).unwrap();
        for (a, b) in out.values().iter().zip(m.values()) {
            assert!((a - 6.0 * b).abs() < 1e-12);
        }
        assert!(apply_levy(&ScalarField::zeros(grid(16)), &t).is_err());
    }

    #[test]
    fn mollifier_preserves_constants_and_bounds() {
        let g = grid(32);
        let c = VelocityField::constant(g, [0.3, -0.2]);
        let m = mollify_velocity(&c, 0.2).unwrap();
        for (a, b) in m.component(0).iter().zip(c.component(0)) {
            assert!((a - b).abs() < 1e-14);
        }
        let v = random_velocity(g, 6, 1.0, 3).unwrap();
        let vm = mollify_velocity(&v, 0.1).unwrap();
        assert!(vm.max_abs() <= v.max_abs() + 1e-12);
        assert!(vm.max_divergence() <= 1e-10 * vm.max_abs());
        assert!(mollify_velocity(&v, 0.0).is_err());
    }

    #[test]
    fn mollifier_converges_quadratically() {
        let g = grid(32);
        let v = random_velocity(g, 4, 1.0, 5).unwrap();
        let err = |e: f64| {
            let m = mollify_velocity(&v, e).unwrap();
            m.component(0)
                .iter()
                .zip(v.component(0))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let h = g.spacing();
        assert!(err(1e-4) < 1e-6);
        let ratio = err(h / 8.0) / err(h / 16.0);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn budget_examples() {
        let d = KernelSpec::power_law(2, 0.5);
        let eps = 0.01;
        assert!((contraction_budget(eps / 4.0, eps, 0.0, &d, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let b = KernelSpec::power_law(2, 0.25);
        let small = contraction_budget(1e-12, 0.1, 0.0, &b, 1.0).unwrap();
        assert!(small < 1e-8);
        let a = KernelSpec::piecewise(2, KernelCase::A, 0.2, 0.3, 0.3);
        let t = 0.01f64;
        let single = t.powf(0.7) / eps.powf(0.3);
        assert!(rel(contraction_budget(t, eps, 0.0, &a, 1.0).unwrap(), 2.0 * single) < 1e-14);
        assert!(contraction_budget(0.0, eps, 0.0, &d, 1.0).is_err());
    }

    #[test]
    fn picard_without_drift_or_kernel_is_the_heat_flow() {
        let g = grid(16);
        let f = band_limited_field(g, 5, 2);
        let cfg = SolverConfig::new(0.05, 0.01, 1.0);
        let zero = SymbolTable::zero(g);
        let out = picard_solve(&f, &VelocityField::zero(g), &zero, &cfg, 0.04).unwrap();
        let expect = heat_semigroup(&f, 0.04, 0.05).unwrap();
        for (a, b) in out.state.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn picard_refuses_large_windows() {
        let g = grid(16);
        let d = KernelSpec::power_law(2, 0.5);
        let t = compute_symbol(&d, &g).unwrap();
        let cfg = SolverConfig::new(0.01, 0.001, 1.0);
        let err = picard_solve(&ScalarField::zeros(g), &VelocityField::zero(g), &t, &cfg, 0.01).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn constant_state_is_steady() {
        let g = grid(32);
        let v = random_velocity(g, 5, 1.0, 9).unwrap();
        let t = compute_symbol(&KernelSpec::power_law(2, 0.5), &g).unwrap();
        let cfg = SolverConfig::new(1e-3, 0.02, 0.2);
        let tr = solve_forward(&ScalarField::constant(g, 2.5), &v.into(), &t, &cfg).unwrap();
        for s in &tr.states {
            assert!(s.values().iter().all(|x| (x - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn modes_decay_without_drift() {
        let g = grid(32);
        let t = compute_symbol(&KernelSpec::power_law(2, 0.25), &g).unwrap();
        let eps = 0.01;
        let k = [2, 3];
        let cfg = SolverConfig::new(eps, 0.05, 0.5);
        let tr = solve_forward(&mode_field(g, k), &Drift::zero(g), &t, &cfg).unwrap();
        let rate = t.at_mode(k) + eps * 13.0;
        let expect = mode_field(g, k).scaled((-rate * 0.5).exp());
        for (a, b) in tr.last().values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_and_l2_along_a_drifted_run() {
        let g = grid(32);
        let v = random_velocity(g, 5, 1.0, 4).unwrap();
        let t = compute_symbol(&KernelSpec::power_law(2, 0.5), &g).unwrap();
        let f = band_limited_field(g, 6, 7).map(|x| x + 0.3);
        let cfg = SolverConfig::new(1e-3, 0.04, 1.0);
        let tr = solve_forward(&f, &v.into(), &t, &cfg).unwrap();
        let m0 = tr.diagnostics[0].integral;
        for w in tr.diagnostics.windows(2) {
            assert!(rel(w[1].integral, m0) < 1e-10);
            assert!(w[1].l2 <= w[0].l2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cfl_is_enforced() {
        let g = grid(32);
        let v = random_velocity(g, 5, 1.0, 4).unwrap();
        let t = SymbolTable::zero(g);
        let cfg = SolverConfig::new(0.0, 0.2, 1.0);
        let err = solve_forward(&ScalarField::zeros(g), &v.into(), &t, &cfg).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn backward_equals_forward_without_drift() {
        let g = grid(16);
        let t = compute_symbol(&KernelSpec::power_law(2, 0.5), &g).unwrap();
        let f = band_limited_field(g, 4, 3);
        let cfg = SolverConfig::new(0.01, 0.05, 0.5);
        let a = solve_forward(&f, &Drift::zero(g), &t, &cfg).unwrap();
        let b = solve_backward_dual(&f, &Drift::zero(g), &t, &cfg, 0.5).unwrap();
        assert_eq!(a.last(), b.last());
    }

    #[test]
    fn picard_chain_tracks_the_exponential_scheme() {
        let g = grid(16);
        let d = KernelSpec::power_law(2, 0.5);
        let t = compute_symbol(&d, &g).unwrap();
        let f = band_limited_field(g, 3, 8);
        let mut cfg = SolverConfig::new(0.2, 2e-4, 4e-3).with_scheme(Scheme::DuhamelPicard);
        cfg.budget_constant = 1.0;
        let p = solve_forward(&f, &Drift::zero(g), &t, &cfg).unwrap();
        let e = solve_forward(&f, &Drift::zero(g), &t, &cfg.with_scheme(Scheme::ExponentialEuler)).unwrap();
        assert_eq!(p.len(), e.len());
        let diff = p.last().axpy(-1.0, e.last()).max_abs();
        assert!(diff < 1e-2 * f.max_abs(), "{diff}");
    }

    #[test]
    fn heat_levy_norm_vanishes_for_long_times() {
        let g = grid(32);
        let t = compute_symbol(&KernelSpec::power_law(2, 0.5), &g).unwrap();
        let short = heat_levy_l1_norm(&t, 0.01, 1.0).unwrap();
        let long = heat_levy_l1_norm(&t, 50.0, 1.0).unwrap();
        assert!(long.value < 1e-10 * short.value);
        assert_eq!(short.predicted_exponent, -0.5);
        assert!(heat_levy_l1_norm(&t, 0.0, 1.0).is_err());
    }

    #[test]
    fn trajectory_csv_shape() {
        let g = grid(16);
        let cfg = SolverConfig::new(0.1, 0.1, 0.3);
        let tr = solve_forward(&mode_field(g, [1, 0]), &Drift::zero(g), &SymbolTable::zero(g), &cfg).unwrap();
        assert_eq!(tr.len(), 4);
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("t,l1,l2,linf,min,max\n"));
    }
}
