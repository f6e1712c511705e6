//! Config-driven suites behind the command-line runner.
//!
//! Configs are flat `key = value` text with dotted section prefixes
//! (`grid.n = 64`, `kernel.alpha = 0.5`, …); `#` starts a comment. Every
//! suite writes its artifacts plus `summary.json` into the output directory.
//! Outputs depend only on the config and the seed, never on `--parallel`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::field::{
    holder_seminorm, lp_norm, make_divfree_velocity, raw_bytes, ScalarField, TorusGrid, VelocityField,
};
use crate::kernel::{
    compute_symbol, compute_symbol_with, fmt_f64, symbol_at, symbol_bound_margins_in, KernelFamily, KernelSpec,
    QuadratureOptions, SymbolTable,
};
use crate::molecules::{
    build_molecule, check_molecule, choose_k, envelopes_to_csv, iterate_molecule, transfer_check, window_count,
    MoleculeParams, DEFAULT_C_CAL, DEFAULT_WINDOW_FACTOR,
};
use crate::random::{band_limited_field, member_seed, random_velocity, rng};
use crate::solver::{
    calibrate_budget_constant, contraction_budget, heat_levy_l1_norm, mode_field, mollify_velocity, picard_solve,
    predicted_heat_levy_exponent, solve_forward, Drift, Scheme, SolverConfig, Trajectory,
};
use crate::verify::{
    besov_ensemble, besov_split_check, commutator_norm, commutator_scaling_check, cutoff_profile, loglog_slope,
    strook_varopoulos_check, InequalityReport,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Suite {
    MaxPrinciple,
    Positivity,
    Symbol,
    Besov,
    SvIneq,
    Commutator,
    Molecule,
    Transfer,
    HeatLevy,
    Picard,
    Holder,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::MaxPrinciple,
        Suite::Positivity,
        Suite::Symbol,
        Suite::Besov,
        Suite::SvIneq,
        Suite::Commutator,
        Suite::Molecule,
        Suite::Transfer,
        Suite::HeatLevy,
        Suite::Picard,
        Suite::Holder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::MaxPrinciple => "maxprinciple",
            Suite::Positivity => "positivity",
            Suite::Symbol => "symbol",
            Suite::Besov => "besov",
            Suite::SvIneq => "svineq",
            Suite::Commutator => "commutator",
            Suite::Molecule => "molecule",
            Suite::Transfer => "transfer",
            Suite::HeatLevy => "heatlevy",
            Suite::Picard => "picard",
            Suite::Holder => "holder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite `{s}`")))
    }

    /// The statement each suite exercises, recorded in every summary.
    pub fn anchor(&self) -> &'static str {
        match self {
            Suite::MaxPrinciple => "Lp maximum principle: ||theta(t)||_p <= ||theta0||_p",
            Suite::Positivity => "positivity principle: 0 <= theta0 <= M implies 0 <= theta(t) <= M",
            Suite::Symbol => "Levy-Khinchin symbol a(xi) = int (1 - cos xi.y) pi(y) dy and its two-sided bounds",
            Suite::Besov => "Besov regularity chain for ||f||^p in B^{2alpha/p,p}_p",
            Suite::SvIneq => "Stroock-Varopoulos inequality C<L|f|^{p/2},|f|^{p/2}> <= <Lf,|f|^{p-2}f>",
            Suite::Commutator => "cutoff commutator bound ||[L,phi_R]A||_p <= C(R^{-2beta}+R^{-2delta})||A||_p",
            Suite::Molecule => "molecule envelopes (r+Ks) and the L1 cap ||psi(t)||_1 <= C T0^{-gamma}",
            Suite::Transfer => "transfer identity <theta(t),psi(0)> = <theta(0),psi(t)>",
            Suite::HeatLevy => "heat-kernel operator norm ||L h_{eps tau}||_1 small-time power",
            Suite::Picard => "Picard contraction for the viscous integral formulation",
            Suite::Holder => "Holder regularity C^gamma of bounded solutions",
        }
    }
}

/// Drift recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityRecipe {
    Zero,
    /// Stream function `Σ amp·sin(2π k·x / Lbox)` over `(k, amp)` pairs.
    StaticStream(Vec<([i64; 2], f64)>),
    /// Random band-limited drift, one per ensemble member.
    Random { kmax: usize, vmax: f64 },
    /// `frames` random drifts sampled every `frame_dt`.
    TimeDependent {
        kmax: usize,
        vmax: f64,
        frames: usize,
        frame_dt: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub epsilon: f64,
    /// `None` picks the CFL step `h/(2 max|v|)`.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub budget_constant: f64,
    pub stiffness_cap: f64,
}

impl SolverSettings {
    fn config(&self, dt: f64) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            dt,
            t_final: self.t_final,
            scheme: self.scheme,
            picard_tol: self.picard_tol,
            picard_max_iter: self.picard_max_iter,
            budget_constant: self.budget_constant,
            stiffness_cap: self.stiffness_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeSettings {
    pub gamma: f64,
    pub omega: f64,
    pub radii: Vec<f64>,
    pub t0: f64,
    pub window_factor: f64,
    pub c_cal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub grid: TorusGrid,
    pub kernel: KernelSpec,
    pub solver: SolverSettings,
    pub velocity: VelocityRecipe,
    pub ensemble_size: usize,
    /// Band limit of random scalar fields.
    pub field_kmax: usize,
    pub molecule: MoleculeSettings,
    pub snapshots: bool,
    /// Suite-specific `suite.*` entries.
    pub extra: BTreeMap<String, String>,
    /// Worker threads for ensemble members; does not change any output.
    pub parallel: usize,
}

/// Parses flat `key = value` lines.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            key: format!("line {}", no + 1),
            reason: format!("expected `key = value`, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config {
                key: format!("line {}", no + 1),
                reason: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config {
                key: k.to_string(),
                reason: "duplicate key".into(),
            });
        }
    }
    Ok(out)
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

struct Entries<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Entries<'_> {
    fn bad(key: &str, reason: impl Into<String>) -> Error {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => {
                let x: f64 = v.parse().map_err(|_| Self::bad(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(Self::bad(key, "must be finite"));
                }
                Ok(x)
            }
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Self::bad(key, format!("`{v}` is not a non-negative integer"))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.to_ascii_lowercase()) {
            None => Ok(default),
            Some(v) if v == "true" || v == "1" || v == "yes" => Ok(true),
            Some(v) if v == "false" || v == "0" || v == "no" => Ok(false),
            Some(v) => Err(Self::bad(key, format!("`{v}` is not a boolean"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    let p = p.trim();
                    if p.eq_ignore_ascii_case("inf") {
                        Ok(f64::INFINITY)
                    } else {
                        p.parse::<f64>()
                            .map_err(|_| Self::bad(key, format!("`{p}` is not a number")))
                    }
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

const KNOWN_TOP: [&str; 5] = ["experiment", "seed", "output", "snapshots", "parallel"];
const KNOWN_SECTIONS: [(&str, &[&str]); 7] = [
    ("grid", &["dim", "n", "lbox"]),
    (
        "kernel",
        &[
            "family", "case", "alpha", "beta", "delta", "c1", "c2", "c3", "dim", "coeff", "exponent", "inner_coeff",
            "inner_exponent", "outer_coeff", "outer_exponent", "cutoff", "notch_inner", "notch_outer",
        ],
    ),
    (
        "solver",
        &[
            "epsilon", "dt", "t_final", "scheme", "picard_tol", "picard_max_iter", "budget_constant", "stiffness_cap",
        ],
    ),
    ("velocity", &["kind", "kmax", "vmax", "frames", "frame_dt", "stream"]),
    ("ensemble", &["size", "kmax"]),
    ("molecule", &["gamma", "omega", "radii", "t0", "window_factor", "c_cal"]),
    (
        "suite",
        &[
            "xi_min", "xi_max", "p", "shift", "radius_fractions", "norm_p", "refine_n", "eps_tau_min", "eps_tau_max",
            "points", "substeps", "mode_dt", "gamma", "steepness",
        ],
    ),
];

fn known_key(k: &str) -> bool {
    if KNOWN_TOP.contains(&k) {
        return true;
    }
    match k.split_once('.') {
        Some((sec, rest)) => KNOWN_SECTIONS.iter().any(|(s, keys)| *s == sec && keys.contains(&rest)),
        None => false,
    }
}

struct Defaults {
    grid: (usize, usize, f64),
    epsilon: f64,
    dt: Option<f64>,
    t_final: f64,
    velocity: VelocityRecipe,
    ensemble: usize,
    kmax: usize,
}

fn defaults(suite: Suite) -> Defaults {
    let mut d = Defaults {
        grid: (2, 64, 2.0 * PI),
        epsilon: 1e-3,
        dt: None,
        t_final: 1.0,
        velocity: VelocityRecipe::Zero,
        ensemble: 1,
        kmax: 8,
    };
    match suite {
        Suite::MaxPrinciple | Suite::Positivity => {
            d.velocity = VelocityRecipe::Random { kmax: 4, vmax: 1.0 };
            d.ensemble = 10;
        }
        Suite::Symbol => {}
        Suite::Besov => {
            d.ensemble = 20;
            d.kmax = 6;
        }
        Suite::SvIneq => d.ensemble = 50,
        Suite::Commutator => {
            d.grid.1 = 256;
            d.kmax = 2;
        }
        Suite::Molecule => {
            d.grid = (2, 256, 4.0);
            d.epsilon = 0.0;
            d.t_final = 0.5;
            d.velocity = VelocityRecipe::Random { kmax: 3, vmax: 2.0 };
        }
        Suite::Transfer => {
            d.grid.1 = 32;
            d.t_final = 0.2;
            d.dt = Some(0.04);
            d.velocity = VelocityRecipe::Random { kmax: 3, vmax: 1.0 };
            d.ensemble = 5;
            d.kmax = 4;
        }
        Suite::HeatLevy => d.grid.1 = 512,
        Suite::Picard => {
            d.grid.1 = 32;
            d.epsilon = 0.1;
            d.velocity = VelocityRecipe::Random { kmax: 3, vmax: 1.0 };
            d.ensemble = 5;
            d.kmax = 6;
        }
        Suite::Holder => {
            d.grid.1 = 128;
            d.epsilon = 0.0;
            d.t_final = 0.25;
            d.velocity = VelocityRecipe::Random { kmax: 3, vmax: 1.0 };
        }
    }
    d
}

impl ExperimentConfig {
    /// The suite's default configuration.
    pub fn defaults(suite: Suite) -> Self {
        Self::from_entries(&BTreeMap::new(), Some(suite)).expect("defaults are valid")
    }

    /// Builds and validates a config; `suite` (from the command line) wins
    /// over a missing `experiment` key but must agree with a present one.
    pub fn from_entries(map: &BTreeMap<String, String>, suite: Option<Suite>) -> Result<Self> {
        for k in map.keys() {
            if !known_key(k) {
                return Err(Entries::bad(k, "unknown key"));
            }
        }
        let e = Entries { map };
        let suite = match (map.get("experiment"), suite) {
            (None, Some(s)) => s,
            (Some(name), None) => Suite::parse(name).map_err(|_| Entries::bad("experiment", format!("unknown suite `{name}`")))?,
            (Some(name), Some(s)) => {
                let named = Suite::parse(name).map_err(|_| Entries::bad("experiment", format!("unknown suite `{name}`")))?;
                if named != s {
                    return Err(Entries::bad(
                        "experiment",
                        format!("config names `{}` but `{}` was requested", named.name(), s.name()),
                    ));
                }
                s
            }
            (None, None) => return Err(Entries::bad("experiment", "missing")),
        };
        let d = defaults(suite);
        let seed = match map.get("seed") {
            None => 1,
            Some(v) => v.parse().map_err(|_| Entries::bad("seed", format!("`{v}` is not a u64")))?,
        };
        let dim = e.usize("grid.dim", d.grid.0)?;
        let n = e.usize("grid.n", d.grid.1)?;
        let lbox = e.f64("grid.lbox", d.grid.2)?;
        let grid = TorusGrid::new(dim, n, lbox).map_err(|err| Entries::bad("grid.*", err.to_string()))?;

        let kernel_map: BTreeMap<String, String> = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("kernel.").map(|s| (s.to_string(), v.clone())))
            .collect();
        let kernel = if kernel_map.is_empty() {
            KernelSpec::power_law(dim, 0.5)
        } else {
            let mut km = kernel_map;
            km.entry("dim".into()).or_insert_with(|| dim.to_string());
            KernelSpec::from_entries(&km, "kernel.")?
        };
        if kernel.dim != dim {
            return Err(Entries::bad("kernel.dim", "must match grid.dim"));
        }

        let scheme = match map.get("solver.scheme") {
            None => Scheme::ExponentialEuler,
            Some(s) => Scheme::parse(s).ok_or_else(|| Entries::bad("solver.scheme", format!("unknown scheme `{s}`")))?,
        };
        let dt = match map.get("solver.dt").map(|s| s.trim().to_ascii_lowercase()) {
            None => d.dt,
            Some(s) if s == "cfl" => None,
            Some(_) => Some(e.f64("solver.dt", 0.0)?),
        };
        let solver = SolverSettings {
            epsilon: e.f64("solver.epsilon", d.epsilon)?,
            dt,
            t_final: e.f64("solver.t_final", d.t_final)?,
            scheme,
            picard_tol: e.f64("solver.picard_tol", 1e-12)?,
            picard_max_iter: e.usize("solver.picard_max_iter", 200)?,
            budget_constant: e.f64("solver.budget_constant", 1.0)?,
            stiffness_cap: e.f64("solver.stiffness_cap", 64.0)?,
        };
        let solver_checks = [
            ("solver.epsilon", solver.epsilon >= 0.0, "must be ≥ 0"),
            ("solver.dt", solver.dt.is_none_or(|dt| dt > 0.0), "must be positive or `cfl`"),
            ("solver.t_final", solver.t_final > 0.0, "must be positive"),
            ("solver.t_final", solver.dt.is_none_or(|dt| solver.t_final >= dt), "is shorter than solver.dt"),
            ("solver.picard_tol", solver.picard_tol > 0.0, "must be positive"),
            ("solver.picard_max_iter", solver.picard_max_iter > 0, "must be at least 1"),
            ("solver.budget_constant", solver.budget_constant > 0.0, "must be positive"),
            ("solver.stiffness_cap", solver.stiffness_cap > 0.0, "must be positive"),
        ];
        if let Some((key, _, reason)) = solver_checks.iter().find(|c| !c.1) {
            return Err(Entries::bad(key, *reason));
        }

        let velocity = parse_velocity(&e, map, &d.velocity)?;
        if dim != 2 && velocity != VelocityRecipe::Zero {
            return Err(Entries::bad("velocity.kind", "drifts need grid.dim = 2"));
        }

        let radii = match e.list("molecule.radii")? {
            Some(r) => r,
            None => geometric(0.08, 0.45, 10),
        };
        let molecule = MoleculeSettings {
            gamma: e.f64("molecule.gamma", 0.25)?,
            omega: e.f64("molecule.omega", 0.5)?,
            radii,
            t0: e.f64("molecule.t0", 0.5)?,
            window_factor: e.f64("molecule.window_factor", DEFAULT_WINDOW_FACTOR)?,
            c_cal: e.f64("molecule.c_cal", DEFAULT_C_CAL)?,
        };
        if suite == Suite::Molecule {
            for (i, &r) in molecule.radii.iter().enumerate() {
                MoleculeParams::from_gamma(dim, molecule.gamma, molecule.omega, r, [0.0; 2])
                    .and_then(|p| p.validate_for(&kernel))
                    .map_err(|err| Entries::bad("molecule.radii", format!("entry {i}: {err}")))?;
            }
            if !(molecule.t0 > 0.0 && molecule.window_factor > 0.0 && molecule.c_cal > 0.0) {
                return Err(Entries::bad("molecule.*", "t0, window_factor and c_cal must be positive"));
            }
        }
        let ensemble_size = e.usize("ensemble.size", d.ensemble)?;
        if ensemble_size == 0 {
            return Err(Entries::bad("ensemble.size", "must be at least 1"));
        }
        let extra = map
            .iter()
            .filter(|(k, _)| k.starts_with("suite."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Self {
            suite,
            seed,
            output: map.get("output").map(PathBuf::from),
            grid,
            kernel,
            solver,
            velocity,
            ensemble_size,
            field_kmax: e.usize("ensemble.kmax", d.kmax)?,
            molecule,
            snapshots: e.bool("snapshots", false)?,
            extra,
            parallel: e.usize("parallel", 1)?.max(1),
        })
    }

    pub fn from_text(text: &str, suite: Option<Suite>) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?, suite)
    }

    fn extra_f64(&self, key: &str, default: f64) -> Result<f64> {
        Entries { map: &self.extra }.f64(key, default)
    }

    fn extra_usize(&self, key: &str, default: usize) -> Result<usize> {
        Entries { map: &self.extra }.usize(key, default)
    }

    fn extra_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(Entries { map: &self.extra }.list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    /// The effective config as sorted flat entries.
    pub fn to_entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("experiment", self.suite.name().into());
        put("seed", self.seed.to_string());
        put("grid.dim", self.grid.dim().to_string());
        put("grid.n", self.grid.n().to_string());
        put("grid.lbox", fmt_f64(self.grid.lbox()));
        for (k, v) in self.kernel.to_entries() {
            put(&format!("kernel.{k}"), v);
        }
        let s = &self.solver;
        put("solver.epsilon", fmt_f64(s.epsilon));
        put("solver.dt", s.dt.map_or("cfl".into(), fmt_f64));
        put("solver.t_final", fmt_f64(s.t_final));
        put("solver.scheme", s.scheme.as_str().into());
        put("solver.picard_tol", fmt_f64(s.picard_tol));
        put("solver.picard_max_iter", s.picard_max_iter.to_string());
        put("solver.budget_constant", fmt_f64(s.budget_constant));
        put("solver.stiffness_cap", fmt_f64(s.stiffness_cap));
        match &self.velocity {
            VelocityRecipe::Zero => put("velocity.kind", "zero".into()),
            VelocityRecipe::StaticStream(modes) => {
                put("velocity.kind", "static-stream".into());
                let s: Vec<String> = modes
                    .iter()
                    .map(|(k, a)| format!("{} {} {}", k[0], k[1], fmt_f64(*a)))
                    .collect();
                put("velocity.stream", s.join(";"));
            }
            VelocityRecipe::Random { kmax, vmax } => {
                put("velocity.kind", "random".into());
                put("velocity.kmax", kmax.to_string());
                put("velocity.vmax", fmt_f64(*vmax));
            }
            VelocityRecipe::TimeDependent {
                kmax,
                vmax,
                frames,
                frame_dt,
            } => {
                put("velocity.kind", "time-dependent".into());
                put("velocity.kmax", kmax.to_string());
                put("velocity.vmax", fmt_f64(*vmax));
                put("velocity.frames", frames.to_string());
                put("velocity.frame_dt", fmt_f64(*frame_dt));
            }
        }
        put("ensemble.size", self.ensemble_size.to_string());
        put("ensemble.kmax", self.field_kmax.to_string());
        let mo = &self.molecule;
        put("molecule.gamma", fmt_f64(mo.gamma));
        put("molecule.omega", fmt_f64(mo.omega));
        put("molecule.radii", mo.radii.iter().map(|r| fmt_f64(*r)).collect::<Vec<_>>().join(","));
        put("molecule.t0", fmt_f64(mo.t0));
        put("molecule.window_factor", fmt_f64(mo.window_factor));
        put("molecule.c_cal", fmt_f64(mo.c_cal));
        put("snapshots", self.snapshots.to_string());
        for (k, v) in &self.extra {
            put(k, v.clone());
        }
        m
    }

    /// Drift for ensemble member `member`.
    pub fn drift(&self, grid: TorusGrid, member: u64) -> Result<Drift> {
        let seed = member_seed(self.seed ^ 0xD41F7, member);
        match &self.velocity {
            VelocityRecipe::Zero => Ok(Drift::zero(grid)),
            VelocityRecipe::StaticStream(modes) => {
                let dk = 2.0 * PI / grid.lbox();
                let stream = ScalarField::from_fn(grid, |x| {
                    modes
                        .iter()
                        .map(|(k, a)| a * (dk * (k[0] as f64 * x[0] + k[1] as f64 * x[1])).sin())
                        .sum()
                });
                Ok(make_divfree_velocity(&stream)?.into())
            }
            VelocityRecipe::Random { kmax, vmax } => Ok(random_velocity(grid, *kmax, *vmax, seed)?.into()),
            VelocityRecipe::TimeDependent {
                kmax,
                vmax,
                frames,
                frame_dt,
            } => {
                let fields = (0..*frames as u64)
                    .map(|f| random_velocity(grid, *kmax, *vmax, member_seed(seed, f)))
                    .collect::<Result<Vec<_>>>()?;
                Drift::sampled(*frame_dt, fields)
            }
        }
    }

    /// Random scalar field for ensemble member `member` of stream `stream`.
    pub fn field(&self, grid: TorusGrid, stream: u64, member: u64) -> ScalarField {
        band_limited_field(grid, self.field_kmax, member_seed(member_seed(self.seed, stream), member))
    }

    fn step_for(&self, grid: &TorusGrid, drift: &Drift) -> f64 {
        match self.solver.dt {
            Some(dt) => dt,
            None => {
                let v = drift.max_abs();
                if v > 0.0 {
                    grid.spacing() / (2.0 * v)
                } else {
                    grid.spacing()
                }
            }
        }
    }
}

fn parse_velocity(e: &Entries, map: &BTreeMap<String, String>, default: &VelocityRecipe) -> Result<VelocityRecipe> {
    let (dk, dv) = match default {
        VelocityRecipe::Random { kmax, vmax } | VelocityRecipe::TimeDependent { kmax, vmax, .. } => (*kmax, *vmax),
        _ => (3, 1.0),
    };
    let kind = match map.get("velocity.kind") {
        None => return Ok(default.clone()),
        Some(k) => k.trim().to_ascii_lowercase(),
    };
    let kmax = e.usize("velocity.kmax", dk)?;
    let vmax = e.f64("velocity.vmax", dv)?;
    if !(vmax >= 0.0) {
        return Err(Entries::bad("velocity.vmax", "must be non-negative"));
    }
    match kind.as_str() {
        "zero" => Ok(VelocityRecipe::Zero),
        "random" => Ok(VelocityRecipe::Random { kmax, vmax }),
        "time-dependent" | "time_dependent" => {
            let frames = e.usize("velocity.frames", 8)?;
            let frame_dt = e.f64("velocity.frame_dt", 0.1)?;
            if frames == 0 || !(frame_dt > 0.0) {
                return Err(Entries::bad("velocity.frames", "need frames ≥ 1 and frame_dt > 0"));
            }
            Ok(VelocityRecipe::TimeDependent {
                kmax,
                vmax,
                frames,
                frame_dt,
            })
        }
        "static-stream" | "static_stream" => {
            let text = map
                .get("velocity.stream")
                .ok_or_else(|| Entries::bad("velocity.stream", "missing; expected `k1 k2 amp; …`"))?;
            let modes = text
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|m| {
                    let p: Vec<&str> = m.split_whitespace().collect();
                    let bad = || Entries::bad("velocity.stream", format!("`{}` is not `k1 k2 amp`", m.trim()));
                    if p.len() != 3 {
                        return Err(bad());
                    }
                    let k1 = p[0].parse::<i64>().map_err(|_| bad())?;
                    let k2 = p[1].parse::<i64>().map_err(|_| bad())?;
                    let a = p[2].parse::<f64>().map_err(|_| bad())?;
                    Ok(([k1, k2], a))
                })
                .collect::<Result<Vec<_>>>()?;
            if modes.is_empty() {
                return Err(Entries::bad("velocity.stream", "no modes given"));
            }
            Ok(VelocityRecipe::StaticStream(modes))
        }
        other => Err(Entries::bad("velocity.kind", format!("unknown drift recipe `{other}`"))),
    }
}

/// One named pass/fail check in a summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub anchor: &'static str,
    pub pass: bool,
    pub values: BTreeMap<String, Value>,
}

impl Check {
    fn new(suite: Suite, name: &str, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            anchor: suite.anchor(),
            pass,
            values: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.values.insert(key.to_string(), v.into());
        self
    }

    pub fn value_f64(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub anchor: &'static str,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub config: BTreeMap<String, String>,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_line(self)
    }
}

/// A suite's in-memory artifacts: file name and contents.
pub type Artifacts = Vec<(String, Vec<u8>)>;

/// Runs `f(0..n)` on up to `threads` workers and returns results in index order.
pub fn par_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(&f).collect();
    }
    let workers = threads.min(n);
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("suite worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index is visited")).collect()
}

/// Runs the suite in memory.
pub fn execute_suite(cfg: &ExperimentConfig) -> Result<(SuiteReport, Artifacts)> {
    let (checks, files) = match cfg.suite {
        Suite::MaxPrinciple => suite_forward(cfg, false)?,
        Suite::Positivity => suite_forward(cfg, true)?,
        Suite::Symbol => suite_symbol(cfg)?,
        Suite::Besov => suite_besov(cfg)?,
        Suite::SvIneq => suite_svineq(cfg)?,
        Suite::Commutator => suite_commutator(cfg)?,
        Suite::Molecule => suite_molecule(cfg)?,
        Suite::Transfer => suite_transfer(cfg)?,
        Suite::HeatLevy => suite_heatlevy(cfg)?,
        Suite::Picard => suite_picard(cfg)?,
        Suite::Holder => suite_holder(cfg)?,
    };
    let report = SuiteReport {
        suite: cfg.suite.name(),
        anchor: cfg.suite.anchor(),
        seed: cfg.seed,
        pass: checks.iter().all(|c| c.pass),
        checks,
        files: files.iter().map(|f| f.0.clone()).collect(),
        config: cfg.to_entries(),
    };
    Ok((report, files))
}

/// Runs the suite and writes its artifacts and `summary.json` into `out`.
pub fn run_suite(cfg: &ExperimentConfig, out: &Path) -> Result<SuiteReport> {
    let (report, files) = execute_suite(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (name, bytes) in &files {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let p = out.join("summary.json");
    fs::write(&p, report.to_json() + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(report)
}

fn text(name: String, body: String) -> (String, Vec<u8>) {
    (name, body.into_bytes())
}

fn raw_snapshot(name: String, f: &ScalarField) -> (String, Vec<u8>) {
    (name, raw_bytes(f))
}

fn json_lines(reports: &[InequalityReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

fn vals(xs: &[f64]) -> Value {
    Value::from(xs.to_vec())
}

struct ForwardMember {
    traj: Trajectory,
    l2_step: f64,
    l1_rise: f64,
    linf_rise: f64,
    mean_drift: f64,
    min: f64,
    max: f64,
    dt: f64,
}

fn forward_member(cfg: &ExperimentConfig, table: &SymbolTable, i: usize, positive: bool) -> Result<ForwardMember> {
    let g = cfg.grid;
    let drift = cfg.drift(g, i as u64)?;
    let base = cfg.field(g, 0, i as u64);
    let theta0 = if positive { base.map(|x| 0.5 * (1.0 + x)) } else { base };
    let dt = cfg.step_for(&g, &drift);
    let traj = solve_forward(&theta0, &drift, table, &cfg.solver.config(dt))?;
    let d = &traj.diagnostics;
    let (l1_0, l2_0, li_0) = (d[0].l1, d[0].l2, d[0].linf);
    let l2_step = d.windows(2).map(|w| (w[1].l2 - w[0].l2) / l2_0).fold(f64::NEG_INFINITY, f64::max);
    let l1_rise = d.iter().map(|x| (x.l1 - l1_0) / l1_0).fold(f64::NEG_INFINITY, f64::max);
    let linf_rise = d.iter().map(|x| (x.linf - li_0) / li_0).fold(f64::NEG_INFINITY, f64::max);
    let mean_drift = d.iter().map(|x| (x.integral - d[0].integral).abs() / l1_0).fold(0.0, f64::max);
    let min = d.iter().map(|x| x.min).fold(f64::INFINITY, f64::min);
    let max = d.iter().map(|x| x.max).fold(f64::NEG_INFINITY, f64::max);
    Ok(ForwardMember {
        traj,
        l2_step,
        l1_rise,
        linf_rise,
        mean_drift,
        min,
        max,
        dt,
    })
}

fn suite_forward(cfg: &ExperimentConfig, positive: bool) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let table = compute_symbol(&cfg.kernel, &cfg.grid)?;
    let members = par_map(cfg.ensemble_size, cfg.parallel, |i| forward_member(cfg, &table, i, positive))?;
    let mut files = Artifacts::new();
    for (i, m) in members.iter().enumerate() {
        files.push(text(format!("{}_member{i:02}.csv", suite.name()), m.traj.to_csv()));
        if cfg.snapshots {
            files.push(raw_snapshot(format!("{}_member{i:02}_final.raw", suite.name()), m.traj.last()));
        }
    }
    let col = |f: fn(&ForwardMember) -> f64| -> Vec<f64> { members.iter().map(f).collect() };
    let worst = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut checks = Vec::new();
    if positive {
        let mins = col(|m| m.min);
        let maxs = col(|m| m.max);
        let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = worst(&maxs);
        checks.push(Check::new(suite, "lower_bound", lo >= -1e-6).with("min", lo).with("per_member", vals(&mins)));
        checks.push(Check::new(suite, "upper_bound", hi <= 1.0 + 1e-6).with("max", hi).with("bound", 1.0).with("per_member", vals(&maxs)));
    } else {
        let l2 = col(|m| m.l2_step);
        let l1 = col(|m| m.l1_rise);
        let li = col(|m| m.linf_rise);
        checks.push(
            Check::new(suite, "l2_nonincreasing_per_step", worst(&l2) <= 1e-8)
                .with("worst_relative_step_increase", worst(&l2))
                .with("per_member", vals(&l2)),
        );
        checks.push(
            Check::new(suite, "l1_accumulated_increase", worst(&l1) <= 1e-4)
                .with("worst_relative_increase", worst(&l1))
                .with("per_member", vals(&l1)),
        );
        checks.push(
            Check::new(suite, "linf_accumulated_increase", worst(&li) <= 1e-4)
                .with("worst_relative_increase", worst(&li))
                .with("per_member", vals(&li)),
        );
    }
    let md = col(|m| m.mean_drift);
    checks.push(Check::new(suite, "mean_conserved", worst(&md) <= 1e-10).with("worst_relative_drift", worst(&md)));
    checks.push(Check::new(suite, "steps", true).with("dt", vals(&col(|m| m.dt))).with("members", members.len()));
    Ok((checks, files))
}

fn suite_symbol(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let spec = &cfg.kernel;
    let g = cfg.grid;
    let table = compute_symbol(spec, &g)?;
    let (lo, hi) = (cfg.extra_f64("suite.xi_min", 1.0)?, cfg.extra_f64("suite.xi_max", 16.0)?);
    let margins = symbol_bound_margins_in(&table, spec, lo, hi);
    let mut files = vec![
        text("symbol.csv".into(), table.to_csv()),
        text("margins.json".into(), crate::json::to_line(&margins) + "\n"),
    ];
    let mut checks = vec![Check::new(suite, "zero_mode", table.at_mode([0, 0]) == 0.0).with("a0", table.at_mode([0, 0]))];
    let n = g.n() as i64;
    let modes = crate::field::spectral::integer_modes(&g);
    let sym = modes.iter().all(|&k| {
        let m = [(-k[0]).rem_euclid(n), (-k[1]).rem_euclid(n)];
        let m = [
            crate::field::spectral::signed_index(m[0] as usize, g.n()),
            crate::field::spectral::signed_index(m[1] as usize, g.n()),
        ];
        let a = table.at_mode(k);
        a >= 0.0 && a.is_finite() && a == table.at_mode(m)
    });
    checks.push(Check::new(suite, "symmetric_nonnegative", sym));
    let dk = 2.0 * PI / g.lbox();
    // distinct lattice moduli in [lo, hi]
    let mut moduli: Vec<f64> = modes
        .iter()
        .map(|k| dk * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt())
        .filter(|&r| r >= lo - 1e-12 && r <= hi + 1e-12)
        .collect();
    moduli.sort_by(f64::total_cmp);
    moduli.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * *b);
    if let KernelFamily::PowerLaw { exponent, .. } = spec.family {
        if spec.notch.is_none() {
            let mut ratios = Vec::new();
            let mut csv = String::from("xi,a,a_over_power\n");
            for k in &modes {
                let r = dk * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
                if r >= lo - 1e-12 && r <= hi + 1e-12 {
                    let q = table.at_mode(*k) / r.powf(2.0 * exponent);
                    ratios.push(q);
                }
            }
            for &r in &moduli {
                let (a, _) = symbol_at(spec, r, &QuadratureOptions::default())?;
                let _ = writeln!(csv, "{},{},{}", fmt_f64(r), fmt_f64(a), fmt_f64(a / r.powf(2.0 * exponent)));
            }
            let qmax = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let qmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = qmax / qmin - 1.0;
            checks.push(
                Check::new(suite, "homogeneity", spread <= 0.01)
                    .with("ratio_min", qmin)
                    .with("ratio_max", qmax)
                    .with("relative_spread", spread),
            );
            files.push(text("homogeneity.csv".into(), csv));
        }
    }
    // refined quadrature at a handful of lattice moduli
    let fine = QuadratureOptions {
        radial_nodes: 4 * QuadratureOptions::default().radial_nodes,
        ..QuadratureOptions::default()
    };
    let picks: Vec<f64> = if moduli.len() <= 8 {
        moduli.clone()
    } else {
        (0..8).map(|i| moduli[i * (moduli.len() - 1) / 7]).collect()
    };
    let refined_table = compute_symbol_with(spec, &g, &fine)?;
    let mut worst = 0.0f64;
    for &r in &picks {
        let (coarse, _) = symbol_at(spec, r, &QuadratureOptions::default())?;
        let (refined, _) = symbol_at(spec, r, &fine)?;
        worst = worst.max((coarse - refined).abs() / refined);
    }
    let table_gap = table
        .values()
        .iter()
        .zip(refined_table.values())
        .filter(|(_, b)| **b > 0.0)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    checks.push(
        Check::new(suite, "refined_quadrature_agreement", worst <= 1e-2 && table_gap <= 1e-2)
            .with("worst_relative_gap", worst.max(table_gap)),
    );
    checks.push(
        Check::new(suite, "bound_margins_finite", margins.c_up.is_finite() && margins.c_low.is_finite())
            .with("c_up", margins.c_up)
            .with("c_low", margins.c_low),
    );
    Ok((checks, files))
}

fn suite_besov(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let g = cfg.grid;
    let table = compute_symbol(&cfg.kernel, &g)?;
    let ps = cfg.extra_list("suite.p", &[2.0, 4.0])?;
    let shift = cfg.extra_f64("suite.shift", 1.1)?;
    let mut checks = Vec::new();
    let mut files = Artifacts::new();
    for &p in &ps {
        let p = p as u32;
        let mut ens = Vec::new();
        let mut csv = String::from("ensemble,member,besov,sobolev,energy\n");
        for e in 0..2u64 {
            let fields: Vec<ScalarField> = (0..cfg.ensemble_size)
                .map(|i| cfg.field(g, 10 + e, i as u64).map(|x| x + shift))
                .collect();
            let chains = par_map(fields.len(), cfg.parallel, |i| {
                crate::verify::besov_chain(&fields[i], &table, &cfg.kernel, p)
            })?;
            for (i, ch) in chains.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{e},{i},{},{},{}",
                    fmt_f64(ch.besov),
                    fmt_f64(ch.sobolev),
                    fmt_f64(ch.energy)
                );
            }
            ens.push(besov_ensemble(&fields, &table, &cfg.kernel, p)?);
        }
        files.push(text(format!("besov_p{p}.csv"), csv));
        let (a, b) = (&ens[0], &ens[1]);
        let stab = |x: f64, y: f64| x.max(y) / x.min(y);
        let s1 = stab(a.c1, b.c1);
        let s2 = stab(a.c2, b.c2);
        checks.push(Check::new(suite, &format!("finite_p{p}"), a.finite && b.finite));
        checks.push(Check::new(suite, &format!("ordered_p{p}"), a.ordered && b.ordered));
        checks.push(
            Check::new(suite, &format!("constants_stable_p{p}"), s1 <= 2.0 && s2 <= 2.0)
                .with("c1", vals(&[a.c1, b.c1]))
                .with("c2", vals(&[a.c2, b.c2]))
                .with("c1_spread", s1)
                .with("c2_spread", s2),
        );
    }
    // signed dipole: split cross terms
    let c1 = [g.lbox() * 0.3, g.lbox() / 2.0];
    let c2 = [g.lbox() * 0.7, g.lbox() / 2.0];
    let w = g.lbox() / 8.0;
    let dipole = ScalarField::from_fn(g, |x| {
        cutoff_profile(g.distance(x, c1) / w) - cutoff_profile(g.distance(x, c2) / w)
    });
    let split = besov_split_check(&dipole, &table, 4, 1e-10)?;
    checks.push(
        Check::new(suite, "split_cross_terms_nonnegative", split.pass)
            .with("cross_plus", split.meta_f64("cross_plus").unwrap_or(f64::NAN))
            .with("cross_minus", split.meta_f64("cross_minus").unwrap_or(f64::NAN)),
    );
    files.push(text("besov_split.jsonl".into(), json_lines(&[split])));
    Ok((checks, files))
}

fn suite_svineq(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let g = cfg.grid;
    let table = compute_symbol(&cfg.kernel, &g)?;
    let ps: Vec<u32> = cfg.extra_list("suite.p", &[2.0, 4.0])?.iter().map(|&p| p as u32).collect();
    let reports = par_map(cfg.ensemble_size, cfg.parallel, |i| {
        let f = cfg.field(g, 20, i as u64);
        ps.iter().map(|&p| strook_varopoulos_check(&f, &table, p)).collect::<Result<Vec<_>>>()
    })?;
    let mut csv = String::from("member,p,lhs,rhs,ratio\n");
    let mut flat = Vec::new();
    for (i, rs) in reports.iter().enumerate() {
        for (r, &p) in rs.iter().zip(&ps) {
            let _ = writeln!(
                csv,
                "{i},{p},{},{},{}",
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.meta_f64("ratio").unwrap_or(f64::NAN))
            );
            flat.push(r.clone());
        }
    }
    let mut checks = Vec::new();
    for (j, &p) in ps.iter().enumerate() {
        let ratios: Vec<f64> = reports.iter().map(|rs| rs[j].meta_f64("ratio").unwrap_or(f64::NAN)).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let nonneg = reports.iter().all(|rs| rs[j].pass);
        checks.push(Check::new(suite, &format!("pairings_nonnegative_p{p}"), nonneg));
        if p == 2 {
            let dev = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            checks.push(Check::new(suite, "ratio_is_one_p2", dev <= 1e-10).with("worst_deviation", dev));
        } else {
            checks.push(
                Check::new(suite, &format!("ratio_at_least_one_p{p}"), lo >= 1.0 - 1e-6)
                    .with("ratio_min", lo)
                    .with("ratio_max", hi),
            );
        }
    }
    Ok((checks, vec![text("svineq.csv".into(), csv), text("svineq.jsonl".into(), json_lines(&flat))]))
}

fn suite_commutator(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let fractions = cfg.extra_list("suite.radius_fractions", &[1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0])?;
    let p = cfg.extra_f64("suite.norm_p", f64::INFINITY).or_else(|_| {
        cfg.extra_list("suite.norm_p", &[f64::INFINITY]).map(|v| v[0])
    })?;
    let refine_n = cfg.extra_usize("suite.refine_n", 2 * cfg.grid.n())?;
    let seed = member_seed(cfg.seed, 30);
    let mut csv = String::from("n,radius,norm\n");
    let mut reports = Vec::new();
    let mut slopes = Vec::new();
    let mut degenerate = 0.0f64;
    for (idx, n) in [cfg.grid.n(), refine_n].into_iter().enumerate() {
        let g = TorusGrid::new(cfg.grid.dim(), n, cfg.grid.lbox())?;
        let table = compute_symbol(&cfg.kernel, &g)?;
        let a = band_limited_field(g, cfg.field_kmax, seed).map(|x| 1.0 + 0.5 * x);
        let radii: Vec<f64> = fractions.iter().map(|f| f * g.lbox()).collect();
        let r = commutator_scaling_check(&table, &cfg.kernel, &a, &radii, p)?;
        if let Some(Value::Array(norms)) = r.metadata.get("norms") {
            for (rad, nv) in radii.iter().zip(norms) {
                let _ = writeln!(csv, "{n},{},{}", fmt_f64(*rad), fmt_f64(nv.as_f64().unwrap_or(f64::NAN)));
            }
        }
        slopes.push(r.slope.unwrap_or(f64::NAN));
        reports.push(r);
        if idx == 0 {
            let ones = ScalarField::constant(g, 1.0);
            let rc = commutator_scaling_check(&table, &cfg.kernel, &ones, &radii, p)?;
            reports.push(InequalityReport { name: "commutator_scaling_constant_field".into(), ..rc });
            let c = [g.lbox() / 2.0; 2];
            let scale = lp_norm(&crate::solver::apply_levy(&a, &table)?, p)?.max(1.0);
            degenerate = commutator_norm(&table, &a, c, 2.0 * g.lbox(), p)? / scale;
        }
    }
    let predicted = -2.0 * cfg.kernel.beta.min(cfg.kernel.delta);
    let checks = vec![
        Check::new(suite, "slope_near_prediction", (slopes[0] - predicted).abs() <= 0.3)
            .with("slope", slopes[0])
            .with("predicted", predicted),
        Check::new(suite, "refinement_stable", (slopes[0] - slopes[1]).abs() <= 0.1)
            .with("slope_coarse", slopes[0])
            .with("slope_fine", slopes[1]),
        Check::new(suite, "full_cutoff_commutes", degenerate <= 1e-10).with("relative_norm", degenerate),
    ];
    Ok((checks, vec![text("commutator.csv".into(), csv), text("commutator.jsonl".into(), json_lines(&reports))]))
}

struct MoleculeRun {
    r: f64,
    k: f64,
    initial_pass: bool,
    violations: usize,
    windows: usize,
    final_l1: f64,
    cap: f64,
    measured_c: f64,
    initial_c: f64,
    csv: String,
}

fn suite_molecule(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let g = cfg.grid;
    let table = compute_symbol(&cfg.kernel, &g)?;
    let drift = cfg.drift(g, 0)?;
    let mu = drift.bmo_bound();
    let mo = &cfg.molecule;
    let k = choose_k(mu, mo.omega, mo.gamma, mo.c_cal)?;
    let mut centers = rng(member_seed(cfg.seed, 40));
    let x0s: Vec<[f64; 2]> = mo
        .radii
        .iter()
        .map(|_| [centers.gen_range(0.0..g.lbox()), centers.gen_range(0.0..g.lbox())])
        .collect();
    let runs = par_map(mo.radii.len(), cfg.parallel, |i| {
        let r = mo.radii[i];
        let x0 = if g.dim() == 1 { [x0s[i][0], 0.0] } else { x0s[i] };
        let params = MoleculeParams::from_gamma(g.dim(), mo.gamma, mo.omega, r, x0)?;
        let psi = build_molecule(&params, &g)?;
        let initial = check_molecule(&psi, &params);
        let dt = match cfg.solver.dt {
            Some(dt) => dt,
            None => cfg.step_for(&g, &drift).min(r / 8.0),
        };
        let rep = iterate_molecule(&psi, &drift, &table, &params, k, mo.t0, mo.window_factor, &cfg.solver.config(dt))?;
        Ok(MoleculeRun {
            r,
            k,
            initial_pass: initial.pass,
            violations: rep.violations,
            windows: rep.windows,
            final_l1: rep.final_l1,
            cap: rep.l1_cap,
            measured_c: rep.measured_c,
            initial_c: initial.l1_constant,
            csv: envelopes_to_csv(&rep.envelopes),
        })
    })?;
    let mut files = Artifacts::new();
    let mut summary = String::from("r,k,windows,violations,final_l1,l1_cap,measured_c,l1_constant_initial\n");
    for (i, m) in runs.iter().enumerate() {
        files.push(text(format!("molecule_envelope_{i:02}.csv"), m.csv.clone()));
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(m.r),
            fmt_f64(m.k),
            m.windows,
            m.violations,
            fmt_f64(m.final_l1),
            fmt_f64(m.cap),
            fmt_f64(m.measured_c),
            fmt_f64(m.initial_c)
        );
    }
    files.push(text("molecule_runs.csv".into(), summary));
    let violations: usize = runs.iter().map(|m| m.violations).sum();
    let worst_cap = runs.iter().map(|m| m.final_l1 / (1.1 * m.cap)).fold(0.0, f64::max);
    let windows_ok = runs.iter().all(|m| m.windows == window_count(m.r, mo.t0, mo.window_factor));
    let checks = vec![
        Check::new(suite, "drift_bmo_bound", mu <= 1.0).with("mu", mu).with("k", k),
        Check::new(suite, "initial_molecules_valid", runs.iter().all(|m| m.initial_pass)).with(
            "l1_constants",
            vals(&runs.iter().map(|m| m.initial_c).collect::<Vec<_>>()),
        ),
        Check::new(suite, "no_envelope_violations", violations == 0).with("violations", violations),
        Check::new(suite, "final_l1_below_cap", worst_cap <= 1.0)
            .with("worst_final_over_cap", worst_cap)
            .with("measured_c", vals(&runs.iter().map(|m| m.measured_c).collect::<Vec<_>>())),
        Check::new(suite, "stopping_rule", windows_ok)
            .with("windows", Value::from(runs.iter().map(|m| m.windows).collect::<Vec<_>>())),
    ];
    Ok((checks, files))
}

fn suite_transfer(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let g = cfg.grid;
    let table = compute_symbol(&cfg.kernel, &g)?;
    let t = cfg.solver.t_final;
    let dt = cfg.solver.dt.unwrap_or(t / 5.0);
    let fields = |i: usize| {
        let th = cfg.field(g, 50, i as u64);
        let ps = cfg.field(g, 51, i as u64).axpy(0.5, &th).map(|x| x + 0.25);
        (th, ps)
    };
    let mut csv = String::from("instance,drift,dt,lhs,rhs,defect\n");
    let (th, ps) = fields(0);
    let zero = transfer_check(&th, &ps, &Drift::zero(g), &table, &cfg.solver.config(dt), t)?;
    let _ = writeln!(csv, "0,zero,{},{},{},{}", fmt_f64(dt), fmt_f64(zero.lhs), fmt_f64(zero.rhs), fmt_f64(zero.defect));
    let runs = par_map(cfg.ensemble_size, cfg.parallel, |i| {
        let (th, ps) = fields(i);
        let drift = match cfg.drift(g, i as u64)? {
            Drift::Sampled { fields, .. } => Drift::Static(fields[0].clone()),
            d => d,
        };
        let a = transfer_check(&th, &ps, &drift, &table, &cfg.solver.config(dt), t)?;
        let b = transfer_check(&th, &ps, &drift, &table, &cfg.solver.config(dt / 2.0), t)?;
        Ok((a, b))
    })?;
    let mut ratios = Vec::new();
    for (i, (a, b)) in runs.iter().enumerate() {
        for (step, r) in [(dt, a), (dt / 2.0, b)] {
            let _ = writeln!(
                csv,
                "{i},static,{},{},{},{}",
                fmt_f64(step),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.defect)
            );
        }
        ratios.push(a.defect / b.defect);
    }
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::new(suite, "drift_free_defect", zero.defect <= 1e-10).with("defect", zero.defect),
        Check::new(suite, "first_order_refinement", worst >= 1.8)
            .with("worst_ratio", worst)
            .with("ratios", vals(&ratios)),
    ];
    Ok((checks, vec![text("transfer.csv".into(), csv)]))
}

fn suite_heatlevy(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let table = compute_symbol(&cfg.kernel, &cfg.grid)?;
    let lo = cfg.extra_f64("suite.eps_tau_min", 7e-4)?;
    let hi = cfg.extra_f64("suite.eps_tau_max", 7e-2)?;
    let points = cfg.extra_usize("suite.points", 9)?;
    let ets = geometric(lo, hi, points.max(2));
    let norms = ets
        .iter()
        .map(|&e| heat_levy_l1_norm(&table, e, 1.0).map(|h| h.value))
        .collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(&ets, &norms)?;
    let predicted = predicted_heat_levy_exponent(&cfg.kernel);
    let far = heat_levy_l1_norm(&table, 1e3, 1.0)?.value;
    let mut csv = String::from("eps_tau,norm\n");
    for (e, v) in ets.iter().zip(&norms) {
        let _ = writeln!(csv, "{},{}", fmt_f64(*e), fmt_f64(*v));
    }
    let checks = vec![
        Check::new(suite, "slope_near_prediction", (slope - predicted).abs() <= 0.1)
            .with("slope", slope)
            .with("predicted", predicted)
            .with("decades", (hi / lo).log10()),
        Check::new(suite, "long_time_decay", far <= 1e-12 * norms[0]).with("norm_at_1e3", far),
    ];
    Ok((checks, vec![text("heatlevy.csv".into(), csv)]))
}

/// Largest `T′` with `contraction_budget ≤ 1/2`, by bisection.
fn budget_window(eps: f64, v_inf: f64, spec: &KernelSpec, c: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, eps);
    while contraction_budget(hi, eps, v_inf, spec, c)? <= 0.5 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && contraction_budget(mid, eps, v_inf, spec, c)? <= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn suite_picard(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let g = cfg.grid;
    let eps = cfg.solver.epsilon;
    let table = compute_symbol(&cfg.kernel, &g)?;
    let c = calibrate_budget_constant(&table, eps, 1e-7, eps)?;
    let substeps = cfg.extra_usize("suite.substeps", 20)?;
    let runs = par_map(cfg.ensemble_size, cfg.parallel, |i| {
        let v = match cfg.drift(g, i as u64)? {
            Drift::Static(v) => v,
            Drift::Sampled { fields, .. } => fields[0].clone(),
        };
        let v_inf = mollify_velocity(&v, eps)?.max_abs();
        let tp = budget_window(eps, v_inf, &cfg.kernel, c)?;
        let theta0 = cfg.field(g, 60, i as u64);
        let scfg = SolverConfig {
            budget_constant: c,
            ..cfg.solver.config(tp / substeps as f64)
        };
        let sol = picard_solve(&theta0, &v, &table, &scfg, tp)?;
        let floor = 1e-12 * lp_norm(&theta0, 2.0)?;
        let worst = sol.increment_ratios(floor).into_iter().fold(0.0, f64::max);
        Ok((tp, sol.budget, worst, sol.increments))
    })?;
    let mut csv = String::from("instance,iteration,increment\n");
    for (i, r) in runs.iter().enumerate() {
        for (j, inc) in r.3.iter().enumerate() {
            let _ = writeln!(csv, "{i},{j},{}", fmt_f64(*inc));
        }
    }
    let worst = runs.iter().map(|r| r.2).fold(0.0, f64::max);
    // single mode, no drift: closed-form decay
    let k = [1i64, 0];
    let mode = mode_field(g, k);
    let tp = budget_window(eps, 0.0, &cfg.kernel, c)?;
    let mode_dt = cfg.extra_f64("suite.mode_dt", 2e-6)?;
    let scfg = SolverConfig {
        budget_constant: c,
        ..cfg.solver.config(mode_dt.min(tp))
    };
    let sol = picard_solve(&mode, &VelocityField::zero(g), &table, &scfg, tp)?;
    let xi2 = (2.0 * PI / g.lbox()).powi(2);
    let decay = (-(eps * xi2 + table.at_mode(k)) * tp).exp();
    let err = sol
        .state
        .values()
        .iter()
        .zip(mode.values())
        .map(|(a, b)| (a - decay * b).abs())
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new(suite, "increment_ratio_at_most_half", worst <= 0.5)
            .with("worst_ratio", worst)
            .with("budget_constant", c)
            .with("windows", vals(&runs.iter().map(|r| r.0).collect::<Vec<_>>()))
            .with("budgets", vals(&runs.iter().map(|r| r.1).collect::<Vec<_>>())),
        Check::new(suite, "single_mode_closed_form", err <= 1e-6)
            .with("max_error", err)
            .with("window", tp)
            .with("decay", decay),
    ];
    Ok((checks, vec![text("picard_increments.csv".into(), csv)]))
}

fn suite_holder(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Artifacts)> {
    let suite = cfg.suite;
    let gamma = cfg.extra_f64("suite.gamma", 0.25)?;
    let steep = cfg.extra_f64("suite.steepness", 10.0)?;
    let refine_n = cfg.extra_usize("suite.refine_n", 2 * cfg.grid.n())?;
    let mut seminorms = Vec::new();
    let mut files = Artifacts::new();
    for n in [cfg.grid.n(), refine_n] {
        let g = TorusGrid::new(cfg.grid.dim(), n, cfg.grid.lbox())?;
        let table = compute_symbol(&cfg.kernel, &g)?;
        let drift = cfg.drift(g, 0)?;
        let dk = 2.0 * PI / g.lbox();
        let theta0 = ScalarField::from_fn(g, |x| (steep * (dk * x[0]).sin()).tanh());
        let dt = cfg.step_for(&g, &drift);
        let traj = solve_forward(&theta0, &drift, &table, &cfg.solver.config(dt))?;
        seminorms.push(holder_seminorm(traj.last(), gamma)?);
        files.push(text(format!("holder_n{n}.csv"), traj.to_csv()));
        if cfg.snapshots {
            files.push(raw_snapshot(format!("holder_n{n}_final.raw"), traj.last()));
        }
    }
    let change = (seminorms[1] - seminorms[0]).abs() / seminorms[0];
    let checks = vec![Check::new(suite, "seminorm_resolution_stable", change <= 0.1)
        .with("seminorm_coarse", seminorms[0])
        .with("seminorm_fine", seminorms[1])
        .with("relative_change", change)
        .with("gamma", gamma)];
    Ok((checks, files))
}
