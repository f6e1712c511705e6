//! Lévy kernels `π(y)`, their two-sided bounds, and the symbol
//! `a(ξ) = ∫(1 − cos ξ·y) π(y) dy` evaluated on a torus frequency lattice.
//!
//! Every shipped family is radial, so symmetry `π(y) = π(−y)` holds by
//! construction and the angular part of the symbol integral is exact: in 2-D
//! it is `2π(1 − J0(|ξ| r))`, in 1-D `2(1 − cos(|ξ| r))`. The radial part uses
//! Gauss–Legendre panels graded geometrically in `r`, a Taylor-regularized
//! analytic piece on `[0, r_in]` and an analytic far-field tail beyond `Rmax`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bessel::one_minus_j0;
use crate::field::{spectral, TorusGrid};
use crate::{Error, Result};

const REL_TOL: f64 = 1e-12;

/// Exponent regime of the kernel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelCase {
    /// `0 < α ≤ β < 1/2`, `0 < δ < 1/2`
    A,
    /// `α = β = δ < 1/2`
    B,
    /// `α = β = 1/2`, `0 < δ < 1/2`
    C,
    /// `α = β = δ = 1/2`
    D,
}

impl KernelCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelCase::A => "a",
            KernelCase::B => "b",
            KernelCase::C => "c",
            KernelCase::D => "d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Some(KernelCase::A),
            "b" => Some(KernelCase::B),
            "c" => Some(KernelCase::C),
            "d" => Some(KernelCase::D),
            _ => None,
        }
    }
}

/// Radial profile of the kernel. Exponents `s` enter as `|y|^{−n−2s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `coeff · |y|^{−n−2s}` everywhere.
    PowerLaw { coeff: f64, exponent: f64 },
    /// Inner power law on `|y| ≤ 1`, outer power law on `|y| > 1`.
    PiecewisePower {
        inner_coeff: f64,
        inner_exponent: f64,
        outer_coeff: f64,
        outer_exponent: f64,
    },
    /// `coeff · |y|^{−n−2s}` on `|y| ≤ cutoff`, zero beyond.
    TruncatedPower { coeff: f64, exponent: f64, cutoff: f64 },
}

impl KernelFamily {
    fn name(&self) -> &'static str {
        match self {
            KernelFamily::PowerLaw { .. } => "power_law",
            KernelFamily::PiecewisePower { .. } => "piecewise_power",
            KernelFamily::TruncatedPower { .. } => "truncated_power",
        }
    }

    /// Coefficient and exponent of the pure power law valid near the origin.
    fn inner_power(&self) -> (f64, f64) {
        match *self {
            KernelFamily::PowerLaw { coeff, exponent } => (coeff, exponent),
            KernelFamily::PiecewisePower {
                inner_coeff,
                inner_exponent,
                ..
            } => (inner_coeff, inner_exponent),
            KernelFamily::TruncatedPower { coeff, exponent, .. } => (coeff, exponent),
        }
    }

    /// Coefficient and exponent of the far-field power law, `None` when the
    /// kernel vanishes identically beyond `radius`.
    fn outer_power(&self, radius: f64) -> Option<(f64, f64)> {
        match *self {
            KernelFamily::PowerLaw { coeff, exponent } => Some((coeff, exponent)),
            KernelFamily::PiecewisePower {
                outer_coeff,
                outer_exponent,
                ..
            } => Some((outer_coeff, outer_exponent)),
            KernelFamily::TruncatedPower {
                coeff,
                exponent,
                cutoff,
            } => (cutoff > radius).then_some((coeff, exponent)),
        }
    }
}

/// A Lévy kernel with its case tag, exponents `α, β, δ` and bound constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub case: KernelCase,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub family: KernelFamily,
    pub dim: usize,
    /// Optional annulus `[inner, outer]` on which the density is forced to zero.
    pub notch: Option<(f64, f64)>,
}

impl KernelSpec {
    /// `|y|^{−n−2α}` with unit constants; case (d) at `α = 1/2`, (b) below.
    pub fn power_law(dim: usize, alpha: f64) -> Self {
        let case = if (alpha - 0.5).abs() < REL_TOL {
            KernelCase::D
        } else {
            KernelCase::B
        };
        Self {
            case,
            alpha,
            beta: alpha,
            delta: alpha,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            family: KernelFamily::PowerLaw {
                coeff: 1.0,
                exponent: alpha,
            },
            dim,
            notch: None,
        }
    }

    /// Piecewise kernel saturating the upper bounds: `c2 |y|^{−n−2β}` inside the
    /// unit ball, `c3 |y|^{−n−2δ}` outside.
    pub fn piecewise(dim: usize, case: KernelCase, alpha: f64, beta: f64, delta: f64) -> Self {
        Self {
            case,
            alpha,
            beta,
            delta,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            family: KernelFamily::PiecewisePower {
                inner_coeff: 1.0,
                inner_exponent: beta,
                outer_coeff: 1.0,
                outer_exponent: delta,
            },
            dim,
            notch: None,
        }
    }

    /// Multiplies the kernel (and its bound constants) by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let family = match self.family {
            KernelFamily::PowerLaw { coeff, exponent } => KernelFamily::PowerLaw {
                coeff: coeff * c,
                exponent,
            },
            KernelFamily::PiecewisePower {
                inner_coeff,
                inner_exponent,
                outer_coeff,
                outer_exponent,
            } => KernelFamily::PiecewisePower {
                inner_coeff: inner_coeff * c,
                inner_exponent,
                outer_coeff: outer_coeff * c,
                outer_exponent,
            },
            KernelFamily::TruncatedPower {
                coeff,
                exponent,
                cutoff,
            } => KernelFamily::TruncatedPower {
                coeff: coeff * c,
                exponent,
                cutoff,
            },
        };
        Self {
            c1: self.c1 * c,
            c2: self.c2 * c,
            c3: self.c3 * c,
            family,
            ..*self
        }
    }

    /// Checks the case/exponent ordering, positivity of the constants and the
    /// family parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::UnsupportedDimension {
                dim: self.dim,
                what: "kernels are defined for n = 1 or 2".into(),
            });
        }
        let (a, b, d) = (self.alpha, self.beta, self.delta);
        let eq = |x: f64, y: f64| (x - y).abs() <= REL_TOL;
        let half = 0.5;
        let ok = match self.case {
            KernelCase::A => a > 0.0 && a <= b + REL_TOL && b < half && d > 0.0 && d < half,
            KernelCase::B => a > 0.0 && eq(a, b) && eq(b, d) && a < half,
            KernelCase::C => eq(a, half) && eq(b, half) && d > 0.0 && d < half,
            KernelCase::D => eq(a, half) && eq(b, half) && eq(d, half),
        };
        if !ok {
            return bad(format!(
                "exponents (alpha={a}, beta={b}, delta={d}) do not match case ({})",
                self.case.as_str()
            ));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 > 0.0) {
            return bad("bound constants c1, c2, c3 must be positive".into());
        }
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        match self.family {
            KernelFamily::PowerLaw { coeff, exponent } => {
                if !finite_pos(coeff) || !(exponent > 0.0 && exponent < 1.0) {
                    return bad("power law needs coeff > 0 and exponent in (0,1)".into());
                }
            }
            KernelFamily::PiecewisePower {
                inner_coeff,
                inner_exponent,
                outer_coeff,
                outer_exponent,
            } => {
                if !finite_pos(inner_coeff)
                    || outer_coeff < 0.0
                    || !(inner_exponent > 0.0 && inner_exponent < 1.0)
                    || outer_exponent <= 0.0
                {
                    return bad("piecewise power needs positive coefficients and exponents".into());
                }
            }
            KernelFamily::TruncatedPower {
                coeff,
                exponent,
                cutoff,
            } => {
                if !finite_pos(coeff) || !(exponent > 0.0 && exponent < 1.0) || cutoff < 1.0 {
                    return bad("truncated power needs coeff > 0, exponent in (0,1), cutoff >= 1".into());
                }
            }
        }
        if let Some((lo, hi)) = self.notch {
            if !(lo > 0.0 && hi > lo) {
                return bad(format!("notch [{lo}, {hi}] is not a proper annulus"));
            }
        }
        Ok(())
    }

    /// Radial density `π(r)` for `r > 0`.
    pub fn density(&self, r: f64) -> f64 {
        if let Some((lo, hi)) = self.notch {
            if r >= lo && r <= hi {
                return 0.0;
            }
        }
        let n = self.dim as f64;
        match self.family {
            KernelFamily::PowerLaw { coeff, exponent } => coeff * r.powf(-n - 2.0 * exponent),
            KernelFamily::PiecewisePower {
                inner_coeff,
                inner_exponent,
                outer_coeff,
                outer_exponent,
            } => {
                if r <= 1.0 {
                    inner_coeff * r.powf(-n - 2.0 * inner_exponent)
                } else {
                    outer_coeff * r.powf(-n - 2.0 * outer_exponent)
                }
            }
            KernelFamily::TruncatedPower {
                coeff,
                exponent,
                cutoff,
            } => {
                if r <= cutoff {
                    coeff * r.powf(-n - 2.0 * exponent)
                } else {
                    0.0
                }
            }
        }
    }

    /// Radii where the density may jump or kink.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![1.0];
        if let KernelFamily::TruncatedPower { cutoff, .. } = self.family {
            b.push(cutoff);
        }
        if let Some((lo, hi)) = self.notch {
            b.push(lo);
            b.push(hi);
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `|S^{n−1}|`: 2 in 1-D, 2π in 2-D.
    fn sphere_area(&self) -> f64 {
        if self.dim == 1 {
            2.0
        } else {
            2.0 * PI
        }
    }

    /// Flat `key = value` entries (no section prefix).
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut e = vec![
            ("family".to_string(), self.family.name().to_string()),
            ("case".to_string(), self.case.as_str().to_string()),
            ("alpha".to_string(), fmt_f64(self.alpha)),
            ("beta".to_string(), fmt_f64(self.beta)),
            ("delta".to_string(), fmt_f64(self.delta)),
            ("c1".to_string(), fmt_f64(self.c1)),
            ("c2".to_string(), fmt_f64(self.c2)),
            ("c3".to_string(), fmt_f64(self.c3)),
            ("dim".to_string(), self.dim.to_string()),
        ];
        match self.family {
            KernelFamily::PowerLaw { coeff, exponent } => {
                e.push(("coeff".into(), fmt_f64(coeff)));
                e.push(("exponent".into(), fmt_f64(exponent)));
            }
            KernelFamily::PiecewisePower {
                inner_coeff,
                inner_exponent,
                outer_coeff,
                outer_exponent,
            } => {
                e.push(("inner_coeff".into(), fmt_f64(inner_coeff)));
                e.push(("inner_exponent".into(), fmt_f64(inner_exponent)));
                e.push(("outer_coeff".into(), fmt_f64(outer_coeff)));
                e.push(("outer_exponent".into(), fmt_f64(outer_exponent)));
            }
            KernelFamily::TruncatedPower {
                coeff,
                exponent,
                cutoff,
            } => {
                e.push(("coeff".into(), fmt_f64(coeff)));
                e.push(("exponent".into(), fmt_f64(exponent)));
                e.push(("cutoff".into(), fmt_f64(cutoff)));
            }
        }
        if let Some((lo, hi)) = self.notch {
            e.push(("notch_inner".into(), fmt_f64(lo)));
            e.push(("notch_outer".into(), fmt_f64(hi)));
        }
        e
    }

    /// Parses entries produced by [`KernelSpec::to_entries`]. Missing family
    /// parameters default to the natural choice for the exponents, missing
    /// constants to 1. Errors name the offending key under `prefix`.
    pub fn from_entries(entries: &BTreeMap<String, String>, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let get_f = |k: &str| -> Result<Option<f64>> {
            match entries.get(k) {
                None => Ok(None),
                Some(v) => v.trim().parse::<f64>().map(Some).map_err(|_| Error::Config {
                    key: key(k),
                    reason: format!("`{v}` is not a number"),
                }),
            }
        };
        let need_f = |k: &str| -> Result<f64> {
            get_f(k)?.ok_or_else(|| Error::Config {
                key: key(k),
                reason: "missing".into(),
            })
        };
        let dim = match entries.get("dim") {
            None => 2,
            Some(v) => v.trim().parse().map_err(|_| Error::Config {
                key: key("dim"),
                reason: format!("`{v}` is not an integer"),
            })?,
        };
        let alpha = need_f("alpha")?;
        let beta = get_f("beta")?.unwrap_or(alpha);
        let delta = get_f("delta")?.unwrap_or(beta);
        let case = match entries.get("case") {
            Some(c) => KernelCase::parse(c).ok_or_else(|| Error::Config {
                key: key("case"),
                reason: format!("`{c}` is not one of a, b, c, d"),
            })?,
            None => {
                if (alpha - 0.5).abs() < REL_TOL && (delta - 0.5).abs() < REL_TOL {
                    KernelCase::D
                } else if (alpha - 0.5).abs() < REL_TOL {
                    KernelCase::C
                } else if (alpha - beta).abs() < REL_TOL && (beta - delta).abs() < REL_TOL {
                    KernelCase::B
                } else {
                    KernelCase::A
                }
            }
        };
        let family_name = entries
            .get("family")
            .map(|s| s.trim().to_ascii_lowercase())
            .unwrap_or_else(|| "power_law".into());
        let family = match family_name.as_str() {
            "power_law" | "powerlaw" => KernelFamily::PowerLaw {
                coeff: get_f("coeff")?.unwrap_or(1.0),
                exponent: get_f("exponent")?.unwrap_or(alpha),
            },
            "piecewise_power" | "piecewisepower" => KernelFamily::PiecewisePower {
                inner_coeff: get_f("inner_coeff")?.unwrap_or(1.0),
                inner_exponent: get_f("inner_exponent")?.unwrap_or(beta),
                outer_coeff: get_f("outer_coeff")?.unwrap_or(1.0),
                outer_exponent: get_f("outer_exponent")?.unwrap_or(delta),
            },
            "truncated_power" | "truncatedpower" => KernelFamily::TruncatedPower {
                coeff: get_f("coeff")?.unwrap_or(1.0),
                exponent: get_f("exponent")?.unwrap_or(alpha),
                cutoff: need_f("cutoff")?,
            },
            other => {
                return Err(Error::Config {
                    key: key("family"),
                    reason: format!("unknown kernel family `{other}`"),
                })
            }
        };
        let notch = match (get_f("notch_inner")?, get_f("notch_outer")?) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::Config {
                    key: key("notch_inner"),
                    reason: "notch needs both notch_inner and notch_outer".into(),
                })
            }
        };
        let spec = Self {
            case,
            alpha,
            beta,
            delta,
            c1: get_f("c1")?.unwrap_or(1.0),
            c2: get_f("c2")?.unwrap_or(1.0),
            c3: get_f("c3")?.unwrap_or(1.0),
            family,
            dim,
            notch,
        };
        spec.validate().map_err(|e| Error::Config {
            key: key("*"),
            reason: e.to_string(),
        })?;
        Ok(spec)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `π(y)` at a point `y ≠ 0` (length = `spec.dim`).
pub fn eval_kernel(spec: &KernelSpec, y: &[f64]) -> Result<f64> {
    if y.len() != spec.dim {
        return Err(Error::Argument(format!(
            "point has {} coordinates, kernel dimension is {}",
            y.len(),
            spec.dim
        )));
    }
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r > 0.0) {
        return Err(Error::Argument("kernel is singular at y = 0".into()));
    }
    Ok(spec.density(r))
}

/// Per-radius outcome of [`validate_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSample {
    pub radius: f64,
    pub density: f64,
    /// `c1 r^{−n−2α}` inside the unit ball, 0 outside.
    pub lower: f64,
    /// `c2 r^{−n−2β}` inside, `c3 r^{−n−2δ}` outside.
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `π(r) / (r^{−n−2β} + r^{−n−2δ})`
    pub combined_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub samples: Vec<BoundSample>,
    /// Smallest `c4` with `π ≤ c4 (r^{−n−2β} + r^{−n−2δ})` on the samples.
    pub c4: f64,
    pub all_pass: bool,
}

impl BoundReport {
    pub fn lower_violations(&self) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| !s.lower_ok)
            .map(|s| s.radius)
            .collect()
    }
}

/// Checks the two-sided kernel bounds and fits the combined constant `c4`.
pub fn validate_bounds(spec: &KernelSpec, radii: &[f64]) -> Result<BoundReport> {
    if radii.is_empty() {
        return Err(Error::Argument("no sample radii given".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Argument(format!("sample radius {r} is not positive")));
    }
    let n = spec.dim as f64;
    let mut samples = Vec::with_capacity(radii.len());
    let mut c4 = 0.0f64;
    for &r in radii {
        let p = spec.density(r);
        let pb = r.powf(-n - 2.0 * spec.beta);
        let pd = r.powf(-n - 2.0 * spec.delta);
        let (lower, upper) = if r <= 1.0 {
            (spec.c1 * r.powf(-n - 2.0 * spec.alpha), spec.c2 * pb)
        } else {
            (0.0, spec.c3 * pd)
        };
        let slack = REL_TOL * upper.max(lower);
        let ratio = p / (pb + pd);
        c4 = c4.max(ratio);
        samples.push(BoundSample {
            radius: r,
            density: p,
            lower,
            upper,
            lower_ok: p >= lower - slack,
            upper_ok: p <= upper + slack && p >= 0.0,
            combined_ratio: ratio,
        });
    }
    let all_pass = samples.iter().all(|s| s.lower_ok && s.upper_ok);
    Ok(BoundReport {
        samples,
        c4,
        all_pass,
    })
}

/// Radial quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Total radial nodes between the inner Taylor radius and `Rmax`.
    pub radial_nodes: usize,
    /// Far-field truncation radius.
    pub truncation_radius: f64,
    /// Largest admissible far-field remainder estimate relative to `a(ξ)`.
    pub tail_tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            radial_nodes: 2048,
            truncation_radius: 64.0,
            tail_tolerance: 1e-3,
        }
    }
}

// 8-point Gauss–Legendre on [−1, 1]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Nodes and weights for `∫_a^b g(r) dr`: panels uniform in `ln r` until
/// they reach `max_width`, uniform in `r` after that.
fn graded_rule(a: f64, b: f64, nodes: usize, max_width: f64, out: &mut Vec<(f64, f64)>) {
    let panels = (nodes / 8).max(1);
    let ratio = ((b / a).ln() / panels as f64).exp();
    let mut lo = a;
    while lo < b {
        let hi = (lo * ratio).min(lo + max_width).min(b);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for k in 0..4 {
            for s in [-1.0, 1.0] {
                out.push((mid + s * GL_X[k] * half, GL_W[k] * half));
            }
        }
        if hi >= b || hi - lo <= 0.0 {
            break;
        }
        lo = hi;
    }
}

/// Segment-wise graded rule on `[a, b]`, split at the kernel breakpoints,
/// with nodes shared out by log-length.
fn radial_rule(spec: &KernelSpec, a: f64, b: f64, total_nodes: usize, max_width: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![a];
    edges.extend(spec.breakpoints().into_iter().filter(|&x| x > a && x < b));
    edges.push(b);
    let span = (b / a).ln();
    let mut rule = Vec::with_capacity(total_nodes + 16 * edges.len());
    for w in edges.windows(2) {
        let share = ((w[1] / w[0]).ln() / span * total_nodes as f64).round() as usize;
        graded_rule(w[0], w[1], share.max(16), max_width, &mut rule);
    }
    rule
}

/// Integration window `[r_in, R]` for frequency `ρ`: the Taylor piece covers
/// `ρ r ≤ 10⁻²`, the asymptotic far field starts once `ρ R ≥ 100`.
fn window(spec: &KernelSpec, rho: f64, rmax: f64) -> (f64, f64) {
    let b = spec.breakpoints();
    let r_in = (1e-2 / rho).min(0.5 * b[0]);
    let r_out = (100.0 / rho).max(2.0 * b[b.len() - 1]).min(rmax);
    (r_in, r_out)
}

/// Result of [`levy_integrability`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyIntegral {
    /// `∫ min(1, |y|²) π(y) dy` including the analytic far-field tail.
    pub value: f64,
    pub truncation_radius: f64,
    /// The far-field part `∫_{|y|>Rmax} π(y) dy`, added analytically.
    pub tail: f64,
}

/// `∫ min(1, |y|²) π(y) dy` by radial quadrature.
pub fn levy_integrability(spec: &KernelSpec) -> Result<LevyIntegral> {
    levy_integrability_with(spec, &QuadratureOptions::default())
}

pub fn levy_integrability_with(spec: &KernelSpec, opts: &QuadratureOptions) -> Result<LevyIntegral> {
    let rmax = opts.truncation_radius;
    let tail = far_field_mass(spec, rmax)?;
    let area = spec.sphere_area();
    let n = spec.dim as i32;
    let r_in = 1e-6_f64;
    let (c, s) = spec.family.inner_power();
    // ∫_0^{r_in} r² c r^{−n−2s} |S| r^{n−1} dr
    let inner = area * c * r_in.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let rule = radial_rule(spec, r_in, rmax, opts.radial_nodes, f64::INFINITY);
    let body: f64 = rule
        .iter()
        .map(|&(r, w)| w * area * r.powi(n - 1) * spec.density(r) * (r * r).min(1.0))
        .sum();
    let value = inner + body + tail;
    if !value.is_finite() {
        return Err(Error::Numerical("Lévy integral is not finite".into()));
    }
    Ok(LevyIntegral {
        value,
        truncation_radius: rmax,
        tail,
    })
}

/// `∫_{|y|>R} π(y) dy` from the far-field power law; non-convergent tails are errors.
fn far_field_mass(spec: &KernelSpec, radius: f64) -> Result<f64> {
    if let Some((lo, hi)) = spec.notch {
        if hi > radius && lo < radius {
            return Err(Error::Argument("notch straddles the truncation radius".into()));
        }
    }
    let Some((c, s)) = spec.family.outer_power(radius) else {
        return Ok(0.0);
    };
    if c == 0.0 {
        return Ok(0.0);
    }
    if !(s > 0.0) {
        return Err(Error::Numerical(format!(
            "far-field tail ∫_{{|y|>{radius}}} π diverges: kernel decays like |y|^(-n-{:.3}), no positive tail exponent",
            2.0 * s
        )));
    }
    let mut mass = spec.sphere_area() * c * radius.powf(-2.0 * s) / (2.0 * s);
    if let KernelFamily::TruncatedPower { cutoff, .. } = spec.family {
        mass -= spec.sphere_area() * c * cutoff.powf(-2.0 * s) / (2.0 * s);
    }
    Ok(mass)
}

/// Symbol `a(ξ)` on the frequency lattice of a grid, in FFT ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolTable {
    grid: TorusGrid,
    values: Vec<f64>,
    pub radial_nodes: usize,
    pub truncation_radius: f64,
    /// Largest far-field remainder estimate relative to `a(ξ)` over the lattice.
    pub max_relative_tail_bound: f64,
    /// Kernel the table was integrated from, if any.
    spec: Option<KernelSpec>,
}

impl SymbolTable {
    /// Table from explicit values (FFT ordering). Values must be real,
    /// nonnegative, symmetric and vanish at ξ = 0.
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument("symbol table size does not match the grid".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::Argument("symbol must vanish at ξ = 0".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Argument("symbol values must be finite and nonnegative".into()));
        }
        Ok(Self {
            grid,
            values,
            radial_nodes: 0,
            truncation_radius: f64::INFINITY,
            max_relative_tail_bound: 0.0,
            spec: None,
        })
    }

    /// `a ≡ 0` (no Lévy operator).
    pub fn zero(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            radial_nodes: 0,
            truncation_radius: f64::INFINITY,
            max_relative_tail_bound: 0.0,
            spec: None,
        }
    }

    /// Exact `c |ξ|^{2s}` on the lattice.
    pub fn power(grid: TorusGrid, c: f64, s: f64) -> Self {
        let values = spectral::wavevectors(&grid)
            .into_iter()
            .map(|k| {
                let r2 = k[0] * k[0] + k[1] * k[1];
                if r2 == 0.0 {
                    0.0
                } else {
                    c * r2.powf(s)
                }
            })
            .collect();
        Self {
            grid,
            values,
            radial_nodes: 0,
            truncation_radius: f64::INFINITY,
            max_relative_tail_bound: 0.0,
            spec: None,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    /// Attaches the kernel whose exponents govern this table (used by the
    /// contraction budget when the table came from a closed form).
    pub fn with_spec(mut self, spec: KernelSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `a` at the integer lattice mode `k` (physical ξ = 2πk/Lbox).
    pub fn at_mode(&self, k: [i64; 2]) -> f64 {
        let n = self.grid.n() as i64;
        let i = k[0].rem_euclid(n) as usize;
        let idx = if self.grid.dim() == 1 {
            i
        } else {
            i * self.grid.n() + k[1].rem_euclid(n) as usize
        };
        self.values[idx]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            spec: self.spec.map(|k| k.scaled(c)),
            ..self.clone()
        }
    }

    /// CSV rows `xi0[,xi1],a` with physical wavevectors.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.grid.dim() == 1 { "xi0,a\n" } else { "xi0,xi1,a\n" });
        for (k, a) in spectral::wavevectors(&self.grid).iter().zip(&self.values) {
            if self.grid.dim() == 1 {
                let _ = writeln!(out, "{},{}", fmt_f64(k[0]), fmt_f64(*a));
            } else {
                let _ = writeln!(out, "{},{},{}", fmt_f64(k[0]), fmt_f64(k[1]), fmt_f64(*a));
            }
        }
        out
    }
}

/// Symbol at a single frequency modulus `ρ = |ξ|`, with its relative tail bound.
pub fn symbol_at(spec: &KernelSpec, rho: f64, opts: &QuadratureOptions) -> Result<(f64, f64)> {
    if rho == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (r_in, r_out) = window(spec, rho, opts.truncation_radius);
    let rule = radial_rule(spec, r_in, r_out, opts.radial_nodes, 2.0 / rho);
    symbol_on_rule(spec, rho, r_in, r_out, &rule, opts.tail_tolerance)
}

fn symbol_on_rule(
    spec: &KernelSpec,
    rho: f64,
    r_in: f64,
    rmax: f64,
    rule: &[(f64, f64)],
    tail_tol: f64,
) -> Result<(f64, f64)> {
    let (c, s) = spec.family.inner_power();
    let x = rho;
    let (inner, body) = if spec.dim == 1 {
        // 2 ∫_0^{r_in} (ρ²r²/2 − ρ⁴r⁴/24) c r^{−1−2s} dr
        let inner = 2.0
            * c
            * (x * x / 2.0 * r_in.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
                - x.powi(4) / 24.0 * r_in.powf(4.0 - 2.0 * s) / (4.0 - 2.0 * s));
        let body: f64 = rule
            .iter()
            .map(|&(r, w)| w * 2.0 * (1.0 - (x * r).cos()) * spec.density(r))
            .sum();
        (inner, body)
    } else {
        // 2π ∫_0^{r_in} (ρ²r²/4 − ρ⁴r⁴/64) c r^{−2−2s} r dr
        let inner = 2.0
            * PI
            * c
            * (x * x / 4.0 * r_in.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
                - x.powi(4) / 64.0 * r_in.powf(4.0 - 2.0 * s) / (4.0 - 2.0 * s));
        let body: f64 = rule
            .iter()
            .map(|&(r, w)| w * 2.0 * PI * one_minus_j0(x * r) * spec.density(r) * r)
            .sum();
        (inner, body)
    };
    let mass = far_field_mass(spec, rmax)?;
    // far field: the mass is exact, the oscillatory part uses a two-term
    // asymptotic expansion whose remainder is O((ρR)^{-1}) relative to it
    let osc = oscillatory_tail(spec, x, rmax);
    let osc_bound = osc.abs() / (x * rmax);
    let a = inner + body + mass - osc;
    if !a.is_finite() {
        return Err(Error::Numerical(format!("symbol at |ξ| = {rho} is not finite")));
    }
    let rel = if a > 0.0 { osc_bound / a } else { 0.0 };
    if rel > tail_tol {
        return Err(Error::Numerical(format!(
            "far-field remainder {osc_bound:e} at |ξ| = {rho} exceeds {tail_tol} of a(ξ) = {a:e}; raise the truncation radius"
        )));
    }
    Ok((a.max(0.0), rel))
}

/// Asymptotic `∫_{|y|>R} cos(ξ·y) π(y) dy` for a power-law far field.
fn oscillatory_tail(spec: &KernelSpec, rho: f64, radius: f64) -> f64 {
    let Some((c, s)) = spec.family.outer_power(radius) else {
        return 0.0;
    };
    if spec.notch.is_some_and(|(_, hi)| hi > radius)
        || matches!(spec.family, KernelFamily::TruncatedPower { .. })
    {
        return 0.0;
    }
    let x = rho * radius;
    if spec.dim == 1 {
        // 2∫_R^∞ cos(ρr) g dr with g = c r^{−1−2s}
        let g = c * radius.powf(-1.0 - 2.0 * s);
        let dg = -(1.0 + 2.0 * s) * g / radius;
        2.0 * (-x.sin() * g / rho - x.cos() * dg / (rho * rho))
    } else {
        // 2π∫_R^∞ J0(ρr) g r dr, J0(x) ≈ √(2/πx)(cos(x−π/4) + sin(x−π/4)/(8x))
        let h = c * (2.0 / (PI * rho)).sqrt() * radius.powf(-1.5 - 2.0 * s);
        let dh = -(1.5 + 2.0 * s) * h / radius;
        let ph = x - PI / 4.0;
        let main = -ph.sin() * h / rho - ph.cos() * dh / (rho * rho);
        let corr = ph.cos() * h / (8.0 * x * rho);
        2.0 * PI * (main + corr)
    }
}

/// Symbol table with default quadrature.
pub fn compute_symbol(spec: &KernelSpec, grid: &TorusGrid) -> Result<SymbolTable> {
    compute_symbol_with(spec, grid, &QuadratureOptions::default())
}

/// Symbol table; `a` depends on `|ξ|` only, so each distinct `|k|²` on the
/// lattice is integrated once.
pub fn compute_symbol_with(spec: &KernelSpec, grid: &TorusGrid, opts: &QuadratureOptions) -> Result<SymbolTable> {
    if spec.dim != grid.dim() {
        return Err(Error::Argument(format!(
            "kernel dimension {} does not match grid dimension {}",
            spec.dim,
            grid.dim()
        )));
    }
    let modes = spectral::integer_modes(grid);
    let dk = 2.0 * PI / grid.lbox();
    let mut norms: Vec<i64> = modes.iter().map(|k| k[0] * k[0] + k[1] * k[1]).collect();
    norms.sort_unstable();
    norms.dedup();
    let mut by_norm: BTreeMap<i64, f64> = BTreeMap::new();
    let mut worst = 0.0f64;
    let mut nodes = 0;
    for &m in &norms {
        if m == 0 {
            by_norm.insert(0, 0.0);
            continue;
        }
        let rho = dk * (m as f64).sqrt();
        let (r_in, r_out) = window(spec, rho, opts.truncation_radius);
        let rule = radial_rule(spec, r_in, r_out, opts.radial_nodes, 2.0 / rho);
        nodes = nodes.max(rule.len());
        let (a, rel) = symbol_on_rule(spec, rho, r_in, r_out, &rule, opts.tail_tolerance)?;
        worst = worst.max(rel);
        by_norm.insert(m, a);
    }
    let values = modes
        .iter()
        .map(|k| by_norm[&(k[0] * k[0] + k[1] * k[1])])
        .collect();
    Ok(SymbolTable {
        grid: *grid,
        values,
        radial_nodes: nodes,
        truncation_radius: opts.truncation_radius,
        max_relative_tail_bound: worst,
        spec: Some(*spec),
    })
}

/// Fitted constants for the pointwise symbol bounds
/// `a(ξ) ≤ Ĉ_up(|ξ|^{2β} + |ξ|^{2δ})` and `|ξ|^{2α} ≤ a(ξ) + Ĉ_low`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolMargins {
    pub c_up: f64,
    pub c_low: f64,
    /// Number of nonzero lattice frequencies scanned.
    pub frequencies: usize,
}

/// Fits both constants over every nonzero lattice frequency.
pub fn symbol_bound_margins(table: &SymbolTable, spec: &KernelSpec) -> SymbolMargins {
    symbol_bound_margins_in(table, spec, 0.0, f64::INFINITY)
}

/// As [`symbol_bound_margins`] restricted to `lo ≤ |ξ| ≤ hi`.
pub fn symbol_bound_margins_in(table: &SymbolTable, spec: &KernelSpec, lo: f64, hi: f64) -> SymbolMargins {
    let mut c_up = 0.0f64;
    let mut c_low = 0.0f64;
    let mut count = 0;
    for (k, &a) in spectral::wavevectors(table.grid()).iter().zip(table.values()) {
        let r = (k[0] * k[0] + k[1] * k[1]).sqrt();
        if r == 0.0 || r < lo || r > hi {
            continue;
        }
        count += 1;
        c_up = c_up.max(a / (r.powf(2.0 * spec.beta) + r.powf(2.0 * spec.delta)));
        c_low = c_low.max(r.powf(2.0 * spec.alpha) - a);
    }
    SymbolMargins {
        c_up,
        c_low,
        frequencies: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_law_values() {
        let k = KernelSpec::power_law(2, 0.5);
        assert_eq!(eval_kernel(&k, &[0.6, 0.8]).unwrap(), 1.0);
        assert!((eval_kernel(&k, &[0.0, 2.0]).unwrap() - 0.125).abs() < 1e-15);
        assert!(eval_kernel(&k, &[0.0, 0.0]).is_err());
        assert!(eval_kernel(&k, &[1.0]).is_err());
    }

    #[test]
    fn piecewise_case_a_is_bracketed() {
        let k = KernelSpec::piecewise(2, KernelCase::A, 0.2, 0.35, 0.3);
        k.validate().unwrap();
        let r = 0.5f64;
        let v = eval_kernel(&k, &[r, 0.0]).unwrap();
        assert!(v >= r.powf(-2.0 - 0.4) && v <= r.powf(-2.0 - 0.7) * (1.0 + 1e-12));
        let r = 2.0f64;
        let v = eval_kernel(&k, &[0.0, r]).unwrap();
        assert!(v <= r.powf(-2.0 - 0.6) * (1.0 + 1e-12) && v >= 0.0);
    }

    #[test]
    fn case_validation() {
        assert!(KernelSpec::power_law(2, 0.5).validate().is_ok());
        assert!(KernelSpec::power_law(2, 0.25).validate().is_ok());
        let mut k = KernelSpec::power_law(2, 0.25);
        k.case = KernelCase::D;
        assert!(k.validate().is_err());
        assert!(KernelSpec::piecewise(2, KernelCase::A, 0.3, 0.2, 0.1).validate().is_err());
        assert!(KernelSpec::piecewise(2, KernelCase::C, 0.5, 0.5, 0.2).validate().is_ok());
        let mut k = KernelSpec::power_law(2, 0.5);
        k.c2 = 0.0;
        assert!(k.validate().is_err());
    }

    #[test]
    fn bounds_pass_with_equality_for_power_law() {
        let k = KernelSpec::power_law(2, 0.25);
        let radii: Vec<f64> = (1..40).map(|i| 0.05 * i as f64).collect();
        let rep = validate_bounds(&k, &radii).unwrap();
        assert!(rep.all_pass);
        for s in rep.samples.iter().filter(|s| s.radius <= 1.0) {
            assert!((s.density - s.lower).abs() <= 1e-12 * s.density);
            assert!((s.density - s.upper).abs() <= 1e-12 * s.density);
        }
        assert!(validate_bounds(&k, &[]).is_err());
    }

    #[test]
    fn notched_kernel_violates_lower_bound_on_the_annulus() {
        let mut k = KernelSpec::power_law(2, 0.5);
        k.notch = Some((0.4, 0.6));
        let radii = [0.2, 0.4, 0.45, 0.5, 0.6, 0.8, 1.5];
        let rep = validate_bounds(&k, &radii).unwrap();
        assert!(!rep.all_pass);
        assert_eq!(rep.lower_violations(), vec![0.4, 0.45, 0.5, 0.6]);
    }

    #[test]
    fn fitted_c4_for_case_c() {
        let k = KernelSpec::piecewise(2, KernelCase::C, 0.5, 0.5, 0.25);
        let radii: Vec<f64> = (1..=60).map(|i| 0.05 * i as f64).collect();
        let rep = validate_bounds(&k, &radii).unwrap();
        assert!(rep.all_pass);
        let oracle = radii
            .iter()
            .map(|&r| k.density(r) / (r.powf(-3.0) + r.powf(-2.5)))
            .fold(0.0, f64::max);
        assert_eq!(rep.c4, oracle);
    }

    #[test]
    fn integrability_closed_forms() {
        let v = levy_integrability(&KernelSpec::power_law(1, 0.25)).unwrap();
        assert!((v.value - 16.0 / 3.0).abs() < 1e-8 * 16.0 / 3.0, "{}", v.value);
        let v = levy_integrability(&KernelSpec::power_law(2, 0.5)).unwrap();
        assert!((v.value - 4.0 * PI).abs() < 1e-8 * 4.0 * PI, "{}", v.value);
        assert!(v.tail > 0.0 && v.truncation_radius == 64.0);
    }

    #[test]
    fn log_divergent_tail_is_reported() {
        let mut k = KernelSpec::piecewise(2, KernelCase::C, 0.5, 0.5, 0.25);
        k.family = KernelFamily::PiecewisePower {
            inner_coeff: 1.0,
            inner_exponent: 0.5,
            outer_coeff: 1.0,
            outer_exponent: 0.0,
        };
        assert!(matches!(levy_integrability(&k), Err(Error::Numerical(_))));
    }

    #[test]
    fn one_dimensional_half_power_symbol_is_pi_abs_xi() {
        let k = KernelSpec::power_law(1, 0.5);
        for rho in [1.0, 3.0, 10.0, 31.0] {
            let (a, _) = symbol_at(&k, rho, &QuadratureOptions::default()).unwrap();
            assert!((a - PI * rho).abs() < 1e-6 * PI * rho, "rho={rho}: {a}");
        }
    }

    #[test]
    fn table_invariants() {
        let g = TorusGrid::standard(2, 16).unwrap();
        let k = KernelSpec::piecewise(2, KernelCase::C, 0.5, 0.5, 0.3);
        let t = compute_symbol(&k, &g).unwrap();
        assert_eq!(t.values()[0], 0.0);
        for a in -8i64..8 {
            for b in -7i64..8 {
                let v = t.at_mode([a, b]);
                assert!(v > 0.0 || (a == 0 && b == 0));
                if a > -8 {
                    assert_eq!(v, t.at_mode([-a, -b]));
                }
            }
        }
        assert!(t.to_csv().lines().count() == g.len() + 1);
    }

    #[test]
    fn margins_exclude_zero_and_scale_linearly() {
        let g = TorusGrid::standard(2, 32).unwrap();
        let k = KernelSpec::power_law(2, 0.25);
        let t = compute_symbol(&k, &g).unwrap();
        let m = symbol_bound_margins_in(&t, &k, 1.0, 16.0);
        assert!(m.c_up.is_finite() && m.c_low.is_finite() && m.c_up > 0.0);
        let k2 = k.scaled(2.0);
        let t2 = compute_symbol(&k2, &g).unwrap();
        for (a, b) in t.values().iter().zip(t2.values()) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * b.max(1e-300));
        }
        let m2 = symbol_bound_margins_in(&t2, &k, 1.0, 16.0);
        assert!((m2.c_up - 2.0 * m.c_up).abs() < 1e-12 * m2.c_up);
        // raw symbol of |y|^{-2-1/2} is ≈ 12|ξ|^{1/2}, so the lower gap closes
        assert_eq!(m.c_low, 0.0);
        assert_eq!(m2.c_low, 0.0);
    }

    #[test]
    fn entries_round_trip() {
        let mut k = KernelSpec::piecewise(2, KernelCase::A, 0.2, 0.3, 0.4);
        k.notch = Some((0.4, 0.6));
        let map: BTreeMap<String, String> = k.to_entries().into_iter().collect();
        assert_eq!(KernelSpec::from_entries(&map, "kernel.").unwrap(), k);
        let mut bad = map.clone();
        bad.insert("alpha".into(), "x".into());
        match KernelSpec::from_entries(&bad, "kernel.") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "kernel.alpha"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn radial_kernels_are_symmetric(y0 in -5.0f64..5.0, y1 in -5.0f64..5.0, s in 0.05f64..0.5) {
            prop_assume!(y0.abs() + y1.abs() > 1e-6);
            for k in [KernelSpec::power_law(2, s), KernelSpec::piecewise(2, KernelCase::A, s * 0.5, s, 0.3)] {
                let a = eval_kernel(&k, &[y0, y1]).unwrap();
                let b = eval_kernel(&k, &[-y0, -y1]).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a >= 0.0);
            }
        }
    }
}
