//! The spectral operator against real-space sums and closed forms.

use std::f64::consts::PI;

use levy_transport::field::{ScalarField, TorusGrid};
use levy_transport::kernel::{compute_symbol, KernelSpec};
use levy_transport::solver::{apply_levy, mode_field};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn power_symbol(alpha: f64, xi: f64) -> f64 {
    xi.powf(2.0 * alpha) * PI * gamma(-alpha).abs() / (4f64.powf(alpha) * gamma(1.0 + alpha))
}

/// `∫(1 − cos ξ·y)|y|^{-2-2α} dy` over ℝ² by a lattice sum, with the small
/// ball replaced by its Taylor term and the far field by its mean part.
fn lattice_sum(alpha: f64, xi: [f64; 2]) -> f64 {
    let (h, rho, big_r) = (0.02, 0.2, 20.0);
    let m = (big_r / h) as i64;
    let s = -2.0 - 2.0 * alpha;
    let mut sum = 0.0;
    for i in -m..=m {
        for j in -m..=m {
            let y = [i as f64 * h, j as f64 * h];
            let r = y[0].hypot(y[1]);
            if r < rho || r > big_r {
                continue;
            }
            sum += (1.0 - (xi[0] * y[0] + xi[1] * y[1]).cos()) * r.powf(s);
        }
    }
    let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
    let inner = 0.5 * xi2 * PI * rho.powf(2.0 - 2.0 * alpha) / (2.0 - 2.0 * alpha);
    let outer = 2.0 * PI * big_r.powf(-2.0 * alpha) / (2.0 * alpha);
    sum * h * h + inner + outer
}

#[test]
fn operator_on_a_mode_matches_real_space_sum() {
    let grid = TorusGrid::new(2, 32, 2.0 * PI).unwrap();
    for alpha in [0.25, 0.5] {
        let table = compute_symbol(&KernelSpec::power_law(2, alpha), &grid).unwrap();
        let k = [2i64, 1];
        let lf = apply_levy(&mode_field(grid, k), &table).unwrap();
        let direct = lattice_sum(alpha, [k[0] as f64, k[1] as f64]);
        let rel = (lf.values()[0] - direct).abs() / direct;
        assert!(rel < 0.05, "alpha {alpha}: spectral {} vs lattice {direct}", lf.values()[0]);
    }
}

#[test]
fn symbol_is_homogeneous_with_closed_form_constant() {
    let grid = TorusGrid::new(2, 64, 2.0 * PI).unwrap();
    for alpha in [0.25, 0.5] {
        let table = compute_symbol(&KernelSpec::power_law(2, alpha), &grid).unwrap();
        for k in [[1i64, 0], [3, 4], [0, 16], [-7, 9], [11, -11]] {
            let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            let got = table.at_mode(k);
            let want = power_symbol(alpha, r);
            assert!((got / want - 1.0).abs() < 1e-3, "alpha {alpha} k {k:?}: {got} vs {want}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_acts_diagonally_on_mode_sums(
        modes in prop::collection::vec(((-10i64..=10), (-10i64..=10), -1.0f64..1.0), 1..5),
    ) {
        let grid = TorusGrid::new(2, 32, 2.0 * PI).unwrap();
        let table = compute_symbol(&KernelSpec::power_law(2, 0.5), &grid).unwrap();
        let field = |scale: &dyn Fn([i64; 2]) -> f64| {
            ScalarField::from_fn(grid, |x| {
                modes
                    .iter()
                    .map(|&(a, b, c)| c * scale([a, b]) * (a as f64 * x[0] + b as f64 * x[1]).cos())
                    .sum()
            })
        };
        let f = field(&|_| 1.0);
        let want = field(&|k| power_symbol(0.5, ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt()));
        let got = apply_levy(&f, &table).unwrap();
        let err = got
            .values()
            .iter()
            .zip(want.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-6 * (1.0 + want.values().iter().map(|v| v.abs()).fold(0.0, f64::max)));
    }
}
