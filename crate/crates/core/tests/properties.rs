use std::f64::consts::PI;

use proptest::prelude::*;
use twistorlab::energy_residue::{energy, energy_sigma};
use twistorlab::harmonic_builders::{family_from_uq, random_constant_gauge, solve_constant, SolutionData, Target};
use twistorlab::lightcone_frames::{coordinate_q, isometry_psi, minkowski_form, minkowski_q};
use twistorlab::surface_grid::{I, ONE, ZERO};
use twistorlab::{Domain, GaugeFamily, GridField, Involution, Mat2, Reduce, C64};

fn mat(v: &[f64]) -> Mat2 {
    Mat2::new(
        C64::new(v[0], v[1]),
        C64::new(v[2], v[3]),
        C64::new(v[4], v[5]),
        C64::new(v[6], v[7]),
    )
}

/// Smooth periodic matrix 1-form on the unit torus from a few coefficients.
fn trig_form(domain: &Domain, c: &[f64]) -> GridField {
    let (a, b, m) = (mat(&c[0..8]), mat(&c[8..16]), (c[16].abs() * 3.0).floor() + 1.0);
    GridField::one_form_fn(domain, |z| {
        let e = (I * 2.0 * PI * (z.re * m + z.im)).exp();
        (a * e, b * e.conj())
    })
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wedge_is_bilinear(c1 in coeffs(17), c2 in coeffs(17), c3 in coeffs(17), s in -2.0f64..2.0) {
        let domain = Domain::unit_torus(8).unwrap();
        let (a, b, c) = (trig_form(&domain, &c1), trig_form(&domain, &c2), trig_form(&domain, &c3));
        let s = C64::new(s, 0.5);
        let lhs = (&a + &b.scale(s)).wedge(&c).unwrap();
        let rhs = &a.wedge(&c).unwrap() + &b.wedge(&c).unwrap().scale(s);
        prop_assert!(lhs.max_diff(&rhs) < 1e-12);
    }

    #[test]
    fn traced_wedge_is_antisymmetric(c1 in coeffs(17), c2 in coeffs(17)) {
        let domain = Domain::unit_torus(8).unwrap();
        let (a, b) = (trig_form(&domain, &c1), trig_form(&domain, &c2));
        let ab = a.wedge(&b).unwrap().trace();
        let ba = b.wedge(&a).unwrap().trace();
        prop_assert!((&ab + &ba).sup_norm() < 1e-12);
    }

    #[test]
    fn exact_forms_integrate_to_zero(c in coeffs(17)) {
        let domain = Domain::unit_torus(16).unwrap();
        let w = trig_form(&domain, &c);
        let total = w.d().unwrap().integrate(Reduce::Entry(0, 1)).unwrap();
        prop_assert!(total.norm() < 1e-12);
    }

    #[test]
    fn spectral_derivative_is_exact_below_nyquist(m in -7i32..=7, n in -7i32..=7, re in -1.0f64..1.0) {
        let domain = Domain::torus(C64::new(re * 0.4, 1.1), 16, 16).unwrap();
        let tau = C64::new(re * 0.4, 1.1);
        // Lattice-periodic phase in the coordinates (s, t) with z = s + tτ.
        let phase = |z: C64| {
            let t = z.im / tau.im;
            let s = z.re - t * tau.re;
            (I * 2.0 * PI * (m as f64 * s + n as f64 * t)).exp()
        };
        let f = GridField::scalar_fn(&domain, phase);
        let (dz, dzb) = f.derive().unwrap();
        // ∂_x = 2πi m, ∂_y = 2πi (n − m Re τ)/Im τ.
        let kx = 2.0 * PI * m as f64;
        let ky = 2.0 * PI * (n as f64 - m as f64 * tau.re) / tau.im;
        for idx in 0..domain.len() {
            let v = f.component(0)[idx];
            let ez = v * I * (C64::new(kx, 0.0) - I * ky) * 0.5;
            let ezb = v * I * (C64::new(kx, 0.0) + I * ky) * 0.5;
            prop_assert!((dz.component(0)[idx] - ez).norm() < 1e-10);
            prop_assert!((dzb.component(0)[idx] - ezb).norm() < 1e-10);
        }
    }

    #[test]
    fn torus_quadrature_is_exact_for_band_limited_data(m in -3i32..=3, n in -3i32..=3, a in -1.0f64..1.0) {
        let domain = Domain::unit_torus(8).unwrap();
        let fine = domain.with_resolution(32, 32).unwrap();
        let f = |z: C64| C64::new(a, 0.0) + (I * 2.0 * PI * (m as f64 * z.re + n as f64 * z.im)).exp();
        let coarse = domain.integrate_dxdy(&domain.points().into_iter().map(f).collect::<Vec<_>>());
        let refined = fine.integrate_dxdy(&fine.points().into_iter().map(f).collect::<Vec<_>>());
        prop_assert!((coarse - refined).norm() < 1e-13);
    }

    #[test]
    fn determinant_winding_is_additive(a in -3i32..=3, b in -3i32..=3) {
        let domain = Domain::unit_torus(8).unwrap();
        // diag(λ^k, 1)
        let diag = |k: i32| {
            if k == 0 {
                GaugeFamily::constant(&domain, [(0, Mat2::identity())])
            } else {
                GaugeFamily::constant(&domain, [(k, Mat2::new(ONE, ZERO, ZERO, ZERO)), (0, Mat2::new(ZERO, ZERO, ZERO, ONE))])
            }
        };
        let (ga, gb) = (diag(a), diag(b));
        let prod = ga.compose(&gb, a.abs() + b.abs() + 2).unwrap();
        prop_assert_eq!(ga.det_winding().unwrap(), a as i64);
        prop_assert_eq!(prod.det_winding().unwrap(), (a + b) as i64);
    }

    #[test]
    fn psi_is_an_isometry(x in prop::array::uniform5(-10.0f64..10.0), y in prop::array::uniform5(-10.0f64..10.0)) {
        let (v, w) = (isometry_psi(x), isometry_psi(y));
        let scale = x.iter().chain(&y).map(|t| t * t).sum::<f64>().max(1.0);
        prop_assert!((minkowski_q(&v).re - coordinate_q(x)).abs() <= 1e-14 * scale);
        let dot = -x[0] * y[0] + x[1] * y[1] + x[2] * y[2] + x[3] * y[3] + x[4] * y[4];
        prop_assert!((minkowski_form(&v, &w).re - dot).abs() <= 1e-14 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energy_is_real_and_conjugates_under_rho(seed in 0u64..1_000_000) {
        let domain = Domain::unit_torus(32).unwrap();
        let u0 = solve_constant(ONE, Target::S3).unwrap();
        let fam = family_from_uq(&SolutionData::constant(&domain, u0, ONE, Target::S3).unwrap()).unwrap();
        let g = random_constant_gauge(&domain, seed).unwrap();
        let gauged = fam.gauge_apply(&g, 1).unwrap();
        let e = energy(&gauged).unwrap().energy();
        prop_assert!((e - C64::new(1.0 / PI, 0.0)).norm() < 1e-10);
        let es = energy_sigma(&gauged, Involution::Rho).unwrap();
        prop_assert!((es - e.conj()).norm() < 1e-10);
    }
}
