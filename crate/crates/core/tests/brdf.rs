use std::f64::consts::{FRAC_PI_2, PI};

use occlurend_core::brdf::{
    beckmann_d_cos, kelemen_specular_eval, sample_ndf, schlick_fresnel, BrdfLut, SpecularParams, LUT_COS_MIN,
    ROUGHNESS_MIN, SKIN_F0,
};
use occlurend_core::Vec3;
use proptest::prelude::*;

/// `2π ∫ D(θ) cos θ sin θ dθ` by composite Simpson.
fn projected_ndf_mass(r: f64) -> f64 {
    let n = 20_000;
    let h = FRAC_PI_2 / n as f64;
    let f = |t: f64| beckmann_d_cos(t.cos(), r) * t.cos() * t.sin();
    let mut s = f(0.0) + f(FRAC_PI_2);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    2.0 * PI * s * h / 3.0
}

fn hemi(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

#[test]
fn schlick_endpoints() {
    assert_eq!(schlick_fresnel(SKIN_F0, 1.0), SKIN_F0);
    assert_eq!(schlick_fresnel(SKIN_F0, 0.0), 1.0);
}

#[test]
fn ndf_projected_area_is_one() {
    for r in [0.05, 0.1, 0.3, 0.6, 1.0] {
        let m = projected_ndf_mass(r);
        assert!((m - 1.0).abs() < 1e-6, "r = {r}: {m}");
    }
}

#[test]
fn lut_cells_are_bounded() {
    let lut = BrdfLut::shared_default();
    for c in lut.cells() {
        assert!(c[0] >= 0.0 && c[1] >= 0.0, "{c:?}");
        // unit-intensity lobe with F ≤ 1 reflects at most the incident energy
        assert!(c[0] + c[1] <= 1.0 + 1e-2, "{c:?}");
    }
}

#[test]
fn lut_lookup_at_cell_centers_returns_cells() {
    let lut = BrdfLut::precompute(8, 64);
    for i in 0..8 {
        for j in 0..8 {
            let s = lut.lookup(lut.cos_at(i), lut.roughness_at(j));
            let c = lut.cell(i, j);
            assert!((s.scale - c[0]).abs() < 1e-12 && (s.bias - c[1]).abs() < 1e-12);
        }
    }
    assert_eq!(BrdfLut::axis_value(8, 0, LUT_COS_MIN), lut.cos_at(0));
}

proptest! {
    #[test]
    fn specular_is_reciprocal_and_nonnegative(
        ti in 0.0..FRAC_PI_2, pi in 0.0..2.0 * PI, to in 0.0..FRAC_PI_2, po in 0.0..2.0 * PI,
        r in ROUGHNESS_MIN..1.0, k in 0.0..2.0f64,
    ) {
        let p = SpecularParams::new(k, r, SKIN_F0);
        let (wi, wo) = (hemi(ti, pi), hemi(to, po));
        let a = kelemen_specular_eval(wi, wo, Vec3::Z, &p);
        prop_assert_eq!(a, kelemen_specular_eval(wo, wi, Vec3::Z, &p));
        prop_assert!(a >= 0.0 && a.is_finite());
        prop_assert_eq!(kelemen_specular_eval(-wi, wo, Vec3::Z, &p), 0.0);
    }

    #[test]
    fn ndf_sample_reflects_about_half_vector(
        to in 0.0..1.5f64, po in 0.0..2.0 * PI, r in 0.02..1.0f64, u0 in 0.0..0.999f64, u1 in 0.0..1.0f64,
    ) {
        let wo = hemi(to, po);
        let s = sample_ndf(Vec3::Z, wo, r, (u0, u1));
        prop_assert!((s.wi.length() - 1.0).abs() < 1e-9);
        prop_assert!((s.h.length() - 1.0).abs() < 1e-9);
        if s.above_horizon {
            prop_assert!(((s.wi + wo).normalized() - s.h).length() < 1e-6);
            let expect = beckmann_d_cos(s.h.z, r) * s.h.z / (4.0 * wo.dot(s.h));
            prop_assert!((s.pdf - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn lut_gradient_matches_finite_difference(c in 0.05..0.95f64, r in 0.05..0.95f64) {
        let lut = BrdfLut::shared_default();
        let h = 1e-7;
        let s = lut.lookup(c, r);
        let dc = (lut.lookup(c + h, r).scale - lut.lookup(c - h, r).scale) / (2.0 * h);
        let dr = (lut.lookup(c, r + h).bias - lut.lookup(c, r - h).bias) / (2.0 * h);
        // a kink at a cell boundary makes the central difference average two slopes
        let tol = 1e-4 * (1.0 + dc.abs().max(dr.abs()));
        let near_kink = |v: f64, lo: f64| {
            let x = (v - lo) / (1.0 - lo) * lut.resolution() as f64 - 0.5;
            (x - x.round()).abs() < 1e-5
        };
        if !near_kink(c, LUT_COS_MIN) && !near_kink(r, ROUGHNESS_MIN) {
            prop_assert!((s.d_scale[0] - dc).abs() < tol, "{} vs {dc}", s.d_scale[0]);
            prop_assert!((s.d_bias[1] - dr).abs() < tol, "{} vs {dr}", s.d_bias[1]);
        }
    }
}
