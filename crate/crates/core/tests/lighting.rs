use std::f64::consts::PI;

use occlurend_core::lighting::cubemap::{dir_to_face, face_to_dir};
use occlurend_core::lighting::{
    dir_to_texel, texel_to_dir, CubeLevel, EnvironmentMap, LightSampler, PrefilterOperator,
};
use occlurend_core::synth::sky;
use occlurend_core::{Rgb, Vec3};
use proptest::prelude::*;

fn dir(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn linear(d: Vec3) -> Rgb {
    Rgb::new(1.0 + 0.5 * d.x, 1.0 + 0.3 * d.y - 0.2 * d.z, 2.0 + d.z)
}

fn rgb_dot(a: &[Rgb], b: &[Rgb]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(*y)).sum()
}

#[test]
fn prefilter_keeps_constant_env() {
    let env = EnvironmentMap::constant(16, Rgb::new(0.3, 1.0, 2.5)).prefiltered();
    for level in env.levels().unwrap() {
        for t in level.texels() {
            assert!((*t - Rgb::new(0.3, 1.0, 2.5)).max_abs() < 1e-12);
        }
    }
}

#[test]
fn sampler_probabilities_sum_to_one() {
    let mip0 = CubeLevel::from_fn(8, sky);
    let s = LightSampler::new(&mip0);
    let total: f64 = (0..mip0.texels().len()).map(|i| s.texel_probability(i)).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn sampler_pdf_integrates_to_one() {
    // midpoint rule over each face's (a, b) square, with the cube-to-sphere Jacobian
    let mip0 = CubeLevel::from_fn(8, sky);
    let s = LightSampler::new(&mip0);
    let n = 128;
    let mut total = 0.0;
    for face in 0..6 {
        for i in 0..n {
            for j in 0..n {
                let a = (2 * i + 1) as f64 / n as f64 - 1.0;
                let b = (2 * j + 1) as f64 / n as f64 - 1.0;
                let jac = (1.0 + a * a + b * b).powf(-1.5);
                total += s.pdf(face_to_dir(face, a, b)) * jac * (2.0 / n as f64).powi(2);
            }
        }
    }
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

proptest! {
    #[test]
    fn texel_center_round_trips(face in 0usize..6, row in 0usize..16, col in 0usize..16) {
        let (f, r, c, _, _) = dir_to_texel(texel_to_dir(face, row, col, 16), 16);
        prop_assert_eq!((f, r, c), (face, row, col));
    }

    #[test]
    fn face_coordinates_round_trip(t in 0.0..PI, p in 0.0..2.0 * PI) {
        let d = dir(t, p);
        let (face, a, b) = dir_to_face(d);
        prop_assert!(a.abs() <= 1.0 && b.abs() <= 1.0);
        prop_assert!((face_to_dir(face, a, b) - d).length() < 1e-12);
    }

    #[test]
    fn bilinear_is_continuous_across_seams(t in 0.0..PI, p in 0.0..2.0 * PI) {
        // Two nearby directions on either side of any edge read almost the same value.
        let env = CubeLevel::from_fn(8, linear);
        let d = dir(t, p);
        let e = dir(t + 1e-7, p + 1e-7);
        prop_assert!((env.bilinear(d) - env.bilinear(e)).max_abs() < 1e-4);
    }

    #[test]
    fn bilinear_tracks_smooth_env(t in 0.0..PI, p in 0.0..2.0 * PI) {
        let env = CubeLevel::from_fn(32, linear);
        let d = dir(t, p);
        prop_assert!((env.bilinear(d) - linear(d)).max_abs() < 0.01);
    }

    #[test]
    fn sampled_pdf_matches_pdf_query(u0 in 0.0..1.0f64, u1 in 0.0..1.0f64) {
        let mip0 = CubeLevel::from_fn(8, sky);
        let s = LightSampler::new(&mip0);
        let ls = s.sample(&mip0, (u0, u1));
        prop_assert!((ls.dir.length() - 1.0).abs() < 1e-12);
        prop_assert!(ls.pdf > 0.0);
        prop_assert!((s.pdf(ls.dir) - ls.pdf).abs() <= 1e-9 * ls.pdf);
    }

    #[test]
    fn prefilter_adjoint_dot_product(x in prop::collection::vec(0.0..1.0f64, 16 * 16 * 6), seed in 0u64..1000) {
        let op = PrefilterOperator::shared(16);
        prop_assert!(op.levels() > 1);
        let mip0 = CubeLevel::new(16, x.iter().map(|v| Rgb::new(*v, 1.0 - v, v * v)).collect()).unwrap();
        let levels = op.apply(&mip0);
        let ys: Vec<Vec<Rgb>> = levels
            .iter()
            .enumerate()
            .map(|(k, l)| {
                (0..l.texels().len())
                    .map(|i| {
                        let h = ((i as u64 + 1) * 2654435761 + seed * 97 + k as u64 * 13) % 1000;
                        Rgb::new(h as f64 / 1000.0, 0.5, -(h as f64) / 2000.0)
                    })
                    .collect()
            })
            .collect();
        let lhs: f64 = levels.iter().zip(&ys).map(|(l, y)| rgb_dot(l.texels(), y)).sum();
        let refs: Vec<&[Rgb]> = ys.iter().map(|y| y.as_slice()).collect();
        let rhs = rgb_dot(mip0.texels(), &op.adjoint(&refs));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn prefilter_is_linear(a in 0.1..4.0f64) {
        let op = PrefilterOperator::shared(8);
        let x = CubeLevel::from_fn(8, sky);
        let y = CubeLevel::from_fn(8, linear);
        let z = CubeLevel::new(8, x.texels().iter().zip(y.texels()).map(|(p, q)| *p * a + *q).collect()).unwrap();
        let (lx, ly, lz) = (op.apply(&x), op.apply(&y), op.apply(&z));
        for k in 0..lx.len() {
            for i in 0..lx[k].texels().len() {
                let want = lx[k].texels()[i] * a + ly[k].texels()[i];
                prop_assert!((lz[k].texels()[i] - want).max_abs() < 1e-12 * (1.0 + want.max_abs()));
            }
        }
    }
}
