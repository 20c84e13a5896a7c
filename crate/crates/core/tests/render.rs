use occlurend_core::brdf::BrdfLut;
use occlurend_core::geometry::primitives::{self, Dent};
use occlurend_core::render::{Camera, Frame, Intrinsics, Materials, Pipeline, RenderOutput, RenderSettings, Renderer, Scene};
use occlurend_core::shading::{SampleBudget, VisibilityMode};
use occlurend_core::synth;
use occlurend_core::{Mat3, Rgb, Rigid, Vec3};
use proptest::prelude::*;

fn scene(env_scale: f64) -> Scene {
    Scene {
        mesh: primitives::dented_blob(24, 12, Dent::default()),
        materials: Materials::constant(4, Rgb::new(0.6, 0.4, 0.3), 0.5, 0.3),
        env: synth::environment(synth::EnvKind::Sky, 8).scaled(env_scale).unwrap().prefiltered(),
        camera: Camera::new(Intrinsics::from_fov(16, 16, 45.0), Rigid::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y))
            .unwrap(),
    }
}

fn settings(seed: u64, visibility: VisibilityMode) -> RenderSettings {
    RenderSettings { budget: SampleBudget::new(8, 8, 4), visibility, seed, ..RenderSettings::default() }
}

fn render(scene: &Scene, s: RenderSettings, pose: Rigid) -> RenderOutput {
    let pipeline = Pipeline::build(scene, BrdfLut::shared_default()).unwrap();
    Renderer::new(scene, &pipeline, s).render(&Frame::posed(0, pose)).unwrap()
}

#[test]
fn unprefiltered_env_is_rejected() {
    let mut s = scene(1.0);
    s.env = synth::environment(synth::EnvKind::Sky, 8);
    assert!(Pipeline::build(&s, BrdfLut::shared_default()).is_err());
}

#[test]
fn background_pixels_are_black() {
    let out = render(&scene(1.0), settings(0, VisibilityMode::Normalized), Rigid::IDENTITY);
    assert!(out.covered() > 0 && out.covered() < 16 * 16);
    for (c, m) in out.color.data().iter().zip(out.mask.data()) {
        if *m == 0.0 {
            assert_eq!(*c, Rgb::ZERO);
        }
    }
}

#[test]
fn disabled_visibility_is_one() {
    let out = render(&scene(1.0), settings(0, VisibilityMode::Disabled), Rigid::IDENTITY);
    for (v, m) in out.visibility.data().iter().zip(out.mask.data()) {
        assert_eq!(*v, *m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn color_is_diffuse_plus_specular(seed in 0u64..1000, angle in 0.0..6.28f64) {
        let pose = Rigid::new(Mat3::rotation(Vec3::new(0.3, 1.0, 0.2).normalized(), angle), Vec3::ZERO);
        let out = render(&scene(1.0), settings(seed, VisibilityMode::Normalized), pose);
        for ((c, d), s) in out.color.data().iter().zip(out.diffuse.data()).zip(out.specular.data()) {
            prop_assert!((*c - (*d + *s)).max_abs() <= 1e-12 * (1.0 + c.max_abs()));
        }
        for v in out.visibility.data() {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn render_is_deterministic_per_seed(seed in 0u64..1000) {
        let s = scene(1.0);
        let a = render(&s, settings(seed, VisibilityMode::Normalized), Rigid::IDENTITY);
        let b = render(&s, settings(seed, VisibilityMode::Normalized), Rigid::IDENTITY);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn radiance_is_linear_in_env(k in 0.1..8.0f64, seed in 0u64..1000) {
        let s = settings(seed, VisibilityMode::Normalized);
        let a = render(&scene(1.0), s, Rigid::IDENTITY);
        let b = render(&scene(k), s, Rigid::IDENTITY);
        for (x, y) in a.color.data().iter().zip(b.color.data()) {
            prop_assert!((*x * k - *y).max_abs() <= 1e-9 * (1.0 + y.max_abs()), "{x:?} * {k} vs {y:?}");
        }
    }
}
