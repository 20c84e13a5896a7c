use std::collections::BTreeSet;
use std::sync::Arc;

use occlurend_core::brdf::BrdfLut;
use occlurend_core::geometry::{primitives, UniformLaplacian};
use occlurend_core::lighting::{CubeLevel, EnvironmentMap};
use occlurend_core::optim::precond::{precondition_scalar, CG_TOLERANCE};
use occlurend_core::optim::{
    compute_gradients, image_metrics, optimize, parse_groups, precondition, preconditioned_vertex_step, Adam,
    LossWeights, Objective, OptimConfig, Optimizer, ParamGroup, Parameters, VertexStepOrder, PSNR_CAP_DB,
};
use occlurend_core::render::{Camera, Frame, Grid, Intrinsics, Materials, Pipeline, RenderSettings, Scene};
use occlurend_core::shading::SampleBudget;
use occlurend_core::synth::{self, SyntheticSpec};
use occlurend_core::{Error, Rgb, Rigid, Vec3};
use proptest::prelude::*;

fn lut() -> Arc<BrdfLut> {
    BrdfLut::shared_default()
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn shifted_dense(l: &UniformLaplacian, lambda: f64) -> Vec<Vec<f64>> {
    let mut a = l.to_dense();
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v *= lambda;
        }
        row[i] += 1.0;
    }
    a
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn adam_first_step_is_signed_lr() {
    for g in [3.0, -0.02, 0.5] {
        let mut adam = Adam::new(1, 0.01);
        let mut p = [1.0];
        adam.step(&mut p, &[g]);
        assert!((p[0] - (1.0 - 0.01 * g.signum())).abs() < 1e-6);
    }
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut adam = Adam::new(3, 0.1);
    let mut p = [0.5, -2.0, 7.0];
    adam.step(&mut p, &[0.0; 3]);
    assert_eq!(p, [0.5, -2.0, 7.0]);
}

#[test]
fn adam_two_steps_match_reference() {
    let (lr, g) = (0.05, 0.7);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut x) = (0.0, 0.0, 2.0);
    for t in 1..=2 {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        x -= lr * mh / (vh.sqrt() + eps);
    }
    let mut adam = Adam::new(1, lr);
    let mut p = [2.0];
    adam.step(&mut p, &[g]);
    adam.step(&mut p, &[g]);
    assert!((p[0] - x).abs() < 1e-14);
}

#[test]
fn preconditioner_matches_dense_oracle() {
    let m = primitives::icosphere(1, 1.0);
    assert_eq!(m.vertex_count(), 42);
    let l = UniformLaplacian::build(&m);
    let lambda = 19.0;
    let a = shifted_dense(&l, lambda);
    let mut g = vec![0.0; 42];
    g[5] = 1.0;
    let want = dense_solve(a.clone(), dense_solve(a, g.clone()));
    let got = precondition_scalar(&l, lambda, &g).unwrap();
    for (x, y) in got.iter().zip(&want) {
        assert!((x - y).abs() <= 1e-5 * y.abs().max(1e-12), "{x} vs {y}");
    }
    let max_u = got.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(max_u < 1.0);
    assert!(got.iter().filter(|v| v.abs() > 1e-6).count() > 7);
    assert!(norm(&l.apply(&got)) < norm(&l.apply(&g)));
}

#[test]
fn preconditioner_identity_and_constants() {
    let m = primitives::icosphere(1, 1.0);
    let l = UniformLaplacian::build(&m);
    let g: Vec<Vec3> = (0..42).map(|i| Vec3::new(i as f64, -0.5 * i as f64, 1.0)).collect();
    assert_eq!(precondition(&l, 0.0, &g).unwrap(), g);
    let c = vec![Vec3::new(0.3, -1.0, 2.0); 42];
    for (u, c) in precondition(&l, 19.0, &c).unwrap().iter().zip(&c) {
        assert!((*u - *c).length() < 1e-9);
    }
}

#[test]
fn vertex_step_orders_agree_with_zero_smoothing() {
    let m = primitives::icosphere(1, 1.0);
    let l = UniformLaplacian::build(&m);
    let g: Vec<f64> = (0..126).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let v0: Vec<f64> = vec![0.0; 126];
    let mut out = Vec::new();
    for order in [VertexStepOrder::AdamThenSmooth, VertexStepOrder::SmoothThenAdam] {
        let mut v = v0.clone();
        let mut adam = Adam::new(126, 0.1);
        preconditioned_vertex_step(&mut v, &g, &l, 0.0, &mut adam, order).unwrap();
        out.push(v);
    }
    assert_eq!(out[0], out[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn preconditioner_residual_contract(g in prop::collection::vec(-1.0..1.0f64, 42), lambda in 0.1..40.0f64) {
        let m = primitives::icosphere(1, 1.0);
        let l = UniformLaplacian::build(&m);
        let u = precondition_scalar(&l, lambda, &g).unwrap();
        let a = shifted_dense(&l, lambda);
        let r: Vec<f64> = matvec(&a, &matvec(&a, &u)).iter().zip(&g).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&r) <= 1e-6 * norm(&g).max(CG_TOLERANCE));
    }
}

#[test]
fn metrics_examples() {
    let a = Grid::from_fn(4, 4, |x, y| Rgb::splat(0.05 * (x + y) as f64));
    let m = image_metrics(&a, &a, None).unwrap();
    assert_eq!((m.mae, m.psnr), (0.0, PSNR_CAP_DB));
    let b = a.map(|c| c + Rgb::splat(0.1));
    let m = image_metrics(&b, &a, None).unwrap();
    assert!((m.mae - 0.1).abs() < 1e-12);
    assert!((m.psnr - 20.0).abs() < 1e-9);
    let checker = Grid::from_fn(4, 4, |x, y| Rgb::splat(((x + y) % 2) as f64));
    let inverse = checker.map(|c| Rgb::ONE - c);
    assert!(image_metrics(&checker, &inverse, None).unwrap().psnr.abs() < 1e-12);
    let empty = Grid::filled(4, 4, 0.0);
    assert!(matches!(image_metrics(&a, &a, Some(&empty)), Err(Error::EmptyMask)));
}

/// One pixel looking at the center of a unit sphere.
fn furnace_pixel_scene(albedo: f64) -> Scene {
    let camera = Camera {
        intrinsics: Intrinsics::from_fov(1, 1, 10.0),
        pose: Rigid::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y),
    };
    Scene {
        mesh: primitives::uv_sphere(32, 16, 1.0),
        materials: Materials::constant(4, Rgb::splat(albedo), 0.0, 0.5),
        env: EnvironmentMap::constant(8, Rgb::ONE).prefiltered(),
        camera,
    }
}

fn objective<'a>(
    frozen: &'a BTreeSet<ParamGroup>,
    v_init: &'a [Vec3],
    l: &'a UniformLaplacian,
    settings: RenderSettings,
) -> Objective<'a> {
    Objective { weights: LossWeights::default(), frozen, v_init, laplacian: l, mask_image_loss: false, settings }
}

fn check_fd(analytic: f64, fd: f64, scale: f64, what: &str) {
    let tol = 1e-3 * fd.abs().max(1e-3 * scale);
    assert!((analytic - fd).abs() <= tol, "{what}: analytic {analytic} vs fd {fd}");
}

#[test]
fn albedo_gradient_on_furnace_pixel_matches_fd() {
    let scene = furnace_pixel_scene(0.6);
    let pipeline = Pipeline::build(&scene, lut()).unwrap();
    let mut frame = Frame::posed(0, Rigid::IDENTITY);
    frame.image = Some(Grid::filled(1, 1, Rgb::new(0.2, 0.3, 0.1)));
    let frozen = parse_groups("vertices,specular,roughness,env").unwrap();
    let l = UniformLaplacian::build(&scene.mesh);
    let v0 = scene.mesh.positions().to_vec();
    let settings = RenderSettings { budget: SampleBudget::new(64, 64, 8), ..RenderSettings::default() };
    let obj = objective(&frozen, &v0, &l, settings);
    let params = Parameters::encode(&scene);
    let (_, grads) = compute_gradients(&scene, &pipeline, &params, &[&frame], &obj).unwrap();
    let g = grads.get(ParamGroup::Albedo);
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(scale > 0.0);
    let h = 1e-5;
    for i in 0..g.len() {
        let eval = |d: f64| {
            let mut p = params.clone();
            p.get_mut(ParamGroup::Albedo)[i] += d;
            let mut s = scene.clone();
            p.decode_into(ParamGroup::Albedo, &mut s).unwrap();
            compute_gradients(&s, &pipeline, &p, &[&frame], &obj).unwrap().0.total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        check_fd(g[i], fd, scale, &format!("albedo latent {i}"));
    }
}

/// The untinted sky has ground texels whose green channel equals the
/// channel mean, a kink of the white-light term.
fn tinted_sky(res: usize) -> EnvironmentMap {
    let level = CubeLevel::from_fn(res, |d| {
        let c = synth::sky(d);
        Rgb::new(c[0] * 1.07, c[1] * 0.96, c[2])
    });
    EnvironmentMap::new(level).unwrap().prefiltered()
}

fn glossy_scene(size: usize, env_res: usize) -> Scene {
    let camera = Camera {
        intrinsics: Intrinsics::from_fov(size, size, 45.0),
        pose: Rigid::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y),
    };
    Scene {
        mesh: primitives::uv_sphere(16, 8, 1.0),
        materials: Materials::constant(4, Rgb::new(0.6, 0.4, 0.3), 0.5, 0.3),
        env: tinted_sky(env_res),
        camera,
    }
}

#[test]
fn env_latent_gradient_matches_fd() {
    let scene = glossy_scene(8, 16);
    let pipeline = Pipeline::build(&scene, lut()).unwrap();
    let mut frame = Frame::posed(0, Rigid::IDENTITY);
    frame.image = Some(Grid::filled(8, 8, Rgb::ZERO));
    let frozen = parse_groups("vertices,albedo,specular,roughness").unwrap();
    let l = UniformLaplacian::build(&scene.mesh);
    let v0 = scene.mesh.positions().to_vec();
    let settings = RenderSettings { budget: SampleBudget::new(16, 16, 4), ..RenderSettings::default() };
    let obj = objective(&frozen, &v0, &l, settings);
    let params = Parameters::encode(&scene);
    let (_, grads) = compute_gradients(&scene, &pipeline, &params, &[&frame], &obj).unwrap();
    let g = grads.get(ParamGroup::Env);
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    let picks: Vec<usize> = order[..20].iter().copied().chain((0..g.len()).step_by(g.len() / 20)).collect();
    let h = 1e-4;
    for &i in &picks {
        // the pipeline, and with it the light sampler, stays fixed: samples are matched
        let eval = |d: f64| {
            let mut p = params.clone();
            p.get_mut(ParamGroup::Env)[i] += d;
            let mut s = scene.clone();
            p.decode_into(ParamGroup::Env, &mut s).unwrap();
            compute_gradients(&s, &pipeline, &p, &[&frame], &obj).unwrap().0.total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        check_fd(g[i], fd, scale, &format!("env latent {i}"));
    }
}

#[test]
fn all_frozen_gives_zero_gradients() {
    let scene = glossy_scene(6, 8);
    let pipeline = Pipeline::build(&scene, lut()).unwrap();
    let mut frame = Frame::posed(0, Rigid::IDENTITY);
    frame.image = Some(Grid::filled(6, 6, Rgb::splat(0.3)));
    let frozen: BTreeSet<ParamGroup> = ParamGroup::ALL.into_iter().collect();
    let l = UniformLaplacian::build(&scene.mesh);
    let v0 = scene.mesh.positions().to_vec();
    let obj = objective(&frozen, &v0, &l, RenderSettings::default());
    let params = Parameters::encode(&scene);
    let (loss, grads) = compute_gradients(&scene, &pipeline, &params, &[&frame], &obj).unwrap();
    assert!(loss.total > 0.0);
    assert!(grads.is_zero());
}

fn small_round_trip() -> (Scene, Vec<Frame>, SyntheticSpec) {
    let spec = SyntheticSpec {
        poses: 4,
        width: 32,
        height: 32,
        texture_size: 16,
        env_res: 8,
        segments: 24,
        rings: 12,
        budget: SampleBudget::new(32, 32, 8),
        ..SyntheticSpec::default()
    };
    let data = synth::generate(&spec, lut()).unwrap();
    let mut init = synth::initial_scene(&data.ground_truth, 16, 8);
    init.env = data.ground_truth.env.clone();
    (init, data.frames, spec)
}

fn quick_config(iterations: usize) -> OptimConfig {
    OptimConfig {
        iterations,
        budget: SampleBudget::new(8, 8, 4),
        frozen: parse_groups("vertices,env").unwrap(),
        learning_rates: OptimConfig::default().learning_rates.with_textures(0.05),
        ..OptimConfig::default()
    }
}

#[test]
fn zero_iterations_leave_scene_untouched() {
    let (init, frames, _) = small_round_trip();
    let mut config = quick_config(0);
    config.frozen.clear();
    let (out, log) = optimize(init.clone(), frames, config, lut()).unwrap();
    assert!(log.is_empty());
    assert_eq!(out.mesh, init.mesh);
    assert_eq!(out.materials, init.materials);
    assert_eq!(out.env.mip0(), init.env.mip0());
}

#[test]
fn first_logged_loss_matches_offline_evaluation() {
    let (init, frames, _) = small_round_trip();
    let mut opt = Optimizer::new(init, frames[..1].to_vec(), quick_config(1), lut()).unwrap();
    let (offline, _) = compute_gradients(opt.scene(), opt.pipeline(), opt.params(), &[&opt.frames()[0]], &opt.objective()).unwrap();
    let entry = opt.step().unwrap();
    assert_eq!(entry.iter, 0);
    assert_eq!(entry.loss, offline);
}

#[test]
fn loss_trends_down_over_first_iterations() {
    let (init, frames, _) = small_round_trip();
    let (_, log) = optimize(init, frames, quick_config(50), lut()).unwrap();
    let med = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let totals: Vec<f64> = log.iter().map(|e| e.loss.total).collect();
    assert!(med(&totals[45..]) < med(&totals[..5]), "{totals:?}");
}

#[test]
fn optimization_is_deterministic() {
    let (init, frames, _) = small_round_trip();
    let a = optimize(init.clone(), frames.clone(), quick_config(5), lut()).unwrap();
    let b = optimize(init, frames, quick_config(5), lut()).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.materials, b.0.materials);
}

#[test]
fn frozen_groups_do_not_move() {
    let (init, frames, _) = small_round_trip();
    let mut config = quick_config(3);
    config.frozen = parse_groups("vertices,roughness,env").unwrap();
    let (out, _) = optimize(init.clone(), frames, config, lut()).unwrap();
    assert_eq!(out.mesh, init.mesh);
    assert_eq!(out.materials.roughness, init.materials.roughness);
    assert_eq!(out.env.mip0(), init.env.mip0());
    assert_ne!(out.materials.albedo, init.materials.albedo);
}

#[test]
fn non_finite_environment_is_rejected() {
    let mut texels = vec![Rgb::ONE; 6 * 64];
    texels[3] = Rgb::new(f64::NAN, 0.0, 0.0);
    let level = CubeLevel::new(8, texels).unwrap();
    assert!(EnvironmentMap::new(level).is_err());
}

#[test]
fn lr_decay_schedule_endpoints() {
    let c = OptimConfig { iterations: 11, lr_decay: 0.1, ..OptimConfig::default() };
    assert_eq!(c.lr_scale(0), 1.0);
    assert!((c.lr_scale(10) - 0.1).abs() < 1e-15);
    assert!((c.lr_scale(5) - 0.1f64.sqrt()).abs() < 1e-15);
    assert_eq!(OptimConfig::default().lr_scale(3000), 1.0);
    assert!(OptimConfig { lr_decay: 0.0, ..OptimConfig::default() }.validate().is_err());
}
