use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occlurend_core::io::pfm;
use occlurend_core::Rgb;
use serde_json::json;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_occlurend"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], config: &Path) -> Output {
    let out = bin().args(args).arg("--config").arg(config).output().expect("spawn occlurend");
    out
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

/// Tiny synthetic dataset under `dir/data`.
fn synthesize(dir: &Path) -> PathBuf {
    let cfg = write_config(
        dir,
        "synth.json",
        json!({
            "out": "data",
            "synthesize": {
                "poses": 2, "width": 24, "height": 24, "texture_size": 8, "env_res": 8,
                "segments": 16, "rings": 8,
                "budget": {"n_light": 8, "n_brdf": 8, "n_vis": 4}
            }
        }),
    );
    ok(run(&["synthesize"], &cfg));
    dir.join("data")
}

fn optimize_config(dir: &Path, out: &str, iterations: usize) -> PathBuf {
    write_config(
        dir,
        &format!("{out}.json"),
        json!({
            "scene": "data/init/scene.json",
            "out": out,
            "checkpoint_every": 2,
            "optimize": {
                "iterations": iterations,
                "seed": 11,
                "budget": {"n_light": 4, "n_brdf": 4, "n_vis": 2},
                "learning_rates": {"albedo": 0.05, "specular": 0.05, "roughness": 0.05}
            }
        }),
    )
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synthesize_writes_ground_truth_and_init() {
    let tmp = TempDir::new().unwrap();
    let data = synthesize(tmp.path());
    for p in ["ground_truth/scene.json", "init/scene.json", "init/albedo.pfm", "init/env/descriptor.json", "observed.pfm"] {
        assert!(data.join(p).exists(), "{p} missing");
    }
    assert!(data.join("ground_truth/frames/0001.pfm").exists());
}

#[test]
fn zero_iterations_checkpoint_equals_init() {
    let tmp = TempDir::new().unwrap();
    synthesize(tmp.path());
    let cfg = optimize_config(tmp.path(), "zero", 5);
    ok(run(&["optimize", "--iterations", "0"], &cfg));
    let ckpt = tmp.path().join("zero/ckpt_0");
    let init = tmp.path().join("data/init");
    for f in ["mesh.obj", "albedo.pfm", "specular.pfm", "roughness.pfm", "env/px.pfm", "env/nz.pfm"] {
        assert_eq!(fs::read(ckpt.join(f)).unwrap(), fs::read(init.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(tmp.path().join("zero/log.jsonl")).unwrap(), "");
}

#[test]
fn optimize_logs_each_iteration_and_checkpoints() {
    let tmp = TempDir::new().unwrap();
    synthesize(tmp.path());
    let cfg = optimize_config(tmp.path(), "run", 3);
    ok(run(&["optimize", "--freeze", "vertices"], &cfg));
    let root = tmp.path().join("run");
    let log = fs::read_to_string(root.join("log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["iter"], i);
        for key in ["total", "img", "mask", "lap", "light", "rough", "diffuse"] {
            assert!(l[key].is_number(), "{key}");
        }
    }
    assert!(root.join("ckpt_2/mesh.obj").exists());
    assert!(root.join("ckpt_3/albedo.pfm").exists());
    // vertices were frozen
    assert_eq!(fs::read(root.join("ckpt_3/mesh.obj")).unwrap(), fs::read(tmp.path().join("data/init/mesh.obj")).unwrap());
}

#[test]
fn optimize_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    synthesize(tmp.path());
    let a = optimize_config(tmp.path(), "a", 2);
    let b = optimize_config(tmp.path(), "b", 2);
    ok(run(&["optimize"], &a));
    ok(run(&["optimize"], &b));
    assert_eq!(tree_bytes(&tmp.path().join("a")), tree_bytes(&tmp.path().join("b")));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    synthesize(tmp.path());
    let cfg = write_config(tmp.path(), "r.json", json!({"scene": "data/ground_truth/scene.json", "render": {"budget": {"n_light": 8, "n_brdf": 8, "n_vis": 4}}}));
    ok(bin().args(["render", "--out"]).arg(tmp.path().join("t1")).arg("--config").arg(&cfg).env("OCCLUREND_THREADS", "1").output().unwrap());
    ok(bin().args(["render", "--out"]).arg(tmp.path().join("t3")).arg("--config").arg(&cfg).env("OCCLUREND_THREADS", "3").output().unwrap());
    assert_eq!(tree_bytes(&tmp.path().join("t1")), tree_bytes(&tmp.path().join("t3")));
}

#[test]
fn render_components_sum_and_relight_with_training_env_matches() {
    let tmp = TempDir::new().unwrap();
    synthesize(tmp.path());
    let budget = json!({"n_light": 8, "n_brdf": 8, "n_vis": 4});
    let render_cfg = write_config(tmp.path(), "render.json", json!({"scene": "data/ground_truth/scene.json", "out": "render", "render": {"budget": budget}}));
    let relight_cfg = write_config(
        tmp.path(),
        "relight.json",
        json!({"scene": "data/ground_truth/scene.json", "env": "data/ground_truth/env", "out": "relight", "render": {"budget": budget}}),
    );
    ok(run(&["render"], &render_cfg));
    ok(run(&["relight"], &relight_cfg));
    for id in 0..2 {
        let name = |kind: &str| format!("frame_{id:04}_{kind}.pfm");
        let color = pfm::read_rgb(&tmp.path().join("render").join(name("color"))).unwrap();
        let diffuse = pfm::read_rgb(&tmp.path().join("render").join(name("diffuse"))).unwrap();
        let specular = pfm::read_rgb(&tmp.path().join("render").join(name("specular"))).unwrap();
        for ((c, d), s) in color.data().iter().zip(diffuse.data()).zip(specular.data()) {
            // components are summed in f64 and each file is rounded to f32
            for k in 0..3 {
                assert!((c[k] - (d[k] + s[k])).abs() <= 1e-6 * (1.0 + c[k].abs()));
            }
        }
        for kind in ["color", "diffuse", "specular", "mask"] {
            assert_eq!(
                fs::read(tmp.path().join("render").join(name(kind))).unwrap(),
                fs::read(tmp.path().join("relight").join(name(kind))).unwrap(),
                "{kind}"
            );
        }
    }
}

#[test]
fn prefilter_of_uniform_env_is_constant() {
    let tmp = TempDir::new().unwrap();
    let env = tmp.path().join("env");
    occlurend_core::io::write_env_dir(&env, &occlurend_core::lighting::CubeLevel::constant(16, Rgb::new(0.5, 0.25, 2.0))).unwrap();
    let cfg = write_config(tmp.path(), "p.json", json!({"env": "env", "out": "pre", "lut": {"resolution": 8, "samples": 64}}));
    ok(run(&["prefilter"], &cfg));
    let pre = tmp.path().join("pre");
    assert!(pre.join("brdf_lut.pfm").exists());
    let mut levels = 0;
    while pre.join(format!("env_pyramid/level_{levels}")).exists() {
        let level = occlurend_core::io::read_env_dir(&pre.join(format!("env_pyramid/level_{levels}"))).unwrap();
        for t in level.texels() {
            assert!((t[0] - 0.5).abs() < 1e-5 && (t[1] - 0.25).abs() < 1e-5 && (t[2] - 2.0).abs() < 1e-5, "{t:?}");
        }
        levels += 1;
    }
    assert!(levels >= 2);
}

#[test]
fn bad_config_exits_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", json!({"optimize": {"iterationz": 3}}));
    let out = run(&["optimize"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iterationz"));
    let cfg = write_config(tmp.path(), "neg.json", json!({"optimize": {"lambda_geo": -1.0}}));
    assert_eq!(run(&["optimize"], &cfg).status.code(), Some(2));
    let missing = bin().args(["render", "--config", "/nonexistent/run.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_freeze_group_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", json!({}));
    let out = run(&["optimize", "--freeze", "vertices,colour"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn metrics_reports_identical_images() {
    let tmp = TempDir::new().unwrap();
    let data = synthesize(tmp.path());
    let img = data.join("ground_truth/frames/0000.pfm");
    let cfg = write_config(
        tmp.path(),
        "m.json",
        json!({"out": "m", "metrics": {"images_a": [img], "images_b": [img],
               "mesh_a": "data/init/mesh.obj", "mesh_b": "data/ground_truth/mesh.obj",
               "albedo_a": "data/ground_truth/albedo.pfm", "albedo_b": "data/ground_truth/albedo.pfm"}}),
    );
    ok(run(&["metrics"], &cfg));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("m/report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"][0]["mae"], 0.0);
    assert_eq!(report["pairs"][0]["psnr"], 99.0);
    assert!(tmp.path().join("m/error_0000.ppm").exists());
}
