//! File formats: PFM/PPM images, OBJ meshes, cubemap directories, scene
//! descriptions and optimizer checkpoints.

pub mod obj;
pub mod pfm;
pub mod ppm;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lighting::{CubeLevel, EnvironmentMap, FACE_NAMES};
use crate::math::{Rgb, Rigid};
use crate::optim::LogEntry;
use crate::render::{Camera, Frame, Grid, Intrinsics, Materials, Scene};

pub use obj::{read_obj, write_obj};
pub use pfm::Pfm;
pub use ppm::{write_false_color, write_ppm};

/// Current version of the scene file format.
pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Write `bytes` to `path`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvDescriptor {
    pub layout: String,
    pub resolution: usize,
    pub faces: Vec<String>,
    /// Face-local axes: column follows `s`, row follows `t`, row 0 on top.
    pub convention: String,
}

impl EnvDescriptor {
    pub fn new(resolution: usize) -> Self {
        EnvDescriptor {
            layout: "cubemap".into(),
            resolution,
            faces: FACE_NAMES.iter().map(|s| s.to_string()).collect(),
            convention: "opengl".into(),
        }
    }
}

/// `dir/{px,nx,py,ny,pz,nz}.pfm` plus `dir/descriptor.json`.
pub fn write_env_dir(dir: &Path, level: &CubeLevel) -> Result<()> {
    let res = level.res();
    for (f, name) in FACE_NAMES.iter().enumerate() {
        let face = Grid::from_vec(res, res, level.face_slice(f).to_vec())?;
        pfm::write_rgb(&dir.join(format!("{name}.pfm")), &face)?;
    }
    write_json(&dir.join("descriptor.json"), &EnvDescriptor::new(res))
}

pub fn read_env_dir(dir: &Path) -> Result<CubeLevel> {
    let desc_path = dir.join("descriptor.json");
    let desc: EnvDescriptor = read_json(&desc_path)?;
    if desc.layout != "cubemap" || desc.convention != "opengl" {
        return Err(Error::format(&desc_path, format!("unsupported layout `{}`/`{}`", desc.layout, desc.convention)));
    }
    let res = desc.resolution;
    let mut texels = Vec::with_capacity(6 * res * res);
    for name in FACE_NAMES {
        let path = dir.join(format!("{name}.pfm"));
        let face = pfm::read_rgb(&path)?;
        if face.width() != res || face.height() != res {
            return Err(Error::format(&path, format!("face is {}x{}, descriptor says {res}", face.width(), face.height())));
        }
        texels.extend_from_slice(face.data());
    }
    CubeLevel::new(res, texels).ok_or_else(|| Error::format(dir, "inconsistent cubemap size"))
}

pub fn read_env(dir: &Path) -> Result<EnvironmentMap> {
    EnvironmentMap::new(read_env_dir(dir)?).map_err(|e| Error::format(dir, e.to_string()))
}

/// A texture given by file or by constant value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextureSource {
    File(String),
    Scalar(f64),
    Color([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSources {
    pub albedo: TextureSource,
    pub specular: TextureSource,
    pub roughness: TextureSource,
    /// Resolution of textures given as constants.
    #[serde(default = "default_texture_size")]
    pub size: usize,
}

fn default_texture_size() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvSource {
    Dir(String),
    Constant { constant: [f64; 3], resolution: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub intrinsics: Intrinsics,
    /// Camera-from-world, row-major 4×4.
    pub pose: [f64; 16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub id: usize,
    /// Object-to-world, row-major 4×4.
    pub pose: [f64; 16],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// On-disk scene description; paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema_version: u32,
    pub mesh: String,
    pub materials: MaterialSources,
    pub env: EnvSource,
    pub camera: CameraFile,
    #[serde(default)]
    pub frames: Vec<FrameFile>,
}

#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub frames: Vec<Frame>,
    pub file: SceneFile,
}

fn rigid(path: &Path, what: &str, m: &[f64; 16]) -> Result<Rigid> {
    Rigid::from_row_major(m).map_err(|e| Error::format(path, format!("{what}: {e}")))
}

fn load_texture<T: Copy>(
    root: &Path,
    src: &TextureSource,
    size: usize,
    name: &str,
    from_rgb: impl Fn(Rgb) -> T,
    read: impl Fn(&Path) -> Result<Grid<T>>,
) -> Result<Grid<T>> {
    match src {
        TextureSource::File(p) => read(&root.join(p)),
        TextureSource::Scalar(v) => Ok(Grid::filled(size, size, from_rgb(Rgb::splat(*v)))),
        TextureSource::Color(c) => {
            if size == 0 {
                return Err(Error::Config(format!("texture `{name}` needs a positive size")));
            }
            Ok(Grid::filled(size, size, from_rgb(Rgb::new(c[0], c[1], c[2]))))
        }
    }
}

/// Load a scene file and its frames. The environment is not prefiltered.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let file: SceneFile = read_json(path)?;
    if file.schema_version != SCENE_SCHEMA_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported schema_version {} (expected {SCENE_SCHEMA_VERSION})", file.schema_version),
        ));
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let mesh = read_obj(&root.join(&file.mesh))?;
    let ms = &file.materials;
    let materials = Materials {
        albedo: load_texture(root, &ms.albedo, ms.size, "albedo", |c| c, pfm::read_rgb)?,
        intensity: load_texture(root, &ms.specular, ms.size, "specular", |c| c.mean(), pfm::read_gray)?,
        roughness: load_texture(root, &ms.roughness, ms.size, "roughness", |c| c.mean(), pfm::read_gray)?,
    };
    materials.validate()?;
    let env = match &file.env {
        EnvSource::Dir(d) => read_env(&root.join(d))?,
        EnvSource::Constant { constant, resolution } => {
            EnvironmentMap::new(CubeLevel::constant(*resolution, Rgb::new(constant[0], constant[1], constant[2])))
                .map_err(|e| Error::format(path, e.to_string()))?
        }
    };
    let camera = Camera::new(file.camera.intrinsics, rigid(path, "camera pose", &file.camera.pose)?)?;
    let mut frames = Vec::with_capacity(file.frames.len());
    for f in &file.frames {
        let image = f.image.as_ref().map(|p| pfm::read_rgb(&root.join(p))).transpose()?;
        let mask = f.mask.as_ref().map(|p| pfm::read_gray(&root.join(p))).transpose()?;
        for (what, w, h) in image
            .iter()
            .map(|i| ("image", i.width(), i.height()))
            .chain(mask.iter().map(|m| ("mask", m.width(), m.height())))
        {
            if (w, h) != (camera.width(), camera.height()) {
                return Err(Error::format(
                    path,
                    format!("frame {} {what} is {w}x{h}, camera is {}x{}", f.id, camera.width(), camera.height()),
                ));
            }
        }
        frames.push(Frame { id: f.id, pose: rigid(path, "frame pose", &f.pose)?, image, mask });
    }
    Ok(LoadedScene { scene: Scene { mesh, materials, env, camera }, frames, file })
}

/// Write all assets of `scene` into `dir` plus `dir/scene.json`. Frame
/// images and masks present in `frames` go under `dir/frames/`.
pub fn write_scene(dir: &Path, scene: &Scene, frames: &[Frame]) -> Result<PathBuf> {
    write_obj(&dir.join("mesh.obj"), &scene.mesh)?;
    pfm::write_rgb(&dir.join("albedo.pfm"), &scene.materials.albedo)?;
    pfm::write_gray(&dir.join("specular.pfm"), &scene.materials.intensity)?;
    pfm::write_gray(&dir.join("roughness.pfm"), &scene.materials.roughness)?;
    write_env_dir(&dir.join("env"), scene.env.mip0())?;
    let mut frame_files = Vec::with_capacity(frames.len());
    for f in frames {
        let image = match &f.image {
            Some(img) => {
                let rel = format!("frames/{:04}.pfm", f.id);
                pfm::write_rgb(&dir.join(&rel), img)?;
                Some(rel)
            }
            None => None,
        };
        let mask = match &f.mask {
            Some(m) => {
                let rel = format!("frames/{:04}_mask.pfm", f.id);
                pfm::write_gray(&dir.join(&rel), m)?;
                Some(rel)
            }
            None => None,
        };
        frame_files.push(FrameFile { id: f.id, pose: f.pose.to_row_major(), image, mask });
    }
    let file = SceneFile {
        schema_version: SCENE_SCHEMA_VERSION,
        mesh: "mesh.obj".into(),
        materials: MaterialSources {
            albedo: TextureSource::File("albedo.pfm".into()),
            specular: TextureSource::File("specular.pfm".into()),
            roughness: TextureSource::File("roughness.pfm".into()),
            size: scene.materials.albedo.width(),
        },
        env: EnvSource::Dir("env".into()),
        camera: CameraFile { intrinsics: scene.camera.intrinsics, pose: scene.camera.pose.to_row_major() },
        frames: frame_files,
    };
    let path = dir.join("scene.json");
    write_json(&path, &file)?;
    Ok(path)
}

pub fn checkpoint_dir(root: &Path, iteration: usize) -> PathBuf {
    root.join(format!("ckpt_{iteration}"))
}

/// Write the current assets to `root/ckpt_<iteration>/`, including a
/// `scene.json` that references them.
pub fn write_checkpoint(root: &Path, iteration: usize, scene: &Scene) -> Result<PathBuf> {
    let dir = checkpoint_dir(root, iteration);
    write_scene(&dir, scene, &[])?;
    Ok(dir)
}

/// Append one JSON line to `root/log.jsonl`.
pub fn append_log(root: &Path, entry: &LogEntry) -> Result<()> {
    let path = root.join("log.jsonl");
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(entry).map_err(|e| Error::format(&path, e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

pub fn read_log(root: &Path) -> Result<Vec<LogEntry>> {
    let path = root.join("log.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(&path, e.to_string())))
        .collect()
}
