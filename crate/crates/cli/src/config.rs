//! JSON configuration shared by all subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use viewplan_core::datagen::{PipelineConfig, RenderSetup};
use viewplan_core::distill::DistillConfig;
use viewplan_core::graph::GraphConfig;
use viewplan_core::scene::{load_scene, Scene};

pub const SCENE_ROOT_ENV: &str = "VIEWPLAN_SCENE_ROOT";

/// Every section is optional; missing sections take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene_root: Option<PathBuf>,
    pub render: RenderSetup,
    pub pipeline: PipelineConfig,
    pub graph: GraphConfig,
    pub distill: DistillConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.pipeline.validate()?;
        cfg.distill.validate()?;
        Ok(cfg)
    }

    /// Flag, then `VIEWPLAN_SCENE_ROOT`, then the config file.
    pub fn scene_root(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(SCENE_ROOT_ENV).map(PathBuf::from))
            .or_else(|| self.scene_root.clone())
    }

    pub fn require_scene_root(&self, flag: Option<&Path>) -> Result<PathBuf> {
        match self.scene_root(flag) {
            Some(p) => Ok(p),
            None => bail!("no scene root: pass --scenes, set {SCENE_ROOT_ENV} or scene_root in the config"),
        }
    }
}

/// PLY files in `dir`, sorted by file name.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing scenes in {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    scene_files(dir)?
        .iter()
        .map(|p| load_scene(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

/// Loads `<root>/<scene_id>.ply`.
pub fn load_scene_by_id(root: &Path, scene_id: &str) -> Result<Scene> {
    let path = root.join(format!("{scene_id}.ply"));
    load_scene(&path).with_context(|| format!("loading scene {}", path.display()))
}
