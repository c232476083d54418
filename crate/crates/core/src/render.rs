//! Deterministic pinhole point-splat rasterizer with a depth buffer, plus the
//! visibility and image-quality kernels built on it.

use std::io;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::Scene;
use crate::se3::Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("view dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("png: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    width: u32,
    height: u32,
    fov_y_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    width: u32,
    height: u32,
    fov_y_deg: f64,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = RenderError;

    fn try_from(r: RawIntrinsics) -> Result<Self, RenderError> {
        Self::new(r.width, r.height, r.fov_y_deg)
    }
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, fov_y_deg: f64) -> Result<Self, RenderError> {
        if width < 16 || height < 16 {
            return Err(RenderError::InvalidIntrinsics(format!(
                "image must be at least 16x16, got {width}x{height}"
            )));
        }
        if !(10.0..=170.0).contains(&fov_y_deg) {
            return Err(RenderError::InvalidIntrinsics(format!(
                "vertical fov {fov_y_deg} outside [10, 170]"
            )));
        }
        Ok(Self {
            width,
            height,
            fov_y_deg,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fov_y_deg(&self) -> f64 {
        self.fov_y_deg
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        (self.height as f64 / 2.0) / (self.fov_y_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Half of the narrower field of view, degrees.
    pub fn half_min_fov_deg(&self) -> f64 {
        let half_w = ((self.width as f64 / 2.0) / self.focal()).atan().to_degrees();
        half_w.min(self.fov_y_deg / 2.0)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            fov_y_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Splat radius in pixels; the footprint is the disk dx²+dy² ≤ r².
    pub splat_radius: u32,
    /// Points with camera depth at or below this are culled, meters.
    pub near: f64,
    /// Relative depth tolerance for visibility tests.
    pub visibility_rel_tol: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            splat_radius: 2,
            near: 0.05,
            visibility_rel_tol: 0.01,
        }
    }
}

impl RenderConfig {
    /// Pixel offsets of the splat footprint, in a fixed order.
    pub fn footprint(&self) -> Vec<(i64, i64)> {
        let r = self.splat_radius as i64;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

/// A vertex projected into the image: center pixel and camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub px: i64,
    pub py: i64,
    pub depth: f64,
}

/// Precomputed world→pixel transform for one pose.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    rt: Matrix3<f64>,
    origin: Vector3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
    width: i64,
    height: i64,
    near: f64,
}

impl Projector {
    pub fn new(pose: &Pose, intr: &CameraIntrinsics, cfg: &RenderConfig) -> Self {
        let (cx, cy) = intr.principal_point();
        Self {
            rt: pose.rotation().transpose(),
            origin: *pose.position(),
            focal: intr.focal(),
            cx,
            cy,
            width: intr.width() as i64,
            height: intr.height() as i64,
            near: cfg.near,
        }
    }

    /// Projects a world point; `None` when behind the near plane or when the
    /// center pixel falls outside the image.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Projection> {
        let c = self.rt * (p - self.origin);
        if !(c.z > self.near) {
            return None;
        }
        let u = self.focal * c.x / c.z + self.cx;
        let v = self.focal * c.y / c.z + self.cy;
        let px = u.floor();
        let py = v.floor();
        if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
            return None;
        }
        Some(Projection {
            px: px as i64,
            py: py as i64,
            depth: c.z,
        })
    }
}

/// RGB image with per-pixel depth and void mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
    depth: Vec<f64>,
    void_mask: Vec<bool>,
    winner: Vec<u32>,
}

/// Winner-buffer value for pixels no vertex covers.
pub const NO_WINNER: u32 = u32::MAX;

impl RenderedView {
    /// A fully void (black, infinite depth) canvas.
    pub fn void(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            pixels: vec![[0, 0, 0]; n],
            depth: vec![f64::INFINITY; n],
            void_mask: vec![true; n],
            winner: vec![NO_WINNER; n],
        }
    }

    /// A non-void view from raw pixels with unit depth. Mostly useful for
    /// tests and synthetic images.
    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Self {
        let n = width as usize * height as usize;
        assert_eq!(pixels.len(), n, "pixel buffer size");
        Self {
            width,
            height,
            pixels,
            depth: vec![1.0; n],
            void_mask: vec![false; n],
            winner: vec![NO_WINNER; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Index of the vertex shown at each pixel, or [`NO_WINNER`].
    pub fn winners(&self) -> &[u32] {
        &self.winner
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn void_mask(&self) -> &[bool] {
        &self.void_mask
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn void_fraction(&self) -> f64 {
        let n = self.void_mask.iter().filter(|v| **v).count();
        n as f64 / self.void_mask.len() as f64
    }

    /// Population standard deviation of the per-pixel RGB mean.
    pub fn gray_std(&self) -> f64 {
        let n = self.pixels.len() as f64;
        let gray = |p: &[u8; 3]| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0;
        let mean = self.pixels.iter().map(gray).sum::<f64>() / n;
        let var = self
            .pixels
            .iter()
            .map(|p| (gray(p) - mean).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt()
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| RenderError::Png(e.to_string()))?;
            let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&flat)
                .map_err(|e| RenderError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &std::path::Path) -> io::Result<()> {
        let bytes = self
            .to_png()
            .map_err(|e| io::Error::other(e.to_string()))?;
        std::fs::write(path, bytes)
    }

    /// Content hash over dimensions and pixels (hex, 32 chars).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        for p in &self.pixels {
            h.update(p);
        }
        let digest = h.finalize();
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splat-renders the scene from `pose`. Nearest depth wins per pixel; on an
/// exact depth tie the lower vertex index wins.
pub fn render_view(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> RenderedView {
    let mut view = RenderedView::void(intr.width(), intr.height());
    let proj = Projector::new(pose, intr, cfg);
    let footprint = cfg.footprint();
    let (w, h) = (intr.width() as i64, intr.height() as i64);
    for (vi, (p, color)) in scene.positions().iter().zip(scene.colors()).enumerate() {
        let Some(pr) = proj.project(p) else { continue };
        for &(dx, dy) in &footprint {
            let (x, y) = (pr.px + dx, pr.py + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let i = (y * w + x) as usize;
            if pr.depth < view.depth[i] {
                view.depth[i] = pr.depth;
                view.pixels[i] = *color;
                view.void_mask[i] = false;
                view.winner[i] = vi as u32;
            }
        }
    }
    view
}

/// Sorted indices of vertices visible from `pose`: inside the frustum and
/// within the relative depth tolerance of the depth buffer at their pixel.
pub fn visible_vertices(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Vec<usize> {
    let view = render_view(scene, pose, intr, cfg);
    visible_in(scene, pose, intr, cfg, &view)
}

/// Visibility against an already rendered depth buffer.
pub fn visible_in(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    view: &RenderedView,
) -> Vec<usize> {
    let proj = Projector::new(pose, intr, cfg);
    scene
        .positions()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let pr = proj.project(p)?;
            let buf = view.depth[view.index(pr.px as u32, pr.py as u32)];
            (pr.depth <= buf * (1.0 + cfg.visibility_rel_tol)).then_some(i)
        })
        .collect()
}

/// A straight-down camera centered over the scene's horizontal extent.
pub fn topdown_pose(scene: &Scene, intr: &CameraIntrinsics) -> Pose {
    let b = scene.bounds();
    let c = b.center();
    let ext = b.extent();
    let half_diag = 0.5 * ext.x.hypot(ext.y);
    let fit = half_diag / intr.half_min_fov_deg().to_radians().tan();
    let height = (fit * 1.05).max(0.5);
    // Right = +X, down = −Y, forward = −Z: a 180° turn about X.
    let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    Pose::from_parts_unchecked(Vector3::new(c.x, c.y, b.max.z + height), rotation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Void,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quality {
    Pass,
    Reject(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub max_void_fraction: f64,
    pub min_gray_std: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            max_void_fraction: 0.7,
            min_gray_std: 10.0,
        }
    }
}

pub fn quality_check(view: &RenderedView, thr: &QualityThresholds) -> Quality {
    if view.void_fraction() > thr.max_void_fraction {
        Quality::Reject(RejectReason::Void)
    } else if view.gray_std() < thr.min_gray_std {
        Quality::Reject(RejectReason::Uniform)
    } else {
        Quality::Pass
    }
}

/// Mean absolute difference over all RGB channels, scaled to [0, 1].
pub fn pixel_diff(a: &RenderedView, b: &RenderedView) -> Result<f64, RenderError> {
    if a.width != b.width || a.height != b.height {
        return Err(RenderError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| {
            (0..3)
                .map(|c| (p[c] as i32 - q[c] as i32).unsigned_abs() as u64)
                .sum::<u64>()
        })
        .sum();
    Ok(total as f64 / (a.pixels.len() as f64 * 3.0 * 255.0))
}
