//! View-planning environment and benchmark toolkit for colored point-cloud
//! scenes.
//!
//! The crate covers the full loop: 6-DoF poses and their metrics ([`se3`]),
//! the twelve discrete camera actions ([`action`]), point-cloud scenes and a
//! software renderer ([`scene`], [`render`]), the greedy ground-truth planner
//! ([`planner`]), benchmark construction ([`datagen`]), interactive episodes
//! ([`episode`], [`calibrate`]), view-graph accumulation and distillation
//! ([`graph`], [`distill`]) and rollout analysis ([`analysis`]).

pub mod action;
pub mod analysis;
pub mod calibrate;
pub mod datagen;
pub mod distill;
pub mod episode;
pub mod graph;
pub mod planner;
pub mod render;
pub mod scene;
pub mod se3;
pub mod seed;

pub use action::{apply_action, apply_sequence, execute, invert_sequence, Action, Category};
pub use render::{CameraIntrinsics, RenderConfig, RenderedView};
pub use scene::{ProceduralSpec, Scene};
pub use se3::{EulerAngles, Pose, StepSizes, SuccessThresholds, ViewDistance};
