//! Benchmark construction: view-pair sampling, ground-truth planning,
//! distractor generation, P2V/V2P/IVP instance emission and dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{execute, Action, Category};
use crate::planner::{plan_actions, PlanLimits};
use crate::render::{
    pixel_diff, quality_check, render_view, topdown_pose, CameraIntrinsics, Quality,
    QualityThresholds, RenderConfig, RenderedView,
};
use crate::scene::Scene;
use crate::se3::{
    position_distance, rotation_distance, view_distance, EulerAngles, Pose, StepSizes,
    SuccessThresholds,
};
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("too few scenes for an 8:1:1 split: {0} (need at least 10)")]
    TooFewScenes(usize),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad verdict record on line {line}: {detail}")]
    Verdict { line: usize, detail: String },
    #[error("render: {0}")]
    Render(#[from] crate::render::RenderError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// All pipeline hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Mixture weights for δ ∈ near range / far range / complement.
    pub delta_weights: [f64; 3],
    pub delta_near: [u32; 2],
    pub delta_far: [u32; 2],
    pub length_min: usize,
    pub length_max: usize,
    pub num_distractors: usize,
    pub perturb_ratio: f64,
    /// Replace / remove / insert.
    pub op_probs: [f64; 3],
    pub same_category_prob: f64,
    pub pixel_threshold: f64,
    pub max_distractor_attempts: usize,
    pub max_pair_attempts: usize,
    pub pair_timeout_secs: f64,
    pub pairs_per_scene: usize,
    pub steps: StepSizes,
    pub plan_limits: PlanLimits,
    pub budget: u32,
    pub thresholds: SuccessThresholds,
    /// Unified distance at and above which a pair is tagged Long.
    pub long_boundary: f64,
    /// Reject pairs whose init or target view fails the quality rule.
    pub require_quality_views: bool,
    pub quality: QualityThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta_weights: [0.3, 0.5, 0.2],
            delta_near: [50, 99],
            delta_far: [100, 300],
            length_min: 2,
            length_max: 10,
            num_distractors: 3,
            perturb_ratio: 0.3,
            op_probs: [0.6, 0.2, 0.2],
            same_category_prob: 0.7,
            pixel_threshold: 0.02,
            max_distractor_attempts: 20,
            max_pair_attempts: 20,
            pair_timeout_secs: 30.0,
            pairs_per_scene: 10,
            steps: StepSizes::default(),
            plan_limits: PlanLimits::default(),
            budget: 10,
            thresholds: SuccessThresholds::default(),
            long_boundary: 3.0,
            require_quality_views: true,
            quality: QualityThresholds::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let sums_to_one = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        let bad = |m: &str| Err(DatagenError::Config(m.to_string()));
        if !sums_to_one(&self.delta_weights) || self.delta_weights.iter().any(|w| *w < 0.0) {
            return bad("delta weights must be non-negative and sum to 1");
        }
        if !sums_to_one(&self.op_probs) || self.op_probs.iter().any(|w| *w < 0.0) {
            return bad("op probabilities must be non-negative and sum to 1");
        }
        if self.delta_near[0] > self.delta_near[1] || self.delta_far[0] > self.delta_far[1] {
            return bad("delta ranges must be ordered");
        }
        if self.length_min < 1 || self.length_min > self.length_max {
            return bad("length bounds must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.same_category_prob) {
            return bad("same-category probability outside [0, 1]");
        }
        if !(self.perturb_ratio > 0.0 && self.perturb_ratio <= 1.0) {
            return bad("perturb ratio must be in (0, 1]");
        }
        if self.max_pair_attempts == 0 || self.max_distractor_attempts == 0 {
            return bad("attempt limits must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairSource {
    Trajectory { f_init: usize, f_tgt: usize },
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub pair_id: String,
    pub scene_id: String,
    pub source: PairSource,
    pub init: Pose,
    /// Committed target: the init pose executed through `actions`.
    pub target: Pose,
    pub actions: Vec<Action>,
    pub distance: f64,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    IdenticalPoses,
    LengthBounds,
    DeltaExceedsTrajectory,
    TargetOutsideScene,
    LowQualityView,
    DistractorsExhausted,
    Timeout,
    TooFewFrames,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::IdenticalPoses => "identical poses",
            SkipReason::LengthBounds => "length bounds",
            SkipReason::DeltaExceedsTrajectory => "delta exceeds trajectory",
            SkipReason::TargetOutsideScene => "target outside scene",
            SkipReason::LowQualityView => "low quality view",
            SkipReason::DistractorsExhausted => "distractor attempts exhausted",
            SkipReason::Timeout => "timeout",
            SkipReason::TooFewFrames => "too few frames",
        }
    }
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Camera poses along a capture, indexed by frame.
pub type FrameTrajectory = [Pose];

/// Where pairs come from for one scene.
#[derive(Debug, Clone, Copy)]
pub enum SourceKind<'a> {
    Trajectory(&'a FrameTrajectory),
    Synthetic,
}

const NEAR_IDENTICAL_POS_M: f64 = 1e-6;
const NEAR_IDENTICAL_ROT_DEG: f64 = 1e-4;

fn near_identical(a: &Pose, b: &Pose) -> bool {
    position_distance(a, b) < NEAR_IDENTICAL_POS_M && rotation_distance(a, b) < NEAR_IDENTICAL_ROT_DEG
}

fn difficulty(d: f64, cfg: &PipelineConfig) -> Difficulty {
    if d < cfg.long_boundary {
        Difficulty::Short
    } else {
        Difficulty::Long
    }
}

/// Plans from `init` toward `raw_target` and commits the executed pose.
pub fn pair_from_poses(
    scene_id: &str,
    pair_id: String,
    source: PairSource,
    init: &Pose,
    raw_target: &Pose,
    cfg: &PipelineConfig,
) -> Result<ViewPair, SkipReason> {
    if near_identical(init, raw_target) {
        return Err(SkipReason::IdenticalPoses);
    }
    let plan = plan_actions(init, raw_target, &cfg.steps, &cfg.plan_limits);
    if plan.actions.len() < cfg.length_min || plan.actions.len() > cfg.length_max {
        return Err(SkipReason::LengthBounds);
    }
    let target = execute(init, &plan.actions, &cfg.steps, true);
    let distance = view_distance(init, &target, &cfg.steps).d_unified;
    Ok(ViewPair {
        pair_id,
        scene_id: scene_id.to_string(),
        source,
        init: *init,
        target,
        actions: plan.actions,
        distance,
        difficulty: difficulty(distance, cfg),
    })
}

/// Draws a frame gap from the three-component mixture. `None` when the drawn
/// component has no admissible value for a trajectory of `n_frames`.
pub fn sample_delta<R: Rng>(n_frames: usize, cfg: &PipelineConfig, rng: &mut R) -> Option<usize> {
    let comp = WeightedIndex::new(cfg.delta_weights)
        .expect("validated weights")
        .sample(rng);
    let delta = match comp {
        0 => rng.gen_range(cfg.delta_near[0]..=cfg.delta_near[1]) as usize,
        1 => rng.gen_range(cfg.delta_far[0]..=cfg.delta_far[1]) as usize,
        _ => {
            let lo = cfg.delta_near[0].min(cfg.delta_far[0]) as usize;
            let hi = cfg.delta_near[1].max(cfg.delta_far[1]) as usize;
            let candidates: Vec<usize> = (1..n_frames).filter(|d| *d < lo || *d > hi).collect();
            *candidates.choose(rng)?
        }
    };
    (delta >= 1 && delta < n_frames).then_some(delta)
}

fn synthetic_init<R: Rng>(scene: &Scene, cfg: &PipelineConfig, rng: &mut R) -> Pose {
    let b = scene.bounds();
    let step = cfg.steps.translation_m();
    let margin = 0.5;
    let lattice = |lo: f64, hi: f64, rng: &mut R| {
        let n = (((hi - lo) - 2.0 * margin) / step).floor().max(0.0) as i64;
        lo + margin + step * rng.gen_range(0..=n) as f64
    };
    let x = lattice(b.min.x, b.max.x, rng);
    let y = lattice(b.min.y, b.max.y, rng);
    let z_hi = (b.max.z - 0.3).max(b.min.z + 1.0);
    let nz = ((z_hi - (b.min.z + 1.0)) / step).floor().max(0.0) as i64;
    let z = b.min.z + 1.0 + step * rng.gen_range(0..=nz) as f64;
    let r = cfg.steps.rotation_deg();
    let pitch = [-120.0, -90.0, -60.0][rng.gen_range(0..3)];
    let turns = (360.0 / r).round().max(1.0) as i64;
    let heading = r * rng.gen_range(0..turns) as f64;
    Pose::from_euler(Vector3::new(x, y, z), EulerAngles::new(pitch, heading, 0.0))
        .expect("finite lattice position")
}

/// One sampling attempt.
pub fn sample_pair_once<R: Rng>(
    scene: &Scene,
    source: SourceKind<'_>,
    pair_id: String,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<ViewPair, SkipReason> {
    match source {
        SourceKind::Trajectory(frames) => {
            if frames.len() < 2 {
                return Err(SkipReason::TooFewFrames);
            }
            let delta =
                sample_delta(frames.len(), cfg, rng).ok_or(SkipReason::DeltaExceedsTrajectory)?;
            let f_init = rng.gen_range(0..frames.len() - delta);
            let f_tgt = f_init + delta;
            pair_from_poses(
                scene.id(),
                pair_id,
                PairSource::Trajectory { f_init, f_tgt },
                &frames[f_init],
                &frames[f_tgt],
                cfg,
            )
        }
        SourceKind::Synthetic => {
            let init = synthetic_init(scene, cfg, rng);
            let len = rng.gen_range(cfg.length_min..=cfg.length_max);
            let seq: Vec<Action> = (0..len)
                .map(|_| Action::ALL[rng.gen_range(0..Action::ALL.len())])
                .collect();
            let raw_target = execute(&init, &seq, &cfg.steps, true);
            if !scene.bounds().contains(raw_target.position()) {
                return Err(SkipReason::TargetOutsideScene);
            }
            pair_from_poses(scene.id(), pair_id, PairSource::Synthetic, &init, &raw_target, cfg)
        }
    }
}

/// Repeats [`sample_pair_once`] up to the attempt limit or timeout.
pub fn sample_pair<R: Rng>(
    scene: &Scene,
    source: SourceKind<'_>,
    pair_id: &str,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<ViewPair, Vec<SkipReason>> {
    let start = Instant::now();
    let timeout = Duration::from_secs_f64(cfg.pair_timeout_secs);
    let mut reasons = Vec::new();
    for _ in 0..cfg.max_pair_attempts {
        if start.elapsed() > timeout {
            reasons.push(SkipReason::Timeout);
            break;
        }
        match sample_pair_once(scene, source, pair_id.to_string(), cfg, rng) {
            Ok(p) => return Ok(p),
            Err(r) => reasons.push(r),
        }
    }
    Err(reasons)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbOp {
    Replace,
    Remove,
    Insert,
}

/// Perturbs `⌈r·ℓ⌉` distinct positions; returns the sequence and the ops
/// applied (in application order).
pub fn perturb_sequence_traced<R: Rng>(
    seq: &[Action],
    cfg: &PipelineConfig,
    rng: &mut R,
) -> (Vec<Action>, Vec<PerturbOp>) {
    if seq.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n = ((cfg.perturb_ratio * seq.len() as f64).ceil() as usize).clamp(1, seq.len());
    let mut positions = rand::seq::index::sample(rng, seq.len(), n).into_vec();
    // Descending so earlier indices stay valid after removals/insertions.
    positions.sort_unstable_by(|a, b| b.cmp(a));
    let op_dist = WeightedIndex::new(cfg.op_probs).expect("validated op probabilities");
    let mut out = seq.to_vec();
    let mut ops = Vec::with_capacity(n);
    for pos in positions {
        let op = [PerturbOp::Replace, PerturbOp::Remove, PerturbOp::Insert][op_dist.sample(rng)];
        match op {
            PerturbOp::Replace => {
                let orig = out[pos];
                let same = rng.gen_bool(cfg.same_category_prob);
                let pool: Vec<Action> = if same {
                    Action::of_category(orig.category()).filter(|a| *a != orig).collect()
                } else {
                    let other = match orig.category() {
                        Category::Translation => Category::Rotation,
                        Category::Rotation => Category::Translation,
                    };
                    Action::of_category(other).collect()
                };
                out[pos] = *pool.choose(rng).expect("non-empty category");
            }
            PerturbOp::Remove => {
                out.remove(pos);
            }
            PerturbOp::Insert => {
                let a = Action::ALL[rng.gen_range(0..Action::ALL.len())];
                out.insert(pos, a);
            }
        }
        ops.push(op);
    }
    (out, ops)
}

pub fn perturb_sequence<R: Rng>(seq: &[Action], cfg: &PipelineConfig, rng: &mut R) -> Vec<Action> {
    perturb_sequence_traced(seq, cfg, rng).0
}

/// One multiple-choice option: an action sequence and the view it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionView {
    pub actions: Vec<Action>,
    pub view: RenderedView,
}

/// Renderer settings shared by a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSetup {
    pub intrinsics: CameraIntrinsics,
    pub config: RenderConfig,
}

impl RenderSetup {
    pub fn render(&self, scene: &Scene, pose: &Pose) -> RenderedView {
        render_view(scene, pose, &self.intrinsics, &self.config)
    }
}

/// Generates distractors whose views differ from every accepted option
/// (ground truth first) by more than the pixel threshold.
pub fn gen_distractors<R: Rng>(
    pair: &ViewPair,
    target_view: &RenderedView,
    scene: &Scene,
    render: &RenderSetup,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<Vec<OptionView>, SkipReason> {
    let mut accepted: Vec<(Vec<Action>, RenderedView)> =
        vec![(pair.actions.clone(), target_view.clone())];
    for _ in 0..cfg.num_distractors {
        let mut found = None;
        for _ in 0..cfg.max_distractor_attempts {
            let cand = perturb_sequence(&pair.actions, cfg, rng);
            if cand.is_empty() || accepted.iter().any(|(a, _)| *a == cand) {
                continue;
            }
            let pose = execute(&pair.init, &cand, &cfg.steps, true);
            let view = render.render(scene, &pose);
            if view.void_fraction() >= 1.0 {
                continue;
            }
            let distinct = accepted.iter().all(|(_, v)| {
                pixel_diff(&view, v).map(|d| d > cfg.pixel_threshold).unwrap_or(false)
            });
            if distinct {
                found = Some((cand, view));
                break;
            }
        }
        accepted.push(found.ok_or(SkipReason::DistractorsExhausted)?);
    }
    Ok(accepted
        .into_iter()
        .skip(1)
        .map(|(actions, view)| OptionView { actions, view })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    P2v,
    V2p,
    Ivp,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::P2v => "p2v",
            TaskKind::V2p => "v2p",
            TaskKind::Ivp => "ivp",
        }
    }
}

/// Task-specific part of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    /// Given init view, top-down view and actions; pick the resulting view.
    P2v {
        actions: Vec<Action>,
        option_images: Vec<String>,
        correct_index: usize,
    },
    /// Given init, top-down and target views; pick the executed sequence.
    V2p {
        target_image: String,
        option_actions: Vec<Vec<Action>>,
        correct_index: usize,
    },
    Ivp {
        target_image: String,
        target_pose: Pose,
        gt_actions: Vec<Action>,
        budget: u32,
        max_pos_m: f64,
        max_rot_deg: f64,
        init_printout: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[serde(rename = "5k")]
    Small,
    #[serde(rename = "50k")]
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Dev,
    Test,
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    pub pair_id: String,
    pub scene_id: String,
    pub source: PairSource,
    pub init_pose: Pose,
    pub init_image: String,
    pub topdown_image: String,
    pub distance: f64,
    pub difficulty: Difficulty,
    pub subset: Option<Subset>,
    pub partition: Option<Partition>,
    pub seed: u64,
    #[serde(flatten)]
    pub task: TaskPayload,
}

impl TaskInstance {
    pub fn kind(&self) -> TaskKind {
        match self.task {
            TaskPayload::P2v { .. } => TaskKind::P2v,
            TaskPayload::V2p { .. } => TaskKind::V2p,
            TaskPayload::Ivp { .. } => TaskKind::Ivp,
        }
    }
}

/// `[tx=…, ty=…, tz=…, rx=…°, ry=…°, rz=…°]`, two decimals for meters and
/// whole degrees.
pub fn pose_printout(p: &Pose) -> String {
    let v = p.to_vec6();
    let deg = |a: f64| {
        let r = a.round();
        if r == 0.0 {
            0.0
        } else {
            r
        }
    };
    format!(
        "[tx={:.2}, ty={:.2}, tz={:.2}, rx={}°, ry={}°, rz={}°]",
        v[0],
        v[1],
        v[2],
        deg(v[3]),
        deg(v[4]),
        deg(v[5])
    )
}

/// Relative image paths used for a pair; option images are named by their
/// shuffled slot so file names do not reveal the answer.
pub struct ImageNames {
    pub init: String,
    pub target: String,
    pub topdown: String,
    pub options: Vec<String>,
}

impl ImageNames {
    pub fn for_pair(scene_id: &str, pair_id: &str, n_options: usize) -> Self {
        let letter = |i: usize| (b'a' + i as u8) as char;
        Self {
            init: format!("images/{scene_id}/{pair_id}/init.png"),
            target: format!("images/{scene_id}/{pair_id}/target.png"),
            topdown: format!("images/{scene_id}/topdown.png"),
            options: (0..n_options)
                .map(|i| format!("images/{scene_id}/{pair_id}/option_{}.png", letter(i)))
                .collect(),
        }
    }
}

/// Shuffles option indices; returns the permutation (slot → original index)
/// and the slot holding original index 0.
pub fn shuffle_options<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let correct = order.iter().position(|&i| i == 0).expect("index 0 present");
    (order, correct)
}

/// Emits the three task instances of one pair. `distractors` may be empty
/// only when building IVP alone is acceptable; P2V/V2P need all options.
pub fn build_instances<R: Rng>(
    pair: &ViewPair,
    distractors: &[Vec<Action>],
    names: &ImageNames,
    cfg: &PipelineConfig,
    seed: u64,
    rng: &mut R,
) -> Vec<TaskInstance> {
    let mut all_actions = vec![pair.actions.clone()];
    all_actions.extend(distractors.iter().cloned());
    let (order, correct) = shuffle_options(all_actions.len(), rng);
    let (max_pos_m, max_rot_deg) = cfg.thresholds.limits(&cfg.steps);
    let base = |kind: TaskKind, task: TaskPayload| TaskInstance {
        instance_id: format!("{}:{}", pair.pair_id, kind.as_str()),
        pair_id: pair.pair_id.clone(),
        scene_id: pair.scene_id.clone(),
        source: pair.source,
        init_pose: pair.init,
        init_image: names.init.clone(),
        topdown_image: names.topdown.clone(),
        distance: pair.distance,
        difficulty: pair.difficulty,
        subset: None,
        partition: None,
        seed,
        task,
    };
    vec![
        base(
            TaskKind::P2v,
            TaskPayload::P2v {
                actions: pair.actions.clone(),
                option_images: names.options.clone(),
                correct_index: correct,
            },
        ),
        base(
            TaskKind::V2p,
            TaskPayload::V2p {
                target_image: names.target.clone(),
                option_actions: order.iter().map(|&i| all_actions[i].clone()).collect(),
                correct_index: correct,
            },
        ),
        base(
            TaskKind::Ivp,
            TaskPayload::Ivp {
                target_image: names.target.clone(),
                target_pose: pair.target,
                gt_actions: pair.actions.clone(),
                budget: cfg.budget,
                max_pos_m,
                max_rot_deg,
                init_printout: pose_printout(&pair.init),
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub subset: Subset,
    pub partition: Partition,
    pub pair_ids: Vec<String>,
}

/// Pair → (subset, partition) assignment plus the materialized splits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub by_pair: BTreeMap<String, (Subset, Partition)>,
    pub scene_partition: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn splits(&self) -> Vec<DatasetSplit> {
        let mut groups: BTreeMap<(Subset, Partition), Vec<String>> = BTreeMap::new();
        for (pid, key) in &self.by_pair {
            groups.entry(*key).or_default().push(pid.clone());
        }
        groups
            .into_iter()
            .map(|((subset, partition), pair_ids)| DatasetSplit {
                subset,
                partition,
                pair_ids,
            })
            .collect()
    }
}

fn assign_subsets<R: Rng>(
    pairs: &[String],
    partition: Partition,
    rng: &mut R,
    out: &mut BTreeMap<String, (Subset, Partition)>,
) {
    let mut ids = pairs.to_vec();
    ids.sort();
    ids.shuffle(rng);
    let small = (ids.len() as f64 / 11.0).round() as usize;
    for (i, pid) in ids.into_iter().enumerate() {
        let subset = if i < small { Subset::Small } else { Subset::Large };
        out.insert(pid, (subset, partition));
    }
}

/// Scene-level 8:1:1 partition and within-scene 1:10 subset split.
pub fn split_dataset(
    pairs_by_scene: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<SplitAssignment, DatagenError> {
    let n = pairs_by_scene.len();
    if n < 10 {
        return Err(DatagenError::TooFewScenes(n));
    }
    let mut rng = rng_for(seed, "split");
    let mut scenes: Vec<&String> = pairs_by_scene.keys().collect();
    scenes.shuffle(&mut rng);
    let n_train = (0.8 * n as f64).round() as usize;
    let n_dev = (0.1 * n as f64).round() as usize;
    let mut out = SplitAssignment::default();
    for (i, scene) in scenes.into_iter().enumerate() {
        let partition = if i < n_train {
            Partition::Train
        } else if i < n_train + n_dev {
            Partition::Dev
        } else {
            Partition::Test
        };
        out.scene_partition.insert(scene.clone(), partition);
        let mut srng = rng_for(seed, &format!("subset/{scene}"));
        assign_subsets(&pairs_by_scene[scene], partition, &mut srng, &mut out.by_pair);
    }
    Ok(out)
}

/// Same subset rule without a scene partition, for runs with < 10 scenes.
pub fn unsplit_assignment(pairs_by_scene: &BTreeMap<String, Vec<String>>, seed: u64) -> SplitAssignment {
    let mut out = SplitAssignment::default();
    for (scene, pairs) in pairs_by_scene {
        out.scene_partition.insert(scene.clone(), Partition::Unsplit);
        let mut srng = rng_for(seed, &format!("subset/{scene}"));
        assign_subsets(pairs, Partition::Unsplit, &mut srng, &mut out.by_pair);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Bad,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VerdictRecord {
    scene_id: String,
    verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SceneFilter {
    pub accepted: Vec<String>,
    pub rejected_bad: Vec<String>,
    pub rejected_unknown: Vec<String>,
    /// Set when no verdict file was found and everything passed.
    pub verdicts_missing: bool,
}

/// Keeps scenes with a `good` verdict. A missing file lets every scene pass.
pub fn filter_scenes(scene_ids: &[String], verdict_path: Option<&Path>) -> Result<SceneFilter, DatagenError> {
    let mut out = SceneFilter::default();
    let verdicts = match verdict_path {
        Some(p) if p.exists() => read_verdicts(p)?,
        _ => {
            log::info!("no scene verdict file; accepting all {} scenes", scene_ids.len());
            out.accepted = scene_ids.to_vec();
            out.verdicts_missing = true;
            return Ok(out);
        }
    };
    for id in scene_ids {
        match verdicts.get(id) {
            Some(Verdict::Good) => out.accepted.push(id.clone()),
            Some(Verdict::Bad) => out.rejected_bad.push(id.clone()),
            None => {
                log::warn!("scene {id} has no verdict; excluding");
                out.rejected_unknown.push(id.clone());
            }
        }
    }
    Ok(out)
}

pub fn read_verdicts(path: &Path) -> Result<BTreeMap<String, Verdict>, DatagenError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = BTreeMap::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VerdictRecord = serde_json::from_str(&line).map_err(|e| DatagenError::Verdict {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.insert(rec.scene_id, rec.verdict);
    }
    Ok(out)
}

/// Everything generated for one scene, before splitting.
#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub scene_id: String,
    pub pairs: Vec<ViewPair>,
    pub instances: Vec<TaskInstance>,
    /// Relative path → image.
    pub images: BTreeMap<String, RenderedView>,
    pub skipped: BTreeMap<SkipReason, usize>,
}

/// Runs the full per-scene pipeline: top-down render, pair sampling,
/// quality filtering, distractors and instance emission.
pub fn generate_scene(
    scene: &Scene,
    source: SourceKind<'_>,
    render: &RenderSetup,
    cfg: &PipelineConfig,
    seed: u64,
) -> SceneOutput {
    let mut rng = rng_for(seed, &format!("scene/{}", scene.id()));
    let mut out = SceneOutput {
        scene_id: scene.id().to_string(),
        pairs: Vec::new(),
        instances: Vec::new(),
        images: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    let top_pose = topdown_pose(scene, &render.intrinsics);
    let top_view = render.render(scene, &top_pose);
    let topdown_name = ImageNames::for_pair(scene.id(), "", 0).topdown;
    out.images.insert(topdown_name, top_view);

    for n in 0..cfg.pairs_per_scene {
        let pair_id = format!("{}_{:04}", scene.id(), n);
        let pair = match sample_pair(scene, source, &pair_id, cfg, &mut rng) {
            Ok(p) => p,
            Err(reasons) => {
                let last = reasons.last().cloned().unwrap_or(SkipReason::Timeout);
                *out.skipped.entry(last).or_default() += 1;
                continue;
            }
        };
        let init_view = render.render(scene, &pair.init);
        let target_view = render.render(scene, &pair.target);
        if cfg.require_quality_views
            && (quality_check(&init_view, &cfg.quality) != Quality::Pass
                || quality_check(&target_view, &cfg.quality) != Quality::Pass)
        {
            *out.skipped.entry(SkipReason::LowQualityView).or_default() += 1;
            continue;
        }
        let distractors = match gen_distractors(&pair, &target_view, scene, render, cfg, &mut rng) {
            Ok(d) => d,
            Err(r) => {
                log::debug!("pair {pair_id} dropped: {r}");
                *out.skipped.entry(r).or_default() += 1;
                continue;
            }
        };
        let names = ImageNames::for_pair(scene.id(), &pair_id, distractors.len() + 1);
        let distractor_actions: Vec<Vec<Action>> =
            distractors.iter().map(|d| d.actions.clone()).collect();
        let instances = build_instances(&pair, &distractor_actions, &names, cfg, seed, &mut rng);
        // Options are distinct sequences, so the V2P order identifies which
        // view sits in each P2V slot.
        let order: Vec<usize> = match &instances[1].task {
            TaskPayload::V2p { option_actions, .. } => option_actions
                .iter()
                .map(|acts| {
                    std::iter::once(&pair.actions)
                        .chain(distractor_actions.iter())
                        .position(|d| d == acts)
                        .expect("option comes from the candidate set")
                })
                .collect(),
            _ => unreachable!("second instance is V2P"),
        };
        let option_views: Vec<&RenderedView> = std::iter::once(&target_view)
            .chain(distractors.iter().map(|d| &d.view))
            .collect();
        for (slot, &orig) in order.iter().enumerate() {
            out.images.insert(names.options[slot].clone(), option_views[orig].clone());
        }
        out.images.insert(names.init.clone(), init_view);
        out.images.insert(names.target.clone(), target_view);
        out.instances.extend(instances);
        out.pairs.push(pair);
    }
    out
}

/// A loaded scene and its pair source.
pub struct SceneJob<'a> {
    pub scene: &'a Scene,
    pub trajectory: Option<&'a FrameTrajectory>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub scenes: usize,
    pub pairs: usize,
    pub instances: usize,
    pub short_pairs: usize,
    pub long_pairs: usize,
    pub skipped: BTreeMap<String, usize>,
    pub split: String,
}

/// Generates all scenes (in parallel), assigns splits, writes images and the
/// manifest under `out_dir`. The manifest is a pure function of inputs and
/// seed.
pub fn generate_dataset(
    jobs: &[SceneJob<'_>],
    render: &RenderSetup,
    cfg: &PipelineConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<GenerationReport, DatagenError> {
    cfg.validate()?;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len().max(1));
    let mut outputs: Vec<Option<SceneOutput>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = jobs.len().div_ceil(threads).max(1);
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .enumerate()
            .map(|(ci, js)| {
                s.spawn(move || {
                    js.iter()
                        .enumerate()
                        .map(|(j, job)| {
                            let src = match job.trajectory {
                                Some(t) => SourceKind::Trajectory(t),
                                None => SourceKind::Synthetic,
                            };
                            (ci * chunk + j, generate_scene(job.scene, src, render, cfg, seed))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, o) in h.join().expect("scene worker panicked") {
                outputs[i] = Some(o);
            }
        }
    });
    let mut outputs: Vec<SceneOutput> = outputs.into_iter().map(|o| o.expect("filled")).collect();
    outputs.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));

    let pairs_by_scene: BTreeMap<String, Vec<String>> = outputs
        .iter()
        .map(|o| (o.scene_id.clone(), o.pairs.iter().map(|p| p.pair_id.clone()).collect()))
        .collect();
    let (assignment, split_label) = match split_dataset(&pairs_by_scene, seed) {
        Ok(a) => (a, "8:1:1".to_string()),
        Err(DatagenError::TooFewScenes(n)) => {
            log::warn!("only {n} scenes; labelling every pair as unsplit");
            (unsplit_assignment(&pairs_by_scene, seed), "unsplit".to_string())
        }
        Err(e) => return Err(e),
    };

    fs::create_dir_all(out_dir)?;
    let mut report = GenerationReport {
        seed,
        scenes: outputs.len(),
        split: split_label,
        ..Default::default()
    };
    let mut manifest = io::BufWriter::new(fs::File::create(out_dir.join("manifest.jsonl"))?);
    for o in &mut outputs {
        for (rel, view) in &o.images {
            let path = out_dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, view.to_png()?)?;
        }
        for inst in &mut o.instances {
            if let Some((subset, partition)) = assignment.by_pair.get(&inst.pair_id) {
                inst.subset = Some(*subset);
                inst.partition = Some(*partition);
            }
            serde_json::to_writer(&mut manifest, inst)?;
            manifest.write_all(b"\n")?;
        }
        report.pairs += o.pairs.len();
        report.instances += o.instances.len();
        report.short_pairs += o.pairs.iter().filter(|p| p.difficulty == Difficulty::Short).count();
        report.long_pairs += o.pairs.iter().filter(|p| p.difficulty == Difficulty::Long).count();
        for (r, n) in &o.skipped {
            *report.skipped.entry(r.as_str().to_string()).or_default() += n;
        }
    }
    manifest.flush()?;
    let mut pairs_out = io::BufWriter::new(fs::File::create(out_dir.join("pairs.jsonl"))?);
    for o in &outputs {
        for p in &o.pairs {
            serde_json::to_writer(&mut pairs_out, p)?;
            pairs_out.write_all(b"\n")?;
        }
    }
    pairs_out.flush()?;
    fs::write(out_dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// Reads a JSONL manifest of task instances.
pub fn read_manifest(path: &Path) -> Result<Vec<TaskInstance>, DatagenError> {
    read_jsonl(path)
}

pub fn read_pairs(path: &Path) -> Result<Vec<ViewPair>, DatagenError> {
    read_jsonl(path)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatagenError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// A smooth capture-like camera path through a room: a closed loop at eye
/// height with the camera looking along the direction of travel. Used to
/// exercise trajectory mode on procedural scenes.
pub fn procedural_trajectory(scene: &Scene, n_frames: usize, seed: u64) -> Vec<Pose> {
    let mut rng = rng_for(seed, &format!("trajectory/{}", scene.id()));
    let b = scene.bounds();
    let c = b.center();
    let ext = b.extent();
    let (ax, ay) = (0.3 * ext.x, 0.3 * ext.y);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let loops: f64 = rng.gen_range(1.0..2.0);
    let z = b.min.z + 1.4f64.min(0.6 * ext.z.max(0.5));
    (0..n_frames)
        .map(|i| {
            let t = phase + loops * std::f64::consts::TAU * i as f64 / n_frames.max(1) as f64;
            let x = c.x + ax * t.cos();
            let y = c.y + ay * (2.0 * t).sin() * 0.8;
            let dx = -ax * t.sin();
            let dy = ay * 1.6 * (2.0 * t).cos();
            let heading = dy.atan2(dx).to_degrees();
            let pitch = -90.0 + 12.0 * (3.0 * t).sin();
            // With rx ≈ −90 the middle angle turns the camera about world Z;
            // ry = heading − 90 makes the forward axis point along travel.
            let e = EulerAngles::new(pitch, heading - 90.0, 0.0);
            Pose::from_euler(Vector3::new(x, y, z), e).expect("finite")
        })
        .collect()
}

/// Base directory of an output file.
pub fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn scene_ids(outputs: &[ViewPair]) -> BTreeSet<String> {
    outputs.iter().map(|p| p.scene_id.clone()).collect()
}
