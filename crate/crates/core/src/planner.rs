//! Greedy rotation-first planner producing canonical ground-truth action
//! sequences between two poses.

use serde::{Deserialize, Serialize};

use crate::action::{apply_action, Action};
use crate::se3::{position_distance, rotation_distance, Pose, StepSizes};

/// Step-count regularizer weight in the per-axis objective.
pub const STEP_PENALTY: f64 = 0.01;

/// `d_pos / s_t + d_rot / s_r`.
pub fn pose_error(p: &Pose, target: &Pose, steps: &StepSizes) -> f64 {
    position_distance(p, target) / steps.translation_m()
        + rotation_distance(p, target) / steps.rotation_deg()
}

/// The six planning axes in processing order, as (positive, negative) action
/// pairs.
pub const AXES: [(Action, Action); 6] = [
    (Action::TurnRight, Action::TurnLeft),
    (Action::LookUp, Action::LookDown),
    (Action::RotateCw, Action::RotateCcw),
    (Action::MoveForward, Action::MoveBackward),
    (Action::MoveRight, Action::MoveLeft),
    (Action::MoveUp, Action::MoveDown),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanLimits {
    pub max_rotation_steps: u32,
    pub max_translation_steps: u32,
}

impl Default for PlanLimits {
    fn default() -> Self {
        Self {
            max_rotation_steps: 12,
            max_translation_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub actions: Vec<Action>,
    pub final_error: f64,
    /// Signed committed step count per axis, in [`AXES`] order.
    pub axis_steps: [i32; 6],
    /// Pose error before the first axis and after each axis.
    pub error_trace: [f64; 7],
}

/// Single-pass greedy plan. Per axis, every signed step count within the
/// limit is tried (with snapping, as the executor would), and the best is
/// committed only if it strictly lowers the pose error.
pub fn plan_actions(init: &Pose, target: &Pose, steps: &StepSizes, limits: &PlanLimits) -> PlanResult {
    let mut cur = *init;
    let mut actions = Vec::new();
    let mut axis_steps = [0i32; 6];
    let mut error_trace = [0.0; 7];
    error_trace[0] = pose_error(&cur, target, steps);

    for (ai, &(pos, neg)) in AXES.iter().enumerate() {
        let k_max = if ai < 3 {
            limits.max_rotation_steps
        } else {
            limits.max_translation_steps
        };
        let e0 = pose_error(&cur, target, steps);
        // Candidates in order 0, +1, −1, +2, −2, … so strict-less comparison
        // breaks ties toward smaller |k|, then positive k.
        let mut best_k = 0i32;
        let mut best_pose = cur;
        let mut best_err = e0;
        let mut best_score = e0;
        let mut pos_pose = cur;
        let mut neg_pose = cur;
        for k in 1..=k_max {
            pos_pose = apply_action(&pos_pose, pos, steps, true);
            neg_pose = apply_action(&neg_pose, neg, steps, true);
            for (signed, pose) in [(k as i32, pos_pose), (-(k as i32), neg_pose)] {
                let err = pose_error(&pose, target, steps);
                let score = err + STEP_PENALTY * k as f64;
                if score < best_score {
                    best_score = score;
                    best_err = err;
                    best_k = signed;
                    best_pose = pose;
                }
            }
        }
        if best_k != 0 && best_err < e0 {
            let a = if best_k > 0 { pos } else { neg };
            actions.extend(std::iter::repeat_n(a, best_k.unsigned_abs() as usize));
            axis_steps[ai] = best_k;
            cur = best_pose;
        }
        error_trace[ai + 1] = pose_error(&cur, target, steps);
    }
    PlanResult {
        final_error: pose_error(&cur, target, steps),
        actions,
        axis_steps,
        error_trace,
    }
}
