//! The twelve discrete camera actions and the deterministic transition
//! function.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{rot_x, rot_y, rot_z, snap_orientation, Pose, StepSizes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    MoveBackward,
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
    RotateCcw,
    RotateCw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Translation,
    Rotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

/// Local camera axis an action moves along or rotates about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
}

impl Action {
    pub const ALL: [Action; 12] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::MoveLeft,
        Action::MoveRight,
        Action::MoveUp,
        Action::MoveDown,
        Action::TurnLeft,
        Action::TurnRight,
        Action::LookUp,
        Action::LookDown,
        Action::RotateCcw,
        Action::RotateCw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveForward => "move_forward",
            Action::MoveBackward => "move_backward",
            Action::MoveLeft => "move_left",
            Action::MoveRight => "move_right",
            Action::MoveUp => "move_up",
            Action::MoveDown => "move_down",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::LookUp => "look_up",
            Action::LookDown => "look_down",
            Action::RotateCcw => "rotate_ccw",
            Action::RotateCw => "rotate_cw",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Action::MoveForward
            | Action::MoveBackward
            | Action::MoveLeft
            | Action::MoveRight
            | Action::MoveUp
            | Action::MoveDown => Category::Translation,
            _ => Category::Rotation,
        }
    }

    pub fn inverse(self) -> Action {
        match self {
            Action::MoveForward => Action::MoveBackward,
            Action::MoveBackward => Action::MoveForward,
            Action::MoveLeft => Action::MoveRight,
            Action::MoveRight => Action::MoveLeft,
            Action::MoveUp => Action::MoveDown,
            Action::MoveDown => Action::MoveUp,
            Action::TurnLeft => Action::TurnRight,
            Action::TurnRight => Action::TurnLeft,
            Action::LookUp => Action::LookDown,
            Action::LookDown => Action::LookUp,
            Action::RotateCcw => Action::RotateCw,
            Action::RotateCw => Action::RotateCcw,
        }
    }

    /// Axis and sign, straight from the action table. Translations move along
    /// the signed local axis; rotations turn about it.
    fn axis_sign(self) -> (Axis, f64) {
        match self {
            Action::MoveForward => (Axis::Z, 1.0),
            Action::MoveBackward => (Axis::Z, -1.0),
            Action::MoveLeft => (Axis::X, -1.0),
            Action::MoveRight => (Axis::X, 1.0),
            Action::MoveUp => (Axis::Y, -1.0),
            Action::MoveDown => (Axis::Y, 1.0),
            Action::TurnLeft => (Axis::Y, -1.0),
            Action::TurnRight => (Axis::Y, 1.0),
            Action::LookUp => (Axis::X, 1.0),
            Action::LookDown => (Axis::X, -1.0),
            Action::RotateCcw => (Axis::Z, -1.0),
            Action::RotateCw => (Axis::Z, 1.0),
        }
    }

    /// Actions of the given category.
    pub fn of_category(cat: Category) -> impl Iterator<Item = Action> {
        Self::ALL.into_iter().filter(move |a| a.category() == cat)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = UnknownAction;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// Applies one action. With `snap`, the orientation is snapped to the
/// rotation grid right after every rotation action.
pub fn apply_action(p: &Pose, a: Action, steps: &StepSizes, snap: bool) -> Pose {
    let (axis, sign) = a.axis_sign();
    match a.category() {
        Category::Translation => {
            let local = match axis {
                Axis::X => Vector3::x(),
                Axis::Y => Vector3::y(),
                Axis::Z => Vector3::z(),
            };
            let delta = p.rotation() * local * (sign * steps.translation_m());
            Pose::from_parts_unchecked(p.position() + delta, *p.rotation())
        }
        Category::Rotation => {
            let angle = sign * steps.rotation_deg();
            let local = match axis {
                Axis::X => rot_x(angle),
                Axis::Y => rot_y(angle),
                Axis::Z => rot_z(angle),
            };
            let rotated = Pose::from_parts_unchecked(*p.position(), p.rotation() * local);
            if snap {
                snap_orientation(&rotated, steps)
            } else {
                rotated
            }
        }
    }
}

/// Result of executing a sequence: the final pose and every pose visited
/// after each action (so `intermediate.len() == seq.len()`).
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub final_pose: Pose,
    pub intermediate: Vec<Pose>,
}

pub fn apply_sequence(p: &Pose, seq: &[Action], steps: &StepSizes, snap: bool) -> Execution {
    let mut cur = *p;
    let mut intermediate = Vec::with_capacity(seq.len());
    for &a in seq {
        cur = apply_action(&cur, a, steps, snap);
        intermediate.push(cur);
    }
    Execution {
        final_pose: cur,
        intermediate,
    }
}

/// Final pose only.
pub fn execute(p: &Pose, seq: &[Action], steps: &StepSizes, snap: bool) -> Pose {
    seq.iter()
        .fold(*p, |cur, &a| apply_action(&cur, a, steps, snap))
}

/// Reverses the sequence and swaps each action for its inverse.
pub fn invert_sequence(seq: &[Action]) -> Vec<Action> {
    seq.iter().rev().map(|a| a.inverse()).collect()
}

/// Parses a list of action names.
pub fn parse_actions<S: AsRef<str>>(names: &[S]) -> Result<Vec<Action>, UnknownAction> {
    names.iter().map(|n| n.as_ref().trim().parse()).collect()
}

/// Renders a sequence as `[a, b, c]` with the canonical names.
pub fn format_sequence(seq: &[Action]) -> String {
    let names: Vec<&str> = seq.iter().map(|a| a.name()).collect();
    format!("[{}]", names.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{euler_compose, euler_decompose, rotation_distance, EulerAngles};
    use proptest::prelude::*;

    fn steps() -> StepSizes {
        StepSizes::default()
    }

    #[test]
    fn names_round_trip_and_serde() {
        for a in Action::ALL {
            assert_eq!(a.name().parse::<Action>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
            assert_eq!(a.inverse().inverse(), a);
            assert_eq!(a.inverse().category(), a.category());
        }
        assert!("fly_up".parse::<Action>().is_err());
        assert_eq!(Action::of_category(Category::Rotation).count(), 6);
    }

    #[test]
    fn forward_moves_along_plus_z() {
        let p = apply_action(&Pose::identity(), Action::MoveForward, &steps(), true);
        assert_eq!(*p.position(), Vector3::new(0.0, 0.0, 0.5));
        assert_eq!(p.rotation(), Pose::identity().rotation());
        let up = apply_action(&Pose::identity(), Action::MoveUp, &steps(), true);
        assert_eq!(*up.position(), Vector3::new(0.0, -0.5, 0.0));
    }

    #[test]
    fn look_down_is_negative_pitch() {
        let p = apply_action(&Pose::identity(), Action::LookDown, &steps(), true);
        let e = euler_decompose(&p).angles;
        assert!((e.rx + 30.0).abs() < 1e-9 && e.ry.abs() < 1e-9 && e.rz.abs() < 1e-9);
        // Forward tilts toward screen-down (+Y).
        assert!(p.axis(2).y > 0.0);
    }

    #[test]
    fn turn_left_swings_forward_toward_screen_left() {
        let p = apply_action(&Pose::identity(), Action::TurnLeft, &steps(), true);
        assert!(p.axis(2).x < 0.0);
        let p = apply_action(&Pose::identity(), Action::TurnRight, &steps(), true);
        assert!(p.axis(2).x > 0.0);
    }

    #[test]
    fn turn_pair_returns_from_identity() {
        let p = Pose::identity();
        let q = apply_action(&p, Action::TurnRight, &steps(), true);
        let r = apply_action(&q, Action::TurnLeft, &steps(), true);
        assert!((r.rotation() - p.rotation()).amax() < 1e-9);
    }

    #[test]
    fn five_right_turns_is_150_degrees() {
        let seq = [Action::TurnRight; 5];
        let ex = apply_sequence(&Pose::identity(), &seq, &steps(), true);
        assert_eq!(ex.intermediate.len(), 5);
        assert!((rotation_distance(&Pose::identity(), &ex.final_pose) - 150.0).abs() < 1e-9);
    }

    #[test]
    fn empty_sequence_is_identity() {
        let p = euler_compose(EulerAngles::new(-90.0, 30.0, 0.0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(execute(&p, &[], &steps(), true), p);
    }

    #[test]
    fn invert_examples() {
        assert!(invert_sequence(&[]).is_empty());
        assert_eq!(
            invert_sequence(&[Action::MoveForward, Action::TurnLeft]),
            vec![Action::TurnRight, Action::MoveBackward]
        );
    }

    #[test]
    fn rotation_then_translation_does_not_commute() {
        let p = Pose::identity();
        let a = execute(&p, &[Action::TurnRight, Action::MoveForward], &steps(), true);
        let b = execute(&p, &[Action::MoveForward, Action::TurnRight], &steps(), true);
        assert!((a.position() - b.position()).norm() > 0.1);
    }

    #[test]
    fn roll_round_trips_from_any_grid_pose() {
        // Roll is about local Z, the last factor of the Euler product, so the
        // grid is closed under it.
        for rx in (-5..=6).map(|k| k as f64 * 30.0) {
            for ry in [-60.0, -30.0, 0.0, 30.0, 60.0] {
                let p = euler_compose(EulerAngles::new(rx, ry, 30.0), Vector3::zeros());
                let q = execute(&p, &[Action::RotateCw, Action::RotateCcw], &steps(), true);
                assert!((q.rotation() - p.rotation()).amax() < 1e-9);
            }
        }
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        (0usize..12).prop_map(|i| Action::ALL[i])
    }

    proptest! {
        #[test]
        fn translations_commute(a in 0usize..6, b in 0usize..6, e in prop::array::uniform3(-180.0f64..180.0)) {
            let p = euler_compose(EulerAngles::new(e[0], e[1], e[2]), Vector3::zeros());
            let (a, b) = (Action::ALL[a], Action::ALL[b]);
            let ab = execute(&p, &[a, b], &steps(), true);
            let ba = execute(&p, &[b, a], &steps(), true);
            prop_assert!((ab.position() - ba.position()).norm() < 1e-12);
        }

        #[test]
        fn inversion_is_an_involution(seq in prop::collection::vec(arb_action(), 0..12)) {
            prop_assert_eq!(invert_sequence(&invert_sequence(&seq)), seq);
        }

        #[test]
        fn snapped_orientations_stay_on_grid(seq in prop::collection::vec(arb_action(), 0..10)) {
            let p = execute(&Pose::identity(), &seq, &steps(), true);
            let e = euler_decompose(&p).angles;
            for a in [e.rx, e.ry, e.rz] {
                prop_assert!((a / 30.0 - (a / 30.0).round()).abs() < 1e-9);
            }
        }

        #[test]
        fn deterministic(seq in prop::collection::vec(arb_action(), 0..10)) {
            let a = execute(&Pose::identity(), &seq, &steps(), true);
            let b = execute(&Pose::identity(), &seq, &steps(), true);
            prop_assert_eq!(a.to_matrix4(), b.to_matrix4());
        }
    }
}
