//! Camera poses, intrinsic XYZ Euler angles, orientation snapping and the
//! pose-distance metrics used for scoring.
//!
//! A [`Pose`] is camera-to-world: the columns of `rotation` are the camera's
//! right (+X), down (+Y) and forward (+Z) axes expressed in world coordinates
//! (OpenCV camera frame, world Z-up). Angles are degrees everywhere except
//! inside the trig kernels.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to validate orthonormality and determinant of rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Pitch (middle Euler angle) margin from ±90° inside which the decomposition
/// treats the rotation as gimbal-locked.
pub const GIMBAL_LOCK_MARGIN_DEG: f64 = 1e-4;

/// Residual added before flooring in [`snap_angle`] so that a decomposed angle
/// lying a few ulps below an exact half step still rounds up.
const SNAP_TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("position component is not finite")]
    NonFinitePosition,
    #[error("rotation is not orthonormal (max |R·Rᵀ − I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant {0} is not +1")]
    BadDeterminant(f64),
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite value in pose vector")]
    NonFiniteValue,
    #[error("bottom row of homogeneous matrix must be [0, 0, 0, 1]")]
    BadHomogeneousRow,
}

/// A 6-DoF camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vector3<f64>,
    rotation: Matrix3<f64>,
}

impl Pose {
    /// Builds a pose after validating the rotation and position.
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, PoseError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(PoseError::NonFinitePosition);
        }
        let dev = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if !dev.is_finite() || dev > ROTATION_TOLERANCE {
            return Err(PoseError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(PoseError::BadDeterminant(det));
        }
        Ok(Self { position, rotation })
    }

    /// Internal constructor for values that are valid by construction.
    pub(crate) fn from_parts_unchecked(position: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        Self { position, rotation }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Vector3::zeros(), Matrix3::identity())
    }

    /// Pose at `position` with the given Euler orientation.
    pub fn from_euler(position: Vector3<f64>, angles: EulerAngles) -> Result<Self, PoseError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(PoseError::NonFinitePosition);
        }
        Ok(euler_compose(angles, position))
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Same orientation, new position.
    pub fn with_position(&self, position: Vector3<f64>) -> Result<Self, PoseError> {
        Self::new(position, self.rotation)
    }

    /// Camera axis `i` (0 = right, 1 = down, 2 = forward) in world frame.
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.rotation.column(i).into_owned()
    }

    /// Maps a world point into the camera frame.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.position)
    }

    /// Serializes as `[tx, ty, tz, rx, ry, rz]` (meters, intrinsic XYZ degrees).
    pub fn to_vec6(&self) -> [f64; 6] {
        let e = euler_decompose(self).angles;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            e.rx,
            e.ry,
            e.rz,
        ]
    }

    pub fn from_vec6(v: &[f64]) -> Result<Self, PoseError> {
        if v.len() != 6 {
            return Err(PoseError::WrongLength {
                expected: 6,
                got: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(PoseError::NonFiniteValue);
        }
        Ok(euler_compose(
            EulerAngles::new(v[3], v[4], v[5]),
            Vector3::new(v[0], v[1], v[2]),
        ))
    }

    /// Row-major 4×4 camera-to-world matrix.
    pub fn to_matrix4(&self) -> [f64; 16] {
        let mut m = Matrix4::<f64>::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_matrix4(m: &[f64]) -> Result<Self, PoseError> {
        if m.len() != 16 {
            return Err(PoseError::WrongLength {
                expected: 16,
                got: m.len(),
            });
        }
        if !m.iter().all(|x| x.is_finite()) {
            return Err(PoseError::NonFiniteValue);
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        let expected = [0.0, 0.0, 0.0, 1.0];
        if bottom
            .iter()
            .zip(expected.iter())
            .any(|(a, b)| (a - b).abs() > ROTATION_TOLERANCE)
        {
            return Err(PoseError::BadHomogeneousRow);
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(Vector3::new(m[3], m[7], m[11]), rotation)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_vec6().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <Vec<f64>>::deserialize(d)?;
        Pose::from_vec6(&v).map_err(serde::de::Error::custom)
    }
}

/// Bit-exact serde for poses as a row-major 4×4 matrix. Use with
/// `#[serde(with = "viewplan_core::se3::matrix_serde")]`.
pub mod matrix_serde {
    use super::Pose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        p.to_matrix4().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        let v = <Vec<f64>>::deserialize(d)?;
        Pose::from_matrix4(&v).map_err(serde::de::Error::custom)
    }
}

/// Intrinsic XYZ Euler angles in degrees, each in (−180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EulerAngles {
    /// Normalizes each angle into (−180, 180].
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        Self {
            rx: normalize_deg(rx),
            ry: normalize_deg(ry),
            rz: normalize_deg(rz),
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// Result of [`euler_decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub angles: EulerAngles,
    /// Set when |ry| is within [`GIMBAL_LOCK_MARGIN_DEG`] of 90°; rz was forced
    /// to zero and the coupled rotation folded into rx.
    pub gimbal_locked: bool,
}

/// Wraps an angle into (−180, 180].
pub fn normalize_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r > 180.0 {
        r -= 360.0;
    } else if r <= -180.0 {
        r += 360.0;
    }
    if r == 0.0 {
        // collapse -0.0
        0.0
    } else {
        r
    }
}

/// `(sin, cos)` of an angle in degrees. Exact for multiples of 30°.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let k = deg / 30.0;
    if k.fract() == 0.0 && k.abs() < 1e12 {
        const HALF_SQRT3: f64 = 0.866_025_403_784_438_6;
        let idx = (k as i64).rem_euclid(12) as usize;
        const TABLE: [(f64, f64); 12] = [
            (0.0, 1.0),
            (0.5, HALF_SQRT3),
            (HALF_SQRT3, 0.5),
            (1.0, 0.0),
            (HALF_SQRT3, -0.5),
            (0.5, -HALF_SQRT3),
            (0.0, -1.0),
            (-0.5, -HALF_SQRT3),
            (-HALF_SQRT3, -0.5),
            (-1.0, 0.0),
            (-HALF_SQRT3, 0.5),
            (-0.5, HALF_SQRT3),
        ];
        return TABLE[idx];
    }
    deg.to_radians().sin_cos()
}

/// Rotation by `deg` about the X axis.
pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos_deg(deg);
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos_deg(deg);
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos_deg(deg);
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R = Rx(rx) · Ry(ry) · Rz(rz)`.
pub fn euler_compose(e: EulerAngles, position: Vector3<f64>) -> Pose {
    Pose::from_parts_unchecked(position, rot_x(e.rx) * rot_y(e.ry) * rot_z(e.rz))
}

/// Inverse of [`euler_compose`] for the rotation part of `p`.
pub fn euler_decompose(p: &Pose) -> Decomposition {
    let r = p.rotation();
    let sy = r[(0, 2)].clamp(-1.0, 1.0);
    let ry = sy.asin().to_degrees();
    if 90.0 - ry.abs() <= GIMBAL_LOCK_MARGIN_DEG {
        // Only rx ± rz is observable; put all of it into rx.
        let rx = if ry > 0.0 {
            r[(1, 0)].atan2(r[(1, 1)])
        } else {
            (-r[(1, 0)]).atan2(r[(1, 1)])
        };
        return Decomposition {
            angles: EulerAngles::new(rx.to_degrees(), ry.signum() * 90.0, 0.0),
            gimbal_locked: true,
        };
    }
    let rx = (-r[(1, 2)]).atan2(r[(2, 2)]).to_degrees();
    let rz = (-r[(0, 1)]).atan2(r[(0, 0)]).to_degrees();
    Decomposition {
        angles: EulerAngles::new(rx, ry, rz),
        gimbal_locked: false,
    }
}

/// Rounds an angle to the nearest multiple of `step`, ties toward +∞, then
/// wraps into (−180, 180].
pub fn snap_angle(deg: f64, step: f64) -> f64 {
    let k = (deg / step + 0.5 + SNAP_TIE_EPSILON).floor();
    normalize_deg(k * step)
}

/// Snaps each intrinsic XYZ angle of `p` to a multiple of the rotation step and
/// recomposes the rotation. Position is untouched.
pub fn snap_orientation(p: &Pose, steps: &StepSizes) -> Pose {
    let e = euler_decompose(p).angles;
    let step = steps.rotation_deg();
    let (rx, ry, rz) = (
        snap_angle(e.rx, step),
        snap_angle(e.ry, step),
        snap_angle(e.rz, step),
    );
    // Landing on the lock: store the canonical folded form so a second snap
    // decomposes to the same triple.
    let snapped = if ry == 90.0 {
        EulerAngles::new(rx + rz, ry, 0.0)
    } else if ry == -90.0 {
        EulerAngles::new(rx - rz, ry, 0.0)
    } else {
        EulerAngles::new(rx, ry, rz)
    };
    euler_compose(snapped, *p.position())
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{name} must be finite and strictly positive, got {value}")]
pub struct NonPositiveParameter {
    pub name: &'static str,
    pub value: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, NonPositiveParameter> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(NonPositiveParameter { name, value })
    }
}

/// Translation step (meters) and rotation step (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepSizesRaw", into = "StepSizesRaw")]
pub struct StepSizes {
    translation_m: f64,
    rotation_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct StepSizesRaw {
    translation_m: f64,
    rotation_deg: f64,
}

impl TryFrom<StepSizesRaw> for StepSizes {
    type Error = NonPositiveParameter;
    fn try_from(raw: StepSizesRaw) -> Result<Self, Self::Error> {
        StepSizes::new(raw.translation_m, raw.rotation_deg)
    }
}

impl From<StepSizes> for StepSizesRaw {
    fn from(s: StepSizes) -> Self {
        Self {
            translation_m: s.translation_m,
            rotation_deg: s.rotation_deg,
        }
    }
}

impl StepSizes {
    pub fn new(translation_m: f64, rotation_deg: f64) -> Result<Self, NonPositiveParameter> {
        Ok(Self {
            translation_m: check_positive("translation step", translation_m)?,
            rotation_deg: check_positive("rotation step", rotation_deg)?,
        })
    }

    pub fn translation_m(&self) -> f64 {
        self.translation_m
    }

    pub fn rotation_deg(&self) -> f64 {
        self.rotation_deg
    }
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            translation_m: 0.5,
            rotation_deg: 30.0,
        }
    }
}

/// Multipliers on the step sizes that define the success region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdsRaw", into = "ThresholdsRaw")]
pub struct SuccessThresholds {
    beta_t: f64,
    beta_r: f64,
}

#[derive(Serialize, Deserialize)]
struct ThresholdsRaw {
    beta_t: f64,
    beta_r: f64,
}

impl TryFrom<ThresholdsRaw> for SuccessThresholds {
    type Error = NonPositiveParameter;
    fn try_from(raw: ThresholdsRaw) -> Result<Self, Self::Error> {
        SuccessThresholds::new(raw.beta_t, raw.beta_r)
    }
}

impl From<SuccessThresholds> for ThresholdsRaw {
    fn from(t: SuccessThresholds) -> Self {
        Self {
            beta_t: t.beta_t,
            beta_r: t.beta_r,
        }
    }
}

impl SuccessThresholds {
    pub fn new(beta_t: f64, beta_r: f64) -> Result<Self, NonPositiveParameter> {
        Ok(Self {
            beta_t: check_positive("beta_t", beta_t)?,
            beta_r: check_positive("beta_r", beta_r)?,
        })
    }

    pub fn beta_t(&self) -> f64 {
        self.beta_t
    }

    pub fn beta_r(&self) -> f64 {
        self.beta_r
    }

    /// Absolute limits `(meters, degrees)` for the given step sizes.
    pub fn limits(&self, steps: &StepSizes) -> (f64, f64) {
        (
            self.beta_t * steps.translation_m(),
            self.beta_r * steps.rotation_deg(),
        )
    }
}

impl Default for SuccessThresholds {
    fn default() -> Self {
        Self {
            beta_t: 1.0,
            beta_r: 1.0,
        }
    }
}

/// Translation, geodesic rotation and step-normalized distance between poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewDistance {
    pub d_pos: f64,
    pub d_rot: f64,
    pub d_unified: f64,
}

/// Euclidean distance between positions in meters.
pub fn position_distance(a: &Pose, b: &Pose) -> f64 {
    (a.position() - b.position()).norm()
}

/// Geodesic angle between orientations in degrees.
///
/// Evaluated as `atan2(|skew(RᵀR')|, tr(RᵀR') − 1)`, which equals the clamped
/// `arccos((tr − 1) / 2)` but keeps full precision near 0° and 180°.
pub fn rotation_distance(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation().transpose() * b.rotation();
    let c = (rel.trace() - 1.0).clamp(-2.0, 2.0);
    let s = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    )
    .norm();
    s.atan2(c).to_degrees()
}

pub fn view_distance(a: &Pose, b: &Pose, steps: &StepSizes) -> ViewDistance {
    let d_pos = position_distance(a, b);
    let d_rot = rotation_distance(a, b);
    ViewDistance {
        d_pos,
        d_rot,
        d_unified: unified_distance(d_pos, d_rot, steps),
    }
}

pub fn unified_distance(d_pos: f64, d_rot: f64, steps: &StepSizes) -> f64 {
    (d_pos / steps.translation_m()).hypot(d_rot / steps.rotation_deg())
}

/// Inclusive success test: `d_pos ≤ β_t·s_t` and `d_rot ≤ β_r·s_r`.
pub fn is_success(est: &Pose, target: &Pose, steps: &StepSizes, thr: &SuccessThresholds) -> bool {
    within_limits(position_distance(est, target), rotation_distance(est, target), steps, thr)
}

/// Absolute slack on the inclusive success comparison, so that a distance of
/// exactly one step computed through trig (e.g. 30.000000000000004°) counts
/// as on the boundary.
pub const SUCCESS_SLACK: f64 = 1e-9;

pub fn within_limits(d_pos: f64, d_rot: f64, steps: &StepSizes, thr: &SuccessThresholds) -> bool {
    let (max_pos, max_rot) = thr.limits(steps);
    d_pos <= max_pos + SUCCESS_SLACK && d_rot <= max_rot + SUCCESS_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(p: [f64; 3], e: [f64; 3]) -> Pose {
        euler_compose(EulerAngles::new(e[0], e[1], e[2]), Vector3::from(p))
    }

    #[test]
    fn identical_poses_have_zero_distance() {
        let p = pose([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]);
        let d = view_distance(&p, &p, &StepSizes::default());
        assert_eq!(d.d_pos, 0.0);
        assert!(d.d_rot.abs() < 1e-6);
    }

    #[test]
    fn three_four_five() {
        let a = Pose::identity();
        let b = pose([3.0, 4.0, 0.0], [0.0, 0.0, 0.0]);
        assert_eq!(view_distance(&a, &b, &StepSizes::default()).d_pos, 5.0);
    }

    #[test]
    fn single_axis_yaw() {
        let a = Pose::identity();
        let b = pose([0.0; 3], [0.0, 30.0, 0.0]);
        let d = view_distance(&a, &b, &StepSizes::default());
        assert!((d.d_rot - 30.0).abs() < 1e-9);
        assert!((d.d_unified - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unified_of_one_step_each() {
        let d = unified_distance(0.5, 30.0, &StepSizes::default());
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn success_boundary_is_inclusive() {
        let steps = StepSizes::default();
        let thr = SuccessThresholds::default();
        let t = Pose::identity();
        assert!(is_success(&t, &t, &steps, &thr));
        let b = pose([0.5, 0.0, 0.0], [0.0, 30.0, 0.0]);
        assert!(is_success(&b, &t, &steps, &thr));
        let c = pose([0.51, 0.0, 0.0], [0.0, 0.0, 0.0]);
        assert!(!is_success(&c, &t, &steps, &thr));
    }

    #[test]
    fn euler_basic_cases() {
        let e = euler_decompose(&Pose::identity()).angles;
        assert_eq!((e.rx, e.ry, e.rz), (0.0, 0.0, 0.0));
        let p = Pose::from_parts_unchecked(Vector3::zeros(), rot_y(30.0));
        let e = euler_decompose(&p).angles;
        assert!(e.rx.abs() < 1e-12 && (e.ry - 30.0).abs() < 1e-12 && e.rz.abs() < 1e-12);
    }

    #[test]
    fn gimbal_lock_folds_roll_into_rx() {
        let p = pose([0.0; 3], [20.0, 90.0, 10.0]);
        let d = euler_decompose(&p);
        assert!(d.gimbal_locked);
        assert_eq!(d.angles.rz, 0.0);
        assert!((d.angles.rx - 30.0).abs() < 1e-9);
        let back = euler_compose(d.angles, Vector3::zeros());
        assert!(rotation_distance(&p, &back) < 1e-6);

        let p = pose([0.0; 3], [20.0, -90.0, 10.0]);
        let d = euler_decompose(&p);
        assert!(d.gimbal_locked);
        let back = euler_compose(d.angles, Vector3::zeros());
        assert!(rotation_distance(&p, &back) < 1e-6);
    }

    #[test]
    fn snapping_examples() {
        let steps = StepSizes::default();
        let p = pose([1.0, 2.0, 3.0], [0.0, 44.0, 0.0]);
        let s = snap_orientation(&p, &steps);
        assert!((euler_decompose(&s).angles.ry - 30.0).abs() < 1e-9);
        assert_eq!(s.position(), p.position());

        let p = pose([0.0; 3], [0.0, 45.0, 0.0]);
        assert!((euler_decompose(&snap_orientation(&p, &steps)).angles.ry - 60.0).abs() < 1e-9);

        let p = pose([0.0; 3], [-45.0, 0.0, 0.0]);
        assert!((euler_decompose(&snap_orientation(&p, &steps)).angles.rx + 30.0).abs() < 1e-9);

        let grid = pose([0.0; 3], [-90.0, 60.0, 150.0]);
        assert_eq!(snap_orientation(&grid, &steps), grid);
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_deg(-180.0), 180.0);
        assert_eq!(normalize_deg(180.0), 180.0);
        assert_eq!(normalize_deg(540.0), 180.0);
        assert_eq!(normalize_deg(-190.0), 170.0);
        assert_eq!(normalize_deg(-0.0), 0.0);
    }

    #[test]
    fn vec6_and_matrix_forms() {
        let p = pose([4.07, 3.28, 1.66], [-90.0, 0.0, -120.0]);
        let v = p.to_vec6();
        assert!((v[3] + 90.0).abs() < 1e-9 && v[4].abs() < 1e-9 && (v[5] + 120.0).abs() < 1e-9);
        let q = Pose::from_vec6(&v).unwrap();
        assert!(rotation_distance(&p, &q) < 1e-6);
        let m = p.to_matrix4();
        assert_eq!(Pose::from_matrix4(&m).unwrap(), p);
        assert!(matches!(
            Pose::from_vec6(&[0.0; 5]),
            Err(PoseError::WrongLength { .. })
        ));
        let mut bad = m;
        bad[0] = 2.0;
        assert!(Pose::from_matrix4(&bad).is_err());
    }

    #[test]
    fn rejects_invalid_rotation_and_steps() {
        assert!(Pose::new(Vector3::zeros(), Matrix3::identity() * 2.0).is_err());
        assert!(Pose::new(Vector3::zeros(), -Matrix3::<f64>::identity()).is_err());
        assert!(Pose::new(Vector3::new(f64::NAN, 0.0, 0.0), Matrix3::identity()).is_err());
        assert!(StepSizes::new(0.0, 30.0).is_err());
        assert!(SuccessThresholds::new(1.0, -1.0).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-5.0f64..5.0),
            prop::array::uniform3(-180.0f64..180.0),
        )
            .prop_map(|(p, e)| pose(p, e))
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_pose(), b in arb_pose()) {
            let s = StepSizes::default();
            let ab = view_distance(&a, &b, &s);
            let ba = view_distance(&b, &a, &s);
            prop_assert!((ab.d_pos - ba.d_pos).abs() < 1e-12);
            prop_assert!((ab.d_rot - ba.d_rot).abs() < 1e-7);
            prop_assert!(!ab.d_rot.is_nan());
        }

        #[test]
        fn snapping_is_idempotent(p in arb_pose()) {
            let s = StepSizes::default();
            let once = snap_orientation(&p, &s);
            prop_assert_eq!(snap_orientation(&once, &s), once);
            let e = euler_decompose(&once).angles;
            for a in [e.rx, e.ry, e.rz] {
                prop_assert!((a / 30.0 - (a / 30.0).round()).abs() < 1e-9);
            }
        }

        #[test]
        fn success_is_monotone(dp in 0.0f64..2.0, dr in 0.0f64..90.0, shrink in 0.0f64..1.0) {
            let s = StepSizes::default();
            let t = SuccessThresholds::default();
            if within_limits(dp, dr, &s, &t) {
                prop_assert!(within_limits(dp * shrink, dr, &s, &t));
                prop_assert!(within_limits(dp, dr * shrink, &s, &t));
            }
        }
    }
}
