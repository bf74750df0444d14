//! Standard (distal) Denavit-Hartenberg forward kinematics with additive joint
//! zero-offsets, plus ZYX Euler utilities.
//!
//! Joint `i` contributes `Rz(q_i + zero_offset_i + theta_home_i) * Tz(d_i) * Tx(a_i) * Rx(alpha_i)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `RᵀR - I` and `det R - 1` for a matrix to count as a rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Largest deviation of `m` from a proper rotation: max of `|RᵀR - I|` entries and `|det R - 1|`.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    let gram = m.transpose() * m - Matrix3::identity();
    gram.amax().max((m.determinant() - 1.0).abs())
}

/// `Rz(gamma) * Ry(theta) * Rx(phi)`.
pub fn euler_zyx_to_rotation(gamma: f64, theta: f64, phi: f64) -> Matrix3<f64> {
    rot_z(gamma) * rot_y(theta) * rot_x(phi)
}

/// Inverse of [`euler_zyx_to_rotation`], returning `(gamma, theta, phi)` with
/// `theta` in `[-π/2, π/2]`.
///
/// At gimbal lock (`|theta| = π/2`) only `gamma ∓ phi` is determined; `gamma` is
/// fixed to 0 and the whole rotation about the collapsed axis goes into `phi`.
pub fn rotation_to_euler_zyx(m: &Matrix3<f64>) -> Result<(f64, f64, f64)> {
    let err = orthonormality_error(m);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(err));
    }
    let cos_theta = m[(0, 0)].hypot(m[(1, 0)]);
    if cos_theta < 1e-12 {
        if m[(2, 0)] < 0.0 {
            // theta = +π/2
            Ok((0.0, FRAC_PI_2, m[(0, 1)].atan2(m[(1, 1)])))
        } else {
            Ok((0.0, -FRAC_PI_2, (-m[(0, 1)]).atan2(m[(1, 1)])))
        }
    } else {
        let theta = (-m[(2, 0)]).atan2(cos_theta);
        let gamma = m[(1, 0)].atan2(m[(0, 0)]);
        let phi = m[(2, 1)].atan2(m[(2, 2)]);
        Ok((gamma, theta, phi))
    }
}

/// A rigid transform: rotation plus translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, rejecting rotations that fail the orthonormality check.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Pose from a translation and ZYX Euler angles `(gamma, theta, phi)`.
    pub fn from_euler_zyx(translation: Vector3<f64>, gamma: f64, theta: f64, phi: f64) -> Self {
        Self {
            rotation: euler_zyx_to_rotation(gamma, theta, phi),
            translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }

    /// Homogeneous 4x4 form.
    pub fn to_homogeneous(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Mul for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    // Delegates to the by-reference impl; without the borrows this would call itself.
    #[allow(clippy::op_ref)]
    fn mul(self, rhs: Pose) -> Pose {
        &self * &rhs
    }
}

/// One revolute joint of a standard DH table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DHJoint {
    /// Link length along the new x axis (mm).
    pub a: f64,
    /// Link twist about the new x axis (rad).
    pub alpha: f64,
    /// Link offset along the previous z axis (mm).
    pub d: f64,
    /// Constant joint-angle offset of the DH convention (rad).
    pub theta_home: f64,
}

impl DHJoint {
    pub fn new(a: f64, alpha: f64, d: f64, theta_home: f64) -> Self {
        Self {
            a,
            alpha,
            d,
            theta_home,
        }
    }

    /// Transform from this joint's input frame to its output frame at total DH angle `theta`.
    pub fn transform(&self, theta: f64) -> Pose {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Pose {
            rotation: Matrix3::new(
                ct,
                -st * ca,
                st * sa,
                st,
                ct * ca,
                -ct * sa,
                0.0,
                sa,
                ca,
            ),
            translation: Vector3::new(self.a * ct, self.a * st, self.d),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let in_half_open = |x: f64| x > -PI && x <= PI;
        if !self.a.is_finite() || !self.d.is_finite() {
            return Err(Error::InvalidChain(format!(
                "joint {index}: a and d must be finite"
            )));
        }
        if !in_half_open(self.alpha) || !in_half_open(self.theta_home) {
            return Err(Error::InvalidChain(format!(
                "joint {index}: alpha and theta_home must lie in (-pi, pi]"
            )));
        }
        Ok(())
    }
}

/// Joint angles (rad), one per joint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self(angles)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A serial chain of revolute DH joints with per-joint zero-offsets, limits and
/// named tool points in the flange frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DHChain {
    name: String,
    joints: Vec<DHJoint>,
    zero_offsets: Vec<f64>,
    joint_limits: Vec<(f64, f64)>,
    tool_points: BTreeMap<String, Vector3<f64>>,
}

impl DHChain {
    /// Builds a chain with all zero-offsets set to 0.
    pub fn new(
        name: impl Into<String>,
        joints: Vec<DHJoint>,
        joint_limits: Vec<(f64, f64)>,
        tool_points: BTreeMap<String, Vector3<f64>>,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidChain("chain has no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            j.validate(i)?;
        }
        if joint_limits.len() != joints.len() {
            return Err(Error::DimensionMismatch {
                expected: joints.len(),
                actual: joint_limits.len(),
            });
        }
        for (i, (lo, hi)) in joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidChain(format!(
                    "joint {i}: limit min {lo} not below max {hi}"
                )));
            }
        }
        for (name, p) in &tool_points {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidChain(format!(
                    "tool point `{name}` has non-finite coordinates"
                )));
            }
        }
        let k = joints.len();
        Ok(Self {
            name: name.into(),
            joints,
            zero_offsets: vec![0.0; k],
            joint_limits,
            tool_points,
        })
    }

    /// Same chain with the given zero-offsets (rad).
    pub fn with_zero_offsets(&self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: offsets.len(),
            });
        }
        if !offsets.iter().all(|o| o.is_finite()) {
            return Err(Error::InvalidChain("zero-offsets must be finite".into()));
        }
        let mut c = self.clone();
        c.zero_offsets = offsets.to_vec();
        Ok(c)
    }

    /// The built-in 7-DoF S-R-S arm (340 / 400 / 400 / 126 mm links) with two markers at
    /// ±100 mm on the flange x axis and a flange origin point.
    pub fn reference_srs7() -> Self {
        let h = FRAC_PI_2;
        let joints = vec![
            DHJoint::new(0.0, -h, 340.0, 0.0),
            DHJoint::new(0.0, h, 0.0, 0.0),
            DHJoint::new(0.0, h, 400.0, 0.0),
            DHJoint::new(0.0, -h, 0.0, 0.0),
            DHJoint::new(0.0, -h, 400.0, 0.0),
            DHJoint::new(0.0, h, 0.0, 0.0),
            DHJoint::new(0.0, 0.0, 126.0, 0.0),
        ];
        let limits_deg = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0];
        let limits = limits_deg
            .iter()
            .map(|l: &f64| (-l.to_radians(), l.to_radians()))
            .collect();
        let mut tool_points = BTreeMap::new();
        tool_points.insert("flange".to_string(), Vector3::zeros());
        tool_points.insert("smr".to_string(), Vector3::new(100.0, 0.0, 0.0));
        tool_points.insert("sir".to_string(), Vector3::new(-100.0, 0.0, 0.0));
        Self::new("srs7-reference", joints, limits, tool_points)
            .expect("built-in chain is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[DHJoint] {
        &self.joints
    }

    pub fn zero_offsets(&self) -> &[f64] {
        &self.zero_offsets
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.joint_limits
    }

    pub fn tool_points(&self) -> &BTreeMap<String, Vector3<f64>> {
        &self.tool_points
    }

    pub fn tool_point_offset(&self, name: &str) -> Result<Vector3<f64>> {
        self.tool_points
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownToolPoint(name.to_string()))
    }

    /// Checks length and limits of `q`.
    pub fn check_config(&self, q: &JointConfig) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        for (i, (&v, &(min, max))) in q.0.iter().zip(&self.joint_limits).enumerate() {
            if !(v >= min && v <= max) {
                return Err(Error::JointLimit {
                    joint: i,
                    value: v,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.check_config(q).is_ok()
    }

    /// Base-to-frame transforms for frames 1..=k, without limit checks.
    pub(crate) fn frames_unchecked(&self, q: &[f64]) -> Vec<Pose> {
        let mut acc = Pose::identity();
        let mut out = Vec::with_capacity(self.dof());
        for ((joint, &qi), &off) in self.joints.iter().zip(q).zip(&self.zero_offsets) {
            acc = acc * joint.transform(qi + off + joint.theta_home);
            out.push(acc);
        }
        out
    }

    pub(crate) fn flange_unchecked(&self, q: &[f64]) -> Pose {
        self.flange_with_offsets(q, &self.zero_offsets)
    }

    /// Flange pose with `offsets` in place of the chain's own zero-offsets; no checks.
    pub(crate) fn flange_with_offsets(&self, q: &[f64], offsets: &[f64]) -> Pose {
        let mut acc = Pose::identity();
        for ((joint, &qi), &off) in self.joints.iter().zip(q).zip(offsets) {
            acc = acc * joint.transform(qi + off + joint.theta_home);
        }
        acc
    }
}

/// Flange pose in the base frame.
pub fn forward_kinematics(chain: &DHChain, q: &JointConfig) -> Result<Pose> {
    chain.check_config(q)?;
    Ok(chain.flange_unchecked(&q.0))
}

/// Base-frame position of the named tool point.
pub fn tool_point(chain: &DHChain, q: &JointConfig, point_name: &str) -> Result<Vector3<f64>> {
    let offset = chain.tool_point_offset(point_name)?;
    Ok(forward_kinematics(chain, q)?.transform_point(&offset))
}

/// On-disk chain description. Lengths in mm, DH angles in rad, zero-offsets in deg.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub name: String,
    pub zero_offsets_deg: Vec<f64>,
    pub joints: Vec<JointEntry>,
    #[serde(default)]
    pub tool_points_mm: BTreeMap<String, [f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointEntry {
    pub a_mm: f64,
    pub alpha_rad: f64,
    pub d_mm: f64,
    pub theta_home_rad: f64,
    pub limits_rad: [f64; 2],
}

impl From<&DHChain> for ChainFile {
    fn from(c: &DHChain) -> Self {
        ChainFile {
            name: c.name.clone(),
            zero_offsets_deg: c.zero_offsets.iter().map(|o| o.to_degrees()).collect(),
            joints: c
                .joints
                .iter()
                .zip(&c.joint_limits)
                .map(|(j, &(lo, hi))| JointEntry {
                    a_mm: j.a,
                    alpha_rad: j.alpha,
                    d_mm: j.d,
                    theta_home_rad: j.theta_home,
                    limits_rad: [lo, hi],
                })
                .collect(),
            tool_points_mm: c
                .tool_points
                .iter()
                .map(|(k, v)| (k.clone(), [v.x, v.y, v.z]))
                .collect(),
        }
    }
}

impl TryFrom<ChainFile> for DHChain {
    type Error = Error;

    fn try_from(f: ChainFile) -> Result<Self> {
        let joints = f
            .joints
            .iter()
            .map(|j| DHJoint::new(j.a_mm, j.alpha_rad, j.d_mm, j.theta_home_rad))
            .collect();
        let limits = f
            .joints
            .iter()
            .map(|j| (j.limits_rad[0], j.limits_rad[1]))
            .collect();
        let tool_points = f
            .tool_points_mm
            .into_iter()
            .map(|(k, v)| (k, Vector3::from(v)))
            .collect();
        let chain = DHChain::new(f.name, joints, limits, tool_points)?;
        let offsets: Vec<f64> = f.zero_offsets_deg.iter().map(|d| d.to_radians()).collect();
        chain.with_zero_offsets(&offsets)
    }
}

impl DHChain {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ChainFile = toml::from_str(s)?;
        file.try_into()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ChainFile::from(self)).expect("chain file serializes")
    }
}
