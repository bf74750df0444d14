//! Sensor/robot registration from three point pairs, and the 6-DoF correction that
//! left-multiplies it during calibration.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{euler_zyx_to_rotation, rotation_to_euler_zyx, Pose};

/// Rigid transform mapping robot-base coordinates into the sensor frame.
pub type RigidTransform = Pose;

/// Minimum triangle area (mm²) for a usable registration triple.
pub const MIN_TRIANGLE_AREA: f64 = 1e-6;

/// Correction applied on the sensor side of the initial registration.
///
/// `alpha`, `beta` and `gamma` are ZYX Euler angles (rad) bound to the Z, Y and X
/// axes respectively: the rotation is `Rz(alpha) Ry(beta) Rx(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegistrationCorrection {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RegistrationCorrection {
    pub fn to_transform(&self) -> RigidTransform {
        Pose {
            rotation: euler_zyx_to_rotation(self.alpha, self.beta, self.gamma),
            translation: Vector3::new(self.x, self.y, self.z),
        }
    }

    /// Correction whose transform equals `t` (angles from the ZYX decomposition).
    pub fn from_transform(t: &RigidTransform) -> Result<Self> {
        let (alpha, beta, gamma) = rotation_to_euler_zyx(&t.rotation)?;
        Ok(Self {
            x: t.translation.x,
            y: t.translation.y,
            z: t.translation.z,
            alpha,
            beta,
            gamma,
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn triangle_area(p: &[Vector3<f64>; 3]) -> f64 {
    0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm()
}

/// Frame with origin at the first point, x toward the second, z along the plane normal.
fn frame_from_points(p: &[Vector3<f64>; 3]) -> Result<Pose> {
    let area = triangle_area(p);
    if !(area > MIN_TRIANGLE_AREA) {
        return Err(Error::Collinear(area));
    }
    let x = (p[1] - p[0]).normalize();
    let z = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
    let y = z.cross(&x);
    Ok(Pose {
        rotation: Matrix3::from_columns(&[x, y, z]),
        translation: p[0],
    })
}

/// Transform `T` with `T * p_r[i] ≈ p_n[i]`, exact for a rigid correspondence.
pub fn register_three_points(
    p_n: &[Vector3<f64>],
    p_r: &[Vector3<f64>],
) -> Result<RigidTransform> {
    if p_n.len() != p_r.len() {
        return Err(Error::DimensionMismatch {
            expected: p_n.len(),
            actual: p_r.len(),
        });
    }
    if p_n.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            actual: p_n.len(),
        });
    }
    let n = frame_from_points(&[p_n[0], p_n[1], p_n[2]])?;
    let r = frame_from_points(&[p_r[0], p_r[1], p_r[2]])?;
    Ok(n * r.inverse())
}

/// `T*(theta1) * initial`.
pub fn corrected_transform(
    initial: &RigidTransform,
    theta1: &RegistrationCorrection,
) -> RigidTransform {
    &theta1.to_transform() * initial
}

/// Robot-frame point mapped into the sensor frame through the corrected registration.
pub fn map_robot_point(
    initial: &RigidTransform,
    theta1: &RegistrationCorrection,
    p_robot_in_r: &Vector3<f64>,
) -> Vector3<f64> {
    corrected_transform(initial, theta1).transform_point(p_robot_in_r)
}

/// Indices of the three points spanning the largest triangle; ties keep the first
/// triple in lexicographic order.
pub fn max_area_triple(points: &[Vector3<f64>]) -> Result<[usize; 3]> {
    if points.len() < 3 {
        return Err(Error::Empty("need at least three points for registration"));
    }
    let mut best = (0.0, [0, 1, 2]);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let a = points[j] - points[i];
            for k in j + 1..points.len() {
                let area = 0.5 * a.cross(&(points[k] - points[i])).norm();
                if area > best.0 {
                    best = (area, [i, j, k]);
                }
            }
        }
    }
    if !(best.0 > MIN_TRIANGLE_AREA) {
        return Err(Error::Collinear(best.0));
    }
    Ok(best.1)
}
