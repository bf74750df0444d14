//! Closed-form inverse kinematics for the 7-DoF S-R-S arm.
//!
//! The redundancy is resolved by the arm angle `psi`: the rotation of the elbow about
//! the shoulder-wrist axis, measured from the reference arm plane in which joint 3 is
//! zero. For each arm angle there are up to eight branches, labelled by the sign of
//! the shoulder (`q2`), elbow (`q4`) and wrist (`q6`) angles.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{rot_x, rot_z, wrap_angle, DHChain, JointConfig, Pose};

/// Sines below this mark a singular joint; the free joint is pinned to 0.
pub const SINGULAR_SINE: f64 = 1e-9;
/// Two solutions closer than this (per joint, rad) are the same solution.
pub const DUPLICATE_TOL: f64 = 1e-9;
const TRANSLATION_TOL: f64 = 1e-6;
const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Branch of a solution: signs of the shoulder, elbow and wrist angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchLabel {
    pub shoulder: Sign,
    pub elbow: Sign,
    pub wrist: Sign,
}

impl BranchLabel {
    pub fn all() -> [BranchLabel; 8] {
        let s = [Sign::Plus, Sign::Minus];
        let mut out = [BranchLabel {
            shoulder: Sign::Plus,
            elbow: Sign::Plus,
            wrist: Sign::Plus,
        }; 8];
        let mut i = 0;
        for &shoulder in &s {
            for &elbow in &s {
                for &wrist in &s {
                    out[i] = BranchLabel {
                        shoulder,
                        elbow,
                        wrist,
                    };
                    i += 1;
                }
            }
        }
        out
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}",
            self.shoulder.symbol(),
            self.elbow.symbol(),
            self.wrist.symbol()
        )
    }
}

#[derive(Debug, Clone)]
pub struct IkRequest {
    /// Flange pose in the base frame.
    pub target: Pose,
    /// Arm angles (rad) at which the null space is sampled.
    pub arm_angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub branch: BranchLabel,
    pub arm_angle: f64,
}

/// Counts of candidate branches that were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IkDiagnostics {
    pub out_of_limits: usize,
    /// Branches collapsed onto another one at a shoulder, elbow or wrist singularity.
    pub singular: usize,
    pub duplicates: usize,
    /// Candidates whose forward kinematics missed the target (should stay 0).
    pub failed_verification: usize,
}

#[derive(Debug, Clone, Default)]
pub struct IkSolutionSet {
    pub solutions: Vec<IkSolution>,
    pub diagnostics: IkDiagnostics,
}

impl IkSolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// `n` arm angles evenly spaced over `(-π, π]`; `n = 4` gives `-π/2, 0, π/2, π`.
pub fn default_arm_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| -PI + (j + 1) as f64 * 2.0 * PI / n as f64)
        .collect()
}

/// Link lengths of a validated S-R-S chain.
#[derive(Debug, Clone, Copy)]
struct SrsGeometry {
    base_shoulder: f64,
    shoulder_elbow: f64,
    elbow_wrist: f64,
    wrist_flange: f64,
}

const SRS_ALPHAS: [f64; 7] = [
    -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, 0.0,
];

impl SrsGeometry {
    fn from_chain(chain: &DHChain) -> Result<Self> {
        let joints = chain.joints();
        if joints.len() != 7 {
            return Err(Error::UnsupportedTopology(format!(
                "expected 7 joints, found {}",
                joints.len()
            )));
        }
        const TOL: f64 = 1e-9;
        for (i, (j, &alpha)) in joints.iter().zip(&SRS_ALPHAS).enumerate() {
            if j.a.abs() > TOL {
                return Err(Error::UnsupportedTopology(format!(
                    "joint {i} has nonzero link length a"
                )));
            }
            if (j.alpha - alpha).abs() > TOL {
                return Err(Error::UnsupportedTopology(format!(
                    "joint {i} twist {} differs from the S-R-S pattern",
                    j.alpha
                )));
            }
        }
        for i in [1, 3, 5] {
            if joints[i].d.abs() > TOL {
                return Err(Error::UnsupportedTopology(format!(
                    "joint {i} has nonzero offset d"
                )));
            }
        }
        if joints[2].d <= 0.0 || joints[4].d <= 0.0 {
            return Err(Error::UnsupportedTopology(
                "upper arm and forearm lengths must be positive".into(),
            ));
        }
        Ok(Self {
            base_shoulder: joints[0].d,
            shoulder_elbow: joints[2].d,
            elbow_wrist: joints[4].d,
            wrist_flange: joints[6].d,
        })
    }

    fn shoulder(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.base_shoulder)
    }

    fn wrist_center(&self, target: &Pose) -> Vector3<f64> {
        target.translation - self.wrist_flange * target.rotation.column(2)
    }

    fn cos_elbow(&self, sw_len: f64) -> f64 {
        let (a, b) = (self.shoulder_elbow, self.elbow_wrist);
        ((sw_len * sw_len - a * a - b * b) / (2.0 * a * b)).clamp(-1.0, 1.0)
    }

    /// Shoulder orientation (base to frame 3) with joint 3 at zero that places the
    /// wrist on `sw` for elbow DH angle `q4`.
    fn reference_shoulder(&self, chain: &DHChain, sw: &Vector3<f64>, q4: f64) -> Matrix3<f64> {
        // Shoulder-to-wrist vector in frame 2 with q3 = 0.
        let v2x = -self.elbow_wrist * q4.sin();
        let v2z = self.shoulder_elbow + self.elbow_wrist * q4.cos();
        let rho = sw.x.hypot(sw.y);
        let q1 = if rho > SINGULAR_SINE { sw.y.atan2(sw.x) } else { 0.0 };
        let q2 = rho.atan2(sw.z) - v2x.atan2(v2z);
        let j = chain.joints();
        j[0].transform(q1).rotation * j[1].transform(q2).rotation * j[2].transform(0.0).rotation
    }
}

/// Angles `(first, middle, last)` of `Rz(first) Ry(middle) Rz(last) = m` with the sign
/// of `middle` chosen by `sign`. The flag is set when the middle sine is singular.
fn extract_zyz(m: &Matrix3<f64>, sign: Sign) -> (f64, f64, f64, bool) {
    let s = sign.value();
    let sin_mid = m[(0, 2)].hypot(m[(1, 2)]);
    if sin_mid < SINGULAR_SINE {
        if m[(2, 2)] > 0.0 {
            (m[(1, 0)].atan2(m[(0, 0)]), 0.0, 0.0, true)
        } else {
            ((-m[(1, 0)]).atan2(-m[(0, 0)]), PI, 0.0, true)
        }
    } else {
        let mid = s * sin_mid.atan2(m[(2, 2)]);
        let first = (s * m[(1, 2)]).atan2(s * m[(0, 2)]);
        let last = (s * m[(2, 1)]).atan2(-s * m[(2, 0)]);
        (first, mid, last, false)
    }
}

struct Candidate {
    branch: BranchLabel,
    angle_index: usize,
    arm_angle: f64,
    dh: [f64; 7],
    singular: bool,
}

/// Every in-limit joint solution reaching `request.target`, ordered by branch label
/// and then by the order of `request.arm_angles`.
///
/// The chain's DH home offsets and zero-offsets are subtracted, so the returned
/// configurations are the joint commands for that chain.
pub fn solve_ik(chain: &DHChain, request: &IkRequest) -> Result<IkSolutionSet> {
    let geo = SrsGeometry::from_chain(chain)?;
    if request.arm_angles.is_empty() {
        return Err(Error::InvalidConfig("at least one arm angle is required".into()));
    }
    if let Some(a) = request.arm_angles.iter().find(|a| !(**a > -PI && **a <= PI)) {
        return Err(Error::InvalidConfig(format!(
            "arm angle {a} outside (-pi, pi]"
        )));
    }

    let target = &request.target;
    let sw = geo.wrist_center(target) - geo.shoulder();
    let sw_len = sw.norm();
    let reach = geo.shoulder_elbow + geo.elbow_wrist;
    let min_reach = (geo.shoulder_elbow - geo.elbow_wrist).abs();
    // The singular-elbow band doubles as the reach tolerance.
    const ELBOW_BAND: f64 = 1e-9;
    if sw_len > reach + ELBOW_BAND || sw_len < min_reach.max(ELBOW_BAND) {
        return Err(Error::Unreachable {
            distance: sw_len,
            reach,
        });
    }
    let axis = Unit::new_normalize(sw);
    let elbow_singular = reach - sw_len < ELBOW_BAND;
    let q4_mag = if elbow_singular {
        0.0
    } else {
        geo.cos_elbow(sw_len).acos()
    };

    let joints = chain.joints();
    let mut candidates = Vec::new();
    for elbow in [Sign::Plus, Sign::Minus] {
        if elbow_singular && elbow == Sign::Minus {
            continue;
        }
        let q4 = elbow.value() * q4_mag;
        let reference = geo.reference_shoulder(chain, &sw, q4);
        for (angle_index, &psi) in request.arm_angles.iter().enumerate() {
            let r03 = Rotation3::from_axis_angle(&axis, psi).into_inner() * reference;
            let m_sh = r03 * rot_x(joints[2].alpha).transpose();
            let r04 = r03 * rot_z(q4) * rot_x(joints[3].alpha);
            let r47 = r04.transpose() * target.rotation;
            let m_wr = r47 * rot_x(joints[6].alpha).transpose();
            for shoulder in [Sign::Plus, Sign::Minus] {
                let (q1, q2, q3, sing_s) = extract_zyz(&m_sh, shoulder);
                for wrist in [Sign::Plus, Sign::Minus] {
                    let (q5, q6, q7, sing_w) = extract_zyz(&m_wr, wrist);
                    candidates.push(Candidate {
                        branch: BranchLabel {
                            shoulder,
                            elbow,
                            wrist,
                        },
                        angle_index,
                        arm_angle: psi,
                        dh: [q1, q2, q3, q4, q5, q6, q7],
                        singular: sing_s || sing_w || elbow_singular,
                    });
                }
            }
        }
    }
    candidates.sort_by(|a, b| match a.branch.cmp(&b.branch) {
        Ordering::Equal => a.angle_index.cmp(&b.angle_index),
        o => o,
    });

    let mut out = IkSolutionSet::default();
    for cand in candidates {
        let q: Vec<f64> = cand
            .dh
            .iter()
            .zip(joints)
            .zip(chain.zero_offsets())
            .map(|((th, j), off)| wrap_angle(th - j.theta_home - off))
            .collect();
        let q = JointConfig::new(q);
        if out
            .solutions
            .iter()
            .any(|s| s.q.max_abs_diff(&q) < DUPLICATE_TOL)
        {
            if cand.singular {
                out.diagnostics.singular += 1;
            } else {
                out.diagnostics.duplicates += 1;
            }
            continue;
        }
        if !chain.within_limits(&q) {
            out.diagnostics.out_of_limits += 1;
            continue;
        }
        let reached = chain.flange_unchecked(&q.0);
        let dt = (reached.translation - target.translation).norm();
        let dr = (reached.rotation - target.rotation).norm();
        if !(dt < TRANSLATION_TOL && dr < ROTATION_TOL) {
            out.diagnostics.failed_verification += 1;
            continue;
        }
        out.solutions.push(IkSolution {
            q,
            branch: cand.branch,
            arm_angle: cand.arm_angle,
        });
    }
    Ok(out)
}

/// Arm angle of configuration `q`, in the parameterisation used by [`solve_ik`].
pub fn arm_angle(chain: &DHChain, q: &JointConfig) -> Result<f64> {
    let geo = SrsGeometry::from_chain(chain)?;
    chain.check_config(q)?;
    let frames = chain.frames_unchecked(&q.0);
    let flange = frames[6];
    let sw = geo.wrist_center(&flange) - geo.shoulder();
    let j4 = &chain.joints()[3];
    let q4 = q.0[3] + chain.zero_offsets()[3] + j4.theta_home;
    let reference = geo.reference_shoulder(chain, &sw, q4);
    let m = frames[2].rotation * reference.transpose();
    let u = sw.normalize();
    let sin_psi = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .dot(&u);
    let cos_psi = 0.5 * (m.trace() - 1.0);
    Ok(wrap_angle(sin_psi.atan2(cos_psi)))
}

/// One configuration produced by [`enumerate_configurations`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedConfig {
    pub pose_index: usize,
    pub q: JointConfig,
    pub branch: BranchLabel,
    pub arm_angle: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub configs: Vec<EnumeratedConfig>,
    /// Poses that produced no solution or an error, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub diagnostics: IkDiagnostics,
}

/// Solves every target and concatenates the solution sets, tagging each configuration
/// with its pose index. Failing poses are recorded in `skipped`; the batch never aborts.
pub fn enumerate_configurations(
    chain: &DHChain,
    targets: &[Pose],
    arm_angles: &[f64],
) -> Enumeration {
    let mut out = Enumeration::default();
    for (pose_index, target) in targets.iter().enumerate() {
        let request = IkRequest {
            target: *target,
            arm_angles: arm_angles.to_vec(),
        };
        match solve_ik(chain, &request) {
            Ok(set) => {
                let d = set.diagnostics;
                out.diagnostics.out_of_limits += d.out_of_limits;
                out.diagnostics.singular += d.singular;
                out.diagnostics.duplicates += d.duplicates;
                out.diagnostics.failed_verification += d.failed_verification;
                if set.is_empty() {
                    out.skipped
                        .push((pose_index, "no in-limit solution".to_string()));
                }
                out.configs
                    .extend(set.solutions.into_iter().map(|s| EnumeratedConfig {
                        pose_index,
                        q: s.q,
                        branch: s.branch,
                        arm_angle: s.arm_angle,
                    }));
            }
            Err(e) => out.skipped.push((pose_index, e.to_string())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(chain: &DHChain, rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig::new(
            chain
                .joint_limits()
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect(),
        )
    }

    #[test]
    fn recovers_the_generating_configuration() {
        let chain = DHChain::reference_srs7();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q0 = random_q(&chain, &mut rng);
            let target = forward_kinematics(&chain, &q0).unwrap();
            let psi = arm_angle(&chain, &q0).unwrap();
            let set = solve_ik(
                &chain,
                &IkRequest {
                    target,
                    arm_angles: vec![psi],
                },
            )
            .unwrap();
            assert!(
                set.solutions.iter().any(|s| s.q.max_abs_diff(&q0) < 1e-6),
                "q0 {:?} not among {} solutions",
                q0,
                set.len()
            );
            for s in &set.solutions {
                let p = forward_kinematics(&chain, &s.q).unwrap();
                assert!((p.translation - target.translation).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn respects_zero_offsets_and_home() {
        let chain = DHChain::reference_srs7()
            .with_zero_offsets(&[0.01, -0.02, 0.005, 0.0, 0.03, -0.01, 0.02])
            .unwrap();
        let q0 = JointConfig::new(vec![0.4, 0.7, -0.3, -1.1, 0.6, 0.9, -0.5]);
        let target = forward_kinematics(&chain, &q0).unwrap();
        let psi = arm_angle(&chain, &q0).unwrap();
        let set = solve_ik(
            &chain,
            &IkRequest {
                target,
                arm_angles: vec![psi],
            },
        )
        .unwrap();
        assert!(set.solutions.iter().any(|s| s.q.max_abs_diff(&q0) < 1e-9));
    }

    #[test]
    fn unreachable_target() {
        let chain = DHChain::reference_srs7();
        let target = Pose::from_translation(Vector3::new(0.0, 0.0, 340.0 + 801.0 + 126.0));
        let r = solve_ik(
            &chain,
            &IkRequest {
                target,
                arm_angles: vec![0.0],
            },
        );
        assert!(matches!(r, Err(Error::Unreachable { .. })));
    }

    #[test]
    fn elbow_singular_target_has_one_elbow_branch() {
        let chain = DHChain::reference_srs7();
        // Straight arm tilted by q2; wrist center is exactly 800 mm from the shoulder.
        let q0 = JointConfig::new(vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let target = forward_kinematics(&chain, &q0).unwrap();
        let set = solve_ik(
            &chain,
            &IkRequest {
                target,
                arm_angles: vec![0.0],
            },
        )
        .unwrap();
        assert!(!set.is_empty());
        assert!(set.solutions.iter().all(|s| s.branch.elbow == Sign::Plus));
        assert!(set.solutions.iter().all(|s| s.q.0[3] == 0.0));
    }

    #[test]
    fn rejects_other_topologies_and_bad_angles() {
        let chain = DHChain::reference_srs7();
        let bad = chain
            .clone()
            .with_zero_offsets(&[0.0; 7])
            .unwrap();
        let mut joints = bad.joints().to_vec();
        joints[1].d = 10.0;
        let other = DHChain::new(
            "other",
            joints,
            bad.joint_limits().to_vec(),
            bad.tool_points().clone(),
        )
        .unwrap();
        let req = IkRequest {
            target: Pose::from_translation(Vector3::new(400.0, 0.0, 600.0)),
            arm_angles: vec![0.0],
        };
        assert!(matches!(
            solve_ik(&other, &req),
            Err(Error::UnsupportedTopology(_))
        ));
        let req = IkRequest {
            arm_angles: vec![],
            ..req
        };
        assert!(solve_ik(&chain, &req).is_err());
    }

    #[test]
    fn full_branch_count_for_a_comfortable_pose() {
        // Roomy limits so that every branch survives.
        let base = DHChain::reference_srs7();
        let wide = DHChain::new(
            "wide",
            base.joints().to_vec(),
            vec![(-PI, PI); 7],
            base.tool_points().clone(),
        )
        .unwrap();
        let q0 = JointConfig::new(vec![0.3, 0.8, 0.2, -1.2, 0.4, 0.9, 0.1]);
        let target = forward_kinematics(&wide, &q0).unwrap();
        let e = enumerate_configurations(&wide, &[target], &[0.3]);
        assert_eq!(e.configs.len(), 8);
        let labels: Vec<_> = e.configs.iter().map(|c| c.branch).collect();
        assert_eq!(labels, BranchLabel::all().to_vec());
        assert!(enumerate_configurations(&wide, &[], &[0.3]).configs.is_empty());
    }

    #[test]
    fn default_arm_angles_in_range() {
        let a = default_arm_angles(4);
        assert_eq!(a.len(), 4);
        assert!((a[0] + FRAC_PI_2).abs() < 1e-15);
        assert!(a[1].abs() < 1e-15);
        assert!((a[3] - PI).abs() < 1e-15);
    }

    #[test]
    fn adding_arm_angles_never_removes_solutions() {
        let chain = DHChain::reference_srs7();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let q0 = random_q(&chain, &mut rng);
            let target = forward_kinematics(&chain, &q0).unwrap();
            let few = solve_ik(&chain, &IkRequest { target, arm_angles: vec![0.0, 1.0] }).unwrap();
            let many = solve_ik(
                &chain,
                &IkRequest { target, arm_angles: vec![0.0, 1.0, -2.0, 2.5] },
            )
            .unwrap();
            for s in &few.solutions {
                assert!(many.solutions.iter().any(|m| m.q.max_abs_diff(&s.q) < 1e-12));
            }
            for (i, a) in many.solutions.iter().enumerate() {
                for b in &many.solutions[i + 1..] {
                    assert!(a.q.max_abs_diff(&b.q) >= DUPLICATE_TOL);
                }
            }
        }
    }
}
