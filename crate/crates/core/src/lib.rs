//! Zero-offset calibration for serial robot arms.
//!
//! The crate covers the whole remastering loop against a simulated robot:
//!
//! - [`kinematics`]: standard DH forward kinematics with additive joint zero-offsets.
//! - [`ik`]: closed-form inverse kinematics for a 7-DoF S-R-S arm, enumerating every branch.
//! - [`pose_sampler`]: Latin hypercube pose generation with sensor-facing orientations.
//! - [`registration`]: three-point sensor/robot registration and the 6-DoF correction.
//! - [`calibration`]: cost, log-posterior and a Metropolis sampler over offsets, correction and noise.
//! - [`metrics`]: relative, post-registration and theoretical positioning accuracy.
//! - [`harness`]: a ground-truth scene simulator and the end-to-end experiment driver.
//! - [`io`]: dataset, trace and report file formats.
//!
//! Lengths are millimeters everywhere. Angles are radians in memory and degrees in
//! reports and in the chain config file's `zero_offsets_deg`.

pub mod calibration;
pub mod error;
pub mod harness;
pub mod ik;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod pose_sampler;
pub mod registration;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use kinematics::{DHChain, DHJoint, JointConfig, Pose};
