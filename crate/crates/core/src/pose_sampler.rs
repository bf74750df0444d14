//! Candidate flange poses from a 4-D Latin hypercube, oriented so the flange z axis
//! faces the reference sensor.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::{solve_ik, IkRequest};
use crate::kinematics::{rot_z, DHChain, Pose};
use crate::rng;

/// Resampling attempts for a row whose facing axis is parallel to base Z.
pub const MAX_RESAMPLES: usize = 10;
const PARALLEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_poses: usize,
    /// Radius in the base XY plane (mm).
    pub r_range: [f64; 2],
    /// Height above the base (mm).
    pub z_range: [f64; 2],
    /// Azimuth about base Z (rad).
    pub theta_z_base_range: [f64; 2],
    /// Roll about the facing axis (rad).
    pub theta_z_tool_range: [f64; 2],
    /// Sensor origin in the robot base frame (mm).
    pub sensor_origin_in_r: [f64; 3],
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_poses: 100,
            r_range: [200.0, 500.0],
            z_range: [400.0, 800.0],
            theta_z_base_range: [0.0, TAU],
            theta_z_tool_range: [0.0, TAU],
            sensor_origin_in_r: [1800.0, 300.0, 900.0],
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_poses == 0 {
            return Err(Error::InvalidConfig("n_poses must be at least 1".into()));
        }
        for (name, [lo, hi]) in [
            ("r_range", self.r_range),
            ("z_range", self.z_range),
            ("theta_z_base_range", self.theta_z_base_range),
            ("theta_z_tool_range", self.theta_z_tool_range),
        ] {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("{name}: min must be below max")));
            }
        }
        Ok(())
    }

    pub fn sensor_origin(&self) -> Vector3<f64> {
        Vector3::from(self.sensor_origin_in_r)
    }

    fn scale(&self, u: &[f64]) -> LhsCoords {
        let lerp = |[lo, hi]: [f64; 2], t: f64| lo + t * (hi - lo);
        LhsCoords {
            theta_z_base: lerp(self.theta_z_base_range, u[0]),
            r: lerp(self.r_range, u[1]),
            z: lerp(self.z_range, u[2]),
            theta_z_tool: lerp(self.theta_z_tool_range, u[3]),
        }
    }
}

/// The four sampled coordinates behind one pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhsCoords {
    pub theta_z_base: f64,
    pub r: f64,
    pub z: f64,
    pub theta_z_tool: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePose {
    pub pose: Pose,
    pub lhs_coords: LhsCoords,
}

/// `n × dims` Latin hypercube in `[0, 1)`: each column holds exactly one value in
/// every interval `[i/n, (i+1)/n)`.
pub fn latin_hypercube(n: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "lhs");
    let (rows, _) = lhs_with_cells(n, dims, &mut rng);
    rows
}

fn lhs_with_cells<R: Rng>(n: usize, dims: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut rows = vec![vec![0.0; dims]; n];
    let mut cells = vec![vec![0usize; dims]; n];
    for d in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, &cell) in perm.iter().enumerate() {
            cells[i][d] = cell;
            rows[i][d] = jitter(cell, n, rng);
        }
    }
    (rows, cells)
}

fn jitter<R: Rng>(cell: usize, n: usize, rng: &mut R) -> f64 {
    let v = (cell as f64 + rng.random::<f64>()) / n as f64;
    // Guard the open upper edge against rounding.
    v.min(((cell + 1) as f64 / n as f64).next_down())
}

/// Sensor-facing pose at polar position `coords`.
///
/// The flange z axis points at `sensor_origin`; x is `z × Z` normalized and y is
/// `z × x`; the frame is then rolled by `theta_z_tool` about its own z axis.
pub fn build_pose(coords: &LhsCoords, sensor_origin: &Vector3<f64>) -> Result<CandidatePose> {
    let (s, c) = coords.theta_z_base.sin_cos();
    let p = Vector3::new(coords.r * c, coords.r * s, coords.z);
    let diff = sensor_origin - p;
    let dist = diff.norm();
    if !(dist > 0.0) {
        return Err(Error::DegeneratePose);
    }
    let z_hat = diff / dist;
    if z_hat.z.abs() >= 1.0 - PARALLEL_TOL {
        return Err(Error::DegeneratePose);
    }
    let x_hat = z_hat.cross(&Vector3::z()).normalize();
    let y_hat = z_hat.cross(&x_hat);
    let facing = Matrix3::from_columns(&[x_hat, y_hat, z_hat]);
    Ok(CandidatePose {
        pose: Pose {
            rotation: facing * rot_z(coords.theta_z_tool),
            translation: p,
        },
        lhs_coords: *coords,
    })
}

#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub candidates: Vec<CandidatePose>,
    /// LHS row indices discarded after exhausting resamples.
    pub discarded_rows: Vec<usize>,
}

/// Samples `config.n_poses` rows and builds their poses, resampling degenerate rows
/// inside their own cells up to [`MAX_RESAMPLES`] times.
pub fn generate_candidates(config: &SamplerConfig) -> Result<CandidateSet> {
    config.validate()?;
    let n = config.n_poses;
    let mut rng = rng::stream(config.seed, "lhs");
    let (rows, cells) = lhs_with_cells(n, 4, &mut rng);
    let origin = config.sensor_origin();
    let mut out = CandidateSet::default();
    for (i, (row, cell)) in rows.into_iter().zip(cells).enumerate() {
        let mut row = row;
        let mut built = build_pose(&config.scale(&row), &origin);
        let mut attempts = 0;
        while built.is_err() && attempts < MAX_RESAMPLES {
            row = cell.iter().map(|&c| jitter(c, n, &mut rng)).collect();
            built = build_pose(&config.scale(&row), &origin);
            attempts += 1;
        }
        match built {
            Ok(c) => out.candidates.push(c),
            Err(_) => out.discarded_rows.push(i),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub retained: Vec<CandidatePose>,
    /// Index into the input list and the reason for discarding it.
    pub discarded: Vec<(usize, String)>,
}

/// Keeps candidates with at least one in-limit IK solution, preserving order.
pub fn filter_feasible(
    candidates: &[CandidatePose],
    chain: &DHChain,
    arm_angles: &[f64],
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (i, c) in candidates.iter().enumerate() {
        let request = IkRequest {
            target: c.pose,
            arm_angles: arm_angles.to_vec(),
        };
        match solve_ik(chain, &request) {
            Ok(set) if !set.is_empty() => out.retained.push(c.clone()),
            Ok(_) => out.discarded.push((i, "no in-limit solution".into())),
            Err(e) => out.discarded.push((i, e.to_string())),
        }
    }
    out
}
