//! Residuals, cost and posterior of the zero-offset model, sampled with a random-walk
//! Metropolis chain.
//!
//! The model maps every robot marker point into the sensor frame as
//! `T*(theta1) * initial * tool_point(chain with theta2, q)` and treats the
//! difference to the measured point as isotropic Gaussian noise with scale `sigma`.
//! With a flat prior on the offsets and correction and a Jeffreys prior on `sigma`,
//! the log-posterior is `(-3n - 2) ln(sigma) - E / (2 sigma²)` up to a constant.
//!
//! The sampler works in "sampling units": millimeters for `x, y, z` and `sigma`,
//! degrees for every angle. One proposal width applies to all parameters in those
//! units.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{DHChain, JointConfig};
use crate::registration::{map_robot_point, RegistrationCorrection, RigidTransform};
use crate::rng;
use crate::stats::{mean, neumaier_sum, std_dev};

/// One paired measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub pose_index: usize,
    pub q: JointConfig,
    /// Marker position measured by the reference sensor, sensor frame (mm).
    pub p_ref: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    records: Vec<DatasetRecord>,
    marker_name: String,
}

impl CalibrationDataset {
    pub fn new(records: Vec<DatasetRecord>, marker_name: impl Into<String>) -> Result<Self> {
        let first = records
            .first()
            .ok_or(Error::Empty("dataset has no records"))?;
        let k = first.q.len();
        for r in &records {
            if r.q.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: r.q.len(),
                });
            }
            if !r.p_ref.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "non-finite reference point in pose {}",
                    r.pose_index
                )));
            }
        }
        Ok(Self {
            records,
            marker_name: marker_name.into(),
        })
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn marker_name(&self) -> &str {
        &self.marker_name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.records[0].q.len()
    }

    pub fn reference_points(&self) -> Vec<Vector3<f64>> {
        self.records.iter().map(|r| r.p_ref).collect()
    }
}

/// Full MCMC state: registration correction, zero-offsets (rad) and noise scale (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub theta1: RegistrationCorrection,
    pub theta2: Vec<f64>,
    pub sigma: f64,
}

impl ParameterVector {
    /// Starting point used by the sampler: everything zero, `sigma` = 1 mm.
    pub fn initial(k: usize) -> Self {
        Self {
            theta1: RegistrationCorrection::default(),
            theta2: vec![0.0; k],
            sigma: 1.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.theta2.len()
    }

    /// `[x, y, z (mm), alpha, beta, gamma (deg), zero-offsets (deg)..., sigma (mm)]`.
    pub fn to_sampling(&self) -> Vec<f64> {
        let t = &self.theta1;
        let mut v = vec![
            t.x,
            t.y,
            t.z,
            t.alpha.to_degrees(),
            t.beta.to_degrees(),
            t.gamma.to_degrees(),
        ];
        v.extend(self.theta2.iter().map(|a| a.to_degrees()));
        v.push(self.sigma);
        v
    }

    pub fn from_sampling(v: &[f64]) -> Self {
        let k = v.len() - 7;
        Self {
            theta1: RegistrationCorrection {
                x: v[0],
                y: v[1],
                z: v[2],
                alpha: v[3].to_radians(),
                beta: v[4].to_radians(),
                gamma: v[5].to_radians(),
            },
            theta2: v[6..6 + k].iter().map(|a| a.to_radians()).collect(),
            sigma: v[6 + k],
        }
    }

    /// `[x, y, z (mm), alpha, beta, gamma (rad), zero-offsets (rad)..., sigma (mm)]`,
    /// the in-memory units; lossless in both directions.
    pub fn to_flat(&self) -> Vec<f64> {
        let t = &self.theta1;
        let mut v = vec![t.x, t.y, t.z, t.alpha, t.beta, t.gamma];
        v.extend_from_slice(&self.theta2);
        v.push(self.sigma);
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        let k = v.len() - 7;
        Self {
            theta1: RegistrationCorrection {
                x: v[0],
                y: v[1],
                z: v[2],
                alpha: v[3],
                beta: v[4],
                gamma: v[5],
            },
            theta2: v[6..6 + k].to_vec(),
            sigma: v[6 + k],
        }
    }

    /// Column names matching [`ParameterVector::to_flat`].
    pub fn flat_names(k: usize) -> Vec<String> {
        let mut names: Vec<String> = ["x_mm", "y_mm", "z_mm", "alpha_rad", "beta_rad", "gamma_rad"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend((1..=k).map(|i| format!("dtheta{i}_rad")));
        names.push("sigma_mm".into());
        names
    }

    /// Column names matching [`ParameterVector::to_sampling`].
    pub fn sampling_names(k: usize) -> Vec<String> {
        let mut names: Vec<String> = ["x_mm", "y_mm", "z_mm", "alpha_deg", "beta_deg", "gamma_deg"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend((1..=k).map(|i| format!("dtheta{i}_deg")));
        names.push("sigma_mm".into());
        names
    }
}

/// Residual rows `p_ref - p_robot`, one per record (mm).
pub type ResidualMatrix = Vec<Vector3<f64>>;

fn check_dims(dataset: &CalibrationDataset, chain: &DHChain, params: &ParameterVector) -> Result<()> {
    if dataset.dof() != chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: chain.dof(),
            actual: dataset.dof(),
        });
    }
    if params.dof() != chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: chain.dof(),
            actual: params.dof(),
        });
    }
    Ok(())
}

pub fn residual_matrix(
    dataset: &CalibrationDataset,
    chain: &DHChain,
    initial: &RigidTransform,
    params: &ParameterVector,
) -> Result<ResidualMatrix> {
    check_dims(dataset, chain, params)?;
    let calibrated = chain.with_zero_offsets(&params.theta2)?;
    let marker = chain.tool_point_offset(dataset.marker_name())?;
    dataset
        .records()
        .iter()
        .map(|r| {
            calibrated.check_config(&r.q)?;
            let p_robot = calibrated.flange_unchecked(&r.q.0).transform_point(&marker);
            Ok(r.p_ref - map_robot_point(initial, &params.theta1, &p_robot))
        })
        .collect()
}

/// Sum of squared row norms (mm²), compensated summation in row order.
pub fn cost(residuals: &[Vector3<f64>]) -> f64 {
    neumaier_sum(residuals.iter().map(|e| e.norm_squared()))
}

/// `(-3n - 2) ln(sigma) - cost / (2 sigma²)`.
pub fn log_posterior_from_cost(n: usize, cost: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    Ok(-(3.0 * n as f64 + 2.0) * sigma.ln() - cost / (2.0 * sigma * sigma))
}

pub fn log_posterior(
    dataset: &CalibrationDataset,
    chain: &DHChain,
    initial: &RigidTransform,
    params: &ParameterVector,
) -> Result<f64> {
    if !(params.sigma > 0.0) {
        return Err(Error::NonPositiveSigma(params.sigma));
    }
    let e = residual_matrix(dataset, chain, initial, params)?;
    log_posterior_from_cost(dataset.len(), cost(&e), params.sigma)
}

/// Posterior ratio evaluated without logarithms:
/// `(sigma_p / sigma)^(-3n-2) * exp(-cost_p / (2 sigma_p²) + cost / (2 sigma²))`.
///
/// Overflows for realistic `n`; kept as a reference for the log-space sampler.
pub fn acceptance_ratio_direct(n: usize, cost_p: f64, sigma_p: f64, cost: f64, sigma: f64) -> f64 {
    let expo = -(3.0 * n as f64) - 2.0;
    (sigma_p / sigma).powf(expo)
        * (-cost_p / (2.0 * sigma_p * sigma_p) + cost / (2.0 * sigma * sigma)).exp()
}

/// Unnormalized log-density over a flat parameter vector.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// `f64::NEG_INFINITY` marks an inadmissible point (always rejected).
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Calibration posterior in sampling units (see [`ParameterVector::to_sampling`]).
pub struct CalibrationPosterior<'a> {
    dataset: &'a CalibrationDataset,
    chain: &'a DHChain,
    initial: RigidTransform,
    marker: Vector3<f64>,
}

impl<'a> CalibrationPosterior<'a> {
    pub fn new(
        dataset: &'a CalibrationDataset,
        chain: &'a DHChain,
        initial: &RigidTransform,
    ) -> Result<Self> {
        if dataset.dof() != chain.dof() {
            return Err(Error::DimensionMismatch {
                expected: chain.dof(),
                actual: dataset.dof(),
            });
        }
        for r in dataset.records() {
            chain.check_config(&r.q)?;
        }
        Ok(Self {
            dataset,
            chain,
            initial: *initial,
            marker: chain.tool_point_offset(dataset.marker_name())?,
        })
    }

    pub fn cost_of(&self, params: &ParameterVector) -> f64 {
        let t = params.theta1.to_transform() * self.initial;
        neumaier_sum(self.dataset.records().iter().map(|r| {
            let p = self
                .chain
                .flange_with_offsets(&r.q.0, &params.theta2)
                .transform_point(&self.marker);
            (r.p_ref - t.transform_point(&p)).norm_squared()
        }))
    }
}

impl LogDensity for CalibrationPosterior<'_> {
    fn dim(&self) -> usize {
        self.chain.dof() + 7
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let params = ParameterVector::from_sampling(x);
        if !(params.sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let c = self.cost_of(&params);
        log_posterior_from_cost(self.dataset.len(), c, params.sigma).unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    /// Half-width of the uniform additive proposal, in sampling units.
    pub proposal_width: f64,
    pub seed: u64,
    /// Starting state; `None` means [`ParameterVector::initial`].
    #[serde(default)]
    pub init: Option<ParameterVector>,
}

impl McmcConfig {
    /// 2×10⁴ steps, 75% burn-in.
    pub fn ci(seed: u64) -> Self {
        Self {
            n_steps: 20_000,
            burn_in: 15_000,
            proposal_width: 0.0125,
            seed,
            init: None,
        }
    }

    /// 2×10⁵ steps, 1.75×10⁵ burn-in.
    pub fn paper(seed: u64) -> Self {
        Self {
            n_steps: 200_000,
            burn_in: 175_000,
            proposal_width: 0.0125,
            seed,
            init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_steps > self.burn_in) {
            return Err(Error::InvalidConfig(format!(
                "n_steps ({}) must exceed burn_in ({})",
                self.n_steps, self.burn_in
            )));
        }
        if !(self.proposal_width > 0.0 && self.proposal_width.is_finite()) {
            return Err(Error::InvalidConfig("proposal_width must be positive".into()));
        }
        Ok(())
    }
}

/// Raw chain over flat vectors: the state after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub states: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    pub log_density: Vec<f64>,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len().max(1) as f64
    }
}

/// Random-walk Metropolis with independent `U(-width, width)` increments on every
/// coordinate, all proposed jointly. The acceptance test is `ln u < Δ log-density`.
pub fn metropolis<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    n_steps: usize,
    width: f64,
    seed: u64,
) -> Result<Chain> {
    if init.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            actual: init.len(),
        });
    }
    let mut current = init.to_vec();
    let mut current_lp = target.log_density(&current);
    if !current_lp.is_finite() {
        return Err(Error::InvalidConfig(
            "initial state has non-finite log density".into(),
        ));
    }
    let mut rng = rng::stream(seed, "metropolis");
    let mut out = Chain {
        states: Vec::with_capacity(n_steps),
        accepted: Vec::with_capacity(n_steps),
        log_density: Vec::with_capacity(n_steps),
    };
    let mut proposal = vec![0.0; current.len()];
    for _ in 0..n_steps {
        for (p, c) in proposal.iter_mut().zip(&current) {
            *p = c + rng.random_range(-width..width);
        }
        let lp = target.log_density(&proposal);
        let u: f64 = rng.random();
        let accept = lp.is_finite() && u.ln() < lp - current_lp;
        if accept {
            current.copy_from_slice(&proposal);
            current_lp = lp;
        }
        out.states.push(current.clone());
        out.accepted.push(accept);
        out.log_density.push(current_lp);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    pub samples: Vec<ParameterVector>,
    pub accepted: Vec<bool>,
    pub log_posterior: Vec<f64>,
    pub seed: u64,
    pub proposal_width: f64,
    pub n_steps: usize,
    pub burn_in: usize,
}

impl PosteriorTrace {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len().max(1) as f64
    }

    pub fn dof(&self) -> usize {
        self.samples.first().map_or(0, |s| s.dof())
    }
}

pub fn metropolis_sample(
    dataset: &CalibrationDataset,
    chain: &DHChain,
    initial: &RigidTransform,
    config: &McmcConfig,
) -> Result<PosteriorTrace> {
    config.validate()?;
    let posterior = CalibrationPosterior::new(dataset, chain, initial)?;
    let init = config
        .init
        .clone()
        .unwrap_or_else(|| ParameterVector::initial(chain.dof()));
    if init.dof() != chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: chain.dof(),
            actual: init.dof(),
        });
    }
    let raw = metropolis(
        &posterior,
        &init.to_sampling(),
        config.n_steps,
        config.proposal_width,
        config.seed,
    )?;
    Ok(PosteriorTrace {
        samples: raw
            .states
            .iter()
            .map(|s| ParameterVector::from_sampling(s))
            .collect(),
        accepted: raw.accepted,
        log_posterior: raw.log_density,
        seed: config.seed,
        proposal_width: config.proposal_width,
        n_steps: config.n_steps,
        burn_in: config.burn_in,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Post-burn-in sample means.
    pub mle: ParameterVector,
    /// Post-burn-in sample standard deviations, same layout and units as `mle`.
    pub std: ParameterVector,
    pub post_burn_in_samples: Vec<ParameterVector>,
    pub acceptance_rate: f64,
}

impl CalibrationResult {
    pub fn dof(&self) -> usize {
        self.mle.dof()
    }
}

/// Means and standard deviations over samples `[burn_in, n_steps)`.
pub fn summarize(trace: &PosteriorTrace, burn_in: usize) -> Result<CalibrationResult> {
    if burn_in >= trace.samples.len() {
        return Err(Error::InvalidConfig(format!(
            "burn_in {burn_in} leaves no samples out of {}",
            trace.samples.len()
        )));
    }
    let kept = &trace.samples[burn_in..];
    let dim = trace.dof() + 7;
    let cols: Vec<Vec<f64>> = (0..dim)
        .map(|j| kept.iter().map(|s| s.to_sampling()[j]).collect())
        .collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let stds: Vec<f64> = cols.iter().map(|c| std_dev(c)).collect();
    Ok(CalibrationResult {
        mle: ParameterVector::from_sampling(&means),
        std: ParameterVector::from_sampling(&stds),
        post_burn_in_samples: kept.to_vec(),
        acceptance_rate: trace.acceptance_rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scene(chain: &DHChain, offsets: &[f64]) -> CalibrationDataset {
        let truth = chain.with_zero_offsets(offsets).unwrap();
        let qs = [
            [0.1, 0.5, -0.2, -1.0, 0.3, 0.8, 0.4],
            [-0.6, 0.9, 0.4, -0.7, -0.5, 0.2, -1.1],
            [1.2, 0.3, -0.9, -1.5, 0.9, -0.6, 2.0],
            [0.4, -0.7, 0.1, 1.1, -1.2, 1.0, 0.0],
        ];
        let records = qs
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let q = JointConfig::new(q.to_vec());
                let p = truth
                    .flange_unchecked(&q.0)
                    .transform_point(&chain.tool_point_offset("smr").unwrap());
                DatasetRecord {
                    pose_index: i,
                    q,
                    p_ref: p,
                }
            })
            .collect();
        CalibrationDataset::new(records, "smr").unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(CalibrationDataset::new(vec![], "smr").is_err());
        let r = |k: usize| DatasetRecord {
            pose_index: 0,
            q: JointConfig::new(vec![0.0; k]),
            p_ref: Vector3::zeros(),
        };
        assert!(CalibrationDataset::new(vec![r(7), r(6)], "smr").is_err());
        let mut bad = r(7);
        bad.p_ref.x = f64::NAN;
        assert!(CalibrationDataset::new(vec![bad], "smr").is_err());
    }

    #[test]
    fn residuals_vanish_at_the_generating_parameters() {
        let chain = DHChain::reference_srs7();
        let ds = scene(&chain, &[0.0; 7]);
        let e = residual_matrix(&ds, &chain, &Pose::identity(), &ParameterVector::initial(7))
            .unwrap();
        assert!(e.iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn perturbing_an_offset_grows_with_lever_arm() {
        let chain = DHChain::reference_srs7();
        let ds = scene(&chain, &[0.0; 7]);
        let mut p = ParameterVector::initial(7);
        p.theta2[0] = 0.477f64.to_radians();
        let e = residual_matrix(&ds, &chain, &Pose::identity(), &p).unwrap();
        // A base rotation moves each point by 2 r sin(δ/2), r = distance from the base Z axis.
        for (row, rec) in e.iter().zip(ds.records()) {
            let r = rec.p_ref.x.hypot(rec.p_ref.y);
            let expected = 2.0 * r * (p.theta2[0] / 2.0).sin();
            assert!((row.norm() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn cost_cases() {
        assert_eq!(cost(&[Vector3::zeros(); 4]), 0.0);
        assert_eq!(cost(&[Vector3::new(3.0, 4.0, 0.0)]), 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m: Vec<Vector3<f64>> = (0..50)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let mut naive = 0.0;
        for row in &m {
            for j in 0..3 {
                naive += row[j] * row[j];
            }
        }
        assert!((cost(&m) - naive).abs() < 1e-12);
    }

    #[test]
    fn log_posterior_closed_forms() {
        assert_eq!(log_posterior_from_cost(1, 0.0, 1.0).unwrap(), 0.0);
        let v = log_posterior_from_cost(2, 8.0, 2.0).unwrap();
        assert!((v - (-8.0 * 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!(matches!(
            log_posterior_from_cost(2, 8.0, 0.0),
            Err(Error::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn log_space_ratio_matches_direct_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.random_range(1..=3);
            let (c, cp) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
            let (s, sp) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
            let via_log = (log_posterior_from_cost(n, cp, sp).unwrap()
                - log_posterior_from_cost(n, c, s).unwrap())
            .exp();
            let direct = acceptance_ratio_direct(n, cp, sp, c, s);
            assert!(((via_log - direct) / direct).abs() < 1e-10);
        }
    }

    #[test]
    fn fast_cost_matches_residual_path() {
        let chain = DHChain::reference_srs7();
        let ds = scene(&chain, &[0.01, 0.0, -0.02, 0.0, 0.0, 0.01, 0.0]);
        let initial = Pose::from_euler_zyx(Vector3::new(10.0, -5.0, 3.0), 0.1, 0.0, -0.2);
        let mut p = ParameterVector::initial(7);
        p.theta1.x = 0.3;
        p.theta1.beta = 0.002;
        p.theta2[3] = 0.004;
        let post = CalibrationPosterior::new(&ds, &chain, &initial).unwrap();
        let slow = cost(&residual_matrix(&ds, &chain, &initial, &p).unwrap());
        assert!((post.cost_of(&p) - slow).abs() < 1e-9 * slow.max(1.0));
        let lp = log_posterior(&ds, &chain, &initial, &p).unwrap();
        assert!((post.log_density(&p.to_sampling()) - lp).abs() < 1e-9 * lp.abs());
    }

    #[test]
    fn sampling_units_round_trip() {
        let p = ParameterVector {
            theta1: RegistrationCorrection {
                x: 1.0,
                y: 2.0,
                z: 3.0,
                alpha: 0.1,
                beta: 0.2,
                gamma: 0.3,
            },
            theta2: vec![0.01; 7],
            sigma: 0.5,
        };
        let v = p.to_sampling();
        assert_eq!(v.len(), 14);
        assert!((v[3] - 0.1f64.to_degrees()).abs() < 1e-12);
        let back = ParameterVector::from_sampling(&v);
        assert!((back.theta1.alpha - 0.1).abs() < 1e-15);
        assert_eq!(ParameterVector::sampling_names(7).len(), 14);
    }

    struct Flat;
    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            3
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            // last coordinate plays sigma
            if x[2] > 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }

    #[test]
    fn flat_target_accepts_everything_admissible() {
        let chain = metropolis(&Flat, &[0.0, 0.0, 1.0], 5000, 0.0125, 3).unwrap();
        assert_eq!(chain.acceptance_rate(), 1.0);
        // Start sigma next to zero so some proposals are inadmissible.
        let chain = metropolis(&Flat, &[0.0, 0.0, 0.005], 5000, 0.0125, 3).unwrap();
        let rejected: Vec<_> = chain
            .accepted
            .iter()
            .zip(&chain.states)
            .filter(|(a, _)| !**a)
            .collect();
        assert!(!rejected.is_empty());
        assert!(chain.states.iter().all(|s| s[2] > 0.0));
        assert!(chain.acceptance_rate() > 0.5);
    }

    #[test]
    fn same_seed_same_chain() {
        let a = metropolis(&Flat, &[0.0, 0.0, 1.0], 1000, 0.1, 8).unwrap();
        let b = metropolis(&Flat, &[0.0, 0.0, 1.0], 1000, 0.1, 8).unwrap();
        assert_eq!(a, b);
        let c = metropolis(&Flat, &[0.0, 0.0, 1.0], 1000, 0.1, 9).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        let mut c = McmcConfig::ci(1);
        assert!(c.validate().is_ok());
        c.burn_in = c.n_steps;
        assert!(c.validate().is_err());
        assert_eq!(McmcConfig::paper(1).burn_in, 175_000);
    }

    fn trace_of(samples: Vec<ParameterVector>) -> PosteriorTrace {
        let n = samples.len();
        PosteriorTrace {
            samples,
            accepted: vec![true; n],
            log_posterior: vec![0.0; n],
            seed: 0,
            proposal_width: 0.0125,
            n_steps: n,
            burn_in: 0,
        }
    }

    #[test]
    fn summarize_constant_trace() {
        let mut p = ParameterVector::initial(7);
        p.theta2[2] = 0.003;
        let r = summarize(&trace_of(vec![p.clone(); 100]), 10).unwrap();
        assert_eq!(r.post_burn_in_samples.len(), 90);
        assert!((r.mle.theta2[2] - 0.003).abs() < 1e-15);
        assert!(r.std.to_sampling().iter().all(|s| *s == 0.0));
        assert!(summarize(&trace_of(vec![p; 10]), 10).is_err());
    }

    #[test]
    fn summarize_gaussian_stub() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<ParameterVector> = (0..20_000)
            .map(|_| {
                let mut v = vec![0.0; 14];
                for (j, x) in v.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = j as f64 + 0.5 * z;
                }
                let z: f64 = StandardNormal.sample(&mut rng);
                v[13] = 2.0 + 0.1 * z;
                ParameterVector::from_sampling(&v)
            })
            .collect();
        let r = summarize(&trace_of(samples), 0).unwrap();
        let m = r.mle.to_sampling();
        let s = r.std.to_sampling();
        // Standard error of the mean is 0.5 / sqrt(20000) ≈ 0.0035.
        for j in 0..13 {
            assert!((m[j] - j as f64).abs() < 0.02, "mean {j}: {}", m[j]);
            assert!((s[j] - 0.5).abs() < 0.02, "std {j}: {}", s[j]);
        }
        assert!((m[13] - 2.0).abs() < 0.01);
    }
}
