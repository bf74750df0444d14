//! Simulated robot and sensor, and the end-to-end calibration experiment.
//!
//! The scene holds the truth the calibration is supposed to recover: the offsets the
//! physical joints really have and where the sensor really is. The experiment only
//! ever sees the nominal chain, joint readings and noisy sensor points.

use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    metropolis_sample, residual_matrix, summarize, CalibrationDataset, CalibrationResult,
    DatasetRecord, McmcConfig, ParameterVector,
};
use crate::error::{Error, Result};
use crate::ik::{default_arm_angles, enumerate_configurations, EnumeratedConfig};
use crate::kinematics::{ChainFile, DHChain, JointConfig, Pose};
use crate::metrics::{
    post_registration_accuracy, random_configs, relative_accuracy, theoretical_accuracy,
    AccuracySummary, Baseline, DrawMode, PointPair, TheoreticalOptions,
};
use crate::pose_sampler::{filter_feasible, generate_candidates, SamplerConfig};
use crate::registration::{max_area_triple, register_three_points, RigidTransform};
use crate::io;
use crate::rng;

/// Reference offsets injected by the default scenes (deg).
pub const REFERENCE_OFFSETS_DEG: [f64; 7] = [0.477, -0.192, 0.139, 0.099, 0.392, -0.114, 0.936];

/// Stream index where validation measurements start, so the two datasets never share noise.
pub const VALIDATION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub label: String,
    /// The model the robot controller believes in; its own offsets are the factory values.
    pub chain_nominal: DHChain,
    /// Offsets the physical joints actually have, added to the nominal ones (deg).
    pub true_offsets_deg: Vec<f64>,
    /// Where the sensor really sits, seen from the robot base.
    pub sensor_in_robot: PoseEntry,
    pub sensor_noise_sigma: f64,
    /// Extra noise on the three registration points (mm).
    pub registration_noise_sigma: f64,
    pub marker: String,
    pub seed: u64,
}

impl SceneConfig {
    /// Motion-capture-like scene: infrared marker, 0.1 mm noise.
    pub fn motion_capture() -> Self {
        Self {
            label: "motion_capture".into(),
            chain_nominal: DHChain::reference_srs7(),
            true_offsets_deg: REFERENCE_OFFSETS_DEG.to_vec(),
            sensor_in_robot: PoseEntry {
                translation_mm: [1800.0, 300.0, 900.0],
                euler_zyx_deg: [170.0, 10.0, -5.0],
            },
            sensor_noise_sigma: 0.1,
            registration_noise_sigma: 1.0,
            marker: "sir".into(),
            seed: 1,
        }
    }

    /// Laser-tracker-like scene: retroreflector on the other side of the plate, 0.05 mm noise.
    pub fn laser_tracker() -> Self {
        Self {
            label: "laser_tracker".into(),
            sensor_noise_sigma: 0.05,
            marker: "smr".into(),
            seed: 2,
            ..Self::motion_capture()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_offsets_deg.len() != self.chain_nominal.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.chain_nominal.dof(),
                actual: self.true_offsets_deg.len(),
            });
        }
        if !(self.sensor_noise_sigma >= 0.0) || !(self.registration_noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        let placement = self.sensor_in_robot;
        if !placement.translation_mm.iter().chain(&placement.euler_zyx_deg).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("sensor placement must be finite".into()));
        }
        self.chain_nominal.tool_point_offset(&self.marker)?;
        Ok(())
    }

    /// The chain the simulated hardware actually follows.
    pub fn true_chain(&self) -> Result<DHChain> {
        let offsets: Vec<f64> = self
            .chain_nominal
            .zero_offsets()
            .iter()
            .zip(&self.true_offsets_deg)
            .map(|(n, t)| n + t.to_radians())
            .collect();
        self.chain_nominal.with_zero_offsets(&offsets)
    }

    /// Maps robot base coordinates into the sensor frame.
    pub fn true_sensor_pose(&self) -> RigidTransform {
        self.sensor_in_robot.to_pose().inverse()
    }

    /// Sensor origin in the robot base frame.
    pub fn sensor_origin_in_robot(&self) -> Vector3<f64> {
        Vector3::from(self.sensor_in_robot.translation_mm)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(s)?;
        file.try_into()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&SceneFile::from(self)).expect("scene file serializes")
    }
}

/// On-disk scene. The sensor pose is given as the sensor frame seen from the robot base.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub label: String,
    pub marker: String,
    pub sensor_noise_sigma_mm: f64,
    pub registration_noise_sigma_mm: f64,
    pub true_offsets_deg: Vec<f64>,
    pub seed: u64,
    pub sensor_in_robot: PoseEntry,
    pub chain: ChainFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub translation_mm: [f64; 3],
    /// `[gamma, theta, phi]` for `Rz(gamma) Ry(theta) Rx(phi)`.
    pub euler_zyx_deg: [f64; 3],
}

impl PoseEntry {
    pub fn identity() -> Self {
        PoseEntry {
            translation_mm: [0.0; 3],
            euler_zyx_deg: [0.0; 3],
        }
    }

    pub fn to_pose(&self) -> Pose {
        let [g, t, p] = self.euler_zyx_deg.map(f64::to_radians);
        Pose::from_euler_zyx(Vector3::from(self.translation_mm), g, t, p)
    }
}

impl From<&SceneConfig> for SceneFile {
    fn from(s: &SceneConfig) -> Self {
        SceneFile {
            label: s.label.clone(),
            marker: s.marker.clone(),
            sensor_noise_sigma_mm: s.sensor_noise_sigma,
            registration_noise_sigma_mm: s.registration_noise_sigma,
            true_offsets_deg: s.true_offsets_deg.clone(),
            seed: s.seed,
            sensor_in_robot: s.sensor_in_robot,
            chain: ChainFile::from(&s.chain_nominal),
        }
    }
}

impl TryFrom<SceneFile> for SceneConfig {
    type Error = Error;

    fn try_from(f: SceneFile) -> Result<Self> {
        let scene = SceneConfig {
            label: f.label,
            chain_nominal: f.chain.try_into()?,
            true_offsets_deg: f.true_offsets_deg,
            sensor_in_robot: f.sensor_in_robot,
            sensor_noise_sigma: f.sensor_noise_sigma_mm,
            registration_noise_sigma: f.registration_noise_sigma_mm,
            marker: f.marker,
            seed: f.seed,
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn gaussian3(seed: u64, label: &str, index: u64, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let mut r = rng::stream_at(seed, label, index);
    let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut r));
    sigma * Vector3::from(v)
}

/// Sensor reading of the scene marker at `q`. The noise depends only on the scene seed
/// and `index`, so repeating a call repeats the reading.
pub fn simulate_measurement(scene: &SceneConfig, q: &JointConfig, index: u64) -> Result<Vector3<f64>> {
    let truth = scene.true_chain()?;
    simulate_with(scene, &truth, q, index)
}

fn simulate_with(
    scene: &SceneConfig,
    truth: &DHChain,
    q: &JointConfig,
    index: u64,
) -> Result<Vector3<f64>> {
    let p = crate::kinematics::tool_point(truth, q, &scene.marker)?;
    Ok(scene.true_sensor_pose().transform_point(&p)
        + gaussian3(scene.seed, "sensor_noise", index, scene.sensor_noise_sigma))
}

/// One record per configuration; record `i` uses noise index `first_index + i`.
pub fn build_dataset(
    scene: &SceneConfig,
    configs: &[EnumeratedConfig],
    first_index: u64,
) -> Result<CalibrationDataset> {
    if configs.is_empty() {
        return Err(Error::Empty("no configurations to measure"));
    }
    let truth = scene.true_chain()?;
    let records = configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            // Readings are stored at file resolution, so a saved dataset reloads to the
            // exact values the experiment used.
            let q = JointConfig::new(c.q.angles().iter().map(|&a| io::quantize_rad(a)).collect());
            let p = simulate_with(scene, &truth, &q, first_index + i as u64)?;
            Ok(DatasetRecord {
                pose_index: c.pose_index,
                q,
                p_ref: p.map(io::quantize_mm),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationDataset::new(records, scene.marker.clone())
}

/// Parameters under which the nominal model reproduces the noiseless measurements
/// exactly, given an initial registration.
pub fn ground_truth_params(scene: &SceneConfig, initial: &RigidTransform) -> Result<ParameterVector> {
    let correction = scene.true_sensor_pose() * initial.inverse();
    Ok(ParameterVector {
        theta1: crate::registration::RegistrationCorrection::from_transform(&correction)?,
        theta2: scene
            .true_offsets_deg
            .iter()
            .map(|d| d.to_radians())
            .collect(),
        sigma: scene.sensor_noise_sigma.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub optimization_poses: usize,
    pub validation_poses: usize,
    pub n_arm_angles: usize,
    /// LHS rows drawn per set; the first feasible ones are kept.
    pub sampler: SamplerConfig,
    pub mcmc: McmcConfig,
    pub theoretical_draws: usize,
    pub theoretical_configs: usize,
    #[serde(default)]
    pub draw_mode: DrawMode,
}

impl ExperimentConfig {
    /// 2×10⁴ steps, 75% burn-in.
    pub fn ci(seed: u64) -> Self {
        Self {
            optimization_poses: 36,
            validation_poses: 32,
            n_arm_angles: 2,
            sampler: SamplerConfig {
                seed,
                ..SamplerConfig::default()
            },
            mcmc: McmcConfig::ci(seed),
            theoretical_draws: 2000,
            theoretical_configs: 1000,
            draw_mode: DrawMode::Rows,
        }
    }

    /// 2×10⁵ steps, 87.5% burn-in.
    pub fn paper(seed: u64) -> Self {
        Self {
            mcmc: McmcConfig::paper(seed),
            ..Self::ci(seed)
        }
    }
}

/// Feasible poses for one set and their enumerated configurations.
#[derive(Debug, Clone)]
pub struct PoseSet {
    pub poses: Vec<Pose>,
    pub configs: Vec<EnumeratedConfig>,
}

/// Samples candidates, keeps the first `n_poses` that have an in-limit IK solution and
/// enumerates all their configurations. Pose indices refer to the kept list.
pub fn generate_pose_set(
    chain: &DHChain,
    sampler: &SamplerConfig,
    n_poses: usize,
    n_arm_angles: usize,
) -> Result<PoseSet> {
    let arm_angles = default_arm_angles(n_arm_angles);
    let candidates = generate_candidates(sampler)?;
    let feasible = filter_feasible(&candidates.candidates, chain, &arm_angles);
    if feasible.retained.len() < n_poses {
        return Err(Error::InvalidConfig(format!(
            "only {} of {} sampled poses are reachable, {n_poses} requested",
            feasible.retained.len(),
            sampler.n_poses
        )));
    }
    let poses: Vec<Pose> = feasible.retained[..n_poses].iter().map(|c| c.pose).collect();
    let configs = enumerate_configurations(chain, &poses, &arm_angles).configs;
    Ok(PoseSet { poses, configs })
}

/// Initial registration from the three robot points spanning the largest triangle.
/// Returns the transform and the record indices used.
pub fn initial_registration(
    scene: &SceneConfig,
    dataset: &CalibrationDataset,
) -> Result<(RigidTransform, [usize; 3])> {
    let chain = &scene.chain_nominal;
    let robot: Vec<Vector3<f64>> = dataset
        .records()
        .iter()
        .map(|r| crate::kinematics::tool_point(chain, &r.q, &scene.marker))
        .collect::<Result<_>>()?;
    let triple = max_area_triple(&robot)?;
    let p_r: Vec<Vector3<f64>> = triple.iter().map(|&i| robot[i]).collect();
    let p_n: Vec<Vector3<f64>> = triple
        .iter()
        .map(|&i| {
            dataset.records()[i].p_ref
                + gaussian3(
                    scene.seed,
                    "registration_noise",
                    i as u64,
                    scene.registration_noise_sigma,
                )
        })
        .collect();
    Ok((register_three_points(&p_n, &p_r)?, triple))
}

/// Pose clusters for the relative metric with the model point computed from `offsets`.
pub fn clusters(
    dataset: &CalibrationDataset,
    chain: &DHChain,
    offsets: &[f64],
) -> Result<Vec<Vec<PointPair>>> {
    let model = chain.with_zero_offsets(offsets)?;
    let mut out: Vec<(usize, Vec<PointPair>)> = Vec::new();
    for r in dataset.records() {
        let pair = PointPair {
            p_ref: r.p_ref,
            p_robot: crate::kinematics::tool_point(&model, &r.q, dataset.marker_name())?,
        };
        match out.iter_mut().find(|(k, _)| *k == r.pose_index) {
            Some((_, c)) => c.push(pair),
            None => out.push((r.pose_index, vec![pair])),
        }
    }
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

/// Relative and post-registration accuracy before and after calibration.
///
/// The zero-offsets being estimated are the chain's absolute offsets: "before" uses the
/// chain's own values with no registration correction, "after" the posterior means.
pub fn dataset_metrics(
    kind: DatasetKind,
    data: &CalibrationDataset,
    chain: &DHChain,
    initial: &RigidTransform,
    result: &CalibrationResult,
) -> Result<Vec<MetricRow>> {
    let before = ParameterVector {
        theta1: Default::default(),
        theta2: chain.zero_offsets().to_vec(),
        sigma: result.mle.sigma,
    };
    let mut rows = Vec::with_capacity(4);
    for (stage, params) in [(Stage::Before, &before), (Stage::After, &result.mle)] {
        rows.push(MetricRow {
            dataset: kind,
            stage,
            summary: relative_accuracy(&clusters(data, chain, &params.theta2)?)?,
        });
        rows.push(MetricRow {
            dataset: kind,
            stage,
            summary: post_registration_accuracy(&residual_matrix(data, chain, initial, params)?)?,
        });
    }
    Ok(rows)
}

/// Theoretical accuracy at random configurations, with and without the noise term,
/// against the chain's own offsets (before) and the posterior mean (after).
pub fn theoretical_metrics(
    scene: &SceneConfig,
    result: &CalibrationResult,
    config: &ExperimentConfig,
) -> Result<Vec<MetricRow>> {
    let chain = &scene.chain_nominal;
    let random = random_configs(
        chain,
        config.theoretical_configs,
        rng::derive_seed(scene.seed, "theoretical_configs"),
    );
    let mut rows = Vec::with_capacity(4);
    for (stage, baseline) in [
        (Stage::Before, Baseline::Offsets(chain.zero_offsets().to_vec())),
        (Stage::After, Baseline::Mle),
    ] {
        for include_noise in [true, false] {
            let options = TheoreticalOptions {
                n_draws: config.theoretical_draws,
                include_noise,
                baseline: baseline.clone(),
                draw_mode: config.draw_mode,
                tool_point: scene.marker.clone(),
                seed: rng::derive_seed(scene.seed, "theoretical"),
            };
            rows.push(MetricRow {
                dataset: DatasetKind::RandomConfigs,
                stage,
                summary: theoretical_accuracy(chain, result, &random, &options)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Optimization,
    Validation,
    RandomConfigs,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Optimization => "optimization",
            DatasetKind::Validation => "validation",
            DatasetKind::RandomConfigs => "random_configs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Nominal offsets and the uncorrected registration.
    Before,
    /// Posterior-mean offsets and correction.
    After,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Before => "before",
            Stage::After => "after",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: DatasetKind,
    pub stage: Stage,
    pub summary: AccuracySummary,
}

/// Per-parameter estimate in reporting units (deg for angles, mm otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub mle: f64,
    pub std: f64,
    /// Injected value, for the zero-offsets only.
    pub injected: Option<f64>,
}

impl ParameterRow {
    pub fn abs_error(&self) -> Option<f64> {
        self.injected.map(|t| (self.mle - t).abs())
    }

    /// Recovery error in posterior standard deviations.
    pub fn z_score(&self) -> Option<f64> {
        self.abs_error().map(|e| e / self.std)
    }
}

/// Estimates in reporting units, with the true offsets attached to the zero-offset rows.
pub fn parameter_rows(scene: &SceneConfig, result: &CalibrationResult) -> Vec<ParameterRow> {
    let chain = &scene.chain_nominal;
    let k = chain.dof();
    let mle = result.mle.to_sampling();
    let std = result.std.to_sampling();
    ParameterVector::sampling_names(k)
        .into_iter()
        .enumerate()
        .map(|(i, name)| ParameterRow {
            name,
            mle: mle[i],
            std: std[i],
            injected: (6..6 + k).contains(&i).then(|| {
                chain.zero_offsets()[i - 6].to_degrees() + scene.true_offsets_deg[i - 6]
            }),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scene_label: String,
    pub marker: String,
    pub scene_seed: u64,
    pub sampler_seed: u64,
    pub mcmc_seed: u64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub proposal_width: f64,
    pub optimization_configs: usize,
    pub validation_configs: usize,
    pub registration_triple: [usize; 3],
    pub initial_registration: RigidTransform,
    pub calibration: CalibrationResult,
    pub parameters: Vec<ParameterRow>,
    pub metrics: Vec<MetricRow>,
}

impl ExperimentReport {
    pub fn metric(
        &self,
        dataset: DatasetKind,
        stage: Stage,
        kind: crate::metrics::MetricKind,
    ) -> Option<&AccuracySummary> {
        self.metrics
            .iter()
            .find(|m| m.dataset == dataset && m.stage == stage && m.summary.metric_kind == kind)
            .map(|m| &m.summary)
    }

    /// Zero-offset rows (the ones with an injected value).
    pub fn offsets(&self) -> impl Iterator<Item = &ParameterRow> {
        self.parameters.iter().filter(|p| p.injected.is_some())
    }
}

/// Everything produced by one experiment, including the intermediate artifacts the CLI
/// writes to disk.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub optimization: PoseSet,
    pub validation: PoseSet,
    pub optimization_data: CalibrationDataset,
    pub validation_data: CalibrationDataset,
    pub trace: crate::calibration::PosteriorTrace,
    pub report: ExperimentReport,
}

pub fn run_experiment(scene: &SceneConfig, config: &ExperimentConfig) -> Result<ExperimentRun> {
    scene.validate()?;
    let chain = &scene.chain_nominal;
    let origin: [f64; 3] = scene.sensor_origin_in_robot().into();
    let opt_sampler = SamplerConfig {
        sensor_origin_in_r: origin,
        seed: rng::derive_seed(config.sampler.seed, "optimization"),
        ..config.sampler.clone()
    };
    let val_sampler = SamplerConfig {
        seed: rng::derive_seed(config.sampler.seed, "validation"),
        ..opt_sampler.clone()
    };
    let optimization = generate_pose_set(chain, &opt_sampler, config.optimization_poses, config.n_arm_angles)?;
    let validation = generate_pose_set(chain, &val_sampler, config.validation_poses, config.n_arm_angles)?;
    let optimization_data = build_dataset(scene, &optimization.configs, 0)?;
    let validation_data = build_dataset(scene, &validation.configs, VALIDATION_STREAM_BASE)?;

    let (initial, triple) = initial_registration(scene, &optimization_data)?;
    let trace = metropolis_sample(&optimization_data, chain, &initial, &config.mcmc)?;
    let calibration = summarize(&trace, config.mcmc.burn_in)?;
    let result = &calibration;

    let mut metrics = Vec::new();
    for (kind, data) in [
        (DatasetKind::Optimization, &optimization_data),
        (DatasetKind::Validation, &validation_data),
    ] {
        metrics.extend(dataset_metrics(kind, data, chain, &initial, result)?);
    }
    metrics.extend(theoretical_metrics(scene, result, config)?);

    let parameters = parameter_rows(scene, result);

    let report = ExperimentReport {
        scene_label: scene.label.clone(),
        marker: scene.marker.clone(),
        scene_seed: scene.seed,
        sampler_seed: config.sampler.seed,
        mcmc_seed: config.mcmc.seed,
        n_steps: config.mcmc.n_steps,
        burn_in: config.mcmc.burn_in,
        proposal_width: config.mcmc.proposal_width,
        optimization_configs: optimization_data.len(),
        validation_configs: validation_data.len(),
        registration_triple: triple,
        initial_registration: initial,
        calibration,
        parameters,
        metrics,
    };
    Ok(ExperimentRun {
        optimization,
        validation,
        optimization_data,
        validation_data,
        trace,
        report,
    })
}
