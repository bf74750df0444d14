//! Positioning accuracy: relative (pairwise distances within a pose cluster),
//! post-registration (residual norms) and theoretical (posterior draws pushed
//! through forward kinematics).

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationResult;
use crate::error::{Error, Result};
use crate::kinematics::{DHChain, JointConfig};
use crate::rng;
use crate::stats::{mean, percentile_sorted, sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Relative,
    PostRegistration,
    TheoreticalFull,
    TheoreticalOffsetsOnly,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Relative => "relative",
            MetricKind::PostRegistration => "post_registration",
            MetricKind::TheoreticalFull => "theoretical_full",
            MetricKind::TheoreticalOffsetsOnly => "theoretical_offsets_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub metric_kind: MetricKind,
    /// mm
    pub mean: f64,
    /// Empirical 2.5th and 97.5th percentiles (mm).
    pub interval_95: [f64; 2],
    pub n: usize,
}

impl AccuracySummary {
    pub fn from_values(metric_kind: MetricKind, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no values to summarize"));
        }
        let s = sorted(values);
        Ok(Self {
            metric_kind,
            mean: mean(values),
            interval_95: [percentile_sorted(&s, 2.5), percentile_sorted(&s, 97.5)],
            n: values.len(),
        })
    }
}

/// One configuration of a pose cluster: the sensor point and the model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    /// Sensor frame (mm).
    pub p_ref: Vector3<f64>,
    /// Robot base frame (mm).
    pub p_robot: Vector3<f64>,
}

/// `| |p_ref,i - p_ref,j| - |p_robot,i - p_robot,j| |` over all pairs `i < j` of
/// every cluster, pooled.
pub fn relative_distances(clusters: &[Vec<PointPair>]) -> Vec<f64> {
    let mut out = Vec::new();
    for c in clusters {
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d_ref = (c[i].p_ref - c[j].p_ref).norm();
                let d_robot = (c[i].p_robot - c[j].p_robot).norm();
                out.push((d_ref - d_robot).abs());
            }
        }
    }
    out
}

pub fn relative_accuracy(clusters: &[Vec<PointPair>]) -> Result<AccuracySummary> {
    let d = relative_distances(clusters);
    if d.is_empty() {
        return Err(Error::Empty("relative accuracy needs a cluster with two or more points"));
    }
    AccuracySummary::from_values(MetricKind::Relative, &d)
}

pub fn post_registration_accuracy(residuals: &[Vector3<f64>]) -> Result<AccuracySummary> {
    if residuals.is_empty() {
        return Err(Error::Empty("post-registration accuracy of an empty residual matrix"));
    }
    let norms: Vec<f64> = residuals.iter().map(|e| e.norm()).collect();
    AccuracySummary::from_values(MetricKind::PostRegistration, &norms)
}

/// Reference offsets the posterior draws are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The posterior mean.
    Mle,
    /// Fixed offsets (rad), e.g. the uncalibrated factory values.
    Offsets(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// Whole posterior rows, keeping inter-joint correlation.
    #[default]
    Rows,
    /// Each joint's offset from an independently chosen row.
    PerJoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalOptions {
    pub n_draws: usize,
    pub include_noise: bool,
    pub baseline: Baseline,
    pub draw_mode: DrawMode,
    pub tool_point: String,
    pub seed: u64,
}

/// Distances between the baseline TCP and `n_draws` TCPs built from posterior
/// offset draws (with replacement), optionally with `N(0, sigma_mle² I)` added to each.
pub fn theoretical_accuracy(
    chain: &DHChain,
    result: &CalibrationResult,
    configs: &[JointConfig],
    options: &TheoreticalOptions,
) -> Result<AccuracySummary> {
    let samples = &result.post_burn_in_samples;
    if samples.is_empty() {
        return Err(Error::Empty("calibration result has no posterior samples"));
    }
    if configs.is_empty() {
        return Err(Error::Empty("no configurations for theoretical accuracy"));
    }
    if options.n_draws == 0 {
        return Err(Error::InvalidConfig("n_draws must be at least 1".into()));
    }
    let k = chain.dof();
    let baseline = match &options.baseline {
        Baseline::Mle => result.mle.theta2.clone(),
        Baseline::Offsets(o) => o.clone(),
    };
    for len in [baseline.len(), result.dof()] {
        if len != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: len,
            });
        }
    }
    let tool = chain.tool_point_offset(&options.tool_point)?;
    for q in configs {
        chain.check_config(q)?;
    }

    let mut draw_rng = rng::stream(options.seed, "theoretical_draws");
    let draws: Vec<Vec<f64>> = (0..options.n_draws)
        .map(|_| match options.draw_mode {
            DrawMode::Rows => samples[draw_rng.random_range(0..samples.len())].theta2.clone(),
            DrawMode::PerJoint => (0..k)
                .map(|j| samples[draw_rng.random_range(0..samples.len())].theta2[j])
                .collect(),
        })
        .collect();
    let sigma = result.mle.sigma;
    let mut noise_rng = rng::stream(options.seed, "theoretical_noise");

    let mut distances = Vec::with_capacity(configs.len() * options.n_draws);
    for q in configs {
        let base = chain.flange_with_offsets(&q.0, &baseline).transform_point(&tool);
        for d in &draws {
            let mut p = chain.flange_with_offsets(&q.0, d).transform_point(&tool);
            if options.include_noise {
                let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut noise_rng));
                p += sigma * Vector3::from(n);
            }
            distances.push((p - base).norm());
        }
    }
    let kind = if options.include_noise {
        MetricKind::TheoreticalFull
    } else {
        MetricKind::TheoreticalOffsetsOnly
    };
    AccuracySummary::from_values(kind, &distances)
}

/// Configurations uniform within the joint limits.
pub fn random_configs(chain: &DHChain, n: usize, seed: u64) -> Vec<JointConfig> {
    let mut r = rng::stream(seed, "random_configs");
    (0..n)
        .map(|_| {
            JointConfig::new(
                chain
                    .joint_limits()
                    .iter()
                    .map(|&(lo, hi)| r.random_range(lo..=hi))
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ParameterVector;
    use crate::kinematics::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(r: [f64; 3], b: [f64; 3]) -> PointPair {
        PointPair {
            p_ref: Vector3::from(r),
            p_robot: Vector3::from(b),
        }
    }

    #[test]
    fn two_point_cluster() {
        let c = vec![vec![
            pair([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            pair([10.0, 0.0, 0.0], [0.0, 7.0, 0.0]),
        ]];
        let s = relative_accuracy(&c).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.interval_95, [3.0, 3.0]);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn congruent_clusters_score_zero() {
        let t = Pose::from_euler_zyx(Vector3::new(100.0, -40.0, 7.0), 1.0, -0.3, 0.2);
        let pts = [[1.0, 2.0, 3.0], [40.0, -5.0, 9.0], [-7.0, 11.0, 0.5]];
        let c: Vec<PointPair> = pts
            .iter()
            .map(|p| {
                let v = Vector3::from(*p);
                PointPair {
                    p_ref: t.transform_point(&v),
                    p_robot: v,
                }
            })
            .collect();
        let s = relative_accuracy(&[c]).unwrap();
        assert!(s.mean < 1e-12);
        assert_eq!(s.n, 3);
    }

    #[test]
    fn singletons_only_is_an_error() {
        let c = vec![vec![pair([0.0; 3], [0.0; 3])], vec![pair([1.0; 3], [1.0; 3])]];
        assert!(matches!(relative_accuracy(&c), Err(Error::Empty(_))));
        assert!(relative_accuracy(&[]).is_err());
    }

    #[test]
    fn post_registration_cases() {
        let s = post_registration_accuracy(&[Vector3::zeros(); 3]).unwrap();
        assert_eq!(s.mean, 0.0);
        let s = post_registration_accuracy(&[
            Vector3::new(3.0, 4.0, 0.0),
            Vector3::new(0.0, 0.0, 5.0),
        ])
        .unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.interval_95, [5.0, 5.0]);
        assert!(post_registration_accuracy(&[]).is_err());
    }

    fn degenerate_result(sigma: f64) -> CalibrationResult {
        let mut p = ParameterVector::initial(7);
        p.theta2 = vec![0.001, -0.002, 0.0, 0.003, 0.0, 0.0, 0.01];
        p.sigma = sigma;
        CalibrationResult {
            mle: p.clone(),
            std: ParameterVector::initial(7),
            post_burn_in_samples: vec![p; 10],
            acceptance_rate: 0.5,
        }
    }

    fn opts(include_noise: bool, baseline: Baseline) -> TheoreticalOptions {
        TheoreticalOptions {
            n_draws: 200,
            include_noise,
            baseline,
            draw_mode: DrawMode::Rows,
            tool_point: "smr".into(),
            seed: 5,
        }
    }

    #[test]
    fn degenerate_trace_without_noise_is_zero() {
        let chain = DHChain::reference_srs7();
        let configs = random_configs(&chain, 20, 1);
        let s = theoretical_accuracy(&chain, &degenerate_result(0.1), &configs, &opts(false, Baseline::Mle))
            .unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.metric_kind, MetricKind::TheoreticalOffsetsOnly);
        assert_eq!(s.n, 20 * 200);
    }

    #[test]
    fn degenerate_trace_with_noise_is_a_gaussian_norm() {
        let chain = DHChain::reference_srs7();
        let configs = random_configs(&chain, 50, 2);
        let s = theoretical_accuracy(&chain, &degenerate_result(0.1), &configs, &opts(true, Baseline::Mle))
            .unwrap();
        // Monte-Carlo oracle for E|N(0, 0.1² I₃)|.
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let mc: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut r));
                0.1 * Vector3::from(v).norm()
            })
            .collect();
        let oracle = mean(&mc);
        assert!(((s.mean - oracle) / oracle).abs() < 0.02, "{} vs {oracle}", s.mean);
    }

    #[test]
    fn fixed_baseline_measures_offset_error() {
        let chain = DHChain::reference_srs7();
        let configs = random_configs(&chain, 10, 3);
        let res = degenerate_result(0.1);
        let o = opts(false, Baseline::Offsets(vec![0.0; 7]));
        let s = theoretical_accuracy(&chain, &res, &configs, &o).unwrap();
        let smr = chain.tool_point_offset("smr").unwrap();
        let expected: Vec<f64> = configs
            .iter()
            .map(|q| {
                let a = chain.flange_with_offsets(&q.0, &[0.0; 7]).transform_point(&smr);
                let b = chain.flange_with_offsets(&q.0, &res.mle.theta2).transform_point(&smr);
                (a - b).norm()
            })
            .collect();
        assert!((s.mean - mean(&expected)).abs() < 1e-9);
    }

    #[test]
    fn theoretical_errors() {
        let chain = DHChain::reference_srs7();
        let configs = random_configs(&chain, 2, 3);
        let mut res = degenerate_result(0.1);
        assert!(theoretical_accuracy(&chain, &res, &[], &opts(false, Baseline::Mle)).is_err());
        res.post_burn_in_samples.clear();
        assert!(theoretical_accuracy(&chain, &res, &configs, &opts(false, Baseline::Mle)).is_err());
    }

    #[test]
    fn random_configs_within_limits_and_seeded() {
        let chain = DHChain::reference_srs7();
        let one = random_configs(&chain, 1, 0);
        assert_eq!(one.len(), 1);
        assert!(chain.within_limits(&one[0]));
        let a = random_configs(&chain, 1000, 1);
        let b = random_configs(&chain, 1000, 2);
        assert_ne!(a, b);
        assert_eq!(a, random_configs(&chain, 1000, 1));
    }

    #[test]
    fn random_configs_are_uniform_per_joint() {
        let chain = DHChain::reference_srs7();
        let n = 10_000;
        let cfgs = random_configs(&chain, n, 11);
        let bins = 10;
        // chi-square with 9 dof: 99.9% quantile is 27.88
        for (j, &(lo, hi)) in chain.joint_limits().iter().enumerate() {
            let mut counts = vec![0usize; bins];
            for q in &cfgs {
                let b = (((q.0[j] - lo) / (hi - lo)) * bins as f64) as usize;
                counts[b.min(bins - 1)] += 1;
            }
            let e = n as f64 / bins as f64;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
            assert!(chi2 < 27.88, "joint {j}: chi2 = {chi2}");
        }
    }
}
