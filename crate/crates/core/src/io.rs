//! Text file formats: configurations, datasets, traces and reports.
//!
//! Datasets and configuration lists use fixed decimals (12 for radians, 9 for mm), so a
//! file read back and written again is byte-identical. Traces use the shortest
//! representation that parses back to the same `f64`, in the in-memory units (rad, mm).

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationDataset, DatasetRecord, ParameterVector, PosteriorTrace};
use crate::error::{Error, Result};
use crate::harness::{ExperimentReport, MetricRow, ParameterRow};
use crate::ik::{BranchLabel, EnumeratedConfig, Sign};
use crate::kinematics::{JointConfig, Pose};
use crate::metrics::MetricKind;

pub const DATASET_VERSION: u32 = 1;
pub const TRACE_VERSION: u32 = 1;

const RAD_DECIMALS: usize = 12;
const MM_DECIMALS: usize = 9;

/// Rounds a joint reading to the resolution stored in dataset files.
pub fn quantize_rad(x: f64) -> f64 {
    format!("{x:.RAD_DECIMALS$}").parse().unwrap()
}

/// Rounds a coordinate to the resolution stored in dataset files.
pub fn quantize_mm(x: f64) -> f64 {
    format!("{x:.MM_DECIMALS$}").parse().unwrap()
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {token:?}"),
    })
}

fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not an index: {token:?}"),
    })
}

fn header_value<'a>(lines: &[(usize, &'a str)], key: &str) -> Result<&'a str> {
    let prefix = format!("# {key}:");
    lines
        .iter()
        .find_map(|(_, l)| l.strip_prefix(&prefix))
        .map(str::trim)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing header `{key}`"),
        })
}

/// Non-empty lines with 1-based numbers, split into `#` header lines and data lines.
fn split_lines(text: &str) -> (Vec<(usize, &str)>, Vec<(usize, &str)>) {
    let mut header = Vec::new();
    let mut data = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim_end();
        if l.is_empty() {
            continue;
        }
        if l.starts_with('#') {
            header.push((i + 1, l));
        } else {
            data.push((i + 1, l));
        }
    }
    (header, data)
}

/// Metadata carried by a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub chain: String,
    pub marker: String,
    /// Frame of the reference points.
    pub reference_frame: String,
}

pub fn write_dataset(dataset: &CalibrationDataset, chain_name: &str, reference_frame: &str) -> String {
    let k = dataset.dof();
    let mut s = String::new();
    writeln!(s, "# remaster dataset").unwrap();
    writeln!(s, "# version: {DATASET_VERSION}").unwrap();
    writeln!(s, "# chain: {chain_name}").unwrap();
    writeln!(s, "# marker: {}", dataset.marker_name()).unwrap();
    writeln!(s, "# joints: robot joint readings (rad)").unwrap();
    writeln!(s, "# reference_frame: {reference_frame}").unwrap();
    let q_cols: Vec<String> = (1..=k).map(|i| format!("q{i}_rad")).collect();
    writeln!(
        s,
        "# columns: pose_index {} x_ref_mm y_ref_mm z_ref_mm",
        q_cols.join(" ")
    )
    .unwrap();
    for r in dataset.records() {
        write!(s, "{}", r.pose_index).unwrap();
        for a in r.q.angles() {
            write!(s, " {a:.RAD_DECIMALS$}").unwrap();
        }
        for c in r.p_ref.iter() {
            write!(s, " {c:.MM_DECIMALS$}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_dataset(text: &str) -> Result<(DatasetHeader, CalibrationDataset)> {
    let (header, data) = split_lines(text);
    let version = header_value(&header, "version")?;
    let version: u32 = version.parse().map_err(|_| Error::Parse {
        line: 1,
        message: format!("bad version {version:?}"),
    })?;
    if version != DATASET_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported dataset version {version}"),
        });
    }
    let head = DatasetHeader {
        version,
        chain: header_value(&header, "chain")?.to_string(),
        marker: header_value(&header, "marker")?.to_string(),
        reference_frame: header_value(&header, "reference_frame")?.to_string(),
    };
    let mut records = Vec::with_capacity(data.len());
    for (line, l) in data {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() < 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected pose index, joints and 3 coordinates, got {} fields", tokens.len()),
            });
        }
        let k = tokens.len() - 4;
        let q = tokens[1..1 + k]
            .iter()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<_>>>()?;
        let p = tokens[1 + k..]
            .iter()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<_>>>()?;
        records.push(DatasetRecord {
            pose_index: parse_usize(tokens[0], line)?,
            q: JointConfig::new(q),
            p_ref: Vector3::new(p[0], p[1], p[2]),
        });
    }
    let dataset = CalibrationDataset::new(records, head.marker.clone())?;
    Ok((head, dataset))
}

fn sign_char(s: Sign) -> char {
    match s {
        Sign::Plus => '+',
        Sign::Minus => '-',
    }
}

fn parse_branch(token: &str, line: usize) -> Result<BranchLabel> {
    let signs: Vec<Sign> = token
        .chars()
        .map(|c| match c {
            '+' => Ok(Sign::Plus),
            '-' => Ok(Sign::Minus),
            _ => Err(Error::Parse {
                line,
                message: format!("bad branch label {token:?}"),
            }),
        })
        .collect::<Result<_>>()?;
    match signs[..] {
        [shoulder, elbow, wrist] => Ok(BranchLabel {
            shoulder,
            elbow,
            wrist,
        }),
        _ => Err(Error::Parse {
            line,
            message: format!("bad branch label {token:?}"),
        }),
    }
}

/// Enumerated configurations: `pose_index branch arm_angle q...`.
pub fn write_configs(configs: &[EnumeratedConfig]) -> String {
    let mut s = String::new();
    writeln!(s, "# remaster configurations").unwrap();
    writeln!(s, "# columns: pose_index branch arm_angle_rad q1_rad ... qk_rad").unwrap();
    for c in configs {
        let b = c.branch;
        write!(
            s,
            "{} {}{}{} {:.RAD_DECIMALS$}",
            c.pose_index,
            sign_char(b.shoulder),
            sign_char(b.elbow),
            sign_char(b.wrist),
            c.arm_angle
        )
        .unwrap();
        for a in c.q.angles() {
            write!(s, " {a:.RAD_DECIMALS$}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_configs(text: &str) -> Result<Vec<EnumeratedConfig>> {
    let (_, data) = split_lines(text);
    data.into_iter()
        .map(|(line, l)| {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() < 4 {
                return Err(Error::Parse {
                    line,
                    message: "expected pose index, branch, arm angle and joints".into(),
                });
            }
            Ok(EnumeratedConfig {
                pose_index: parse_usize(t[0], line)?,
                branch: parse_branch(t[1], line)?,
                arm_angle: parse_f64(t[2], line)?,
                q: JointConfig::new(
                    t[3..]
                        .iter()
                        .map(|v| parse_f64(v, line))
                        .collect::<Result<_>>()?,
                ),
            })
        })
        .collect()
}

/// Poses as `pose_index x y z (mm) gamma theta phi (rad, ZYX)`.
pub fn write_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    writeln!(s, "# remaster poses").unwrap();
    writeln!(s, "# columns: pose_index x_mm y_mm z_mm gamma_rad theta_rad phi_rad").unwrap();
    for (i, p) in poses.iter().enumerate() {
        let (g, t, f) = crate::kinematics::rotation_to_euler_zyx(&p.rotation)
            .expect("pose rotation is orthonormal");
        let v = p.translation;
        writeln!(
            s,
            "{i} {:.MM_DECIMALS$} {:.MM_DECIMALS$} {:.MM_DECIMALS$} {g:.RAD_DECIMALS$} {t:.RAD_DECIMALS$} {f:.RAD_DECIMALS$}",
            v.x, v.y, v.z
        )
        .unwrap();
    }
    s
}

/// One row per step: `step accepted <parameters in rad and mm> log_posterior`.
pub fn write_trace(trace: &PosteriorTrace) -> String {
    let k = trace.dof();
    let mut s = String::new();
    writeln!(s, "# remaster trace").unwrap();
    writeln!(s, "# version: {TRACE_VERSION}").unwrap();
    writeln!(s, "# seed: {}", trace.seed).unwrap();
    writeln!(s, "# proposal_width: {}", trace.proposal_width).unwrap();
    writeln!(s, "# n_steps: {}", trace.n_steps).unwrap();
    writeln!(s, "# burn_in: {}", trace.burn_in).unwrap();
    writeln!(
        s,
        "# columns: step accepted {} log_posterior",
        ParameterVector::flat_names(k).join(" ")
    )
    .unwrap();
    for (i, p) in trace.samples.iter().enumerate() {
        write!(s, "{i} {}", trace.accepted[i] as u8).unwrap();
        for v in p.to_flat() {
            write!(s, " {v:?}").unwrap();
        }
        writeln!(s, " {:?}", trace.log_posterior[i]).unwrap();
    }
    s
}

pub fn parse_trace(text: &str) -> Result<PosteriorTrace> {
    let (header, data) = split_lines(text);
    let num = |key: &str| -> Result<f64> { parse_f64(header_value(&header, key)?, 1) };
    let mut trace = PosteriorTrace {
        samples: Vec::with_capacity(data.len()),
        accepted: Vec::with_capacity(data.len()),
        log_posterior: Vec::with_capacity(data.len()),
        seed: header_value(&header, "seed")?.parse().map_err(|_| Error::Parse {
            line: 1,
            message: "bad seed".into(),
        })?,
        proposal_width: num("proposal_width")?,
        n_steps: parse_usize(header_value(&header, "n_steps")?, 1)?,
        burn_in: parse_usize(header_value(&header, "burn_in")?, 1)?,
    };
    for (line, l) in data {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 10 {
            return Err(Error::Parse {
                line,
                message: "too few trace columns".into(),
            });
        }
        let accepted = match t[1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("bad accepted flag {other:?}"),
                })
            }
        };
        let v = t[2..]
            .iter()
            .map(|x| parse_f64(x, line))
            .collect::<Result<Vec<_>>>()?;
        let (lp, params) = v.split_last().expect("checked length");
        trace.samples.push(ParameterVector::from_flat(params));
        trace.accepted.push(accepted);
        trace.log_posterior.push(*lp);
    }
    if trace.samples.len() != trace.n_steps {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header says {} steps, found {}",
                trace.n_steps,
                trace.samples.len()
            ),
        });
    }
    Ok(trace)
}

/// Rigid transform as a row-major 3×3 rotation and a translation, for TOML/JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformEntry {
    pub rotation: [[f64; 3]; 3],
    pub translation_mm: [f64; 3],
}

impl From<&Pose> for TransformEntry {
    fn from(p: &Pose) -> Self {
        let r = &p.rotation;
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation_mm: p.translation.into(),
        }
    }
}

impl TryFrom<&TransformEntry> for Pose {
    type Error = Error;

    fn try_from(t: &TransformEntry) -> Result<Pose> {
        let r = Matrix3::from_fn(|i, j| t.rotation[i][j]);
        Pose::new(r, Vector3::from(t.translation_mm))
    }
}

/// What `calibrate` hands to `evaluate` and `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub chain: String,
    pub marker: String,
    pub registration_triple: [usize; 3],
    pub initial_registration: TransformEntry,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub parameter_names: Vec<String>,
    /// Sampling units (mm, deg).
    pub mle: Vec<f64>,
    pub std: Vec<f64>,
}

impl CalibrationFile {
    pub fn new(
        chain: &str,
        marker: &str,
        triple: [usize; 3],
        initial: &Pose,
        burn_in: usize,
        result: &crate::calibration::CalibrationResult,
    ) -> Self {
        Self {
            chain: chain.to_string(),
            marker: marker.to_string(),
            registration_triple: triple,
            initial_registration: TransformEntry::from(initial),
            burn_in,
            acceptance_rate: result.acceptance_rate,
            parameter_names: ParameterVector::sampling_names(result.dof()),
            mle: result.mle.to_sampling(),
            std: result.std.to_sampling(),
        }
    }

    pub fn initial_registration(&self) -> Result<Pose> {
        Pose::try_from(&self.initial_registration)
    }

    pub fn mle(&self) -> ParameterVector {
        ParameterVector::from_sampling(&self.mle)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let f: Self = toml::from_str(s)?;
        if f.mle.len() != f.parameter_names.len() || f.std.len() != f.mle.len() || f.mle.len() < 8 {
            return Err(Error::InvalidConfig("calibration file has inconsistent parameter lists".into()));
        }
        Ok(f)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("calibration file serializes")
    }
}

/// Serializable view of an [`ExperimentReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub scene: String,
    pub marker: String,
    pub scene_seed: u64,
    pub sampler_seed: u64,
    pub mcmc_seed: u64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub proposal_width: f64,
    pub acceptance_rate: f64,
    pub optimization_configs: usize,
    pub validation_configs: usize,
    pub registration_triple: [usize; 3],
    pub initial_registration: TransformEntry,
    pub parameters: Vec<ParameterRow>,
    pub metrics: Vec<MetricRow>,
}

impl From<&ExperimentReport> for ReportDocument {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            scene: r.scene_label.clone(),
            marker: r.marker.clone(),
            scene_seed: r.scene_seed,
            sampler_seed: r.sampler_seed,
            mcmc_seed: r.mcmc_seed,
            n_steps: r.n_steps,
            burn_in: r.burn_in,
            proposal_width: r.proposal_width,
            acceptance_rate: r.calibration.acceptance_rate,
            optimization_configs: r.optimization_configs,
            validation_configs: r.validation_configs,
            registration_triple: r.registration_triple,
            initial_registration: TransformEntry::from(&r.initial_registration),
            parameters: r.parameters.clone(),
            metrics: r.metrics.clone(),
        }
    }
}

pub fn report_json(reports: &[ReportDocument]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(reports)?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

/// Estimates table: one row per parameter, reporting units.
pub fn parameter_table(rows: &[ParameterRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<12} {:>11} {:>11} {:>10} {:>10} {:>9}",
        "parameter", "injected", "mle", "std", "|error|", "error/std"
    )
    .unwrap();
    for p in rows {
        writeln!(
            s,
            "{:<12} {:>11} {:>11.6} {:>10.6} {:>10} {:>9}",
            p.name,
            opt(p.injected, 6),
            p.mle,
            p.std,
            opt(p.abs_error(), 6),
            opt(p.z_score(), 2)
        )
        .unwrap();
    }
    s
}

/// Accuracy tables grouped by metric kind.
pub fn metric_tables(metrics: &[MetricRow]) -> String {
    let mut s = String::new();
    for (kind, title) in [
        (MetricKind::Relative, "Relative accuracy (mm)"),
        (MetricKind::PostRegistration, "Post-registration accuracy (mm)"),
        (MetricKind::TheoreticalFull, "Theoretical accuracy, offsets and noise (mm)"),
        (MetricKind::TheoreticalOffsetsOnly, "Theoretical accuracy, offsets only (mm)"),
    ] {
        let rows: Vec<&MetricRow> = metrics.iter().filter(|m| m.summary.metric_kind == kind).collect();
        if rows.is_empty() {
            continue;
        }
        writeln!(s, "\n{title}").unwrap();
        writeln!(
            s,
            "{:<15} {:<7} {:>9} {:>9} {:>9} {:>8}",
            "dataset", "stage", "mean", "p2.5", "p97.5", "n"
        )
        .unwrap();
        for m in rows {
            let [lo, hi] = m.summary.interval_95;
            writeln!(
                s,
                "{:<15} {:<7} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                m.dataset.as_str(),
                m.stage.as_str(),
                m.summary.mean,
                lo,
                hi,
                m.summary.n
            )
            .unwrap();
        }
    }
    s
}

pub fn report_text(reports: &[ReportDocument]) -> String {
    let mut s = String::new();
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        writeln!(s, "== scene {} (marker {}) ==", r.scene, r.marker).unwrap();
        writeln!(
            s,
            "seeds: scene {} sampler {} mcmc {}",
            r.scene_seed, r.sampler_seed, r.mcmc_seed
        )
        .unwrap();
        writeln!(
            s,
            "sampler: {} steps, burn-in {}, width {}, acceptance {:.4}",
            r.n_steps, r.burn_in, r.proposal_width, r.acceptance_rate
        )
        .unwrap();
        writeln!(
            s,
            "configurations: optimization {}, validation {}",
            r.optimization_configs, r.validation_configs
        )
        .unwrap();
        writeln!(s, "registration points: {:?}\n", r.registration_triple).unwrap();
        s.push_str(&parameter_table(&r.parameters));
        s.push_str(&metric_tables(&r.metrics));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::BranchLabel;

    fn dataset() -> CalibrationDataset {
        let records = (0..5)
            .map(|i| DatasetRecord {
                pose_index: i / 2,
                q: JointConfig::new((0..7).map(|j| 0.1 * j as f64 - 0.3 + 1e-3 * i as f64).collect()),
                p_ref: Vector3::new(1234.5678 + i as f64, -0.001, 1.0 / 3.0),
            })
            .collect();
        CalibrationDataset::new(records, "sir").unwrap()
    }

    #[test]
    fn dataset_round_trip_is_byte_exact() {
        let text = write_dataset(&dataset(), "srs7", "sensor");
        let (head, back) = parse_dataset(&text).unwrap();
        assert_eq!(head.chain, "srs7");
        assert_eq!(head.marker, "sir");
        assert_eq!(head.reference_frame, "sensor");
        assert_eq!(back.len(), 5);
        assert_eq!(write_dataset(&back, "srs7", "sensor"), text);
        assert!((back.records()[0].p_ref.z - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dataset_parse_errors() {
        let text = write_dataset(&dataset(), "srs7", "sensor");
        let bad = text.replace("# version: 1", "# version: 9");
        assert!(parse_dataset(&bad).is_err());
        let bad = format!("{text}3 0.1 nope 1 2 3 4 5 6 7 8\n");
        assert!(matches!(parse_dataset(&bad), Err(Error::Parse { .. })));
        let header_only: String = text.lines().filter(|l| l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        assert!(parse_dataset(&header_only).is_err());
    }

    #[test]
    fn configs_round_trip() {
        let c = vec![EnumeratedConfig {
            pose_index: 3,
            q: JointConfig::new(vec![0.25; 7]),
            branch: BranchLabel::all()[5],
            arm_angle: -1.5,
        }];
        let text = write_configs(&c);
        let back = parse_configs(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_configs(&back), text);
    }

    #[test]
    fn trace_round_trip_is_lossless() {
        let samples: Vec<ParameterVector> = (0..4)
            .map(|i| {
                let mut p = ParameterVector::initial(7);
                p.theta2[2] = 0.1 / (i + 1) as f64;
                p.theta2[4] = (0.477 + 0.01 * i as f64).to_radians();
                p.theta1.gamma = 1e-7 * i as f64;
                p.sigma = 1.0 + 1.0 / 7.0;
                p
            })
            .collect();
        let trace = PosteriorTrace {
            samples,
            accepted: vec![true, false, true, true],
            log_posterior: vec![-1.0, -1.0, -0.5, 1.0 / 3.0],
            seed: 42,
            proposal_width: 0.0125,
            n_steps: 4,
            burn_in: 2,
        };
        let text = write_trace(&trace);
        assert!(text.contains("# columns: step accepted x_mm"));
        let back = parse_trace(&text).unwrap();
        assert_eq!(back.accepted, trace.accepted);
        assert_eq!(back.log_posterior, trace.log_posterior);
        assert_eq!(back.seed, 42);
        for (a, b) in back.samples.iter().zip(&trace.samples) {
            assert_eq!(a, b);
        }
        assert_eq!(write_trace(&back), text);
    }

    #[test]
    fn transform_entry_round_trip() {
        let p = Pose::from_euler_zyx(Vector3::new(1.0, 2.0, 3.0), 0.4, -0.2, 1.1);
        let back = Pose::try_from(&TransformEntry::from(&p)).unwrap();
        assert_eq!(back, p);
    }
}
