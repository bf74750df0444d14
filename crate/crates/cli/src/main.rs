use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use remaster_core::calibration::{
    metropolis_sample, summarize, CalibrationDataset, CalibrationResult, ParameterVector,
};
use remaster_core::harness::{
    build_dataset, dataset_metrics, generate_pose_set, initial_registration, parameter_rows,
    run_experiment, theoretical_metrics, DatasetKind, ExperimentConfig, ExperimentReport,
    SceneConfig, VALIDATION_STREAM_BASE,
};
use remaster_core::io::{self, CalibrationFile, ReportDocument};
use remaster_core::pose_sampler::SamplerConfig;
use remaster_core::rng;

#[derive(Parser)]
#[command(name = "remaster", version, about = "Joint zero-offset calibration against a simulated robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample sensor-facing poses and enumerate their IK configurations.
    GeneratePoses {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PoseSetKind::Optimization)]
        set: PoseSetKind,
    },
    /// Measure a configuration list with the simulated sensor.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        configs: PathBuf,
        #[arg(long, value_enum, default_value_t = PoseSetKind::Optimization)]
        set: PoseSetKind,
    },
    /// Register, sample the posterior and write the trace and estimates.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Accuracy metrics on the optimization dataset, including the theoretical ones.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Accuracy metrics on a separate dataset using an existing calibration.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
    },
    /// The whole pipeline on one or more scenes, with combined reports.
    RunAll {
        #[command(flatten)]
        common: Common,
        /// Additional scene files; without any, both built-in scenes run.
        #[arg(long = "scenes")]
        extra_scenes: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Profile::Ci)]
    profile: Profile,
    /// Scene TOML; defaults to the built-in motion-capture scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, short, default_value = "remaster-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// 2×10⁴ steps, 75% burn-in.
    Ci,
    /// 2×10⁵ steps, 87.5% burn-in.
    Paper,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PoseSetKind {
    Optimization,
    Validation,
}

impl PoseSetKind {
    fn label(self) -> &'static str {
        match self {
            PoseSetKind::Optimization => "optimization",
            PoseSetKind::Validation => "validation",
        }
    }
}

impl Common {
    fn config(&self) -> ExperimentConfig {
        match self.profile {
            Profile::Ci => ExperimentConfig::ci(self.seed),
            Profile::Paper => ExperimentConfig::paper(self.seed),
        }
    }

    fn scene(&self) -> Result<SceneConfig> {
        match &self.scene {
            Some(p) => load_scene(p),
            None => Ok(SceneConfig::motion_capture()),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn load_scene(path: &Path) -> Result<SceneConfig> {
    let text = read(path)?;
    SceneConfig::from_toml_str(&text).with_context(|| format!("parsing scene {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Sampler settings for one pose set, as `run_experiment` derives them.
fn sampler_for(scene: &SceneConfig, config: &ExperimentConfig, set: PoseSetKind) -> SamplerConfig {
    SamplerConfig {
        sensor_origin_in_r: scene.sensor_origin_in_robot().into(),
        seed: rng::derive_seed(config.sampler.seed, set.label()),
        ..config.sampler.clone()
    }
}

fn generate_poses(common: &Common, set: PoseSetKind) -> Result<()> {
    let scene = common.scene()?;
    let config = common.config();
    let n = match set {
        PoseSetKind::Optimization => config.optimization_poses,
        PoseSetKind::Validation => config.validation_poses,
    };
    let poses = generate_pose_set(
        &scene.chain_nominal,
        &sampler_for(&scene, &config, set),
        n,
        config.n_arm_angles,
    )?;
    let dir = common.out_dir()?;
    write(&dir.join(format!("{}_poses.txt", set.label())), &io::write_poses(&poses.poses))?;
    write(
        &dir.join(format!("{}_configs.txt", set.label())),
        &io::write_configs(&poses.configs),
    )?;
    eprintln!("{} poses, {} configurations", poses.poses.len(), poses.configs.len());
    Ok(())
}

fn simulate(common: &Common, configs: &Path, set: PoseSetKind) -> Result<()> {
    let scene = common.scene()?;
    let configs = io::parse_configs(&read(configs)?)?;
    let first = match set {
        PoseSetKind::Optimization => 0,
        PoseSetKind::Validation => VALIDATION_STREAM_BASE,
    };
    let data = build_dataset(&scene, &configs, first)?;
    let text = io::write_dataset(&data, scene.chain_nominal.name(), "sensor");
    write(&common.out_dir()?.join(format!("{}_dataset.txt", set.label())), &text)
}

fn load_dataset(scene: &SceneConfig, path: &Path) -> Result<CalibrationDataset> {
    let (head, data) = io::parse_dataset(&read(path)?)?;
    if head.marker != scene.marker {
        bail!("dataset tracks marker {:?}, scene uses {:?}", head.marker, scene.marker);
    }
    Ok(data)
}

fn calibrate(common: &Common, dataset: &Path) -> Result<()> {
    let scene = common.scene()?;
    let config = common.config();
    let data = load_dataset(&scene, dataset)?;
    let (initial, triple) = initial_registration(&scene, &data)?;
    let trace = metropolis_sample(&data, &scene.chain_nominal, &initial, &config.mcmc)?;
    let result = summarize(&trace, config.mcmc.burn_in)?;
    let file = CalibrationFile::new(
        scene.chain_nominal.name(),
        &scene.marker,
        triple,
        &initial,
        config.mcmc.burn_in,
        &result,
    );
    let dir = common.out_dir()?;
    write(&dir.join("trace.txt"), &io::write_trace(&trace))?;
    write(&dir.join("calibration.toml"), &file.to_toml_string())?;
    let rows = parameter_rows(&scene, &result);
    write(&dir.join("calibration_report.txt"), &io::parameter_table(&rows))?;
    print!("{}", io::parameter_table(&rows));
    Ok(())
}

fn evaluate(common: &Common, dataset: &Path, calibration: &Path, trace: &Path) -> Result<()> {
    let scene = common.scene()?;
    let config = common.config();
    let data = load_dataset(&scene, dataset)?;
    let file = CalibrationFile::from_toml_str(&read(calibration)?)?;
    let trace = io::parse_trace(&read(trace)?)?;
    let result = summarize(&trace, file.burn_in)?;
    let initial = file.initial_registration()?;
    let mut rows = dataset_metrics(
        DatasetKind::Optimization,
        &data,
        &scene.chain_nominal,
        &initial,
        &result,
    )?;
    rows.extend(theoretical_metrics(&scene, &result, &config)?);
    let text = io::metric_tables(&rows);
    write(&common.out_dir()?.join("evaluation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn validate(common: &Common, dataset: &Path, calibration: &Path) -> Result<()> {
    let scene = common.scene()?;
    let data = load_dataset(&scene, dataset)?;
    let file = CalibrationFile::from_toml_str(&read(calibration)?)?;
    let mle = file.mle();
    let result = CalibrationResult {
        std: ParameterVector::from_sampling(&file.std),
        post_burn_in_samples: vec![mle.clone()],
        acceptance_rate: file.acceptance_rate,
        mle,
    };
    let rows = dataset_metrics(
        DatasetKind::Validation,
        &data,
        &scene.chain_nominal,
        &file.initial_registration()?,
        &result,
    )?;
    let text = io::metric_tables(&rows);
    write(&common.out_dir()?.join("validation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_all(common: &Common, extra: &[PathBuf]) -> Result<()> {
    let config = common.config();
    let mut scenes = match &common.scene {
        Some(p) => vec![load_scene(p)?],
        None if extra.is_empty() => vec![SceneConfig::motion_capture(), SceneConfig::laser_tracker()],
        None => Vec::new(),
    };
    for p in extra {
        scenes.push(load_scene(p)?);
    }
    let dir = common.out_dir()?.to_path_buf();
    let mut docs = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let start = Instant::now();
        let run = run_experiment(scene, &config)
            .with_context(|| format!("scene {}", scene.label))?;
        eprintln!("scene {} done in {:.1?}", scene.label, start.elapsed());
        let sub = dir.join(&scene.label);
        fs::create_dir_all(&sub)?;
        write(&sub.join("scene.toml"), &scene.to_toml_string())?;
        write(&sub.join("optimization_poses.txt"), &io::write_poses(&run.optimization.poses))?;
        write(&sub.join("optimization_configs.txt"), &io::write_configs(&run.optimization.configs))?;
        write(&sub.join("validation_poses.txt"), &io::write_poses(&run.validation.poses))?;
        write(&sub.join("validation_configs.txt"), &io::write_configs(&run.validation.configs))?;
        let name = scene.chain_nominal.name();
        write(&sub.join("optimization_dataset.txt"), &io::write_dataset(&run.optimization_data, name, "sensor"))?;
        write(&sub.join("validation_dataset.txt"), &io::write_dataset(&run.validation_data, name, "sensor"))?;
        write(&sub.join("trace.txt"), &io::write_trace(&run.trace))?;
        write(&sub.join("calibration.toml"), &calibration_file(scene, &run.report).to_toml_string())?;
        docs.push(ReportDocument::from(&run.report));
    }
    let text = io::report_text(&docs);
    write(&dir.join("report.txt"), &text)?;
    write(&dir.join("report.json"), &io::report_json(&docs)?)?;
    print!("{text}");
    Ok(())
}

fn calibration_file(scene: &SceneConfig, report: &ExperimentReport) -> CalibrationFile {
    CalibrationFile::new(
        scene.chain_nominal.name(),
        &scene.marker,
        report.registration_triple,
        &report.initial_registration,
        report.burn_in,
        &report.calibration,
    )
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GeneratePoses { common, set } => generate_poses(common, *set),
        Command::Simulate { common, configs, set } => simulate(common, configs, *set),
        Command::Calibrate { common, dataset } => calibrate(common, dataset),
        Command::Evaluate {
            common,
            dataset,
            calibration,
            trace,
        } => evaluate(common, dataset, calibration, trace),
        Command::Validate {
            common,
            dataset,
            calibration,
        } => validate(common, dataset, calibration),
        Command::RunAll {
            common,
            extra_scenes,
        } => run_all(common, extra_scenes),
    }
}
