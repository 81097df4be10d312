//! Command-line front end. Exit codes: 0 success, 1 failed check or
//! validation, 2 usage, 3 I/O.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbones::{Backbone, BackboneConfig, BackboneKind};
use crate::equivariance::{check_equivariance, PoolMode};
use crate::nn::ParameterSet;
use crate::pipeline::{
    ablation_csv, load_train_data, run_ablation, save_checkpoint, train, Augmentation, EvalOptions, MetricsLog,
    PipelineError, SplitSizes, TrainConfig, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE,
};
use crate::pointcloud::{ChannelLayout, DatasetManifest, PointCloud, RotationMode};
use crate::rotgroup::{format_group, verify_group, GroupError, RotationGroup, BUILTIN_GROUPS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Name of the resolved-settings file written beside command outputs.
pub const RESOLVED_FILE: &str = "resolved.toml";

#[derive(Debug, Parser)]
#[command(name = "rotequiv", version, about = "Rotation-equivariant point-cloud recognition")]
pub struct Cli {
    /// Seed for every random choice; overrides a config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect the built-in rotation groups.
    Groups {
        #[command(subcommand)]
        action: GroupsAction,
    },
    /// Convert raw data into the native dataset format.
    Prepare(PrepareArgs),
    /// Train a group-wrapped classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint with test-time rotation averaging.
    Eval(EvalArgs),
    /// Check the branch-permutation property on random clouds.
    EquivCheck(EquivArgs),
    /// Train and evaluate one model per group size.
    Ablate(AblateArgs),
}

#[derive(Debug, Subcommand)]
pub enum GroupsAction {
    List,
    Print {
        name: String,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    Verify {
        name: String,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Idx,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RotateArg {
    None,
    Z,
    So3,
}

impl RotateArg {
    fn mode(self) -> Option<RotationMode> {
        match self {
            RotateArg::None => None,
            RotateArg::Z => Some(RotationMode::Z),
            RotateArg::So3 => Some(RotationMode::So3),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    /// IDX image file (gzip accepted).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file (gzip accepted).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Training clouds (idx: total; synth: per class).
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Random per-cloud rotation baked into every split.
    #[arg(long, value_enum, default_value_t = RotateArg::None)]
    pub rotate: RotateArg,
    /// Comma-separated shape classes for `synth`.
    #[arg(long, value_delimiter = ',', default_values_t = ["sphere", "cube", "cylinder", "cone", "torus"].map(String::from))]
    pub shapes: Vec<String>,
    #[serde(skip)]
    #[arg(skip)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML config; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub backbone: Option<BackboneKind>,
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub augmentation: Option<Augmentation>,
    #[arg(long)]
    pub pool: Option<PoolMode>,
    #[arg(long)]
    pub width: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Model config; defaults to the one saved beside the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; defaults to the one named in the config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 1)]
    pub rotations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Z)]
    pub mode: ModeArg,
    /// Directory for the metrics log and resolved settings.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Z,
    So3,
}

impl From<ModeArg> for RotationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Z => RotationMode::Z,
            ModeArg::So3 => RotationMode::So3,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EquivArgs {
    #[arg(long)]
    pub group: String,
    #[arg(long)]
    pub backbone: BackboneKind,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long, default_value_t = 0.25)]
    pub width: f64,
    /// Enable cross-branch injection (`hier_lite`).
    #[arg(long)]
    pub inject: bool,
    /// Residual tolerance; defaults to 1e-9, or 1e-6 for `hier_lite`.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated group sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub rotations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Z)]
    pub mode: ModeArg,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn check(message: impl Display) -> Self {
        Self {
            code: EXIT_CHECK,
            message: message.to_string(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_io() {
            EXIT_IO
        } else if matches!(e, PipelineError::Group(GroupError::UnknownGroup(_))) {
            EXIT_USAGE
        } else {
            EXIT_CHECK
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<crate::pointcloud::PointCloudError> for Failure {
    fn from(e: crate::pointcloud::PointCloudError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<crate::equivariance::EquivError> for Failure {
    fn from(e: crate::equivariance::EquivError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<crate::nn::NnError> for Failure {
    fn from(e: crate::nn::NnError) -> Self {
        PipelineError::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        // a second call fails once a pool exists; keeping that pool is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Groups { action } => groups(action),
        Command::Prepare(mut a) => {
            a.seed = cli.seed.unwrap_or(0);
            prepare(&a)
        }
        Command::Train(a) => train_cmd(&a, cli.seed),
        Command::Eval(a) => eval_cmd(&a, cli.seed.unwrap_or(0)),
        Command::EquivCheck(a) => equiv_cmd(&a, cli.seed.unwrap_or(0)),
        Command::Ablate(a) => ablate_cmd(&a, cli.seed),
    }
}

fn group_or_usage(name: &str, dim: usize) -> Result<RotationGroup, Failure> {
    RotationGroup::by_name(name, dim).map_err(|e| match e {
        GroupError::UnknownGroup(_) | GroupError::RequiresThreeDimensions(_) | GroupError::BadDimension(_) => {
            Failure::usage(e)
        }
        other => Failure::check(other),
    })
}

fn groups(action: GroupsAction) -> CmdResult {
    match action {
        GroupsAction::List => {
            for name in BUILTIN_GROUPS {
                let g = RotationGroup::by_name(name, 3).expect("built-in group");
                let dims = if RotationGroup::by_name(name, 2).is_ok() { "2,3" } else { "3" };
                println!("{name} order={} dims={dims}", g.order());
            }
            Ok(())
        }
        GroupsAction::Print { name, dim } => {
            print!("{}", format_group(&group_or_usage(&name, dim)?));
            Ok(())
        }
        GroupsAction::Verify { name, dim } => {
            let g = group_or_usage(&name, dim)?;
            let report = verify_group(&g);
            println!("{}", report.summary());
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::check(format!("{name} failed verification")))
            }
        }
    }
}

fn write_resolved<T: Serialize>(dir: &Path, value: &T) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let path = dir.join(RESOLVED_FILE);
    let text = toml::to_string(value).map_err(Failure::check)?;
    fs::write(&path, text).map_err(|e| Failure::io(&path, e))
}

fn prepare(a: &PrepareArgs) -> CmdResult {
    let summary = match a.source {
        Source::Idx => {
            let (Some(images), Some(labels)) = (&a.images, &a.labels) else {
                return Err(Failure::usage("--source idx needs --images and --labels"));
            };
            let sizes = SplitSizes {
                train: a.train.unwrap_or(2000),
                val: a.val.unwrap_or(500),
                test: a.test.unwrap_or(1000),
            };
            crate::pipeline::prepare_idx(images, labels, &a.out, a.points, sizes, a.rotate.mode(), a.seed)?
        }
        Source::Synth => {
            let sizes = SplitSizes {
                train: a.train.unwrap_or(400),
                val: a.val.unwrap_or(50),
                test: a.test.unwrap_or(100),
            };
            crate::pipeline::prepare_synth(&a.out, &a.shapes, a.points, sizes, a.rotate.mode(), a.seed)?
        }
    };
    #[derive(Serialize)]
    struct Resolved<'a> {
        seed: u64,
        #[serde(flatten)]
        args: &'a PrepareArgs,
    }
    write_resolved(&a.out, &Resolved { seed: a.seed, args: a })?;
    let m = &summary.manifest;
    for (split, entry) in m.split_entries() {
        println!(
            "{split}: {} records of {}x{} ({})",
            entry.size,
            m.points_per_cloud,
            m.channels.feature_width(true),
            m.channels
        );
    }
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn resolve_train_config(a: &TrainArgs, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = &a.manifest {
        cfg.manifest = v.clone();
    }
    if let Some(v) = a.backbone {
        cfg.backbone = v;
    }
    if let Some(v) = &a.group {
        cfg.group = v.clone();
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.augmentation {
        cfg.augmentation = v;
    }
    if let Some(v) = a.pool {
        cfg.pool = v;
    }
    if let Some(v) = a.width {
        cfg.width = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.manifest.as_os_str().is_empty() {
        return Err(Failure::usage("no dataset manifest (use --manifest or set `manifest` in the config)"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> CmdResult {
    let cfg = resolve_train_config(a, seed)?;
    let (m, data) = load_train_data(&cfg.manifest)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    cfg.save(&a.out.join(CONFIG_FILE))?;
    let mut log = MetricsLog::create(&a.out.join(METRICS_FILE), true)?;
    log.record(
        "start",
        &[
            ("dataset", &m.name),
            ("backbone", &cfg.backbone),
            ("group", &cfg.group),
            ("train", &data.train.len()),
            ("val", &data.val.len()),
        ],
    )?;
    let mut log_err = None;
    let out = train(&cfg, &data, &mut |r| {
        let val = r.val_accuracy.map_or("na".to_string(), |v| format!("{v:.6}"));
        let res = log.record(
            "epoch",
            &[
                ("epoch", &r.epoch),
                ("loss", &format!("{:.6}", r.loss)),
                ("val_acc", &val),
                ("seconds", &format!("{:.2}", r.seconds)),
            ],
        );
        if let Err(e) = res {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let ckpt = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &out.params, Some(&out.adam))?;
    log.record("checkpoint", &[("path", &ckpt.display())])?;
    Ok(())
}

fn eval_cmd(a: &EvalArgs, seed: u64) -> CmdResult {
    let config_path = match &a.config {
        Some(p) => p.clone(),
        None => a
            .checkpoint
            .parent()
            .map(|d| d.join(CONFIG_FILE))
            .unwrap_or_else(|| PathBuf::from(CONFIG_FILE)),
    };
    let cfg = TrainConfig::load(&config_path)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| cfg.manifest.clone());
    if a.rotations == 0 {
        return Err(Failure::usage("--rotations must be at least 1"));
    }
    let opts = EvalOptions {
        rotations: a.rotations,
        mode: a.mode.into(),
        seed,
    };
    let r = crate::pipeline::evaluate_checkpoint(&a.checkpoint, &cfg, &manifest, &a.split, &opts)?;
    let fields: [(&str, &dyn Display); 5] = [
        ("split", &a.split),
        ("rotations", &r.rotations),
        ("mode", &a.mode.to_possible_value().expect("value").get_name().to_string()),
        ("instance_acc", &format!("{:.6}", r.instance_accuracy)),
        ("class_acc", &format!("{:.6}", r.class_accuracy)),
    ];
    match &a.out {
        Some(dir) => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                seed: u64,
                config: &'a Path,
                manifest: &'a Path,
                #[serde(flatten)]
                args: &'a EvalArgs,
            }
            write_resolved(
                dir,
                &Resolved {
                    seed,
                    config: &config_path,
                    manifest: &manifest,
                    args: a,
                },
            )?;
            let mut log = MetricsLog::create(&dir.join(METRICS_FILE), true)?;
            log.record("eval", &fields)?;
            let mut confusion = String::from("true,");
            confusion.push_str(&(0..r.confusion.len()).map(|c| c.to_string()).collect::<Vec<_>>().join(","));
            confusion.push('\n');
            for (c, row) in r.confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                confusion.push_str(&format!("{c},{}\n", cells.join(",")));
            }
            let path = dir.join("confusion.csv");
            fs::write(&path, confusion).map_err(|e| Failure::io(&path, e))?;
        }
        None => println!("{}", crate::pipeline::format_record("eval", &fields)),
    }
    Ok(())
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointCloud {
    let coords = ndarray::Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
    PointCloud::new(coords, 0).expect("finite coordinates")
}

fn equiv_cmd(a: &EquivArgs, seed: u64) -> CmdResult {
    let group = group_or_usage(&a.group, a.dim)?;
    let cfg = BackboneConfig {
        inject: a.inject,
        centroids: 16.min(a.points),
        knn: 8.min(a.points),
        ..BackboneConfig::new(a.backbone).with_width(a.width)
    };
    let layout = ChannelLayout {
        spatial_dim: a.dim,
        normals: false,
        intensity: false,
    };
    let backbone = Backbone::new(cfg, layout).map_err(Failure::usage)?;
    let tol = a.tol.unwrap_or(if a.backbone == BackboneKind::HierLite { 1e-6 } else { 1e-9 });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ParameterSet::init(&backbone.param_specs(), &mut rng);
    let mut log = match &a.out {
        Some(dir) => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                seed: u64,
                tol: f64,
                #[serde(flatten)]
                args: &'a EquivArgs,
            }
            write_resolved(dir, &Resolved { seed, tol, args: a })?;
            Some(MetricsLog::create(&dir.join(METRICS_FILE), false)?)
        }
        None => None,
    };
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for sample in 0..a.samples {
        let pc = random_cloud(&mut rng, a.points, a.dim);
        for r in 0..group.order() {
            let rep = check_equivariance(&group, &backbone, &params, &pc, r, tol)?;
            worst = worst.max(rep.residual);
            failures += usize::from(!rep.passed);
            let fields: [(&str, &dyn Display); 5] = [
                ("group", &rep.group),
                ("element", &r),
                ("sample", &sample),
                ("residual", &format!("{:.3e}", rep.residual)),
                ("pass", &rep.passed),
            ];
            println!("{}", crate::pipeline::format_record("equiv", &fields));
            if let Some(log) = log.as_mut() {
                log.record("equiv", &fields)?;
            }
        }
    }
    if failures == 0 {
        println!("PASS worst residual {worst:.3e} < {tol:e}");
        Ok(())
    } else {
        println!("FAIL worst residual {worst:.3e} >= {tol:e} ({failures} failing checks)");
        Err(Failure::check("equivariance check failed"))
    }
}

fn ablate_cmd(a: &AblateArgs, seed: Option<u64>) -> CmdResult {
    let cfg = resolve_train_config(&a.train, seed)?;
    let (m, data) = load_train_data(&cfg.manifest)?;
    let test = m.read_split("test")?;
    let out = &a.train.out;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    cfg.save(&out.join(CONFIG_FILE))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        sizes: &'a [usize],
        rotations: usize,
        mode: ModeArg,
    }
    write_resolved(
        out,
        &Resolved {
            sizes: &a.sizes,
            rotations: a.rotations,
            mode: a.mode,
        },
    )?;
    let opts = EvalOptions {
        rotations: a.rotations,
        mode: a.mode.into(),
        seed: cfg.seed,
    };
    let mut log = MetricsLog::create(&out.join(METRICS_FILE), true)?;
    let rows = run_ablation(&cfg, &data, &test, &a.sizes, &opts, &mut |group, r| {
        let _ = log.record(
            "epoch",
            &[
                ("group", &group),
                ("epoch", &r.epoch),
                ("loss", &format!("{:.6}", r.loss)),
                ("seconds", &format!("{:.2}", r.seconds)),
            ],
        );
    })?;
    for r in &rows {
        log.record(
            "ablation",
            &[
                ("group", &r.group),
                ("size", &r.size),
                ("instance_acc", &format!("{:.6}", r.result.instance_accuracy)),
                ("class_acc", &format!("{:.6}", r.result.class_accuracy)),
                ("train_seconds", &format!("{:.2}", r.train_seconds)),
            ],
        )?;
    }
    let path = out.join("ablation.csv");
    fs::write(&path, ablation_csv(&rows)).map_err(|e| Failure::io(&path, e))?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}

/// Loads a manifest, mapping failures to CLI exit codes.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    Ok(DatasetManifest::load(path)?)
}
