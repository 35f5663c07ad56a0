use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use msma::artifact::{write_atomic, RunManifest, RunStatus};
use msma::autodiff::Checkpoint;
use msma::model::{FusionMode, ModelConfig, Msma};
use msma::plot::{line_chart, scene_plot, Series};
use msma::scene::dataset::split_of;
use msma::scene::{generate_dataset, read_dataset, vectorize, write_dataset, GenerateConfig, LayoutSpec, SceneInput, Split};
use msma::train::experiments::{
    ablate_fusion, parse_summary_csv, rows_csv, summarize_rows, summary_csv, sweep_mpr, AblationKind,
    ExperimentConfig, SweepOutcome, TrialRow,
};
use msma::train::metrics::reports_csv;
use msma::train::{evaluate, load_predictor, train, Cohort, LstmBaseline, LstmConfig, Predictor, TrainConfig, TrainSchedule};
use msma::Error;

const DATASET_FILE: &str = "dataset.jsonl";
const MANIFEST_FILE: &str = "manifest.json";
const CHECKPOINT_FILE: &str = "model.ckpt";

/// Multi-source multi-agent trajectory prediction: synthetic scene
/// generation, training, evaluation, sweeps and figures.
///
/// Exit codes: 0 success, 1 other failure, 2 usage or configuration error,
/// 3 file error (missing, malformed or incompatible), 4 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "msma", version)]
struct Cli {
    /// Default parent directory of command outputs when --out is not given.
    #[arg(long, env = "MSMA_OUT_ROOT", default_value = "runs", global = true)]
    out_root: PathBuf,
    /// TOML file with [gen], [schedule], [train], [model], [lstm], [eval] and
    /// [sweep] tables; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with train/val/test index files.
    Gen(GenArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train and evaluate across a latency, noise or penetration-rate sweep.
    Sweep(SweepArgs),
    /// Draw a sweep summary table or a scene as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Layout spec TOML file, or `town` for the built-in set.
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    scenes: Option<usize>,
    /// Market penetration rate in [0, 1].
    #[arg(long)]
    mpr: Option<f64>,
    #[arg(long)]
    latency_frames: Option<usize>,
    /// Sensor noise variance in m², within [0, 0.5].
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Vehicles per simulated scene.
    #[arg(long)]
    agents: Option<usize>,
    /// Regenerate from a previous run's manifest; other settings are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Arch {
    Msma,
    Lstm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Full,
    Desk,
    Tiny,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FusionArg {
    Full,
    SensorOnly,
    CommOnly,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Full => FusionMode::Full,
            FusionArg::SensorOnly => FusionMode::SensorOnly,
            FusionArg::CommOnly => FusionMode::CommOnly,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset file, or a directory containing dataset.jsonl.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Model size preset; a [model] table in --config takes precedence.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    /// Continue from a checkpoint written by an earlier `train`.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// all, sensing or connected; repeat for several. Default: all three.
    #[arg(long)]
    cohort: Vec<String>,
    /// Scenes to evaluate. Default: test.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SweepKind {
    Latency,
    Noise,
    Mpr,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    sweep: Option<SweepKind>,
    /// Comma-separated sweep values. Defaults: latency 1..15 frames, noise
    /// 0..0.5 in steps of 0.1, penetration 0, 0.2, …, 0.8.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    scenes: Option<usize>,
    /// Seed of the generated data.
    #[arg(long)]
    seed: Option<u64>,
    /// Penetration rate of the latency and noise sweeps.
    #[arg(long)]
    mpr: Option<f64>,
    #[arg(long)]
    layout: Option<String>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Ade,
    Fde,
    Mr,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Sweep summary table (sweep_summary.csv) to chart.
    #[arg(long, conflicts_with = "data")]
    table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ade")]
    metric: MetricArg,
    /// Dataset holding the scene to draw.
    #[arg(long, requires = "scene_id")]
    data: Option<PathBuf>,
    #[arg(long)]
    scene_id: Option<u64>,
    /// Draw this model's best-mode predictions on the scene.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `--config` file contents.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    gen: GenSettings,
    schedule: Option<TrainSchedule>,
    train: TrainSettings,
    model: Option<ModelConfig>,
    lstm: Option<LstmConfig>,
    eval: EvalSettings,
    sweep: SweepSettings,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    cohorts: Vec<String>,
    split: Option<SplitArg>,
}

/// `[gen]` table: generation settings plus the layout source.
#[derive(Debug, Clone)]
struct GenSettings {
    layout: String,
    generate: GenerateConfig,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            layout: "town".into(),
            generate: GenerateConfig::default(),
        }
    }
}

impl<'de> Deserialize<'de> for GenSettings {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let layout = match table.remove("layout") {
            Some(toml::Value::String(s)) => s,
            Some(other) => return Err(D::Error::custom(format!("layout must be a string, found {other}"))),
            None => "town".into(),
        };
        let known = toml::Table::try_from(GenerateConfig::default()).map_err(D::Error::custom)?;
        if let Some(k) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(D::Error::custom(format!("unknown field `{k}` in [gen]")));
        }
        let generate = table.try_into().map_err(D::Error::custom)?;
        Ok(Self { layout, generate })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    arch: Arch,
    fusion: FusionArg,
    clip_norm: f64,
    weight_decay: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            arch: Arch::Msma,
            fusion: FusionArg::Full,
            clip_norm: t.clip_norm,
            weight_decay: t.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSettings {
    kind: Option<SweepKind>,
    values: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    scenes: Option<usize>,
    data_seed: Option<u64>,
    mpr: Option<f64>,
    layout: Option<String>,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Param(_) | Error::Empty(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Incompatible(_) => 3,
            Error::Numerical(_) => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| file_error(p, e))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let out_dir = |out: &Option<PathBuf>, name: &str| out.clone().unwrap_or_else(|| cli.out_root.join(name));
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &file, &out_dir(&a.out, "gen")),
        Command::Train(a) => cmd_train(a, &file, &out_dir(&a.out, "train")),
        Command::Eval(a) => cmd_eval(a, &file, &out_dir(&a.out, "eval")),
        Command::Sweep(a) => cmd_sweep(a, &file, &out_dir(&a.out, "sweep")),
        Command::Plot(a) => cmd_plot(a, &out_dir(&a.out, "plot.svg")),
    }
}

fn load_layout(source: &str) -> CliResult<LayoutSpec> {
    if source == "town" {
        return Ok(LayoutSpec::town());
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    LayoutSpec::parse(&text).map_err(|e| usage(format!("{source}: {e}")))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| file_error(dir, e))
}

fn dataset_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(DATASET_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_scenes(path: &Path) -> CliResult<(Vec<SceneInput>, Vec<Split>)> {
    if !path.exists() {
        return Err(file_error(path, "dataset not found"));
    }
    let records = read_dataset(path).map_err(|e| match e {
        Error::Parse { line, msg } => file_error(path, format!("line {line}: {msg}")),
        other => Failure::from(other),
    })?;
    let splits = records.iter().map(|r| split_of(r.scene_id)).collect();
    let scenes = records.iter().map(vectorize).collect::<msma::Result<Vec<_>>>()?;
    Ok((scenes, splits))
}

#[derive(Serialize, Deserialize)]
struct GenRecord {
    layout: LayoutSpec,
    generate: GenerateConfig,
}

fn cmd_gen(a: &GenArgs, file: &FileConfig, out: &Path) -> CliResult {
    let resolved = match &a.manifest {
        Some(p) => {
            let m = RunManifest::read(p).map_err(|e| file_error(p, e))?;
            if m.command != "gen" {
                return Err(usage(format!("{} is a `{}` manifest, not `gen`", p.display(), m.command)));
            }
            m.config_as::<GenRecord>()?
        }
        None => {
            let mut g = file.gen.generate.clone();
            let layout = load_layout(a.layout.as_deref().unwrap_or(&file.gen.layout))?;
            if let Some(v) = a.scenes {
                g.scenes = v;
            }
            if let Some(v) = a.mpr {
                g.mpr = v;
            }
            if let Some(v) = a.latency_frames {
                g.latency_frames = v;
            }
            if let Some(v) = a.noise_var {
                g.noise_variance = v;
            }
            if let Some(v) = a.seed {
                g.seed = v;
            }
            if let Some(v) = a.agents {
                g.agents = v;
            }
            GenRecord { layout, generate: g }
        }
    };
    resolved.generate.validate().map_err(|e| usage(e.to_string()))?;
    resolved.layout.validate().map_err(|e| usage(e.to_string()))?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("gen", resolved.generate.seed, &resolved)?;
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let records = generate_dataset(&resolved.layout, &resolved.generate)?;
    write_dataset(&out.join(DATASET_FILE), &records)?;
    manifest.add_output(out, DATASET_FILE)?;
    for (split, name) in [(Split::Train, "train.txt"), (Split::Val, "val.txt"), (Split::Test, "test.txt")] {
        let ids: String = records
            .iter()
            .filter(|r| split_of(r.scene_id) == split)
            .map(|r| format!("{}\n", r.scene_id))
            .collect();
        write_atomic(&out.join(name), ids.as_bytes())?;
        manifest.add_output(out, name)?;
    }
    manifest.status = RunStatus::Complete;
    manifest.write(&manifest_path)?;
    println!("wrote {} scenes to {}", records.len(), out.join(DATASET_FILE).display());
    Ok(())
}

fn preset(p: Preset) -> ModelConfig {
    match p {
        Preset::Full => ModelConfig::default(),
        Preset::Desk => ModelConfig::desk(),
        Preset::Tiny => ModelConfig {
            history: 30,
            horizon: 50,
            ..ModelConfig::tiny()
        },
    }
}

fn read_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(file_error(path, "checkpoint not found"));
    }
    Ok(Checkpoint::read(path)?)
}

fn check_compatible(ck: &Checkpoint, scenes: &[SceneInput]) -> CliResult {
    let model = load_predictor(ck)?;
    let (history, horizon) = (model.history(), model.horizon());
    if let Some(s) = scenes.first() {
        let h = s.agents[0].truth_history.len();
        let f = s.agents[0].future.len();
        if h != history || f != horizon {
            return Err(Error::Incompatible(format!(
                "model expects {history} history / {horizon} future frames, dataset has {h} / {f}"
            ))
            .into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    data: String,
    arch: Arch,
    model: Option<&'a ModelConfig>,
    lstm: Option<&'a LstmConfig>,
    schedule: &'a TrainSchedule,
    fusion: FusionArg,
    clip_norm: f64,
    weight_decay: f64,
    resume: Option<String>,
    start_epoch: usize,
}

fn cmd_train(a: &TrainArgs, file: &FileConfig, out: &Path) -> CliResult {
    let data = dataset_path(&a.data);
    let (scenes, splits) = load_scenes(&data)?;
    let pick = |s: Split| -> Vec<SceneInput> {
        scenes.iter().zip(&splits).filter(|(_, x)| **x == s).map(|(c, _)| c.clone()).collect()
    };
    let (train_set, val_set) = (pick(Split::Train), pick(Split::Val));

    let mut schedule = file.schedule.clone().unwrap_or_default();
    if let Some(v) = a.epochs {
        schedule.epochs = v;
    }
    if let Some(v) = a.lr {
        schedule.base_lr = v;
    }
    if let Some(v) = a.batch {
        schedule.batch_size = v;
    }
    if let Some(v) = a.seed {
        schedule.seed = v;
    }
    schedule.validate().map_err(|e| usage(e.to_string()))?;
    let fusion = a.fusion.unwrap_or(file.train.fusion);

    let (mut model, start_epoch): (Box<dyn Predictor>, usize) = match &a.resume {
        Some(p) => {
            let ck = read_checkpoint(p)?;
            let done: usize = ck.meta.get("epochs_completed").and_then(|v| v.parse().ok()).unwrap_or(0);
            if done >= schedule.epochs {
                return Err(usage(format!(
                    "checkpoint already completed {done} epochs; pass --epochs above that to continue"
                )));
            }
            check_compatible(&ck, &train_set)?;
            (load_predictor(&ck)?, done)
        }
        None => {
            let arch = a.arch.unwrap_or(file.train.arch);
            let m: Box<dyn Predictor> = match arch {
                Arch::Msma => {
                    let cfg = file.model.clone().unwrap_or_else(|| preset(a.preset.unwrap_or(Preset::Desk)));
                    Box::new(Msma::new(cfg, schedule.seed).map_err(|e| usage(e.to_string()))?)
                }
                Arch::Lstm => {
                    let cfg = file.lstm.clone().unwrap_or_default();
                    Box::new(LstmBaseline::new(cfg, schedule.seed).map_err(|e| usage(e.to_string()))?)
                }
            };
            (m, 0)
        }
    };
    let ck0 = model.checkpoint()?;
    let arch = if ck0.meta.get("model_kind").map(String::as_str) == Some("lstm") {
        Arch::Lstm
    } else {
        Arch::Msma
    };
    let model_cfg = match arch {
        Arch::Msma => Some(Msma::from_checkpoint(&ck0)?.config),
        Arch::Lstm => None,
    };
    let lstm_cfg = match arch {
        Arch::Lstm => Some(LstmBaseline::from_checkpoint(&ck0)?.config),
        Arch::Msma => None,
    };
    check_compatible(&ck0, &train_set)?;

    create_dir(out)?;
    let record = TrainRecord {
        data: data.display().to_string(),
        arch,
        model: model_cfg.as_ref(),
        lstm: lstm_cfg.as_ref(),
        schedule: &schedule,
        fusion,
        clip_norm: file.train.clip_norm,
        weight_decay: file.train.weight_decay,
        resume: a.resume.as_ref().map(|p| p.display().to_string()),
        start_epoch,
    };
    let mut manifest = RunManifest::new("train", schedule.seed, &record)?;
    manifest.add_input(&data)?;
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let cfg = TrainConfig {
        schedule: schedule.clone(),
        fusion: fusion.into(),
        clip_norm: file.train.clip_norm,
        weight_decay: file.train.weight_decay,
        start_epoch,
        ..TrainConfig::default()
    };
    let result = train(model.as_mut(), &train_set, &val_set, &cfg);
    // a failed run keeps the best parameters so far; resuming restarts its epochs
    let mut ck = model.checkpoint()?.with_meta("train_seed", schedule.seed);
    let curve = match &result {
        Ok(r) => {
            ck = ck.with_meta("epochs_completed", schedule.epochs).with_meta("best_epoch", r.best_epoch);
            Some(r.curve_csv())
        }
        Err(_) => {
            ck = ck.with_meta("epochs_completed", start_epoch);
            None
        }
    };
    ck.write(&out.join(CHECKPOINT_FILE))?;
    manifest.add_output(out, CHECKPOINT_FILE)?;
    if let Some(curve) = curve {
        write_atomic(&out.join("loss_curve.csv"), curve.as_bytes())?;
        manifest.add_output(out, "loss_curve.csv")?;
    }
    match result {
        Ok(r) => {
            manifest.status = RunStatus::Complete;
            manifest.write(&manifest_path)?;
            let last = r.curve.last();
            println!(
                "trained epochs {start_epoch}..{}: final loss {:.4}, best epoch {} (val ADE {})",
                schedule.epochs,
                last.map_or(f64::NAN, |e| e.train_loss),
                r.best_epoch,
                r.curve
                    .iter()
                    .find(|e| e.epoch == r.best_epoch)
                    .and_then(|e| e.val_ade)
                    .map_or("n/a".into(), |v| format!("{v:.4} m"))
            );
            Ok(())
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.failures.push(e.to_string());
            manifest.write(&manifest_path)?;
            Err(e.into())
        }
    }
}

fn cmd_eval(a: &EvalArgs, file: &FileConfig, out: &Path) -> CliResult {
    let names = if a.cohort.is_empty() { &file.eval.cohorts } else { &a.cohort };
    let split = a.split.or(file.eval.split).unwrap_or(SplitArg::Test);
    let cohorts = if names.is_empty() {
        Cohort::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|c| c.parse::<Cohort>().map_err(|e| usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?
    };
    let ck = read_checkpoint(&a.checkpoint)?;
    let data = dataset_path(&a.data);
    let (scenes, splits) = load_scenes(&data)?;
    check_compatible(&ck, &scenes)?;
    let model = load_predictor(&ck)?;
    let chosen: Vec<SceneInput> = scenes
        .into_iter()
        .zip(&splits)
        .filter(|(_, s)| match split {
            SplitArg::All => true,
            SplitArg::Train => **s == Split::Train,
            SplitArg::Val => **s == Split::Val,
            SplitArg::Test => **s == Split::Test,
        })
        .map(|(c, _)| c)
        .collect();
    let fusion = a.fusion.unwrap_or(file.train.fusion);

    create_dir(out)?;
    #[derive(Serialize)]
    struct EvalRecord {
        checkpoint: String,
        data: String,
        split: SplitArg,
        fusion: FusionArg,
        cohorts: Vec<Cohort>,
    }
    let record = EvalRecord {
        checkpoint: a.checkpoint.display().to_string(),
        data: data.display().to_string(),
        split,
        fusion,
        cohorts: cohorts.clone(),
    };
    let mut manifest = RunManifest::new("eval", 0, &record)?;
    manifest.add_input(&a.checkpoint)?;
    manifest.add_input(&data)?;
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let reports = evaluate(model.as_ref(), &chosen, &cohorts, fusion.into())?;
    write_atomic(&out.join("metrics.csv"), reports_csv(&reports).as_bytes())?;
    manifest.add_output(out, "metrics.csv")?;
    manifest.status = RunStatus::Complete;
    manifest.write(&manifest_path)?;
    println!("{} scenes", chosen.len());
    for r in &reports {
        match &r.metrics {
            Some(m) => println!(
                "{:<10} agents {:>6}  ADE {:.4} m  FDE {:.4} m  MR {:.4}",
                r.cohort.name(),
                r.agents,
                m.ade,
                m.fde,
                m.mr
            ),
            None => println!("{:<10} agents      0  (empty cohort)", r.cohort.name()),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    kind: SweepKind,
    values: &'a [f64],
    mpr: f64,
    layout: &'a LayoutSpec,
    experiment: &'a ExperimentConfig,
}

fn cmd_sweep(a: &SweepArgs, file: &FileConfig, out: &Path) -> CliResult {
    let s = &file.sweep;
    let kind = a
        .sweep
        .or(s.kind)
        .ok_or_else(|| usage("--sweep latency|noise|mpr is required"))?;
    let values = a.values.clone().or_else(|| s.values.clone()).unwrap_or_else(|| match kind {
        SweepKind::Latency => (1..=15).map(f64::from).collect(),
        SweepKind::Noise => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        SweepKind::Mpr => vec![0.0, 0.2, 0.4, 0.6, 0.8],
    });
    if values.is_empty() {
        return Err(usage("empty sweep"));
    }
    let bad = values.iter().find(|&&v| match kind {
        SweepKind::Latency => !(v >= 0.0 && v.fract() == 0.0),
        SweepKind::Noise => !(0.0..=0.5).contains(&v),
        SweepKind::Mpr => !(0.0..=1.0).contains(&v),
    });
    if let Some(v) = bad {
        return Err(usage(format!("{v} is not a valid {} value", kind_name(kind))));
    }
    let layout = load_layout(a.layout.as_deref().or(s.layout.as_deref()).unwrap_or(&file.gen.layout))?;
    let mut exp = ExperimentConfig::default();
    if let Some(v) = a.seeds.clone().or_else(|| s.seeds.clone()) {
        exp.seeds = v;
    }
    if let Some(v) = a.scenes.or(s.scenes) {
        exp.scenes = v;
    }
    if let Some(v) = a.seed.or(s.data_seed) {
        exp.data_seed = v;
    }
    if let Some(m) = &file.model {
        exp.model = m.clone();
    } else if let Some(p) = a.preset {
        exp.model = preset(p);
    }
    if let Some(sch) = &file.schedule {
        exp.schedule = sch.clone();
    }
    if let Some(v) = a.epochs {
        exp.schedule.epochs = v;
    }
    if let Some(v) = a.lr {
        exp.schedule.base_lr = v;
    }
    if let Some(v) = a.batch {
        exp.schedule.batch_size = v;
    }
    exp.agents = file.gen.generate.agents;
    exp.schedule.validate().map_err(|e| usage(e.to_string()))?;
    exp.model.validate().map_err(|e| usage(e.to_string()))?;
    if exp.seeds.is_empty() || exp.scenes == 0 {
        return Err(usage("a sweep needs at least one seed and one scene"));
    }
    let mpr = a.mpr.or(s.mpr).unwrap_or(0.8);

    create_dir(out)?;
    let record = SweepRecord {
        kind,
        values: &values,
        mpr,
        layout: &layout,
        experiment: &exp,
    };
    let mut manifest = RunManifest::new("sweep", exp.data_seed, &record)?;
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let runs_path = out.join("sweep_runs.csv");
    let mut done: Vec<TrialRow> = Vec::new();
    let mut progress = |row: &TrialRow| {
        done.push(row.clone());
        let ade = row.report.metrics.as_ref().map_or("n/a".into(), |m| format!("{:.4}", m.ade));
        println!("{}={} {} seed {}: ADE {ade}", row.sweep, row.value, row.variant, row.seed);
        // keep finished points on disk if a later one fails
        let _ = write_atomic(&runs_path, rows_csv(&done).as_bytes());
    };
    let outcome: SweepOutcome = match kind {
        SweepKind::Latency => ablate_fusion(AblationKind::Latency, &values, &layout, mpr, &exp, &mut progress),
        SweepKind::Noise => ablate_fusion(AblationKind::Noise, &values, &layout, mpr, &exp, &mut progress),
        SweepKind::Mpr => sweep_mpr(&values, &layout, &exp, &mut progress),
    }
    .map_err(|e| usage(e.to_string()))?;

    write_atomic(&runs_path, rows_csv(&outcome.rows).as_bytes())?;
    manifest.add_output(out, "sweep_runs.csv")?;
    let summary = summarize_rows(&outcome.rows);
    write_atomic(&out.join("sweep_summary.csv"), summary_csv(&summary).as_bytes())?;
    manifest.add_output(out, "sweep_summary.csv")?;
    if !summary.is_empty() {
        let svg = chart(&summary, MetricArg::Ade);
        write_atomic(&out.join("sweep.svg"), svg.as_bytes())?;
        manifest.add_output(out, "sweep.svg")?;
    }
    manifest.failures = outcome.failures.clone();
    manifest.status = if outcome.failures.is_empty() {
        RunStatus::Complete
    } else {
        RunStatus::Failed
    };
    manifest.write(&manifest_path)?;
    for r in &summary {
        println!(
            "{}={} {:<12} ADE {:.4} ± {:.4} m over {} runs",
            r.sweep, r.value, r.variant, r.ade_mean, r.ade_se, r.runs
        );
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("{} sweep runs failed: {}", outcome.failures.len(), outcome.failures.join("; ")),
        })
    }
}

fn kind_name(k: SweepKind) -> &'static str {
    match k {
        SweepKind::Latency => "latency (whole frames)",
        SweepKind::Noise => "noise variance (0 to 0.5 m²)",
        SweepKind::Mpr => "penetration rate (0 to 1)",
    }
}

fn chart(rows: &[msma::train::experiments::SummaryRow], metric: MetricArg) -> String {
    let sweep = rows[0].sweep.as_str();
    let x_label = match sweep {
        "latency" => "communication latency (frames)",
        "noise" => "sensor noise variance (m²)",
        "mpr" => "market penetration rate (fraction)",
        other => other,
    };
    let (y_label, name) = match metric {
        MetricArg::Ade => ("ADE (m)", "ADE"),
        MetricArg::Fde => ("FDE (m)", "FDE"),
        MetricArg::Mr => ("miss rate (fraction)", "MR"),
    };
    let mut variants: Vec<&str> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    let series: Vec<Series> = variants
        .iter()
        .map(|v| Series {
            name: v.to_string(),
            points: rows
                .iter()
                .filter(|r| r.variant == *v)
                .map(|r| match metric {
                    MetricArg::Ade => (r.value, r.ade_mean, r.ade_se),
                    MetricArg::Fde => (r.value, r.fde_mean, 0.0),
                    MetricArg::Mr => (r.value, r.mr_mean, 0.0),
                })
                .collect(),
        })
        .collect();
    line_chart(&format!("{name} versus {sweep}"), x_label, y_label, &series)
}

fn cmd_plot(a: &PlotArgs, out: &Path) -> CliResult {
    let svg = if let Some(table) = &a.table {
        let text = fs::read_to_string(table).map_err(|e| file_error(table, e))?;
        let rows = parse_summary_csv(&text).map_err(|e| match e {
            Error::Empty(m) => usage(format!("{}: {m}", table.display())),
            other => file_error(table, other),
        })?;
        if rows.is_empty() {
            return Err(usage(format!("{}: empty sweep table", table.display())));
        }
        chart(&rows, a.metric)
    } else if let (Some(data), Some(id)) = (&a.data, a.scene_id) {
        let path = dataset_path(data);
        if !path.exists() {
            return Err(file_error(&path, "dataset not found"));
        }
        let records = read_dataset(&path).map_err(|e| file_error(&path, e))?;
        let rec = records
            .iter()
            .find(|r| r.scene_id == id)
            .ok_or_else(|| usage(format!("scene {id} not in {}", path.display())))?;
        let pred = match &a.checkpoint {
            Some(p) => {
                let ck = read_checkpoint(p)?;
                let scene = vectorize(rec)?;
                check_compatible(&ck, std::slice::from_ref(&scene))?;
                Some(load_predictor(&ck)?.predict(&scene, FusionMode::Full)?)
            }
            None => None,
        };
        scene_plot(rec, pred.as_ref())
    } else {
        return Err(usage("plot needs --table, or --data with --scene-id"));
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_atomic(out, svg.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
