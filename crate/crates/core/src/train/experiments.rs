//! Paired training runs behind the fusion ablation, the penetration-rate
//! sweep and the baseline comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, Cohort, LstmBaseline, LstmConfig, MetricsReport, Predictor, TrainConfig, TrainSchedule};
use crate::error::{Error, Result};
use crate::model::{FusionMode, ModelConfig, Msma};
use crate::scene::dataset::split_of;
use crate::scene::{generate_dataset, vectorize, GenerateConfig, LayoutSpec, SceneInput, SceneRecord, Split};

/// Vectorized scenes by split.
#[derive(Debug, Clone, Default)]
pub struct SplitScenes {
    pub train: Vec<SceneInput>,
    pub val: Vec<SceneInput>,
    pub test: Vec<SceneInput>,
}

impl SplitScenes {
    pub fn from_records(records: &[SceneRecord]) -> Result<Self> {
        let mut out = Self::default();
        for r in records {
            let s = vectorize(r)?;
            match split_of(r.scene_id) {
                Split::Train => out.train.push(s),
                Split::Val => out.val.push(s),
                Split::Test => out.test.push(s),
            }
        }
        Ok(out)
    }
}

/// What gets trained in one run.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// The full model, trained and evaluated with the given fusion mode.
    Msma(FusionMode),
    Lstm(LstmConfig),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Msma(FusionMode::Full) => "fusion",
            Variant::Msma(FusionMode::SensorOnly) => "sensor_only",
            Variant::Msma(FusionMode::CommOnly) => "comm_only",
            Variant::Lstm(_) => "lstm",
        }
    }
}

/// Settings shared by every run of an experiment. The defaults are sized
/// for a single CPU core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenes: usize,
    /// Seed of the generated data; every sweep point uses the same one.
    pub data_seed: u64,
    /// One training run per seed and variant.
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub lstm: LstmConfig,
    pub schedule: TrainSchedule,
    pub agents: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenes: 2000,
            data_seed: 0,
            seeds: vec![0, 1, 2],
            model: ModelConfig::desk(),
            lstm: LstmConfig {
                hidden: 32,
                ..LstmConfig::default()
            },
            schedule: TrainSchedule {
                epochs: 20,
                base_lr: 5e-3,
                warmup_epochs: 2,
                decay_every: 5,
                ..TrainSchedule::default()
            },
            agents: GenerateConfig::default().agents,
        }
    }
}

impl ExperimentConfig {
    pub fn generate(&self, layout: &LayoutSpec, mpr: f64, latency_frames: usize, noise_variance: f64) -> Result<SplitScenes> {
        let cfg = GenerateConfig {
            scenes: self.scenes,
            seed: self.data_seed,
            mpr,
            latency_frames,
            noise_variance,
            agents: self.agents,
            ..GenerateConfig::default()
        };
        SplitScenes::from_records(&generate_dataset(layout, &cfg)?)
    }
}

/// Test-split result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub sweep: String,
    pub value: f64,
    pub variant: String,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Trains `variant` with `seed` and evaluates it on the test split.
pub fn run_trial(data: &SplitScenes, variant: &Variant, cfg: &ExperimentConfig, seed: u64, cohort: Cohort) -> Result<MetricsReport> {
    let schedule = TrainSchedule {
        seed,
        ..cfg.schedule.clone()
    };
    match variant {
        Variant::Msma(fusion) => {
            let mut model = Msma::new(cfg.model.clone(), seed)?;
            fit_and_score(&mut model, data, schedule, *fusion, cohort)
        }
        Variant::Lstm(c) => {
            let mut model = LstmBaseline::new(c.clone(), seed)?;
            fit_and_score(&mut model, data, schedule, FusionMode::Full, cohort)
        }
    }
}

fn fit_and_score<P: Predictor>(
    model: &mut P,
    data: &SplitScenes,
    schedule: TrainSchedule,
    fusion: FusionMode,
    cohort: Cohort,
) -> Result<MetricsReport> {
    let tc = TrainConfig {
        schedule,
        fusion,
        ..TrainConfig::default()
    };
    train(model, &data.train, &data.val, &tc)?;
    Ok(evaluate(&*model, &data.test, &[cohort], fusion)?.remove(0))
}

/// Swept quantity of the fusion ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    /// Broadcast delay in frames, noise held at zero; scored on connected vehicles.
    Latency,
    /// Sensor noise variance, zero delay; scored on the sensing-range cohort.
    Noise,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Latency => "latency",
            AblationKind::Noise => "noise",
        }
    }

    pub fn cohort(self) -> Cohort {
        match self {
            AblationKind::Latency => Cohort::Connected,
            AblationKind::Noise => Cohort::Sensing,
        }
    }

    /// The variant without fusion keeps the track the swept corruption does
    /// not touch for the delay sweep, and the sensor track for the noise sweep.
    pub fn variants(self) -> [Variant; 2] {
        let without = match self {
            AblationKind::Latency => FusionMode::CommOnly,
            AblationKind::Noise => FusionMode::SensorOnly,
        };
        [Variant::Msma(FusionMode::Full), Variant::Msma(without)]
    }
}

/// Runs that finished and sweep points that failed.
#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub rows: Vec<TrialRow>,
    pub failures: Vec<String>,
}

fn sweep<F>(
    name: &str,
    values: &[f64],
    variants: &[Variant],
    cohort: Cohort,
    cfg: &ExperimentConfig,
    mut data_for: F,
    progress: &mut dyn FnMut(&TrialRow),
) -> SweepOutcome
where
    F: FnMut(f64) -> Result<SplitScenes>,
{
    let mut out = SweepOutcome::default();
    for &v in values {
        let data = match data_for(v) {
            Ok(d) => d,
            Err(e) => {
                out.failures.push(format!("{name}={v}: {e}"));
                continue;
            }
        };
        for variant in variants {
            for &seed in &cfg.seeds {
                match run_trial(&data, variant, cfg, seed, cohort) {
                    Ok(report) => {
                        let row = TrialRow {
                            sweep: name.to_string(),
                            value: v,
                            variant: variant.name().to_string(),
                            seed,
                            report,
                        };
                        progress(&row);
                        out.rows.push(row);
                    }
                    Err(e) => out.failures.push(format!("{name}={v} {} seed {seed}: {e}", variant.name())),
                }
            }
        }
    }
    out
}

/// With- and without-fusion models trained per swept value and seed.
pub fn ablate_fusion(
    kind: AblationKind,
    values: &[f64],
    layout: &LayoutSpec,
    mpr: f64,
    cfg: &ExperimentConfig,
    progress: &mut dyn FnMut(&TrialRow),
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let data_for = |v: f64| match kind {
        AblationKind::Latency => {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!("latency {v} is not a whole number of frames")));
            }
            cfg.generate(layout, mpr, v as usize, 0.0)
        }
        AblationKind::Noise => cfg.generate(layout, mpr, 0, v),
    };
    Ok(sweep(kind.name(), values, &kind.variants(), kind.cohort(), cfg, data_for, progress))
}

/// Full model per penetration rate at one-frame delay and 0.1 noise
/// variance, scored on the sensing-range cohort.
pub fn sweep_mpr(
    mprs: &[f64],
    layout: &LayoutSpec,
    cfg: &ExperimentConfig,
    progress: &mut dyn FnMut(&TrialRow),
) -> Result<SweepOutcome> {
    if mprs.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let data_for = |m: f64| cfg.generate(layout, m, 1, 0.1);
    Ok(sweep("mpr", mprs, &[Variant::Msma(FusionMode::Full)], Cohort::Sensing, cfg, data_for, progress))
}

/// Mean and standard error over seeds of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
    pub runs: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_err = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        mean,
        std_err,
        runs: values.len(),
    })
}

/// ADE summary of `variant` at `value`, over the rows that have metrics.
pub fn ade_summary(rows: &[TrialRow], value: f64, variant: &str) -> Option<Summary> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.value == value && r.variant == variant)
        .filter_map(|r| r.report.metrics.as_ref().map(|m| m.ade))
        .collect();
    summarize(&v)
}

/// One row per run: `sweep,value,variant,seed,cohort,agents,ade,fde,mr`.
pub fn rows_csv(rows: &[TrialRow]) -> String {
    let mut s = String::from("sweep,value,variant,seed,cohort,agents,ade,fde,mr\n");
    for r in rows {
        let _ = write!(
            s,
            "{},{:.6},{},{},{},{}",
            r.sweep,
            r.value,
            r.variant,
            r.seed,
            r.report.cohort.name(),
            r.report.agents
        );
        match &r.report.metrics {
            Some(m) => {
                let _ = write!(s, ",{:.6},{:.6},{:.6}", m.ade, m.fde, m.mr);
            }
            None => s.push_str(",,,"),
        }
        s.push('\n');
    }
    s
}

/// Seed-averaged results of one sweep point and variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep: String,
    pub value: f64,
    pub variant: String,
    pub runs: usize,
    pub ade_mean: f64,
    pub ade_se: f64,
    pub fde_mean: f64,
    pub mr_mean: f64,
}

pub const SUMMARY_HEADER: &str = "sweep,value,variant,runs,ade_mean,ade_se,fde_mean,mr_mean";

/// Groups runs by sweep value and variant, in first-seen order.
pub fn summarize_rows(rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    for r in rows {
        let k = (r.sweep.clone(), r.value, r.variant.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|(sweep, value, variant)| {
            let ms: Vec<_> = rows
                .iter()
                .filter(|r| r.sweep == sweep && r.value == value && r.variant == variant)
                .filter_map(|r| r.report.metrics.clone())
                .collect();
            let ade = summarize(&ms.iter().map(|m| m.ade).collect::<Vec<_>>())?;
            let n = ms.len() as f64;
            Some(SummaryRow {
                sweep,
                value,
                variant,
                runs: ms.len(),
                ade_mean: ade.mean,
                ade_se: ade.std_err,
                fde_mean: ms.iter().map(|m| m.fde).sum::<f64>() / n,
                mr_mean: ms.iter().map(|m| m.mr).sum::<f64>() / n,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.sweep, r.value, r.variant, r.runs, r.ade_mean, r.ade_se, r.fde_mean, r.mr_mean
        );
    }
    s
}

/// Parses [`summary_csv`] output; errors carry the 1-based line number.
pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SUMMARY_HEADER => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected header `{SUMMARY_HEADER}`, found `{h}`"),
            })
        }
        None => return Err(Error::Empty("summary table has no header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        out.push(SummaryRow {
            sweep: f[0].to_string(),
            value: num(1)?,
            variant: f[2].to_string(),
            runs: f[3].trim().parse().map_err(|e| err(format!("field 4: {e}")))?,
            ade_mean: num(4)?,
            ade_se: num(5)?,
            fde_mean: num(6)?,
            mr_mean: num(7)?,
        });
    }
    Ok(out)
}
