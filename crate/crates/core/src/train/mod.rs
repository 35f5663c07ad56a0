//! Losses, the training loop, evaluation metrics, the recurrent baseline and
//! the ablation / penetration-rate experiment harnesses.

pub mod experiments;
pub mod loss;
pub mod lstm;
pub mod metrics;
mod schedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamWConfig, Binder, Checkpoint, GradSet, OptimizerState, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::model::{FusionMode, ForwardOptions, Msma, PredictionSet, SceneOutput};
use crate::scene::SceneInput;

pub use loss::LossConfig;
pub use lstm::{LstmBaseline, LstmConfig};
pub use metrics::{Cohort, Metrics, MetricsReport};
pub use schedule::TrainSchedule;

/// A trainable trajectory predictor.
pub trait Predictor {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn modes(&self) -> usize;
    fn history(&self) -> usize;
    fn horizon(&self) -> usize;
    fn checkpoint(&self) -> Result<Checkpoint>;
    fn forward(
        &self,
        tape: &mut Tape,
        binder: &mut Binder,
        scene: &SceneInput,
        opts: ForwardOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<SceneOutput>;

    /// Eval-mode predictions for one scene.
    fn predict(&self, scene: &SceneInput, fusion: FusionMode) -> Result<PredictionSet> {
        let mut tape = Tape::new();
        let mut binder = Binder::new(self.params());
        let opts = ForwardOptions {
            fusion,
            ..ForwardOptions::eval()
        };
        let out = self.forward(&mut tape, &mut binder, scene, opts, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(PredictionSet::from_raw(
            self.modes(),
            self.horizon(),
            scene.agents.iter().map(|a| a.id).collect(),
            &out.anchors,
            tape.value(out.regression),
            tape.value(out.scores),
        ))
    }
}

impl Predictor for Msma {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn modes(&self) -> usize {
        self.config.modes
    }

    fn history(&self) -> usize {
        self.config.history
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Msma::checkpoint(self)
    }

    fn forward(
        &self,
        tape: &mut Tape,
        binder: &mut Binder,
        scene: &SceneInput,
        opts: ForwardOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<SceneOutput> {
        Msma::forward(self, tape, binder, scene, opts, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub loss: LossConfig,
    /// Global gradient-norm bound applied to every step.
    pub clip_norm: f64,
    pub weight_decay: f64,
    /// Fusion mode used in training and validation.
    pub fusion: FusionMode,
    /// First epoch to run; later than zero when resuming.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: TrainSchedule::default(),
            loss: LossConfig::default(),
            clip_norm: 5.0,
            weight_decay: AdamWConfig::default().weight_decay,
            fusion: FusionMode::Full,
            start_epoch: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// All-cohort ADE on the validation scenes, if any.
    pub val_ade: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub steps: usize,
}

impl TrainReport {
    /// `epoch,train_loss,val_ade` rows at 6 decimals.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_ade\n");
        for r in &self.curve {
            let val = r.val_ade.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{:.6},{}\n", r.epoch, r.train_loss, val));
        }
        s
    }
}

/// Loss and gradients of one scene; `None` when it has no scored agent.
pub fn scene_gradients<P: Predictor + ?Sized>(
    model: &P,
    scene: &SceneInput,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(f64, GradSet)>> {
    if scene.scored().next().is_none() {
        return Ok(None);
    }
    let mut tape = Tape::new();
    let mut binder = Binder::new(model.params());
    let opts = ForwardOptions {
        fusion: cfg.fusion,
        ..ForwardOptions::train()
    };
    let out = model.forward(&mut tape, &mut binder, scene, opts, rng)?;
    let targets = loss::targets(scene, &out.anchors);
    let l = loss::scene_loss(&mut tape, out.regression, out.scores, model.modes(), &targets, &cfg.loss)?;
    let value = tape.scalar(l.total);
    let mut grads = tape.backward(l.total)?;
    Ok(Some((value, binder.collect(model.params(), &mut grads))))
}

/// One optimizer step on the mean of per-scene gradients; returns the mean loss.
pub fn train_step<P: Predictor + ?Sized>(
    model: &mut P,
    opt: &mut OptimizerState,
    batch: &[&SceneInput],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let mut total = GradSet::zeros(model.params());
    let mut loss = 0.0;
    let mut used = 0;
    for scene in batch {
        if let Some((l, g)) = scene_gradients(&*model, scene, cfg, rng)? {
            if !l.is_finite() || !g.is_finite() {
                return Err(Error::Numerical(format!("scene {}: non-finite loss {l}", scene.scene_id)));
            }
            loss += l;
            total.add_assign(&g);
            used += 1;
        }
    }
    if used == 0 {
        return Ok(None);
    }
    total.scale(1.0 / used as f64);
    total.clip_global_norm(cfg.clip_norm);
    opt.step(model.params_mut(), &total)?;
    Ok(Some(loss / used as f64))
}

/// Restores whichever predictor a checkpoint holds.
pub fn load_predictor(ck: &Checkpoint) -> Result<Box<dyn Predictor>> {
    match ck.meta.get("model_kind").map(String::as_str) {
        Some("lstm") => Ok(Box::new(LstmBaseline::from_checkpoint(ck)?)),
        _ => Ok(Box::new(Msma::from_checkpoint(ck)?)),
    }
}

/// Metrics of `model` on `scenes` for each cohort.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    scenes: &[SceneInput],
    cohorts: &[Cohort],
    fusion: FusionMode,
) -> Result<Vec<MetricsReport>> {
    let preds = scenes.iter().map(|s| model.predict(s, fusion)).collect::<Result<Vec<_>>>()?;
    cohorts
        .iter()
        .map(|&c| metrics::evaluate_predictions(scenes, &preds, c))
        .collect()
}

/// Minibatch AdamW training. The parameters with the best validation ADE
/// are kept (the last epoch's if there is no validation data). A non-finite
/// loss aborts with a numerical error, leaving the best parameters so far.
pub fn train<P: Predictor + ?Sized>(model: &mut P, train: &[SceneInput], val: &[SceneInput], cfg: &TrainConfig) -> Result<TrainReport> {
    let sched = &cfg.schedule;
    sched.validate()?;
    cfg.loss.validate()?;
    if train.iter().all(|s| s.scored().next().is_none()) {
        return Err(Error::Empty("training split has no scored agents".into()));
    }
    let mut opt = OptimizerState::new(
        model.params(),
        AdamWConfig {
            lr: sched.base_lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut steps = 0;
    for epoch in cfg.start_epoch..sched.epochs {
        opt.set_lr(sched.lr_at(epoch)?);
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(sched.batch_size) {
            let batch: Vec<&SceneInput> = chunk.iter().map(|&i| &train[i]).collect();
            match train_step(model, &mut opt, &batch, cfg, &mut rng) {
                Ok(Some(l)) => {
                    sum += l;
                    batches += 1;
                    steps += 1;
                }
                Ok(None) => {}
                Err(Error::Numerical(msg)) => {
                    if let Some((_, _, p)) = best {
                        *model.params_mut() = p;
                    }
                    return Err(Error::Numerical(format!("epoch {epoch}, step {steps}: {msg}")));
                }
                Err(e) => return Err(e),
            }
        }
        let val_ade = if val.is_empty() {
            None
        } else {
            let r = evaluate(&*model, val, &[Cohort::All], cfg.fusion)?;
            r[0].metrics.as_ref().map(|m| m.ade)
        };
        let train_loss = sum / batches.max(1) as f64;
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_ade,
        });
        let score = val_ade.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score <= b.0) {
            best = Some((score, epoch, model.params().clone()));
        }
    }
    let best_epoch = match best {
        Some((_, e, p)) => {
            *model.params_mut() = p;
            e
        }
        None => cfg.start_epoch,
    };
    Ok(TrainReport {
        curve,
        best_epoch,
        steps,
    })
}
