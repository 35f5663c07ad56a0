//! Mixture losses: Gaussian negative log-likelihood of the best mode plus
//! cross-entropy on the mode scores.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::step_scale;
use crate::scene::geometry::{self as g, Point};
use crate::scene::SceneInput;

const LOG_2PI: f64 = 1.8378770664093453;
/// Probability floor inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
/// Determinants never fall below `VARIANCE_FLOOR²`; this only guards the log.
const DET_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the classification term.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("loss weight alpha={} must be ≥ 0", self.alpha)));
        }
        Ok(())
    }
}

/// Mode whose trajectory has the lowest mean displacement from `truth`;
/// ties go to the lowest index.
pub fn best_mode_ade(modes: &[&[Point]], truth: &[Point]) -> usize {
    argmin(modes.iter().map(|m| {
        m.iter().zip(truth).map(|(p, q)| g::dist(*p, *q)).sum::<f64>() / truth.len() as f64
    }))
}

/// Mode whose final point is closest to the final true position.
pub fn best_mode_endpoint(modes: &[&[Point]], truth: &[Point]) -> usize {
    let last = truth.len() - 1;
    argmin(modes.iter().map(|m| g::dist(m[last], truth[last])))
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// One supervised agent of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// Row in the model output.
    pub row: usize,
    pub anchor: Point,
    pub future: Vec<Point>,
}

/// Loss terms of one scene, recorded on the tape.
#[derive(Debug, Clone, Copy)]
pub struct SceneLoss {
    pub total: Var,
    pub regression: Var,
    pub classification: Var,
    /// Number of supervised agents.
    pub agents: usize,
}

/// Best modes (by ADE) of each target from the raw regression values.
pub fn best_modes(reg: &[f64], modes: usize, targets: &[Target]) -> Vec<usize> {
    let horizon = targets.first().map_or(0, |t| t.future.len());
    let width = modes * horizon * 5;
    targets
        .iter()
        .map(|t| {
            let trajs: Vec<Vec<Point>> = (0..modes)
                .map(|d| {
                    (0..horizon)
                        .map(|s| {
                            let o = t.row * width + (d * horizon + s) * 5;
                            let k = step_scale(s);
                            [t.anchor[0] + k * reg[o], t.anchor[1] + k * reg[o + 1]]
                        })
                        .collect()
                })
                .collect();
            let refs: Vec<&[Point]> = trajs.iter().map(|v| v.as_slice()).collect();
            best_mode_ade(&refs, &t.future)
        })
        .collect()
}

/// Mean per-step negative log-likelihood of the futures under the chosen
/// modes. `regression` is `[rows × modes·horizon·5]`.
pub fn regression_nll(tape: &mut Tape, regression: Var, modes: usize, targets: &[Target], chosen: &[usize]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::Empty("no supervised agents".into()));
    }
    let horizon = targets[0].future.len();
    let rows = tape.shape(regression)[0];
    let flat = tape.reshape(regression, vec![rows * modes * horizon, 5])?;
    let mut idx = Vec::with_capacity(targets.len() * horizon);
    let mut scale = Vec::with_capacity(targets.len() * horizon);
    let mut off_x = Vec::with_capacity(targets.len() * horizon);
    let mut off_y = Vec::with_capacity(targets.len() * horizon);
    for (t, &d) in targets.iter().zip(chosen) {
        if t.future.len() != horizon {
            return Err(Error::shape("regression_nll", &[t.future.len()], &[horizon]));
        }
        for (s, p) in t.future.iter().enumerate() {
            idx.push((t.row * modes + d) * horizon + s);
            scale.push(step_scale(s));
            off_x.push(p[0] - t.anchor[0]);
            off_y.push(p[1] - t.anchor[1]);
        }
    }
    let r = idx.len();
    let sel = tape.gather_rows(flat, &idx)?;
    let col = |tape: &mut Tape, c: usize| tape.slice_cols(sel, c, c + 1);
    let (mx, my, lx, ly, rho) = (col(tape, 0)?, col(tape, 1)?, col(tape, 2)?, col(tape, 3)?, col(tape, 4)?);
    // residual = predicted mean − truth, both relative to the anchor
    let mx = tape.mul_const(mx, scale.clone())?;
    let my = tape.mul_const(my, scale)?;
    let tx = tape.constant(vec![r, 1], off_x)?;
    let ty = tape.constant(vec![r, 1], off_y)?;
    let dx = tape.sub(mx, tx)?;
    let dy = tape.sub(my, ty)?;
    let floor = crate::model::VARIANCE_FLOOR;
    let ex = tape.exp(lx);
    let sxx = tape.affine(ex, 1.0, floor);
    let ey = tape.exp(ly);
    let syy = tape.affine(ey, 1.0, floor);
    let lsum = tape.add(lx, ly)?;
    let lsum = tape.scale(lsum, 0.5);
    let geo = tape.exp(lsum);
    let corr = tape.tanh(rho);
    let sxy = tape.mul(corr, geo)?;
    let a = tape.mul(sxx, syy)?;
    let b = tape.mul(sxy, sxy)?;
    let det = tape.sub(a, b)?;
    let dx2 = tape.mul(dx, dx)?;
    let dy2 = tape.mul(dy, dy)?;
    let dxy = tape.mul(dx, dy)?;
    let q1 = tape.mul(syy, dx2)?;
    let q2 = tape.mul(sxy, dxy)?;
    let q2 = tape.scale(q2, 2.0);
    let q3 = tape.mul(sxx, dy2)?;
    let q = tape.sub(q1, q2)?;
    let q = tape.add(q, q3)?;
    let quad = tape.div(q, det)?;
    let logdet = tape.ln_floor(det, DET_FLOOR);
    let nll = tape.add(logdet, quad)?;
    let nll = tape.affine(nll, 0.5, LOG_2PI);
    Ok(tape.mean(nll))
}

/// Mean cross-entropy of one-hot targets at the chosen modes.
/// `scores` is `[rows × modes]` on the simplex.
pub fn classification_ce(tape: &mut Tape, scores: Var, modes: usize, targets: &[Target], chosen: &[usize]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::Empty("no supervised agents".into()));
    }
    let rows = tape.shape(scores)[0];
    let flat = tape.reshape(scores, vec![rows * modes, 1])?;
    let idx: Vec<usize> = targets.iter().zip(chosen).map(|(t, &d)| t.row * modes + d).collect();
    let p = tape.gather_rows(flat, &idx)?;
    let lp = tape.ln_floor(p, PROB_FLOOR);
    let m = tape.mean(lp);
    Ok(tape.scale(m, -1.0))
}

/// `J_reg + α·J_cls`.
pub fn total_loss(tape: &mut Tape, regression: Var, classification: Var, cfg: &LossConfig) -> Result<Var> {
    let c = tape.scale(classification, cfg.alpha);
    tape.add(regression, c)
}

/// Scored agents of `scene`, supervised relative to the model's `anchors`.
pub fn targets(scene: &SceneInput, anchors: &[Point]) -> Vec<Target> {
    scene
        .scored()
        .map(|(i, a)| Target {
            row: i,
            anchor: anchors[i],
            future: a.future.iter().map(|p| p.expect("scored agents have a full future")).collect(),
        })
        .collect()
}

/// Full scene loss with best modes chosen by ADE.
pub fn scene_loss(
    tape: &mut Tape,
    regression: Var,
    scores: Var,
    modes: usize,
    targets: &[Target],
    cfg: &LossConfig,
) -> Result<SceneLoss> {
    let chosen = best_modes(tape.value(regression), modes, targets);
    let reg = regression_nll(tape, regression, modes, targets, &chosen)?;
    let cls = classification_ce(tape, scores, modes, targets, &chosen)?;
    let total = total_loss(tape, reg, cls, cfg)?;
    Ok(SceneLoss {
        total,
        regression: reg,
        classification: cls,
        agents: targets.len(),
    })
}
