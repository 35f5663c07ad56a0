//! Single-agent recurrent encoder–decoder baseline. It sees only each
//! agent's own true history: no neighbors, lanes or source tracks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::autodiff::{Binder, Checkpoint, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{ForwardOptions, SceneOutput};
use crate::scene::vectorize::displacements;
use crate::scene::SceneInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub history: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub modes: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            history: 30,
            horizon: 50,
            hidden: 64,
            modes: 5,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 || self.hidden == 0 || self.modes == 0 {
            return Err(Error::Config("LSTM extents must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmBaseline {
    pub config: LstmConfig,
    pub params: ParamStore,
}

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, a: f64) -> Result<Tensor> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-a..a)).collect())
}

/// Gate bias with the forget block at one.
fn gate_bias(hidden: usize) -> Result<Tensor> {
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    Tensor::vector(b)
}

impl LstmBaseline {
    pub fn new(config: LstmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let a = 1.0 / (h as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.add("encoder.w_ih", uniform(&mut rng, 2, 4 * h, a)?)?;
        p.add("encoder.w_hh", uniform(&mut rng, h, 4 * h, a)?)?;
        p.add("encoder.b", gate_bias(h)?)?;
        p.add("decoder.w_ih", uniform(&mut rng, h, 4 * h, a)?)?;
        p.add("decoder.w_hh", uniform(&mut rng, h, 4 * h, a)?)?;
        p.add("decoder.b", gate_bias(h)?)?;
        p.add("head.reg.w", uniform(&mut rng, h, config.modes * 5, a)?)?;
        p.add("head.reg.b", Tensor::zeros(vec![config.modes * 5]))?;
        p.add("head.cls.w", uniform(&mut rng, h, config.modes, a)?)?;
        p.add("head.cls.b", Tensor::zeros(vec![config.modes]))?;
        Ok(Self { config, params: p })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("model_kind").map(String::as_str) != Some("lstm") {
            return Err(Error::Incompatible("checkpoint is not an LSTM baseline".into()));
        }
        let cfg = ck
            .meta
            .get("lstm_config")
            .ok_or_else(|| Error::Incompatible("checkpoint lacks lstm_config".into()))?;
        let config: LstmConfig = toml::from_str(cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut model = Self::new(config, 0)?;
        model.params.load_from(&ck.to_params("")?)?;
        Ok(model)
    }

    fn w(&self, tape: &mut Tape, binder: &mut Binder, path: &str) -> Result<Var> {
        let id = self
            .params
            .id(path)
            .ok_or_else(|| Error::Param(format!("missing parameter {path}")))?;
        Ok(binder.bind(tape, &self.params, id))
    }

    /// One cell update from precomputed input contributions `xin`.
    fn cell(&self, tape: &mut Tape, xin: Var, h: Var, c: Var, w_hh: Var) -> Result<(Var, Var)> {
        let hd = self.config.hidden;
        let rec = tape.matmul(h, w_hh)?;
        let z = tape.add(xin, rec)?;
        let zi = tape.slice_cols(z, 0, hd)?;
        let zf = tape.slice_cols(z, hd, 2 * hd)?;
        let zg = tape.slice_cols(z, 2 * hd, 3 * hd)?;
        let zo = tape.slice_cols(z, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let gg = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, gg)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

impl Predictor for LstmBaseline {
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
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Checkpoint::from_params(&self.params)
            .with_meta("model_kind", "lstm")
            .with_meta("lstm_config", cfg))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        binder: &mut Binder,
        scene: &SceneInput,
        _opts: ForwardOptions,
        _rng: &mut ChaCha8Rng,
    ) -> Result<SceneOutput> {
        let (n, hd, t_h, t_f, d) = (
            scene.agents.len(),
            self.config.hidden,
            self.config.history,
            self.config.horizon,
            self.config.modes,
        );
        if n == 0 {
            return Err(Error::Empty(format!("scene {} has no agents", scene.scene_id)));
        }
        let mut disp = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        let mut anchors = Vec::with_capacity(n);
        for a in &scene.agents {
            if a.truth_history.len() != t_h {
                return Err(Error::shape("lstm history", &[a.truth_history.len()], &[t_h]));
            }
            let (dd, mm) = displacements(&a.truth_history);
            disp.push(dd);
            mask.push(mm);
            anchors.push(a.truth_history.iter().rev().find_map(|p| *p).unwrap_or(a.anchor));
        }

        let enc_ih = self.w(tape, binder, "encoder.w_ih")?;
        let enc_hh = self.w(tape, binder, "encoder.w_hh")?;
        let enc_b = self.w(tape, binder, "encoder.b")?;
        let mut h = tape.constant(vec![n, hd], vec![0.0; n * hd])?;
        let mut c = h;
        for t in 0..t_h {
            let live: Vec<f64> = mask.iter().map(|m| if m[t] { 1.0 } else { 0.0 }).collect();
            if live.iter().all(|&v| v == 0.0) {
                continue;
            }
            let x = tape.constant(vec![n, 2], disp.iter().flat_map(|s| s[t]).collect())?;
            let xin = tape.matmul(x, enc_ih)?;
            let xin = tape.add_row(xin, enc_b)?;
            let (hn, cn) = self.cell(tape, xin, h, c, enc_hh)?;
            // agents without a displacement at t keep their state
            let keep: Vec<f64> = live.iter().flat_map(|&m| std::iter::repeat_n(m, hd)).collect();
            let hold: Vec<f64> = keep.iter().map(|m| 1.0 - m).collect();
            let a = tape.mul_const(hn, keep.clone())?;
            let b = tape.mul_const(h, hold.clone())?;
            h = tape.add(a, b)?;
            let a = tape.mul_const(cn, keep)?;
            let b = tape.mul_const(c, hold)?;
            c = tape.add(a, b)?;
        }
        let context = h;

        let dec_ih = self.w(tape, binder, "decoder.w_ih")?;
        let dec_hh = self.w(tape, binder, "decoder.w_hh")?;
        let dec_b = self.w(tape, binder, "decoder.b")?;
        let reg_w = self.w(tape, binder, "head.reg.w")?;
        let reg_b = self.w(tape, binder, "head.reg.b")?;
        let xin = tape.matmul(context, dec_ih)?;
        let xin = tape.add_row(xin, dec_b)?;
        let mut h = context;
        let mut c = tape.constant(vec![n, hd], vec![0.0; n * hd])?;
        let mut steps = Vec::with_capacity(t_f);
        for _ in 0..t_f {
            (h, c) = self.cell(tape, xin, h, c, dec_hh)?;
            let y = tape.matmul(h, reg_w)?;
            steps.push(tape.add_row(y, reg_b)?);
        }
        // columns (step, mode, k) -> (mode, step, k)
        let stacked = tape.concat_cols(&steps)?;
        let cols = tape.transpose(stacked)?;
        let order: Vec<usize> = (0..d)
            .flat_map(|m| (0..t_f).flat_map(move |s| (0..5).map(move |k| (s * d + m) * 5 + k)))
            .collect();
        let cols = tape.gather_rows(cols, &order)?;
        let regression = tape.transpose(cols)?;

        let cls_w = self.w(tape, binder, "head.cls.w")?;
        let cls_b = self.w(tape, binder, "head.cls.b")?;
        let logits = tape.matmul(context, cls_w)?;
        let logits = tape.add_row(logits, cls_b)?;
        let scores = tape.softmax(logits, 1, None)?;
        Ok(SceneOutput {
            regression,
            scores,
            anchors,
            trace: None,
        })
    }
}
