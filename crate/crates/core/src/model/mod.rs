//! Multi-source multi-agent trajectory predictor: per-source temporal
//! transformers, gated cross-attention fusion of sensor and broadcast tracks,
//! agent–agent and agent–lane graph attention, and a mixture decoder.

mod config;
mod prediction;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AttentionSpec, Binder, Checkpoint, HeadMerge, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scene::geometry::{self as g, Point};
use crate::scene::sim::FRAME_DT;
use crate::scene::vectorize::{SceneInput, TrackInput};
use crate::scene::Source;

pub use config::ModelConfig;
pub use prediction::{covariance, PredictionSet, VARIANCE_FLOOR};

/// Edge attributes are fed in units of 10 m.
const POSITION_SCALE: f64 = 0.1;
/// A unit regression output at step `t` is an offset of `(t+1)·dt·10 m/s`.
const SPEED_SCALE: f64 = 10.0;
const LEAKY_SLOPE: f64 = 0.2;

/// Offset in meters represented by a unit mean output at future step `t`.
pub fn step_scale(t: usize) -> f64 {
    (t + 1) as f64 * FRAME_DT * SPEED_SCALE
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::Own => "own",
        Source::Comm => "comm",
        Source::Sensor => "sensor",
    }
}

/// How agents observed by both sensor and broadcast are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Cross-attention fusion of both tracks.
    #[default]
    Full,
    /// Fusion skipped; only the sensor track is used.
    SensorOnly,
    /// Fusion skipped; only the broadcast track is used.
    CommOnly,
}

/// Replaces the fusion gate pre-activation with ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateOverride {
    #[default]
    None,
    /// α = 1: output is the projected sensor summary.
    SensorPath,
    /// α = 0: output is the aligned broadcast feature.
    AlignedPath,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    pub training: bool,
    pub fusion: FusionMode,
    pub gate: GateOverride,
    pub trace: bool,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train() -> Self {
        Self {
            training: true,
            ..Self::default()
        }
    }
}

/// Attention weights of one layer, laid out as rows of `row_len` entries.
/// Rows whose keys are all masked are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub name: String,
    pub row_len: usize,
    pub probs: Vec<f64>,
}

impl AttentionRecord {
    pub fn row_sums(&self) -> Vec<f64> {
        self.probs.chunks(self.row_len).map(|r| r.iter().sum()).collect()
    }
}

/// Intermediate values exposed for inspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTrace {
    pub attention: Vec<AttentionRecord>,
    /// Number of batched fusion-module executions.
    pub fusion_calls: usize,
    pub fused_agents: Vec<u32>,
    /// Gate values α, `[fused agents × d_k]` in id order.
    pub gates: Vec<f64>,
    /// Fused features ẑ and their two gate endpoints, same layout as `gates`.
    pub fused: Vec<f64>,
    pub sensor_path: Vec<f64>,
    pub aligned_path: Vec<f64>,
    /// Agent–lane connectivity `[agents × lanes]` in id order.
    pub lane_edges: Vec<bool>,
}

/// Tape handles of one forward pass, rows in the caller's agent order.
#[derive(Debug)]
pub struct SceneOutput {
    /// `[agents × modes·horizon·5]`: per mode and step `(μx, μy, log σx², log σy², ρ)`.
    pub regression: Var,
    /// `[agents × modes]` mode probabilities.
    pub scores: Var,
    pub anchors: Vec<Point>,
    pub trace: Option<ForwardTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Msma {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized by construction")
}

fn filled(shape: Vec<usize>, v: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, vec![v; n]).expect("sized by construction")
}

struct Init<R> {
    store: ParamStore,
    rng: R,
}

impl<R: Rng> Init<R> {
    fn mat(&mut self, path: String, rows: usize, cols: usize) -> Result<()> {
        let t = xavier(&mut self.rng, rows, cols);
        self.store.add(path, t).map(|_| ())
    }

    fn bias(&mut self, path: String, n: usize) -> Result<()> {
        self.store.add(path, filled(vec![n], 0.0)).map(|_| ())
    }

    fn small(&mut self, path: String, rows: usize, cols: usize) -> Result<()> {
        let data = (0..rows * cols).map(|_| self.rng.random_range(-0.1..0.1)).collect();
        self.store.add(path, Tensor::new(vec![rows, cols], data)?).map(|_| ())
    }

    fn norm(&mut self, prefix: &str, n: usize) -> Result<()> {
        self.store.add(format!("{prefix}.gain"), filled(vec![n], 1.0))?;
        self.store.add(format!("{prefix}.bias"), filled(vec![n], 0.0))?;
        Ok(())
    }

    fn mlp(&mut self, prefix: &str, dims: [usize; 3]) -> Result<()> {
        self.mat(format!("{prefix}.w1"), dims[0], dims[1])?;
        self.bias(format!("{prefix}.b1"), dims[1])?;
        self.mat(format!("{prefix}.w2"), dims[1], dims[2])?;
        self.bias(format!("{prefix}.b2"), dims[2])
    }

    fn gat_layer(&mut self, prefix: &str, d_in: usize, d_g: usize, heads: usize, norm: bool) -> Result<()> {
        self.mat(format!("{prefix}.w"), d_in, d_g)?;
        self.mat(format!("{prefix}.a_src"), d_g, heads)?;
        self.mat(format!("{prefix}.a_dst"), d_g, heads)?;
        self.mat(format!("{prefix}.w_edge"), 2, d_g)?;
        self.mat(format!("{prefix}.a_edge"), d_g, heads)?;
        if norm {
            self.norm(&format!("{prefix}.norm"), d_g)?;
        }
        Ok(())
    }
}

fn build_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    let mut init = Init {
        store: ParamStore::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let (d_h, d_k, d_g) = (cfg.d_h, cfg.d_k, cfg.d_g);
    for s in Source::ALL {
        let enc = format!("encoder.{}", source_name(s));
        init.mlp(&format!("{enc}.embed"), [2, d_h, d_h])?;
        init.small(format!("{enc}.token"), 1, d_h)?;
        init.small(format!("{enc}.position"), cfg.history + 1, d_h)?;
        init.mat(format!("{enc}.proj"), d_h, d_k)?;
        for l in 0..cfg.temporal_layers {
            let p = format!("{enc}.layer{l}");
            for w in ["wq", "wk", "wv", "wo"] {
                init.mat(format!("{p}.{w}"), d_k, d_k)?;
            }
            init.norm(&format!("{p}.norm1"), d_k)?;
            init.mlp(&format!("{p}.ffn"), [d_k, 2 * d_k, d_k])?;
            init.norm(&format!("{p}.norm2"), d_k)?;
        }
    }
    for w in ["wq", "wk", "wv", "w_self"] {
        init.mat(format!("fusion.{w}"), d_k, d_k)?;
    }
    init.mat("fusion.w_alpha".into(), 2 * d_k, d_k)?;
    for l in 0..cfg.gat_layers {
        let d_in = if l == 0 { d_k } else { d_g };
        init.gat_layer(&format!("agent_gat.layer{l}"), d_in, d_g, cfg.heads, true)?;
    }
    init.mlp("lane.embed", [2, d_g, d_g])?;
    for l in 0..cfg.gat_layers {
        // the last lane layer's output is used directly, without a norm
        init.gat_layer(&format!("lane_gat.layer{l}"), d_g, d_g, cfg.heads, l + 1 < cfg.gat_layers)?;
    }
    init.mlp("decoder.reg", [2 * d_g, cfg.decoder_hidden, cfg.regression_width()])?;
    init.mlp("decoder.cls", [2 * d_g, d_g, cfg.modes])?;
    Ok(init.store)
}

enum Route {
    Own(usize),
    Comm(usize),
    Sensor(usize),
    Fused(usize),
}

struct Pass<'a, R: ?Sized> {
    model: &'a Msma,
    tape: &'a mut Tape,
    binder: &'a mut Binder,
    rng: &'a mut R,
    opts: ForwardOptions,
    trace: Option<ForwardTrace>,
}

impl<R: Rng + ?Sized> Pass<'_, R> {
    fn w(&mut self, path: &str) -> Result<Var> {
        let id = self
            .model
            .params
            .id(path)
            .ok_or_else(|| Error::Param(format!("missing parameter {path}")))?;
        Ok(self.binder.bind(self.tape, &self.model.params, id))
    }

    fn linear(&mut self, x: Var, w: &str, b: &str) -> Result<Var> {
        let w = self.w(w)?;
        let b = self.w(b)?;
        let y = self.tape.matmul(x, w)?;
        self.tape.add_row(y, b)
    }

    fn mlp(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let h = self.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
        let h = self.tape.relu(h);
        self.linear(h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    fn norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gain = self.w(&format!("{prefix}.gain"))?;
        let bias = self.w(&format!("{prefix}.bias"))?;
        self.tape.layer_norm(x, gain, bias, self.model.config.layer_norm_eps)
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let rate = self.model.config.dropout;
        self.tape.dropout(x, rate, self.rng, self.opts.training)
    }

    fn record(&mut self, name: String, row_len: usize, probs: Vec<f64>) {
        if let Some(t) = self.trace.as_mut() {
            t.attention.push(AttentionRecord { name, row_len, probs });
        }
    }

    /// Temporal transformer over `tracks` of one source; returns the
    /// final state of each track's appended token, `[tracks × d_k]`.
    fn encode(&mut self, source: Source, tracks: &[&TrackInput]) -> Result<Var> {
        let cfg = &self.model.config;
        let (n, t_h, heads, layers) = (tracks.len(), cfg.history, cfg.heads, cfg.temporal_layers);
        let len = t_h + 1;
        let enc = format!("encoder.{}", source_name(source));
        let mut disp = Vec::with_capacity(n * t_h * 2);
        let mut key_mask = Vec::with_capacity(n * len);
        for t in tracks {
            if t.displacements.len() != t_h {
                return Err(Error::shape("encode", &[t.displacements.len()], &[t_h]));
            }
            disp.extend(t.displacements.iter().flatten());
            key_mask.extend(&t.mask);
            key_mask.push(true);
        }
        let x = self.tape.constant(vec![n * t_h, 2], disp)?;
        let e = self.mlp(x, &format!("{enc}.embed"))?;
        let token = self.w(&format!("{enc}.token"))?;
        let with_token = self.tape.concat_rows(&[e, token])?;
        let order: Vec<usize> = (0..n)
            .flat_map(|b| (b * t_h..(b + 1) * t_h).chain(std::iter::once(n * t_h)))
            .collect();
        let seq = self.tape.gather_rows(with_token, &order)?;
        let pos = self.w(&format!("{enc}.position"))?;
        let tiled: Vec<usize> = (0..n).flat_map(|_| 0..len).collect();
        let pos = self.tape.gather_rows(pos, &tiled)?;
        let seq = self.tape.add(seq, pos)?;
        let proj = self.w(&format!("{enc}.proj"))?;
        let mut h = self.tape.matmul(seq, proj)?;
        for l in 0..layers {
            let p = format!("{enc}.layer{l}");
            let last = l + 1 == layers;
            // Only the token rows feed later stages, so the last layer
            // computes queries for them alone.
            let (q_in, lq) = if last {
                let rows: Vec<usize> = (0..n).map(|b| b * len + t_h).collect();
                (self.tape.gather_rows(h, &rows)?, 1)
            } else {
                (h, len)
            };
            let wq = self.w(&format!("{p}.wq"))?;
            let wk = self.w(&format!("{p}.wk"))?;
            let wv = self.w(&format!("{p}.wv"))?;
            let wo = self.w(&format!("{p}.wo"))?;
            let q = self.tape.matmul(q_in, wq)?;
            let k = self.tape.matmul(h, wk)?;
            let v = self.tape.matmul(h, wv)?;
            let spec = AttentionSpec {
                blocks: n,
                lq,
                lk: len,
                heads,
                key_mask: Some(key_mask.clone()),
            };
            let a = self.tape.attention(q, k, v, spec)?;
            if self.trace.is_some() {
                let probs = self.tape.attention_probs(a).unwrap().to_vec();
                self.record(format!("temporal.{}.layer{l}", source_name(source)), len, probs);
            }
            let o = self.tape.matmul(a, wo)?;
            let o = self.dropout(o)?;
            let r = self.tape.add(q_in, o)?;
            let x = self.norm(r, &format!("{p}.norm1"))?;
            let f = self.mlp(x, &format!("{p}.ffn"))?;
            let f = self.dropout(f)?;
            let r = self.tape.add(x, f)?;
            h = self.norm(r, &format!("{p}.norm2"))?;
        }
        Ok(h)
    }

    /// Gated cross-attention: sensor summaries query broadcast summaries.
    fn fuse(&mut self, sensor: Var, comm: Var, ids: &[u32]) -> Result<Var> {
        let n = ids.len();
        let d_k = self.model.config.d_k;
        let wq = self.w("fusion.wq")?;
        let wk = self.w("fusion.wk")?;
        let wv = self.w("fusion.wv")?;
        let q = self.tape.matmul(sensor, wq)?;
        let k = self.tape.matmul(comm, wk)?;
        let v = self.tape.matmul(comm, wv)?;
        let spec = AttentionSpec {
            blocks: n,
            lq: 1,
            lk: 1,
            heads: 1,
            key_mask: None,
        };
        let aligned = self.tape.attention(q, k, v, spec)?;
        let probs = self.tape.attention_probs(aligned).unwrap().to_vec();
        self.record("fusion".into(), 1, probs);
        let pre = match self.opts.gate {
            GateOverride::None => {
                let cat = self.tape.concat_cols(&[sensor, aligned])?;
                let wa = self.w("fusion.w_alpha")?;
                self.tape.matmul(cat, wa)?
            }
            GateOverride::SensorPath => self.tape.constant(vec![n, d_k], vec![f64::INFINITY; n * d_k])?,
            GateOverride::AlignedPath => self.tape.constant(vec![n, d_k], vec![f64::NEG_INFINITY; n * d_k])?,
        };
        let alpha = self.tape.sigmoid(pre);
        let ws = self.w("fusion.w_self")?;
        let own = self.tape.matmul(sensor, ws)?;
        let a = self.tape.mul(alpha, own)?;
        let rest = self.tape.affine(alpha, -1.0, 1.0);
        let b = self.tape.mul(rest, aligned)?;
        let fused = self.tape.add(a, b)?;
        if let Some(t) = self.trace.as_mut() {
            t.fusion_calls += 1;
            t.fused_agents.extend_from_slice(ids);
            t.gates.extend_from_slice(self.tape.value(alpha));
            t.fused.extend_from_slice(self.tape.value(fused));
            t.sensor_path.extend_from_slice(self.tape.value(own));
            t.aligned_path.extend_from_slice(self.tape.value(aligned));
        }
        Ok(fused)
    }

    /// One multi-head graph-attention layer from `queries` (n rows) over
    /// `keys` (m rows). `rel` holds `[n·m × 2]` edge attributes. Returns the
    /// aggregate and the projected queries.
    #[allow(clippy::too_many_arguments)]
    fn gat(
        &mut self,
        prefix: &str,
        queries: Var,
        keys: Option<Var>,
        n: usize,
        m: usize,
        rel: Var,
        mask: Option<&[bool]>,
        merge: HeadMerge,
    ) -> Result<(Var, Var)> {
        let heads = self.model.config.heads;
        let w = self.w(&format!("{prefix}.w"))?;
        let hq = self.tape.matmul(queries, w)?;
        let hk = match keys {
            Some(k) => self.tape.matmul(k, w)?,
            None => hq,
        };
        let a_src = self.w(&format!("{prefix}.a_src"))?;
        let a_dst = self.w(&format!("{prefix}.a_dst"))?;
        let s = self.tape.matmul(hq, a_src)?;
        let t = self.tape.matmul(hk, a_dst)?;
        let w_edge = self.w(&format!("{prefix}.w_edge"))?;
        let a_edge = self.w(&format!("{prefix}.a_edge"))?;
        let edge_proj = self.tape.matmul(w_edge, a_edge)?;
        let e_edge = self.tape.matmul(rel, edge_proj)?;
        let pair = self.tape.pair_sum(s, t)?;
        let e = self.tape.add(pair, e_edge)?;
        let e = self.tape.leaky_relu(e, LEAKY_SLOPE);
        let e = self.tape.reshape(e, vec![n, m, heads])?;
        let alpha = self.tape.softmax(e, 1, mask)?;
        let alpha = self.tape.reshape(alpha, vec![n * m, heads])?;
        if self.trace.is_some() {
            // rows: (query, head) over keys
            let a = self.tape.value(alpha);
            let mut probs = vec![0.0; n * m * heads];
            for i in 0..n {
                for j in 0..m {
                    for h in 0..heads {
                        probs[(i * heads + h) * m + j] = a[(i * m + j) * heads + h];
                    }
                }
            }
            self.record(prefix.to_string(), m, probs);
        }
        let agg = self.tape.pair_aggregate(alpha, hk, n, heads, merge)?;
        Ok((agg, hq))
    }
}

impl Msma {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = build_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Checkpoint::from_params(&self.params)
            .with_meta("model_kind", "msma")
            .with_meta("model_config", cfg))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("model_kind").is_some_and(|k| k != "msma") {
            return Err(Error::Incompatible("checkpoint is not an MSMA model".into()));
        }
        let cfg = ck
            .meta
            .get("model_config")
            .ok_or_else(|| Error::Incompatible("checkpoint lacks model_config".into()))?;
        let config = ModelConfig::from_toml(cfg)?;
        let mut model = Self::new(config, 0)?;
        let stored = ck.to_params("")?;
        model.params.load_from(&stored)?;
        Ok(model)
    }

    pub fn step_scale(&self, t: usize) -> f64 {
        step_scale(t)
    }

    /// Records one scene on `tape`. Agents, tracks and lanes are processed
    /// in id order, so the result does not depend on input ordering.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        binder: &mut Binder,
        scene: &SceneInput,
        opts: ForwardOptions,
        rng: &mut R,
    ) -> Result<SceneOutput> {
        let cfg = &self.config;
        let n = scene.agents.len();
        if n == 0 {
            return Err(Error::Empty(format!("scene {} has no agents", scene.scene_id)));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| scene.agents[i].id);
        let mut canon = vec![0; n];
        for (c, &i) in order.iter().enumerate() {
            canon[i] = c;
        }
        let mut pass = Pass {
            model: self,
            tape,
            binder,
            rng,
            opts,
            trace: opts.trace.then(ForwardTrace::default),
        };

        // Route each agent to the summaries it uses.
        let mut per_source: [Vec<&TrackInput>; 3] = Default::default();
        let mut duals: Vec<(usize, usize, u32)> = Vec::new();
        let mut routes = Vec::with_capacity(n);
        for &i in &order {
            let own = scene.track(i, Source::Own);
            let sensor = scene.track(i, Source::Sensor);
            let comm = scene.track(i, Source::Comm);
            fn push<'t>(lists: &mut [Vec<&'t TrackInput>; 3], s: Source, t: &'t TrackInput) -> usize {
                let list = &mut lists[s.index()];
                list.push(t);
                list.len() - 1
            }
            let ps = &mut per_source;
            let route = match (own, sensor, comm) {
                (Some(t), _, _) => Route::Own(push(ps, Source::Own, t)),
                (None, Some(s), Some(c)) => match opts.fusion {
                    FusionMode::Full => {
                        let rs = push(ps, Source::Sensor, s);
                        let rc = push(ps, Source::Comm, c);
                        duals.push((rs, rc, scene.agents[i].id));
                        Route::Fused(duals.len() - 1)
                    }
                    FusionMode::SensorOnly => Route::Sensor(push(ps, Source::Sensor, s)),
                    FusionMode::CommOnly => Route::Comm(push(ps, Source::Comm, c)),
                },
                (None, Some(s), None) => Route::Sensor(push(ps, Source::Sensor, s)),
                (None, None, Some(c)) => Route::Comm(push(ps, Source::Comm, c)),
                (None, None, None) => {
                    return Err(Error::Contract(format!("agent {} has no observation", scene.agents[i].id)))
                }
            };
            routes.push(route);
        }

        let mut summaries: [Option<Var>; 3] = [None, None, None];
        for s in Source::ALL {
            if !per_source[s.index()].is_empty() {
                let tracks = std::mem::take(&mut per_source[s.index()]);
                summaries[s.index()] = Some(pass.encode(s, &tracks)?);
            }
        }
        let fused = if duals.is_empty() {
            None
        } else {
            let rs: Vec<usize> = duals.iter().map(|d| d.0).collect();
            let rc: Vec<usize> = duals.iter().map(|d| d.1).collect();
            let ids: Vec<u32> = duals.iter().map(|d| d.2).collect();
            let zs = pass.tape.gather_rows(summaries[Source::Sensor.index()].unwrap(), &rs)?;
            let zc = pass.tape.gather_rows(summaries[Source::Comm.index()].unwrap(), &rc)?;
            Some(pass.fuse(zs, zc, &ids)?)
        };

        // Stack summaries and pick one row per agent.
        let mut blocks = Vec::new();
        let mut offsets = [0usize; 4];
        let mut total = 0;
        for (k, v) in summaries.iter().chain(std::iter::once(&fused)).enumerate() {
            offsets[k] = total;
            if let Some(v) = v {
                total += pass.tape.shape(*v)[0];
                blocks.push(*v);
            }
        }
        let stacked = pass.tape.concat_rows(&blocks)?;
        let rows: Vec<usize> = routes
            .iter()
            .map(|r| match *r {
                Route::Own(k) => offsets[0] + k,
                Route::Comm(k) => offsets[1] + k,
                Route::Sensor(k) => offsets[2] + k,
                Route::Fused(k) => offsets[3] + k,
            })
            .collect();
        let nodes = pass.tape.gather_rows(stacked, &rows)?;

        // Agent–agent graph: fully connected with self loops.
        let anchors: Vec<Point> = order.iter().map(|&i| scene.agents[i].anchor).collect();
        let mut rel = Vec::with_capacity(n * n * 2);
        for i in 0..n {
            for j in 0..n {
                let r = g::scale(g::sub(anchors[i], anchors[j]), POSITION_SCALE);
                rel.extend(r);
            }
        }
        let rel = pass.tape.constant(vec![n * n, 2], rel)?;
        let mut x = nodes;
        for l in 0..cfg.gat_layers {
            let last = l + 1 == cfg.gat_layers;
            let merge = if last { HeadMerge::Average } else { HeadMerge::Concat };
            let p = format!("agent_gat.layer{l}");
            let (agg, proj) = pass.gat(&p, x, None, n, n, rel, None, merge)?;
            let agg = pass.dropout(agg)?;
            // the source term cancels in the softmax, so each agent's own
            // features enter through this skip path
            let skip = if l == 0 { proj } else { x };
            let r = pass.tape.add(skip, agg)?;
            x = pass.norm(r, &format!("{p}.norm"))?;
        }
        let social = x;

        // Agent–lane graph within the local radius.
        let mut lane_order: Vec<usize> = (0..scene.lanes.len()).collect();
        lane_order.sort_by_key(|&k| scene.lanes[k].id);
        let m = lane_order.len();
        let mut edges = vec![false; n * m];
        for i in 0..n {
            for (k, &li) in lane_order.iter().enumerate() {
                let lane = &scene.lanes[li];
                edges[i * m + k] = g::point_segment_distance(anchors[i], lane.start, lane.end) <= cfg.local_lane_radius;
            }
        }
        let map = if edges.iter().any(|&e| e) {
            let mut disp = Vec::with_capacity(m * 2);
            let mut rel = Vec::with_capacity(n * m * 2);
            for &li in &lane_order {
                disp.extend(scene.lanes[li].displacement);
            }
            for a in &anchors {
                for &li in &lane_order {
                    rel.extend(g::scale(g::sub(scene.lanes[li].reference, *a), POSITION_SCALE));
                }
            }
            let disp = pass.tape.constant(vec![m, 2], disp)?;
            let lanes = pass.mlp(disp, "lane.embed")?;
            let rel = pass.tape.constant(vec![n * m, 2], rel)?;
            let mask: Vec<bool> = edges
                .iter()
                .flat_map(|&e| std::iter::repeat_n(e, cfg.heads))
                .collect();
            let mut query = social;
            let mut agg = None;
            for l in 0..cfg.gat_layers {
                let last = l + 1 == cfg.gat_layers;
                let merge = if last { HeadMerge::Average } else { HeadMerge::Concat };
                let p = format!("lane_gat.layer{l}");
                let (a, _) = pass.gat(&p, query, Some(lanes), n, m, rel, Some(&mask), merge)?;
                let a = pass.dropout(a)?;
                if !last {
                    let r = pass.tape.add(query, a)?;
                    query = pass.norm(r, &format!("{p}.norm"))?;
                }
                agg = Some(a);
            }
            agg.unwrap()
        } else {
            pass.tape.constant(vec![n, cfg.d_g], vec![0.0; n * cfg.d_g])?
        };
        if let Some(t) = pass.trace.as_mut() {
            t.lane_edges = edges;
        }

        let emb = pass.tape.concat_cols(&[social, map])?;
        let reg = pass.mlp(emb, "decoder.reg")?;
        let logits = pass.mlp(emb, "decoder.cls")?;
        let scores = pass.tape.softmax(logits, 1, None)?;
        let regression = pass.tape.gather_rows(reg, &canon)?;
        let scores = pass.tape.gather_rows(scores, &canon)?;
        Ok(SceneOutput {
            regression,
            scores,
            anchors: scene.agents.iter().map(|a| a.anchor).collect(),
            trace: pass.trace,
        })
    }

    /// Decodes the tape values of a forward pass into absolute predictions.
    pub fn decode(&self, tape: &Tape, scene: &SceneInput, out: &SceneOutput) -> PredictionSet {
        PredictionSet::from_raw(
            self.config.modes,
            self.config.horizon,
            scene.agents.iter().map(|a| a.id).collect(),
            &out.anchors,
            tape.value(out.regression),
            tape.value(out.scores),
        )
    }

    /// Eval-mode prediction for one scene.
    pub fn predict(&self, scene: &SceneInput, fusion: FusionMode) -> Result<PredictionSet> {
        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let opts = ForwardOptions {
            fusion,
            ..ForwardOptions::eval()
        };
        let out = self.forward(&mut tape, &mut binder, scene, opts, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(self.decode(&tape, scene, &out))
    }

    /// Eval-mode forward pass that also returns the instrumentation trace.
    pub fn inspect(&self, scene: &SceneInput, opts: ForwardOptions) -> Result<(PredictionSet, ForwardTrace)> {
        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let opts = ForwardOptions {
            trace: true,
            training: false,
            ..opts
        };
        let out = self.forward(&mut tape, &mut binder, scene, opts, &mut ChaCha8Rng::seed_from_u64(0))?;
        let pred = self.decode(&tape, scene, &out);
        Ok((pred, out.trace.unwrap_or_default()))
    }
}
