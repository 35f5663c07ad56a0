//! Scene records, the end-to-end generator and the JSON-lines dataset file.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::lanes::{build_lane_graph, LaneSegment, LayoutSpec};
use super::normalize::{normalize_scene, Frame};
use super::sim::{simulate_agents, RawLog, SimConfig};
use super::sources::{assign_sources, ObservationTrack};
use super::window::{extract_windows, HISTORY_FRAMES, LANE_RADIUS, LATENCY_BUFFER, SENSING_RADIUS, WINDOW_FRAMES};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

fn dataset_version() -> u32 {
    DATASET_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u32,
    pub connected: bool,
    /// Distance to the CAV at the present frame (meters).
    pub distance: f64,
    /// Ground-truth history, `HISTORY_FRAMES` long.
    pub history: Vec<Option<Point>>,
    /// Ground-truth future, `FUTURE_FRAMES` long.
    pub future: Vec<Option<Point>>,
}

impl AgentRecord {
    /// Full future and at least half of the history observed.
    pub fn is_scored(&self) -> bool {
        let valid = self.history.iter().filter(|p| p.is_some()).count();
        self.future.iter().all(Option::is_some) && 2 * valid >= self.history.len()
    }

    pub fn in_sensing_range(&self) -> bool {
        self.distance <= SENSING_RADIUS
    }
}

/// One CAV-centric sample. Positions are in the CAV frame after
/// normalization; `frame` maps them back to the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    #[serde(default = "dataset_version")]
    pub version: u32,
    pub scene_id: u64,
    pub seed: u64,
    pub layout: String,
    pub mpr: f64,
    pub latency_frames: usize,
    pub noise_variance: f64,
    pub frame: Frame,
    pub cav_id: u32,
    /// The CAV first, then neighbors by id.
    pub agents: Vec<AgentRecord>,
    pub tracks: Vec<ObservationTrack>,
    pub lanes: Vec<LaneSegment>,
}

impl SceneRecord {
    pub fn agent(&self, id: u32) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// 8:1:1 assignment by a hash of the scene id.
pub fn split_of(scene_id: u64) -> Split {
    match splitmix64(scene_id) % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

pub fn split_records(records: &[SceneRecord], split: Split) -> Vec<&SceneRecord> {
    records.iter().filter(|r| split_of(r.scene_id) == split).collect()
}

/// Independent random streams of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Layout = 1,
    Simulation = 2,
    Cav = 3,
    Connectivity = 4,
    Noise = 5,
    Latency = 6,
}

pub fn stream_rng(seed: u64, scene_id: u64, key: u64, stream: Stream) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ scene_id);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ key);
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub scenes: usize,
    pub seed: u64,
    pub mpr: f64,
    pub latency_frames: usize,
    pub noise_variance: f64,
    /// Vehicles placed at the start of each simulation.
    pub agents: usize,
    /// Simulated frames before the window starts.
    pub warmup_frames: usize,
    /// Experimental: draw each scene's latency uniformly from
    /// `1..=latency_frames` instead of using the fixed value.
    pub latency_per_scene: bool,
    pub sim: SimConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scenes: 100,
            seed: 0,
            mpr: 0.5,
            latency_frames: 1,
            noise_variance: 0.1,
            agents: 24,
            warmup_frames: 60,
            latency_per_scene: false,
            sim: SimConfig::default(),
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mpr) {
            return Err(Error::Param(format!("mpr {} outside [0, 1]", self.mpr)));
        }
        if self.latency_frames > LATENCY_BUFFER {
            return Err(Error::Param(format!(
                "latency {} exceeds the {LATENCY_BUFFER}-frame buffer",
                self.latency_frames
            )));
        }
        if !(0.0..=0.5).contains(&self.noise_variance) {
            return Err(Error::Param(format!("noise variance {} outside [0, 0.5]", self.noise_variance)));
        }
        if self.agents == 0 {
            return Err(Error::Param("at least one agent per scene is required".into()));
        }
        if self.scenes == 0 {
            return Err(Error::Param("at least one scene is required".into()));
        }
        Ok(())
    }
}

const SIM_ATTEMPTS: u64 = 8;

/// Generates one scene. The output depends only on the layout spec, the
/// config and `scene_id`; connectivity draws are independent of `mpr`, so
/// datasets differing only in `mpr` share traffic and nest their CV sets.
pub fn generate_scene(spec: &LayoutSpec, cfg: &GenerateConfig, scene_id: u64) -> Result<SceneRecord> {
    cfg.validate()?;
    spec.validate()?;
    let seed = cfg.seed;
    let mut layout_rng = stream_rng(seed, scene_id, 0, Stream::Layout);
    let layout = &spec.layouts[layout_rng.random_range(0..spec.layouts.len())];
    let graph = build_lane_graph(layout, spec.resample, &mut layout_rng)?;

    let mut chosen = None;
    for attempt in 0..SIM_ATTEMPTS {
        let mut sim_rng = stream_rng(seed, scene_id, attempt, Stream::Simulation);
        let log = simulate_agents(&graph, cfg.agents, cfg.warmup_frames + WINDOW_FRAMES, &cfg.sim, &mut sim_rng)?;
        let tail = RawLog {
            n_frames: WINDOW_FRAMES,
            agents: log
                .agents
                .iter()
                .map(|a| super::sim::AgentLog {
                    id: a.id,
                    positions: a.positions[cfg.warmup_frames..].to_vec(),
                })
                .collect(),
        };
        let ids: Vec<u32> = tail.agents.iter().map(|a| a.id).collect();
        let windows = extract_windows(&tail, &ids, WINDOW_FRAMES)?;
        if windows.is_empty() {
            continue;
        }
        let sensed = |w: &super::window::RawWindow| w.agents[1..].iter().any(|a| a.distance <= SENSING_RADIUS);
        let pool: Vec<_> = if windows.iter().any(sensed) {
            windows.into_iter().filter(|w| sensed(w)).collect()
        } else {
            windows
        };
        let mut cav_rng = stream_rng(seed, scene_id, attempt, Stream::Cav);
        let pick = cav_rng.random_range(0..pool.len());
        chosen = Some(pool.into_iter().nth(pick).unwrap());
        break;
    }
    let window = chosen.ok_or_else(|| {
        Error::Generation(format!("scene {scene_id}: no vehicle stays in the layout for a full window"))
    })?;

    let mut conn_rng = stream_rng(seed, scene_id, 0, Stream::Connectivity);
    let mut sourced = assign_sources(&window, cfg.mpr, &mut conn_rng)?;
    let latency = if cfg.latency_per_scene && cfg.latency_frames > 0 {
        stream_rng(seed, scene_id, 0, Stream::Latency).random_range(1..=cfg.latency_frames)
    } else {
        cfg.latency_frames
    };
    sourced.apply_latency(latency)?;
    sourced.apply_noise(cfg.noise_variance, |id| stream_rng(seed, scene_id, id as u64, Stream::Noise))?;

    let center = window.cav().present().expect("CAV present by construction");
    let lanes = graph
        .segments
        .iter()
        .filter(|s| s.distance_to(center) <= LANE_RADIUS)
        .cloned()
        .collect();
    let agents = window
        .agents
        .iter()
        .zip(&sourced.connected)
        .map(|(a, &connected)| AgentRecord {
            id: a.id,
            connected,
            distance: a.distance,
            history: a.history().to_vec(),
            future: a.future().to_vec(),
        })
        .collect();
    let record = SceneRecord {
        version: DATASET_VERSION,
        scene_id,
        seed,
        layout: layout.name().to_string(),
        mpr: cfg.mpr,
        latency_frames: latency,
        noise_variance: cfg.noise_variance,
        frame: Frame::identity(),
        cav_id: window.cav_id,
        agents,
        tracks: sourced.tracks,
        lanes,
    };
    normalize_scene(record)
}

pub fn generate_dataset(spec: &LayoutSpec, cfg: &GenerateConfig) -> Result<Vec<SceneRecord>> {
    (0..cfg.scenes as u64).map(|id| generate_scene(spec, cfg, id)).collect()
}

pub fn write_records<W: Write>(records: &[SceneRecord], out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads JSON lines; errors carry the 1-based line number.
pub fn read_records<R: Read>(input: R) -> Result<Vec<SceneRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.version != DATASET_VERSION {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unsupported record version {}", rec.version),
            });
        }
        validate_record(&rec).map_err(|msg| Error::Parse { line: i + 1, msg })?;
        out.push(rec);
    }
    Ok(out)
}

fn validate_record(r: &SceneRecord) -> std::result::Result<(), String> {
    if r.agents.first().map(|a| a.id) != Some(r.cav_id) {
        return Err("first agent must be the CAV".into());
    }
    for a in &r.agents {
        if a.history.len() != HISTORY_FRAMES || a.future.len() != super::window::FUTURE_FRAMES {
            return Err(format!("agent {} has wrong history/future length", a.id));
        }
    }
    for t in &r.tracks {
        if t.history.len() != HISTORY_FRAMES {
            return Err(format!("track of agent {} has {} frames", t.agent_id, t.history.len()));
        }
        if r.agent(t.agent_id).is_none() {
            return Err(format!("track references unknown agent {}", t.agent_id));
        }
    }
    Ok(())
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_dataset(path: &Path, records: &[SceneRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    write_records(records, fs::File::create(&tmp)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<SceneRecord>> {
    read_records(fs::File::open(path)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scene::geometry as g;
    use crate::scene::lanes::Layout;
    use crate::scene::sources::Source;
    use crate::scene::window::FUTURE_FRAMES;

    /// CAV ending its history at `origin` while moving 1 m/frame along
    /// `heading`, plus two neighbors and a lane, in world coordinates.
    pub(crate) fn sample_record(origin: Point, heading: f64) -> SceneRecord {
        let dir = g::unit(heading);
        let along = |offset: Point, t: f64| Some(g::add(g::add(origin, offset), g::scale(dir, t)));
        let agent = |id: u32, offset: Point| AgentRecord {
            id,
            connected: id == 2,
            distance: g::norm(offset),
            history: (0..HISTORY_FRAMES).map(|t| along(offset, t as f64 - 29.0)).collect(),
            future: (0..FUTURE_FRAMES).map(|t| along(offset, t as f64 + 1.0)).collect(),
        };
        let agents = vec![agent(0, [0.0, 0.0]), agent(1, [5.0, 3.0]), agent(2, [-20.0, 10.0])];
        let track = |a: &AgentRecord, source| ObservationTrack {
            agent_id: a.id,
            source,
            history: a.history.clone(),
        };
        let tracks = vec![
            track(&agents[0], Source::Own),
            track(&agents[1], Source::Sensor),
            track(&agents[2], Source::Comm),
            track(&agents[2], Source::Sensor),
        ];
        SceneRecord {
            version: DATASET_VERSION,
            scene_id: 7,
            seed: 1,
            layout: "straight".into(),
            mpr: 0.5,
            latency_frames: 0,
            noise_variance: 0.0,
            frame: Frame::identity(),
            cav_id: 0,
            agents,
            tracks,
            lanes: vec![LaneSegment {
                id: 0,
                path: 0,
                start: origin,
                end: g::add(origin, g::scale(dir, 5.0)),
                predecessors: vec![],
                successors: vec![1],
            }],
        }
    }

    fn small_cfg(seed: u64) -> GenerateConfig {
        GenerateConfig {
            scenes: 6,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let spec = LayoutSpec::town();
        let recs = generate_dataset(&spec, &small_cfg(3)).unwrap();
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn truncated_file_reports_line() {
        let recs = vec![sample_record([0.0, 0.0], 0.0); 3];
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let cut = buf.len() - 40;
        match read_records(&buf[..cut]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn split_is_deterministic_and_roughly_8_1_1() {
        let counts = (0..10_000u64).fold([0usize; 3], |mut c, id| {
            c[split_of(id) as usize] += 1;
            c
        });
        assert!((7_700..8_300).contains(&counts[0]), "{counts:?}");
        assert!((850..1_150).contains(&counts[1]) && (850..1_150).contains(&counts[2]));
        assert!((0..500u64).all(|id| split_of(id) == split_of(id)));
    }

    #[test]
    fn generation_is_a_pure_function_of_inputs() {
        let spec = LayoutSpec::town();
        let a = generate_dataset(&spec, &small_cfg(11)).unwrap();
        let b = generate_dataset(&spec, &small_cfg(11)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&spec, &small_cfg(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_scenes_respect_radii_and_sources() {
        let spec = LayoutSpec::town();
        let recs = generate_dataset(
            &spec,
            &GenerateConfig {
                scenes: 10,
                mpr: 0.6,
                latency_frames: 0,
                noise_variance: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        for r in &recs {
            assert_eq!(r.tracks.iter().filter(|t| t.source == Source::Own).count(), 1);
            let cav_now = r.agents[0].history.last().unwrap().unwrap();
            assert!(g::norm(cav_now) < 1e-9);
            for t in &r.tracks {
                let a = r.agent(t.agent_id).unwrap();
                match t.source {
                    Source::Own => assert_eq!(t.agent_id, r.cav_id),
                    Source::Comm => assert!(a.distance <= 50.0 && a.connected),
                    Source::Sensor => assert!(a.distance <= 30.0),
                }
                // no corruption configured: every track equals ground truth
                assert_eq!(t.history, a.history);
            }
            for l in &r.lanes {
                assert!(l.distance_to([0.0, 0.0]) <= LANE_RADIUS + 1e-9);
                assert!(l.length() > 0.0 && l.length() <= 5.0 + 1e-9);
            }
        }
        assert!(recs.iter().any(|r| r.agents.len() > 2));
    }

    #[test]
    fn mpr_datasets_share_traffic_and_nest() {
        let spec = LayoutSpec::town();
        let lo = generate_dataset(&spec, &GenerateConfig { mpr: 0.2, ..small_cfg(5) }).unwrap();
        let hi = generate_dataset(&spec, &GenerateConfig { mpr: 0.8, ..small_cfg(5) }).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            assert_eq!(a.cav_id, b.cav_id);
            for (x, y) in a.agents.iter().zip(&b.agents) {
                assert_eq!(x.future, y.future);
                assert!(!x.connected || y.connected);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let spec = LayoutSpec::town();
        let bad = GenerateConfig {
            latency_frames: 21,
            ..Default::default()
        };
        assert!(generate_scene(&spec, &bad, 0).is_err());
        let single = LayoutSpec {
            version: 1,
            resample: 5.0,
            layouts: vec![Layout::Straight {
                length: 0.0,
                bidirectional: false,
            }],
        };
        assert!(generate_scene(&single, &GenerateConfig::default(), 0).is_err());
    }
}
