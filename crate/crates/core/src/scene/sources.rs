//! Observation sources: the CAV's own track, broadcasts from connected
//! vehicles and the CAV's onboard sensing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::window::{RawWindow, HISTORY_FRAMES, LATENCY_BUFFER, SENSING_RADIUS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Source {
    /// The CAV's own ground-truth motion.
    Own = 1,
    /// Broadcast by a connected vehicle; delayed.
    Comm = 2,
    /// Measured by the CAV's sensors; noisy.
    Sensor = 3,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Own, Source::Comm, Source::Sensor];

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl From<Source> for u8 {
    fn from(s: Source) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for Source {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Source::Own),
            2 => Ok(Source::Comm),
            3 => Ok(Source::Sensor),
            _ => Err(format!("unknown source {v}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTrack {
    pub agent_id: u32,
    pub source: Source,
    /// `HISTORY_FRAMES` positions; `None` marks an invalid frame.
    pub history: Vec<Option<Point>>,
}

impl ObservationTrack {
    pub fn valid_mask(&self) -> Vec<bool> {
        self.history.iter().map(Option::is_some).collect()
    }

    pub fn last_valid(&self) -> Option<Point> {
        self.history.iter().rev().find_map(|p| *p)
    }
}

/// A window with per-agent connectivity and uncorrupted observation tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedWindow {
    pub raw: RawWindow,
    pub connected: Vec<bool>,
    pub tracks: Vec<ObservationTrack>,
}

/// Flags each non-CAV neighbor as connected when its uniform draw falls
/// below `mpr`. One draw is taken per neighbor regardless of `mpr`, so the
/// connected set grows monotonically with `mpr` for a fixed stream.
pub fn assign_sources<R: Rng + ?Sized>(window: &RawWindow, mpr: f64, rng: &mut R) -> Result<SourcedWindow> {
    if !(0.0..=1.0).contains(&mpr) {
        return Err(Error::Param(format!("mpr {mpr} outside [0, 1]")));
    }
    let mut connected = Vec::with_capacity(window.agents.len());
    let mut tracks = Vec::new();
    for (i, agent) in window.agents.iter().enumerate() {
        let history = agent.history().to_vec();
        if i == 0 {
            connected.push(false);
            tracks.push(ObservationTrack {
                agent_id: agent.id,
                source: Source::Own,
                history,
            });
            continue;
        }
        let u: f64 = rng.random();
        let cv = u < mpr;
        connected.push(cv);
        if cv {
            tracks.push(ObservationTrack {
                agent_id: agent.id,
                source: Source::Comm,
                history: history.clone(),
            });
        }
        if agent.distance <= SENSING_RADIUS {
            tracks.push(ObservationTrack {
                agent_id: agent.id,
                source: Source::Sensor,
                history,
            });
        }
    }
    Ok(SourcedWindow {
        raw: window.clone(),
        connected,
        tracks,
    })
}

/// Delays a history by `k` frames: output frame `i` is the ground truth at
/// `i − k`, drawn from the `LATENCY_BUFFER` frames preceding the history.
pub fn inject_latency(buffered: &[Option<Point>], k: usize) -> Result<Vec<Option<Point>>> {
    if buffered.len() != LATENCY_BUFFER + HISTORY_FRAMES {
        return Err(Error::shape(
            "inject_latency",
            &[buffered.len()],
            &[LATENCY_BUFFER + HISTORY_FRAMES],
        ));
    }
    if k > LATENCY_BUFFER {
        return Err(Error::Param(format!("latency {k} exceeds the {LATENCY_BUFFER}-frame buffer")));
    }
    Ok(buffered[LATENCY_BUFFER - k..LATENCY_BUFFER - k + HISTORY_FRAMES].to_vec())
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance to each
/// coordinate of every valid position.
pub fn inject_noise<R: Rng + ?Sized>(history: &[Option<Point>], variance: f64, rng: &mut R) -> Result<Vec<Option<Point>>> {
    if !(0.0..=0.5).contains(&variance) {
        return Err(Error::Param(format!("noise variance {variance} outside [0, 0.5]")));
    }
    if variance == 0.0 {
        return Ok(history.to_vec());
    }
    let normal = rand_distr::Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Param(e.to_string()))?;
    Ok(history
        .iter()
        .map(|p| p.map(|[x, y]| [x + rng.sample(normal), y + rng.sample(normal)]))
        .collect())
}

impl SourcedWindow {
    /// Replaces every broadcast track with its `k`-frame delayed version.
    pub fn apply_latency(&mut self, k: usize) -> Result<()> {
        for t in self.tracks.iter_mut().filter(|t| t.source == Source::Comm) {
            let agent = self
                .raw
                .agents
                .iter()
                .find(|a| a.id == t.agent_id)
                .ok_or_else(|| Error::Contract(format!("track for unknown agent {}", t.agent_id)))?;
            t.history = inject_latency(&agent.truth[..LATENCY_BUFFER + HISTORY_FRAMES], k)?;
        }
        Ok(())
    }

    /// Perturbs every sensor track; `rng_for(agent_id)` supplies an
    /// independent stream per agent.
    pub fn apply_noise<R: Rng>(&mut self, variance: f64, mut rng_for: impl FnMut(u32) -> R) -> Result<()> {
        for t in self.tracks.iter_mut().filter(|t| t.source == Source::Sensor) {
            let mut rng = rng_for(t.agent_id);
            t.history = inject_noise(&t.history, variance, &mut rng)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::window::{WindowAgent, WINDOW_FRAMES};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window(n_neighbors: usize, spacing: f64) -> RawWindow {
        let agent = |id: u32, d: f64| WindowAgent {
            id,
            truth: (0..WINDOW_FRAMES).map(|f| Some([f as f64, d])).collect(),
            distance: d,
        };
        let mut agents = vec![agent(0, 0.0)];
        for i in 0..n_neighbors {
            agents.push(agent(i as u32 + 1, (i as f64 * spacing) % 50.0));
        }
        RawWindow {
            cav_id: 0,
            anchor: 50,
            agents,
        }
    }

    fn count(w: &SourcedWindow, s: Source) -> usize {
        w.tracks.iter().filter(|t| t.source == s).count()
    }

    #[test]
    fn zero_mpr_has_no_broadcasts() {
        let w = assign_sources(&window(20, 3.0), 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(count(&w, Source::Comm), 0);
        assert_eq!(count(&w, Source::Own), 1);
    }

    #[test]
    fn full_mpr_connects_every_neighbor() {
        let raw = window(20, 3.0);
        let w = assign_sources(&raw, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(count(&w, Source::Comm), 20);
        let sensed = raw.agents[1..].iter().filter(|a| a.distance <= SENSING_RADIUS).count();
        assert_eq!(count(&w, Source::Sensor), sensed);
    }

    #[test]
    fn half_mpr_connects_about_half() {
        let w = assign_sources(&window(10_000, 0.37), 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let frac = w.connected[1..].iter().filter(|&&c| c).count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn connected_sets_nest_across_mpr() {
        let raw = window(200, 0.7);
        let lo = assign_sources(&raw, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let hi = assign_sources(&raw, 0.6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(lo.connected.iter().zip(&hi.connected).all(|(&a, &b)| !a || b));
    }

    #[test]
    fn dual_tracks_identical_without_corruption() {
        let raw = window(5, 4.0);
        let mut w = assign_sources(&raw, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        w.apply_latency(0).unwrap();
        w.apply_noise(0.0, |_| ChaCha8Rng::seed_from_u64(0)).unwrap();
        for id in 1..=5u32 {
            let ts: Vec<_> = w.tracks.iter().filter(|t| t.agent_id == id).collect();
            assert_eq!(ts.len(), 2);
            assert_eq!(ts[0].history, ts[1].history);
        }
    }

    fn ramp() -> Vec<Option<Point>> {
        (0..LATENCY_BUFFER + HISTORY_FRAMES).map(|t| Some([t as f64, 0.0])).collect()
    }

    #[test]
    fn latency_shifts_by_k() {
        let truth = ramp();
        assert_eq!(inject_latency(&truth, 0).unwrap(), truth[LATENCY_BUFFER..].to_vec());
        let out = inject_latency(&truth, 3).unwrap();
        for (i, p) in out.iter().enumerate() {
            assert_eq!(p.unwrap()[0], (LATENCY_BUFFER + i) as f64 - 3.0);
        }
        let out = inject_latency(&truth, 15).unwrap();
        assert_eq!(out.last().unwrap().unwrap(), truth[LATENCY_BUFFER + HISTORY_FRAMES - 1 - 15].unwrap());
        assert!(matches!(inject_latency(&truth, 21), Err(Error::Param(_))));
    }

    #[test]
    fn noise_rejects_negative_variance_and_is_identity_at_zero() {
        let h = ramp();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(inject_noise(&h, -0.1, &mut rng).is_err());
        assert_eq!(inject_noise(&h, 0.0, &mut rng).unwrap(), h);
    }

    #[test]
    fn dual_noise_streams_are_independent() {
        let raw = window(3, 5.0);
        let mut w = assign_sources(&raw, 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        w.apply_noise(0.3, |id| ChaCha8Rng::seed_from_u64(100 + id as u64)).unwrap();
        let sensor: Vec<_> = w.tracks.iter().filter(|t| t.source == Source::Sensor).collect();
        let comm: Vec<_> = w.tracks.iter().filter(|t| t.source == Source::Comm).collect();
        // broadcast copies stay clean; sensor copies of different agents differ in noise
        assert!(comm.iter().all(|t| t.history == raw.agents[t.agent_id as usize].history()));
        let res = |t: &ObservationTrack| t.history[0].unwrap()[0] - 20.0;
        assert_ne!(res(sensor[0]), res(sensor[1]));
    }

    #[test]
    fn source_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Source::Comm).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Source>("3").unwrap(), Source::Sensor);
        assert!(serde_json::from_str::<Source>("4").is_err());
    }
}
