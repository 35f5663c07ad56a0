//! Displacement-sequence model inputs built from a normalized record.

use super::dataset::SceneRecord;
use super::geometry::{self as g, Point};
use super::sources::Source;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackInput {
    /// Index into [`SceneInput::agents`].
    pub agent: usize,
    pub source: Source,
    /// `T_h` displacements; entry `t` is `p_t − p_{t−1}`, zero where masked.
    pub displacements: Vec<Point>,
    /// Entry 0 is always masked; entry `t` needs frames `t−1` and `t`.
    pub mask: Vec<bool>,
    pub last_position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentInput {
    pub id: u32,
    /// Last observed position `p_0`, the reference of predicted offsets.
    pub anchor: Point,
    pub is_cav: bool,
    pub connected: bool,
    pub in_sensing_range: bool,
    pub scored: bool,
    pub truth_history: Vec<Option<Point>>,
    pub future: Vec<Option<Point>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneInput {
    pub id: u32,
    pub start: Point,
    pub end: Point,
    /// `Δp_l = end − start`.
    pub displacement: Point,
    /// Reference point `p_l` for agent–lane edges: the segment midpoint.
    pub reference: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub scene_id: u64,
    pub agents: Vec<AgentInput>,
    pub tracks: Vec<TrackInput>,
    pub lanes: Vec<LaneInput>,
}

impl SceneInput {
    pub fn tracks_of(&self, agent: usize) -> impl Iterator<Item = &TrackInput> {
        self.tracks.iter().filter(move |t| t.agent == agent)
    }

    pub fn track(&self, agent: usize, source: Source) -> Option<&TrackInput> {
        self.tracks.iter().find(|t| t.agent == agent && t.source == source)
    }

    pub fn scored(&self) -> impl Iterator<Item = (usize, &AgentInput)> {
        self.agents.iter().enumerate().filter(|(_, a)| a.scored)
    }

    pub fn history_len(&self) -> usize {
        self.tracks.first().map_or(0, |t| t.mask.len())
    }

    /// Moves every position by `offset`; displacements are unchanged.
    pub fn translated(&self, offset: Point) -> Self {
        let mv = |p: Point| g::add(p, offset);
        let mut out = self.clone();
        for a in &mut out.agents {
            a.anchor = mv(a.anchor);
            for p in a.truth_history.iter_mut().chain(a.future.iter_mut()).flatten() {
                *p = mv(*p);
            }
        }
        for t in &mut out.tracks {
            t.last_position = mv(t.last_position);
        }
        for l in &mut out.lanes {
            l.start = mv(l.start);
            l.end = mv(l.end);
            l.reference = mv(l.reference);
        }
        out
    }
}

/// Displacements and mask of a position sequence.
pub fn displacements(history: &[Option<Point>]) -> (Vec<Point>, Vec<bool>) {
    let mut d = vec![[0.0, 0.0]; history.len()];
    let mut m = vec![false; history.len()];
    for t in 1..history.len() {
        if let (Some(a), Some(b)) = (history[t - 1], history[t]) {
            d[t] = g::sub(b, a);
            m[t] = true;
        }
    }
    (d, m)
}

/// Builds the model input. Tracks without any valid frame are dropped, and
/// so are agents left with no track.
pub fn vectorize(record: &SceneRecord) -> Result<SceneInput> {
    let mut agents = Vec::new();
    let mut tracks = Vec::new();
    for a in &record.agents {
        let mut own: Vec<_> = record
            .tracks
            .iter()
            .filter(|t| t.agent_id == a.id)
            .filter_map(|t| t.last_valid().map(|p| (t, p)))
            .collect();
        if own.is_empty() {
            continue;
        }
        own.sort_by_key(|(t, _)| t.source);
        // own track, then sensor, then broadcast
        let anchor = [Source::Own, Source::Sensor, Source::Comm]
            .iter()
            .find_map(|s| own.iter().find(|(t, _)| t.source == *s).map(|&(_, p)| p))
            .unwrap();
        let idx = agents.len();
        for (t, last) in own {
            let (d, m) = displacements(&t.history);
            tracks.push(TrackInput {
                agent: idx,
                source: t.source,
                displacements: d,
                mask: m,
                last_position: last,
            });
        }
        agents.push(AgentInput {
            id: a.id,
            anchor,
            is_cav: a.id == record.cav_id,
            connected: a.connected,
            in_sensing_range: a.in_sensing_range(),
            scored: a.is_scored(),
            truth_history: a.history.clone(),
            future: a.future.clone(),
        });
    }
    if !agents.first().is_some_and(|a| a.is_cav) {
        return Err(Error::Contract(format!("scene {}: CAV has no observation", record.scene_id)));
    }
    let lanes = record
        .lanes
        .iter()
        .map(|l| LaneInput {
            id: l.id,
            start: l.start,
            end: l.end,
            displacement: l.displacement(),
            reference: l.midpoint(),
        })
        .collect();
    Ok(SceneInput {
        scene_id: record.scene_id,
        agents,
        tracks,
        lanes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::dataset::tests::sample_record;
    use crate::scene::normalize::normalize_scene;

    #[test]
    fn stationary_agent_has_zero_displacements() {
        let (d, m) = displacements(&[Some([3.0, 4.0]); 5]);
        assert!(d.iter().all(|p| *p == [0.0, 0.0]));
        assert_eq!(m, vec![false, true, true, true, true]);
    }

    #[test]
    fn displacements_of_a_short_sequence() {
        let (d, m) = displacements(&[Some([0.0, 0.0]), Some([1.0, 0.0]), Some([3.0, 0.0])]);
        assert_eq!(d, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(m.iter().filter(|&&v| v).count(), 2);
    }

    #[test]
    fn gaps_mask_both_neighbors() {
        let (_, m) = displacements(&[Some([0.0, 0.0]), None, Some([1.0, 0.0]), Some([2.0, 0.0])]);
        assert_eq!(m, vec![false, false, false, true]);
    }

    #[test]
    fn anchors_prefer_own_then_sensor() {
        let rec = normalize_scene(sample_record([10.0, 5.0], 0.3)).unwrap();
        let inp = vectorize(&rec).unwrap();
        assert_eq!(inp.agents.len(), 3);
        assert!(g::norm(inp.agents[0].anchor) < 1e-9);
        let sensor = inp.track(2, Source::Sensor).unwrap();
        assert_eq!(inp.agents[2].anchor, sensor.last_position);
        assert_eq!(inp.tracks_of(2).count(), 2);
        assert_eq!(inp.lanes[0].reference, rec.lanes[0].midpoint());
        assert_eq!(inp.history_len(), 30);
    }

    #[test]
    fn agents_without_observations_are_dropped() {
        let mut rec = normalize_scene(sample_record([0.0, 0.0], 0.0)).unwrap();
        rec.tracks.retain(|t| t.agent_id != 1);
        let inp = vectorize(&rec).unwrap();
        assert!(inp.agents.iter().all(|a| a.id != 1));
        assert!(inp.tracks.iter().all(|t| t.agent < inp.agents.len()));
    }
}
