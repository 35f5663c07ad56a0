#![allow(dead_code)]

use msma::scene::geometry::{self as g, Point};
use msma::scene::vectorize::{displacements, AgentInput, LaneInput, TrackInput};
use msma::scene::{SceneInput, Source};

/// Straight-ish motion from `start` with a slight per-step wobble.
fn path(start: Point, vel: Point, steps: std::ops::Range<i32>, wobble: f64) -> Vec<Option<Point>> {
    steps
        .map(|t| {
            let t = t as f64;
            Some([start[0] + vel[0] * t + wobble * (1.3 * t).sin(), start[1] + vel[1] * t + wobble * (0.7 * t).cos()])
        })
        .collect()
}

fn track(agent: usize, source: Source, history: &[Option<Point>]) -> TrackInput {
    let (d, m) = displacements(history);
    TrackInput {
        agent,
        source,
        displacements: d,
        mask: m,
        last_position: history.iter().rev().find_map(|p| *p).unwrap(),
    }
}

fn lane(id: u32, start: Point, end: Point) -> LaneInput {
    LaneInput {
        id,
        start,
        end,
        displacement: g::sub(end, start),
        reference: g::lerp(start, end, 0.5),
    }
}

/// Three agents (the CAV, a dual-observed connected vehicle and a sensed
/// vehicle with one dropped frame) and four lane segments, one of them out
/// of every agent's local radius.
pub fn tiny_scene(history: usize, horizon: usize) -> SceneInput {
    let h = history as i32;
    let f = horizon as i32;
    let specs = [
        (7u32, [0.0, 0.0], [0.9, 0.05], true, false),
        (3, [8.0, 3.0], [-0.6, 0.2], false, true),
        (5, [-6.0, 12.0], [0.3, -0.8], false, false),
    ];
    let mut agents = Vec::new();
    let mut tracks = Vec::new();
    for (i, &(id, p0, v, is_cav, connected)) in specs.iter().enumerate() {
        let start = g::sub(p0, g::scale(v, (h - 1) as f64));
        let hist = path(start, v, 0..h, 0.05 * (i + 1) as f64);
        let future = path(start, v, h..h + f, 0.05 * (i + 1) as f64);
        match i {
            0 => tracks.push(track(i, Source::Own, &hist)),
            1 => {
                let noisy: Vec<_> = hist
                    .iter()
                    .enumerate()
                    .map(|(t, p)| p.map(|p| [p[0] + 0.1 * (t as f64).cos(), p[1] - 0.08 * (t as f64).sin()]))
                    .collect();
                tracks.push(track(i, Source::Sensor, &noisy));
                tracks.push(track(i, Source::Comm, &hist));
            }
            _ => {
                let mut gap = hist.clone();
                gap[h as usize / 2] = None;
                tracks.push(track(i, Source::Sensor, &gap));
            }
        }
        agents.push(AgentInput {
            id,
            anchor: tracks.last().unwrap().last_position,
            is_cav,
            connected,
            in_sensing_range: g::norm(p0) <= 30.0,
            scored: true,
            truth_history: hist,
            future,
        });
    }
    let lanes = vec![
        lane(40, [-20.0, -1.75], [-10.0, -1.75]),
        lane(41, [-10.0, -1.75], [0.0, -1.75]),
        lane(12, [0.0, 1.75], [10.0, 2.5]),
        lane(90, [0.0, 45.0], [10.0, 45.0]),
    ];
    SceneInput {
        scene_id: 1,
        agents,
        tracks,
        lanes,
    }
}

/// The same scene with agents, tracks and lanes listed in another order.
pub fn permuted(scene: &SceneInput, agent_perm: &[usize]) -> SceneInput {
    let mut out = scene.clone();
    out.agents = agent_perm.iter().map(|&i| scene.agents[i].clone()).collect();
    let mut inverse = vec![0; agent_perm.len()];
    for (new, &old) in agent_perm.iter().enumerate() {
        inverse[old] = new;
    }
    out.tracks = scene
        .tracks
        .iter()
        .rev()
        .map(|t| TrackInput {
            agent: inverse[t.agent],
            ..t.clone()
        })
        .collect();
    out.lanes.reverse();
    out
}
