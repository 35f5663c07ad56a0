//! Kinematic lane-following traffic at 10 Hz.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{self as g, Point};
use super::lanes::LaneGraph;
use crate::error::{Error, Result};

pub const FRAME_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Target speeds are drawn uniformly from `[v_min, v_max]` (m/s).
    pub v_min: f64,
    pub v_max: f64,
    /// Bound on the total acceleration magnitude (m/s²).
    pub a_max: f64,
    /// Expected target-speed changes per second.
    pub retarget_rate: f64,
    /// Probability that a retarget is a sharp slowdown.
    pub slowdown_prob: f64,
    /// Desired bumper gap to a leader (m) and time headway (s).
    pub min_gap: f64,
    pub headway: f64,
    /// Replace agents that leave the layout with new ones at entry lanes.
    pub respawn: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            v_min: 4.0,
            v_max: 14.0,
            a_max: 4.0,
            retarget_rate: 0.15,
            slowdown_prob: 0.3,
            min_gap: 6.0,
            headway: 1.2,
            respawn: true,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.v_min > 0.0 && self.v_max >= self.v_min && self.a_max > 0.0) {
            return Err(Error::Generation(format!("invalid simulator speeds/acceleration {self:?}")));
        }
        if !(self.retarget_rate >= 0.0 && (0.0..=1.0).contains(&self.slowdown_prob)) {
            return Err(Error::Generation(format!("invalid simulator rates {self:?}")));
        }
        Ok(())
    }
}

/// Positions of one vehicle; `None` before it spawns and after it leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLog {
    pub id: u32,
    pub positions: Vec<Option<Point>>,
}

impl AgentLog {
    pub fn at(&self, frame: usize) -> Option<Point> {
        self.positions.get(frame).copied().flatten()
    }
}

/// Whole-simulation positions sampled every [`FRAME_DT`] seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLog {
    pub n_frames: usize,
    pub agents: Vec<AgentLog>,
}

impl RawLog {
    pub fn timestamps(&self) -> impl Iterator<Item = f64> {
        (0..self.n_frames).map(|f| f as f64 * FRAME_DT)
    }

    pub fn agent(&self, id: u32) -> Option<&AgentLog> {
        self.agents.iter().find(|a| a.id == id)
    }
}

struct Vehicle {
    log: usize,
    path: usize,
    s: f64,
    v: f64,
    target: f64,
    next: Option<usize>,
    alive: bool,
}

fn choose_next<R: Rng + ?Sized>(graph: &LaneGraph, path: usize, rng: &mut R) -> Option<usize> {
    let succ = &graph.paths[path].successors;
    match succ.len() {
        0 => None,
        1 => Some(succ[0]),
        n => Some(succ[rng.random_range(0..n)]),
    }
}

fn draw_target<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    if cfg.v_max > cfg.v_min {
        rng.random_range(cfg.v_min..=cfg.v_max)
    } else {
        cfg.v_min
    }
}

/// Simulates `n_agents` initial vehicles for `n_frames` frames. Vehicles
/// reaching a dead end are truncated (and replaced when `respawn` is set).
pub fn simulate_agents<R: Rng + ?Sized>(
    graph: &LaneGraph,
    n_agents: usize,
    n_frames: usize,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<RawLog> {
    if n_agents == 0 {
        return Err(Error::Generation("simulation needs at least one agent".into()));
    }
    if graph.paths.is_empty() {
        return Err(Error::Generation("lane graph has no paths".into()));
    }
    cfg.validate()?;
    let a_long = 0.6 * cfg.a_max;
    let a_brake = 0.5 * cfg.a_max;
    let a_lat = 0.6 * cfg.a_max;
    let curve_limit = |path: usize| {
        let k = graph.paths[path].max_curvature;
        if k > 1e-9 {
            (a_lat / k).sqrt()
        } else {
            f64::INFINITY
        }
    };

    let mut logs: Vec<AgentLog> = Vec::new();
    let mut vehicles: Vec<Vehicle> = Vec::new();
    let spawn = |logs: &mut Vec<AgentLog>, vehicles: &mut Vec<Vehicle>, path: usize, s: f64, rng: &mut R| {
        let target = draw_target(cfg, rng).min(curve_limit(path));
        let next = choose_next(graph, path, rng);
        let v0 = match next {
            Some(n) => {
                let remaining = (graph.paths[path].length() - s).max(0.0);
                target.min((curve_limit(n).powi(2) + 2.0 * a_brake * remaining).sqrt())
            }
            None => target,
        };
        logs.push(AgentLog {
            id: logs.len() as u32,
            positions: vec![None; n_frames],
        });
        vehicles.push(Vehicle {
            log: logs.len() - 1,
            path,
            s,
            v: v0,
            target,
            next,
            alive: true,
        });
    };

    // Initial placement: random points on random paths, spaced apart.
    let mut attempts = 0;
    while vehicles.len() < n_agents && attempts < n_agents * 50 {
        attempts += 1;
        let path = rng.random_range(0..graph.paths.len());
        let s = rng.random_range(0.0..graph.paths[path].length());
        let p = graph.paths[path].point_at(s);
        let crowded = vehicles
            .iter()
            .any(|v| g::dist(graph.paths[v.path].point_at(v.s), p) < cfg.min_gap);
        if !crowded {
            spawn(&mut logs, &mut vehicles, path, s, rng);
        }
    }
    let entries = graph.entries();
    let retarget_p = cfg.retarget_rate * FRAME_DT;

    for frame in 0..n_frames {
        for v in vehicles.iter().filter(|v| v.alive) {
            logs[v.log].positions[frame] = Some(graph.paths[v.path].point_at(v.s));
        }
        if frame + 1 == n_frames {
            break;
        }
        // Leader gaps are measured on the pre-update state.
        let snapshot: Vec<(usize, f64, f64, bool)> = vehicles.iter().map(|v| (v.path, v.s, v.v, v.alive)).collect();
        for (i, v) in vehicles.iter_mut().enumerate() {
            if !v.alive {
                continue;
            }
            if rng.random::<f64>() < retarget_p {
                let t = draw_target(cfg, rng);
                v.target = if rng.random::<f64>() < cfg.slowdown_prob {
                    (t * rng.random_range(0.2..0.5)).max(0.5)
                } else {
                    t
                };
            }
            let len = graph.paths[v.path].length();
            let mut allowed = v.target.min(curve_limit(v.path));
            if let Some(n) = v.next {
                let remaining = (len - v.s).max(0.0);
                let ahead = curve_limit(n);
                allowed = allowed.min((ahead * ahead + 2.0 * a_brake * remaining).sqrt());
            }
            let mut gap = f64::INFINITY;
            let mut lead_v = 0.0;
            for (j, &(p, s, lv, alive)) in snapshot.iter().enumerate() {
                if j == i || !alive {
                    continue;
                }
                let d = if p == v.path && s > v.s {
                    s - v.s
                } else if Some(p) == v.next {
                    len - v.s + s
                } else {
                    continue;
                };
                if d < gap {
                    gap = d;
                    lead_v = lv;
                }
            }
            if gap.is_finite() {
                let desired = cfg.min_gap + cfg.headway * v.v;
                if gap < desired {
                    allowed = allowed.min(lead_v + (gap - cfg.min_gap).max(0.0) / cfg.headway.max(0.1));
                }
            }
            let acc = ((allowed - v.v) / FRAME_DT).clamp(-a_long, a_long);
            v.v = (v.v + acc * FRAME_DT).max(0.0);
            v.s += v.v * FRAME_DT;
            while v.alive && v.s > graph.paths[v.path].length() {
                let over = v.s - graph.paths[v.path].length();
                match v.next {
                    Some(n) => {
                        v.path = n;
                        v.s = over;
                        v.next = choose_next(graph, n, rng);
                    }
                    None => v.alive = false,
                }
            }
        }
        if cfg.respawn {
            let exited = vehicles.iter().filter(|v| !v.alive).count();
            vehicles.retain(|v| v.alive);
            for _ in 0..exited {
                if entries.is_empty() {
                    break;
                }
                let path = entries[rng.random_range(0..entries.len())];
                let start = graph.paths[path].point_at(0.0);
                let blocked = vehicles
                    .iter()
                    .any(|v| g::dist(graph.paths[v.path].point_at(v.s), start) < cfg.min_gap * 2.0);
                if !blocked {
                    spawn(&mut logs, &mut vehicles, path, 0.0, rng);
                }
            }
        }
    }
    Ok(RawLog {
        n_frames,
        agents: logs,
    })
}
