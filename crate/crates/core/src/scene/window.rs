//! CAV-centric 10 s windows cut from a simulation log.

use super::geometry::{self as g, Point};
use super::sim::RawLog;
use crate::error::{Error, Result};

/// Frames reserved ahead of the history to feed delayed broadcasts.
pub const LATENCY_BUFFER: usize = 20;
pub const HISTORY_FRAMES: usize = 30;
pub const FUTURE_FRAMES: usize = 50;
pub const WINDOW_FRAMES: usize = LATENCY_BUFFER + HISTORY_FRAMES + FUTURE_FRAMES;

pub const COMM_RADIUS: f64 = 50.0;
pub const SENSING_RADIUS: f64 = 30.0;
pub const LANE_RADIUS: f64 = 75.0;

/// Ground truth of one agent over the window's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAgent {
    pub id: u32,
    pub truth: Vec<Option<Point>>,
    /// Distance to the CAV at the present frame.
    pub distance: f64,
}

impl WindowAgent {
    pub fn history(&self) -> &[Option<Point>] {
        &self.truth[LATENCY_BUFFER..LATENCY_BUFFER + HISTORY_FRAMES]
    }

    pub fn future(&self) -> &[Option<Point>] {
        &self.truth[LATENCY_BUFFER + HISTORY_FRAMES..]
    }

    pub fn present(&self) -> Option<Point> {
        self.truth[LATENCY_BUFFER + HISTORY_FRAMES - 1]
    }
}

/// A window before any source assignment. Frame `anchor` is the first
/// future frame; the window spans `[anchor − 50, anchor + 50)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub cav_id: u32,
    pub anchor: usize,
    /// The CAV first, then neighbors within the communication radius by id.
    pub agents: Vec<WindowAgent>,
}

impl RawWindow {
    pub fn cav(&self) -> &WindowAgent {
        &self.agents[0]
    }
}

/// Cuts windows every `stride` frames for each CAV. A CAV must be present
/// over its whole history and future; neighbors only at the present frame.
pub fn extract_windows(log: &RawLog, cav_ids: &[u32], stride: usize) -> Result<Vec<RawWindow>> {
    if stride == 0 {
        return Err(Error::Param("window stride must be positive".into()));
    }
    if log.agents.is_empty() {
        return Err(Error::Empty("simulation log has no agents".into()));
    }
    let back = LATENCY_BUFFER + HISTORY_FRAMES;
    let mut out = Vec::new();
    for &cav_id in cav_ids {
        let cav = log
            .agent(cav_id)
            .ok_or_else(|| Error::Contract(format!("CAV {cav_id} absent from log")))?;
        let mut anchor = back;
        while anchor + FUTURE_FRAMES <= log.n_frames {
            let covered = (anchor - HISTORY_FRAMES..anchor + FUTURE_FRAMES).all(|f| cav.at(f).is_some());
            if covered {
                let present = anchor - 1;
                let center = cav.at(present).unwrap();
                let slice = |a: &super::sim::AgentLog| a.positions[anchor - back..anchor + FUTURE_FRAMES].to_vec();
                let mut agents = vec![WindowAgent {
                    id: cav_id,
                    truth: slice(cav),
                    distance: 0.0,
                }];
                let mut neighbors: Vec<WindowAgent> = log
                    .agents
                    .iter()
                    .filter(|a| a.id != cav_id)
                    .filter_map(|a| {
                        let p = a.at(present)?;
                        let d = g::dist(p, center);
                        (d <= COMM_RADIUS).then(|| WindowAgent {
                            id: a.id,
                            truth: slice(a),
                            distance: d,
                        })
                    })
                    .collect();
                neighbors.sort_by_key(|a| a.id);
                agents.extend(neighbors);
                out.push(RawWindow { cav_id, anchor, agents });
            }
            anchor += stride;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::sim::AgentLog;

    fn line_agent(id: u32, n: usize, y: f64) -> AgentLog {
        AgentLog {
            id,
            positions: (0..n).map(|f| Some([f as f64 * 0.5, y])).collect(),
        }
    }

    #[test]
    fn ten_second_log_yields_one_window() {
        let log = RawLog {
            n_frames: 100,
            agents: vec![line_agent(0, 100, 0.0)],
        };
        let w = extract_windows(&log, &[0], 10).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].anchor, 50);
        assert_eq!(w[0].cav().truth.len(), WINDOW_FRAMES);
        assert_eq!(WINDOW_FRAMES, 100);
    }

    #[test]
    fn communication_radius_is_inclusive_at_fifty_meters() {
        let log = RawLog {
            n_frames: 100,
            agents: vec![
                line_agent(0, 100, 0.0),
                line_agent(1, 100, 49.9),
                line_agent(2, 100, 50.1),
            ],
        };
        let w = extract_windows(&log, &[0], 10).unwrap();
        let ids: Vec<u32> = w[0].agents.iter().map(|a| a.id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn late_neighbor_is_padded() {
        let mut late = line_agent(1, 100, 5.0);
        for p in late.positions.iter_mut().take(40) {
            *p = None;
        }
        let log = RawLog {
            n_frames: 100,
            agents: vec![line_agent(0, 100, 0.0), late],
        };
        let w = extract_windows(&log, &[0], 10).unwrap();
        let n = &w[0].agents[1];
        assert_eq!(n.history().iter().filter(|p| p.is_none()).count(), 20);
        assert!(n.present().is_some());
    }

    #[test]
    fn missing_cav_is_an_error() {
        let log = RawLog {
            n_frames: 100,
            agents: vec![line_agent(0, 100, 0.0)],
        };
        assert!(matches!(extract_windows(&log, &[9], 10), Err(Error::Contract(_))));
        let empty = RawLog {
            n_frames: 100,
            agents: vec![],
        };
        assert!(extract_windows(&empty, &[0], 10).is_err());
    }

    #[test]
    fn stride_controls_window_count() {
        let log = RawLog {
            n_frames: 200,
            agents: vec![line_agent(0, 200, 0.0)],
        };
        assert_eq!(extract_windows(&log, &[0], 10).unwrap().len(), 11);
        assert_eq!(extract_windows(&log, &[0], 1).unwrap().len(), 101);
    }
}
