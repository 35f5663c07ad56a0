//! CAV-centric rigid frame: CAV at the origin, heading along +x.

use serde::{Deserialize, Serialize};

use super::dataset::SceneRecord;
use super::geometry::{self as g, Point};
use super::sources::Source;
use crate::error::{Error, Result};

/// World → local transform `p ↦ R(−heading)·(p − origin)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Point,
    /// Radians, counter-clockwise from world +x.
    pub heading: f64,
    /// Set when no moving frame was found and +x was assumed.
    #[serde(default)]
    pub heading_fallback: bool,
}

impl Frame {
    pub fn identity() -> Self {
        Self {
            origin: [0.0, 0.0],
            heading: 0.0,
            heading_fallback: false,
        }
    }

    pub fn to_local(&self, p: Point) -> Point {
        g::rotate(g::sub(p, self.origin), -self.heading)
    }

    pub fn to_world(&self, p: Point) -> Point {
        g::add(g::rotate(p, self.heading), self.origin)
    }

    /// Heading from the last nonzero displacement of `history`, whose final
    /// entry must be valid.
    pub fn from_history(history: &[Option<Point>]) -> Result<Self> {
        let origin = history
            .last()
            .copied()
            .flatten()
            .ok_or_else(|| Error::Contract("CAV position missing at the present frame".into()))?;
        let mut valid = history.iter().rev().flatten();
        let mut later = *valid.next().unwrap();
        for &p in valid {
            let d = g::sub(later, p);
            if g::norm(d) > 1e-6 {
                return Ok(Self {
                    origin,
                    heading: d[1].atan2(d[0]),
                    heading_fallback: false,
                });
            }
            later = p;
        }
        Ok(Self {
            origin,
            heading: 0.0,
            heading_fallback: true,
        })
    }
}

fn map_all(record: &mut SceneRecord, f: impl Fn(Point) -> Point) {
    let map = |v: &mut Vec<Option<Point>>| {
        for p in v.iter_mut().flatten() {
            *p = f(*p);
        }
    };
    for a in &mut record.agents {
        map(&mut a.history);
        map(&mut a.future);
    }
    for t in &mut record.tracks {
        map(&mut t.history);
    }
    for l in &mut record.lanes {
        l.start = f(l.start);
        l.end = f(l.end);
    }
}

/// Moves a world-frame record into its CAV frame, storing the transform.
pub fn normalize_scene(mut record: SceneRecord) -> Result<SceneRecord> {
    if record.frame != Frame::identity() {
        return Err(Error::Contract("scene is already normalized".into()));
    }
    let own = record
        .tracks
        .iter()
        .find(|t| t.source == Source::Own)
        .ok_or_else(|| Error::Contract("scene has no CAV track".into()))?;
    let frame = Frame::from_history(&own.history)?;
    map_all(&mut record, |p| frame.to_local(p));
    record.frame = frame;
    Ok(record)
}

/// Inverse of [`normalize_scene`].
pub fn denormalize_scene(mut record: SceneRecord) -> SceneRecord {
    let frame = record.frame;
    map_all(&mut record, |p| frame.to_world(p));
    record.frame = Frame::identity();
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::dataset::tests::sample_record;

    #[test]
    fn cav_moves_to_origin_facing_x() {
        // CAV at (10, 5) moving north at 1 m per frame
        let rec = sample_record([10.0, 5.0], std::f64::consts::FRAC_PI_2);
        let n = normalize_scene(rec).unwrap();
        let cav = &n.agents[0];
        let p = cav.history.last().unwrap().unwrap();
        assert!(g::norm(p) < 1e-12);
        let next = cav.future[0].unwrap();
        assert!((next[0] - 1.0).abs() < 1e-12 && next[1].abs() < 1e-12, "{next:?}");
        assert!(!n.frame.heading_fallback);
    }

    #[test]
    fn inverse_recovers_world_coordinates() {
        let rec = sample_record([-37.5, 112.25], 2.1);
        let back = denormalize_scene(normalize_scene(rec.clone()).unwrap());
        for (a, b) in rec.agents.iter().zip(&back.agents) {
            for (p, q) in a.future.iter().zip(&b.future) {
                assert!(g::dist(p.unwrap(), q.unwrap()) < 1e-9);
            }
        }
        for (a, b) in rec.lanes.iter().zip(&back.lanes) {
            assert!(g::dist(a.start, b.start) < 1e-9 && g::dist(a.end, b.end) < 1e-9);
        }
    }

    #[test]
    fn pairwise_distances_preserved() {
        let rec = sample_record([3.0, -4.0], -0.7);
        let n = normalize_scene(rec.clone()).unwrap();
        let pts = |r: &SceneRecord| -> Vec<Point> { r.agents.iter().filter_map(|a| a.future[10]).collect() };
        let (a, b) = (pts(&rec), pts(&n));
        for i in 0..a.len() {
            for j in 0..a.len() {
                assert!((g::dist(a[i], a[j]) - g::dist(b[i], b[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stationary_cav_falls_back_to_x_axis() {
        let h = vec![Some([2.0, 2.0]); 30];
        let f = Frame::from_history(&h).unwrap();
        assert!(f.heading_fallback);
        assert_eq!(f.heading, 0.0);
        // a stop at the end still uses the previous motion
        let mut h: Vec<Option<Point>> = (0..30).map(|t| Some([0.0, t.min(25) as f64])).collect();
        h[29] = h[28];
        let f = Frame::from_history(&h).unwrap();
        assert!((f.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
