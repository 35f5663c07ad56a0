//! Synthetic lane layouts: dense centerline paths for the simulator and the
//! resampled segment graph used as model input.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{self as g, Point};
use crate::error::{Error, Result};

const DENSE_SPACING: f64 = 0.25;

fn default_resample() -> f64 {
    5.0
}
fn default_offset() -> f64 {
    1.75
}
fn default_box() -> f64 {
    9.0
}
fn default_spec_version() -> u32 {
    1
}

/// One layout descriptor. Angles are in degrees, lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Straight {
        length: f64,
        #[serde(default)]
        bidirectional: bool,
    },
    Curve {
        radius: f64,
        angle_deg: f64,
        #[serde(default)]
        lead: f64,
    },
    Intersection {
        arm_length: f64,
        #[serde(default = "default_offset")]
        lane_offset: f64,
        #[serde(default = "default_box")]
        box_half: f64,
        #[serde(default)]
        jitter_deg: f64,
    },
    Roundabout {
        radius: f64,
        arms: usize,
        arm_length: f64,
        #[serde(default = "default_offset")]
        lane_offset: f64,
        #[serde(default)]
        jitter_deg: f64,
    },
}

impl Layout {
    pub fn name(&self) -> &'static str {
        match self {
            Layout::Straight { .. } => "straight",
            Layout::Curve { .. } => "curve",
            Layout::Intersection { .. } => "intersection",
            Layout::Roundabout { .. } => "roundabout",
        }
    }
}

/// Contents of a lane-layout spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    #[serde(default = "default_spec_version")]
    pub version: u32,
    /// Maximum lane-segment length after resampling.
    #[serde(default = "default_resample")]
    pub resample: f64,
    pub layouts: Vec<Layout>,
}

impl LayoutSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: LayoutSpec = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Generation(format!("unsupported layout spec version {}", self.version)));
        }
        if self.layouts.is_empty() {
            return Err(Error::Generation("layout spec lists no layouts".into()));
        }
        if !(self.resample > 0.0 && self.resample <= 5.0) {
            return Err(Error::Generation(format!("resample length {} outside (0, 5] m", self.resample)));
        }
        Ok(())
    }

    /// Mixed layouts used by the experiment harness.
    pub fn town() -> Self {
        Self {
            version: 1,
            resample: 5.0,
            layouts: vec![
                Layout::Roundabout {
                    radius: 22.0,
                    arms: 4,
                    arm_length: 90.0,
                    lane_offset: 1.75,
                    jitter_deg: 10.0,
                },
                Layout::Intersection {
                    arm_length: 90.0,
                    lane_offset: 1.75,
                    box_half: 9.0,
                    jitter_deg: 8.0,
                },
                Layout::Curve {
                    radius: 40.0,
                    angle_deg: 120.0,
                    lead: 60.0,
                },
                Layout::Roundabout {
                    radius: 16.0,
                    arms: 3,
                    arm_length: 90.0,
                    lane_offset: 1.75,
                    jitter_deg: 15.0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Road,
    Approach,
    Exit,
    Connector,
    Ring,
}

/// Dense centerline used by the simulator.
#[derive(Debug, Clone)]
pub struct LanePath {
    pub id: usize,
    pub kind: PathKind,
    pub points: Vec<Point>,
    pub cum: Vec<f64>,
    pub successors: Vec<usize>,
    pub predecessors: Vec<usize>,
    pub max_curvature: f64,
}

impl LanePath {
    fn new(id: usize, kind: PathKind, points: Vec<Point>) -> Result<Self> {
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in points.windows(2) {
            acc += g::dist(w[0], w[1]);
            cum.push(acc);
        }
        if points.len() < 2 || acc <= 1e-6 {
            return Err(Error::Generation(format!("lane path {id} has zero length")));
        }
        let mut max_curvature = 0.0f64;
        for i in 1..points.len() - 1 {
            let a = g::sub(points[i], points[i - 1]);
            let b = g::sub(points[i + 1], points[i]);
            let turn = g::cross(a, b).atan2(g::dot(a, b)).abs();
            let ds = 0.5 * (g::norm(a) + g::norm(b));
            if ds > 0.0 {
                max_curvature = max_curvature.max(turn / ds);
            }
        }
        Ok(Self {
            id,
            kind,
            points,
            cum,
            successors: Vec::new(),
            predecessors: Vec::new(),
            max_curvature,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Point at arc length `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.max(1),
        };
        let (c0, c1) = (self.cum[i - 1], self.cum[i]);
        let t = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        g::lerp(self.points[i - 1], self.points[i], t)
    }
}

/// Straight-line piece of a lane centerline after resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSegment {
    pub id: u32,
    pub path: u32,
    pub start: Point,
    pub end: Point,
    #[serde(default)]
    pub predecessors: Vec<u32>,
    #[serde(default)]
    pub successors: Vec<u32>,
}

impl LaneSegment {
    pub fn displacement(&self) -> Point {
        g::sub(self.end, self.start)
    }

    pub fn midpoint(&self) -> Point {
        g::lerp(self.start, self.end, 0.5)
    }

    pub fn length(&self) -> f64 {
        g::dist(self.start, self.end)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        g::point_segment_distance(p, self.start, self.end)
    }
}

#[derive(Debug, Clone)]
pub struct LaneGraph {
    pub name: String,
    pub paths: Vec<LanePath>,
    pub segments: Vec<LaneSegment>,
    pub path_kinds: Vec<PathKind>,
}

impl LaneGraph {
    /// Paths with no predecessor: where new traffic enters.
    pub fn entries(&self) -> Vec<usize> {
        self.paths
            .iter()
            .filter(|p| p.predecessors.is_empty())
            .map(|p| p.id)
            .collect()
    }

    pub fn segments_of_kind(&self, kind: PathKind) -> impl Iterator<Item = &LaneSegment> {
        self.segments
            .iter()
            .filter(move |s| self.path_kinds[s.path as usize] == kind)
    }
}

fn sample_curve(length_hint: f64, f: impl Fn(f64) -> Point) -> Vec<Point> {
    let n = ((length_hint / DENSE_SPACING).ceil() as usize).max(2);
    (0..=n).map(|i| f(i as f64 / n as f64)).collect()
}

fn line(a: Point, b: Point) -> Vec<Point> {
    sample_curve(g::dist(a, b), |t| g::lerp(a, b, t))
}

fn arc(center: Point, radius: f64, a0: f64, sweep: f64) -> Vec<Point> {
    sample_curve(radius * sweep.abs(), |t| g::add(center, g::scale(g::unit(a0 + sweep * t), radius)))
}

/// Quadratic Bézier leaving `p0` along `d0` and arriving at `p2` along `d2`
/// (tangent-continuous at both ends when the tangent lines meet ahead).
fn tangent_bezier(p0: Point, d0: Point, p2: Point, d2: Point) -> Vec<Point> {
    let ctrl = match g::line_intersection(p0, d0, p2, d2) {
        Some((x, s, t)) if s > 0.0 && t < 0.0 => x,
        _ => g::lerp(p0, p2, 0.5),
    };
    let approx = g::dist(p0, ctrl) + g::dist(ctrl, p2);
    sample_curve(approx * 1.2, |t| {
        let a = g::lerp(p0, ctrl, t);
        let b = g::lerp(ctrl, p2, t);
        g::lerp(a, b, t)
    })
}

struct Builder {
    paths: Vec<LanePath>,
}

impl Builder {
    fn path(&mut self, kind: PathKind, points: Vec<Point>) -> Result<usize> {
        let id = self.paths.len();
        self.paths.push(LanePath::new(id, kind, points)?);
        Ok(id)
    }

    fn link(&mut self, from: usize, to: usize) {
        self.paths[from].successors.push(to);
        self.paths[to].predecessors.push(from);
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Generation(format!("{name} must be positive, got {v}")))
    }
}

/// Builds the dense paths for `layout`, then resamples every path into
/// equal-length segments no longer than `resample` meters.
pub fn build_lane_graph<R: Rng + ?Sized>(layout: &Layout, resample: f64, rng: &mut R) -> Result<LaneGraph> {
    positive("resample", resample)?;
    let mut b = Builder { paths: Vec::new() };
    match *layout {
        Layout::Straight { length, bidirectional } => {
            positive("length", length)?;
            b.path(PathKind::Road, line([0.0, 0.0], [length, 0.0]))?;
            if bidirectional {
                b.path(PathKind::Road, line([length, 3.5], [0.0, 3.5]))?;
            }
        }
        Layout::Curve { radius, angle_deg, lead } => {
            positive("radius", radius)?;
            positive("angle", angle_deg)?;
            let sweep = angle_deg.to_radians();
            let center = [0.0, radius];
            let start = [0.0, 0.0];
            let end = g::add(center, g::scale(g::unit(-PI / 2.0 + sweep), radius));
            let mut ids = Vec::new();
            if lead > 0.0 {
                ids.push(b.path(PathKind::Road, line([-lead, 0.0], start))?);
            }
            ids.push(b.path(PathKind::Road, arc(center, radius, -PI / 2.0, sweep))?);
            if lead > 0.0 {
                let dir = g::unit(sweep);
                ids.push(b.path(PathKind::Road, line(end, g::add(end, g::scale(dir, lead))))?);
            }
            for w in ids.windows(2) {
                b.link(w[0], w[1]);
            }
        }
        Layout::Intersection {
            arm_length,
            lane_offset,
            box_half,
            jitter_deg,
        } => {
            positive("arm_length", arm_length)?;
            positive("box_half", box_half)?;
            let mut incoming = Vec::new();
            let mut outgoing = Vec::new();
            for k in 0..4 {
                let jitter = if jitter_deg > 0.0 {
                    rng.random_range(-jitter_deg..jitter_deg)
                } else {
                    0.0
                };
                let u = g::unit((90.0 * k as f64 + jitter).to_radians());
                let left = [-u[1], u[0]];
                let inn_far = g::add(g::scale(u, box_half + arm_length), g::scale(left, lane_offset));
                let inn_near = g::add(g::scale(u, box_half), g::scale(left, lane_offset));
                let out_near = g::sub(g::scale(u, box_half), g::scale(left, lane_offset));
                let out_far = g::sub(g::scale(u, box_half + arm_length), g::scale(left, lane_offset));
                incoming.push((b.path(PathKind::Approach, line(inn_far, inn_near))?, inn_near, g::scale(u, -1.0)));
                outgoing.push((b.path(PathKind::Exit, line(out_near, out_far))?, out_near, u));
            }
            for (a, &(inn, p0, d0)) in incoming.iter().enumerate() {
                for (o, &(out, p2, d2)) in outgoing.iter().enumerate() {
                    if a == o {
                        continue;
                    }
                    let c = b.path(PathKind::Connector, tangent_bezier(p0, d0, p2, d2))?;
                    b.link(inn, c);
                    b.link(c, out);
                }
            }
        }
        Layout::Roundabout {
            radius,
            arms,
            arm_length,
            lane_offset,
            jitter_deg,
        } => {
            positive("radius", radius)?;
            positive("arm_length", arm_length)?;
            if arms < 2 {
                return Err(Error::Generation("roundabout needs at least 2 arms".into()));
            }
            let delta = 0.55f64.min(0.35 * 2.0 * PI / arms as f64);
            let flare = radius * 0.8;
            // (angle, arm index, is_entry)
            let mut junctions: Vec<(f64, usize, bool)> = Vec::new();
            let mut arm_angles = Vec::new();
            for k in 0..arms {
                let jitter = if jitter_deg > 0.0 {
                    rng.random_range(-jitter_deg..jitter_deg)
                } else {
                    0.0
                };
                let phi = (360.0 * k as f64 / arms as f64 + jitter).to_radians();
                arm_angles.push(phi);
                junctions.push((phi - delta, k, false));
                junctions.push((phi + delta, k, true));
            }
            junctions.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nj = junctions.len();
            let ring_pt = |a: f64| g::scale(g::unit(a), radius);
            let tangent = |a: f64| g::unit(a + PI / 2.0);
            let mut ring = Vec::with_capacity(nj);
            for j in 0..nj {
                let a0 = junctions[j].0;
                let mut a1 = junctions[(j + 1) % nj].0;
                if a1 <= a0 {
                    a1 += 2.0 * PI;
                }
                ring.push(b.path(PathKind::Ring, arc([0.0, 0.0], radius, a0, a1 - a0))?);
            }
            for j in 0..nj {
                b.link(ring[j], ring[(j + 1) % nj]);
            }
            for (j, &(a, k, is_entry)) in junctions.iter().enumerate() {
                let u = g::unit(arm_angles[k]);
                let left = [-u[1], u[0]];
                if is_entry {
                    let far = g::add(g::scale(u, radius + flare + arm_length), g::scale(left, lane_offset));
                    let near = g::add(g::scale(u, radius + flare), g::scale(left, lane_offset));
                    let app = b.path(PathKind::Approach, line(far, near))?;
                    let conn = b.path(
                        PathKind::Connector,
                        tangent_bezier(near, g::scale(u, -1.0), ring_pt(a), tangent(a)),
                    )?;
                    b.link(app, conn);
                    b.link(conn, ring[j]);
                } else {
                    let near = g::sub(g::scale(u, radius + flare), g::scale(left, lane_offset));
                    let far = g::sub(g::scale(u, radius + flare + arm_length), g::scale(left, lane_offset));
                    let conn = b.path(PathKind::Connector, tangent_bezier(ring_pt(a), tangent(a), near, u))?;
                    let exit = b.path(PathKind::Exit, line(near, far))?;
                    // the ring arc ending at this junction feeds the exit
                    b.link(ring[(j + nj - 1) % nj], conn);
                    b.link(conn, exit);
                }
            }
        }
    }
    Ok(resample_graph(layout.name(), b.paths, resample))
}

fn resample_graph(name: &str, paths: Vec<LanePath>, resample: f64) -> LaneGraph {
    let mut segments: Vec<LaneSegment> = Vec::new();
    let mut ranges = Vec::with_capacity(paths.len());
    for p in &paths {
        let len = p.length();
        let n = ((len / resample) - 1e-9).ceil().max(1.0) as usize;
        let first = segments.len();
        for j in 0..n {
            let s0 = len * j as f64 / n as f64;
            let s1 = len * (j + 1) as f64 / n as f64;
            let id = segments.len() as u32;
            segments.push(LaneSegment {
                id,
                path: p.id as u32,
                start: p.point_at(s0),
                end: p.point_at(s1),
                predecessors: if j > 0 { vec![id - 1] } else { Vec::new() },
                successors: if j + 1 < n { vec![id + 1] } else { Vec::new() },
            });
        }
        ranges.push((first, first + n - 1));
    }
    for p in &paths {
        let last = ranges[p.id].1;
        for &s in &p.successors {
            let first = ranges[s].0;
            segments[last].successors.push(first as u32);
            segments[first].predecessors.push(last as u32);
        }
    }
    let path_kinds = paths.iter().map(|p| p.kind).collect();
    LaneGraph {
        name: name.to_string(),
        paths,
        segments,
        path_kinds,
    }
}
