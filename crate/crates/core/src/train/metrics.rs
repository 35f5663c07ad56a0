//! Displacement metrics of the best-of-D prediction.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::loss::best_mode_endpoint;
use crate::error::{Error, Result};
use crate::model::PredictionSet;
use crate::scene::geometry::{self as g, Point};
use crate::scene::vectorize::AgentInput;
use crate::scene::SceneInput;

/// A prediction further than this from the final true position is a miss.
pub const MISS_THRESHOLD: f64 = 2.0;
/// Future steps per second.
const STEPS_PER_SECOND: usize = 10;

/// Which scored agents a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    All,
    /// Within sensing range of the CAV, excluding the CAV itself.
    Sensing,
    /// Connected vehicles other than the CAV.
    Connected,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Sensing, Cohort::Connected];

    pub fn name(self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::Sensing => "sensing",
            Cohort::Connected => "connected",
        }
    }

    pub fn contains(self, a: &AgentInput) -> bool {
        a.scored
            && match self {
                Cohort::All => true,
                Cohort::Sensing => a.in_sensing_range && !a.is_cav,
                Cohort::Connected => a.connected && !a.is_cav,
            }
    }
}

impl FromStr for Cohort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Cohort::All),
            "sensing" => Ok(Cohort::Sensing),
            "connected" | "cv" => Ok(Cohort::Connected),
            other => Err(Error::Config(format!(
                "unknown cohort `{other}` (expected all, sensing or connected)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ade: f64,
    pub fde: f64,
    pub mr: f64,
    /// Displacement error at 1 s, 2 s, … for every whole second of the horizon.
    pub de: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cohort: Cohort,
    pub agents: usize,
    /// `None` when the cohort is empty.
    pub metrics: Option<Metrics>,
}

/// Per-step displacement errors of one agent's best mode.
pub fn best_errors(modes: &[&[Point]], truth: &[Point]) -> Vec<f64> {
    let d = best_mode_endpoint(modes, truth);
    modes[d].iter().zip(truth).map(|(p, q)| g::dist(*p, *q)).collect()
}

/// Pools per-agent error sequences (all of the same length) into metrics.
pub fn aggregate(cohort: Cohort, errors: &[Vec<f64>]) -> MetricsReport {
    if errors.is_empty() {
        return MetricsReport {
            cohort,
            agents: 0,
            metrics: None,
        };
    }
    let n = errors.len() as f64;
    let horizon = errors[0].len();
    let ade = errors.iter().map(|e| e.iter().sum::<f64>() / horizon as f64).sum::<f64>() / n;
    let fde = errors.iter().map(|e| e[horizon - 1]).sum::<f64>() / n;
    let misses = errors.iter().filter(|e| e[horizon - 1] > MISS_THRESHOLD).count();
    let de = (1..=horizon / STEPS_PER_SECOND)
        .map(|k| errors.iter().map(|e| e[k * STEPS_PER_SECOND - 1]).sum::<f64>() / n)
        .collect();
    MetricsReport {
        cohort,
        agents: errors.len(),
        metrics: Some(Metrics {
            ade,
            fde,
            mr: misses as f64 / n,
            de,
        }),
    }
}

/// Error sequences of every cohort member in `scene`.
pub fn scene_errors(scene: &SceneInput, pred: &PredictionSet, cohort: Cohort) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for a in scene.agents.iter().filter(|a| cohort.contains(a)) {
        let i = pred
            .index_of(a.id)
            .ok_or_else(|| Error::Contract(format!("no prediction for agent {}", a.id)))?;
        let truth: Vec<Point> = a.future.iter().map(|p| p.expect("scored agents have a full future")).collect();
        if truth.len() != pred.horizon {
            return Err(Error::shape("scene_errors", &[truth.len()], &[pred.horizon]));
        }
        let modes: Vec<&[Point]> = (0..pred.modes).map(|d| pred.trajectory(i, d)).collect();
        out.push(best_errors(&modes, &truth));
    }
    Ok(out)
}

/// Metrics of `predictions` (one per scene, aligned) over `cohort`.
pub fn evaluate_predictions(scenes: &[SceneInput], predictions: &[PredictionSet], cohort: Cohort) -> Result<MetricsReport> {
    let mut errors = Vec::new();
    for (s, p) in scenes.iter().zip(predictions) {
        errors.extend(scene_errors(s, p, cohort)?);
    }
    Ok(aggregate(cohort, &errors))
}

/// Comma-separated table with one row per report, values at 6 decimals.
/// Empty cohorts leave their metric columns blank.
pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let seconds = reports
        .iter()
        .filter_map(|r| r.metrics.as_ref().map(|m| m.de.len()))
        .max()
        .unwrap_or(0);
    let mut s = String::from("cohort,agents,ade,fde,mr");
    for k in 1..=seconds {
        let _ = write!(s, ",de_{k}s");
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{},{}", r.cohort.name(), r.agents);
        match &r.metrics {
            Some(m) => {
                for v in [m.ade, m.fde, m.mr].iter().chain(&m.de) {
                    let _ = write!(s, ",{v:.6}");
                }
            }
            None => s.push_str(&",".repeat(3 + seconds)),
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_offset_predictions() {
        let truth: Vec<Point> = (0..50).map(|t| [t as f64, 0.0]).collect();
        let shifted: Vec<Point> = truth.iter().map(|p| [p[0] + 1.0, p[1]]).collect();
        let r = aggregate(Cohort::All, &[best_errors(&[&truth], &truth)]);
        let m = r.metrics.unwrap();
        assert_eq!((m.ade, m.fde, m.mr), (0.0, 0.0, 0.0));
        let m = aggregate(Cohort::All, &[best_errors(&[&shifted], &truth)]).metrics.unwrap();
        assert!((m.ade - 1.0).abs() < 1e-12 && (m.fde - 1.0).abs() < 1e-12);
        assert_eq!(m.mr, 0.0);
        assert_eq!(m.de.len(), 5);
    }

    #[test]
    fn miss_is_strictly_above_threshold() {
        let at = vec![0.0, 2.0];
        let above = vec![0.0, 2.0 + 1e-9];
        assert_eq!(aggregate(Cohort::All, &[at]).metrics.unwrap().mr, 0.0);
        assert_eq!(aggregate(Cohort::All, &[above]).metrics.unwrap().mr, 1.0);
    }

    #[test]
    fn endpoint_picks_the_mode() {
        let truth = vec![[0.0, 0.0], [10.0, 0.0]];
        let near_start = vec![[0.0, 0.0], [7.0, 0.0]];
        let near_end = vec![[5.0, 0.0], [10.5, 0.0]];
        let e = best_errors(&[&near_start, &near_end], &truth);
        assert_eq!(e, vec![5.0, 0.5]);
    }

    #[test]
    fn empty_cohort_is_marked() {
        let r = aggregate(Cohort::Sensing, &[]);
        assert!(r.metrics.is_none());
        let csv = reports_csv(&[r, aggregate(Cohort::All, &[vec![1.0; 10]])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cohort,agents,ade,fde,mr,de_1s");
        assert_eq!(lines[1], "sensing,0,,,,");
        assert_eq!(lines[2], "all,1,1.000000,1.000000,0.000000,1.000000");
    }

    #[test]
    fn cohort_names_round_trip() {
        for c in Cohort::ALL {
            assert_eq!(c.name().parse::<Cohort>().unwrap(), c);
        }
        assert!("nearby".parse::<Cohort>().is_err());
    }
}
