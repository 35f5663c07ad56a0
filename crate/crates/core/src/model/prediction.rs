use super::step_scale;
use crate::scene::geometry::Point;

/// Added to both variances so every covariance is positive definite.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// `(σxx, σxy, σyy)` from per-axis log-variances and an unsquashed correlation.
pub fn covariance(log_var_x: f64, log_var_y: f64, rho_raw: f64) -> [f64; 3] {
    let sxy = rho_raw.tanh() * (0.5 * (log_var_x + log_var_y)).exp();
    [log_var_x.exp() + VARIANCE_FLOOR, sxy, log_var_y.exp() + VARIANCE_FLOOR]
}

/// Mixture predictions in the scene frame (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub agent_ids: Vec<u32>,
    pub modes: usize,
    pub horizon: usize,
    /// Indexed `(agent·modes + mode)·horizon + step`.
    pub means: Vec<Point>,
    /// `(σxx, σxy, σyy)`, same indexing as `means`.
    pub covariances: Vec<[f64; 3]>,
    /// Indexed `agent·modes + mode`; each agent's row sums to one.
    pub scores: Vec<f64>,
}

impl PredictionSet {
    /// Builds predictions from raw head outputs laid out as the model emits them.
    pub fn from_raw(modes: usize, horizon: usize, agent_ids: Vec<u32>, anchors: &[Point], reg: &[f64], scores: &[f64]) -> Self {
        let (d, t_f) = (modes, horizon);
        let n = agent_ids.len();
        let mut means = Vec::with_capacity(n * d * t_f);
        let mut covariances = Vec::with_capacity(n * d * t_f);
        for (i, anchor) in anchors.iter().enumerate() {
            for m in 0..d {
                for t in 0..t_f {
                    let o = ((i * d + m) * t_f + t) * 5;
                    let s = step_scale(t);
                    means.push([anchor[0] + s * reg[o], anchor[1] + s * reg[o + 1]]);
                    covariances.push(covariance(reg[o + 2], reg[o + 3], reg[o + 4]));
                }
            }
        }
        Self {
            agent_ids,
            modes: d,
            horizon: t_f,
            means,
            covariances,
            scores: scores.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_ids.is_empty()
    }

    pub fn mean(&self, agent: usize, mode: usize, step: usize) -> Point {
        self.means[(agent * self.modes + mode) * self.horizon + step]
    }

    pub fn covariance(&self, agent: usize, mode: usize, step: usize) -> [f64; 3] {
        self.covariances[(agent * self.modes + mode) * self.horizon + step]
    }

    pub fn score(&self, agent: usize, mode: usize) -> f64 {
        self.scores[agent * self.modes + mode]
    }

    /// Trajectory of one mode.
    pub fn trajectory(&self, agent: usize, mode: usize) -> &[Point] {
        let start = (agent * self.modes + mode) * self.horizon;
        &self.means[start..start + self.horizon]
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.agent_ids.iter().position(|&a| a == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_is_positive_definite() {
        for &(lx, ly, r) in &[(0.0, 0.0, 0.0), (-30.0, -30.0, 5.0), (3.0, -2.0, -40.0), (10.0, 10.0, 1.0)] {
            let [a, b, c] = covariance(lx, ly, r);
            let tr = a + c;
            let det = a * c - b * b;
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let lo = tr / 2.0 - disc;
            assert!(lo >= VARIANCE_FLOOR * (1.0 - 1e-6), "{lx} {ly} {r}: {lo}");
        }
    }
}
