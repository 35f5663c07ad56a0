use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network extents. `Default` is the full-size configuration; [`ModelConfig::desk`]
/// is a reduced one that trains on a single core in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub history: usize,
    pub horizon: usize,
    /// Input embedding width.
    pub d_h: usize,
    /// Temporal and fusion width.
    pub d_k: usize,
    /// Graph feature width.
    pub d_g: usize,
    pub heads: usize,
    pub temporal_layers: usize,
    /// Layers of each graph (agent–agent and agent–lane).
    pub gat_layers: usize,
    pub modes: usize,
    pub dropout: f64,
    pub local_lane_radius: f64,
    /// Hidden width of the decoder regression head.
    pub decoder_hidden: usize,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            history: 30,
            horizon: 50,
            d_h: 16,
            d_k: 64,
            d_g: 64,
            heads: 8,
            temporal_layers: 4,
            gat_layers: 8,
            modes: 5,
            dropout: 0.1,
            local_lane_radius: 30.0,
            decoder_hidden: 128,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration exercising every component; used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            history: 5,
            horizon: 3,
            d_h: 4,
            d_k: 8,
            d_g: 8,
            heads: 2,
            temporal_layers: 2,
            gat_layers: 2,
            modes: 2,
            dropout: 0.0,
            decoder_hidden: 8,
            ..Self::default()
        }
    }

    pub fn desk() -> Self {
        Self {
            d_h: 16,
            d_k: 32,
            d_g: 32,
            heads: 4,
            temporal_layers: 1,
            gat_layers: 1,
            dropout: 0.0,
            decoder_hidden: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("history", self.history),
            ("horizon", self.horizon),
            ("d_h", self.d_h),
            ("d_k", self.d_k),
            ("d_g", self.d_g),
            ("heads", self.heads),
            ("temporal_layers", self.temporal_layers),
            ("gat_layers", self.gat_layers),
            ("modes", self.modes),
            ("decoder_hidden", self.decoder_hidden),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_k.is_multiple_of(self.heads) || !self.d_g.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_k={} and d_g={} must be divisible by heads={}",
                self.d_k, self.d_g, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.local_lane_radius > 0.0) || !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("lane radius and layer-norm eps must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Regression outputs per agent: `modes × horizon × (μx, μy, log σx², log σy², ρ)`.
    pub fn regression_width(&self) -> usize {
        self.modes * self.horizon * 5
    }
}
