//! Configuration and sample types for the activity simulator.

use crate::codes::ClassId;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Auxiliary modality: signed temporal-difference motion (2 channels,
/// flow-like) or a normalized distance field of the shape mask (1 channel,
/// depth-like).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    FrameDiff,
    DistanceField,
}

impl AuxMode {
    pub fn channels(self) -> usize {
        match self {
            AuxMode::FrameDiff => 2,
            AuxMode::DistanceField => 1,
        }
    }
}

/// Per-class frame duration range, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationRange {
    pub min: usize,
    pub max: usize,
}

/// Simulator configuration. Class 0 is background; classes 1..k are actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityScriptConfig {
    /// Class count including background.
    pub k: u16,
    /// Row-stochastic k x k matrix. Row `c` gives the next-run distribution
    /// after a run of class `c`; background runs are interleaved between
    /// action runs, and action columns are renormalized when drawing the
    /// next action.
    pub transition_matrix: Vec<Vec<f64>>,
    /// Duration ranges indexed by class (0 = background).
    pub durations: Vec<DurationRange>,
    pub sequence_length: usize,
    pub image_hw: usize,
    pub aux_mode: AuxMode,
    /// Per-pixel observation noise amplitude.
    pub noise_sigma: f64,
    /// Small random whole-scene translation per frame (egocentric stand-in).
    pub global_jitter: bool,
    pub seed: u64,
}

impl ActivityScriptConfig {
    /// The default desk benchmark: 6 classes (5 actions + background),
    /// 32x32 frames, two motion-confusable class pairs.
    pub fn desk_default() -> Self {
        let k = 6;
        // After any action: back to background. After background: favor the
        // distinct "pulser" class so the confusable pairs stay a minority.
        let mut m = vec![vec![0.0; k]; k];
        m[0] = vec![0.0, 0.11, 0.11, 0.11, 0.11, 0.56];
        for row in m.iter_mut().skip(1) {
            row[0] = 0.8;
            for j in 1..k {
                row[j] = 0.2 * [0.0, 0.11, 0.11, 0.11, 0.11, 0.56][j];
            }
        }
        ActivityScriptConfig {
            k: k as u16,
            transition_matrix: m,
            durations: vec![
                DurationRange { min: 4, max: 9 },   // background
                DurationRange { min: 10, max: 18 }, // actions
                DurationRange { min: 10, max: 18 },
                DurationRange { min: 10, max: 18 },
                DurationRange { min: 10, max: 18 },
                DurationRange { min: 10, max: 18 },
            ],
            sequence_length: 200,
            image_hw: 32,
            aux_mode: AuxMode::FrameDiff,
            noise_sigma: 0.09,
            global_jitter: false,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k as usize;
        if k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {k}")));
        }
        if self.transition_matrix.len() != k {
            return Err(Error::Config(format!(
                "transition matrix has {} rows, expected {k}",
                self.transition_matrix.len()
            )));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Config(format!("transition row {i} has {} entries, expected {k}", row.len())));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::Config(format!("transition row {i} has negative entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "transition row {i} sums to {sum}, expected 1 +- 1e-9"
                )));
            }
        }
        if self.durations.len() != k {
            return Err(Error::Config(format!(
                "{} duration ranges for {k} classes",
                self.durations.len()
            )));
        }
        for (i, d) in self.durations.iter().enumerate() {
            if d.min == 0 || d.min > d.max {
                return Err(Error::Config(format!(
                    "duration range for class {i} must satisfy 1 <= min <= max, got {d:?}"
                )));
            }
        }
        if self.sequence_length == 0 {
            return Err(Error::Config("sequence_length must be positive".into()));
        }
        if self.image_hw < 8 {
            return Err(Error::Config("image_hw must be at least 8".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Actions that can never be drawn: zero mass in every action row
    /// restricted to action columns. Returns a warning string, not an error.
    pub fn unreachable_actions(&self) -> Vec<u16> {
        let k = self.k as usize;
        let mut reachable = vec![false; k];
        for row in &self.transition_matrix {
            for (j, &p) in row.iter().enumerate().skip(1) {
                if p > 0.0 {
                    reachable[j] = true;
                }
            }
        }
        (1..k).filter(|&j| !reachable[j]).map(|j| j as u16).collect()
    }
}

/// Time-aligned multimodal sample: rgb [T,H,W,3], aux [T,H,W,{1|2}], and
/// per-frame labels, all sharing T. Values live in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub rgb: Tensor<f32>,
    pub aux: Tensor<f32>,
    pub labels: Vec<ClassId>,
    pub k: u16,
}

impl SequenceSample {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn hw(&self) -> usize {
        self.rgb.shape()[1]
    }

    pub fn aux_channels(&self) -> usize {
        self.aux.shape()[3]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.labels.len();
        if self.rgb.shape().len() != 4 || self.aux.shape().len() != 4 {
            return Err(Error::Dimension("sequence tensors must be [T,H,W,C]".into()));
        }
        if self.rgb.shape()[0] != t || self.aux.shape()[0] != t {
            return Err(Error::Dimension("rgb, aux, and labels must share T".into()));
        }
        if self.rgb.shape()[3] != 3 {
            return Err(Error::Dimension("rgb must have 3 channels".into()));
        }
        if self.labels.iter().any(|c| c.index() >= self.k as usize) {
            return Err(Error::Data("label out of range for k".into()));
        }
        Ok(())
    }
}
