//! Architecture presets and the declared layer ladders.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Base channel ladders at full width.
pub const GEN_CONV_LADDER: [usize; 8] = [64, 128, 256, 512, 512, 512, 512, 512];
pub const CTX_CONV_LADDER: [usize; 5] = [64, 128, 256, 512, 512];
pub const DISC_CONV_LADDER: [usize; 2] = [64, 128];
pub const GEN_DENSE_1: usize = 256;
pub const GEN_DENSE_2: usize = 128;
pub const CONTEXT_DIM: usize = 256;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Desk32,
    Paper224,
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PresetName::Desk32 => write!(f, "desk32"),
            PresetName::Paper224 => write!(f, "paper224"),
        }
    }
}

/// A named architecture scale: spatial input size plus a rational width
/// factor applied to every channel count (rounded up, minimum 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchPreset {
    pub name: PresetName,
    pub input_hw: usize,
    pub width_num: u32,
    pub width_den: u32,
    pub k: u16,
    pub rgb_channels: usize,
    pub aux_channels: usize,
}

impl ArchPreset {
    pub fn desk32(k: u16, aux_channels: usize) -> Self {
        ArchPreset {
            name: PresetName::Desk32,
            input_hw: 32,
            width_num: 1,
            width_den: 8,
            k,
            rgb_channels: 3,
            aux_channels,
        }
    }

    pub fn paper224(k: u16, aux_channels: usize) -> Self {
        ArchPreset {
            name: PresetName::Paper224,
            input_hw: 224,
            width_num: 1,
            width_den: 1,
            k,
            rgb_channels: 3,
            aux_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Parameter(format!("k must be at least 2, got {}", self.k)));
        }
        if self.width_num == 0 || self.width_den == 0 {
            return Err(Error::Parameter("width factor must be positive".into()));
        }
        if !(self.aux_channels == 1 || self.aux_channels == 2) {
            return Err(Error::Parameter(format!(
                "aux stream must have 1 or 2 channels, got {}",
                self.aux_channels
            )));
        }
        Ok(())
    }

    /// Scale a base channel count by the width factor: ceil, minimum 4.
    pub fn scale(&self, base: usize) -> usize {
        let scaled = (base * self.width_num as usize).div_ceil(self.width_den as usize);
        scaled.max(4)
    }

    pub fn gen_conv_ladder(&self) -> Vec<usize> {
        GEN_CONV_LADDER.iter().map(|&c| self.scale(c)).collect()
    }

    pub fn ctx_conv_ladder(&self) -> Vec<usize> {
        CTX_CONV_LADDER.iter().map(|&c| self.scale(c)).collect()
    }

    pub fn disc_conv_ladder(&self) -> Vec<usize> {
        DISC_CONV_LADDER.iter().map(|&c| self.scale(c)).collect()
    }

    pub fn gen_dense_ladder(&self) -> Vec<usize> {
        vec![self.scale(GEN_DENSE_1), self.scale(GEN_DENSE_2), self.k as usize]
    }

    pub fn context_dim(&self) -> usize {
        self.scale(CONTEXT_DIM)
    }

    /// Spatial size after `n` ceil-halving convolutions.
    pub fn spatial_after(&self, n: usize) -> usize {
        let mut d = self.input_hw;
        for _ in 0..n {
            d = crate::engine::conv::out_dim(d);
        }
        d
    }
}

/// Declared layer descriptions used by construction and the audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: usize },
    BatchNorm { eps: f64, momentum: f64 },
    Relu,
    Dense { units: usize },
    Softmax,
    Dropout { rate: f64 },
    Flatten,
    Concat,
}

impl LayerSpec {
    pub fn conv(filters: usize) -> Self {
        LayerSpec::Conv2d { filters, kernel: 4, stride: 2, padding: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Conv2d { kernel, stride, padding, .. } => {
                if *kernel != 4 || *stride != 2 || *padding != 1 {
                    return Err(Error::Parameter(
                        "conv2d layers are fixed at 4x4 kernels, stride 2, padding 1".into(),
                    ));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::Parameter(format!("dropout rate {rate} not in [0,1)")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper224_ladders_are_the_published_ones() {
        let p = ArchPreset::paper224(17, 1);
        assert_eq!(p.gen_conv_ladder(), vec![64, 128, 256, 512, 512, 512, 512, 512]);
        assert_eq!(p.ctx_conv_ladder(), vec![64, 128, 256, 512, 512]);
        assert_eq!(p.disc_conv_ladder(), vec![64, 128]);
        assert_eq!(p.gen_dense_ladder(), vec![256, 128, 17]);
        assert_eq!(p.context_dim(), 256);
    }

    #[test]
    fn desk32_scales_by_one_eighth_with_floor_4() {
        let p = ArchPreset::desk32(6, 2);
        assert_eq!(p.gen_conv_ladder(), vec![8, 16, 32, 64, 64, 64, 64, 64]);
        assert_eq!(p.ctx_conv_ladder(), vec![8, 16, 32, 64, 64]);
        assert_eq!(p.disc_conv_ladder(), vec![8, 16]);
        assert_eq!(p.gen_dense_ladder(), vec![32, 16, 6]);
        assert_eq!(p.context_dim(), 32);
        // Floor at 4: a 1/64 width factor would clamp small ladders.
        let tiny = ArchPreset {
            width_den: 64,
            ..p
        };
        assert_eq!(tiny.scale(64), 4);
    }

    #[test]
    fn spatial_chains_hit_1x1() {
        let p = ArchPreset::paper224(6, 2);
        let chain: Vec<usize> = (1..=8).map(|n| p.spatial_after(n)).collect();
        assert_eq!(chain, vec![112, 56, 28, 14, 7, 4, 2, 1]);
        let d = ArchPreset::desk32(6, 2);
        assert_eq!(d.spatial_after(5), 1);
        assert_eq!(d.spatial_after(8), 1);
    }

    #[test]
    fn invalid_presets_are_rejected() {
        assert!(ArchPreset::desk32(1, 2).validate().is_err());
        assert!(ArchPreset::desk32(6, 3).validate().is_err());
        assert!(LayerSpec::Conv2d { filters: 8, kernel: 3, stride: 2, padding: 1 }
            .validate()
            .is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
    }
}
