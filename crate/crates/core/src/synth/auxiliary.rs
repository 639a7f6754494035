//! Auxiliary modality derivation: a flow-like signed motion proxy or a
//! depth-like distance field.

use super::types::AuxMode;
use crate::error::{Error, Result};

/// Motion proxy scale: values land at 0.5 +- 2*|signal| before clamping.
const DIFF_GAIN: f32 = 2.0;

fn luminance(rgb: &[f32], hw: usize) -> Vec<f32> {
    let mut g = vec![0.0f32; hw * hw];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        g[i] = (px[0] + px[1] + px[2]) / 3.0;
    }
    g
}

fn grad_x(g: &[f32], hw: usize, x: usize, y: usize) -> f32 {
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(hw - 1);
    (g[y * hw + xp] - g[y * hw + xm]) * 0.5
}

fn grad_y(g: &[f32], hw: usize, x: usize, y: usize) -> f32 {
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(hw - 1);
    (g[yp * hw + x] - g[ym * hw + x]) * 0.5
}

/// Signed per-axis motion estimate from consecutive luminance frames:
/// m = -dt * spatial gradient, rescaled so zero motion sits at 0.5.
pub fn frame_diff_pair(prev_rgb: &[f32], cur_rgb: &[f32], hw: usize) -> Vec<f32> {
    let gp = luminance(prev_rgb, hw);
    let gc = luminance(cur_rgb, hw);
    let mut out = vec![0.5f32; hw * hw * 2];
    for y in 0..hw {
        for x in 0..hw {
            let i = y * hw + x;
            let dt = gc[i] - gp[i];
            let mx = -dt * grad_x(&gc, hw, x, y);
            let my = -dt * grad_y(&gc, hw, x, y);
            out[i * 2] = (0.5 + DIFF_GAIN * mx).clamp(0.0, 1.0);
            out[i * 2 + 1] = (0.5 + DIFF_GAIN * my).clamp(0.0, 1.0);
        }
    }
    out
}

/// Unsigned distance to the mask boundary, normalized by half the image
/// diagonal and clamped to [0,1]. An empty mask maps to all ones.
pub fn distance_field(mask: &[f32], hw: usize) -> Vec<f32> {
    let solid: Vec<bool> = mask.iter().map(|&m| m > 0.5).collect();
    let mut boundary = Vec::new();
    for y in 0..hw {
        for x in 0..hw {
            if !solid[y * hw + x] {
                continue;
            }
            let mut edge = x == 0 || x == hw - 1 || y == 0 || y == hw - 1;
            if !edge {
                edge = !solid[y * hw + x - 1]
                    || !solid[y * hw + x + 1]
                    || !solid[(y - 1) * hw + x]
                    || !solid[(y + 1) * hw + x];
            }
            if edge {
                boundary.push((x as f32, y as f32));
            }
        }
    }
    if boundary.is_empty() {
        return vec![1.0; hw * hw];
    }
    let norm = (hw as f32) * std::f32::consts::SQRT_2 / 2.0;
    let mut out = vec![0.0f32; hw * hw];
    for y in 0..hw {
        for x in 0..hw {
            let mut best = f32::INFINITY;
            for &(bx, by) in &boundary {
                let d = (x as f32 - bx).powi(2) + (y as f32 - by).powi(2);
                if d < best {
                    best = d;
                }
            }
            out[y * hw + x] = (best.sqrt() / norm).clamp(0.0, 1.0);
        }
    }
    out
}

/// Derive the auxiliary stream for a whole sequence.
///
/// In frame-diff mode the first frame duplicates the second frame's values.
pub fn derive_aux(
    rgb_frames: &[Vec<f32>],
    masks: &[Vec<f32>],
    hw: usize,
    mode: AuxMode,
) -> Result<Vec<Vec<f32>>> {
    match mode {
        AuxMode::FrameDiff => {
            if rgb_frames.len() < 2 {
                return Err(Error::Usage(
                    "frame_diff mode needs at least 2 frames".into(),
                ));
            }
            let mut out = Vec::with_capacity(rgb_frames.len());
            out.push(Vec::new()); // placeholder, replaced below
            for t in 1..rgb_frames.len() {
                out.push(frame_diff_pair(&rgb_frames[t - 1], &rgb_frames[t], hw));
            }
            out[0] = out[1].clone();
            Ok(out)
        }
        AuxMode::DistanceField => Ok(masks.iter().map(|m| distance_field(m, hw)).collect()),
    }
}
