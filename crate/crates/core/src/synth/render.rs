//! Parametric frame renderer. Each action class is a shape-and-motion
//! pattern; two class pairs share appearance and trajectory support and
//! differ only in how they move, so single frames cannot separate them.
//!
//! Class map (k = 6):
//!   0 background: dark scene, observation noise only
//!   1 slider:     square sweeping left to right over the full run
//!   2 shuttle:    the same square, out and back at roughly double speed
//!   3 drifter:    disk sweeping top to bottom
//!   4 yoyo:       the same disk, down and back up
//!   5 pulser:     centered ring whose radius/brightness oscillate twice
//!                 per run, nearly vanishing in the troughs

use super::types::ActivityScriptConfig;
use crate::codes::ClassId;
use rand::Rng;
use rand_distr::StandardNormal;

pub const BG_LEVEL: f32 = 0.04;

const SQUARE_COLOR: [f32; 3] = [0.85, 0.30, 0.18];
const DISK_COLOR: [f32; 3] = [0.20, 0.80, 0.35];
const PULSER_COLOR: [f32; 3] = [0.30, 0.45, 0.95];

/// Rendered frame: rgb in [0,1] plus the shape coverage mask in [0,1].
pub struct RenderedFrame {
    pub rgb: Vec<f32>,
    pub mask: Vec<f32>,
}

/// Out-and-back profile: rises to 0.92 then falls back to 0.12, so the end
/// of a run does not land exactly on the start position.
fn shuttle(p: f64) -> f64 {
    let turn = 0.55;
    if p < turn {
        0.92 * p / turn
    } else {
        0.92 - (0.92 - 0.12) * (p - turn) / (1.0 - turn)
    }
}

fn pulse(p: f64) -> f64 {
    // Two bright peaks and three dim troughs per run; ends mid-bright so the
    // first and last frames of a run differ.
    0.5 - 0.5 * (4.5 * std::f64::consts::PI * p).cos()
}

struct Shape {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    size: f64,
    brightness: f64,
    color: [f32; 3],
}

enum ShapeKind {
    Square,
    Disk,
    Ring,
}

fn shape_for(class: ClassId, phase: f64, hw: usize) -> Option<Shape> {
    let s = hw as f64;
    let margin = s * 0.16;
    let span = s - 2.0 * margin;
    match class.0 {
        0 => None,
        1 => Some(Shape {
            kind: ShapeKind::Square,
            cx: margin + span * phase,
            cy: s / 2.0,
            size: s * 0.14,
            brightness: 1.0,
            color: SQUARE_COLOR,
        }),
        2 => Some(Shape {
            kind: ShapeKind::Square,
            cx: margin + span * shuttle(phase),
            cy: s / 2.0,
            size: s * 0.14,
            brightness: 1.0,
            color: SQUARE_COLOR,
        }),
        3 => Some(Shape {
            kind: ShapeKind::Disk,
            cx: s / 2.0,
            cy: margin + span * phase,
            size: s * 0.16,
            brightness: 1.0,
            color: DISK_COLOR,
        }),
        4 => Some(Shape {
            kind: ShapeKind::Disk,
            cx: s / 2.0,
            cy: margin + span * shuttle(phase),
            size: s * 0.16,
            brightness: 1.0,
            color: DISK_COLOR,
        }),
        _ => {
            let o = pulse(phase);
            Some(Shape {
                kind: ShapeKind::Ring,
                cx: s / 2.0,
                cy: s / 2.0,
                size: s * (0.06 + 0.30 * o),
                brightness: 0.12 + 0.88 * o,
                color: PULSER_COLOR,
            })
        }
    }
}

fn coverage(shape: &Shape, x: f64, y: f64) -> f64 {
    let dx = x - shape.cx;
    let dy = y - shape.cy;
    match shape.kind {
        ShapeKind::Square => {
            let cov_x = (shape.size + 0.5 - dx.abs()).clamp(0.0, 1.0);
            let cov_y = (shape.size + 0.5 - dy.abs()).clamp(0.0, 1.0);
            cov_x * cov_y
        }
        ShapeKind::Disk => {
            let d = (dx * dx + dy * dy).sqrt();
            (shape.size + 0.5 - d).clamp(0.0, 1.0)
        }
        ShapeKind::Ring => {
            let d = (dx * dx + dy * dy).sqrt();
            let band = 1.6;
            (band + 0.5 - (d - shape.size).abs()).clamp(0.0, 1.0)
        }
    }
}

/// Render one frame. `jitter` shifts the whole scene (egocentric stand-in).
/// Noise is drawn sequentially from `rng`, one normal sample per channel.
pub fn render_frame<R: Rng>(
    class: ClassId,
    phase: f64,
    cfg: &ActivityScriptConfig,
    jitter: (f64, f64),
    rng: &mut R,
) -> RenderedFrame {
    let hw = cfg.image_hw;
    let mut rgb = vec![BG_LEVEL; hw * hw * 3];
    let mut mask = vec![0.0f32; hw * hw];
    if let Some(mut shape) = shape_for(class, phase, hw) {
        shape.cx += jitter.0;
        shape.cy += jitter.1;
        for y in 0..hw {
            for x in 0..hw {
                let cov = coverage(&shape, x as f64, y as f64);
                if cov > 0.0 {
                    let idx = (y * hw + x) * 3;
                    let a = (cov * shape.brightness) as f32;
                    for c in 0..3 {
                        rgb[idx + c] += a * shape.color[c];
                    }
                    mask[y * hw + x] = cov as f32;
                }
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        let sigma = cfg.noise_sigma as f32;
        for v in rgb.iter_mut() {
            let z: f32 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    for v in rgb.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    RenderedFrame { rgb, mask }
}
