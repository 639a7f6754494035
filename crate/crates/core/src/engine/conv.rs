//! 4x4 stride-2 convolution plumbing: output geometry, im2col, col2im.
//!
//! Output spatial size is always ceil(in/2). Even inputs get the symmetric
//! padding of 1; odd inputs need one extra trailing pad cell to reach the
//! ceil size (1 before, 2 after).

use super::scalar::Scalar;
use rayon::prelude::*;

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn pad_before(len: usize) -> usize {
    // total = (ceil(len/2) - 1) * 2 + 4 - len; before = floor(total/2)
    let out = len.div_ceil(STRIDE);
    let total = (out - 1) * STRIDE + KERNEL - len;
    total / 2
}

pub fn out_dim(len: usize) -> usize {
    len.div_ceil(STRIDE)
}

impl ConvGeom {
    pub fn new(n: usize, h: usize, w: usize, cin: usize, cout: usize) -> Self {
        ConvGeom {
            n,
            h,
            w,
            cin,
            cout,
            out_h: out_dim(h),
            out_w: out_dim(w),
            pad_top: pad_before(h),
            pad_left: pad_before(w),
        }
    }

    pub fn rows(&self) -> usize {
        self.n * self.out_h * self.out_w
    }

    pub fn patch(&self) -> usize {
        KERNEL * KERNEL * self.cin
    }
}

/// Expand input patches to a [rows, patch] matrix whose column order matches
/// a row-major [kh, kw, cin, cout] filter tensor.
pub fn im2col<E: Scalar>(x: &[E], g: &ConvGeom) -> Vec<E> {
    let patch = g.patch();
    let mut cols = vec![E::zero(); g.rows() * patch];
    let per_image = g.out_h * g.out_w * patch;
    cols.par_chunks_exact_mut(per_image)
        .enumerate()
        .for_each(|(ni, image_cols)| {
            let xin = &x[ni * g.h * g.w * g.cin..(ni + 1) * g.h * g.w * g.cin];
            let mut idx = 0;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ky in 0..KERNEL {
                        let iy = (oy * STRIDE + ky) as isize - g.pad_top as isize;
                        for kx in 0..KERNEL {
                            let ix = (ox * STRIDE + kx) as isize - g.pad_left as isize;
                            if iy >= 0 && (iy as usize) < g.h && ix >= 0 && (ix as usize) < g.w {
                                let src = ((iy as usize * g.w) + ix as usize) * g.cin;
                                image_cols[idx..idx + g.cin]
                                    .copy_from_slice(&xin[src..src + g.cin]);
                            }
                            idx += g.cin;
                        }
                    }
                }
            }
        });
    cols
}

/// Scatter-add a [rows, patch] gradient matrix back onto input geometry.
pub fn col2im_acc<E: Scalar>(dcols: &[E], g: &ConvGeom, dx: &mut [E]) {
    let patch = g.patch();
    let per_image_cols = g.out_h * g.out_w * patch;
    let per_image_x = g.h * g.w * g.cin;
    dx.par_chunks_exact_mut(per_image_x)
        .enumerate()
        .for_each(|(ni, dxi)| {
            let cols = &dcols[ni * per_image_cols..(ni + 1) * per_image_cols];
            let mut idx = 0;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ky in 0..KERNEL {
                        let iy = (oy * STRIDE + ky) as isize - g.pad_top as isize;
                        for kx in 0..KERNEL {
                            let ix = (ox * STRIDE + kx) as isize - g.pad_left as isize;
                            if iy >= 0 && (iy as usize) < g.h && ix >= 0 && (ix as usize) < g.w {
                                let dst = ((iy as usize * g.w) + ix as usize) * g.cin;
                                for c in 0..g.cin {
                                    dxi[dst + c] += cols[idx + c];
                                }
                            }
                            idx += g.cin;
                        }
                    }
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dims_are_ceil_halves() {
        for (input, want) in [(224, 112), (112, 56), (7, 4), (4, 2), (2, 1), (1, 1), (32, 16)] {
            assert_eq!(out_dim(input), want);
        }
    }

    #[test]
    fn even_inputs_use_symmetric_padding() {
        let g = ConvGeom::new(1, 32, 32, 3, 8);
        assert_eq!((g.pad_top, g.pad_left), (1, 1));
        let g = ConvGeom::new(1, 7, 7, 3, 8);
        assert_eq!((g.pad_top, g.pad_left), (1, 1)); // 1 before, 2 after
        let g = ConvGeom::new(1, 1, 1, 8, 8);
        assert_eq!(g.out_h, 1);
    }
}
