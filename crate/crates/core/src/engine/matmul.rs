//! Deterministic GEMM kernels. Parallel work is split so that every output
//! element is accumulated in a fixed order regardless of thread count,
//! keeping results bit-identical for a given input.

use super::scalar::Scalar;
use rayon::prelude::*;

/// Work below this many multiply-adds stays on one thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Number of fixed row-chunks for transposed accumulation. Constant so the
/// reduction order never depends on the thread count.
const AT_CHUNKS: usize = 8;

/// c[m,n] += a[m,k] · b[k,n]
pub fn mm_acc<E: Scalar>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |i: usize, crow: &mut [E]| {
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..kk * n + n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n < PAR_THRESHOLD {
        for (i, crow) in c.chunks_exact_mut(n).enumerate() {
            row(i, crow);
        }
    } else {
        c.par_chunks_exact_mut(n).enumerate().for_each(|(i, crow)| {
            row(i, crow);
        });
    }
}

/// c[k,n] += aᵀ · b where a is [m,k] and b is [m,n].
///
/// Accumulates into a fixed number of partial buffers over row chunks and
/// reduces them in chunk order.
pub fn mm_at_acc<E: Scalar>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let chunk_rows = |c_part: &mut [E], lo: usize, hi: usize| {
        for i in lo..hi {
            let arow = &a[i * k..(i + 1) * k];
            let brow = &b[i * n..(i + 1) * n];
            for (kk, &av) in arow.iter().enumerate() {
                let crow = &mut c_part[kk * n..kk * n + n];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            }
        }
    };
    if m * k * n < PAR_THRESHOLD || m < 2 * AT_CHUNKS {
        chunk_rows(c, 0, m);
        return;
    }
    let step = m.div_ceil(AT_CHUNKS);
    let bounds: Vec<(usize, usize)> = (0..AT_CHUNKS)
        .map(|ci| (ci * step, ((ci + 1) * step).min(m)))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let partials: Vec<Vec<E>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut part = vec![E::zero(); k * n];
            chunk_rows(&mut part, lo, hi);
            part
        })
        .collect();
    for part in &partials {
        for (cv, &pv) in c.iter_mut().zip(part) {
            *cv += pv;
        }
    }
}

/// Row-major transpose of a [rows, cols] matrix.
pub fn transpose<E: Scalar>(a: &[E], rows: usize, cols: usize) -> Vec<E> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![E::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
