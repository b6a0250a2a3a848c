//! Inner loops shared by the float forward and backward passes.
//!
//! Every reduction uses a fixed association order so that results are
//! bit-reproducible for a given build.

use super::Real;

const LANES: usize = 8;

/// Dot product with eight interleaved partial sums.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn sum<T: Real>(a: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let chunks = a.chunks_exact(LANES);
    let rest = chunks.remainder();
    for x in chunks {
        for i in 0..LANES {
            acc[i] = acc[i] + x[i];
        }
    }
    let mut tail = T::zero();
    for &x in rest {
        tail = tail + x;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Output range `[lo, hi)` and input offset for tap `j` of a "same"
/// convolution over `n` samples with left padding `pad`.
#[inline]
fn tap_range(n: usize, j: usize, pad: usize) -> Option<(usize, usize, usize)> {
    // out[t] reads in[t + j - pad]
    let lo = pad.saturating_sub(j);
    let hi = (n + pad).saturating_sub(j).min(n);
    (lo < hi).then(|| (lo, hi, lo + j - pad))
}

/// Left padding of a "same" convolution with kernel length `k`
/// (the extra sample of an even kernel goes on the right).
pub fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}

/// Single-channel "same" correlation: `out[t] = sum_j w[j] * x[t + j - pad]`,
/// with zeros outside the signal. `out` is overwritten.
pub fn conv_same<T: Real>(x: &[T], w: &[T], out: &mut [T]) {
    let n = x.len();
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|v| *v = T::zero());
    let pad = same_pad(w.len());
    for (j, &wj) in w.iter().enumerate() {
        if let Some((lo, hi, src)) = tap_range(n, j, pad) {
            axpy(&mut out[lo..hi], wj, &x[src..src + (hi - lo)]);
        }
    }
}

/// Backward of [`conv_same`]: accumulates into `dx` and `dw`.
pub fn conv_same_backward<T: Real>(x: &[T], w: &[T], dout: &[T], dx: Option<&mut [T]>, dw: &mut [T]) {
    let n = x.len();
    let pad = same_pad(w.len());
    for (j, dwj) in dw.iter_mut().enumerate() {
        if let Some((lo, hi, src)) = tap_range(n, j, pad) {
            *dwj = *dwj + dot(&dout[lo..hi], &x[src..src + (hi - lo)]);
        }
    }
    if let Some(dx) = dx {
        for (j, &wj) in w.iter().enumerate() {
            if let Some((lo, hi, src)) = tap_range(n, j, pad) {
                axpy(&mut dx[src..src + (hi - lo)], wj, &dout[lo..hi]);
            }
        }
    }
}

/// ReLU followed by non-overlapping max pooling with floor semantics.
/// Writes pooled values and the winning input index (first maximum) for each output.
pub fn relu_maxpool<T: Real>(x: &[T], pool: usize, out: &mut [T], argmax: &mut [u32]) {
    let m = x.len() / pool;
    debug_assert_eq!(out.len(), m);
    for i in 0..m {
        let win = &x[i * pool..(i + 1) * pool];
        let mut best = 0;
        for (j, &v) in win.iter().enumerate().skip(1) {
            if v > win[best] {
                best = j;
            }
        }
        let v = win[best];
        out[i] = if v > T::zero() { v } else { T::zero() };
        argmax[i] = (i * pool + best) as u32;
    }
}

/// Routes pooled gradients back to their argmax positions, masked by ReLU.
pub fn relu_maxpool_backward<T: Real>(pooled: &[T], argmax: &[u32], dpooled: &[T], dx: &mut [T]) {
    dx.iter_mut().for_each(|v| *v = T::zero());
    for ((&p, &idx), &g) in pooled.iter().zip(argmax).zip(dpooled) {
        if p > T::zero() {
            dx[idx as usize] = g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_same(x: &[f64], w: &[f64]) -> Vec<f64> {
        let pad = (w.len() - 1) / 2;
        (0..x.len())
            .map(|t| {
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let s = t as isize + j as isize - pad as isize;
                    if s >= 0 && (s as usize) < x.len() {
                        acc += wj * x[s as usize];
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn conv_same_matches_naive_for_odd_and_even_kernels() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        for k in [1, 2, 5, 16, 40] {
            let w: Vec<f64> = (0..k).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut out = vec![0.0; x.len()];
            conv_same(&x, &w, &mut out);
            for (a, b) in out.iter().zip(naive_same(&x, &w)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_same_backward_is_the_adjoint() {
        let x: Vec<f64> = (0..29).map(|i| (i as f64).cos()).collect();
        let w: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
        let g: Vec<f64> = (0..29).map(|i| (i as f64 * 1.3).sin()).collect();
        let mut dx = vec![0.0; 29];
        let mut dw = vec![0.0; 6];
        conv_same_backward(&x, &w, &g, Some(&mut dx), &mut dw);
        // <conv(x), g> == <x, dx> and == <w, dw>
        let mut y = vec![0.0; 29];
        conv_same(&x, &w, &mut y);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let via_x: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let via_w: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-12);
        assert!((lhs - via_w).abs() < 1e-12);
    }

    #[test]
    fn pooling_floors_and_picks_first_max() {
        let x = [1.0f32, 3.0, 3.0, -1.0, -2.0, -5.0, 7.0];
        let mut out = [0.0; 3];
        let mut idx = [0; 3];
        relu_maxpool(&x, 2, &mut out, &mut idx);
        assert_eq!(out, [3.0, 3.0, 0.0]);
        assert_eq!(idx, [1, 2, 4]);
        let mut dx = [9.0; 7];
        relu_maxpool_backward(&out, &idx, &[1.0, 2.0, 3.0], &mut dx);
        assert_eq!(dx, [0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dot_and_sum_handle_tails() {
        let a: Vec<f64> = (0..19).map(f64::from).collect();
        assert_eq!(sum(&a), 171.0);
        assert_eq!(dot(&a, &a), (0..19).map(|i| (i * i) as f64).sum::<f64>());
    }
}
