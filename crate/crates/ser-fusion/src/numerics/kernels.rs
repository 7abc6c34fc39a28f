//! Raw compute kernels shared by forward and backward passes.
//!
//! All loops keep the innermost dimension contiguous so the compiler can
//! vectorize them; this is where the training time goes.

use crate::numerics::real::Real;

/// c += a[m,k] * b[k,n]
pub fn matmul_nn_acc<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_ip * b_v;
            }
        }
    }
}

/// c += a[m,k] * b[n,k]^T
pub fn matmul_nt_acc<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, c_v) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = R::ZERO;
            for (&x, &y) in a_row.iter().zip(b_row) {
                s += x * y;
            }
            *c_v += s;
        }
    }
}

/// c += a[k,m]^T * b[k,n]
pub fn matmul_tn_acc<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_pi * b_v;
            }
        }
    }
}

/// y += s * x
pub fn axpy<R: Real>(s: R, x: &[R], y: &mut [R]) {
    debug_assert_eq!(x.len(), y.len());
    for (y_v, &x_v) in y.iter_mut().zip(x) {
        *y_v += s * x_v;
    }
}

pub fn dot<R: Real>(x: &[R], y: &[R]) -> R {
    debug_assert_eq!(x.len(), y.len());
    let mut s = R::ZERO;
    for (&a, &b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}

/// Padded strided 1-D convolution over a time-major input.
///
/// x: [t_in, c_in], w: [c_out, kernel, c_in], b: [c_out],
/// y: [t_out, c_out] with t_out = (t_in + pad_l + pad_r - kernel)/stride + 1.
/// Out-of-range taps read as zero.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_fwd<R: Real>(
    x: &[R],
    w: &[R],
    b: &[R],
    y: &mut [R],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad_l: usize,
) {
    let t_out = y.len() / c_out;
    for t in 0..t_out {
        let y_row = &mut y[t * c_out..(t + 1) * c_out];
        y_row.copy_from_slice(b);
        for tap in 0..kernel {
            let src = (t * stride + tap) as isize - pad_l as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let x_row = &x[src as usize * c_in..(src as usize + 1) * c_in];
            for (co, y_v) in y_row.iter_mut().enumerate() {
                let w_row = &w[(co * kernel + tap) * c_in..(co * kernel + tap + 1) * c_in];
                *y_v += dot(x_row, w_row);
            }
        }
    }
}

/// Gradients for [`conv1d_fwd`]; accumulates into dx/dw/db.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_bwd<R: Real>(
    x: &[R],
    w: &[R],
    dy: &[R],
    dx: &mut [R],
    dw: &mut [R],
    db: &mut [R],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad_l: usize,
) {
    let t_out = dy.len() / c_out;
    for t in 0..t_out {
        let dy_row = &dy[t * c_out..(t + 1) * c_out];
        for (co, &g) in dy_row.iter().enumerate() {
            db[co] += g;
            for tap in 0..kernel {
                let src = (t * stride + tap) as isize - pad_l as isize;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let s = src as usize;
                let x_row = &x[s * c_in..(s + 1) * c_in];
                let w_row = &w[(co * kernel + tap) * c_in..(co * kernel + tap + 1) * c_in];
                let dx_row = &mut dx[s * c_in..(s + 1) * c_in];
                axpy(g, w_row, dx_row);
                let dw_row = &mut dw[(co * kernel + tap) * c_in..(co * kernel + tap + 1) * c_in];
                axpy(g, x_row, dw_row);
            }
        }
    }
}

/// In-place stable softmax of one slice.
pub fn softmax_slice<R: Real>(v: &mut [R]) {
    let mut mx = v[0];
    for &x in v.iter() {
        mx = mx.maximum(x);
    }
    let mut sum = R::ZERO;
    for x in v.iter_mut() {
        *x = (*x - mx).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}
