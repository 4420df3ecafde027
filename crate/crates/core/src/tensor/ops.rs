//! Numeric kernels behind the tape operations.
//!
//! All kernels are pure functions over flat row-major slices so they can be
//! oracle-tested without a tape. Inner loops run along the contiguous
//! fastest-varying axis; backward kernels accumulate into caller-provided
//! buffers instead of allocating.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// ---------------------------------------------------------------------------
// small dense linear algebra (row-major)
// ---------------------------------------------------------------------------

/// out += a (m x k) * b (k x n)
/// Dot product with eight running sums so the FP adds do not form one serial
/// dependency chain. Regrouping is fixed, so results stay deterministic.
#[inline]
pub(crate) fn dot8<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let whole = a.len() - a.len() % 8;
    for (ac, bc) in a[..whole].chunks_exact(8).zip(b[..whole].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ac[l] * bc[l];
        }
    }
    let mut tail = T::zero();
    for (&av, &bv) in a[whole..].iter().zip(&b[whole..]) {
        tail += av * bv;
    }
    (((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))) + tail
}

pub(crate) fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out += a^T (a is k x m, viewed transposed) * b (k x n)
pub(crate) fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out += a (m x k) * b^T (b is n x k, viewed transposed)
pub(crate) fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            *o += dot8(a_row, b_row);
        }
    }
}

// ---------------------------------------------------------------------------
// dense (fully connected) layer
// ---------------------------------------------------------------------------

/// y[o] = b[o] + sum_i w[o, i] * x[i];  w is (n_out x n_in) row-major.
pub(crate) fn dense_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], n_in: usize, n_out: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let w_row = &w[o * n_in..(o + 1) * n_in];
        y.push(b[o] + dot8(w_row, x));
    }
    y
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    n_in: usize,
    n_out: usize,
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    for o in 0..n_out {
        let g = dy[o];
        if g == T::zero() {
            continue;
        }
        let w_row = &w[o * n_in..(o + 1) * n_in];
        if let Some(dx) = dx.as_deref_mut() {
            for (d, &wv) in dx.iter_mut().zip(w_row) {
                *d += g * wv;
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let dw_row = &mut dw[o * n_in..(o + 1) * n_in];
            for (d, &xv) in dw_row.iter_mut().zip(x) {
                *d += g * xv;
            }
        }
    }
    if let Some(db) = db {
        for (d, &g) in db.iter_mut().zip(dy) {
            *d += g;
        }
    }
}

// ---------------------------------------------------------------------------
// 3-D convolution
// ---------------------------------------------------------------------------

/// Geometry of one conv3d application. Input is (cin, d, h, w), kernel is
/// (cout, cin, k, k, k), output is (cout, od, oh, ow).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
    pub pad: usize,
    pub od: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn new(cin: usize, cout: usize, k: usize, input: (usize, usize, usize), stride: usize, pad: usize) -> Result<Self> {
        let (d, h, w) = input;
        if k == 0 || stride == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv3d",
                detail: format!("kernel size {k} and stride {stride} must be positive"),
            });
        }
        let out_extent = |n: usize| -> Result<usize> {
            let padded = n + 2 * pad;
            if padded < k {
                return Err(Error::ShapeMismatch {
                    op: "conv3d",
                    detail: format!("input extent {n} with pad {pad} is smaller than kernel {k}"),
                });
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(ConvDims { cin, cout, k, d, h, w, stride, pad, od: out_extent(d)?, oh: out_extent(h)?, ow: out_extent(w)? })
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.d * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.od * self.oh * self.ow
    }

    pub fn kernel_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k * self.k
    }
}

/// Output index range along one axis for which `o*stride + kq - pad` stays
/// inside `[0, n)`, clipped to `[0, m)`.
#[inline]
fn valid_range(n: usize, m: usize, stride: usize, pad: usize, kq: usize) -> (usize, usize) {
    let s = stride as isize;
    let shift = kq as isize - pad as isize;
    let lo = (-shift).div_euclid(s).max(0);
    let lo = lo + if lo * s + shift < 0 { 1 } else { 0 };
    let hi = (n as isize - 1 - shift).div_euclid(s) + 1;
    let lo = lo.clamp(0, m as isize) as usize;
    let hi = hi.clamp(lo as isize, m as isize) as usize;
    (lo, hi)
}

pub(crate) fn conv3d_forward<T: Scalar>(x: &[T], kern: &[T], bias: &[T], dm: &ConvDims) -> Vec<T> {
    debug_assert_eq!(x.len(), dm.in_len());
    debug_assert_eq!(kern.len(), dm.kernel_len());
    debug_assert_eq!(bias.len(), dm.cout);
    let in_plane = dm.d * dm.h * dm.w;
    let out_plane = dm.od * dm.oh * dm.ow;
    let ks = dm.k;
    let mut out = vec![T::zero(); dm.out_len()];
    for co in 0..dm.cout {
        let out_c = &mut out[co * out_plane..(co + 1) * out_plane];
        out_c.fill(bias[co]);
        for ci in 0..dm.cin {
            let x_c = &x[ci * in_plane..(ci + 1) * in_plane];
            let k_base = (co * dm.cin + ci) * ks * ks * ks;
            for kz in 0..ks {
                let (zlo, zhi) = valid_range(dm.d, dm.od, dm.stride, dm.pad, kz);
                for ky in 0..ks {
                    let (ylo, yhi) = valid_range(dm.h, dm.oh, dm.stride, dm.pad, ky);
                    for kx in 0..ks {
                        let (xlo, xhi) = valid_range(dm.w, dm.ow, dm.stride, dm.pad, kx);
                        if xlo >= xhi {
                            continue;
                        }
                        let wv = kern[k_base + (kz * ks + ky) * ks + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let dxo = kx as isize - dm.pad as isize;
                        for oz in zlo..zhi {
                            let iz = (oz * dm.stride + kz - dm.pad) as usize;
                            for oy in ylo..yhi {
                                let iy = oy * dm.stride + ky - dm.pad;
                                let out_row = &mut out_c[(oz * dm.oh + oy) * dm.ow..][..dm.ow];
                                let x_row = &x_c[(iz * dm.h + iy) * dm.w..][..dm.w];
                                if dm.stride == 1 {
                                    let xs = (xlo as isize + dxo) as usize;
                                    let o_seg = &mut out_row[xlo..xhi];
                                    let x_seg = &x_row[xs..xs + (xhi - xlo)];
                                    for (o, &xv) in o_seg.iter_mut().zip(x_seg) {
                                        *o += wv * xv;
                                    }
                                } else {
                                    for ox in xlo..xhi {
                                        let ix = (ox as isize * dm.stride as isize + dxo) as usize;
                                        out_row[ox] += wv * x_row[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv3d_backward<T: Scalar>(
    x: &[T],
    kern: &[T],
    dy: &[T],
    dm: &ConvDims,
    mut dx: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let in_plane = dm.d * dm.h * dm.w;
    let out_plane = dm.od * dm.oh * dm.ow;
    let ks = dm.k;
    if let Some(db) = db {
        for co in 0..dm.cout {
            let dy_c = &dy[co * out_plane..(co + 1) * out_plane];
            let mut acc = T::zero();
            for &g in dy_c {
                acc += g;
            }
            db[co] += acc;
        }
    }
    for co in 0..dm.cout {
        let dy_c = &dy[co * out_plane..(co + 1) * out_plane];
        for ci in 0..dm.cin {
            let k_base = (co * dm.cin + ci) * ks * ks * ks;
            let x_c = &x[ci * in_plane..(ci + 1) * in_plane];
            for kz in 0..ks {
                let (zlo, zhi) = valid_range(dm.d, dm.od, dm.stride, dm.pad, kz);
                for ky in 0..ks {
                    let (ylo, yhi) = valid_range(dm.h, dm.oh, dm.stride, dm.pad, ky);
                    for kx in 0..ks {
                        let (xlo, xhi) = valid_range(dm.w, dm.ow, dm.stride, dm.pad, kx);
                        if xlo >= xhi {
                            continue;
                        }
                        let dxo = kx as isize - dm.pad as isize;
                        let wv = kern[k_base + (kz * ks + ky) * ks + kx];
                        let mut wgrad = T::zero();
                        for oz in zlo..zhi {
                            let iz = oz * dm.stride + kz - dm.pad;
                            for oy in ylo..yhi {
                                let iy = oy * dm.stride + ky - dm.pad;
                                let dy_row = &dy_c[(oz * dm.oh + oy) * dm.ow..][..dm.ow];
                                let row_off = (iz * dm.h + iy) * dm.w;
                                if dm.stride == 1 {
                                    let xs = (xlo as isize + dxo) as usize;
                                    let len = xhi - xlo;
                                    let dy_seg = &dy_row[xlo..xhi];
                                    if dk.is_some() {
                                        let x_seg = &x_c[row_off + xs..row_off + xs + len];
                                        wgrad += dot8(dy_seg, x_seg);
                                    }
                                    if let Some(dx) = dx.as_deref_mut() {
                                        if wv != T::zero() {
                                            let dx_seg = &mut dx[ci * in_plane + row_off + xs..][..len];
                                            for (d, &g) in dx_seg.iter_mut().zip(dy_seg) {
                                                *d += wv * g;
                                            }
                                        }
                                    }
                                } else {
                                    for ox in xlo..xhi {
                                        let ix = (ox as isize * dm.stride as isize + dxo) as usize;
                                        let g = dy_row[ox];
                                        if dk.is_some() {
                                            wgrad += g * x_c[row_off + ix];
                                        }
                                        if let Some(dx) = dx.as_deref_mut() {
                                            dx[ci * in_plane + row_off + ix] += wv * g;
                                        }
                                    }
                                }
                            }
                        }
                        if let Some(dk) = dk.as_deref_mut() {
                            dk[k_base + (kz * ks + ky) * ks + kx] += wgrad;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 3-D max pooling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolDims {
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub window: usize,
    pub stride: usize,
    pub od: usize,
    pub oh: usize,
    pub ow: usize,
}

impl PoolDims {
    pub fn new(c: usize, input: (usize, usize, usize), window: usize, stride: usize) -> Result<Self> {
        let (d, h, w) = input;
        if window == 0 || stride == 0 {
            return Err(Error::ShapeMismatch {
                op: "maxpool3d",
                detail: format!("window {window} and stride {stride} must be positive"),
            });
        }
        let out_extent = |n: usize| -> Result<usize> {
            if n < window {
                return Err(Error::ShapeMismatch {
                    op: "maxpool3d",
                    detail: format!("input extent {n} smaller than window {window}"),
                });
            }
            Ok((n - window) / stride + 1)
        };
        Ok(PoolDims { c, d, h, w, window, stride, od: out_extent(d)?, oh: out_extent(h)?, ow: out_extent(w)? })
    }

    pub fn in_len(&self) -> usize {
        self.c * self.d * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.c * self.od * self.oh * self.ow
    }
}

/// Returns the pooled values and, per output element, the flat input index
/// of the maximum (first occurrence wins on ties).
pub(crate) fn maxpool3d_forward<T: Scalar>(x: &[T], dm: &PoolDims) -> (Vec<T>, Vec<u32>) {
    debug_assert_eq!(x.len(), dm.in_len());
    debug_assert!(dm.in_len() <= u32::MAX as usize);
    let plane = dm.d * dm.h * dm.w;
    let mut out = Vec::with_capacity(dm.out_len());
    let mut arg = Vec::with_capacity(dm.out_len());
    for c in 0..dm.c {
        let base = c * plane;
        for oz in 0..dm.od {
            for oy in 0..dm.oh {
                for ox in 0..dm.ow {
                    let (iz0, iy0, ix0) = (oz * dm.stride, oy * dm.stride, ox * dm.stride);
                    let mut best = T::neg_infinity();
                    let mut best_at = 0u32;
                    for wz in 0..dm.window {
                        for wy in 0..dm.window {
                            let row = base + ((iz0 + wz) * dm.h + iy0 + wy) * dm.w + ix0;
                            for wx in 0..dm.window {
                                let v = x[row + wx];
                                if v > best {
                                    best = v;
                                    best_at = (row + wx) as u32;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_at);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool3d_backward<T: Scalar>(dy: &[T], argmax: &[u32], dx: &mut [T]) {
    for (&g, &at) in dy.iter().zip(argmax) {
        dx[at as usize] += g;
    }
}

// ---------------------------------------------------------------------------
// pointwise and reduction ops
// ---------------------------------------------------------------------------

pub(crate) fn relu_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Numerically stable softmax over a flat vector.
pub(crate) fn softmax_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut m = T::neg_infinity();
    for &v in x {
        if v > m {
            m = v;
        }
    }
    let mut y: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let mut s = T::zero();
    for &v in &y {
        s += v;
    }
    for v in &mut y {
        *v /= s;
    }
    y
}

/// dx_i += y_i * (g_i - sum_j g_j y_j)
pub(crate) fn softmax_backward<T: Scalar>(y: &[T], g: &[T], dx: &mut [T]) {
    let mut dot = T::zero();
    for (&gv, &yv) in g.iter().zip(y) {
        dot += gv * yv;
    }
    for ((d, &yv), &gv) in dx.iter_mut().zip(y).zip(g) {
        *d += yv * (gv - dot);
    }
}

/// Weighted cross entropy fused with softmax. Returns (loss, probabilities).
pub(crate) fn softmax_xent_forward<T: Scalar>(logits: &[T], target: usize, weight: T) -> (T, Vec<T>) {
    let mut m = T::neg_infinity();
    for &v in logits {
        if v > m {
            m = v;
        }
    }
    let mut s = T::zero();
    for &v in logits {
        s += (v - m).exp();
    }
    let lse = m + s.ln();
    let p: Vec<T> = logits.iter().map(|&v| (v - lse).exp()).collect();
    (weight * (lse - logits[target]), p)
}

pub(crate) fn softmax_xent_backward<T: Scalar>(p: &[T], target: usize, weight: T, g: T, dx: &mut [T]) {
    let scale = g * weight;
    for (i, (d, &pv)) in dx.iter_mut().zip(p).enumerate() {
        let ind = if i == target { T::one() } else { T::zero() };
        *d += scale * (pv - ind);
    }
}

// ---------------------------------------------------------------------------
// graph convolutions
// ---------------------------------------------------------------------------

/// y = x w1 + (adj x) w2 + b, with b broadcast over rows.
/// Returns (y, adj * x); the propagated product is reused by the backward pass.
pub(crate) fn graph_conv_forward<T: Scalar>(
    x: &[T],
    adj: &[T],
    w1: &[T],
    w2: &[T],
    b: &[T],
    n: usize,
    f_in: usize,
    f_out: usize,
) -> (Vec<T>, Vec<T>) {
    let mut ax = vec![T::zero(); n * f_in];
    matmul_acc(adj, x, n, n, f_in, &mut ax);
    let mut y = vec![T::zero(); n * f_out];
    for row in y.chunks_exact_mut(f_out) {
        row.copy_from_slice(b);
    }
    matmul_acc(x, w1, n, f_in, f_out, &mut y);
    matmul_acc(&ax, w2, n, f_in, f_out, &mut y);
    (y, ax)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn graph_conv_backward<T: Scalar>(
    x: &[T],
    adj: &[T],
    w1: &[T],
    w2: &[T],
    ax: &[T],
    dy: &[T],
    n: usize,
    f_in: usize,
    f_out: usize,
    dx: Option<&mut [T]>,
    dw1: Option<&mut [T]>,
    dw2: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    if let Some(dw1) = dw1 {
        matmul_tn_acc(x, dy, f_in, n, f_out, dw1);
    }
    if let Some(dw2) = dw2 {
        matmul_tn_acc(ax, dy, f_in, n, f_out, dw2);
    }
    if let Some(db) = db {
        for row in dy.chunks_exact(f_out) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    if let Some(dx) = dx {
        matmul_nt_acc(dy, w1, n, f_out, f_in, dx);
        let mut t = vec![T::zero(); n * f_in];
        matmul_nt_acc(dy, w2, n, f_out, f_in, &mut t);
        // adjacency is symmetric, so adj^T * t == adj * t
        matmul_acc(adj, &t, n, n, f_in, dx);
    }
}

/// Chebyshev basis products S_k = T_k(lhat) * x for k = 0..order-1,
/// via T_0 = I, T_1 = lhat, T_k = 2 lhat T_{k-1} - T_{k-2}.
pub(crate) fn cheb_basis<T: Scalar>(x: &[T], lhat: &[T], n: usize, f_in: usize, order: usize) -> Vec<Vec<T>> {
    let mut s: Vec<Vec<T>> = Vec::with_capacity(order);
    s.push(x.to_vec());
    if order > 1 {
        let mut s1 = vec![T::zero(); n * f_in];
        matmul_acc(lhat, x, n, n, f_in, &mut s1);
        s.push(s1);
    }
    for k in 2..order {
        let mut sk = vec![T::zero(); n * f_in];
        matmul_acc(lhat, &s[k - 1], n, n, f_in, &mut sk);
        for (v, &old) in sk.iter_mut().zip(&s[k - 2]) {
            *v = *v + *v - old;
        }
        s.push(sk);
    }
    s
}

/// y = sum_k S_k theta_k
pub(crate) fn cheb_forward<T: Scalar>(basis: &[Vec<T>], thetas: &[&[T]], n: usize, f_in: usize, f_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * f_out];
    for (s, th) in basis.iter().zip(thetas) {
        matmul_acc(s, th, n, f_in, f_out, &mut y);
    }
    y
}

/// Reverse-mode pass through the Chebyshev recurrence.
///
/// dtheta_k += S_k^T dy. For dx, run the recurrence backwards: with
/// a_k = dy theta_k^T, the totals t_k satisfy
/// t_k = a_k + c * lhat t_{k+1} - t_{k+2} where c = 2 except for the
/// k = 0 step (S_1 = lhat S_0 contributes with coefficient 1), and dx = t_0.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cheb_backward<T: Scalar>(
    basis: &[Vec<T>],
    thetas: &[&[T]],
    lhat: &[T],
    dy: &[T],
    n: usize,
    f_in: usize,
    f_out: usize,
    dx: Option<&mut [T]>,
    mut dthetas: Vec<Option<&mut [T]>>,
) {
    let order = basis.len();
    for (k, s) in basis.iter().enumerate() {
        if let Some(dt) = dthetas[k].as_deref_mut() {
            matmul_tn_acc(s, dy, f_in, n, f_out, dt);
        }
    }
    let Some(dx) = dx else { return };
    let mut t_next: Option<Vec<T>> = None; // t_{k+1}
    let mut t_next2: Option<Vec<T>> = None; // t_{k+2}
    for k in (0..order).rev() {
        let mut t = vec![T::zero(); n * f_in];
        matmul_nt_acc(dy, thetas[k], n, f_out, f_in, &mut t);
        if let Some(up) = &t_next {
            let c = if k == 0 { T::one() } else { T::c(2.0) };
            let mut prop = vec![T::zero(); n * f_in];
            matmul_acc(lhat, up, n, n, f_in, &mut prop);
            for (tv, &pv) in t.iter_mut().zip(&prop) {
                *tv += c * pv;
            }
        }
        if let Some(up2) = &t_next2 {
            for (tv, &uv) in t.iter_mut().zip(up2) {
                *tv -= uv;
            }
        }
        t_next2 = t_next.take();
        t_next = Some(t);
    }
    for (d, &tv) in dx.iter_mut().zip(t_next.as_ref().unwrap()) {
        *d += tv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_covers_interior_and_edges() {
        // n=5, kernel offset 0..3, pad 1, stride 1: output size 5
        assert_eq!(valid_range(5, 5, 1, 1, 0), (1, 5)); // i = o - 1
        assert_eq!(valid_range(5, 5, 1, 1, 1), (0, 5)); // i = o
        assert_eq!(valid_range(5, 5, 1, 1, 2), (0, 4)); // i = o + 1
        // stride 2, n=7, pad 0, k offset 0: o in 0..3 -> i = 2o
        assert_eq!(valid_range(7, 3, 2, 0, 0), (0, 3));
        // stride 2, pad 2, kq 0: i = 2o - 2 valid for o in 1..4
        assert_eq!(valid_range(7, 4, 2, 2, 0), (1, 4));
    }

    #[test]
    fn matmul_variants_agree_with_direct_computation() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut out = vec![0.0; 4];
        matmul_acc(&a, &b, 2, 3, 2, &mut out);
        assert_eq!(out, vec![58.0, 64.0, 139.0, 154.0]);

        // a^T where a stored as 3x2: (a^T)(2x3) * b2 (3x2)
        let a_t_src = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2, columns of a
        let mut out2 = vec![0.0; 4];
        matmul_tn_acc(&a_t_src, &b, 2, 3, 2, &mut out2);
        assert_eq!(out2, out);

        // a (2x3) * b^T where b stored as 2x3
        let b_t_src = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0]; // 2x3, rows = cols of b
        let mut out3 = vec![0.0; 4];
        matmul_nt_acc(&a, &b_t_src, 2, 3, 2, &mut out3);
        assert_eq!(out3, out);
    }

    #[test]
    fn maxpool_records_first_max_on_ties() {
        // (2, 2, 4) volume, two 2x2x2 windows along the last axis; each
        // window's max value appears twice and the earlier index must win.
        let dm = PoolDims::new(1, (2, 2, 4), 2, 2).unwrap();
        let x = [
            3.0f32, 0.0, 1.0, 2.0, //
            2.0, 3.0, 0.0, 1.0, //
            1.0, 0.0, 4.0, 0.0, //
            0.0, 1.0, 5.0, 5.0,
        ];
        let (y, arg) = maxpool3d_forward(&x, &dm);
        assert_eq!(y, vec![3.0, 5.0]);
        assert_eq!(arg, vec![0, 14]);
    }

    #[test]
    fn softmax_sums_to_one_under_large_offsets() {
        let x = [1000.0f64, 1001.0, 999.0];
        let y = softmax_forward(&x);
        let s: f64 = y.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(y.iter().all(|&v| v.is_finite()));
    }
}
