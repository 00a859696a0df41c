//! Convolution, pooling, normalization and squeeze-excitation primitives with
//! hand-written backward passes. Feature maps are [channels, freq, time] with
//! time contiguous, so inner loops run over time rows.

use super::params::{Conv2dParams, NormParams, SeParams};
use super::real::{sigmoid, Real};
use ndarray::{Array1, Array2, Array3};

pub const NORM_EPS: f64 = 1e-5;

/// Dot product with 16 independent accumulator lanes so the FMA chain
/// vectorizes instead of serializing on latency. Fixed summation order keeps
/// results deterministic.
#[inline]
pub(crate) fn dot_lanes<F: Real>(a: &[F], b: &[F]) -> F {
    const LANES: usize = 16;
    let mut acc = [F::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let ai = &a[i * LANES..(i + 1) * LANES];
        let bi = &b[i * LANES..(i + 1) * LANES];
        for j in 0..LANES {
            acc[j] = ai[j].mul_add(bi[j], acc[j]);
        }
    }
    let mut s = F::zero();
    for j in 0..LANES {
        s += acc[j];
    }
    for i in chunks * LANES..a.len() {
        s = a[i].mul_add(b[i], s);
    }
    s
}

/// Add the three horizontal taps of one input row into an output row:
/// out[x] += a*in[x-1] + b*in[x] + c*in[x+1], ends zero-padded.
#[inline]
fn conv3_row<F: Real>(out: &mut [F], inp: &[F], a: F, b: F, c: F) {
    let n = out.len();
    if n == 0 {
        return;
    }
    if n == 1 {
        out[0] = inp[0].mul_add(b, out[0]);
        return;
    }
    out[0] = inp[1].mul_add(c, inp[0].mul_add(b, out[0]));
    for x in 1..n - 1 {
        let v = inp[x - 1].mul_add(a, inp[x].mul_add(b, inp[x + 1] * c));
        out[x] += v;
    }
    out[n - 1] = inp[n - 1].mul_add(b, inp[n - 2].mul_add(a, out[n - 1]));
}

/// Same-padded 2D convolution (stride 1, odd kernel).
pub fn conv2d_same<F: Real>(input: &Array3<F>, p: &Conv2dParams<F>) -> Array3<F> {
    let (in_c, h, w) = input.dim();
    let (out_c, wc, k, _) = p.weight.dim();
    debug_assert_eq!(in_c, wc);
    let pad = k / 2;
    let x = input.as_slice().unwrap();
    let wt = p.weight.as_slice().unwrap();
    let mut out = Array3::from_elem((out_c, h, w), F::zero());
    {
        let o = out.as_slice_mut().unwrap();
        let plane = h * w;
        for co in 0..out_c {
            let ob = co * plane;
            o[ob..ob + plane].fill(p.bias[co]);
            for ci in 0..in_c {
                let xb = ci * plane;
                let wb = (co * in_c + ci) * k * k;
                if k == 3 {
                    for y in 0..h {
                        let orow = ob + y * w;
                        for ky in 0..3usize {
                            let iy = y as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = xb + iy as usize * w;
                            conv3_row(
                                &mut o[orow..orow + w],
                                &x[irow..irow + w],
                                wt[wb + ky * 3],
                                wt[wb + ky * 3 + 1],
                                wt[wb + ky * 3 + 2],
                            );
                        }
                    }
                    continue;
                }
                for y in 0..h {
                    let orow = ob + y * w;
                    for ky in 0..k {
                        let iy = y as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = xb + iy as usize * w;
                        for kx in 0..k {
                            let wv = wt[wb + ky * k + kx];
                            let dx = kx as isize - pad as isize;
                            let x_lo = (-dx).max(0) as usize;
                            let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                            if x_lo >= x_hi {
                                continue;
                            }
                            let src_lo = (x_lo as isize + dx) as usize;
                            let dst = &mut o[orow + x_lo..orow + x_hi];
                            let src = &x[irow + src_lo..irow + src_lo + (x_hi - x_lo)];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s.mul_add(wv, *d);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv2d_same`]. Accumulates into the gradient buffers;
/// `d_input` is skipped when `None` (first layer).
pub fn conv2d_same_backward<F: Real>(
    input: &Array3<F>,
    p: &Conv2dParams<F>,
    d_out: &Array3<F>,
    mut d_input: Option<&mut Array3<F>>,
    d_p: &mut Conv2dParams<F>,
) {
    let (in_c, h, w) = input.dim();
    let (out_c, _, k, _) = p.weight.dim();
    let pad = k / 2;
    let plane = h * w;
    let x = input.as_slice().unwrap();
    let g = d_out.as_slice().unwrap();
    let wt = p.weight.as_slice().unwrap();
    let dw = d_p.weight.as_slice_mut().unwrap();

    for co in 0..out_c {
        let ob = co * plane;
        let mut bsum = F::zero();
        for v in &g[ob..ob + plane] {
            bsum += *v;
        }
        d_p.bias[co] += bsum;
    }

    for co in 0..out_c {
        let ob = co * plane;
        for ci in 0..in_c {
            let xb = ci * plane;
            let wb = (co * in_c + ci) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let dy = ky as isize - pad as isize;
                    let dx = kx as isize - pad as isize;
                    let mut acc = F::zero();
                    for y in 0..h {
                        let iy = y as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                        if x_lo >= x_hi {
                            continue;
                        }
                        let orow = ob + y * w;
                        let irow = xb + iy as usize * w;
                        let src_lo = (x_lo as isize + dx) as usize;
                        let go = &g[orow + x_lo..orow + x_hi];
                        let xi = &x[irow + src_lo..irow + src_lo + (x_hi - x_lo)];
                        acc += dot_lanes(go, xi);
                    }
                    dw[wb + ky * k + kx] += acc;
                }
            }
        }
    }

    if let Some(d_in) = d_input.as_deref_mut() {
        let di = d_in.as_slice_mut().unwrap();
        for co in 0..out_c {
            let ob = co * plane;
            for ci in 0..in_c {
                let ib = ci * plane;
                let wb = (co * in_c + ci) * k * k;
                if k == 3 {
                    // d_in[iy] accumulates the flipped-kernel correlation of
                    // the output gradient row.
                    for y in 0..h {
                        let orow = ob + y * w;
                        for ky in 0..3usize {
                            let iy = y as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = ib + iy as usize * w;
                            conv3_row(
                                &mut di[irow..irow + w],
                                &g[orow..orow + w],
                                wt[wb + ky * 3 + 2],
                                wt[wb + ky * 3 + 1],
                                wt[wb + ky * 3],
                            );
                        }
                    }
                    continue;
                }
                for y in 0..h {
                    let orow = ob + y * w;
                    for ky in 0..k {
                        let iy = y as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ib + iy as usize * w;
                        for kx in 0..k {
                            let wv = wt[wb + ky * k + kx];
                            let dx = kx as isize - pad as isize;
                            let x_lo = (-dx).max(0) as usize;
                            let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                            if x_lo >= x_hi {
                                continue;
                            }
                            let src_lo = (x_lo as isize + dx) as usize;
                            let go = &g[orow + x_lo..orow + x_hi];
                            let dst = &mut di[irow + src_lo..irow + src_lo + (x_hi - x_lo)];
                            for (d, s) in dst.iter_mut().zip(go) {
                                *d = s.mul_add(wv, *d);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Average pooling by (pool_f, pool_t) over the (freq, time) axes.
pub fn avg_pool<F: Real>(input: &Array3<F>, pool_f: usize, pool_t: usize) -> Array3<F> {
    let (c, h, w) = input.dim();
    debug_assert!(h % pool_f == 0 && w % pool_t == 0);
    let (oh, ow) = (h / pool_f, w / pool_t);
    let inv = F::of(1.0 / (pool_f * pool_t) as f64);
    let mut out = Array3::from_elem((c, oh, ow), F::zero());
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut s = F::zero();
                for dy in 0..pool_f {
                    for dx in 0..pool_t {
                        s += input[[ci, y * pool_f + dy, x * pool_t + dx]];
                    }
                }
                out[[ci, y, x]] = s * inv;
            }
        }
    }
    out
}

pub fn avg_pool_backward<F: Real>(
    d_out: &Array3<F>,
    pool_f: usize,
    pool_t: usize,
) -> Array3<F> {
    let (c, oh, ow) = d_out.dim();
    let inv = F::of(1.0 / (pool_f * pool_t) as f64);
    let mut d_in = Array3::from_elem((c, oh * pool_f, ow * pool_t), F::zero());
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let v = d_out[[ci, y, x]] * inv;
                for dy in 0..pool_f {
                    for dx in 0..pool_t {
                        d_in[[ci, y * pool_f + dy, x * pool_t + dx]] = v;
                    }
                }
            }
        }
    }
    d_in
}

pub struct NormCache<F> {
    pub xhat: Array3<F>,
    pub inv_std: Array1<F>,
}

/// Per-channel normalization over the clip's own freq x time plane, with
/// learnable gain and shift. Statistics never cross clips, so forward stays a
/// pure function of (params, input) and batch composition cannot leak into
/// per-clip outputs.
pub fn channel_norm<F: Real>(input: &Array3<F>, p: &NormParams<F>) -> (Array3<F>, NormCache<F>) {
    let (c, h, w) = input.dim();
    let n = F::of((h * w) as f64);
    let mut xhat = Array3::from_elem((c, h, w), F::zero());
    let mut inv_std = Array1::from_elem(c, F::zero());
    let mut out = Array3::from_elem((c, h, w), F::zero());
    for ci in 0..c {
        let plane = input.index_axis(ndarray::Axis(0), ci);
        let mut mean = F::zero();
        for v in plane.iter() {
            mean += *v;
        }
        mean = mean / n;
        let mut var = F::zero();
        for v in plane.iter() {
            let d = *v - mean;
            var += d * d;
        }
        var = var / n;
        let istd = F::one() / (var + F::of(NORM_EPS)).sqrt();
        inv_std[ci] = istd;
        let (g, b) = (p.gamma[ci], p.beta[ci]);
        let mut xh = xhat.index_axis_mut(ndarray::Axis(0), ci);
        let mut o = out.index_axis_mut(ndarray::Axis(0), ci);
        for ((xv, xh), ov) in plane.iter().zip(xh.iter_mut()).zip(o.iter_mut()) {
            let h = (*xv - mean) * istd;
            *xh = h;
            *ov = g * h + b;
        }
    }
    (out, NormCache { xhat, inv_std })
}

pub fn channel_norm_backward<F: Real>(
    d_out: &Array3<F>,
    cache: &NormCache<F>,
    p: &NormParams<F>,
    d_p: &mut NormParams<F>,
) -> Array3<F> {
    let (c, h, w) = d_out.dim();
    let n = F::of((h * w) as f64);
    let mut d_in = Array3::from_elem((c, h, w), F::zero());
    for ci in 0..c {
        let dy = d_out.index_axis(ndarray::Axis(0), ci);
        let xh = cache.xhat.index_axis(ndarray::Axis(0), ci);
        let mut sum_dy = F::zero();
        let mut sum_dy_xh = F::zero();
        for (a, b) in dy.iter().zip(xh.iter()) {
            sum_dy += *a;
            sum_dy_xh += *a * *b;
        }
        d_p.gamma[ci] += sum_dy_xh;
        d_p.beta[ci] += sum_dy;
        let scale = p.gamma[ci] * cache.inv_std[ci];
        let mut di = d_in.index_axis_mut(ndarray::Axis(0), ci);
        for ((d, a), b) in di.iter_mut().zip(dy.iter()).zip(xh.iter()) {
            // d_in = gamma*istd * (dy - mean(dy) - xhat*mean(dy*xhat))
            *d = scale * (*a - sum_dy / n - *b * sum_dy_xh / n);
        }
    }
    d_in
}

pub struct SeCache<F> {
    pub z: Array1<F>,
    pub u: Array1<F>,
    pub s: Array1<F>,
}

/// Squeeze-excitation: global average per channel, two-layer bottleneck with
/// ReLU then sigmoid, channels rescaled by the resulting gates.
pub fn se_block<F: Real>(input: &Array3<F>, p: &SeParams<F>) -> (Array3<F>, SeCache<F>) {
    let (c, h, w) = input.dim();
    let n = F::of((h * w) as f64);
    let mut z = Array1::from_elem(c, F::zero());
    for ci in 0..c {
        let mut s = F::zero();
        for v in input.index_axis(ndarray::Axis(0), ci).iter() {
            s += *v;
        }
        z[ci] = s / n;
    }
    let mut u = p.fc1.weight.dot(&z) + &p.fc1.bias;
    u.mapv_inplace(|v| v.max(F::zero()));
    let pre = p.fc2.weight.dot(&u) + &p.fc2.bias;
    let s = pre.mapv(sigmoid);
    let mut out = input.clone();
    for ci in 0..c {
        let g = s[ci];
        for v in out.index_axis_mut(ndarray::Axis(0), ci).iter_mut() {
            *v = *v * g;
        }
    }
    (out, SeCache { z, u, s })
}

pub fn se_block_backward<F: Real>(
    input: &Array3<F>,
    d_out: &Array3<F>,
    cache: &SeCache<F>,
    p: &SeParams<F>,
    d_p: &mut SeParams<F>,
) -> Array3<F> {
    let (c, h, w) = input.dim();
    let n = F::of((h * w) as f64);
    let mut d_s = Array1::from_elem(c, F::zero());
    let mut d_in = Array3::from_elem((c, h, w), F::zero());
    for ci in 0..c {
        let g = cache.s[ci];
        let dy = d_out.index_axis(ndarray::Axis(0), ci);
        let xi = input.index_axis(ndarray::Axis(0), ci);
        let mut acc = F::zero();
        let mut di = d_in.index_axis_mut(ndarray::Axis(0), ci);
        for ((d, a), b) in di.iter_mut().zip(dy.iter()).zip(xi.iter()) {
            acc += *a * *b;
            *d = *a * g;
        }
        d_s[ci] = acc;
    }
    // Through the sigmoid gate.
    let d_pre = ndarray::Zip::from(&d_s)
        .and(&cache.s)
        .map_collect(|&ds, &s| ds * s * (F::one() - s));
    // fc2
    for (mut row, &dp) in d_p.fc2.weight.outer_iter_mut().zip(d_pre.iter()) {
        row.scaled_add(dp, &cache.u);
    }
    d_p.fc2.bias += &d_pre;
    let mut d_u = p.fc2.weight.t().dot(&d_pre);
    // ReLU mask.
    for (du, &u) in d_u.iter_mut().zip(cache.u.iter()) {
        if u <= F::zero() {
            *du = F::zero();
        }
    }
    // fc1
    for (mut row, &du) in d_p.fc1.weight.outer_iter_mut().zip(d_u.iter()) {
        row.scaled_add(du, &cache.z);
    }
    d_p.fc1.bias += &d_u;
    let d_z = p.fc1.weight.t().dot(&d_u);
    // Distribute the squeeze mean.
    for ci in 0..c {
        let v = d_z[ci] / n;
        for d in d_in.index_axis_mut(ndarray::Axis(0), ci).iter_mut() {
            *d = *d + v;
        }
    }
    d_in
}

/// Gated linear unit from a paired convolution output: a * sigmoid(b).
pub fn glu<F: Real>(a: &Array3<F>, b: &Array3<F>) -> (Array3<F>, Array3<F>) {
    let sb = b.mapv(sigmoid);
    let g = ndarray::Zip::from(a).and(&sb).map_collect(|&av, &sv| av * sv);
    (g, sb)
}

pub fn glu_backward<F: Real>(
    a: &Array3<F>,
    sb: &Array3<F>,
    d_g: &Array3<F>,
) -> (Array3<F>, Array3<F>) {
    let d_a = ndarray::Zip::from(d_g).and(sb).map_collect(|&dg, &s| dg * s);
    let d_b = ndarray::Zip::from(d_g)
        .and(a)
        .and(sb)
        .map_collect(|&dg, &av, &s| dg * av * s * (F::one() - s));
    (d_a, d_b)
}

/// Per-class softmax over time: input [frames, classes], each column sums to 1.
pub fn softmax_over_time<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let (t, c) = logits.dim();
    let mut out = Array2::from_elem((t, c), F::zero());
    for ci in 0..c {
        let col = logits.column(ci);
        let mut m = F::neg_infinity();
        for v in col.iter() {
            if *v > m {
                m = *v;
            }
        }
        let mut denom = F::zero();
        for (o, v) in out.column_mut(ci).iter_mut().zip(col.iter()) {
            let e = (*v - m).exp();
            *o = e;
            denom += e;
        }
        let inv = F::one() / denom;
        for o in out.column_mut(ci).iter_mut() {
            *o = *o * inv;
        }
    }
    out
}

/// Backward of [`softmax_over_time`] given d(softmax) per entry.
pub fn softmax_over_time_backward<F: Real>(attn: &Array2<F>, d_attn: &Array2<F>) -> Array2<F> {
    let (t, c) = attn.dim();
    let mut d_logits = Array2::from_elem((t, c), F::zero());
    for ci in 0..c {
        let a = attn.column(ci);
        let da = d_attn.column(ci);
        let mut dot = F::zero();
        for (x, y) in a.iter().zip(da.iter()) {
            dot += *x * *y;
        }
        for ((d, x), y) in d_logits.column_mut(ci).iter_mut().zip(a.iter()).zip(da.iter()) {
            *d = *x * (*y - dot);
        }
    }
    d_logits
}
