//! Gated recurrent units, one direction at a time, with full BPTT.
//!
//! Gate math per step (gates stacked [reset; update; candidate]):
//!   r_t = sig(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
//!   z_t = sig(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
//!   n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
//!   h_t = (1 - z_t) * n_t + z_t * h_{t-1}

use super::ops::dot_lanes;
use super::params::{BiGruParams, GruDirParams};
use super::real::{sigmoid, Real};
use ndarray::{s, Array2, Axis};

pub struct GruDirCache<F> {
    /// Gate activations per step: r, z, n, and the pre-gated recurrent
    /// candidate term W_hn h + b_hn.
    r: Array2<F>,
    z: Array2<F>,
    n: Array2<F>,
    hn_pre: Array2<F>,
    /// Hidden states in *iteration* order, h[t] being the state after step t.
    h: Array2<F>,
    reverse: bool,
}

pub struct BiGruCache<F> {
    pub fwd: GruDirCache<F>,
    pub bwd: GruDirCache<F>,
}

/// Run one direction over `x` [T, in]; returns hidden states in sequence
/// order [T, units].
pub fn gru_dir_forward<F: Real>(
    x: &Array2<F>,
    p: &GruDirParams<F>,
    reverse: bool,
) -> (Array2<F>, GruDirCache<F>) {
    let t_len = x.nrows();
    let units = p.w_hh.ncols();
    // Input contributions for all steps in one multiply.
    let xg = x.dot(&p.w_ih.t()) + &p.b_ih;
    let xg_s = xg.as_slice().unwrap();
    let whh = p.w_hh.as_slice().unwrap();
    let mut r = Array2::from_elem((t_len, units), F::zero());
    let mut z = Array2::from_elem((t_len, units), F::zero());
    let mut n = Array2::from_elem((t_len, units), F::zero());
    let mut hn_pre = Array2::from_elem((t_len, units), F::zero());
    let mut h = Array2::from_elem((t_len, units), F::zero());
    let mut h_prev = vec![F::zero(); units];
    let mut hg = vec![F::zero(); 3 * units];
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        for (j, hgj) in hg.iter_mut().enumerate() {
            *hgj = dot_lanes(&whh[j * units..(j + 1) * units], &h_prev) + p.b_hh[j];
        }
        let xg_t = &xg_s[t * 3 * units..(t + 1) * 3 * units];
        let rr = r.row_mut(step).into_slice().unwrap();
        let zr = z.row_mut(step).into_slice().unwrap();
        let nr = n.row_mut(step).into_slice().unwrap();
        let hnr = hn_pre.row_mut(step).into_slice().unwrap();
        let hr = h.row_mut(step).into_slice().unwrap();
        for ui in 0..units {
            let rv = sigmoid(xg_t[ui] + hg[ui]);
            let zv = sigmoid(xg_t[units + ui] + hg[units + ui]);
            let hn = hg[2 * units + ui];
            let nv = (xg_t[2 * units + ui] + rv * hn).tanh();
            let hv = (F::one() - zv) * nv + zv * h_prev[ui];
            rr[ui] = rv;
            zr[ui] = zv;
            nr[ui] = nv;
            hnr[ui] = hn;
            hr[ui] = hv;
        }
        h_prev.copy_from_slice(hr);
    }
    // Emit in sequence order.
    let mut out = Array2::from_elem((t_len, units), F::zero());
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        out.row_mut(t).assign(&h.row(step));
    }
    (
        out,
        GruDirCache {
            r,
            z,
            n,
            hn_pre,
            h,
            reverse,
        },
    )
}

/// BPTT for one direction. `d_out` is in sequence order; returns d_x and
/// accumulates parameter gradients.
pub fn gru_dir_backward<F: Real>(
    x: &Array2<F>,
    p: &GruDirParams<F>,
    cache: &GruDirCache<F>,
    d_out: &Array2<F>,
    d_p: &mut GruDirParams<F>,
) -> Array2<F> {
    let t_len = x.nrows();
    let units = p.w_hh.ncols();
    let mut d_xg = Array2::from_elem((t_len, 3 * units), F::zero());
    let mut d_h_carry = vec![F::zero(); units];
    let zero_h = vec![F::zero(); units];
    // Row-contiguous transpose for the carry products.
    let w_hh_t = p.w_hh.t().as_standard_layout().to_owned();
    let whh_t = w_hh_t.as_slice().unwrap();
    let dwhh = d_p.w_hh.as_slice_mut().unwrap();
    let mut gate3 = vec![F::zero(); 3 * units];

    for step in (0..t_len).rev() {
        let t = if cache.reverse { t_len - 1 - step } else { step };
        let h_prev: &[F] = if step == 0 {
            &zero_h
        } else {
            cache.h.row(step - 1).to_slice().unwrap()
        };
        let rr = cache.r.row(step).to_slice().unwrap();
        let zr = cache.z.row(step).to_slice().unwrap();
        let nr = cache.n.row(step).to_slice().unwrap();
        let hnr = cache.hn_pre.row(step).to_slice().unwrap();
        let dxg = d_xg.row_mut(step).into_slice().unwrap();
        for ui in 0..units {
            let dh = d_out[[t, ui]] + d_h_carry[ui];
            let (rv, zv, nv) = (rr[ui], zr[ui], nr[ui]);
            let hn = hnr[ui];
            let dz = dh * (h_prev[ui] - nv);
            let dn = dh * (F::one() - zv);
            let dn_pre = dn * (F::one() - nv * nv);
            let dr = dn_pre * hn;
            let d_hn_pre = dn_pre * rv;
            let dr_pre = dr * rv * (F::one() - rv);
            let dz_pre = dz * zv * (F::one() - zv);
            gate3[ui] = dr_pre;
            gate3[units + ui] = dz_pre;
            gate3[2 * units + ui] = d_hn_pre;
            dxg[ui] = dr_pre;
            dxg[units + ui] = dz_pre;
            dxg[2 * units + ui] = dn_pre;
            // Direct path h_t -> h_{t-1} through the update gate.
            d_h_carry[ui] = dh * zv;
        }
        // Parameter gradients for the recurrent matrix and bias.
        for (j, &gv) in gate3.iter().enumerate() {
            let row = &mut dwhh[j * units..(j + 1) * units];
            for (d, hp) in row.iter_mut().zip(h_prev) {
                *d = hp.mul_add(gv, *d);
            }
            d_p.b_hh[j] += gv;
        }
        // Recurrent path into h_{t-1} through the gate pre-activations.
        for ui in 0..units {
            d_h_carry[ui] += dot_lanes(&whh_t[ui * 3 * units..(ui + 1) * 3 * units], &gate3);
        }
    }

    // Reorder d_xg into sequence order to match x's rows.
    let mut d_xg_seq = Array2::from_elem((t_len, 3 * units), F::zero());
    for step in 0..t_len {
        let t = if cache.reverse { t_len - 1 - step } else { step };
        d_xg_seq.row_mut(t).assign(&d_xg.row(step));
    }
    let dw_ih = d_xg_seq.t().dot(x);
    d_p.w_ih += &dw_ih;
    d_p.b_ih += &d_xg_seq.sum_axis(Axis(0));
    d_xg_seq.dot(&p.w_ih)
}

/// Bidirectional layer: forward and reverse passes concatenated per step.
pub fn bigru_forward<F: Real>(
    x: &Array2<F>,
    p: &BiGruParams<F>,
) -> (Array2<F>, BiGruCache<F>) {
    let (hf, cf) = gru_dir_forward(x, &p.fwd, false);
    let (hb, cb) = gru_dir_forward(x, &p.bwd, true);
    let t_len = x.nrows();
    let units = hf.ncols();
    let mut out = Array2::from_elem((t_len, 2 * units), F::zero());
    out.slice_mut(s![.., ..units]).assign(&hf);
    out.slice_mut(s![.., units..]).assign(&hb);
    (out, BiGruCache { fwd: cf, bwd: cb })
}

pub fn bigru_backward<F: Real>(
    x: &Array2<F>,
    p: &BiGruParams<F>,
    cache: &BiGruCache<F>,
    d_out: &Array2<F>,
    d_p: &mut BiGruParams<F>,
) -> Array2<F> {
    let units = p.fwd.w_hh.ncols();
    let d_f = d_out.slice(s![.., ..units]).to_owned();
    let d_b = d_out.slice(s![.., units..]).to_owned();
    let mut dx = gru_dir_backward(x, &p.fwd, &cache.fwd, &d_f, &mut d_p.fwd);
    let dx_b = gru_dir_backward(x, &p.bwd, &cache.bwd, &d_b, &mut d_p.bwd);
    dx += &dx_b;
    dx
}
