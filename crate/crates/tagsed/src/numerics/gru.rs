//! Single-direction GRU over a [T, D] sequence with fused
//! backpropagation-through-time.
//!
//! Gate layout packs reset, update, candidate as three [H] blocks in the
//! weight rows, so `wi` is [3H, D] and `wh` is [3H, H]:
//!
//!   r_t = sigmoid(Wir x_t + bir + Whr h_{t-1} + bhr)
//!   z_t = sigmoid(Wiz x_t + biz + Whz h_{t-1} + bhz)
//!   n_t = tanh(Win x_t + bin + r_t * (Whn h_{t-1} + bhn))
//!   h_t = (1 - z_t) * n_t + z_t * h_{t-1}

use super::tensor::{gemm, matvec, matvec_t_acc, Real, Tensor};
use crate::error::{Error, Result};

fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations retained for the backward pass.
pub struct GruCache {
    r: Vec<Real>,
    z: Vec<Real>,
    n: Vec<Real>,
    /// Hidden-side candidate pre-gate: Whn h_{t-1} + bhn.
    sh: Vec<Real>,
    /// Hidden states including the initial zero state: [(T+1), H].
    h: Vec<Real>,
}

fn check_shapes(x: &Tensor, wi: &Tensor, wh: &Tensor, bi: &Tensor, bh: &Tensor) -> Result<(usize, usize, usize)> {
    if x.shape().len() != 2 || x.shape()[0] == 0 {
        return Err(Error::shape(
            "gru",
            format!("input must be [T,D] with T >= 1, got {:?}", x.shape()),
        ));
    }
    let (t, d) = (x.shape()[0], x.shape()[1]);
    if wi.shape().len() != 2 || wi.shape()[0] % 3 != 0 || wi.shape()[1] != d {
        return Err(Error::shape(
            "gru",
            format!("input weights must be [3H,{d}], got {:?}", wi.shape()),
        ));
    }
    let h = wi.shape()[0] / 3;
    if wh.shape() != [3 * h, h] {
        return Err(Error::shape(
            "gru",
            format!("hidden weights must be [{},{h}], got {:?}", 3 * h, wh.shape()),
        ));
    }
    if bi.shape() != [3 * h] || bh.shape() != [3 * h] {
        return Err(Error::shape(
            "gru",
            format!("biases must be [{}], got {:?} / {:?}", 3 * h, bi.shape(), bh.shape()),
        ));
    }
    Ok((t, d, h))
}

pub fn gru_forward(
    x: &Tensor,
    wi: &Tensor,
    wh: &Tensor,
    bi: &Tensor,
    bh: &Tensor,
) -> Result<(Tensor, GruCache)> {
    let (t_len, d, h) = check_shapes(x, wi, wh, bi, bh)?;

    // Input projections for all steps at once: x [T,D] * wi^T -> [T,3H].
    let mut proj = vec![0.0; t_len * 3 * h];
    {
        let wi_t = wi.transposed();
        gemm(t_len, d, 3 * h, 1.0, x.data(), wi_t.data(), 0.0, &mut proj);
    }

    let mut cache = GruCache {
        r: vec![0.0; t_len * h],
        z: vec![0.0; t_len * h],
        n: vec![0.0; t_len * h],
        sh: vec![0.0; t_len * h],
        h: vec![0.0; (t_len + 1) * h],
    };
    let mut out = vec![0.0; t_len * h];
    let mut s = vec![0.0; 3 * h];
    for t in 0..t_len {
        let (h_prev_slice, h_rest) = cache.h.split_at_mut((t + 1) * h);
        let h_prev = &h_prev_slice[t * h..];
        matvec(wh.data(), 3 * h, h, h_prev, &mut s);
        for v in 0..3 * h {
            s[v] += bh.data()[v];
        }
        let p = &proj[t * 3 * h..(t + 1) * 3 * h];
        let h_next = &mut h_rest[..h];
        for u in 0..h {
            let r = sigmoid(p[u] + bi.data()[u] + s[u]);
            let z = sigmoid(p[h + u] + bi.data()[h + u] + s[h + u]);
            let sh = s[2 * h + u];
            let n = (p[2 * h + u] + bi.data()[2 * h + u] + r * sh).tanh();
            let hv = (1.0 - z) * n + z * h_prev[u];
            cache.r[t * h + u] = r;
            cache.z[t * h + u] = z;
            cache.n[t * h + u] = n;
            cache.sh[t * h + u] = sh;
            h_next[u] = hv;
            out[t * h + u] = hv;
        }
    }
    Ok((Tensor::new(vec![t_len, h], out)?, cache))
}

/// Gradients w.r.t. (x, wi, wh, bi, bh).
pub fn gru_backward(
    x: &Tensor,
    wi: &Tensor,
    wh: &Tensor,
    cache: &GruCache,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor, Tensor) {
    let (t_len, d) = (x.shape()[0], x.shape()[1]);
    let h = wi.shape()[0] / 3;
    debug_assert_eq!(grad_out.shape(), &[t_len, h]);

    // Per-step pre-activation grads: da feeds wi/bi, ds feeds wh/bh.
    let mut da = vec![0.0; t_len * 3 * h];
    let mut ds = vec![0.0; t_len * 3 * h];
    let mut carry = vec![0.0; h];
    for t in (0..t_len).rev() {
        let r = &cache.r[t * h..(t + 1) * h];
        let z = &cache.z[t * h..(t + 1) * h];
        let n = &cache.n[t * h..(t + 1) * h];
        let sh = &cache.sh[t * h..(t + 1) * h];
        let h_prev = &cache.h[t * h..(t + 1) * h];
        let go = &grad_out.data()[t * h..(t + 1) * h];
        let dat = &mut da[t * 3 * h..(t + 1) * 3 * h];
        let dst = &mut ds[t * 3 * h..(t + 1) * 3 * h];
        let mut carry_next = vec![0.0; h];
        for u in 0..h {
            let gh = go[u] + carry[u];
            let dn = gh * (1.0 - z[u]);
            let dz = gh * (h_prev[u] - n[u]);
            carry_next[u] = gh * z[u];
            let dan = dn * (1.0 - n[u] * n[u]);
            let dr = dan * sh[u];
            let dsn = dan * r[u];
            let dar = dr * r[u] * (1.0 - r[u]);
            let daz = dz * z[u] * (1.0 - z[u]);
            dat[u] = dar;
            dat[h + u] = daz;
            dat[2 * h + u] = dan;
            dst[u] = dar;
            dst[h + u] = daz;
            dst[2 * h + u] = dsn;
        }
        matvec_t_acc(wh.data(), 3 * h, h, dst, &mut carry_next);
        carry = carry_next;
    }

    // gx [T,D] = da [T,3H] * wi [3H,D]
    let mut gx = vec![0.0; t_len * d];
    gemm(t_len, 3 * h, d, 1.0, &da, wi.data(), 0.0, &mut gx);

    // gwi [3H,D] = da^T [3H,T] * x [T,D]; same pattern for gwh.
    let da_t = Tensor::new(vec![t_len, 3 * h], da.clone()).unwrap().transposed();
    let mut gwi = vec![0.0; 3 * h * d];
    gemm(3 * h, t_len, d, 1.0, da_t.data(), x.data(), 0.0, &mut gwi);

    let ds_t = Tensor::new(vec![t_len, 3 * h], ds.clone()).unwrap().transposed();
    let h_prev_mat = &cache.h[..t_len * h];
    let mut gwh = vec![0.0; 3 * h * h];
    gemm(3 * h, t_len, h, 1.0, ds_t.data(), h_prev_mat, 0.0, &mut gwh);

    let mut gbi = vec![0.0; 3 * h];
    let mut gbh = vec![0.0; 3 * h];
    for t in 0..t_len {
        for v in 0..3 * h {
            gbi[v] += da[t * 3 * h + v];
            gbh[v] += ds[t * 3 * h + v];
        }
    }

    (
        Tensor::new(vec![t_len, d], gx).unwrap(),
        Tensor::new(vec![3 * h, d], gwi).unwrap(),
        Tensor::new(vec![3 * h, h], gwh).unwrap(),
        Tensor::new(vec![3 * h], gbi).unwrap(),
        Tensor::new(vec![3 * h], gbh).unwrap(),
    )
}
