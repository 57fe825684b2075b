//! 2-d convolution and pooling kernels over [C, F, T] tensors.
//!
//! Convolution is im2col + GEMM; the layout is channels-first with
//! frequency as the first spatial axis and time as the second.

use super::tensor::{gemm, Real, Tensor};
use crate::error::{Error, Result};

fn gemm_nt(m: usize, k: usize, n: usize, a: &[Real], b: &[Real], c: &mut [Real]) {
    // c[m,n] = a[m,k] * b^T where b is [n,k] row-major
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    #[cfg(feature = "f32")]
    unsafe {
        matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
    #[cfg(not(feature = "f32"))]
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
}

fn gemm_tn(m: usize, k: usize, n: usize, a: &[Real], b: &[Real], c: &mut [Real]) {
    // c[m,n] = a^T * b[k,n] where a is [k,m] row-major
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    #[cfg(feature = "f32")]
    unsafe {
        matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
    #[cfg(not(feature = "f32"))]
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvSpec {
    pub fn unit_pad(padding: (usize, usize)) -> Self {
        ConvSpec {
            stride: (1, 1),
            padding,
        }
    }
}

pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub f_in: usize,
    pub t_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub f_out: usize,
    pub t_out: usize,
}

pub(crate) fn conv_dims(input: &Tensor, kernels: &Tensor, spec: ConvSpec) -> Result<ConvDims> {
    if input.shape().len() != 3 {
        return Err(Error::shape(
            "conv2d",
            format!("input must be [C,F,T], got {:?}", input.shape()),
        ));
    }
    if kernels.shape().len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!("kernels must be [Cout,Cin,kH,kW], got {:?}", kernels.shape()),
        ));
    }
    let (c_in, f_in, t_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kc, kh, kw) = (
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    );
    if kc != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("kernel expects {kc} input channels, input has {c_in}"),
        ));
    }
    let (sf, st) = spec.stride;
    let (pf, pt) = spec.padding;
    if sf == 0 || st == 0 {
        return Err(Error::shape("conv2d", "stride must be nonzero".to_string()));
    }
    if kh > f_in + 2 * pf || kw > t_in + 2 * pt {
        return Err(Error::shape(
            "conv2d",
            format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                f_in + 2 * pf,
                t_in + 2 * pt
            ),
        ));
    }
    Ok(ConvDims {
        c_in,
        c_out,
        f_in,
        t_in,
        kh,
        kw,
        f_out: (f_in + 2 * pf - kh) / sf + 1,
        t_out: (t_in + 2 * pt - kw) / st + 1,
    })
}

/// Lower [C,F,T] input into a [Cin*kH*kW, Fout*Tout] patch matrix.
pub(crate) fn im2col(input: &Tensor, d: &ConvDims, spec: ConvSpec) -> Vec<Real> {
    let (sf, st) = spec.stride;
    let (pf, pt) = spec.padding;
    let n = d.f_out * d.t_out;
    let mut cols = vec![0.0; d.c_in * d.kh * d.kw * n];
    let x = input.data();
    for ci in 0..d.c_in {
        let plane = &x[ci * d.f_in * d.t_in..(ci + 1) * d.f_in * d.t_in];
        for dh in 0..d.kh {
            for dw in 0..d.kw {
                let row = ((ci * d.kh + dh) * d.kw + dw) * n;
                for fo in 0..d.f_out {
                    let fi = (fo * sf + dh) as isize - pf as isize;
                    if fi < 0 || fi >= d.f_in as isize {
                        continue;
                    }
                    let src_row = &plane[fi as usize * d.t_in..(fi as usize + 1) * d.t_in];
                    let dst = &mut cols[row + fo * d.t_out..row + (fo + 1) * d.t_out];
                    for (to, out) in dst.iter_mut().enumerate() {
                        let ti = (to * st + dw) as isize - pt as isize;
                        if ti >= 0 && ti < d.t_in as isize {
                            *out = src_row[ti as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the patch-matrix gradient back onto the input grid.
pub(crate) fn col2im(cols: &[Real], d: &ConvDims, spec: ConvSpec, grad_input: &mut [Real]) {
    let (sf, st) = spec.stride;
    let (pf, pt) = spec.padding;
    let n = d.f_out * d.t_out;
    for ci in 0..d.c_in {
        let plane = &mut grad_input[ci * d.f_in * d.t_in..(ci + 1) * d.f_in * d.t_in];
        for dh in 0..d.kh {
            for dw in 0..d.kw {
                let row = ((ci * d.kh + dh) * d.kw + dw) * n;
                for fo in 0..d.f_out {
                    let fi = (fo * sf + dh) as isize - pf as isize;
                    if fi < 0 || fi >= d.f_in as isize {
                        continue;
                    }
                    let dst_row = &mut plane[fi as usize * d.t_in..(fi as usize + 1) * d.t_in];
                    let src = &cols[row + fo * d.t_out..row + (fo + 1) * d.t_out];
                    for (to, &g) in src.iter().enumerate() {
                        let ti = (to * st + dw) as isize - pt as isize;
                        if ti >= 0 && ti < d.t_in as isize {
                            dst_row[ti as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// conv2d([Cin,F,T], [Cout,Cin,kH,kW]) -> [Cout,F',T'] with
/// F' = (F + 2*padF - kH)/strideF + 1 and likewise for T'.
pub fn conv2d(input: &Tensor, kernels: &Tensor, spec: ConvSpec) -> Result<Tensor> {
    let d = conv_dims(input, kernels, spec)?;
    let n = d.f_out * d.t_out;
    let k = d.c_in * d.kh * d.kw;
    let cols = im2col(input, &d, spec);
    let mut out = vec![0.0; d.c_out * n];
    gemm(d.c_out, k, n, 1.0, kernels.data(), &cols, 0.0, &mut out);
    Tensor::new(vec![d.c_out, d.f_out, d.t_out], out)
}

/// Gradients of conv2d w.r.t. input and kernels.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    spec: ConvSpec,
    grad_out: &Tensor,
) -> (Tensor, Tensor) {
    let d = conv_dims(input, kernels, spec).expect("conv2d_backward: shapes already validated");
    let n = d.f_out * d.t_out;
    let k = d.c_in * d.kh * d.kw;
    debug_assert_eq!(grad_out.shape(), &[d.c_out, d.f_out, d.t_out]);

    let cols = im2col(input, &d, spec);
    let mut grad_kernels = vec![0.0; d.c_out * k];
    gemm_nt(d.c_out, n, k, grad_out.data(), &cols, &mut grad_kernels);

    let mut grad_cols = vec![0.0; k * n];
    gemm_tn(k, d.c_out, n, kernels.data(), grad_out.data(), &mut grad_cols);
    let mut grad_input = vec![0.0; input.numel()];
    col2im(&grad_cols, &d, spec, &mut grad_input);

    (
        Tensor::new(input.shape().to_vec(), grad_input).unwrap(),
        Tensor::new(kernels.shape().to_vec(), grad_kernels).unwrap(),
    )
}

/// Average pooling over non-overlapping (wF, wT) windows; trailing
/// rows/columns that do not fill a window are dropped.
pub fn avg_pool2d(input: &Tensor, window: (usize, usize)) -> Result<Tensor> {
    if input.shape().len() != 3 {
        return Err(Error::shape(
            "avg_pool2d",
            format!("input must be [C,F,T], got {:?}", input.shape()),
        ));
    }
    let (c, f, t) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (wf, wt) = window;
    if wf == 0 || wt == 0 || wf > f || wt > t {
        return Err(Error::shape(
            "avg_pool2d",
            format!("window {wf}x{wt} invalid for input {f}x{t}"),
        ));
    }
    let (fo, to) = (f / wf, t / wt);
    let inv = 1.0 / (wf * wt) as Real;
    let x = input.data();
    let mut out = vec![0.0; c * fo * to];
    for ci in 0..c {
        for i in 0..fo {
            for j in 0..to {
                let mut acc = 0.0;
                for di in 0..wf {
                    let base = (ci * f + i * wf + di) * t + j * wt;
                    acc += x[base..base + wt].iter().sum::<Real>();
                }
                out[(ci * fo + i) * to + j] = acc * inv;
            }
        }
    }
    Tensor::new(vec![c, fo, to], out)
}

pub fn avg_pool2d_backward(input_shape: &[usize], window: (usize, usize), grad_out: &Tensor) -> Tensor {
    let (c, f, t) = (input_shape[0], input_shape[1], input_shape[2]);
    let (wf, wt) = window;
    let (fo, to) = (f / wf, t / wt);
    let inv = 1.0 / (wf * wt) as Real;
    let mut grad_in = vec![0.0; c * f * t];
    let g = grad_out.data();
    for ci in 0..c {
        for i in 0..fo {
            for j in 0..to {
                let gg = g[(ci * fo + i) * to + j] * inv;
                for di in 0..wf {
                    let base = (ci * f + i * wf + di) * t + j * wt;
                    for v in &mut grad_in[base..base + wt] {
                        *v += gg;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), grad_in).unwrap()
}
