//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Nodes are appended in topological order as the forward pass runs, so
//! the backward sweep is a single reverse iteration. Tensors on the tape
//! are immutable; every op materializes a new node. Any op that produces
//! a non-finite value panics immediately, naming the op.

use super::conv::{avg_pool2d, avg_pool2d_backward, conv2d, conv2d_backward, ConvSpec};
use super::gru::{gru_backward, gru_forward};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

type BackStep = Box<dyn Fn(&[Tensor], &Tensor, &mut [Tensor])>;

/// Gradients for every node of a tape, indexed by [`NodeId`].
pub struct Gradients(Vec<Tensor>);

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.0[id.0]
    }
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    backwards: Vec<Option<BackStep>>,
}

pub(crate) fn acc(grads: &mut [Tensor], id: NodeId, contribution: &Tensor) {
    let g = &mut grads[id.0];
    debug_assert_eq!(g.shape(), contribution.shape());
    for (a, b) in g.data_mut().iter_mut().zip(contribution.data()) {
        *a += b;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub(crate) fn push_op(&mut self, op: &'static str, value: Tensor, back: Option<BackStep>) -> NodeId {
        assert!(
            value.all_finite(),
            "op `{op}` produced non-finite values (shape {:?})",
            value.shape()
        );
        self.values.push(value);
        self.backwards.push(back);
        NodeId(self.values.len() - 1)
    }

    /// Register an input or parameter. Leaves receive gradients but have
    /// no parents.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_op("leaf", value, None)
    }

    /// Copy of an existing node's value with the graph edge severed.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].clone();
        self.push_op("detach", v, None)
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0]
            .zip_map(&self.values[b.0], "add", |x, y| x + y)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "add",
            v,
            Some(Box::new(move |_vals, g, grads| {
                acc(grads, a, g);
                acc(grads, b, g);
            })),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0]
            .zip_map(&self.values[b.0], "sub", |x, y| x - y)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "sub",
            v,
            Some(Box::new(move |_vals, g, grads| {
                acc(grads, a, g);
                let neg = g.map(|x| -x);
                acc(grads, b, &neg);
            })),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0]
            .zip_map(&self.values[b.0], "mul", |x, y| x * y)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "mul",
            v,
            Some(Box::new(move |vals, g, grads| {
                let da = g.zip_map(&vals[b.0], "mul_back", |x, y| x * y).unwrap();
                let db = g.zip_map(&vals[a.0], "mul_back", |x, y| x * y).unwrap();
                acc(grads, a, &da);
                acc(grads, b, &db);
            })),
        )
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0]
            .zip_map(&self.values[b.0], "div", |x, y| x / y)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "div",
            v,
            Some(Box::new(move |vals, g, grads| {
                let da = g.zip_map(&vals[b.0], "div_back", |x, y| x / y).unwrap();
                acc(grads, a, &da);
                let av = &vals[a.0];
                let bv = &vals[b.0];
                let db = Tensor::from_fn(bv.shape(), |i| {
                    -g.data()[i] * av.data()[i] / (bv.data()[i] * bv.data()[i])
                });
                acc(grads, b, &db);
            })),
        )
    }

    // ---- scalar affine and unary maps ----

    pub fn scale(&mut self, a: NodeId, k: Real) -> NodeId {
        self.affine(a, k, 0.0)
    }

    /// k*x + c, elementwise.
    pub fn affine(&mut self, a: NodeId, k: Real, c: Real) -> NodeId {
        let v = self.values[a.0].map(|x| k * x + c);
        self.push_op(
            "affine",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let da = g.map(|x| k * x);
                acc(grads, a, &da);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push_op(
            "sigmoid",
            v,
            Some(Box::new(move |vals, g, grads| {
                // reads own output: s * (1 - s); own value is not on the
                // tape inside the closure, so recompute from the input.
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| {
                    let s = 1.0 / (1.0 + (-x.data()[i]).exp());
                    g.data()[i] * s * (1.0 - s)
                });
                acc(grads, a, &da);
            })),
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x.tanh());
        self.push_op(
            "tanh",
            v,
            Some(Box::new(move |vals, g, grads| {
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| {
                    let t = x.data()[i].tanh();
                    g.data()[i] * (1.0 - t * t)
                });
                acc(grads, a, &da);
            })),
        )
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.leaky_relu(a, 0.0)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: Real) -> NodeId {
        let v = self.values[a.0].map(|x| if x > 0.0 { x } else { slope * x });
        self.push_op(
            "leaky_relu",
            v,
            Some(Box::new(move |vals, g, grads| {
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| {
                    g.data()[i] * if x.data()[i] > 0.0 { 1.0 } else { slope }
                });
                acc(grads, a, &da);
            })),
        )
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x.exp());
        self.push_op(
            "exp",
            v,
            Some(Box::new(move |vals, g, grads| {
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| g.data()[i] * x.data()[i].exp());
                acc(grads, a, &da);
            })),
        )
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x.ln());
        self.push_op(
            "ln",
            v,
            Some(Box::new(move |vals, g, grads| {
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| g.data()[i] / x.data()[i]);
                acc(grads, a, &da);
            })),
        )
    }

    /// x^e for a fixed exponent. e = 0 yields exactly 1 with zero gradient.
    pub fn powf(&mut self, a: NodeId, e: Real) -> NodeId {
        let v = self.values[a.0].map(|x| x.powf(e));
        self.push_op(
            "powf",
            v,
            Some(Box::new(move |vals, g, grads| {
                if e == 0.0 {
                    return;
                }
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| g.data()[i] * e * x.data()[i].powf(e - 1.0));
                acc(grads, a, &da);
            })),
        )
    }

    /// Clamp into [lo, hi]; gradient is passed through strictly inside the
    /// interval and zero where the value was clipped.
    pub fn clamp(&mut self, a: NodeId, lo: Real, hi: Real) -> NodeId {
        let v = self.values[a.0].map(|x| x.clamp(lo, hi));
        self.push_op(
            "clamp",
            v,
            Some(Box::new(move |vals, g, grads| {
                let x = &vals[a.0];
                let da = Tensor::from_fn(x.shape(), |i| {
                    let xv = x.data()[i];
                    if xv > lo && xv < hi {
                        g.data()[i]
                    } else {
                        0.0
                    }
                });
                acc(grads, a, &da);
            })),
        )
    }

    // ---- linear algebra and shape ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0]
            .matmul(&self.values[b.0])
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "matmul",
            v,
            Some(Box::new(move |vals, g, grads| {
                let bt = vals[b.0].transposed();
                let da = g.matmul(&bt).unwrap();
                acc(grads, a, &da);
                let at = vals[a.0].transposed();
                let db = at.matmul(g).unwrap();
                acc(grads, b, &db);
            })),
        )
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].transposed();
        self.push_op(
            "transpose",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let da = g.transposed();
                acc(grads, a, &da);
            })),
        )
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        let v = self.values[a.0]
            .reshaped(shape)
            .unwrap_or_else(|e| panic!("{e}"));
        let orig = self.values[a.0].shape().to_vec();
        self.push_op(
            "reshape",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let da = g.reshaped(orig.clone()).unwrap();
                acc(grads, a, &da);
            })),
        )
    }

    pub fn reverse_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 2, "reverse_rows expects [T,D]");
        let (t, d) = (x.shape()[0], x.shape()[1]);
        let v = Tensor::from_fn(x.shape(), |i| {
            let (r, c) = (i / d, i % d);
            x.data()[(t - 1 - r) * d + c]
        });
        self.push_op(
            "reverse_rows",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::from_fn(g.shape(), |i| {
                    let (r, c) = (i / d, i % d);
                    g.data()[(t - 1 - r) * d + c]
                });
                acc(grads, a, &da);
            })),
        )
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(x.shape().len(), 2);
        assert_eq!(y.shape().len(), 2);
        assert_eq!(x.shape()[0], y.shape()[0], "concat_cols row mismatch");
        let (t, ca, cb) = (x.shape()[0], x.shape()[1], y.shape()[1]);
        let mut data = Vec::with_capacity(t * (ca + cb));
        for r in 0..t {
            data.extend_from_slice(&x.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&y.data()[r * cb..(r + 1) * cb]);
        }
        let v = Tensor::new(vec![t, ca + cb], data).unwrap();
        self.push_op(
            "concat_cols",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let mut ga = Vec::with_capacity(t * ca);
                let mut gb = Vec::with_capacity(t * cb);
                for r in 0..t {
                    let row = &g.data()[r * (ca + cb)..(r + 1) * (ca + cb)];
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                acc(grads, a, &Tensor::new(vec![t, ca], ga).unwrap());
                acc(grads, b, &Tensor::new(vec![t, cb], gb).unwrap());
            })),
        )
    }

    // ---- broadcasting bias adds ----

    /// x[C,F,T] + b[C], broadcast over the spatial grid.
    pub fn bias_chan(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let xv = &self.values[x.0];
        let bv = &self.values[b.0];
        assert_eq!(xv.shape().len(), 3);
        assert_eq!(bv.shape(), &[xv.shape()[0]], "bias_chan channel mismatch");
        let (c, plane) = (xv.shape()[0], xv.shape()[1] * xv.shape()[2]);
        let v = Tensor::from_fn(xv.shape(), |i| xv.data()[i] + bv.data()[i / plane]);
        self.push_op(
            "bias_chan",
            v,
            Some(Box::new(move |_vals, g, grads| {
                acc(grads, x, g);
                let mut db = vec![0.0; c];
                for ci in 0..c {
                    db[ci] = g.data()[ci * plane..(ci + 1) * plane].iter().sum();
                }
                acc(grads, b, &Tensor::new(vec![c], db).unwrap());
            })),
        )
    }

    /// x[T,K] + b[K], broadcast over rows.
    pub fn bias_cols(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let xv = &self.values[x.0];
        let bv = &self.values[b.0];
        assert_eq!(xv.shape().len(), 2);
        assert_eq!(bv.shape(), &[xv.shape()[1]], "bias_cols column mismatch");
        let (t, k) = (xv.shape()[0], xv.shape()[1]);
        let v = Tensor::from_fn(xv.shape(), |i| xv.data()[i] + bv.data()[i % k]);
        self.push_op(
            "bias_cols",
            v,
            Some(Box::new(move |_vals, g, grads| {
                acc(grads, x, g);
                let mut db = vec![0.0; k];
                for r in 0..t {
                    for (u, dbv) in db.iter_mut().enumerate() {
                        *dbv += g.data()[r * k + u];
                    }
                }
                acc(grads, b, &Tensor::new(vec![k], db).unwrap());
            })),
        )
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: Real = self.values[a.0].data().iter().sum();
        let shape = self.values[a.0].shape().to_vec();
        self.push_op(
            "sum_all",
            Tensor::scalar(s),
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::full(&shape, g.item());
                acc(grads, a, &da);
            })),
        )
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.values[a.0].numel();
        assert!(n > 0, "mean_all on empty tensor");
        let s: Real = self.values[a.0].data().iter().sum();
        let shape = self.values[a.0].shape().to_vec();
        self.push_op(
            "mean_all",
            Tensor::scalar(s / n as Real),
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::full(&shape, g.item() / n as Real);
                acc(grads, a, &da);
            })),
        )
    }

    /// Sum a [R,C] tensor over rows, yielding [C].
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 2, "sum_rows expects [R,C]");
        let (r, c) = (x.shape()[0], x.shape()[1]);
        let mut out = vec![0.0; c];
        for row in 0..r {
            for (u, o) in out.iter_mut().enumerate() {
                *o += x.data()[row * c + u];
            }
        }
        self.push_op(
            "sum_rows",
            Tensor::new(vec![c], out).unwrap(),
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::from_fn(&[r, c], |i| g.data()[i % c]);
                acc(grads, a, &da);
            })),
        )
    }

    /// Mean over channels and time of [C,F,T], yielding [F].
    pub fn mean_chan_time(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 3, "mean_chan_time expects [C,F,T]");
        let (c, f, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let inv = 1.0 / (c * t) as Real;
        let mut out = vec![0.0; f];
        for ci in 0..c {
            for fi in 0..f {
                let base = (ci * f + fi) * t;
                out[fi] += x.data()[base..base + t].iter().sum::<Real>();
            }
        }
        for o in &mut out {
            *o *= inv;
        }
        self.push_op(
            "mean_chan_time",
            Tensor::new(vec![f], out).unwrap(),
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::from_fn(&[c, f, t], |i| g.data()[(i / t) % f] * inv);
                acc(grads, a, &da);
            })),
        )
    }

    /// Mean over the frequency axis of [C,F,T], yielding [C,T].
    pub fn freq_mean(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 3, "freq_mean expects [C,F,T]");
        let (c, f, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let inv = 1.0 / f as Real;
        let mut out = vec![0.0; c * t];
        for ci in 0..c {
            for fi in 0..f {
                let base = (ci * f + fi) * t;
                for ti in 0..t {
                    out[ci * t + ti] += x.data()[base + ti];
                }
            }
        }
        for o in &mut out {
            *o *= inv;
        }
        self.push_op(
            "freq_mean",
            Tensor::new(vec![c, t], out).unwrap(),
            Some(Box::new(move |_vals, g, grads| {
                let da = Tensor::from_fn(&[c, f, t], |i| {
                    let ci = i / (f * t);
                    let ti = i % t;
                    g.data()[ci * t + ti] * inv
                });
                acc(grads, a, &da);
            })),
        )
    }

    // ---- softmax ----

    /// Softmax over the row axis of [T,K]: each column sums to 1.
    pub fn softmax_cols(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 2, "softmax_cols expects [T,K]");
        let (t, k) = (x.shape()[0], x.shape()[1]);
        let mut out = vec![0.0; t * k];
        for col in 0..k {
            let mut m = Real::NEG_INFINITY;
            for row in 0..t {
                m = m.max(x.data()[row * k + col]);
            }
            let mut s = 0.0;
            for row in 0..t {
                let e = (x.data()[row * k + col] - m).exp();
                out[row * k + col] = e;
                s += e;
            }
            for row in 0..t {
                out[row * k + col] /= s;
            }
        }
        let v = Tensor::new(vec![t, k], out).unwrap();
        let y = v.clone();
        self.push_op(
            "softmax_cols",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let mut da = vec![0.0; t * k];
                for col in 0..k {
                    let mut dot = 0.0;
                    for row in 0..t {
                        dot += g.data()[row * k + col] * y.data()[row * k + col];
                    }
                    for row in 0..t {
                        let i = row * k + col;
                        da[i] = y.data()[i] * (g.data()[i] - dot);
                    }
                }
                acc(grads, a, &Tensor::new(vec![t, k], da).unwrap());
            })),
        )
    }

    /// Temperature softmax over the column axis of [F,K]: each row sums
    /// to 1.
    pub fn softmax_rows(&mut self, a: NodeId, temperature: Real) -> NodeId {
        assert!(temperature > 0.0, "softmax temperature must be positive");
        let x = &self.values[a.0];
        assert_eq!(x.shape().len(), 2, "softmax_rows expects [F,K]");
        let (f, k) = (x.shape()[0], x.shape()[1]);
        let mut out = vec![0.0; f * k];
        for row in 0..f {
            let r = &x.data()[row * k..(row + 1) * k];
            let m = r.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut s = 0.0;
            for (j, &xv) in r.iter().enumerate() {
                let e = ((xv - m) / temperature).exp();
                out[row * k + j] = e;
                s += e;
            }
            for j in 0..k {
                out[row * k + j] /= s;
            }
        }
        let v = Tensor::new(vec![f, k], out).unwrap();
        let y = v.clone();
        self.push_op(
            "softmax_rows",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let mut da = vec![0.0; f * k];
                for row in 0..f {
                    let mut dot = 0.0;
                    for j in 0..k {
                        dot += g.data()[row * k + j] * y.data()[row * k + j];
                    }
                    for j in 0..k {
                        let i = row * k + j;
                        da[i] = y.data()[i] * (g.data()[i] - dot) / temperature;
                    }
                }
                acc(grads, a, &Tensor::new(vec![f, k], da).unwrap());
            })),
        )
    }

    // ---- structured ops ----

    pub fn conv2d(&mut self, x: NodeId, kernels: NodeId, spec: ConvSpec) -> NodeId {
        let v = conv2d(&self.values[x.0], &self.values[kernels.0], spec)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "conv2d",
            v,
            Some(Box::new(move |vals, g, grads| {
                let (dx, dk) = conv2d_backward(&vals[x.0], &vals[kernels.0], spec, g);
                acc(grads, x, &dx);
                acc(grads, kernels, &dk);
            })),
        )
    }

    pub fn avg_pool2d(&mut self, x: NodeId, window: (usize, usize)) -> NodeId {
        let v = avg_pool2d(&self.values[x.0], window).unwrap_or_else(|e| panic!("{e}"));
        let in_shape = self.values[x.0].shape().to_vec();
        self.push_op(
            "avg_pool2d",
            v,
            Some(Box::new(move |_vals, g, grads| {
                let dx = avg_pool2d_backward(&in_shape, window, g);
                acc(grads, x, &dx);
            })),
        )
    }

    /// Per-channel batch normalization over the [F,T] grid of one clip,
    /// using the clip's own statistics. Returns the node and the biased
    /// (mean, var) per channel for running-stat bookkeeping.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: Real,
    ) -> (NodeId, Vec<(Real, Real)>) {
        let xv = &self.values[x.0];
        assert_eq!(xv.shape().len(), 3, "batch_norm expects [C,F,T]");
        let (c, f, t) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let n = f * t;
        assert_eq!(self.values[gamma.0].shape(), &[c]);
        assert_eq!(self.values[beta.0].shape(), &[c]);

        let mut stats = Vec::with_capacity(c);
        let mut out = vec![0.0; c * n];
        for ci in 0..c {
            let plane = &xv.data()[ci * n..(ci + 1) * n];
            let mean = plane.iter().sum::<Real>() / n as Real;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / n as Real;
            let istd = 1.0 / (var + eps).sqrt();
            let (g, b) = (self.values[gamma.0].data()[ci], self.values[beta.0].data()[ci]);
            for (o, &v) in out[ci * n..(ci + 1) * n].iter_mut().zip(plane) {
                *o = g * (v - mean) * istd + b;
            }
            stats.push((mean, var));
        }
        let back_stats = stats.clone();
        let id = self.push_op(
            "batch_norm",
            Tensor::new(vec![c, f, t], out).unwrap(),
            Some(Box::new(move |vals, g, grads| {
                let xv = &vals[x.0];
                let gam = &vals[gamma.0];
                let mut dx = vec![0.0; c * n];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ci in 0..c {
                    let (mean, var) = back_stats[ci];
                    let istd = 1.0 / (var + eps).sqrt();
                    let plane = &xv.data()[ci * n..(ci + 1) * n];
                    let gp = &g.data()[ci * n..(ci + 1) * n];
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for (i, &gv) in gp.iter().enumerate() {
                        let xh = (plane[i] - mean) * istd;
                        sum_g += gv;
                        sum_gx += gv * xh;
                    }
                    dbeta[ci] = sum_g;
                    dgamma[ci] = sum_gx;
                    let gv_mean = sum_g / n as Real;
                    let gx_mean = sum_gx / n as Real;
                    let gc = gam.data()[ci];
                    for (i, dv) in dx[ci * n..(ci + 1) * n].iter_mut().enumerate() {
                        let xh = (plane[i] - mean) * istd;
                        *dv = gc * istd * (gp[i] - gv_mean - xh * gx_mean);
                    }
                }
                acc(grads, x, &Tensor::new(vec![c, f, t], dx).unwrap());
                acc(grads, gamma, &Tensor::new(vec![c], dgamma).unwrap());
                acc(grads, beta, &Tensor::new(vec![c], dbeta).unwrap());
            })),
        );
        (id, stats)
    }

    /// Batch normalization with frozen statistics (inference path).
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[Real],
        running_var: &[Real],
        eps: Real,
    ) -> NodeId {
        let xv = &self.values[x.0];
        assert_eq!(xv.shape().len(), 3, "batch_norm expects [C,F,T]");
        let (c, f, t) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let n = f * t;
        assert_eq!(running_mean.len(), c);
        assert_eq!(running_var.len(), c);
        let mean = running_mean.to_vec();
        let istd: Vec<Real> = running_var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = vec![0.0; c * n];
        for ci in 0..c {
            let (g, b) = (self.values[gamma.0].data()[ci], self.values[beta.0].data()[ci]);
            let plane = &xv.data()[ci * n..(ci + 1) * n];
            for (o, &v) in out[ci * n..(ci + 1) * n].iter_mut().zip(plane) {
                *o = g * (v - mean[ci]) * istd[ci] + b;
            }
        }
        self.push_op(
            "batch_norm_eval",
            Tensor::new(vec![c, f, t], out).unwrap(),
            Some(Box::new(move |vals, g, grads| {
                let xv = &vals[x.0];
                let gam = &vals[gamma.0];
                let mut dx = vec![0.0; c * n];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ci in 0..c {
                    let plane = &xv.data()[ci * n..(ci + 1) * n];
                    let gp = &g.data()[ci * n..(ci + 1) * n];
                    let gc = gam.data()[ci];
                    for (i, &gv) in gp.iter().enumerate() {
                        dx[ci * n + i] = gv * gc * istd[ci];
                        dgamma[ci] += gv * (plane[i] - mean[ci]) * istd[ci];
                        dbeta[ci] += gv;
                    }
                }
                acc(grads, x, &Tensor::new(vec![c, f, t], dx).unwrap());
                acc(grads, gamma, &Tensor::new(vec![c], dgamma).unwrap());
                acc(grads, beta, &Tensor::new(vec![c], dbeta).unwrap());
            })),
        )
    }

    /// Fused single-direction GRU: [T,D] -> [T,H].
    pub fn gru(&mut self, x: NodeId, wi: NodeId, wh: NodeId, bi: NodeId, bh: NodeId) -> NodeId {
        let (v, cache) = gru_forward(
            &self.values[x.0],
            &self.values[wi.0],
            &self.values[wh.0],
            &self.values[bi.0],
            &self.values[bh.0],
        )
        .unwrap_or_else(|e| panic!("{e}"));
        self.push_op(
            "gru",
            v,
            Some(Box::new(move |vals, g, grads| {
                let (gx, gwi, gwh, gbi, gbh) =
                    gru_backward(&vals[x.0], &vals[wi.0], &vals[wh.0], &cache, g);
                acc(grads, x, &gx);
                acc(grads, wi, &gwi);
                acc(grads, wh, &gwh);
                acc(grads, bi, &gbi);
                acc(grads, bh, &gbh);
            })),
        )
    }

    /// Backward pass from a scalar loss node. Gradients are defined for
    /// every node with id <= loss that participates in the graph.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.values[loss.0];
        if !lv.is_scalar() {
            return Err(Error::NonScalarSeed(lv.shape().to_vec()));
        }
        let mut grads: Vec<Tensor> = self.values.iter().map(|v| Tensor::zeros(v.shape())).collect();
        grads[loss.0] = Tensor::scalar(1.0);
        for id in (0..=loss.0).rev() {
            if let Some(back) = &self.backwards[id] {
                let own = std::mem::replace(&mut grads[id], Tensor::empty());
                back(&self.values, &own, &mut grads);
                grads[id] = own;
            }
        }
        Ok(Gradients(grads))
    }
}
