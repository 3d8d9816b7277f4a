//! Execution contexts. Model forward passes are written once against [`Ctx`]
//! and run either on the tape ([`GraphCtx`], for training) or directly on
//! tensors ([`EvalCtx`], for inference), so the two paths cannot diverge.

use std::collections::BTreeMap;

use crate::graph::{Gradients, Graph, NodeId};
use crate::kernels as k;
use crate::kernels::Conv1dSpec;
use crate::param::Param;
use crate::tensor::{reduce_to_shape, scalar, Tensor};

pub trait Ctx {
    type T: Clone;

    fn constant(&mut self, v: Tensor) -> Self::T;
    fn param(&mut self, p: &Param) -> Self::T;
    fn value(&self, t: &Self::T) -> Tensor;
    fn shape(&self, t: &Self::T) -> Vec<usize>;

    // elementwise binary (numpy broadcasting)
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn div(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn atan2(&mut self, y: &Self::T, x: &Self::T) -> Self::T;

    // elementwise unary
    fn neg(&mut self, a: &Self::T) -> Self::T;
    fn exp(&mut self, a: &Self::T) -> Self::T;
    fn ln(&mut self, a: &Self::T) -> Self::T;
    fn sqrt(&mut self, a: &Self::T) -> Self::T;
    fn abs(&mut self, a: &Self::T) -> Self::T;
    fn square(&mut self, a: &Self::T) -> Self::T;
    fn tanh(&mut self, a: &Self::T) -> Self::T;
    fn sigmoid(&mut self, a: &Self::T) -> Self::T;
    fn gelu(&mut self, a: &Self::T) -> Self::T;
    fn relu(&mut self, a: &Self::T) -> Self::T;
    fn leaky_relu(&mut self, a: &Self::T, slope: f64) -> Self::T;
    fn sin(&mut self, a: &Self::T) -> Self::T;
    fn cos(&mut self, a: &Self::T) -> Self::T;
    fn clamp(&mut self, a: &Self::T, lo: f64, hi: f64) -> Self::T;
    fn scale(&mut self, a: &Self::T, c: f64) -> Self::T;
    fn add_scalar(&mut self, a: &Self::T, c: f64) -> Self::T;

    // linear algebra
    fn matmul(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn bmm(&mut self, a: &Self::T, b: &Self::T) -> Self::T;

    // reductions
    fn sum_all(&mut self, a: &Self::T) -> Self::T;
    fn mean_all(&mut self, a: &Self::T) -> Self::T;

    // shape
    fn reshape(&mut self, a: &Self::T, shape: &[usize]) -> Self::T;
    fn permute(&mut self, a: &Self::T, axes: &[usize]) -> Self::T;
    fn slice_axis(&mut self, a: &Self::T, axis: usize, start: usize, end: usize) -> Self::T;
    fn concat(&mut self, axis: usize, parts: &[Self::T]) -> Self::T;
    fn flip(&mut self, a: &Self::T, axis: usize) -> Self::T;
    fn pad_axis(&mut self, a: &Self::T, axis: usize, before: usize, after: usize) -> Self::T;

    // neural building blocks
    fn conv1d(
        &mut self,
        x: &Self::T,
        w: &Self::T,
        bias: Option<&Self::T>,
        spec: Conv1dSpec,
    ) -> Self::T;
    fn lstm(&mut self, x: &Self::T, w_ih: &Self::T, w_hh: &Self::T, bias: &Self::T) -> Self::T;
    fn layer_norm(&mut self, x: &Self::T, gamma: &Self::T, beta: &Self::T, eps: f64) -> Self::T;
    fn softmax_last(&mut self, x: &Self::T) -> Self::T;

    // spectral
    fn rfft_frames(&mut self, x: &Self::T) -> Self::T;
    fn irfft_frames(&mut self, x: &Self::T, n: usize) -> Self::T;
    fn frame_signal(&mut self, x: &Self::T, fft: usize, hop: usize, frames: usize) -> Self::T;
    fn overlap_add(&mut self, x: &Self::T, hop: usize) -> Self::T;
    fn reflect_pad1d(&mut self, x: &Self::T, left: usize, right: usize) -> Self::T;
}

// ---------------------------------------------------------------------------
// Inference context: plain tensor evaluation, no tape.

#[derive(Default)]
pub struct EvalCtx;

impl EvalCtx {
    pub fn new() -> Self {
        Self
    }
}

impl Ctx for EvalCtx {
    type T = Tensor;

    fn constant(&mut self, v: Tensor) -> Tensor {
        v
    }
    fn param(&mut self, p: &Param) -> Tensor {
        p.value.clone()
    }
    fn value(&self, t: &Tensor) -> Tensor {
        t.clone()
    }
    fn shape(&self, t: &Tensor) -> Vec<usize> {
        t.shape().to_vec()
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::binary(a, b, |x, y| x + y)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::binary(a, b, |x, y| x - y)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::binary(a, b, |x, y| x * y)
    }
    fn div(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::binary(a, b, |x, y| x / y)
    }
    fn atan2(&mut self, y: &Tensor, x: &Tensor) -> Tensor {
        k::binary(y, x, f64::atan2)
    }

    fn neg(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, |v| -v)
    }
    fn exp(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::exp)
    }
    fn ln(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::ln)
    }
    fn sqrt(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::sqrt)
    }
    fn abs(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::abs)
    }
    fn square(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, |v| v * v)
    }
    fn tanh(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::tanh)
    }
    fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, |v| 1.0 / (1.0 + (-v).exp()))
    }
    fn gelu(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, k::gelu)
    }
    fn relu(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, |v| v.max(0.0))
    }
    fn leaky_relu(&mut self, a: &Tensor, slope: f64) -> Tensor {
        k::unary(a, |v| if v > 0.0 { v } else { slope * v })
    }
    fn sin(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::sin)
    }
    fn cos(&mut self, a: &Tensor) -> Tensor {
        k::unary(a, f64::cos)
    }
    fn clamp(&mut self, a: &Tensor, lo: f64, hi: f64) -> Tensor {
        k::unary(a, |v| v.clamp(lo, hi))
    }
    fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        k::unary(a, |v| v * c)
    }
    fn add_scalar(&mut self, a: &Tensor, c: f64) -> Tensor {
        k::unary(a, |v| v + c)
    }

    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::matmul(a, b)
    }
    fn bmm(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        k::bmm(a, b)
    }

    fn sum_all(&mut self, a: &Tensor) -> Tensor {
        scalar(a.sum())
    }
    fn mean_all(&mut self, a: &Tensor) -> Tensor {
        scalar(a.sum() / a.len() as f64)
    }

    fn reshape(&mut self, a: &Tensor, shape: &[usize]) -> Tensor {
        k::reshape_t(a, shape)
    }
    fn permute(&mut self, a: &Tensor, axes: &[usize]) -> Tensor {
        k::permute_t(a, axes)
    }
    fn slice_axis(&mut self, a: &Tensor, axis: usize, start: usize, end: usize) -> Tensor {
        k::slice_axis_t(a, axis, start, end)
    }
    fn concat(&mut self, axis: usize, parts: &[Tensor]) -> Tensor {
        k::concat_t(axis, parts)
    }
    fn flip(&mut self, a: &Tensor, axis: usize) -> Tensor {
        k::flip_t(a, axis)
    }
    fn pad_axis(&mut self, a: &Tensor, axis: usize, before: usize, after: usize) -> Tensor {
        k::pad_axis_t(a, axis, before, after)
    }

    fn conv1d(&mut self, x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: Conv1dSpec) -> Tensor {
        k::conv1d(x, w, bias, &spec)
    }
    fn lstm(&mut self, x: &Tensor, w_ih: &Tensor, w_hh: &Tensor, bias: &Tensor) -> Tensor {
        k::lstm(x, w_ih, w_hh, bias, false).0
    }
    fn layer_norm(&mut self, x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Tensor {
        k::layer_norm(x, gamma, beta, eps, false).0
    }
    fn softmax_last(&mut self, x: &Tensor) -> Tensor {
        k::softmax_last(x)
    }

    fn rfft_frames(&mut self, x: &Tensor) -> Tensor {
        k::rfft_frames(x)
    }
    fn irfft_frames(&mut self, x: &Tensor, n: usize) -> Tensor {
        k::irfft_frames(x, n)
    }
    fn frame_signal(&mut self, x: &Tensor, fft: usize, hop: usize, frames: usize) -> Tensor {
        k::frame_signal(x, fft, hop, frames)
    }
    fn overlap_add(&mut self, x: &Tensor, hop: usize) -> Tensor {
        k::overlap_add(x, hop)
    }
    fn reflect_pad1d(&mut self, x: &Tensor, left: usize, right: usize) -> Tensor {
        k::reflect_pad1d(x, left, right)
    }
}

// ---------------------------------------------------------------------------
// Training context: records onto the tape.

/// Records a forward pass on a [`Graph`]. Params bound while `trainable` is
/// true become gradient leaves addressable by name; everything else is a
/// constant, so frozen sub-models never accumulate gradients.
pub struct GraphCtx<'g> {
    pub graph: &'g mut Graph,
    pub trainable: bool,
    bindings: BTreeMap<String, NodeId>,
}

impl<'g> GraphCtx<'g> {
    pub fn new(graph: &'g mut Graph) -> Self {
        Self { graph, trainable: true, bindings: BTreeMap::new() }
    }

    pub fn frozen(graph: &'g mut Graph) -> Self {
        Self { graph, trainable: false, bindings: BTreeMap::new() }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn binding(&self, name: &str) -> Option<NodeId> {
        self.bindings.get(name).copied()
    }

    /// Collects parameter gradients by name after a backward pass.
    pub fn grads_by_name(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bindings
            .iter()
            .filter_map(|(name, id)| grads.get(*id).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    /// Re-leafs a value, cutting the gradient path (e.g. to feed a generator
    /// output to the discriminator step).
    pub fn detach(&mut self, t: &NodeId) -> NodeId {
        let v = self.graph.value(*t).clone();
        self.graph.leaf(v, false)
    }

    fn unary_op(
        &mut self,
        a: &NodeId,
        out: Tensor,
        dfn: impl Fn(&Tensor) -> Tensor + 'static,
    ) -> NodeId {
        let req = self.graph.requires_grad(*a);
        if !req {
            return self.graph.push(out, false, None);
        }
        let pid = a.0;
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| sink(pid, dfn(g)))),
        )
    }

    fn binary_op(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        out: Tensor,
        da: impl Fn(&Tensor) -> Tensor + 'static,
        db: impl Fn(&Tensor) -> Tensor + 'static,
    ) -> NodeId {
        let (ra, rb) = (self.graph.requires_grad(*a), self.graph.requires_grad(*b));
        if !ra && !rb {
            return self.graph.push(out, false, None);
        }
        let (sa, sb) = (
            self.graph.value(*a).shape().to_vec(),
            self.graph.value(*b).shape().to_vec(),
        );
        let (pa, pb) = (a.0, b.0);
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| {
                if ra {
                    sink(pa, reduce_to_shape(&da(g), &sa));
                }
                if rb {
                    sink(pb, reduce_to_shape(&db(g), &sb));
                }
            })),
        )
    }
}

impl Ctx for GraphCtx<'_> {
    type T = NodeId;

    fn constant(&mut self, v: Tensor) -> NodeId {
        self.graph.leaf(v, false)
    }

    fn param(&mut self, p: &Param) -> NodeId {
        if self.trainable {
            // A param used several times in one graph (e.g. a critic seeing
            // both real and fake inputs) must map to a single leaf so its
            // gradient contributions accumulate.
            if let Some(id) = self.bindings.get(&p.name) {
                return *id;
            }
            let id = self.graph.leaf(p.value.clone(), true);
            self.bindings.insert(p.name.clone(), id);
            id
        } else {
            self.graph.leaf(p.value.clone(), false)
        }
    }

    fn value(&self, t: &NodeId) -> Tensor {
        self.graph.value(*t).clone()
    }

    fn shape(&self, t: &NodeId) -> Vec<usize> {
        self.graph.value(*t).shape().to_vec()
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let out = k::binary(self.graph.value(*a), self.graph.value(*b), |x, y| x + y);
        self.binary_op(a, b, out, |g| g.clone(), |g| g.clone())
    }

    fn sub(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let out = k::binary(self.graph.value(*a), self.graph.value(*b), |x, y| x - y);
        self.binary_op(a, b, out, |g| g.clone(), |g| k::unary(g, |v| -v))
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let av = self.graph.value(*a).clone();
        let bv = self.graph.value(*b).clone();
        let out = k::binary(&av, &bv, |x, y| x * y);
        self.binary_op(
            a,
            b,
            out,
            move |g| k::binary(g, &bv, |x, y| x * y),
            move |g| k::binary(g, &av, |x, y| x * y),
        )
    }

    fn div(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let av = self.graph.value(*a).clone();
        let bv = self.graph.value(*b).clone();
        let bv2 = bv.clone();
        let av2 = av.clone();
        let out = k::binary(&av, &bv, |x, y| x / y);
        self.binary_op(
            a,
            b,
            out,
            move |g| k::binary(g, &bv, |x, y| x / y),
            move |g| {
                let num = k::binary(g, &av2, |x, y| x * y);
                k::binary(&num, &bv2, |x, y| -x / (y * y))
            },
        )
    }

    fn atan2(&mut self, y: &NodeId, x: &NodeId) -> NodeId {
        let yv = self.graph.value(*y).clone();
        let xv = self.graph.value(*x).clone();
        let out = k::binary(&yv, &xv, f64::atan2);
        let r2 = k::binary(&xv, &yv, |a, b| a * a + b * b);
        let r2b = r2.clone();
        let xv2 = xv.clone();
        let yv2 = yv.clone();
        self.binary_op(
            y,
            x,
            out,
            move |g| {
                let t = k::binary(&xv2, &r2, |a, r| a / r);
                k::binary(g, &t, |a, b| a * b)
            },
            move |g| {
                let t = k::binary(&yv2, &r2b, |a, r| -a / r);
                k::binary(g, &t, |a, b| a * b)
            },
        )
    }

    fn neg(&mut self, a: &NodeId) -> NodeId {
        let out = k::unary(self.graph.value(*a), |v| -v);
        self.unary_op(a, out, |g| k::unary(g, |v| -v))
    }

    fn exp(&mut self, a: &NodeId) -> NodeId {
        let out = k::unary(self.graph.value(*a), f64::exp);
        let y = out.clone();
        self.unary_op(a, out, move |g| k::binary(g, &y, |x, v| x * v))
    }

    fn ln(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, f64::ln);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| x / v))
    }

    fn sqrt(&mut self, a: &NodeId) -> NodeId {
        let out = k::unary(self.graph.value(*a), f64::sqrt);
        let y = out.clone();
        self.unary_op(a, out, move |g| k::binary(g, &y, |x, v| 0.5 * x / v))
    }

    fn abs(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, f64::abs);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| x * v.signum() * ((v != 0.0) as i32 as f64)))
    }

    fn square(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, |v| v * v);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| 2.0 * x * v))
    }

    fn tanh(&mut self, a: &NodeId) -> NodeId {
        let out = k::unary(self.graph.value(*a), f64::tanh);
        let y = out.clone();
        self.unary_op(a, out, move |g| k::binary(g, &y, |x, v| x * (1.0 - v * v)))
    }

    fn sigmoid(&mut self, a: &NodeId) -> NodeId {
        let out = k::unary(self.graph.value(*a), |v| 1.0 / (1.0 + (-v).exp()));
        let y = out.clone();
        self.unary_op(a, out, move |g| k::binary(g, &y, |x, v| x * v * (1.0 - v)))
    }

    fn gelu(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, k::gelu);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| x * k::gelu_grad(v)))
    }

    fn relu(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, |v| v.max(0.0));
        self.unary_op(a, out, move |g| {
            k::binary(g, &xv, |x, v| if v > 0.0 { x } else { 0.0 })
        })
    }

    fn leaky_relu(&mut self, a: &NodeId, slope: f64) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, |v| if v > 0.0 { v } else { slope * v });
        self.unary_op(a, out, move |g| {
            k::binary(g, &xv, move |x, v| if v > 0.0 { x } else { slope * x })
        })
    }

    fn sin(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, f64::sin);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| x * v.cos()))
    }

    fn cos(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, f64::cos);
        self.unary_op(a, out, move |g| k::binary(g, &xv, |x, v| -x * v.sin()))
    }

    fn clamp(&mut self, a: &NodeId, lo: f64, hi: f64) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let out = k::unary(&xv, |v| v.clamp(lo, hi));
        self.unary_op(a, out, move |g| {
            k::binary(g, &xv, move |x, v| if (lo..=hi).contains(&v) { x } else { 0.0 })
        })
    }

    fn scale(&mut self, a: &NodeId, c: f64) -> NodeId {
        let out = k::unary(self.graph.value(*a), |v| v * c);
        self.unary_op(a, out, move |g| k::unary(g, |v| v * c))
    }

    fn add_scalar(&mut self, a: &NodeId, c: f64) -> NodeId {
        let out = k::unary(self.graph.value(*a), |v| v + c);
        self.unary_op(a, out, |g| g.clone())
    }

    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let av = self.graph.value(*a).clone();
        let bv = self.graph.value(*b).clone();
        let out = k::matmul(&av, &bv);
        self.binary_op(
            a,
            b,
            out,
            move |g| k::matmul(g, &k::permute_t(&bv, &[1, 0])),
            move |g| k::matmul(&k::permute_t(&av, &[1, 0]), g),
        )
    }

    fn bmm(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let av = self.graph.value(*a).clone();
        let bv = self.graph.value(*b).clone();
        let out = k::bmm(&av, &bv);
        self.binary_op(
            a,
            b,
            out,
            move |g| k::bmm(g, &k::permute_t(&bv, &[0, 2, 1])),
            move |g| k::bmm(&k::permute_t(&av, &[0, 2, 1]), g),
        )
    }

    fn sum_all(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let shape = xv.shape().to_vec();
        let out = scalar(xv.sum());
        self.unary_op(a, out, move |g| {
            let gs = *g.iter().next().unwrap();
            ndarray::ArrayD::from_elem(ndarray::IxDyn(&shape), gs).into_shared()
        })
    }

    fn mean_all(&mut self, a: &NodeId) -> NodeId {
        let xv = self.graph.value(*a).clone();
        let shape = xv.shape().to_vec();
        let n = xv.len() as f64;
        let out = scalar(xv.sum() / n);
        self.unary_op(a, out, move |g| {
            let gs = *g.iter().next().unwrap() / n;
            ndarray::ArrayD::from_elem(ndarray::IxDyn(&shape), gs).into_shared()
        })
    }

    fn reshape(&mut self, a: &NodeId, shape: &[usize]) -> NodeId {
        let orig = self.graph.value(*a).shape().to_vec();
        let out = k::reshape_t(self.graph.value(*a), shape);
        self.unary_op(a, out, move |g| k::reshape_t(g, &orig))
    }

    fn permute(&mut self, a: &NodeId, axes: &[usize]) -> NodeId {
        let out = k::permute_t(self.graph.value(*a), axes);
        let mut inverse = vec![0usize; axes.len()];
        for (i, ax) in axes.iter().enumerate() {
            inverse[*ax] = i;
        }
        self.unary_op(a, out, move |g| k::permute_t(g, &inverse))
    }

    fn slice_axis(&mut self, a: &NodeId, axis: usize, start: usize, end: usize) -> NodeId {
        let orig = self.graph.value(*a).shape().to_vec();
        let out = k::slice_axis_t(self.graph.value(*a), axis, start, end);
        self.unary_op(a, out, move |g| {
            let mut dx = ndarray::ArrayD::<f64>::zeros(ndarray::IxDyn(&orig));
            dx.slice_axis_mut(ndarray::Axis(axis), ndarray::Slice::from(start..end))
                .assign(&g.view());
            dx.into_shared()
        })
    }

    fn concat(&mut self, axis: usize, parts: &[NodeId]) -> NodeId {
        let values: Vec<Tensor> = parts.iter().map(|p| self.graph.value(*p).clone()).collect();
        let out = k::concat_t(axis, &values);
        let meta: Vec<(usize, usize, bool)> = parts
            .iter()
            .zip(&values)
            .map(|(p, v)| (p.0, v.shape()[axis], self.graph.requires_grad(*p)))
            .collect();
        let any = meta.iter().any(|(_, _, r)| *r);
        if !any {
            return self.graph.push(out, false, None);
        }
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| {
                let mut offset = 0;
                for (pid, width, req) in &meta {
                    if *req {
                        sink(*pid, k::slice_axis_t(g, axis, offset, offset + width));
                    }
                    offset += width;
                }
            })),
        )
    }

    fn flip(&mut self, a: &NodeId, axis: usize) -> NodeId {
        let out = k::flip_t(self.graph.value(*a), axis);
        self.unary_op(a, out, move |g| k::flip_t(g, axis))
    }

    fn pad_axis(&mut self, a: &NodeId, axis: usize, before: usize, after: usize) -> NodeId {
        let width = self.graph.value(*a).shape()[axis];
        let out = k::pad_axis_t(self.graph.value(*a), axis, before, after);
        self.unary_op(a, out, move |g| k::slice_axis_t(g, axis, before, before + width))
    }

    fn conv1d(&mut self, x: &NodeId, w: &NodeId, bias: Option<&NodeId>, spec: Conv1dSpec) -> NodeId {
        let xv = self.graph.value(*x).clone();
        let wv = self.graph.value(*w).clone();
        let bv = bias.map(|b| self.graph.value(*b).clone());
        let out = k::conv1d(&xv, &wv, bv.as_ref(), &spec);
        let reqs = (
            self.graph.requires_grad(*x),
            self.graph.requires_grad(*w),
            bias.map(|b| self.graph.requires_grad(*b)).unwrap_or(false),
        );
        if !reqs.0 && !reqs.1 && !reqs.2 {
            return self.graph.push(out, false, None);
        }
        let ids = (x.0, w.0, bias.map(|b| b.0));
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| {
                let (dx, dw, db) = k::conv1d_backward(&xv, &wv, ids.2.is_some(), &spec, g);
                if reqs.0 {
                    sink(ids.0, dx);
                }
                if reqs.1 {
                    sink(ids.1, dw);
                }
                if reqs.2 {
                    if let (Some(bid), Some(db)) = (ids.2, db) {
                        sink(bid, db);
                    }
                }
            })),
        )
    }

    fn lstm(&mut self, x: &NodeId, w_ih: &NodeId, w_hh: &NodeId, bias: &NodeId) -> NodeId {
        let xv = self.graph.value(*x).clone();
        let wihv = self.graph.value(*w_ih).clone();
        let whhv = self.graph.value(*w_hh).clone();
        let bv = self.graph.value(*bias).clone();
        let reqs = (
            self.graph.requires_grad(*x),
            self.graph.requires_grad(*w_ih),
            self.graph.requires_grad(*w_hh),
            self.graph.requires_grad(*bias),
        );
        let any = reqs.0 || reqs.1 || reqs.2 || reqs.3;
        let (out, cache) = k::lstm(&xv, &wihv, &whhv, &bv, any);
        if !any {
            return self.graph.push(out, false, None);
        }
        let cache = cache.expect("cache requested");
        let ids = (x.0, w_ih.0, w_hh.0, bias.0);
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| {
                let (dx, dwih, dwhh, db) = k::lstm_backward(&xv, &wihv, &whhv, &cache, g);
                if reqs.0 {
                    sink(ids.0, dx);
                }
                if reqs.1 {
                    sink(ids.1, dwih);
                }
                if reqs.2 {
                    sink(ids.2, dwhh);
                }
                if reqs.3 {
                    sink(ids.3, db);
                }
            })),
        )
    }

    fn layer_norm(&mut self, x: &NodeId, gamma: &NodeId, beta: &NodeId, eps: f64) -> NodeId {
        let xv = self.graph.value(*x).clone();
        let gv = self.graph.value(*gamma).clone();
        let bv = self.graph.value(*beta).clone();
        let reqs = (
            self.graph.requires_grad(*x),
            self.graph.requires_grad(*gamma),
            self.graph.requires_grad(*beta),
        );
        let any = reqs.0 || reqs.1 || reqs.2;
        let (out, cache) = k::layer_norm(&xv, &gv, &bv, eps, any);
        if !any {
            return self.graph.push(out, false, None);
        }
        let cache = cache.expect("cache requested");
        let ids = (x.0, gamma.0, beta.0);
        let x_shape = xv.shape().to_vec();
        self.graph.push(
            out,
            true,
            Some(Box::new(move |g, sink| {
                let (dx, dgamma, dbeta) = k::layer_norm_backward(&x_shape, &gv, &cache, g);
                if reqs.0 {
                    sink(ids.0, dx);
                }
                if reqs.1 {
                    sink(ids.1, dgamma);
                }
                if reqs.2 {
                    sink(ids.2, dbeta);
                }
            })),
        )
    }

    fn softmax_last(&mut self, x: &NodeId) -> NodeId {
        let out = k::softmax_last(self.graph.value(*x));
        let y = out.clone();
        self.unary_op(x, out, move |g| k::softmax_last_backward(&y, g))
    }

    fn rfft_frames(&mut self, x: &NodeId) -> NodeId {
        let n = self.graph.value(*x).shape()[1];
        let out = k::rfft_frames(self.graph.value(*x));
        self.unary_op(x, out, move |g| k::rfft_frames_backward(g, n))
    }

    fn irfft_frames(&mut self, x: &NodeId, n: usize) -> NodeId {
        let out = k::irfft_frames(self.graph.value(*x), n);
        self.unary_op(x, out, move |g| k::irfft_frames_backward(g, n))
    }

    fn frame_signal(&mut self, x: &NodeId, fft: usize, hop: usize, frames: usize) -> NodeId {
        let len = self.graph.value(*x).len();
        let out = k::frame_signal(self.graph.value(*x), fft, hop, frames);
        self.unary_op(x, out, move |g| k::frame_signal_backward(g, len, hop))
    }

    fn overlap_add(&mut self, x: &NodeId, hop: usize) -> NodeId {
        let shape = self.graph.value(*x).shape().to_vec();
        let out = k::overlap_add(self.graph.value(*x), hop);
        self.unary_op(x, out, move |g| {
            k::overlap_add_backward(g, shape[0], shape[1], hop)
        })
    }

    fn reflect_pad1d(&mut self, x: &NodeId, left: usize, right: usize) -> NodeId {
        let n = self.graph.value(*x).len();
        let out = k::reflect_pad1d(self.graph.value(*x), left, right);
        self.unary_op(x, out, move |g| k::reflect_pad1d_backward(g, n, left))
    }
}
