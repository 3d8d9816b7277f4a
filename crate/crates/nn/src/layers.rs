//! Layer building blocks. Each layer holds named [`Param`]s and a single
//! `forward` generic over [`Ctx`], shared by training and inference.

use rand_chacha::ChaCha20Rng;

use crate::ctx::Ctx;
use crate::kernels::Conv1dSpec;
use crate::param::{HasParams, Param};
use crate::tensor::{from_vec, uniform_init, zeros};

pub struct Linear {
    pub w: Param, // [d_in, d_out]
    pub b: Option<Param>,
}

impl Linear {
    pub fn new(rng: &mut ChaCha20Rng, name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            w: Param::new(format!("{name}.w"), uniform_init(rng, &[d_in, d_out], d_in)),
            b: bias.then(|| Param::new(format!("{name}.b"), uniform_init(rng, &[d_out], d_in))),
        }
    }

    /// Final projections that must start silent (zero output at init).
    pub fn new_zeroed(name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            w: Param::new(format!("{name}.w"), zeros(&[d_in, d_out])),
            b: bias.then(|| Param::new(format!("{name}.b"), zeros(&[d_out]))),
        }
    }

    /// `x [..., d_in] -> [..., d_out]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let shape = c.shape(x);
        let d_in = *shape.last().expect("linear input needs an axis");
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = c.reshape(x, &[rows, d_in]);
        let w = c.param(&self.w);
        let mut y = c.matmul(&flat, &w);
        if let Some(b) = &self.b {
            let b = c.param(b);
            y = c.add(&y, &b);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.w.value.shape()[1];
        c.reshape(&y, &out_shape)
    }
}

impl HasParams for Linear {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.w);
        if let Some(b) = &mut self.b {
            out.push(b);
        }
    }
}

/// How a convolution pads its input.
#[derive(Debug, Clone, Copy)]
pub enum Padding {
    Valid,
    /// Output length `ceil(T / stride)`, TensorFlow-style.
    Same,
    Explicit(usize, usize),
}

pub struct Conv1d {
    pub w: Param, // [c_out, c_in/groups, k]
    pub b: Option<Param>,
    pub stride: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut ChaCha20Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
        padding: Padding,
        bias: bool,
    ) -> Self {
        let fan_in = c_in / groups * k;
        Self {
            w: Param::new(
                format!("{name}.w"),
                uniform_init(rng, &[c_out, c_in / groups, k], fan_in),
            ),
            b: bias.then(|| Param::new(format!("{name}.b"), uniform_init(rng, &[c_out], fan_in))),
            stride,
            groups,
            padding,
        }
    }

    fn pads(&self, t: usize) -> (usize, usize) {
        let k = self.w.value.shape()[2];
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Explicit(l, r) => (l, r),
            Padding::Same => {
                let out = t.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + k).saturating_sub(t);
                (total / 2, total - total / 2)
            }
        }
    }

    /// `x [B, c_in, T] -> [B, c_out, T']`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let t = c.shape(x)[2];
        let (pad_left, pad_right) = self.pads(t);
        let w = c.param(&self.w);
        let b = self.b.as_ref().map(|b| c.param(b));
        c.conv1d(
            x,
            &w,
            b.as_ref(),
            Conv1dSpec { stride: self.stride, pad_left, pad_right, groups: self.groups },
        )
    }
}

impl HasParams for Conv1d {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.w);
        if let Some(b) = &mut self.b {
            out.push(b);
        }
    }
}

pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), from_vec(&[d], vec![1.0; d])),
            beta: Param::new(format!("{name}.beta"), zeros(&[d])),
            eps: 1e-5,
        }
    }

    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let gamma = c.param(&self.gamma);
        let beta = c.param(&self.beta);
        c.layer_norm(x, &gamma, &beta, self.eps)
    }
}

impl HasParams for LayerNorm {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

pub struct Lstm {
    pub w_ih: Param, // [d_in, 4H]
    pub w_hh: Param, // [H, 4H]
    pub bias: Param, // [4H]
}

impl Lstm {
    pub fn new(rng: &mut ChaCha20Rng, name: &str, d_in: usize, hidden: usize) -> Self {
        Self {
            w_ih: Param::new(format!("{name}.w_ih"), uniform_init(rng, &[d_in, 4 * hidden], hidden)),
            w_hh: Param::new(format!("{name}.w_hh"), uniform_init(rng, &[hidden, 4 * hidden], hidden)),
            bias: Param::new(format!("{name}.bias"), uniform_init(rng, &[4 * hidden], hidden)),
        }
    }

    /// `x [B, T, d_in] -> [B, T, H]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let w_ih = c.param(&self.w_ih);
        let w_hh = c.param(&self.w_hh);
        let bias = c.param(&self.bias);
        c.lstm(x, &w_ih, &w_hh, &bias)
    }
}

impl HasParams for Lstm {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.w_ih);
        out.push(&mut self.w_hh);
        out.push(&mut self.bias);
    }
}

pub struct BiLstm {
    pub forward_dir: Lstm,
    pub backward_dir: Lstm,
}

impl BiLstm {
    pub fn new(rng: &mut ChaCha20Rng, name: &str, d_in: usize, hidden: usize) -> Self {
        Self {
            forward_dir: Lstm::new(rng, &format!("{name}.fwd"), d_in, hidden),
            backward_dir: Lstm::new(rng, &format!("{name}.bwd"), d_in, hidden),
        }
    }

    /// `x [B, T, d_in] -> [B, T, 2H]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let fwd = self.forward_dir.forward(c, x);
        let rev = c.flip(x, 1);
        let bwd = self.backward_dir.forward(c, &rev);
        let bwd = c.flip(&bwd, 1);
        c.concat(2, &[fwd, bwd])
    }
}

impl HasParams for BiLstm {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.forward_dir.visit_params(out);
        self.backward_dir.visit_params(out);
    }
}

pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
}

impl MultiHeadAttention {
    pub fn new(rng: &mut ChaCha20Rng, name: &str, d_model: usize, n_heads: usize) -> Self {
        assert_eq!(d_model % n_heads, 0, "d_model must divide by n_heads");
        Self {
            wq: Linear::new(rng, &format!("{name}.wq"), d_model, d_model, true),
            wk: Linear::new(rng, &format!("{name}.wk"), d_model, d_model, true),
            wv: Linear::new(rng, &format!("{name}.wv"), d_model, d_model, true),
            wo: Linear::new(rng, &format!("{name}.wo"), d_model, d_model, true),
            n_heads,
        }
    }

    /// Self-attention over `x [T, d_model]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let t = c.shape(x)[0];
        let d = c.shape(x)[1];
        let dh = d / self.n_heads;
        let split = |c: &mut C, y: &C::T| {
            let y = c.reshape(y, &[t, self.n_heads, dh]);
            c.permute(&y, &[1, 0, 2]) // [h, T, dh]
        };
        let q = self.wq.forward(c, x);
        let k = self.wk.forward(c, x);
        let v = self.wv.forward(c, x);
        let (q, k, v) = (split(c, &q), split(c, &k), split(c, &v));
        let kt = c.permute(&k, &[0, 2, 1]);
        let scores = c.bmm(&q, &kt);
        let scores = c.scale(&scores, 1.0 / (dh as f64).sqrt());
        let att = c.softmax_last(&scores);
        let ctx_v = c.bmm(&att, &v); // [h, T, dh]
        let merged = c.permute(&ctx_v, &[1, 0, 2]);
        let merged = c.reshape(&merged, &[t, d]);
        self.wo.forward(c, &merged)
    }
}

impl HasParams for MultiHeadAttention {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.wq.visit_params(out);
        self.wk.visit_params(out);
        self.wv.visit_params(out);
        self.wo.visit_params(out);
    }
}
