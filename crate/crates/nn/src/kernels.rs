//! Forward computations and their hand-written adjoints. The graph ops in
//! [`crate::ctx`] and the inference path share these, so train-time and
//! eval-time forwards are the same code.

use ndarray::{s, Array1, Array2, Array3, ArrayD, Axis, Ix2, Ix3, IxDyn, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::tensor::{broadcast_shape, Tensor};

pub fn binary<F: Fn(f64, f64) -> f64>(a: &Tensor, b: &Tensor, f: F) -> Tensor {
    let shape = broadcast_shape(a.shape(), b.shape());
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    let av = a.broadcast(IxDyn(&shape)).expect("broadcast a");
    let bv = b.broadcast(IxDyn(&shape)).expect("broadcast b");
    Zip::from(&mut out).and(&av).and(&bv).for_each(|o, x, y| *o = f(*x, *y));
    out.into_shared()
}

pub fn unary<F: Fn(f64) -> f64>(a: &Tensor, f: F) -> Tensor {
    a.map(|v| f(*v)).into_shared()
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let a2 = a.view().into_dimensionality::<Ix2>().expect("matmul lhs must be 2-d");
    let b2 = b.view().into_dimensionality::<Ix2>().expect("matmul rhs must be 2-d");
    a2.dot(&b2).into_dyn().into_shared()
}

pub fn bmm(a: &Tensor, b: &Tensor) -> Tensor {
    let a3 = a.view().into_dimensionality::<Ix3>().expect("bmm lhs must be 3-d");
    let b3 = b.view().into_dimensionality::<Ix3>().expect("bmm rhs must be 3-d");
    let (bs, m, _k) = a3.dim();
    let n = b3.dim().2;
    let mut out = Array3::<f64>::zeros((bs, m, n));
    for i in 0..bs {
        out.slice_mut(s![i, .., ..]).assign(&a3.slice(s![i, .., ..]).dot(&b3.slice(s![i, .., ..])));
    }
    out.into_dyn().into_shared()
}

// ---------------------------------------------------------------------------
// conv1d

pub struct Conv1dSpec {
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

pub fn conv1d_out_len(t: usize, k: usize, spec: &Conv1dSpec) -> usize {
    let padded = t + spec.pad_left + spec.pad_right;
    if padded < k {
        0
    } else {
        (padded - k) / spec.stride + 1
    }
}

fn im2col(x: &ndarray::ArrayView2<f64>, k: usize, spec: &Conv1dSpec, t_out: usize) -> Array2<f64> {
    let (c_in, t) = x.dim();
    let mut col = Array2::<f64>::zeros((c_in * k, t_out));
    for ci in 0..c_in {
        for kk in 0..k {
            for to in 0..t_out {
                let ti = to * spec.stride + kk;
                if ti >= spec.pad_left && ti - spec.pad_left < t {
                    col[(ci * k + kk, to)] = x[(ci, ti - spec.pad_left)];
                }
            }
        }
    }
    col
}

/// `x [B, Cin, T]`, `w [Cout, Cin/groups, K]`, optional `bias [Cout]`.
pub fn conv1d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &Conv1dSpec) -> Tensor {
    let x3 = x.view().into_dimensionality::<Ix3>().expect("conv1d input must be [B, C, T]");
    let w3 = w.view().into_dimensionality::<Ix3>().expect("conv1d weight must be [Co, Ci/g, K]");
    let (b, c_in, t) = x3.dim();
    let (c_out, c_in_g, k) = w3.dim();
    assert_eq!(c_in, c_in_g * spec.groups, "conv1d channel/group mismatch");
    assert_eq!(c_out % spec.groups, 0);
    let c_out_g = c_out / spec.groups;
    let t_out = conv1d_out_len(t, k, spec);
    let mut out = Array3::<f64>::zeros((b, c_out, t_out));
    for bi in 0..b {
        for g in 0..spec.groups {
            let xg = x3.slice(s![bi, g * c_in_g..(g + 1) * c_in_g, ..]);
            let col = im2col(&xg, k, spec, t_out);
            let wg_slice = w3.slice(s![g * c_out_g..(g + 1) * c_out_g, .., ..]);
            let wg = wg_slice.to_shape((c_out_g, c_in_g * k)).expect("contiguous weight");
            let res = wg.dot(&col);
            out.slice_mut(s![bi, g * c_out_g..(g + 1) * c_out_g, ..]).assign(&res);
        }
    }
    if let Some(bias) = bias {
        let bv = bias.view().into_dimensionality::<ndarray::Ix1>().expect("bias 1-d");
        for co in 0..c_out {
            out.slice_mut(s![.., co, ..]).mapv_inplace(|v| v + bv[co]);
        }
    }
    out.into_dyn().into_shared()
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    has_bias: bool,
    spec: &Conv1dSpec,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Option<Tensor>) {
    let x3 = x.view().into_dimensionality::<Ix3>().unwrap();
    let w3 = w.view().into_dimensionality::<Ix3>().unwrap();
    let g3 = grad_out.view().into_dimensionality::<Ix3>().unwrap();
    let (b, c_in, t) = x3.dim();
    let (c_out, c_in_g, k) = w3.dim();
    let c_out_g = c_out / spec.groups;
    let t_out = g3.dim().2;

    let mut dx = Array3::<f64>::zeros((b, c_in, t));
    let mut dw = Array3::<f64>::zeros((c_out, c_in_g, k));
    for bi in 0..b {
        for g in 0..spec.groups {
            let xg = x3.slice(s![bi, g * c_in_g..(g + 1) * c_in_g, ..]);
            let col = im2col(&xg, k, spec, t_out);
            let gog = g3.slice(s![bi, g * c_out_g..(g + 1) * c_out_g, ..]);
            // dW_g += gO_g . col^T
            let dwg = gog.dot(&col.t());
            let mut dw_slice = dw.slice_mut(s![g * c_out_g..(g + 1) * c_out_g, .., ..]);
            let dwg3 = dwg.into_shape_with_order((c_out_g, c_in_g, k)).unwrap();
            dw_slice += &dwg3;
            // dcol = W_g^T . gO_g, then scatter back (col2im).
            let wg_slice = w3.slice(s![g * c_out_g..(g + 1) * c_out_g, .., ..]);
            let wg = wg_slice.to_shape((c_out_g, c_in_g * k)).unwrap();
            let dcol = wg.t().dot(&gog);
            for ci in 0..c_in_g {
                for kk in 0..k {
                    for to in 0..t_out {
                        let ti = to * spec.stride + kk;
                        if ti >= spec.pad_left && ti - spec.pad_left < t {
                            dx[(bi, g * c_in_g + ci, ti - spec.pad_left)] +=
                                dcol[(ci * k + kk, to)];
                        }
                    }
                }
            }
        }
    }
    let db = has_bias.then(|| {
        let mut db = Array1::<f64>::zeros(c_out);
        for co in 0..c_out {
            db[co] = g3.slice(s![.., co, ..]).sum();
        }
        db.into_dyn().into_shared()
    });
    (dx.into_dyn().into_shared(), dw.into_dyn().into_shared(), db)
}

// ---------------------------------------------------------------------------
// LSTM (single direction)

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct LstmCache {
    /// Post-activation gates `[T, B, 4H]` in i, f, g, o order.
    pub gates: Array3<f64>,
    /// Cell states `[T, B, H]`.
    pub cells: Array3<f64>,
    /// Hidden states `[T, B, H]`.
    pub hidden: Array3<f64>,
}

/// `x [B, T, D]`, `w_ih [D, 4H]`, `w_hh [H, 4H]`, `bias [4H]` -> `[B, T, H]`.
pub fn lstm(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    bias: &Tensor,
    want_cache: bool,
) -> (Tensor, Option<LstmCache>) {
    let x3 = x.view().into_dimensionality::<Ix3>().expect("lstm input must be [B, T, D]");
    let (b, t, _d) = x3.dim();
    let wih = w_ih.view().into_dimensionality::<Ix2>().unwrap();
    let whh = w_hh.view().into_dimensionality::<Ix2>().unwrap();
    let bv = bias.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let h4 = wih.dim().1;
    let h = h4 / 4;

    let mut hs = Array2::<f64>::zeros((b, h));
    let mut cs = Array2::<f64>::zeros((b, h));
    let mut out = Array3::<f64>::zeros((b, t, h));
    let mut cache = want_cache.then(|| LstmCache {
        gates: Array3::zeros((t, b, h4)),
        cells: Array3::zeros((t, b, h)),
        hidden: Array3::zeros((t, b, h)),
    });

    for ti in 0..t {
        let xt = x3.slice(s![.., ti, ..]);
        let mut gates = xt.dot(&wih) + hs.dot(&whh);
        for mut row in gates.rows_mut() {
            row += &bv;
        }
        for bi in 0..b {
            for hi in 0..h {
                let i = sigmoid(gates[(bi, hi)]);
                let f = sigmoid(gates[(bi, h + hi)]);
                let g = gates[(bi, 2 * h + hi)].tanh();
                let o = sigmoid(gates[(bi, 3 * h + hi)]);
                let c = f * cs[(bi, hi)] + i * g;
                let hv = o * c.tanh();
                gates[(bi, hi)] = i;
                gates[(bi, h + hi)] = f;
                gates[(bi, 2 * h + hi)] = g;
                gates[(bi, 3 * h + hi)] = o;
                cs[(bi, hi)] = c;
                hs[(bi, hi)] = hv;
                out[(bi, ti, hi)] = hv;
            }
        }
        if let Some(c) = cache.as_mut() {
            c.gates.slice_mut(s![ti, .., ..]).assign(&gates);
            c.cells.slice_mut(s![ti, .., ..]).assign(&cs);
            c.hidden.slice_mut(s![ti, .., ..]).assign(&hs);
        }
    }
    (out.into_dyn().into_shared(), cache)
}

/// Returns `(dx, dw_ih, dw_hh, dbias)`.
pub fn lstm_backward(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    cache: &LstmCache,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor) {
    let x3 = x.view().into_dimensionality::<Ix3>().unwrap();
    let g3 = grad_out.view().into_dimensionality::<Ix3>().unwrap();
    let wih = w_ih.view().into_dimensionality::<Ix2>().unwrap();
    let whh = w_hh.view().into_dimensionality::<Ix2>().unwrap();
    let (b, t, d) = x3.dim();
    let h = whh.dim().0;

    let mut dx = Array3::<f64>::zeros((b, t, d));
    let mut dwih = Array2::<f64>::zeros((d, 4 * h));
    let mut dwhh = Array2::<f64>::zeros((h, 4 * h));
    let mut dbias = Array1::<f64>::zeros(4 * h);
    let mut dh_next = Array2::<f64>::zeros((b, h));
    let mut dc_next = Array2::<f64>::zeros((b, h));

    for ti in (0..t).rev() {
        let gates = cache.gates.slice(s![ti, .., ..]);
        let cells = cache.cells.slice(s![ti, .., ..]);
        let mut d_pre = Array2::<f64>::zeros((b, 4 * h));
        for bi in 0..b {
            for hi in 0..h {
                let i = gates[(bi, hi)];
                let f = gates[(bi, h + hi)];
                let g = gates[(bi, 2 * h + hi)];
                let o = gates[(bi, 3 * h + hi)];
                let c = cells[(bi, hi)];
                let c_prev =
                    if ti == 0 { 0.0 } else { cache.cells[(ti - 1, bi, hi)] };
                let tc = c.tanh();
                let dh = g3[(bi, ti, hi)] + dh_next[(bi, hi)];
                let do_ = dh * tc;
                let dc = dc_next[(bi, hi)] + dh * o * (1.0 - tc * tc);
                let di = dc * g;
                let dg = dc * i;
                let df = dc * c_prev;
                dc_next[(bi, hi)] = dc * f;
                d_pre[(bi, hi)] = di * i * (1.0 - i);
                d_pre[(bi, h + hi)] = df * f * (1.0 - f);
                d_pre[(bi, 2 * h + hi)] = dg * (1.0 - g * g);
                d_pre[(bi, 3 * h + hi)] = do_ * o * (1.0 - o);
            }
        }
        let xt = x3.slice(s![.., ti, ..]);
        dwih += &xt.t().dot(&d_pre);
        if ti > 0 {
            let h_prev = cache.hidden.slice(s![ti - 1, .., ..]);
            dwhh += &h_prev.t().dot(&d_pre);
        }
        dbias += &d_pre.sum_axis(Axis(0));
        dx.slice_mut(s![.., ti, ..]).assign(&d_pre.dot(&wih.t()));
        dh_next = d_pre.dot(&whh.t());
    }
    (
        dx.into_dyn().into_shared(),
        dwih.into_dyn().into_shared(),
        dwhh.into_dyn().into_shared(),
        dbias.into_dyn().into_shared(),
    )
}

// ---------------------------------------------------------------------------
// layer norm over the last axis

pub struct LayerNormCache {
    pub xhat: ArrayD<f64>,
    pub rstd: ArrayD<f64>, // [..., 1]
}

pub fn layer_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
    want_cache: bool,
) -> (Tensor, Option<LayerNormCache>) {
    let d = *x.shape().last().expect("layer_norm needs >= 1 axis");
    let rows = x.len() / d;
    let x2 = x.view().into_shape_with_order((rows, d)).expect("contiguous");
    let g = gamma.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let bta = beta.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let mut out = Array2::<f64>::zeros((rows, d));
    let mut xhat = Array2::<f64>::zeros((rows, d));
    let mut rstd = Array2::<f64>::zeros((rows, 1));
    for r in 0..rows {
        let row = x2.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[(r, 0)] = rs;
        for c in 0..d {
            let xh = (row[c] - mean) * rs;
            xhat[(r, c)] = xh;
            out[(r, c)] = xh * g[c] + bta[c];
        }
    }
    let out = out.into_shape_with_order(x.shape().to_vec()).unwrap().into_shared();
    let cache = want_cache.then(|| LayerNormCache {
        xhat: xhat.into_dyn(),
        rstd: rstd.into_dyn(),
    });
    (out, cache)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    x_shape: &[usize],
    gamma: &Tensor,
    cache: &LayerNormCache,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = *x_shape.last().unwrap();
    let rows = grad_out.len() / d;
    let go = grad_out.view().into_shape_with_order((rows, d)).unwrap();
    let xhat = cache.xhat.view().into_dimensionality::<Ix2>().unwrap();
    let rstd = cache.rstd.view().into_dimensionality::<Ix2>().unwrap();
    let g = gamma.view().into_dimensionality::<ndarray::Ix1>().unwrap();

    let mut dx = Array2::<f64>::zeros((rows, d));
    let mut dgamma = Array1::<f64>::zeros(d);
    let mut dbeta = Array1::<f64>::zeros(d);
    for r in 0..rows {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for c in 0..d {
            let dy = go[(r, c)] * g[c];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat[(r, c)];
            dgamma[c] += go[(r, c)] * xhat[(r, c)];
            dbeta[c] += go[(r, c)];
        }
        let inv_d = 1.0 / d as f64;
        for c in 0..d {
            let dy = go[(r, c)] * g[c];
            dx[(r, c)] =
                rstd[(r, 0)] * (dy - inv_d * sum_dy - xhat[(r, c)] * inv_d * sum_dy_xhat);
        }
    }
    (
        dx.into_shape_with_order(x_shape.to_vec()).unwrap().into_shared(),
        dgamma.into_dyn().into_shared(),
        dbeta.into_dyn().into_shared(),
    )
}

// ---------------------------------------------------------------------------
// softmax over the last axis

pub fn softmax_last(x: &Tensor) -> Tensor {
    let d = *x.shape().last().expect("softmax needs >= 1 axis");
    let rows = x.len() / d;
    let x2 = x.view().into_shape_with_order((rows, d)).unwrap();
    let mut out = Array2::<f64>::zeros((rows, d));
    for r in 0..rows {
        let row = x2.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..d {
            let e = (row[c] - max).exp();
            out[(r, c)] = e;
            sum += e;
        }
        for c in 0..d {
            out[(r, c)] /= sum;
        }
    }
    out.into_shape_with_order(x.shape().to_vec()).unwrap().into_shared()
}

pub fn softmax_last_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let d = *y.shape().last().unwrap();
    let rows = y.len() / d;
    let y2 = y.view().into_shape_with_order((rows, d)).unwrap();
    let g2 = grad_out.view().into_shape_with_order((rows, d)).unwrap();
    let mut dx = Array2::<f64>::zeros((rows, d));
    for r in 0..rows {
        let dot: f64 = (0..d).map(|c| g2[(r, c)] * y2[(r, c)]).sum();
        for c in 0..d {
            dx[(r, c)] = y2[(r, c)] * (g2[(r, c)] - dot);
        }
    }
    dx.into_shape_with_order(y.shape().to_vec()).unwrap().into_shared()
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation)

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

// ---------------------------------------------------------------------------
// spectral ops on frame matrices

/// `[F, n]` real frames -> `[F, n/2+1, 2]` packed (re, im) bins.
pub fn rfft_frames(x: &Tensor) -> Tensor {
    let x2 = x.view().into_dimensionality::<Ix2>().expect("rfft input must be [F, n]");
    let (frames, n) = x2.dim();
    let bins = n / 2 + 1;
    let plan = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = Array3::<f64>::zeros((frames, bins, 2));
    let mut buf = vec![Complex64::default(); n];
    for f in 0..frames {
        for i in 0..n {
            buf[i] = Complex64::new(x2[(f, i)], 0.0);
        }
        plan.process(&mut buf);
        for k in 0..bins {
            out[(f, k, 0)] = buf[k].re;
            out[(f, k, 1)] = buf[k].im;
        }
    }
    out.into_dyn().into_shared()
}

/// Adjoint of [`rfft_frames`].
pub fn rfft_frames_backward(grad_out: &Tensor, n: usize) -> Tensor {
    let g = grad_out.view().into_dimensionality::<Ix3>().unwrap();
    let (frames, bins, _) = g.dim();
    let plan = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut dx = Array2::<f64>::zeros((frames, n));
    let mut buf = vec![Complex64::default(); n];
    for f in 0..frames {
        buf.fill(Complex64::default());
        for k in 0..bins {
            buf[k] = Complex64::new(g[(f, k, 0)], g[(f, k, 1)]);
        }
        plan.process(&mut buf);
        for i in 0..n {
            dx[(f, i)] = buf[i].re;
        }
    }
    dx.into_dyn().into_shared()
}

/// `[F, n/2+1, 2]` packed bins -> `[F, n]` real frames (hermitian inverse).
pub fn irfft_frames(x: &Tensor, n: usize) -> Tensor {
    let x3 = x.view().into_dimensionality::<Ix3>().expect("irfft input must be [F, bins, 2]");
    let (frames, bins, _) = x3.dim();
    assert_eq!(bins, n / 2 + 1, "irfft bin count mismatch");
    let plan = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = Array2::<f64>::zeros((frames, n));
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for f in 0..frames {
        for k in 0..bins {
            buf[k] = Complex64::new(x3[(f, k, 0)], x3[(f, k, 1)]);
        }
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        plan.process(&mut buf);
        for i in 0..n {
            out[(f, i)] = buf[i].re * scale;
        }
    }
    out.into_dyn().into_shared()
}

/// Adjoint of [`irfft_frames`].
pub fn irfft_frames_backward(grad_out: &Tensor, n: usize) -> Tensor {
    let g = grad_out.view().into_dimensionality::<Ix2>().unwrap();
    let (frames, _) = g.dim();
    let bins = n / 2 + 1;
    let plan = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut dx = Array3::<f64>::zeros((frames, bins, 2));
    let mut buf = vec![Complex64::default(); n];
    let inv_n = 1.0 / n as f64;
    for f in 0..frames {
        for i in 0..n {
            buf[i] = Complex64::new(g[(f, i)], 0.0);
        }
        plan.process(&mut buf);
        for k in 0..bins {
            let double = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            dx[(f, k, 0)] = double * inv_n * buf[k].re;
            dx[(f, k, 1)] = if double == 1.0 { 0.0 } else { 2.0 * inv_n * buf[k].im };
        }
    }
    dx.into_dyn().into_shared()
}

/// Slices a padded signal `[T]` into `[F, fft]` frames at the given hop.
pub fn frame_signal(x: &Tensor, fft: usize, hop: usize, frames: usize) -> Tensor {
    let x1 = x.view().into_dimensionality::<ndarray::Ix1>().expect("frame input must be 1-d");
    assert!(
        (frames - 1) * hop + fft <= x1.len(),
        "signal too short for {frames} frames"
    );
    let mut out = Array2::<f64>::zeros((frames, fft));
    for f in 0..frames {
        for i in 0..fft {
            out[(f, i)] = x1[f * hop + i];
        }
    }
    out.into_dyn().into_shared()
}

pub fn frame_signal_backward(grad_out: &Tensor, len: usize, hop: usize) -> Tensor {
    let g = grad_out.view().into_dimensionality::<Ix2>().unwrap();
    let (frames, fft) = g.dim();
    let mut dx = Array1::<f64>::zeros(len);
    for f in 0..frames {
        for i in 0..fft {
            dx[f * hop + i] += g[(f, i)];
        }
    }
    dx.into_dyn().into_shared()
}

/// Overlap-adds `[F, fft]` frames at the given hop into `[(F-1)*hop + fft]`.
pub fn overlap_add(x: &Tensor, hop: usize) -> Tensor {
    let x2 = x.view().into_dimensionality::<Ix2>().unwrap();
    let (frames, fft) = x2.dim();
    let len = (frames - 1) * hop + fft;
    let mut out = Array1::<f64>::zeros(len);
    for f in 0..frames {
        for i in 0..fft {
            out[f * hop + i] += x2[(f, i)];
        }
    }
    out.into_dyn().into_shared()
}

pub fn overlap_add_backward(grad_out: &Tensor, frames: usize, fft: usize, hop: usize) -> Tensor {
    let g = grad_out.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let mut dx = Array2::<f64>::zeros((frames, fft));
    for f in 0..frames {
        for i in 0..fft {
            dx[(f, i)] = g[f * hop + i];
        }
    }
    dx.into_dyn().into_shared()
}

// ---------------------------------------------------------------------------
// shape manipulation (all outputs materialized in standard layout)

fn standard(x: ndarray::ArrayViewD<f64>) -> ArrayD<f64> {
    x.as_standard_layout().into_owned()
}

pub fn reshape_t(x: &Tensor, shape: &[usize]) -> Tensor {
    standard(x.view())
        .into_shape_with_order(IxDyn(shape))
        .expect("reshape element count mismatch")
        .into_shared()
}

pub fn permute_t(x: &Tensor, axes: &[usize]) -> Tensor {
    standard(x.view().permuted_axes(IxDyn(axes))).into_shared()
}

pub fn slice_axis_t(x: &Tensor, axis: usize, start: usize, end: usize) -> Tensor {
    standard(x.slice_axis(Axis(axis), ndarray::Slice::from(start..end))).into_shared()
}

pub fn concat_t(axis: usize, parts: &[Tensor]) -> Tensor {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let out = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
    standard(out.view()).into_shared()
}

pub fn flip_t(x: &Tensor, axis: usize) -> Tensor {
    let mut v = x.view();
    v.invert_axis(Axis(axis));
    standard(v).into_shared()
}

pub fn pad_axis_t(x: &Tensor, axis: usize, before: usize, after: usize) -> Tensor {
    let mut shape = x.shape().to_vec();
    shape[axis] += before + after;
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    out.slice_axis_mut(Axis(axis), ndarray::Slice::from(before..before + x.shape()[axis]))
        .assign(&x.view());
    out.into_shared()
}

/// Reflection padding of a 1-d signal (no edge repetition).
pub fn reflect_pad1d(x: &Tensor, left: usize, right: usize) -> Tensor {
    let x1 = x.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let n = x1.len();
    let mut out = Array1::<f64>::zeros(left + n + right);
    for i in 0..left + n + right {
        out[i] = x1[gpse_dsp::mirror_index(i as isize - left as isize, n)];
    }
    out.into_dyn().into_shared()
}

pub fn reflect_pad1d_backward(grad_out: &Tensor, n: usize, left: usize) -> Tensor {
    let g = grad_out.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    let mut dx = Array1::<f64>::zeros(n);
    for i in 0..g.len() {
        dx[gpse_dsp::mirror_index(i as isize - left as isize, n)] += g[i];
    }
    dx.into_dyn().into_shared()
}
