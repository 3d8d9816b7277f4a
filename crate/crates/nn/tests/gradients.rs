//! Finite-difference verification of every tape op and fused kernel, plus
//! parity checks between the tape and the plain evaluation path.

use gpse_nn::ctx::{Ctx, EvalCtx, GraphCtx};
use gpse_nn::gradcheck::check_gradient;
use gpse_nn::graph::Graph;
use gpse_nn::kernels::Conv1dSpec;
use gpse_nn::tensor::{from_vec, scalar_value, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn rand_pos(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    from_vec(shape, (0..n).map(|_| rng.gen_range(0.3..2.0)).collect())
}

/// Builds loss(x) on the tape, checks d loss/d x by central differences,
/// and asserts the eval path computes the same forward value.
fn run_check<FG, FE>(x0: &Tensor, graph_loss: FG, eval_loss: FE, tol: f64, label: &str)
where
    FG: Fn(&mut GraphCtx, gpse_nn::NodeId) -> gpse_nn::NodeId,
    FE: Fn(&mut EvalCtx, &Tensor) -> Tensor,
{
    // Analytic gradient from the tape.
    let mut g = Graph::new();
    let mut ctx = GraphCtx::new(&mut g);
    let x = ctx.graph.leaf(x0.clone(), true);
    let loss = graph_loss(&mut ctx, x);
    let loss_value = scalar_value(g.value(loss));
    let grads = g.backward(loss);
    let dx = grads.get(x).expect("input gradient missing").clone();

    // Eval path must agree on the forward value.
    let mut e = EvalCtx::new();
    let ev = eval_loss(&mut e, x0);
    assert!(
        (scalar_value(&ev) - loss_value).abs() <= 1e-12 * loss_value.abs().max(1.0),
        "{label}: eval/graph forward mismatch: {} vs {}",
        scalar_value(&ev),
        loss_value
    );

    // Finite differences.
    let err = check_gradient(
        x0,
        &dx,
        |perturbed| {
            let mut e = EvalCtx::new();
            scalar_value(&eval_loss(&mut e, perturbed))
        },
        48,
        7,
    );
    assert!(err < tol, "{label}: grad check failed, max rel err {err}");
}

macro_rules! grad_case {
    ($name:ident, $x:expr, $tol:expr, |$c:ident, $t:ident| $body:expr) => {
        #[test]
        fn $name() {
            let x0 = $x;
            run_check(
                &x0,
                |$c: &mut GraphCtx, $t: gpse_nn::NodeId| $body,
                |$c: &mut EvalCtx, xr: &Tensor| {
                    let $t = xr.clone();
                    $body
                },
                $tol,
                stringify!($name),
            );
        }
    };
}

// A scalar loss that exercises all coordinates with uneven weights.
fn weighted_mean<C: Ctx>(c: &mut C, t: &C::T) -> C::T {
    let shape = c.shape(t);
    let n: usize = shape.iter().product();
    let w = from_vec(&shape, (0..n).map(|i| 0.3 + 0.01 * i as f64).collect());
    let wn = c.constant(w);
    let prod = c.mul(t, &wn);
    c.mean_all(&prod)
}

grad_case!(grad_exp, rand_t(&[3, 4], 1), 1e-6, |c, t| {
    let y = c.exp(&t);
    weighted_mean(c, &y)
});

grad_case!(grad_ln, rand_pos(&[3, 4], 2), 1e-6, |c, t| {
    let y = c.ln(&t);
    weighted_mean(c, &y)
});

grad_case!(grad_sqrt, rand_pos(&[5], 3), 1e-6, |c, t| {
    let y = c.sqrt(&t);
    weighted_mean(c, &y)
});

grad_case!(grad_tanh_sigmoid_gelu, rand_t(&[4, 4], 4), 1e-6, |c, t| {
    let a = c.tanh(&t);
    let b = c.sigmoid(&a);
    let d = c.gelu(&b);
    weighted_mean(c, &d)
});

grad_case!(grad_trig_atan2, rand_pos(&[3, 3], 5), 1e-6, |c, t| {
    let s = c.sin(&t);
    let co = c.cos(&t);
    let a = c.atan2(&s, &co);
    weighted_mean(c, &a)
});

grad_case!(grad_leaky_relu, rand_t(&[40], 6), 1e-5, |c, t| {
    let y = c.leaky_relu(&t, 0.1);
    weighted_mean(c, &y)
});

grad_case!(grad_square_abs, rand_t(&[4, 5], 7), 1e-5, |c, t| {
    let y = c.square(&t);
    let z = c.abs(&y);
    weighted_mean(c, &z)
});

grad_case!(grad_broadcast_mul_div, rand_pos(&[3, 4], 8), 1e-6, |c, t| {
    let row = c.constant(rand_pos(&[4], 9));
    let col = c.constant(rand_pos(&[3, 1], 10));
    let a = c.mul(&t, &row);
    let b = c.div(&a, &col);
    weighted_mean(c, &b)
});

grad_case!(grad_matmul, rand_t(&[4, 6], 11), 1e-6, |c, t| {
    let w = c.constant(rand_t(&[6, 3], 12));
    let y = c.matmul(&t, &w);
    weighted_mean(c, &y)
});

grad_case!(grad_bmm, rand_t(&[2, 3, 4], 13), 1e-6, |c, t| {
    let w = c.constant(rand_t(&[2, 4, 5], 14));
    let y = c.bmm(&t, &w);
    weighted_mean(c, &y)
});

grad_case!(grad_shape_ops, rand_t(&[2, 3, 4], 15), 1e-6, |c, t| {
    let r = c.reshape(&t, &[6, 4]);
    let p = c.permute(&r, &[1, 0]);
    let s = c.slice_axis(&p, 0, 1, 3);
    let f = c.flip(&s, 1);
    let padded = c.pad_axis(&f, 0, 1, 2);
    let cc = c.concat(0, &[padded.clone(), padded]);
    weighted_mean(c, &cc)
});

grad_case!(grad_softmax, rand_t(&[3, 5], 16), 1e-6, |c, t| {
    let y = c.softmax_last(&t);
    let w = c.constant(rand_t(&[3, 5], 17));
    let z = c.mul(&y, &w);
    c.sum_all(&z)
});

grad_case!(grad_clamp, rand_t(&[30], 18), 1e-5, |c, t| {
    let y = c.clamp(&t, -0.5, 0.5);
    weighted_mean(c, &y)
});

grad_case!(grad_conv1d, rand_t(&[2, 3, 12], 19), 1e-6, |c, t| {
    let w = c.constant(rand_t(&[4, 3, 5], 20));
    let b = c.constant(rand_t(&[4], 21));
    let y = c.conv1d(&t, &w, Some(&b), Conv1dSpec { stride: 2, pad_left: 2, pad_right: 1, groups: 1 });
    weighted_mean(c, &y)
});

grad_case!(grad_conv1d_grouped, rand_t(&[1, 4, 10], 22), 1e-6, |c, t| {
    let w = c.constant(rand_t(&[4, 1, 3], 23));
    let y = c.conv1d(&t, &w, None, Conv1dSpec { stride: 1, pad_left: 1, pad_right: 1, groups: 4 });
    weighted_mean(c, &y)
});

grad_case!(grad_lstm_input, rand_t(&[2, 6, 3], 24), 1e-5, |c, t| {
    let wih = c.constant(rand_t(&[3, 16], 25));
    let whh = c.constant(rand_t(&[4, 16], 26));
    let b = c.constant(rand_t(&[16], 27));
    let y = c.lstm(&t, &wih, &whh, &b);
    weighted_mean(c, &y)
});

grad_case!(grad_layer_norm_input, rand_t(&[3, 6], 28), 1e-5, |c, t| {
    let gamma = c.constant(rand_pos(&[6], 29));
    let beta = c.constant(rand_t(&[6], 30));
    let y = c.layer_norm(&t, &gamma, &beta, 1e-5);
    weighted_mean(c, &y)
});

grad_case!(grad_rfft_irfft, rand_t(&[3, 16], 31), 1e-6, |c, t| {
    let bins = c.rfft_frames(&t);
    let back = c.irfft_frames(&bins, 16);
    let w = c.constant(rand_t(&[3, 16], 32));
    let z = c.mul(&back, &w);
    c.sum_all(&z)
});

grad_case!(grad_irfft_alone, rand_t(&[2, 9, 2], 33), 1e-6, |c, t| {
    let back = c.irfft_frames(&t, 16);
    weighted_mean(c, &back)
});

grad_case!(grad_frame_ola_reflect, rand_t(&[40], 34), 1e-6, |c, t| {
    let padded = c.reflect_pad1d(&t, 8, 8);
    let framed = c.frame_signal(&padded, 16, 4, 10);
    let ola = c.overlap_add(&framed, 4);
    weighted_mean(c, &ola)
});

#[test]
fn lstm_weight_gradients() {
    // Gradient wrt LSTM weights, not just input.
    let x0 = rand_t(&[2, 5, 3], 40);
    let wih0 = rand_t(&[3, 16], 41);
    let eval = |wih: &Tensor| -> f64 {
        let mut c = EvalCtx::new();
        let whh = rand_t(&[4, 16], 42);
        let b = rand_t(&[16], 43);
        let y = c.lstm(&x0, wih, &whh, &b);
        let w = c.constant(rand_t(&[2, 5, 4], 44));
        let z = c.mul(&y, &w);
        scalar_value(&c.sum_all(&z))
    };
    let mut g = Graph::new();
    let mut ctx = GraphCtx::new(&mut g);
    let x = ctx.graph.leaf(x0.clone(), false);
    let wih = ctx.graph.leaf(wih0.clone(), true);
    let whh = ctx.graph.leaf(rand_t(&[4, 16], 42), true);
    let b = ctx.graph.leaf(rand_t(&[16], 43), true);
    let y = ctx.lstm(&x, &wih, &whh, &b);
    let w = ctx.constant(rand_t(&[2, 5, 4], 44));
    let z = ctx.mul(&y, &w);
    let loss = ctx.sum_all(&z);
    let grads = g.backward(loss);
    let err = check_gradient(&wih0, grads.get(wih).unwrap(), eval, 48, 45);
    assert!(err < 1e-5, "lstm w_ih grad err {err}");

    // And the recurrent weights.
    let whh0 = rand_t(&[4, 16], 42);
    let eval_whh = |whh: &Tensor| -> f64 {
        let mut c = EvalCtx::new();
        let b = rand_t(&[16], 43);
        let y = c.lstm(&x0, &wih0, whh, &b);
        let w = c.constant(rand_t(&[2, 5, 4], 44));
        let z = c.mul(&y, &w);
        scalar_value(&c.sum_all(&z))
    };
    let err = check_gradient(&whh0, grads.get(whh).unwrap(), eval_whh, 48, 46);
    assert!(err < 1e-5, "lstm w_hh grad err {err}");
}

#[test]
fn layer_norm_param_gradients() {
    let x0 = rand_t(&[4, 6], 50);
    let gamma0 = rand_pos(&[6], 51);
    let beta0 = rand_t(&[6], 52);
    let mut g = Graph::new();
    let mut ctx = GraphCtx::new(&mut g);
    let x = ctx.graph.leaf(x0.clone(), false);
    let gamma = ctx.graph.leaf(gamma0.clone(), true);
    let beta = ctx.graph.leaf(beta0.clone(), true);
    let y = ctx.layer_norm(&x, &gamma, &beta, 1e-5);
    let w = ctx.constant(rand_t(&[4, 6], 53));
    let z = ctx.mul(&y, &w);
    let loss = ctx.sum_all(&z);
    let grads = g.backward(loss);

    let eval_gamma = |gm: &Tensor| -> f64 {
        let mut c = EvalCtx::new();
        let y = c.layer_norm(&x0, gm, &beta0, 1e-5);
        let w = c.constant(rand_t(&[4, 6], 53));
        let z = c.mul(&y, &w);
        scalar_value(&c.sum_all(&z))
    };
    let err = check_gradient(&gamma0, grads.get(gamma).unwrap(), eval_gamma, 48, 54);
    assert!(err < 1e-5, "layer_norm gamma grad err {err}");
}

#[test]
fn conv1d_weight_and_bias_gradients() {
    let x0 = rand_t(&[2, 3, 10], 60);
    let w0 = rand_t(&[5, 3, 3], 61);
    let b0 = rand_t(&[5], 62);
    let spec = || Conv1dSpec { stride: 1, pad_left: 1, pad_right: 1, groups: 1 };
    let mut g = Graph::new();
    let mut ctx = GraphCtx::new(&mut g);
    let x = ctx.graph.leaf(x0.clone(), false);
    let w = ctx.graph.leaf(w0.clone(), true);
    let b = ctx.graph.leaf(b0.clone(), true);
    let y = ctx.conv1d(&x, &w, Some(&b), spec());
    let loss = ctx.mean_all(&y);
    let grads = g.backward(loss);

    let eval_w = |wt: &Tensor| -> f64 {
        let mut c = EvalCtx::new();
        let y = c.conv1d(&x0, wt, Some(&b0), spec());
        scalar_value(&c.mean_all(&y))
    };
    let err = check_gradient(&w0, grads.get(w).unwrap(), eval_w, 45, 63);
    assert!(err < 1e-6, "conv w grad err {err}");

    let eval_b = |bt: &Tensor| -> f64 {
        let mut c = EvalCtx::new();
        let y = c.conv1d(&x0, &w0, Some(bt), spec());
        scalar_value(&c.mean_all(&y))
    };
    let err = check_gradient(&b0, grads.get(b).unwrap(), eval_b, 5, 64);
    assert!(err < 1e-6, "conv b grad err {err}");
}

#[test]
fn frozen_params_accumulate_no_gradient() {
    let mut g = Graph::new();
    let mut ctx = GraphCtx::frozen(&mut g);
    let p = gpse_nn::Param::new("frozen.w", rand_t(&[3, 3], 70));
    let x = ctx.param(&p);
    let y = ctx.square(&x);
    let loss = ctx.sum_all(&y);
    assert!(ctx.binding("frozen.w").is_none());
    let grads = g.backward(loss);
    assert!(grads.get(x).is_none(), "frozen param must have no gradient");
}

#[test]
fn detach_cuts_the_gradient_path() {
    let mut g = Graph::new();
    let mut ctx = GraphCtx::new(&mut g);
    let x = ctx.graph.leaf(rand_t(&[4], 71), true);
    let y = ctx.square(&x);
    let stopped = ctx.detach(&y);
    let z = ctx.square(&stopped);
    let loss = ctx.sum_all(&z);
    let grads = g.backward(loss);
    assert!(grads.get(x).is_none());
}
