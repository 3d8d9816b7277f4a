use ndarray::{ArcArray, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Shared-ownership f64 tensor; clones are reference bumps.
pub type Tensor = ArcArray<f64, IxDyn>;

pub fn zeros(shape: &[usize]) -> Tensor {
    ArrayD::zeros(IxDyn(shape)).into_shared()
}

pub fn scalar(v: f64) -> Tensor {
    ArrayD::from_elem(IxDyn(&[]), v).into_shared()
}

pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
    ArrayD::from_shape_vec(IxDyn(shape), data)
        .expect("shape/data length mismatch")
        .into_shared()
}

pub fn scalar_value(t: &Tensor) -> f64 {
    debug_assert_eq!(t.len(), 1, "expected a scalar tensor");
    *t.iter().next().expect("empty tensor")
}

/// Uniform init in `[-limit, limit]` with `limit = sqrt(1 / fan_in)`.
pub fn uniform_init(rng: &mut ChaCha20Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let limit = (1.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    from_vec(shape, (0..n).map(|_| rng.gen_range(-limit..limit)).collect())
}

/// Sums `grad` down to `shape`, undoing numpy-style broadcasting.
pub fn reduce_to_shape(grad: &Tensor, shape: &[usize]) -> Tensor {
    if grad.shape() == shape {
        return grad.clone();
    }
    let mut g: ArrayD<f64> = grad.to_owned();
    // Collapse leading axes that were added by broadcasting.
    while g.ndim() > shape.len() {
        g = g.sum_axis(ndarray::Axis(0));
    }
    // Sum axes that were expanded from size 1.
    for (axis, (&have, &want)) in g.shape().to_vec().iter().zip(shape).enumerate() {
        if have != want {
            debug_assert_eq!(want, 1, "incompatible grad reduction");
            let summed = g.sum_axis(ndarray::Axis(axis));
            g = summed.insert_axis(ndarray::Axis(axis));
        }
    }
    g.into_shared()
}

/// Numpy-style broadcast result shape; panics on incompatible shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "cannot broadcast {a:?} with {b:?}"
        );
        out[i] = da.max(db);
    }
    out
}
