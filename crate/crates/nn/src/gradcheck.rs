//! Central-finite-difference gradient verification used by the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::tensor::Tensor;

/// Compares `analytic` against central differences of `eval` at up to
/// `coords` sampled coordinates of `value`, returning the worst relative
/// error. Coordinates where both estimates are below 1e-9 are skipped.
pub fn check_gradient(
    value: &Tensor,
    analytic: &Tensor,
    mut eval: impl FnMut(&Tensor) -> f64,
    coords: usize,
    seed: u64,
) -> f64 {
    assert_eq!(value.shape(), analytic.shape(), "gradient shape mismatch");
    let n = value.len();
    assert!(n > 0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if n <= coords {
        (0..n).collect()
    } else {
        (0..coords).map(|_| rng.gen_range(0..n)).collect()
    };

    let flat: Vec<f64> = value.iter().copied().collect();
    let an: Vec<f64> = analytic.iter().copied().collect();
    let mut worst = 0.0f64;
    for &i in &picks {
        let h = 1e-5 * flat[i].abs().max(1.0);
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let shape = value.shape().to_vec();
        let f_plus = eval(&crate::tensor::from_vec(&shape, plus));
        let f_minus = eval(&crate::tensor::from_vec(&shape, minus));
        let fd = (f_plus - f_minus) / (2.0 * h);
        let denom = fd.abs().max(an[i].abs());
        if denom < 1e-9 {
            continue;
        }
        worst = worst.max((fd - an[i]).abs() / denom);
    }
    worst
}
