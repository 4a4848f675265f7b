use rand::Rng;

use crate::scalar::Float;
use crate::tensor::Tensor;

/// `(fan_in, fan_out)` of a weight. Convolution weights `[out, in/groups, kh, kw]`
/// use per-group channel counts on both sides.
pub fn fans(shape: &[usize], groups: usize) -> (usize, usize) {
    let groups = groups.max(1);
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp] => (*inp, *out / groups),
        [out, inp, rest @ ..] => {
            let field: usize = rest.iter().product();
            (inp * field, out / groups * field)
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

/// Glorot (Xavier) uniform initialization.
pub fn glorot_uniform<T: Float>(shape: &[usize], groups: usize, rng: &mut impl Rng) -> Tensor<T> {
    let (fi, fo) = fans(shape, groups);
    let bound = glorot_bound(fi, fo);
    Tensor::from_fn(shape, |_| T::from_f64c(rng.random_range(-bound..=bound)))
}
