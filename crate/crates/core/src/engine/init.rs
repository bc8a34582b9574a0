//! Parameter initialization.

use rand::Rng as _;

use super::{Scalar, Tensor};
use crate::rng::Rng;

/// Kaiming-uniform (fan-in, ReLU gain): `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn within_bound_and_seeded() {
        let a: Tensor<f64> = kaiming_uniform(vec![8, 3, 3, 3], 27, &mut seeded(1));
        let b: Tensor<f64> = kaiming_uniform(vec![8, 3, 3, 3], 27, &mut seeded(1));
        assert_eq!(a, b);
        let bound = (6.0f64 / 27.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }
}
