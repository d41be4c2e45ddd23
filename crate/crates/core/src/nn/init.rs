use rand::Rng;

use super::Param;
use crate::tensor::Real;

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `param` with `Uniform(-a, a)`, `a` the Xavier bound.
pub fn xavier_uniform<T: Real>(param: &mut Param<T>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let a = xavier_bound(fan_in, fan_out);
    for v in &mut param.value {
        *v = T::lit(rng.random_range(-a..a));
    }
}

/// Seeded Xavier initialization of a convolution (fans over the full kernel
/// receptive field, zero bias).
pub fn xavier_init<T: Real>(params: &mut super::ConvParams<T>, seed: u64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    params.xavier_init(&mut rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvParams;

    #[test]
    fn bound_for_3x3_4_to_8() {
        let a = xavier_bound(4 * 9, 8 * 9);
        assert!((a - (6.0f64 / 108.0).sqrt()).abs() < 1e-15);
        assert!((a - 0.2357).abs() < 1e-4);
        let mut p = ConvParams::<f32>::new(8, 4, 3, 3);
        xavier_init(&mut p, 1);
        assert!(p.weight.value.iter().all(|&w| (w as f64).abs() < a));
        assert!(p.bias.value.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let mut a = ConvParams::<f32>::new(8, 4, 3, 3);
        let mut b = ConvParams::<f32>::new(8, 4, 3, 3);
        xavier_init(&mut a, 5);
        xavier_init(&mut b, 5);
        assert_eq!(a, b);
        xavier_init(&mut b, 6);
        assert_ne!(a, b);
    }

    #[test]
    fn empirical_variance_matches_uniform() {
        // 10^5 weights: 625 out × 20 in × 2 × 4 kernel... use a plain param instead
        let mut p = Param::<f64>::zeros(&[100_000]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        use rand::SeedableRng;
        xavier_uniform(&mut p, 36, 72, &mut rng);
        let a = xavier_bound(36, 72);
        let n = p.len() as f64;
        let mean = p.value.iter().sum::<f64>() / n;
        let var = p.value.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let want = a * a / 3.0;
        assert!((var - want).abs() / want < 0.05, "{var} vs {want}");
    }
}
