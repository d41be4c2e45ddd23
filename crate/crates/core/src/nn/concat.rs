use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..na {
        data.extend_from_slice(a.sample(i));
        data.extend_from_slice(b.sample(i));
    }
    Tensor4::new([na, ca + cb, ha, wa], data)
}

/// Splits a concatenated gradient back into the first `channels_a` channels
/// and the rest.
pub fn concat_backward<T: Real>(
    grad: &Tensor4<T>,
    channels_a: usize,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let [n, c, h, w] = grad.shape();
    if channels_a > c {
        return Err(Error::Shape("concat split beyond channel count".into()));
    }
    let split = channels_a * h * w;
    let mut ga = Vec::with_capacity(n * split);
    let mut gb = Vec::with_capacity(grad.len() - n * split);
    for i in 0..n {
        let s = grad.sample(i);
        ga.extend_from_slice(&s[..split]);
        gb.extend_from_slice(&s[split..]);
    }
    Ok((
        Tensor4::new([n, channels_a, h, w], ga)?,
        Tensor4::new([n, c - channels_a, h, w], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_util::{check_grad, rand_tensor, seeded};

    #[test]
    fn shapes_and_order() {
        let a = Tensor4::<f32>::filled([1, 8, 16, 16], 1.0);
        let b = Tensor4::<f32>::filled([1, 8, 16, 16], 2.0);
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), [1, 16, 16, 16]);
        assert_eq!(y.get(0, 7, 0, 0), 1.0);
        assert_eq!(y.get(0, 8, 0, 0), 2.0);
        let bad = Tensor4::<f32>::zeros([1, 8, 15, 16]);
        assert!(matches!(concat_channels(&a, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_of_ones_splits() {
        let g = Tensor4::<f32>::filled([2, 5, 3, 3], 1.0);
        let (ga, gb) = concat_backward(&g, 2).unwrap();
        assert_eq!(ga, Tensor4::filled([2, 2, 3, 3], 1.0));
        assert_eq!(gb, Tensor4::filled([2, 3, 3, 3], 1.0));
    }

    #[test]
    fn gradient_check() {
        let mut rng = seeded(31);
        let a = rand_tensor::<f32>([2, 2, 3, 3], &mut rng);
        let b = rand_tensor::<f32>([2, 3, 3, 3], &mut rng);
        let r = rand_tensor::<f32>([2, 5, 3, 3], &mut rng);
        let (ga, gb) = concat_backward(&r, 2).unwrap();
        check_grad(a.as_slice(), ga.as_slice(), 1e-2, 1e-3, |i, d| {
            let mut ap = a.clone();
            ap.as_mut_slice()[i] += d as f32;
            concat_channels(&ap, &b).unwrap().dot(&r)
        });
        check_grad(b.as_slice(), gb.as_slice(), 1e-2, 1e-3, |i, d| {
            let mut bp = b.clone();
            bp.as_mut_slice()[i] += d as f32;
            concat_channels(&a, &bp).unwrap().dot(&r)
        });
    }
}
