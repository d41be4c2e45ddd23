use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape("relu gradient shape mismatch".into()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::new(x.shape(), data)
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    input: Option<Tensor4<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        let y = relu_forward(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Shape("relu backward before forward".into()))?;
        relu_backward(&x, grad_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_util::{check_grad, rand_tensor, seeded};

    #[test]
    fn forward_and_subgradient() {
        let x = Tensor4::<f32>::new([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor4::filled([1, 1, 1, 3], 1.0)).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradient_away_from_kink() {
        let mut rng = seeded(5);
        let x = rand_tensor::<f32>([2, 2, 4, 4], &mut rng)
            .map(|v| if v.abs() < 0.1 { v + 0.2f32.copysign(v) } else { v });
        let r = rand_tensor::<f32>(x.shape(), &mut rng);
        let g = relu_backward(&x, &r).unwrap();
        check_grad(x.as_slice(), g.as_slice(), 1e-2, 1e-4, |i, d| {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += d as f32;
            relu_forward(&xp).dot(&r)
        });
    }
}
