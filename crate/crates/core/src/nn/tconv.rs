use rand::Rng;

use super::{xavier_uniform, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor4};

/// Weights `(C_in, C_out, 2, 2)` and bias `(C_out)` of a stride-2 transposed
/// convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TransposedConvParams<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> TransposedConvParams<T> {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        Self {
            weight: Param::zeros(&[c_in, c_out, 2, 2]),
            bias: Param::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[0]
    }
    pub fn c_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn xavier_init(&mut self, rng: &mut impl Rng) {
        let (fan_in, fan_out) = (self.c_out() * 4, self.c_in() * 4);
        xavier_uniform(&mut self.weight, fan_in, fan_out, rng);
        self.bias.value.fill(T::zero());
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

fn check<T: Real>(x: &Tensor4<T>, p: &TransposedConvParams<T>) -> Result<()> {
    if x.channels() != p.c_in() {
        return Err(Error::Shape(format!(
            "transposed conv expects {} channels, got {}",
            p.c_in(),
            x.channels()
        )));
    }
    Ok(())
}

/// Kernel 2, stride 2, no padding: `(N, C_in, H, W) -> (N, C_out, 2H, 2W)`.
/// `out[o, 2i+a, 2j+b] = bias[o] + Σ_c x[c, i, j] · w[c, o, a, b]`.
pub fn transposed_conv2x2_forward<T: Real>(
    x: &Tensor4<T>,
    p: &TransposedConvParams<T>,
) -> Result<Tensor4<T>> {
    check(x, p)?;
    let [n, c_in, h, w] = x.shape();
    let c_out = p.c_out();
    let plane = h * w;
    let mut out = Tensor4::zeros([n, c_out, 2 * h, 2 * w]);
    let mut cols = vec![T::zero(); c_out * 4 * plane];
    for i in 0..n {
        gemm(true, false, c_out * 4, c_in, plane, &p.weight.value, x.sample(i), &mut cols, false);
        let y = out.sample_mut(i);
        for o in 0..c_out {
            let bias = p.bias.value[o];
            for ab in 0..4 {
                let (a, b) = (ab / 2, ab % 2);
                let src = &cols[(o * 4 + ab) * plane..(o * 4 + ab + 1) * plane];
                for r in 0..h {
                    let row = (o * 2 * h + 2 * r + a) * 2 * w;
                    for c in 0..w {
                        y[row + 2 * c + b] = src[r * w + c] + bias;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn transposed_conv2x2_backward<T: Real>(
    x: &Tensor4<T>,
    p: &TransposedConvParams<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>)> {
    check(x, p)?;
    let [n, c_in, h, w] = x.shape();
    let c_out = p.c_out();
    if grad_out.shape() != [n, c_out, 2 * h, 2 * w] {
        return Err(Error::Shape("transposed conv gradient shape mismatch".into()));
    }
    let plane = h * w;
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = vec![T::zero(); p.weight.len()];
    let mut db = vec![T::zero(); c_out];
    let mut dcols = vec![T::zero(); c_out * 4 * plane];
    for i in 0..n {
        let dy = grad_out.sample(i);
        for o in 0..c_out {
            let chan = &dy[o * 4 * plane..(o + 1) * 4 * plane];
            db[o] += chan.iter().copied().sum::<T>();
            for ab in 0..4 {
                let (a, b) = (ab / 2, ab % 2);
                let dst = &mut dcols[(o * 4 + ab) * plane..(o * 4 + ab + 1) * plane];
                for r in 0..h {
                    let row = (2 * r + a) * 2 * w;
                    for c in 0..w {
                        dst[r * w + c] = chan[row + 2 * c + b];
                    }
                }
            }
        }
        gemm(false, false, c_in, c_out * 4, plane, &p.weight.value, &dcols, dx.sample_mut(i), false);
        gemm(false, true, c_in, plane, c_out * 4, x.sample(i), &dcols, &mut dw, true);
    }
    Ok((dx, dw, db))
}

#[derive(Clone, Debug)]
pub struct TransposedConv2x2<T> {
    pub params: TransposedConvParams<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Real> TransposedConv2x2<T> {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        Self {
            params: TransposedConvParams::new(c_in, c_out),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = transposed_conv2x2_forward(x, &self.params)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Shape("transposed conv backward before forward".into()))?;
        let (dx, dw, db) = transposed_conv2x2_backward(&x, &self.params, grad_out)?;
        self.params.weight.accumulate(&dw);
        self.params.bias.accumulate(&db);
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_util::{check_grad, rand_tensor, seeded};

    #[test]
    fn single_pixel_expands_to_kernel() {
        let x = Tensor4::<f32>::filled([1, 1, 1, 1], 1.0);
        let mut p = TransposedConvParams::new(1, 1);
        p.weight.value = vec![1.0, 2.0, 3.0, 4.0];
        let y = transposed_conv2x2_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn doubles_spatial_size() {
        let x = Tensor4::<f32>::zeros([1, 8, 30, 30]);
        let p = TransposedConvParams::new(8, 4);
        assert_eq!(transposed_conv2x2_forward(&x, &p).unwrap().shape(), [1, 4, 60, 60]);
        let bad = TransposedConvParams::<f32>::new(3, 4);
        assert!(transposed_conv2x2_forward(&x, &bad).is_err());
    }

    /// Stride-2 2×2 convolution written directly from its definition.
    fn strided_conv(y: &Tensor4<f64>, w: &[f64], c_in: usize) -> Tensor4<f64> {
        let [n, c_out, h2, w2] = y.shape();
        Tensor4::from_fn([n, c_in, h2 / 2, w2 / 2], |[i, c, r, col]| {
            let mut s = 0.0;
            for o in 0..c_out {
                for a in 0..2 {
                    for b in 0..2 {
                        s += w[((c * c_out + o) * 2 + a) * 2 + b] * y.get(i, o, 2 * r + a, 2 * col + b);
                    }
                }
            }
            s
        })
    }

    #[test]
    fn adjoint_of_strided_convolution() {
        let mut rng = seeded(21);
        let mut p = TransposedConvParams::<f64>::new(3, 2);
        p.weight.value = rand_tensor::<f64>([3, 2, 2, 2], &mut rng).into_vec();
        let x = rand_tensor::<f64>([2, 3, 4, 5], &mut rng);
        let y = rand_tensor::<f64>([2, 2, 8, 10], &mut rng);
        let lhs = transposed_conv2x2_forward(&x, &p).unwrap().dot(&y);
        let rhs = x.dot(&strided_conv(&y, &p.weight.value, 3));
        assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(1.0));
    }

    fn grad_check<T: Real>(tol: f64, h: f64) {
        let mut rng = seeded(22);
        let mut p = TransposedConvParams::<T>::new(3, 2);
        p.weight.value = rand_tensor::<T>([3, 2, 2, 2], &mut rng).into_vec();
        p.bias.value = rand_tensor::<T>([1, 1, 1, 2], &mut rng).into_vec();
        let x = rand_tensor::<T>([2, 3, 3, 4], &mut rng);
        let r = rand_tensor::<T>([2, 2, 6, 8], &mut rng);
        let (dx, dw, db) = transposed_conv2x2_backward(&x, &p, &r).unwrap();
        let loss = |x: &Tensor4<T>, p: &TransposedConvParams<T>| {
            transposed_conv2x2_forward(x, p).unwrap().dot(&r)
        };
        check_grad(x.as_slice(), dx.as_slice(), h, tol, |i, d| {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += T::lit(d);
            loss(&xp, &p)
        });
        check_grad(&p.weight.value, &dw, h, tol, |i, d| {
            let mut pp = p.clone();
            pp.weight.value[i] += T::lit(d);
            loss(&x, &pp)
        });
        check_grad(&p.bias.value, &db, h, tol, |i, d| {
            let mut pp = p.clone();
            pp.bias.value[i] += T::lit(d);
            loss(&x, &pp)
        });
    }

    #[test]
    fn gradients_match_finite_differences() {
        grad_check::<f64>(1e-6, 1e-5);
        grad_check::<f32>(1e-3, 1e-2);
    }
}
