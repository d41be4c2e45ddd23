use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

/// Scalar loss and its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grad: Tensor4<T>,
}

/// Per-pixel softmax over the channel axis.
pub fn softmax<T: Real>(logits: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = logits.shape();
    let plane = h * w;
    let mut out = Tensor4::zeros(logits.shape());
    let src = logits.as_slice();
    let dst = out.as_mut_slice();
    let mut row = vec![0.0f64; c];
    for i in 0..n {
        for px in 0..plane {
            let at = |k: usize| (i * c + k) * plane + px;
            let max = (0..c).map(|k| src[at(k)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (k, r) in row.iter_mut().enumerate() {
                *r = (src[at(k)].as_f64() - max).exp();
                z += *r;
            }
            for (k, r) in row.iter().enumerate() {
                dst[at(k)] = T::lit(r / z);
            }
        }
    }
    out
}

/// Class-weighted cross-entropy, reduced as `Σ w[t]·(−log p_t) / Σ w[t]`.
///
/// `targets` holds one class index per pixel in `(n, h, w)` order.
pub fn softmax_weighted_ce<T: Real>(
    logits: &Tensor4<T>,
    targets: &[u8],
    class_weights: &[f64],
) -> Result<LossOutput<T>> {
    let [n, c, h, w] = logits.shape();
    let plane = h * w;
    if class_weights.len() != c {
        return Err(Error::Shape(format!(
            "{} class weights for {c} classes",
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Config("class weights must be positive".into()));
    }
    if targets.len() != n * plane {
        return Err(Error::Shape(format!(
            "{} targets for {} pixels",
            targets.len(),
            n * plane
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= c) {
        return Err(Error::Label(format!("target class {t} outside 0..{c}")));
    }
    let total_w: f64 = targets.iter().map(|&t| class_weights[t as usize]).sum();
    let src = logits.as_slice();
    let mut grad = Tensor4::zeros(logits.shape());
    let dst = grad.as_mut_slice();
    let mut row = vec![0.0f64; c];
    let mut loss = 0.0;
    for i in 0..n {
        for px in 0..plane {
            let at = |k: usize| (i * c + k) * plane + px;
            let t = targets[i * plane + px] as usize;
            let wt = class_weights[t];
            let max = (0..c).map(|k| src[at(k)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (k, r) in row.iter_mut().enumerate() {
                *r = (src[at(k)].as_f64() - max).exp();
                z += *r;
            }
            loss += wt * (z.ln() - (src[at(t)].as_f64() - max));
            for (k, r) in row.iter().enumerate() {
                let onehot = if k == t { 1.0 } else { 0.0 };
                dst[at(k)] = T::lit(wt * (r / z - onehot) / total_w);
            }
        }
    }
    Ok(LossOutput {
        loss: loss / total_w,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_util::{check_grad, rand_tensor, seeded};
    use rand::Rng;

    #[test]
    fn uniform_logits_give_ln4() {
        let x = Tensor4::<f32>::zeros([1, 4, 2, 2]);
        let out = softmax_weighted_ce(&x, &[0, 1, 2, 3], &[1.0; 4]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_reduces_to_nll() {
        let x = Tensor4::<f64>::new([1, 4, 1, 1], vec![0.3, -1.2, 2.0, 0.1]).unwrap();
        let out = softmax_weighted_ce(&x, &[1], &[1.0, 5.0, 2.0, 3.0]).unwrap();
        let p = softmax(&x);
        assert!((out.loss + p.as_slice()[1].ln()).abs() < 1e-12);
        for k in 0..4 {
            let want = p.as_slice()[k] - if k == 1 { 1.0 } else { 0.0 };
            assert!((out.grad.as_slice()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_targets_and_weights() {
        let x = Tensor4::<f32>::zeros([1, 4, 1, 1]);
        assert!(matches!(
            softmax_weighted_ce(&x, &[4], &[1.0; 4]),
            Err(Error::Label(_))
        ));
        assert!(softmax_weighted_ce(&x, &[0], &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = seeded(40);
        let x = rand_tensor::<f32>([2, 4, 3, 3], &mut rng).map(|v| v * 30.0);
        let p = softmax(&x);
        for i in 0..2 {
            for h in 0..3 {
                for w in 0..3 {
                    let s: f64 = (0..4).map(|k| p.get(i, k, h, w) as f64).sum();
                    assert!((s - 1.0).abs() <= 1e-6);
                }
            }
        }
    }

    fn grad_check<T: Real>(tol: f64, h: f64) {
        let mut rng = seeded(41);
        let x = rand_tensor::<T>([2, 4, 3, 3], &mut rng).map(|v| v * T::lit(2.0));
        let targets: Vec<u8> = (0..18).map(|_| rng.random_range(0..4)).collect();
        let weights = [1.0, 5.0, 2.0, 3.0];
        let g = softmax_weighted_ce(&x, &targets, &weights).unwrap().grad;
        check_grad(x.as_slice(), g.as_slice(), h, tol, |i, d| {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += T::lit(d);
            softmax_weighted_ce(&xp, &targets, &weights).unwrap().loss
        });
    }

    #[test]
    fn gradients_match_finite_differences() {
        grad_check::<f64>(1e-6, 1e-5);
        grad_check::<f32>(1e-3, 1e-2);
    }
}
