use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

/// Non-overlapping 2×2 max pooling. Returns the pooled tensor and, for every
/// output element, the flat input index it was taken from. Ties go to the
/// first maximum in row-major order.
pub fn maxpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("max pool needs even H and W, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([n, c, ho, wo]);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    let src = x.as_slice();
    let dst = out.as_mut_slice();
    let mut k = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[k] = src[best];
                argmax.push(best);
                k += 1;
            }
        }
    }
    Ok((out, argmax))
}

/// Scatters `grad_out` back to the recorded argmax positions.
pub fn maxpool2x2_backward<T: Real>(
    input_shape: [usize; 4],
    argmax: &[usize],
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::Shape("max pool gradient shape mismatch".into()));
    }
    let mut dx = Tensor4::zeros(input_shape);
    let d = dx.as_mut_slice();
    for (&idx, &g) in argmax.iter().zip(grad_out.as_slice()) {
        d[idx] += g;
    }
    Ok(dx)
}

#[derive(Clone, Debug, Default)]
pub struct MaxPool2x2 {
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (y, arg) = maxpool2x2_forward(x)?;
        self.cache = Some((x.shape(), arg));
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (shape, arg) = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("max pool backward before forward".into()))?;
        maxpool2x2_backward(shape, &arg, grad_out)
    }
}
