use rand::Rng;

use super::{xavier_uniform, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor4};

/// Weights `(C_out, C_in, kh, kw)` and bias `(C_out)` of a stride-1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn new(c_out: usize, c_in: usize, kh: usize, kw: usize) -> Self {
        Self {
            weight: Param::zeros(&[c_out, c_in, kh, kw]),
            bias: Param::zeros(&[c_out]),
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }
    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }
    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape[2], self.weight.shape[3])
    }

    pub fn xavier_init(&mut self, rng: &mut impl Rng) {
        let (kh, kw) = self.kernel();
        let rf = kh * kw;
        let (fan_in, fan_out) = (self.c_in() * rf, self.c_out() * rf);
        xavier_uniform(&mut self.weight, fan_in, fan_out, rng);
        self.bias.value.fill(T::zero());
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

struct Geometry {
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new<T: Real>(x: &Tensor4<T>, p: &ConvParams<T>, pad: usize) -> Result<Self> {
        let [_, c, h, w] = x.shape();
        let (kh, kw) = p.kernel();
        if c != p.c_in() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                p.c_in()
            )));
        }
        if !(1..=3).contains(&kh) || !(1..=3).contains(&kw) {
            return Err(Error::Shape(format!("unsupported kernel {kh}x{kw}")));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "{h}x{w} input too small for {kh}x{kw} kernel with pad {pad}"
            )));
        }
        Ok(Self {
            c_in: c,
            c_out: p.c_out(),
            kh,
            kw,
            pad,
            h,
            w,
            ho: h + 2 * pad - kh + 1,
            wo: w + 2 * pad - kw + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    /// Valid output columns `[lo, hi)` for kernel column `kj`.
    fn col_range(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj);
        let hi = (self.w + self.pad).saturating_sub(kj).min(self.wo);
        (lo, hi.max(lo))
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let plane = self.ho * self.wo;
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.col_range(kj);
                    for oy in 0..self.ho {
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        let iy = oy + ki;
                        if iy < self.pad || iy >= self.h + self.pad {
                            line.fill(T::zero());
                            continue;
                        }
                        let iy = iy - self.pad;
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        let src = &x[(c * self.h + iy) * self.w..];
                        for ox in lo..hi {
                            line[ox] = src[ox + kj - self.pad];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let plane = self.ho * self.wo;
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.col_range(kj);
                    for oy in 0..self.ho {
                        let iy = oy + ki;
                        if iy < self.pad || iy >= self.h + self.pad {
                            continue;
                        }
                        let iy = iy - self.pad;
                        let line = &src[oy * self.wo..(oy + 1) * self.wo];
                        let dst = &mut dx[(c * self.h + iy) * self.w..];
                        for ox in lo..hi {
                            dst[ox + kj - self.pad] += line[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation (no kernel flip) with zero padding `pad`.
pub fn conv2d_forward<T: Real>(x: &Tensor4<T>, p: &ConvParams<T>, pad: usize) -> Result<Tensor4<T>> {
    let g = Geometry::new(x, p, pad)?;
    let n = x.batch();
    let plane = g.ho * g.wo;
    let mut out = Tensor4::zeros([n, g.c_out, g.ho, g.wo]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.rows() * plane]
    };
    for i in 0..n {
        let b: &[T] = if g.is_pointwise() {
            x.sample(i)
        } else {
            g.im2col(x.sample(i), &mut cols);
            &cols
        };
        let y = out.sample_mut(i);
        gemm(false, false, g.c_out, g.rows(), plane, &p.weight.value, b, y, false);
        for (o, chunk) in y.chunks_exact_mut(plane).enumerate() {
            let bias = p.bias.value[o];
            chunk.iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(out)
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    p: &ConvParams<T>,
    pad: usize,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(x, p, pad)?;
    let n = x.batch();
    if grad_out.shape() != [n, g.c_out, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv grad {:?} does not match output {:?}",
            grad_out.shape(),
            [n, g.c_out, g.ho, g.wo]
        )));
    }
    let plane = g.ho * g.wo;
    let rows = g.rows();
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = vec![T::zero(); p.weight.len()];
    let mut db = vec![T::zero(); g.c_out];
    let mut cols = vec![T::zero(); rows * plane];
    let mut dcols = vec![T::zero(); rows * plane];
    for i in 0..n {
        let dy = grad_out.sample(i);
        for (o, chunk) in dy.chunks_exact(plane).enumerate() {
            db[o] += chunk.iter().copied().sum::<T>();
        }
        if g.is_pointwise() {
            gemm(false, true, g.c_out, plane, rows, dy, x.sample(i), &mut dw, true);
            gemm(true, false, rows, g.c_out, plane, &p.weight.value, dy, dx.sample_mut(i), false);
        } else {
            g.im2col(x.sample(i), &mut cols);
            gemm(false, true, g.c_out, plane, rows, dy, &cols, &mut dw, true);
            gemm(true, false, rows, g.c_out, plane, &p.weight.value, dy, &mut dcols, false);
            g.col2im(&dcols, dx.sample_mut(i));
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Convolution layer that remembers its input for the backward pass.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub params: ConvParams<T>,
    pub pad: usize,
    input: Option<Tensor4<T>>,
}

impl<T: Real> Conv2d<T> {
    /// Shape-preserving for odd kernels: `pad = (k - 1) / 2`.
    pub fn new(c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            params: ConvParams::new(c_out, c_in, k, k),
            pad: (k - 1) / 2,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = conv2d_forward(x, &self.params, self.pad)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Shape("conv backward before forward".into()))?;
        let g = conv2d_backward(&x, &self.params, self.pad, grad_out)?;
        self.params.weight.accumulate(&g.weight);
        self.params.bias.accumulate(&g.bias);
        Ok(g.input)
    }
}
