use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

/// Per-channel affine parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight of the newest batch in the running averages.
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], T::one()),
            beta: Param::zeros(&[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// What the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Normalizes each channel over `(N, H, W)`. Train mode uses batch statistics
/// (population variance) and updates the running averages; infer mode uses
/// the running averages.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor4<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
    let [n, c, h, w] = x.shape();
    if c != p.channels() {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input has {c}",
            p.channels()
        )));
    }
    let plane = h * w;
    let count = n * plane;
    if mode == Mode::Train && count < 2 {
        return Err(Error::DegenerateBatch);
    }
    let data = x.as_slice();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mut s = 0.0;
                for i in 0..n {
                    let o = (i * c + ch) * plane;
                    s += data[o..o + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count as f64;
                let mut ss = 0.0;
                for i in 0..n {
                    let o = (i * c + ch) * plane;
                    ss += data[o..o + plane]
                        .iter()
                        .map(|v| (v.as_f64() - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = ss / count as f64;
                let mo = p.momentum;
                p.running_mean[ch] = T::lit((1.0 - mo) * p.running_mean[ch].as_f64() + mo * m);
                p.running_var[ch] = T::lit((1.0 - mo) * p.running_var[ch].as_f64() + mo * var[ch]);
            }
        }
        Mode::Infer => {
            for ch in 0..c {
                mean[ch] = p.running_mean[ch].as_f64();
                var[ch] = p.running_var[ch].as_f64().max(0.0);
            }
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut xhat = Tensor4::zeros(x.shape());
    let mut y = Tensor4::zeros(x.shape());
    {
        let xh = xhat.as_mut_slice();
        let ys = y.as_mut_slice();
        for i in 0..n {
            for ch in 0..c {
                let o = (i * c + ch) * plane;
                let (m, s) = (mean[ch], inv_std[ch]);
                let (g, b) = (p.gamma.value[ch], p.beta.value[ch]);
                for k in o..o + plane {
                    let v = T::lit((data[k].as_f64() - m) * s);
                    xh[k] = v;
                    ys[k] = g * v + b;
                }
            }
        }
    }
    Ok((y, BatchNormCache { xhat, inv_std, mode }))
}

pub fn batchnorm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    p: &BatchNormParams<T>,
    grad_out: &Tensor4<T>,
) -> Result<BatchNormGrads<T>> {
    let [n, c, h, w] = cache.xhat.shape();
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Shape("batch norm gradient shape mismatch".into()));
    }
    let plane = h * w;
    let count = (n * plane) as f64;
    let dy = grad_out.as_slice();
    let xh = cache.xhat.as_slice();
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xh = vec![0.0f64; c];
    for i in 0..n {
        for ch in 0..c {
            let o = (i * c + ch) * plane;
            for k in o..o + plane {
                let d = dy[k].as_f64();
                sum_dy[ch] += d;
                sum_dy_xh[ch] += d * xh[k].as_f64();
            }
        }
    }
    let mut dx = Tensor4::zeros(cache.xhat.shape());
    let dxs = dx.as_mut_slice();
    for i in 0..n {
        for ch in 0..c {
            let o = (i * c + ch) * plane;
            let scale = p.gamma.value[ch].as_f64() * cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    let (sd, sdx) = (sum_dy[ch] / count, sum_dy_xh[ch] / count);
                    for k in o..o + plane {
                        dxs[k] = T::lit(scale * (dy[k].as_f64() - sd - xh[k].as_f64() * sdx));
                    }
                }
                Mode::Infer => {
                    for k in o..o + plane {
                        dxs[k] = T::lit(scale * dy[k].as_f64());
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: sum_dy_xh.iter().map(|&v| T::lit(v)).collect(),
        beta: sum_dy.iter().map(|&v| T::lit(v)).collect(),
    })
}

/// Batch-norm layer caching its normalized input.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub params: BatchNormParams<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            params: BatchNormParams::new(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let (y, cache) = batchnorm_forward(x, &mut self.params, mode)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("batch norm backward before forward".into()))?;
        let g = batchnorm_backward(&cache, &self.params, grad_out)?;
        self.params.gamma.accumulate(&g.gamma);
        self.params.beta.accumulate(&g.beta);
        Ok(g.input)
    }
}
