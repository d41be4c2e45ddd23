use super::Param;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for an ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One bias-corrected Adam update of every parameter, in place. The
    /// parameter list must keep the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            assert_eq!(p.len(), m.len(), "parameter list changed shape between Adam steps");
            for i in 0..p.value.len() {
                let g = p.grad[i].as_f64();
                let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * g;
                let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * g * g;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                p.value[i] = T::lit(p.value[i].as_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::<f64>::zeros(&[1]);
        p.grad[0] = 1.0;
        let mut s = AdamState::new(AdamConfig::default());
        s.step(&mut [&mut p]);
        assert!((p.value[0] + 1e-4 / (1.0 + 1e-8)).abs() < 1e-18);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_still_counts_step() {
        let mut p = Param::<f32>::filled(&[3], 2.0);
        let mut s = AdamState::new(AdamConfig::default());
        s.step(&mut [&mut p]);
        s.step(&mut [&mut p]);
        assert_eq!(p.value, vec![2.0; 3]);
        assert_eq!(s.t, 2);
        assert!(s.second[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut p = Param::<f64>::filled(&[1], 5.0);
        let mut s = AdamState::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        for _ in 0..2000 {
            p.grad[0] = 2.0 * p.value[0];
            s.step(&mut [&mut p]);
        }
        assert!(p.value[0].abs() < 0.1, "{}", p.value[0]);
    }
}
