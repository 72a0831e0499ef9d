//! Adam with a cosine learning-rate decay and global-norm clipping.

use crate::tensor::{GradientMap, ParamStore, Tensor};

/// Cosine decay from `start` to `end` over `total` steps.
pub fn cosine_lr(step: usize, total: usize, start: f64, end: f64) -> f64 {
    if total == 0 {
        return start;
    }
    let frac = (step.min(total) as f64) / total as f64;
    end + 0.5 * (start - end) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Scale `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut GradientMap, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = |p: &ParamStore| -> Vec<Tensor> {
            p.ids().map(|id| {
                let t = p.get(id);
                Tensor::zeros(t.rows(), t.cols())
            }).collect()
        };
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradientMap, lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = params.get_mut(id);
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                p.data_mut()[i] -= lr * (mi / b1t) / ((vi / b2t).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0, 100, 1e-3, 1e-5) - 1e-3).abs() < 1e-15);
        assert!((cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-15);
        let mid = cosine_lr(50, 100, 1e-3, 1e-5);
        assert!((mid - (1e-3 + 1e-5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParamStore::new();
        let id = p.insert("x", Tensor::row(vec![3.0, -2.0])).unwrap();
        let mut opt = Adam::new(&p);
        for _ in 0..2000 {
            let mut g = GradientMap::new();
            let x = p.get(id).clone();
            g.accumulate(id, &x); // d/dx of |x|^2 / 2
            opt.step(&mut p, &g, 0.01);
        }
        assert!(p.get(id).norm() < 1e-2);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = GradientMap::new();
        let mut p = ParamStore::new();
        let id = p.insert("x", Tensor::row(vec![3.0, 4.0])).unwrap();
        g.accumulate(id, p.get(id));
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
