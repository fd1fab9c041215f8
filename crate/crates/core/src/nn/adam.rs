use super::layers::Module;
use super::scalar::Scalar;

/// Adam with bias correction.
///
/// Moment buffers are keyed by the visiting order of trainable
/// parameters, which is fixed for a given architecture.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with the accumulated gradients, then zeroes them.
    pub fn step<T: Scalar, M: Module<T> + ?Sized>(&mut self, model: &mut M, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut slot = 0;
        let first = &mut self.first;
        let second = &mut self.second;
        model.visit_mut("", &mut |_, p| {
            if !p.trainable() {
                return;
            }
            if first.len() <= slot {
                first.push(vec![0.0; p.value.len()]);
                second.push(vec![0.0; p.value.len()]);
            }
            let m = &mut first[slot];
            let v = &mut second[slot];
            for i in 0..p.value.len() {
                let g = p.grad[i].as_f64();
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let update = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                p.value[i] = T::of(p.value[i].as_f64() - update);
                p.grad[i] = T::zero();
            }
            slot += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Param, ParamKind};

    struct Quadratic {
        x: Param<f64>,
    }

    impl Module<f64> for Quadratic {
        fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(&str, &mut Param<f64>)) {
            f("x", &mut self.x);
        }
        fn visit(&self, _: &str, f: &mut dyn FnMut(&str, &Param<f64>)) {
            f("x", &self.x);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut q = Quadratic { x: Param::new(vec![1.0], vec![1], ParamKind::Trainable) };
        q.x.grad[0] = 2.0;
        let mut adam = Adam::new(0.5, 0.999);
        adam.step(&mut q, 0.1);
        // bias-corrected m/sqrt(v) == sign(g) on the first step
        assert!((q.x.value[0] - 0.9).abs() < 1e-6);
        assert_eq!(q.x.grad[0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut q = Quadratic { x: Param::new(vec![3.0], vec![1], ParamKind::Trainable) };
        let mut adam = Adam::new(0.9, 0.999);
        for _ in 0..2000 {
            q.x.grad[0] = 2.0 * (q.x.value[0] - 1.0);
            adam.step(&mut q, 0.01);
        }
        assert!((q.x.value[0] - 1.0).abs() < 1e-3);
    }
}
