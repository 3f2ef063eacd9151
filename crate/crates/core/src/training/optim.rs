use serde::{Deserialize, Serialize};

use crate::params::Parameters;

/// Adaptive-moment optimizer with a fixed step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(num_parameters: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![0.0; num_parameters],
            second: vec![0.0; num_parameters],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A parameter whose gradient has always been zero
    /// does not move.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grad: &P) {
        let g = grad.flatten();
        assert_eq!(g.len(), self.first.len(), "gradient shape mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut i = 0;
        params.visit_mut("", &mut |_, s| {
            for p in s.iter_mut() {
                let m = &mut self.first[i];
                let v = &mut self.second[i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[i] * g[i];
                *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                i += 1;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{slice, slice_mut};
    use ndarray::{array, Array1};

    #[derive(Clone)]
    struct Vector(Array1<f64>);

    impl Parameters for Vector {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
            f(prefix, slice(&self.0));
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
            f(prefix, slice_mut(&mut self.0));
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Vector(array![1.0, -2.0, 0.5]);
        let g = Vector(array![3.0, -0.1, 0.0]);
        let mut adam = Adam::new(3, 0.01);
        adam.step(&mut p, &g);
        assert!((p.0[0] - 0.99).abs() < 1e-8);
        assert!((p.0[1] - -1.99).abs() < 1e-6);
        assert_eq!(p.0[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Vector(array![5.0, -3.0]);
        let mut adam = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = Vector(p.0.mapv(|x| 2.0 * x));
            adam.step(&mut p, &g);
        }
        assert!(p.0.iter().all(|x| x.abs() < 1e-2));
    }
}
