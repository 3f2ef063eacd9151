//! Class-wise stacks of radial transforms on the latent space.
//!
//! Each transform is `f(u) = u + β h(r) (u - z0)` with `h = 1 / (α + r)` and
//! `r = ‖u - z0‖`. A latent vector is pushed through the stack of its class
//! towards a standard normal base, so
//! `log P(z | k) = log N(f_D ∘ … ∘ f_1(z)) + Σ_j log |det J_j|`.
//! The raw parameters are unconstrained: `α = softplus(α̂)` and
//! `β = -α + softplus(β̂)`, which keeps every transform invertible.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::params::{join, slice, slice_mut, Parameters};
use crate::special::{sigmoid, softplus};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTransform {
    pub center: Array1<f64>,
    pub raw_slope: f64,
    pub raw_scale: f64,
}

impl RadialTransform {
    pub fn alpha(&self) -> f64 {
        softplus(self.raw_slope)
    }

    pub fn beta(&self) -> f64 {
        -self.alpha() + softplus(self.raw_scale)
    }

    /// Writes `f(u)` into `out` and returns `log |det ∂f/∂u|`.
    fn apply(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let alpha = self.alpha();
        let beta = self.beta();
        let center = slice(&self.center);
        let mut r2 = 0.0;
        for (o, (&ui, &ci)) in out.iter_mut().zip(u.iter().zip(center)) {
            *o = ui - ci;
            r2 += *o * *o;
        }
        let r = r2.sqrt();
        let h = 1.0 / (alpha + r);
        let bh = beta * h;
        for (o, &ui) in out.iter_mut().zip(u) {
            *o = ui + bh * *o;
        }
        let dim = u.len() as f64;
        (dim - 1.0) * (1.0 + bh).ln() + (1.0 + beta * alpha * h * h).ln()
    }

    /// Back-propagates through one transform. `g_out` is the gradient with
    /// respect to `f(u)`, `w` the weight on this transform's log-determinant.
    /// Returns the gradient with respect to `u` and accumulates parameter
    /// gradients into `grad`.
    fn backprop(&self, u: &[f64], g_out: &[f64], w: f64, grad: &mut RadialTransform) -> Vec<f64> {
        let alpha = self.alpha();
        let beta = self.beta();
        let center = slice(&self.center);
        let dim = u.len() as f64;
        let d: Vec<f64> = u.iter().zip(center).map(|(a, b)| a - b).collect();
        let r = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let h = 1.0 / (alpha + r);
        let a_term = 1.0 + beta * h;
        let b_term = 1.0 + beta * alpha * h * h;
        let dg: f64 = d.iter().zip(g_out).map(|(a, b)| a * b).sum();

        // d logdet / d r
        let dldr = -(dim - 1.0) * beta * h * h / a_term - 2.0 * beta * alpha * h * h * h / b_term;
        let radial = if r > 0.0 {
            (-beta * h * h * dg + w * dldr) / r
        } else {
            0.0
        };
        let g_u: Vec<f64> = g_out.iter().zip(&d).map(|(&g, &di)| a_term * g + radial * di).collect();

        let gc = slice_mut(&mut grad.center);
        for ((c, &gu), &go) in gc.iter_mut().zip(&g_u).zip(g_out) {
            *c -= gu - go;
        }
        let g_beta = h * dg + w * ((dim - 1.0) * h / a_term + alpha * h * h / b_term);
        let g_alpha = -beta * h * h * dg
            + w * (-(dim - 1.0) * beta * h * h / a_term + beta * h * h * (1.0 - 2.0 * alpha * h) / b_term);
        grad.raw_slope += sigmoid(self.raw_slope) * (g_alpha - g_beta);
        grad.raw_scale += sigmoid(self.raw_scale) * g_beta;
        g_u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFlowStack {
    dim: usize,
    classes: Vec<Vec<RadialTransform>>,
}

impl RadialFlowStack {
    pub fn new(num_classes: usize, dim: usize, depth: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let raw = Normal::new(0.0, 0.5).expect("valid normal");
        let classes = (0..num_classes)
            .map(|_| {
                (0..depth)
                    .map(|_| RadialTransform {
                        center: Array1::from_shape_fn(dim, |_| normal.sample(rng)),
                        raw_slope: raw.sample(rng),
                        raw_scale: raw.sample(rng),
                    })
                    .collect()
            })
            .collect();
        Self { dim, classes }
    }

    pub fn from_transforms(dim: usize, classes: Vec<Vec<RadialTransform>>) -> Self {
        assert!(classes.iter().flatten().all(|t| t.center.len() == dim));
        Self { dim, classes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn depth(&self) -> usize {
        self.classes.first().map_or(0, Vec::len)
    }

    pub fn transforms(&self, class: usize) -> &[RadialTransform] {
        &self.classes[class]
    }

    /// `log P(z | k; θ)`.
    pub fn log_density(&self, z: ArrayView1<f64>, class: usize) -> f64 {
        let mut u = z.to_vec();
        let mut next = vec![0.0; self.dim];
        let mut logdet = 0.0;
        for t in &self.classes[class] {
            logdet += t.apply(&u, &mut next);
            std::mem::swap(&mut u, &mut next);
        }
        logdet + base_log_density(&u)
    }

    /// Accumulates `w · ∂ log P(z | k) / ∂θ` into `grad` and returns
    /// `w · ∂ log P(z | k) / ∂z`.
    pub fn log_density_backward(
        &self,
        z: ArrayView1<f64>,
        class: usize,
        w: f64,
        grad: &mut RadialFlowStack,
    ) -> Array1<f64> {
        let stack = &self.classes[class];
        let mut inputs = Vec::with_capacity(stack.len() + 1);
        inputs.push(z.to_vec());
        for t in stack {
            let mut next = vec![0.0; self.dim];
            t.apply(inputs.last().expect("non-empty"), &mut next);
            inputs.push(next);
        }
        let mut g: Vec<f64> = inputs.last().expect("non-empty").iter().map(|x| -w * x).collect();
        for (j, t) in stack.iter().enumerate().rev() {
            g = t.backprop(&inputs[j], &g, w, &mut grad.classes[class][j]);
        }
        Array1::from(g)
    }
}

fn base_log_density(u: &[f64]) -> f64 {
    -0.5 * u.iter().map(|x| x * x).sum::<f64>() - 0.5 * u.len() as f64 * LN_2PI
}

impl Parameters for RadialFlowStack {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (k, stack) in self.classes.iter().enumerate() {
            for (j, t) in stack.iter().enumerate() {
                let p = join(prefix, &format!("{k}.{j}"));
                f(&join(&p, "center"), slice(&t.center));
                f(&join(&p, "raw_slope"), std::slice::from_ref(&t.raw_slope));
                f(&join(&p, "raw_scale"), std::slice::from_ref(&t.raw_scale));
            }
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (k, stack) in self.classes.iter_mut().enumerate() {
            for (j, t) in stack.iter_mut().enumerate() {
                let p = join(prefix, &format!("{k}.{j}"));
                f(&join(&p, "center"), slice_mut(&mut t.center));
                f(&join(&p, "raw_slope"), std::slice::from_mut(&mut t.raw_slope));
                f(&join(&p, "raw_scale"), std::slice::from_mut(&mut t.raw_scale));
            }
        }
    }
}
