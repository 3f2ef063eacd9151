//! Contextual encoder (token embeddings + one bidirectional Elman layer) and
//! the two-layer latent projection. Each component has a hand-written
//! backward pass that accumulates into a gradient value of its own type.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{join, slice, slice_mut, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Array2<f64>,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Self {
            table: Array2::from_shape_fn((vocab, dim), |_| normal.sample(rng)),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn forward(&self, ids: &[usize]) -> Array2<f64> {
        self.table.select(Axis(0), ids)
    }

    pub fn backward(&self, ids: &[usize], d_out: ArrayView2<f64>, grad: &mut Embedding) {
        for (row, &id) in d_out.rows().into_iter().zip(ids) {
            let mut g = grad.table.row_mut(id);
            g += &row;
        }
    }
}

impl Parameters for Embedding {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "table"), slice(&self.table));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "table"), slice_mut(&mut self.table));
    }
}

/// `h_t = tanh(W_x x_t + W_h h_{t-1} + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

impl RnnCell {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let u = Uniform::new(-bound, bound).expect("non-empty range");
        Self {
            w_x: Array2::from_shape_fn((hidden, input), |_| u.sample(rng)),
            w_h: Array2::from_shape_fn((hidden, hidden), |_| u.sample(rng)),
            b: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    /// Runs the cell over `order` (a permutation of the rows of `x`) and
    /// returns hidden states stored at the original row positions.
    fn run(&self, x: ArrayView2<f64>, order: &[usize]) -> Array2<f64> {
        let mut hs = Array2::zeros((x.nrows(), self.hidden()));
        let mut prev = Array1::zeros(self.hidden());
        for &t in order {
            let pre = self.w_x.dot(&x.row(t)) + self.w_h.dot(&prev) + &self.b;
            let h = pre.mapv(f64::tanh);
            hs.row_mut(t).assign(&h);
            prev = h;
        }
        hs
    }

    fn backprop(
        &self,
        x: ArrayView2<f64>,
        hs: ArrayView2<f64>,
        d_hs: ArrayView2<f64>,
        order: &[usize],
        dx: &mut Array2<f64>,
        grad: &mut RnnCell,
    ) {
        let mut carry: Array1<f64> = Array1::zeros(self.hidden());
        for (step, &t) in order.iter().enumerate().rev() {
            let dh = &d_hs.row(t) + &carry;
            let h = hs.row(t);
            let dpre = &dh * &h.mapv(|v| 1.0 - v * v);
            let zeros = Array1::zeros(self.hidden());
            let prev: ArrayView1<f64> = if step == 0 {
                zeros.view()
            } else {
                hs.row(order[step - 1])
            };
            outer_add(&mut grad.w_x, dpre.view(), x.row(t));
            outer_add(&mut grad.w_h, dpre.view(), prev);
            grad.b += &dpre;
            let mut dxt = dx.row_mut(t);
            dxt += &self.w_x.t().dot(&dpre);
            carry = self.w_h.t().dot(&dpre);
        }
    }
}

fn outer_add(acc: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            acc.row_mut(i).scaled_add(ai, &b);
        }
    }
}

impl Parameters for RnnCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "w_x"), slice(&self.w_x));
        f(&join(prefix, "w_h"), slice(&self.w_h));
        f(&join(prefix, "b"), slice(&self.b));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w_x"), slice_mut(&mut self.w_x));
        f(&join(prefix, "w_h"), slice_mut(&mut self.w_h));
        f(&join(prefix, "b"), slice_mut(&mut self.b));
    }
}

/// Forward and backward Elman cells; the output row for token `t` is
/// `[h_fwd_t; h_bwd_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiRnn {
    pub fwd: RnnCell,
    pub bwd: RnnCell,
}

#[derive(Debug, Clone)]
pub struct BiRnnCache {
    fwd: Array2<f64>,
    bwd: Array2<f64>,
}

impl BiRnn {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: RnnCell::new(input, hidden, rng),
            bwd: RnnCell::new(input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden() + self.bwd.hidden()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, BiRnnCache) {
        let l = x.nrows();
        let fwd_order: Vec<usize> = (0..l).collect();
        let bwd_order: Vec<usize> = (0..l).rev().collect();
        let hf = self.fwd.run(x, &fwd_order);
        let hb = self.bwd.run(x, &bwd_order);
        let out = ndarray::concatenate![Axis(1), hf, hb];
        (out, BiRnnCache { fwd: hf, bwd: hb })
    }

    /// Returns the gradient with respect to the input rows.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        cache: &BiRnnCache,
        d_out: ArrayView2<f64>,
        grad: &mut BiRnn,
    ) -> Array2<f64> {
        let l = x.nrows();
        let h = self.fwd.hidden();
        let mut dx = Array2::zeros(x.raw_dim());
        let fwd_order: Vec<usize> = (0..l).collect();
        let bwd_order: Vec<usize> = (0..l).rev().collect();
        self.fwd.backprop(
            x,
            cache.fwd.view(),
            d_out.slice(s![.., ..h]),
            &fwd_order,
            &mut dx,
            &mut grad.fwd,
        );
        self.bwd.backprop(
            x,
            cache.bwd.view(),
            d_out.slice(s![.., h..]),
            &bwd_order,
            &mut dx,
            &mut grad.bwd,
        );
        dx
    }
}

impl Parameters for BiRnn {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.fwd.visit(&join(prefix, "fwd"), f);
        self.bwd.visit(&join(prefix, "bwd"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.fwd.visit_mut(&join(prefix, "fwd"), f);
        self.bwd.visit_mut(&join(prefix, "bwd"), f);
    }
}

/// `z = W_2 tanh(W_1 e + b_1) + b_2`, applied row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LatentMlpCache {
    hidden: Array2<f64>,
}

impl LatentMlp {
    pub fn new(input: usize, hidden: usize, latent: usize, rng: &mut impl Rng) -> Self {
        let u1 = Uniform::new(
            -(6.0 / (input + hidden) as f64).sqrt(),
            (6.0 / (input + hidden) as f64).sqrt(),
        )
        .expect("non-empty range");
        let u2 = Uniform::new(
            -(6.0 / (hidden + latent) as f64).sqrt(),
            (6.0 / (hidden + latent) as f64).sqrt(),
        )
        .expect("non-empty range");
        Self {
            w1: Array2::from_shape_fn((hidden, input), |_| u1.sample(rng)),
            b1: Array1::zeros(hidden),
            w2: Array2::from_shape_fn((latent, hidden), |_| u2.sample(rng)),
            b2: Array1::zeros(latent),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Projects one contextual embedding to the latent space.
    pub fn encode_latent(&self, embedding: ArrayView1<f64>) -> Result<Array1<f64>> {
        if embedding.len() != self.input_dim() {
            return Err(Error::InvalidParameter(format!(
                "embedding has {} dims, encoder expects {}",
                embedding.len(),
                self.input_dim()
            )));
        }
        let a = (self.w1.dot(&embedding) + &self.b1).mapv(f64::tanh);
        Ok(self.w2.dot(&a) + &self.b2)
    }

    pub fn forward(&self, e: ArrayView2<f64>) -> (Array2<f64>, LatentMlpCache) {
        let hidden = (e.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let z = hidden.dot(&self.w2.t()) + &self.b2;
        (z, LatentMlpCache { hidden })
    }

    pub fn backward(
        &self,
        e: ArrayView2<f64>,
        cache: &LatentMlpCache,
        d_z: ArrayView2<f64>,
        grad: &mut LatentMlp,
    ) -> Array2<f64> {
        grad.w2 += &d_z.t().dot(&cache.hidden);
        grad.b2 += &d_z.sum_axis(Axis(0));
        let d_hidden = d_z.dot(&self.w2) * cache.hidden.mapv(|a| 1.0 - a * a);
        grad.w1 += &d_hidden.t().dot(&e);
        grad.b1 += &d_hidden.sum_axis(Axis(0));
        d_hidden.dot(&self.w1)
    }
}

impl Parameters for LatentMlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "w1"), slice(&self.w1));
        f(&join(prefix, "b1"), slice(&self.b1));
        f(&join(prefix, "w2"), slice(&self.w2));
        f(&join(prefix, "b2"), slice(&self.b2));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w1"), slice_mut(&mut self.w1));
        f(&join(prefix, "b1"), slice_mut(&mut self.b1));
        f(&join(prefix, "w2"), slice_mut(&mut self.w2));
        f(&join(prefix, "b2"), slice_mut(&mut self.b2));
    }
}
