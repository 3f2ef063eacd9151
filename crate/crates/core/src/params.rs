//! Uniform access to trainable parameter tensors.
//!
//! Every trainable component exposes its tensors as named flat slices in a
//! fixed order. Gradients are stored in a value of the same type, which lets
//! the optimizer and the finite-difference audit walk parameters and
//! gradients in lockstep.

use ndarray::{ArrayBase, DataMut, Dimension, RawData};

pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, s| s.fill(0.0));
        z
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, s| out.extend_from_slice(s));
        out
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, s| ok &= s.iter().all(|x| x.is_finite()));
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn slice<S, D>(a: &ArrayBase<S, D>) -> &[f64]
where
    S: ndarray::Data<Elem = f64>,
    D: Dimension,
{
    a.as_slice().expect("parameters are kept in standard layout")
}

pub(crate) fn slice_mut<S, D>(a: &mut ArrayBase<S, D>) -> &mut [f64]
where
    S: DataMut<Elem = f64> + RawData,
    D: Dimension,
{
    a.as_slice_mut().expect("parameters are kept in standard layout")
}
