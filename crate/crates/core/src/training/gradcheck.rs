use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::ModelVariant;
use super::train::{Dataset, ModelState};
use crate::error::Result;
use crate::params::Parameters;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientAudit {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters_checked: usize,
}

/// Compares analytic loss gradients against central finite differences for
/// every parameter the variant uses. Embedding rows of tokens absent from
/// the batch are skipped (their gradient is identically zero).
pub fn gradient_check(model: &ModelState, batch: &Dataset) -> Result<GradientAudit> {
    let (_, grad) = model.loss_and_gradient(batch)?;
    let analytic = grad.flatten();
    let used: BTreeSet<usize> = batch.sentences.iter().flat_map(|s| s.tokens.iter().copied()).collect();
    let embed_dim = model.network.embedding.dim();
    let contextual = batch.contextual.is_some();
    let variant = model.variant();

    let mut targets = Vec::new();
    let mut offset = 0;
    model.network.visit("", &mut |name, s| {
        let group = name.split('.').next().unwrap_or("");
        let active = match group {
            "embedding" | "rnn" => !contextual,
            "flows" => variant.is_evidential(),
            "transmission" => variant == ModelVariant::Slpn,
            "head" => !variant.is_evidential(),
            _ => true,
        };
        if active {
            for j in 0..s.len() {
                if group == "embedding" && !used.contains(&(j / embed_dim)) {
                    continue;
                }
                targets.push((offset + j, name.to_string(), j));
            }
        }
        offset += s.len();
    });

    let mut audit = GradientAudit {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        parameters_checked: targets.len(),
    };
    let mut probe = model.clone();
    for (flat, name, local) in targets {
        let original = perturb(&mut probe, flat, None);
        perturb(&mut probe, flat, Some(original + FD_STEP));
        let plus = probe.batch_loss(batch)?;
        perturb(&mut probe, flat, Some(original - FD_STEP));
        let minus = probe.batch_loss(batch)?;
        perturb(&mut probe, flat, Some(original));
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic[flat], numeric);
        if err > audit.max_relative_error || audit.worst_parameter.is_empty() {
            audit.max_relative_error = err;
            audit.worst_parameter = name;
            audit.worst_index = local;
            audit.analytic = analytic[flat];
            audit.numeric = numeric;
        }
    }
    Ok(audit)
}

/// Returns the current value at flat index `index`, writing `value` if given.
fn perturb(model: &mut ModelState, index: usize, value: Option<f64>) -> f64 {
    let mut offset = 0;
    let mut old = 0.0;
    model.network.visit_mut("", &mut |_, s| {
        if (offset..offset + s.len()).contains(&index) {
            let slot = &mut s[index - offset];
            old = *slot;
            if let Some(v) = value {
                *slot = v;
            }
        }
        offset += s.len();
    });
    old
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_comparison_is_exact() {
        for x in [0.0, 1e-30, -3.5, 1e12] {
            assert_eq!(relative_error(x, x), 0.0);
        }
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
