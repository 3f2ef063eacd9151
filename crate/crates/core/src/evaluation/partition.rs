use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ner_data::Entity;

/// A ground-truth entity with its in-/out-of-distribution flavor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlavoredEntity {
    pub entity: Entity,
    pub ood: bool,
}

/// The three-way split of one sentence's ground-truth and predicted entities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityPartition {
    /// Predictions whose span equals a ground-truth span (stored as the
    /// ground-truth entity).
    pub shared: Vec<FlavoredEntity>,
    /// Ground-truth entities no prediction matches.
    pub unique_gt: Vec<FlavoredEntity>,
    /// Predictions matching no ground-truth span: wrong spans.
    pub unique_pred: Vec<Entity>,
}

impl EntityPartition {
    /// Size of the ground-truth set `shared + unique_gt`.
    pub fn num_ground_truth(&self) -> usize {
        self.shared.len() + self.unique_gt.len()
    }

    /// Size of the full set `shared + unique_gt + unique_pred`.
    pub fn num_total(&self) -> usize {
        self.num_ground_truth() + self.unique_pred.len()
    }
}

fn check_disjoint(entities: &[Entity], what: &str) -> Result<()> {
    let mut sorted: Vec<&Entity> = entities.iter().collect();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0].overlaps(w[1]) {
            return Err(Error::InvalidInput(format!(
                "overlapping {what} entities ({}, {}) and ({}, {})",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    if let Some(e) = entities.iter().find(|e| e.end < e.start) {
        return Err(Error::InvalidInput(format!(
            "{what} entity ({}, {}) is empty",
            e.start, e.end
        )));
    }
    Ok(())
}

/// Matches predictions to ground truth by exact span; labels are ignored for
/// matching. `is_ood` decides the flavor of a ground-truth label.
pub fn partition_entities(gt: &[Entity], pred: &[Entity], is_ood: impl Fn(&str) -> bool) -> Result<EntityPartition> {
    check_disjoint(gt, "ground-truth")?;
    check_disjoint(pred, "predicted")?;
    let same_span = |a: &Entity, b: &Entity| a.start == b.start && a.end == b.end;
    let mut out = EntityPartition::default();
    for g in gt {
        let flavored = FlavoredEntity {
            entity: g.clone(),
            ood: is_ood(&g.label),
        };
        if pred.iter().any(|p| same_span(p, g)) {
            out.shared.push(flavored);
        } else {
            out.unique_gt.push(flavored);
        }
    }
    out.unique_pred = pred
        .iter()
        .filter(|p| !gt.iter().any(|g| same_span(p, g)))
        .cloned()
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_example() {
        let gt = [Entity::new(0, 1, "PER"), Entity::new(3, 3, "LOC")];
        let pred = [Entity::new(0, 1, "PER"), Entity::new(2, 3, "LOC")];
        let p = partition_entities(&gt, &pred, |l| l == "LOC").unwrap();
        assert_eq!(
            p.shared,
            vec![FlavoredEntity {
                entity: Entity::new(0, 1, "PER"),
                ood: false
            }]
        );
        assert_eq!(
            p.unique_gt,
            vec![FlavoredEntity {
                entity: Entity::new(3, 3, "LOC"),
                ood: true
            }]
        );
        assert_eq!(p.unique_pred, vec![Entity::new(2, 3, "LOC")]);
        assert_eq!(p.num_total(), 3);
    }

    #[test]
    fn label_mismatch_is_still_shared() {
        let p = partition_entities(&[Entity::new(1, 2, "GEN")], &[Entity::new(1, 2, "PER")], |l| l == "GEN").unwrap();
        assert_eq!(p.shared.len(), 1);
        assert!(p.shared[0].ood);
        assert_eq!(p.shared[0].entity.label, "GEN");
    }

    #[test]
    fn identity_and_empty() {
        let gt = [Entity::new(0, 0, "A"), Entity::new(2, 4, "B")];
        let p = partition_entities(&gt, &gt, |_| false).unwrap();
        assert!(p.unique_gt.is_empty() && p.unique_pred.is_empty());
        let p = partition_entities(&gt, &[], |_| false).unwrap();
        assert!(p.shared.is_empty());
        assert_eq!(p.unique_gt.len(), 2);
    }

    #[test]
    fn overlap_is_rejected() {
        let bad = [Entity::new(0, 2, "A"), Entity::new(2, 3, "B")];
        assert!(partition_entities(&bad, &[], |_| false).is_err());
        assert!(partition_entities(&[], &bad, |_| false).is_err());
    }
}
