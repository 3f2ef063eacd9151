use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by ascending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64], descending: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = scores[a].total_cmp(&scores[b]);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half (Mann-Whitney U with
/// midranks).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut rank_sum = 0.0;
    let mut next_rank = 1.0;
    for group in tie_groups(scores, false) {
        let size = group.len() as f64;
        let midrank = next_rank + (size - 1.0) / 2.0;
        rank_sum += midrank * group.iter().filter(|&&i| labels[i]).count() as f64;
        next_rank += size;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve by a descending-score sweep with
/// step-wise summation; tied scores form one threshold.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AUPR needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut area = 0.0;
    for group in tie_groups(scores, true) {
        let group_pos = group.iter().filter(|&&i| labels[i]).count();
        tp += group_pos;
        seen += group.len();
        area += (tp as f64 / seen as f64) * (group_pos as f64 / pos as f64);
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(
            auroc(&[0.9, 0.5, 0.5, 0.1], &[true, false, true, false]).unwrap(),
            0.875
        );
        assert!(matches!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!((aupr(&[0.3; 5], &[true, false, false, true, false]).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(aupr(&[0.1], &[false]), Err(Error::UndefinedMetric(_))));
    }
}
