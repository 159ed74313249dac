use std::collections::BTreeMap;

use super::HarnessError;

/// Macro F1: per-class `2PR / (P + R)` (0 when `P + R = 0`), averaged over
/// the classes that occur in `labels`.
pub fn f1_macro(predictions: &[usize], labels: &[usize]) -> Result<f64, HarnessError> {
    if predictions.len() != labels.len() {
        return Err(HarnessError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Err(HarnessError::EmptyInput("f1 needs at least one prediction"));
    }
    // class -> (true positives, predicted count, support)
    let mut counts: BTreeMap<usize, (u64, u64, u64)> = BTreeMap::new();
    for (&p, &l) in predictions.iter().zip(labels) {
        counts.entry(l).or_default().2 += 1;
        counts.entry(p).or_default().1 += 1;
        if p == l {
            counts.entry(l).or_default().0 += 1;
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(tp, predicted, support) in counts.values() {
        if support == 0 {
            continue;
        }
        n += 1;
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = tp as f64 / support as f64;
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_half_precision() {
        assert_eq!(f1_macro(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap(), 1.0);
        // Positive class: precision 1/2, recall 1; negative class: P 1, R 2/3.
        let f = f1_macro(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        let pos: f64 = 2.0 * 0.5 * 1.0 / 1.5;
        let neg = 2.0 * (2.0 / 3.0) / (5.0 / 3.0);
        assert!((pos - 2.0 / 3.0).abs() < 1e-15);
        assert!((f - (pos + neg) / 2.0).abs() < 1e-15);
        assert!((f1_macro(&[1, 1], &[1, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!((f1_macro(&[1, 1], &[1, 0]).unwrap() - (2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn classes_only_predicted_do_not_count() {
        assert_eq!(f1_macro(&[5, 5], &[0, 0]).unwrap(), 0.0);
        assert!((f1_macro(&[0, 5], &[0, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(f1_macro(&[], &[]), Err(HarnessError::EmptyInput(_))));
        assert!(matches!(f1_macro(&[1], &[1, 2]), Err(HarnessError::LengthMismatch { .. })));
    }
}
