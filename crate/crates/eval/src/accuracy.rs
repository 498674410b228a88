use mmsense_data::text::normalize;

use crate::error::{MetricError, Result};

/// Exact-match fraction.
pub fn accuracy<T: PartialEq>(preds: &[T], labels: &[T]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(MetricError::Length(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// QA accuracy: generated text and answer compared after lowercasing,
/// trimming and collapsing whitespace.
pub fn qa_accuracy<S: AsRef<str>, L: AsRef<str>>(generated: &[S], answers: &[L]) -> Result<f64> {
    let p: Vec<String> = generated.iter().map(|s| normalize(s.as_ref())).collect();
    let l: Vec<String> = answers.iter().map(|s| normalize(s.as_ref())).collect();
    accuracy(&p, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert_eq!(qa_accuracy(&["Falling  "], &["falling"]).unwrap(), 1.0);
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(MetricError::Length(1, 2))));
        assert!(matches!(accuracy::<u8>(&[], &[]), Err(MetricError::Empty)));
    }
}
