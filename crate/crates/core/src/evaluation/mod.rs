//! Frame-level metrics: per-class accuracy, one-vs-all PR-AUC and the
//! Error Distribution Diagram.

mod edd;
mod pr;
mod report;

pub use edd::{edd_decompose, EddCategory, EddReport};
pub use pr::{mean_pr_auc, pr_curve, MeanPrAuc, PrCurve};
pub use report::{accuracy_csv, edd_csv, edd_svg, pr_csv, pr_svg, ClassSummary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("ground truth has {gt} frames but prediction has {pred}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("no positive frames: the precision-recall curve is undefined")]
    NoPositives,
    #[error("empty label sequence")]
    Empty,
}

/// Maximal run of one class; `start` and `end` are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub class: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Run-length decomposition of a label sequence.
pub fn segmentize(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.class == c => s.end = i,
            _ => out.push(Segment {
                class: c,
                start: i,
                end: i,
            }),
        }
    }
    out
}

/// Fraction of ground-truth frames of class `c` predicted as `c`; `None`
/// when `c` does not occur in `gt`.
pub fn per_class_accuracy(
    gt: &[usize],
    pred: &[usize],
    c: usize,
) -> Result<Option<f64>, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let (mut total, mut hit) = (0usize, 0usize);
    for (&g, &p) in gt.iter().zip(pred) {
        if g == c {
            total += 1;
            hit += usize::from(p == c);
        }
    }
    Ok((total > 0).then(|| hit as f64 / total as f64))
}

/// Fraction of frames whose prediction matches the ground truth.
pub fn frame_accuracy(gt: &[usize], pred: &[usize]) -> Result<f64, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    let hit = gt.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hit as f64 / gt.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(class: usize, start: usize, end: usize) -> Segment {
        Segment { class, start, end }
    }

    #[test]
    fn segmentize_examples() {
        assert_eq!(
            segmentize(&[0, 0, 1, 1, 0]),
            vec![seg(0, 0, 1), seg(1, 2, 3), seg(0, 4, 4)]
        );
        assert_eq!(segmentize(&[2, 2, 2]), vec![seg(2, 0, 2)]);
        assert_eq!(segmentize(&[1, 0, 1]).len(), 3);
        assert!(segmentize(&[]).is_empty());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            per_class_accuracy(&[1, 1, 1, 1], &[1, 1, 0, 2], 1).unwrap(),
            Some(0.5)
        );
        assert_eq!(
            per_class_accuracy(&[3, 3, 0], &[0, 0, 0], 3).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            per_class_accuracy(&[3, 3, 0], &[3, 3, 0], 3).unwrap(),
            Some(1.0)
        );
        assert_eq!(per_class_accuracy(&[0, 0], &[0, 0], 5).unwrap(), None);
        assert!(per_class_accuracy(&[0], &[0, 1], 0).is_err());
    }
}
