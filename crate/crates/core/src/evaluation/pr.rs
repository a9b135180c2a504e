use super::EvalError;

/// One-vs-all precision-recall curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub class: usize,
    /// `(recall, precision)` at each distinct score threshold, from the
    /// highest threshold down.
    pub points: Vec<(f64, f64)>,
    /// Step-wise area: `sum_k (R_k - R_{k-1}) * P_k` with `R_0 = 0`.
    pub auc: f64,
}

/// Sweeps every distinct score as a threshold (score >= threshold counts
/// as positive).
pub fn pr_curve(class: usize, scores: &[f64], positive: &[bool]) -> Result<PrCurve, EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch {
            gt: positive.len(),
            pred: scores.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut auc, mut prev_recall) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve { class, points, auc })
}

/// Macro average of per-class PR-AUC over frames pooled across sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPrAuc {
    pub mean: f64,
    /// Per-class curves; `None` for classes without positive frames.
    pub curves: Vec<Option<PrCurve>>,
}

impl MeanPrAuc {
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.curves
            .iter()
            .map(|c| c.as_ref().map(|c| c.auc))
            .collect()
    }
}

/// `probabilities` holds one row of `n_classes` scores per frame. Classes
/// with no positive frame are skipped with a warning; if no class has one
/// the mean is NaN.
pub fn mean_pr_auc(
    probabilities: &[Vec<f64>],
    gt: &[usize],
    n_classes: usize,
) -> Result<MeanPrAuc, EvalError> {
    if probabilities.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: probabilities.len(),
        });
    }
    let mut curves = Vec::with_capacity(n_classes);
    let mut present = Vec::new();
    for c in 0..n_classes {
        let scores: Vec<f64> = probabilities.iter().map(|row| row[c]).collect();
        let positive: Vec<bool> = gt.iter().map(|&g| g == c).collect();
        match pr_curve(c, &scores, &positive) {
            Ok(curve) => {
                present.push(curve.auc);
                curves.push(Some(curve));
            }
            Err(EvalError::NoPositives) => {
                log::warn!("class {c} has no frames in this split; excluded from the mean PR-AUC");
                curves.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let mean = if present.is_empty() {
        f64::NAN
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(MeanPrAuc { mean, curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_curve() {
        let c = pr_curve(0, &[0.9, 0.8, 0.7, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(
            c.points,
            vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0), (1.0, 0.5)]
        );
        assert!((c.auc - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_scorers() {
        let c = pr_curve(1, &[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        let c = pr_curve(1, &[0.5; 5], &[true, false, false, true, false]).unwrap();
        assert!((c.auc - 0.4).abs() < 1e-12);
        assert_eq!(pr_curve(1, &[0.5], &[false]), Err(EvalError::NoPositives));
    }

    #[test]
    fn mean_over_present_classes() {
        let probs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = mean_pr_auc(&probs, &[0, 1], 2).unwrap();
        assert_eq!(m.mean, 1.0);
        let m = mean_pr_auc(&probs, &[0, 0], 2).unwrap();
        assert_eq!(m.per_class(), vec![Some(1.0), None]);
    }
}
