use serde::Serialize;

use super::{segmentize, EvalError};

/// Frame categories of the Error Distribution Diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EddCategory {
    Correct,
    Overfill,
    Underfill,
    UnderfillSubstitute,
    UnderfillOverfill,
    Merge,
    Fragmentation,
    FragmentationSubstitute,
    Insertion,
    Deletion,
}

impl EddCategory {
    pub const ERRORS: [EddCategory; 9] = [
        Self::Overfill,
        Self::Underfill,
        Self::UnderfillSubstitute,
        Self::UnderfillOverfill,
        Self::Merge,
        Self::Fragmentation,
        Self::FragmentationSubstitute,
        Self::Insertion,
        Self::Deletion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Correct => "correct",
            Self::Overfill => "overfill",
            Self::Underfill => "underfill",
            Self::UnderfillSubstitute => "underfill-substitute",
            Self::UnderfillOverfill => "underfill-overfill",
            Self::Merge => "merge",
            Self::Fragmentation => "fragmentation",
            Self::FragmentationSubstitute => "fragmentation-substitute",
            Self::Insertion => "insertion",
            Self::Deletion => "deletion",
        }
    }

    /// Substantive errors, as opposed to boundary timing errors.
    pub fn is_serious(self) -> bool {
        matches!(
            self,
            Self::Merge
                | Self::Fragmentation
                | Self::FragmentationSubstitute
                | Self::Insertion
                | Self::Deletion
        )
    }
}

/// Frame counts per EDD category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EddReport {
    pub correct: usize,
    pub overfill: usize,
    pub underfill: usize,
    pub underfill_substitute: usize,
    pub underfill_overfill: usize,
    pub merge: usize,
    pub fragmentation: usize,
    pub fragmentation_substitute: usize,
    pub insertion: usize,
    pub deletion: usize,
}

impl EddReport {
    pub fn count(&self, c: EddCategory) -> usize {
        match c {
            EddCategory::Correct => self.correct,
            EddCategory::Overfill => self.overfill,
            EddCategory::Underfill => self.underfill,
            EddCategory::UnderfillSubstitute => self.underfill_substitute,
            EddCategory::UnderfillOverfill => self.underfill_overfill,
            EddCategory::Merge => self.merge,
            EddCategory::Fragmentation => self.fragmentation,
            EddCategory::FragmentationSubstitute => self.fragmentation_substitute,
            EddCategory::Insertion => self.insertion,
            EddCategory::Deletion => self.deletion,
        }
    }

    fn slot(&mut self, c: EddCategory) -> &mut usize {
        match c {
            EddCategory::Correct => &mut self.correct,
            EddCategory::Overfill => &mut self.overfill,
            EddCategory::Underfill => &mut self.underfill,
            EddCategory::UnderfillSubstitute => &mut self.underfill_substitute,
            EddCategory::UnderfillOverfill => &mut self.underfill_overfill,
            EddCategory::Merge => &mut self.merge,
            EddCategory::Fragmentation => &mut self.fragmentation,
            EddCategory::FragmentationSubstitute => &mut self.fragmentation_substitute,
            EddCategory::Insertion => &mut self.insertion,
            EddCategory::Deletion => &mut self.deletion,
        }
    }

    pub fn total(&self) -> usize {
        self.correct + self.errors()
    }

    pub fn errors(&self) -> usize {
        EddCategory::ERRORS.iter().map(|&c| self.count(c)).sum()
    }

    pub fn serious(&self) -> usize {
        EddCategory::ERRORS
            .iter()
            .filter(|c| c.is_serious())
            .map(|&c| self.count(c))
            .sum()
    }

    /// Share of all evaluated frames that carry a serious error.
    pub fn serious_fraction(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.serious() as f64 / n as f64,
        }
    }

    /// Adds the counts of another report.
    pub fn merge_with(&mut self, other: &EddReport) {
        for c in std::iter::once(EddCategory::Correct).chain(EddCategory::ERRORS) {
            *self.slot(c) += other.count(c);
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    None,
    Underfill,
    Fragmentation,
    Deletion,
    Overfill,
    Merge,
    Insertion,
}

/// Position of each frame of a segment relative to the frames where the
/// other sequence agrees with it: `Deletion`/`Insertion` when there is no
/// agreement at all, edge frames outside the agreeing span, interior
/// frames inside it.
fn classify_side(
    reference: &[usize],
    other: &[usize],
    edge: Side,
    interior: Side,
    missing: Side,
) -> Vec<Side> {
    let mut out = vec![Side::None; reference.len()];
    for s in segmentize(reference) {
        if s.class == 0 {
            continue;
        }
        let agree: Vec<usize> = s.frames().filter(|&i| other[i] == s.class).collect();
        let (Some(&lo), Some(&hi)) = (agree.first(), agree.last()) else {
            for i in s.frames() {
                out[i] = missing;
            }
            continue;
        };
        for i in s.frames().filter(|&i| other[i] != s.class) {
            out[i] = if i < lo || i > hi { edge } else { interior };
        }
    }
    out
}

/// Assigns every frame to exactly one EDD category.
///
/// False-negative side, per ground-truth segment of class `c != 0`: with no
/// predicted `c` inside it all mismatching frames are deletions; otherwise
/// mismatches before the first or after the last agreeing frame are
/// underfill and those in between are fragmentation, each a substitute
/// variant when the prediction there is another non-zero class.
///
/// False-positive side, per predicted segment of class `c != 0`: with no
/// ground-truth `c` inside it the frames are insertions; otherwise
/// mismatches outside the agreeing span are overfill and those inside it
/// bridge two ground-truth segments, i.e. merge.
///
/// A frame with non-zero ground truth takes its false-negative category,
/// except that underfill meeting overfill becomes underfill-overfill.
/// Frames with ground truth 0 take the false-positive category.
pub fn edd_decompose(gt: &[usize], pred: &[usize]) -> Result<EddReport, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let fn_side = classify_side(
        gt,
        pred,
        Side::Underfill,
        Side::Fragmentation,
        Side::Deletion,
    );
    let fp_side = classify_side(pred, gt, Side::Overfill, Side::Merge, Side::Insertion);
    let mut report = EddReport::default();
    for i in 0..gt.len() {
        let category = if gt[i] == pred[i] {
            EddCategory::Correct
        } else if gt[i] != 0 {
            let substitute = pred[i] != 0;
            match (fn_side[i], fp_side[i]) {
                (Side::Underfill, Side::Overfill) => EddCategory::UnderfillOverfill,
                (Side::Underfill, _) if substitute => EddCategory::UnderfillSubstitute,
                (Side::Underfill, _) => EddCategory::Underfill,
                (Side::Fragmentation, _) if substitute => EddCategory::FragmentationSubstitute,
                (Side::Fragmentation, _) => EddCategory::Fragmentation,
                _ => EddCategory::Deletion,
            }
        } else {
            match fp_side[i] {
                Side::Overfill => EddCategory::Overfill,
                Side::Merge => EddCategory::Merge,
                _ => EddCategory::Insertion,
            }
        };
        *report.slot(category) += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(parts: &[(usize, usize)]) -> Vec<usize> {
        parts
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
            .collect()
    }

    #[test]
    fn perfect_prediction_is_all_correct() {
        let gt = runs(&[(0, 3), (2, 4), (5, 2)]);
        let r = edd_decompose(&gt, &gt).unwrap();
        assert_eq!(r.correct, 9);
        assert_eq!(r.errors(), 0);
    }

    #[test]
    fn early_onset_is_overfill() {
        let gt = runs(&[(0, 7), (1, 14), (0, 3)]);
        let pred = runs(&[(0, 5), (1, 16), (0, 3)]);
        let r = edd_decompose(&gt, &pred).unwrap();
        assert_eq!(r.overfill, 2);
        assert_eq!(r.serious(), 0);
        assert_eq!(r.total(), 24);
    }

    #[test]
    fn scattered_prediction() {
        let gt = runs(&[(0, 7), (1, 14), (0, 3)]);
        let mut pred = vec![0; 24];
        for i in [0, 1, 2, 3, 4, 8, 11, 14] {
            pred[i] = 1;
        }
        let r = edd_decompose(&gt, &pred).unwrap();
        assert_eq!(r.insertion, 5);
        assert_eq!(r.fragmentation, 4);
        assert_eq!(r.underfill, 7);
        assert_eq!(r.fragmentation_substitute + r.underfill_substitute, 0);
        assert_eq!(r.correct, 8);
    }

    #[test]
    fn boundary_between_scenarios_is_underfill_overfill() {
        let r = edd_decompose(&[1, 1, 2, 2], &[1, 1, 1, 2]).unwrap();
        assert_eq!(r.underfill_overfill, 1);
        assert_eq!(r.total(), 4);
    }

    #[test]
    fn bridging_gap_is_merge_and_missing_scenario_is_deletion() {
        let r = edd_decompose(&[1, 1, 0, 1, 1], &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!(r.merge, 1);
        let r = edd_decompose(&[0, 3, 3, 0], &[0, 0, 0, 0]).unwrap();
        assert_eq!(r.deletion, 2);
        let r = edd_decompose(&[0, 3, 3, 0], &[0, 4, 4, 0]).unwrap();
        assert_eq!((r.deletion, r.insertion), (2, 0));
    }

    #[test]
    fn substitute_variants() {
        let r = edd_decompose(&[2, 2, 2, 2, 2], &[2, 3, 2, 2, 4]).unwrap();
        assert_eq!(r.fragmentation_substitute, 1);
        assert_eq!(r.underfill_substitute, 1);
        assert!(EddCategory::FragmentationSubstitute.is_serious());
        assert!(!EddCategory::UnderfillSubstitute.is_serious());
    }
}
