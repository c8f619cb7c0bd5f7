use serde::{Deserialize, Serialize};

use crate::dataio::{Mask, ProbabilityMap};
use crate::error::{Error, Result};

/// Pixel counts of a binary prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == 1, g == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`, or 0 when nothing is positive in either mask.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

/// `TP / (TP + FP + FN)`, or 0 on an empty denominator.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let den = c.tp + c.fp + c.fn_;
    if den == 0 {
        0.0
    } else {
        c.tp as f64 / den as f64
    }
}

/// Probability that a random tampered pixel outscores a random original
/// one, ties counting one half. Computed from mid-ranks.
///
/// A mask holding a single class has no such pairs and yields
/// [`Error::Degenerate`].
pub fn auc(prob: &ProbabilityMap, gt: &Mask) -> Result<f64> {
    if prob.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "probability map {:?} vs ground truth {:?}",
            prob.dims(),
            gt.dims()
        )));
    }
    auc_scores(prob.data(), gt.data())
}

pub(crate) fn auc_scores(scores: &[f32], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(
            "AUC needs both tampered and original pixels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        let pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Pixels with probability `>= threshold` become tampered.
pub fn threshold_map(prob: &ProbabilityMap, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(crate::error::invalid!(
            "threshold must be in (0, 1), got {threshold}"
        ));
    }
    let data = prob
        .data()
        .iter()
        .map(|&p| u8::from(f64::from(p) >= threshold))
        .collect();
    Mask::new(prob.height(), prob.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8], w: usize) -> Mask {
        Mask::new(bits.len() / w, w, bits.to_vec()).unwrap()
    }

    #[test]
    fn hand_counts() {
        let c = ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        };
        assert!((f1(&c) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&c), 0.5);
        assert_eq!(f1(&ConfusionCounts::default()), 0.0);
        assert_eq!(iou(&ConfusionCounts::default()), 0.0);
    }

    #[test]
    fn identical_and_inverted_masks() {
        let gt = mask(&[1, 0, 0, 1, 1, 0], 3);
        let same = confusion(&gt, &gt).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        assert_eq!((f1(&same), iou(&same)), (1.0, 1.0));
        let inv = mask(&[0, 1, 1, 0, 0, 1], 3);
        let c = confusion(&inv, &gt).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!(c.total(), 6);
        assert!(confusion(&mask(&[1, 0], 2), &gt).is_err());
    }

    #[test]
    fn auc_extremes() {
        let gt = mask(&[1, 1, 0, 0], 2);
        let sep = ProbabilityMap::new(2, 2, vec![0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(auc(&sep, &gt).unwrap(), 1.0);
        let flat = ProbabilityMap::new(2, 2, vec![0.5; 4]).unwrap();
        assert_eq!(auc(&flat, &gt).unwrap(), 0.5);
        let one_class = mask(&[1, 1, 1, 1], 2);
        assert!(matches!(auc(&flat, &one_class), Err(Error::Degenerate(_))));
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = ProbabilityMap::new(1, 3, vec![0.49, 0.5, 0.51]).unwrap();
        assert_eq!(threshold_map(&p, 0.5).unwrap().data(), &[0, 1, 1]);
        assert!(threshold_map(&p, 1.0).is_err());
    }
}
