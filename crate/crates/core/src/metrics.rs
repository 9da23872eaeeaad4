//! Thresholded and ranking metrics for imbalanced binary residue labels.
//!
//! A score counts as a positive prediction when `score >= threshold`;
//! [`DECISION_THRESHOLD`] is used wherever a threshold is implied.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub(crate) fn check_labels(scores_len: usize, labels: &[u8]) -> Result<()> {
    if scores_len != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores_len,
            right: labels.len(),
        });
    }
    if let Some((position, &value)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
        return Err(Error::NonBinaryLabel { position, value });
    }
    Ok(())
}

pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    check_labels(scores.len(), labels)?;
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores to count".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0)
}

pub fn fpr(c: &ConfusionCounts) -> f64 {
    ratio(c.fp, c.fp + c.tn)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Supplementary {
    pub sen: f64,
    pub pre: f64,
    pub spe: f64,
    pub acc: f64,
}

pub fn supplementary(c: &ConfusionCounts) -> Supplementary {
    Supplementary {
        sen: ratio(c.tp, c.tp + c.fn_),
        pre: ratio(c.tp, c.tp + c.fp),
        spe: ratio(c.tn, c.tn + c.fp),
        acc: ratio(c.tp + c.tn, c.total()),
    }
}

/// Average precision: mean over positives of the precision at that
/// positive's rank in descending score order. Tied positives are ranked
/// after tied negatives, which makes ties count against the scorer.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_labels(scores.len(), labels)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => labels[a].cmp(&labels[b]),
        o => o,
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// All reporting metrics at one threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub auprc: f64,
    pub mcc: f64,
    pub fpr: f64,
    pub sen: f64,
    pub pre: f64,
    pub spe: f64,
    pub acc: f64,
}

impl MetricReport {
    pub fn compute(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let c = confusion(scores, labels, threshold)?;
        let s = supplementary(&c);
        Ok(MetricReport {
            auprc: auprc(scores, labels)?,
            mcc: mcc(&c),
            fpr: fpr(&c),
            sen: s.sen,
            pre: s.pre,
            spe: s.spe,
            acc: s.acc,
        })
    }

    /// `(name, value)` pairs in reporting order.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("auprc", self.auprc),
            ("mcc", self.mcc),
            ("fpr", self.fpr),
            ("sen", self.sen),
            ("pre", self.pre),
            ("spe", self.spe),
            ("acc", self.acc),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[0.9, 0.2], &[1, 0], 0.5).unwrap(),
            ConfusionCounts::new(1, 1, 0, 0)
        );
        let c = confusion(&[0.1, 0.2, 0.49], &[1, 0, 1], 0.5).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));
        assert_eq!(
            confusion(&[0.5], &[0], 0.5).unwrap(),
            ConfusionCounts::new(0, 0, 1, 0)
        );
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&[0.1], &[1, 0], 0.5),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&[0.1, 0.2], &[1, 2], 0.5),
            Err(Error::NonBinaryLabel { position: 1, value: 2 })
        ));
    }

    #[test]
    fn confusion_matches_loop() {
        let mut r = rng::stream(5);
        let scores: Vec<f64> = (0..50).map(|_| r.random()).collect();
        let labels: Vec<u8> = (0..50).map(|_| r.random_range(0..2)).collect();
        let c = confusion(&scores, &labels, 0.5).unwrap();
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for i in 0..50 {
            let pred = scores[i] >= 0.5;
            let pos = labels[i] == 1;
            if pred && pos {
                tp += 1
            } else if pred {
                fp += 1
            } else if pos {
                fn_ += 1
            } else {
                tn += 1
            }
        }
        assert_eq!(c, ConfusionCounts::new(tp, tn, fp, fn_));
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&ConfusionCounts::new(5, 5, 0, 0)), 1.0);
        assert_eq!(mcc(&ConfusionCounts::new(0, 0, 5, 5)), -1.0);
        assert!((mcc(&ConfusionCounts::new(1, 2, 1, 1)) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(mcc(&ConfusionCounts::new(3, 0, 4, 0)), 0.0);
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr(&ConfusionCounts::new(0, 3, 1, 0)), 0.25);
        assert_eq!(fpr(&ConfusionCounts::new(4, 3, 0, 1)), 0.0);
        assert!((fpr(&ConfusionCounts::new(0, 3, 7, 0)) - 0.7).abs() < 1e-15);
        assert_eq!(fpr(&ConfusionCounts::new(2, 0, 0, 2)), 0.0);
    }

    #[test]
    fn supplementary_examples() {
        assert_eq!(supplementary(&ConfusionCounts::new(1, 0, 0, 1)).sen, 0.5);
        assert_eq!(supplementary(&ConfusionCounts::new(0, 99, 1, 0)).spe, 0.99);
        let s = supplementary(&ConfusionCounts::new(2, 6, 1, 1));
        assert!((s.acc - 0.8).abs() < 1e-15);
        assert!((s.pre - 2.0 / 3.0).abs() < 1e-15);
        let z = supplementary(&ConfusionCounts::default());
        assert_eq!((z.sen, z.pre, z.spe, z.acc), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[0.9, 0.8, 0.1, 0.05], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auprc(&[0.9, 0.8, 0.7], &[0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(
            auprc(&[0.3, 0.2], &[0, 0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auprc_ties_are_pessimistic() {
        // tied pair: positive ranked after the negative
        assert_eq!(auprc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auprc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn report_entries_order() {
        let r = MetricReport::compute(&[0.9, 0.1, 0.6], &[1, 0, 0], 0.5).unwrap();
        let names: Vec<_> = r.entries().iter().map(|e| e.0).collect();
        assert_eq!(names, ["auprc", "mcc", "fpr", "sen", "pre", "spe", "acc"]);
        assert_eq!(r.fpr, 0.5);
    }

    proptest! {
        #[test]
        fn auprc_monotone_invariant(
            data in prop::collection::vec((-5.0f64..5.0, 0u8..2), 2..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let mut labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            labels[0] = 1;
            let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(auprc(&scores, &labels).unwrap(), auprc(&warped, &labels).unwrap());
            let ap = auprc(&scores, &labels).unwrap();
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }

        #[test]
        fn count_metrics_bounded(tp in 0u64..500, tn in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
            let c = ConfusionCounts::new(tp, tn, fp, fn_);
            let m = mcc(&c);
            prop_assert!((-1.0..=1.0).contains(&m));
            let flipped = ConfusionCounts::new(tn, tp, fn_, fp);
            prop_assert!((m - mcc(&flipped)).abs() < 1e-12);
            let s = supplementary(&c);
            for v in [fpr(&c), s.sen, s.pre, s.spe, s.acc] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn confusion_partitions(data in prop::collection::vec((0.0f64..1.0, 0u8..2), 1..100)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            let c = confusion(&scores, &labels, 0.5).unwrap();
            prop_assert_eq!(c.total() as usize, scores.len());
        }
    }
}
