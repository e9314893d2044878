use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Label;

/// `confusion[truth][predicted]`.
pub type Confusion = [[usize; Label::COUNT]; Label::COUNT];

pub fn confusion_matrix(truth: &[Label], predicted: &[Label]) -> Confusion {
    let mut m = [[0; Label::COUNT]; Label::COUNT];
    for (t, p) in truth.iter().zip(predicted) {
        m[t.index()][p.index()] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undefined: bool,
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            support: tp + fn_,
            undefined: p.is_none() || r.is_none() || precision + recall == 0.0,
        }
    }
}

/// Unweighted mean over the attack classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub confusion: Confusion,
    /// Keyed by class name.
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_attack: MacroMetrics,
    pub accuracy: f64,
}

impl RunMetrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let mut per_class = BTreeMap::new();
        let mut macro_ = MacroMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..Label::COUNT).map(|c| confusion[c][c]).sum();
        for class in Label::ALL {
            let c = class.index();
            let tp = confusion[c][c];
            let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
            let fp: usize = (0..Label::COUNT).map(|t| confusion[t][c]).sum::<usize>() - tp;
            let m = ClassMetrics::from_counts(tp, fp, fn_);
            if class.is_attack() {
                let k = Label::ATTACKS.len() as f64;
                macro_.precision += m.precision / k;
                macro_.recall += m.recall / k;
                macro_.f1 += m.f1 / k;
            }
            per_class.insert(class.name().to_string(), m);
        }
        Self {
            confusion,
            per_class,
            macro_attack: macro_,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }

    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Self {
        Self::from_confusion(confusion_matrix(truth, predicted))
    }

    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.name()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn hand_fixture() {
        let m = RunMetrics::from_predictions(
            &[Normal, SrcAttack, SrcAttack, OffAttack],
            &[Normal, Normal, SrcAttack, OffAttack],
        );
        let src = m.class(SrcAttack);
        assert_eq!(src.precision, 1.0);
        assert_eq!(src.recall, 0.5);
        assert!((src.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.class(Normal).precision, 0.5);
        let dst = m.class(DstAttack);
        assert!(dst.undefined && dst.f1 == 0.0);
        assert!((m.macro_attack.f1 - (2.0 / 3.0 + 1.0 + 0.0) / 3.0).abs() < 1e-15);
        for (t, row) in m.confusion.iter().enumerate() {
            let want = [1, 2, 1, 0][t];
            assert_eq!(row.iter().sum::<usize>(), want);
        }
    }

    #[test]
    fn perfect_and_all_normal() {
        let truth = [Normal, SrcAttack, OffAttack, DstAttack, Normal];
        let m = RunMetrics::from_predictions(&truth, &truth);
        for c in m.per_class.values() {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        let m = RunMetrics::from_predictions(&truth, &[Normal; 5]);
        for a in Label::ATTACKS {
            assert_eq!(m.class(a).recall, 0.0);
        }
        assert_eq!(m.macro_attack.f1, 0.0);
    }
}
