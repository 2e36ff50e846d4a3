//! Confusion-matrix metrics.

/// Ground-truth label of a corpus entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Label {
    Malicious,
    Benign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predictions: &[(Label, bool)]) -> Self {
        let mut c = Confusion::default();
        for &(label, flagged) in predictions {
            c.record(label, flagged);
        }
        c
    }

    pub fn record(&mut self, label: Label, flagged: bool) {
        match (label, flagged) {
            (Label::Malicious, true) => self.tp += 1,
            (Label::Malicious, false) => self.fn_ += 1,
            (Label::Benign, true) => self.fp += 1,
            (Label::Benign, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("predictions need at least one malicious and one benign entry")]
    DegenerateInput,
}

/// Metric suite of one evaluation. `None` marks a value whose defining
/// ratio has a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    #[cfg_attr(feature = "serde", serde(with = "not_defined"))]
    pub f1: Option<f64>,
    #[cfg_attr(feature = "serde", serde(with = "not_defined"))]
    pub precision: Option<f64>,
    pub fpr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

impl Metrics {
    /// F1 for selection and averaging: undefined counts as zero.
    pub fn f1_or_zero(&self) -> f64 {
        self.f1.unwrap_or(0.0)
    }
}

/// Standard confusion-matrix metrics over `(label, flagged)` pairs.
pub fn compute_metrics(predictions: &[(Label, bool)]) -> Result<Metrics, MetricsError> {
    metrics_from_confusion(Confusion::from_predictions(predictions))
}

pub fn metrics_from_confusion(c: Confusion) -> Result<Metrics, MetricsError> {
    let positives = c.tp + c.fn_;
    let negatives = c.fp + c.tn;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateInput);
    }
    let div = |a: u64, b: u64| a as f64 / b as f64;
    let precision = (c.tp + c.fp > 0).then(|| div(c.tp, c.tp + c.fp));
    // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); P+R vanishes exactly when TP = 0.
    let f1 = (c.tp > 0).then(|| div(2 * c.tp, 2 * c.tp + c.fp + c.fn_));
    let m = Metrics {
        f1,
        precision,
        fpr: div(c.fp, negatives),
        fnr: div(c.fn_, positives),
        accuracy: div(c.tp + c.tn, c.total()),
        recall: div(c.tp, positives),
        confusion: c,
    };
    assert!((m.recall - (1.0 - m.fnr)).abs() < 1e-12, "recall identity");
    assert!((m.accuracy - div(c.tp + c.tn, c.total())).abs() < 1e-12, "accuracy identity");
    Ok(m)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

#[cfg(feature = "serde")]
mod not_defined {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("NOT_DEFINED"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr<'a> {
        Num(f64),
        #[serde(borrow)]
        Tag(&'a str),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Some(x)),
            Repr::Tag("NOT_DEFINED") => Ok(None),
            Repr::Tag(other) => Err(serde::de::Error::custom(alloc::format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn preds(tp: usize, fn_: usize, fp: usize, tn: usize) -> Vec<(Label, bool)> {
        let mut v = Vec::new();
        v.extend(core::iter::repeat_n((Label::Malicious, true), tp));
        v.extend(core::iter::repeat_n((Label::Malicious, false), fn_));
        v.extend(core::iter::repeat_n((Label::Benign, true), fp));
        v.extend(core::iter::repeat_n((Label::Benign, false), tn));
        v
    }

    #[test]
    fn all_correct() {
        let m = compute_metrics(&preds(10, 0, 0, 10)).unwrap();
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.fnr, 0.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn all_flagged() {
        let m = compute_metrics(&preds(10, 0, 10, 0)).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.fpr, 1.0);
    }

    #[test]
    fn headline_shape() {
        let m = compute_metrics(&preds(97, 3, 1, 99)).unwrap();
        assert!((m.recall - 0.97).abs() < 1e-12);
        assert!((m.fpr - 0.01).abs() < 1e-12);
        let p = 97.0 / 98.0;
        let r = 0.97;
        assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((m.f1.unwrap() - 0.979).abs() < 1e-3);
    }

    #[test]
    fn undefined_values_are_explicit() {
        let m = compute_metrics(&preds(0, 5, 0, 5)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.f1_or_zero(), 0.0);
        let m = compute_metrics(&preds(0, 5, 3, 2)).unwrap();
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn degenerate_input() {
        assert_eq!(compute_metrics(&preds(3, 1, 0, 0)), Err(MetricsError::DegenerateInput));
        assert_eq!(compute_metrics(&preds(0, 0, 2, 2)), Err(MetricsError::DegenerateInput));
        assert_eq!(compute_metrics(&[]), Err(MetricsError::DegenerateInput));
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 1.0]), (1.0, 0.0));
        let (m, s) = mean_std(&[0.0, 2.0]);
        assert_eq!((m, s), (1.0, 1.0));
    }
}
