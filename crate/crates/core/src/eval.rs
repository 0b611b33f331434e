//! Train/test splitting, confusion counts and the sensitivity, specificity
//! and accuracy report. The positive class is desirable (label 1).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, DESIRABLE, UNDESIRABLE};
use crate::error::{invalid, Result, WeldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Leading records train, trailing records test.
    #[default]
    Ordered,
    /// Records are permuted with the seed before the cut.
    Shuffled,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Ordered => "ordered",
            SplitMode::Shuffled => "shuffled",
        })
    }
}

impl FromStr for SplitMode {
    type Err = WeldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordered" => Ok(SplitMode::Ordered),
            "shuffled" => Ok(SplitMode::Shuffled),
            other => Err(invalid(format!("split mode must be ordered or shuffled, got {other:?}"))),
        }
    }
}

/// Number of training records, `ceil(n * fraction)`. The small tolerance
/// keeps products such as `10 * 0.7` from rounding up past the exact value.
pub fn train_count(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    Ok(((n as f64 * train_fraction - 1e-9).ceil().max(0.0) as usize).min(n))
}

pub fn split_dataset(
    data: &LabeledDataset,
    train_fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if data.is_empty() {
        return Err(WeldError::EmptyInput("cannot split an empty dataset".into()));
    }
    let cut = train_count(data.len(), train_fraction)?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    if mode == SplitMode::Shuffled {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok((data.subset(&idx[..cut]), data.subset(&idx[cut..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }
}

pub fn confusion(predicted: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(invalid(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (DESIRABLE, DESIRABLE) => cm.tp += 1,
            (DESIRABLE, UNDESIRABLE) => cm.fp += 1,
            (UNDESIRABLE, UNDESIRABLE) => cm.tn += 1,
            (UNDESIRABLE, DESIRABLE) => cm.fn_ += 1,
            _ => return Err(invalid(format!("labels must be 0 or 1, got ({p}, {t})"))),
        }
    }
    Ok(cm)
}

/// Ratios derived from a confusion matrix. A ratio with a zero denominator
/// is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy_percent: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(WeldError::EmptyInput("confusion matrix has no entries".into()));
    }
    Ok(Metrics {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        accuracy_percent: 100.0 * cm.correct() as f64 / cm.total() as f64,
    })
}

/// Confusion matrix of `predict` over a labeled test set.
pub fn evaluate<F>(test: &LabeledDataset, mut predict: F) -> Result<ConfusionMatrix>
where
    F: FnMut(&[f64]) -> Result<u8>,
{
    let predicted = test
        .records
        .iter()
        .map(|r| predict(&r.features))
        .collect::<Result<Vec<u8>>>()?;
    confusion(&predicted, &test.labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model descriptor such as `50-25-25-2`.
    pub model: String,
    pub confusion: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy_percent: f64,
    pub training_time_seconds: f64,
}

impl EvalReport {
    pub fn new(model: impl Into<String>, confusion: ConfusionMatrix, training_time_seconds: f64) -> Result<Self> {
        let m = metrics(&confusion)?;
        Ok(Self {
            model: model.into(),
            confusion,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            accuracy_percent: m.accuracy_percent,
            training_time_seconds,
        })
    }
}

/// Reports ordered by accuracy, best first; equal accuracies keep their
/// input order.
pub fn compare_models(reports: &[EvalReport]) -> Vec<EvalReport> {
    let mut rows = reports.to_vec();
    rows.sort_by(|a, b| b.accuracy_percent.total_cmp(&a.accuracy_percent));
    rows
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

/// Aligned plain-text table with one row per report, in the given order.
pub fn render_table(rows: &[EvalReport]) -> String {
    let header = ["Model", "Sensitivity", "Specificity", "Accuracy%", "Time(s)"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                fmt_ratio(r.sensitivity),
                fmt_ratio(r.specificity),
                format!("{:.2}", r.accuracy_percent),
                format!("{:.3}", r.training_time_seconds),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |fields: [&str; 5]| {
        let mut parts = Vec::with_capacity(5);
        for (i, f) in fields.iter().enumerate() {
            parts.push(if i == 0 {
                format!("{f:<w$}", w = widths[i])
            } else {
                format!("{f:>w$}", w = widths[i])
            });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{FeatureVector, Provenance};
    use proptest::prelude::*;
    use rand::Rng;

    fn numbered(n: usize) -> LabeledDataset {
        let records = (0..n)
            .map(|i| FeatureVector {
                features: vec![i as f64],
                provenance: Provenance {
                    welder_id: "W01".into(),
                    trial: 0,
                    segment_index: i,
                },
            })
            .collect();
        LabeledDataset::new(records, (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
    }

    fn report(model: &str, acc: f64) -> EvalReport {
        EvalReport {
            model: model.into(),
            confusion: ConfusionMatrix::default(),
            sensitivity: None,
            specificity: None,
            accuracy_percent: acc,
            training_time_seconds: 0.0,
        }
    }

    #[test]
    fn split_sizes() {
        assert_eq!(train_count(1530, 0.667).unwrap(), 1021);
        assert_eq!(train_count(10, 0.7).unwrap(), 7);
        assert_eq!(train_count(1530, 0.7).unwrap(), 1071);
        let (tr, te) = split_dataset(&numbered(1530), 0.667, SplitMode::Ordered, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (1021, 509));
        assert_eq!(te.records[0].features, vec![1021.0]);
        assert!(train_count(10, 1.0).is_err());
        assert!(train_count(10, 0.0).is_err());
        let empty = LabeledDataset::new(vec![], vec![]).unwrap();
        assert!(split_dataset(&empty, 0.5, SplitMode::Ordered, 0).is_err());
    }

    #[test]
    fn shuffled_split_is_seeded() {
        let d = numbered(50);
        let a = split_dataset(&d, 0.7, SplitMode::Shuffled, 9).unwrap();
        let b = split_dataset(&d, 0.7, SplitMode::Shuffled, 9).unwrap();
        assert_eq!(a, b);
        let ordered = split_dataset(&d, 0.7, SplitMode::Ordered, 9).unwrap();
        assert_ne!(a.0, ordered.0);
        assert_eq!("shuffled".parse::<SplitMode>().unwrap(), SplitMode::Shuffled);
        assert!("random".parse::<SplitMode>().is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..200, frac in 0.01f64..0.99, shuffled in any::<bool>(), seed in any::<u64>()) {
            let d = numbered(n);
            let mode = if shuffled { SplitMode::Shuffled } else { SplitMode::Ordered };
            let (tr, te) = split_dataset(&d, frac, mode, seed).unwrap();
            prop_assert_eq!(tr.len() + te.len(), n);
            let mut seen: Vec<usize> = tr.records.iter().chain(&te.records).map(|r| r.provenance.segment_index).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for (r, l) in tr.iter().chain(te.iter()) {
                prop_assert_eq!(l, (r.provenance.segment_index % 2) as u8);
            }
        }

        #[test]
        fn accuracy_identity(tp in 0u64..10_000, fp in 0u64..10_000, tn in 0u64..10_000, fn_ in 0u64..10_000) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(cm.total() > 0);
            let m = metrics(&cm).unwrap();
            if let (Some(se), Some(sp)) = (m.sensitivity, m.specificity) {
                let p = (tp + fn_) as f64;
                let n = (tn + fp) as f64;
                let recomposed = (se * p + sp * n) / (p + n);
                prop_assert!((m.accuracy_percent / 100.0 - recomposed).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn paper_accuracy_arithmetic() {
        for tp in [0u64, 200, 477] {
            let cm = ConfusionMatrix { tp, tn: 477 - tp, fp: 16, fn_: 16 };
            let m = metrics(&cm).unwrap();
            assert!((m.accuracy_percent - 93.71).abs() < 0.005, "{}", m.accuracy_percent);
        }
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix { tp: 3, fn_: 1, tn: 0, fp: 0 }).unwrap();
        assert_eq!(m.sensitivity, Some(0.75));
        assert_eq!(m.specificity, None);
        let m = metrics(&ConfusionMatrix { tp: 1, fn_: 1, tn: 1, fp: 1 }).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.accuracy_percent), (Some(0.5), Some(0.5), 50.0));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn confusion_examples() {
        let ones = vec![1u8; 12];
        assert_eq!(confusion(&ones, &ones).unwrap(), ConfusionMatrix { tp: 12, ..Default::default() });
        let truth: Vec<u8> = (0..12).map(|i| (i % 3 == 0) as u8).collect();
        let flipped: Vec<u8> = truth.iter().map(|l| 1 - l).collect();
        let cm = confusion(&flipped, &truth).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn confusion_matches_direct_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(0..100);
            let p: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let t: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let count = |a: u8, b: u8| p.iter().zip(&t).filter(|&(&x, &y)| x == a && y == b).count() as u64;
            let cm = confusion(&p, &t).unwrap();
            assert_eq!(cm, ConfusionMatrix { tp: count(1, 1), fp: count(1, 0), tn: count(0, 0), fn_: count(0, 1) });
        }
    }

    #[test]
    fn comparison_ordering() {
        let rows = compare_models(&[report("rbf", 89.4), report("mlp", 94.7)]);
        assert_eq!(rows[0].model, "mlp");
        let rows = compare_models(&[report("a", 90.0), report("b", 95.0), report("c", 90.0), report("d", 80.0)]);
        let order: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(order, ["b", "a", "c", "d"]);
    }

    #[test]
    fn table_and_json() {
        let cm = ConfusionMatrix { tp: 3, fn_: 1, tn: 0, fp: 0 };
        let r = EvalReport::new("50-35-2", cm, 1.5).unwrap();
        let table = render_table(&[r.clone(), report("50-95-2", 50.0)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].contains("0.7500") && lines[1].contains("undefined") && lines[1].contains("75.00"));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["specificity"], serde_json::Value::Null);
        assert_eq!(json["confusion"]["fn"], 1);
        let back: EvalReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
