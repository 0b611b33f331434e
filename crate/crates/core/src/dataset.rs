//! Labeled pattern databases and their CSV representation
//! (`welder_id,trial,segment_index,label,f0,...`).

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result, WeldError};
use crate::signal::{FeatureVector, Provenance};

/// Label of a desirable (steady) pattern.
pub const DESIRABLE: u8 = 1;
/// Label of an undesirable (error) pattern.
pub const UNDESIRABLE: u8 = 0;

/// Two-output decision rule shared by the classifiers: output 0 votes for
/// desirable, output 1 for undesirable, ties go to desirable.
pub fn label_from_outputs(outputs: [f64; 2]) -> u8 {
    if outputs[0] >= outputs[1] {
        DESIRABLE
    } else {
        UNDESIRABLE
    }
}

/// One-hot training target for a label.
pub fn one_hot(label: u8) -> [f64; 2] {
    if label == DESIRABLE {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

/// Feature vectors with binary labels; `labels[i]` belongs to `records[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub records: Vec<FeatureVector>,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    /// Checks label encoding, equal feature dimensions and unique provenance.
    pub fn new(records: Vec<FeatureVector>, labels: Vec<u8>) -> Result<Self> {
        if records.len() != labels.len() {
            return Err(invalid(format!(
                "{} records but {} labels",
                records.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(invalid(format!("label {l} is not 0 or 1")));
        }
        if let Some(first) = records.first() {
            for r in &records {
                check_dim(first.dim(), r.dim())?;
            }
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(&r.provenance) {
                return Err(invalid(format!("duplicate record provenance {:?}", r.provenance)));
            }
        }
        Ok(Self { records, labels })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.records.first().map(FeatureVector::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureVector, u8)> {
        self.records.iter().zip(self.labels.iter().copied())
    }

    pub(crate) fn check_binary(&self) -> Result<()> {
        if self.records.len() != self.labels.len() {
            return Err(invalid("records and labels differ in length"));
        }
        match self.labels.iter().find(|&&l| l > 1) {
            Some(l) => Err(invalid(format!("label {l} is not 0 or 1"))),
            None => Ok(()),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Writes the dataset CSV. `labels` may be absent (unlabeled patterns).
pub fn write_dataset_csv<W: Write>(records: &[FeatureVector], labels: Option<&[u8]>, mut out: W) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != records.len() {
            return Err(invalid("label count does not match record count"));
        }
    }
    let dim = records.first().map_or(0, FeatureVector::dim);
    write!(out, "welder_id,trial,segment_index,label")?;
    for i in 0..dim {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for (i, r) in records.iter().enumerate() {
        check_dim(dim, r.dim())?;
        let p = &r.provenance;
        write!(out, "{},{},{},", p.welder_id, p.trial, p.segment_index)?;
        if let Some(l) = labels {
            write!(out, "{}", l[i])?;
        }
        for v in &r.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset CSV; unlabeled rows yield `None`.
pub fn read_dataset_csv<R: BufRead>(input: R) -> Result<(Vec<FeatureVector>, Vec<Option<u8>>)> {
    let fmt = |line: usize, msg: String| WeldError::Format {
        what: "dataset csv",
        line,
        msg,
    };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| fmt(1, "missing header".into()))??;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 4 || cols[..4] != ["welder_id", "trial", "segment_index", "label"] {
        return Err(fmt(1, format!("unexpected header {header:?}")));
    }
    for (i, c) in cols[4..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(fmt(1, format!("unexpected feature column {c:?}")));
        }
    }
    let dim = cols.len() - 4;
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 4 {
            return Err(fmt(line_no, format!("expected {} fields, found {}", dim + 4, fields.len())));
        }
        let trial = fields[1].parse().map_err(|e| fmt(line_no, format!("trial: {e}")))?;
        let segment_index = fields[2]
            .parse()
            .map_err(|e| fmt(line_no, format!("segment_index: {e}")))?;
        let label = match fields[3] {
            "" => None,
            "0" => Some(UNDESIRABLE),
            "1" => Some(DESIRABLE),
            other => return Err(fmt(line_no, format!("label {other:?} is not 0, 1 or empty"))),
        };
        let features = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| fmt(line_no, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        records.push(FeatureVector {
            features,
            provenance: Provenance {
                welder_id: fields[0].to_string(),
                trial,
                segment_index,
            },
        });
        labels.push(label);
    }
    Ok((records, labels))
}

/// Reads a dataset CSV in which every row must carry a label.
pub fn read_labeled_csv<R: BufRead>(input: R) -> Result<LabeledDataset> {
    let (records, labels) = read_dataset_csv(input)?;
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| invalid(format!("record {i} has no label"))))
        .collect::<Result<Vec<u8>>>()?;
    LabeledDataset::new(records, labels)
}
