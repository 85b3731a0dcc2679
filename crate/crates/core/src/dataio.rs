//! Labeled score datasets: delimited-text ingestion, serialization and
//! stratified fold splitting.
//!
//! A dataset row carries the class label, the base classifier's score and one
//! or more auxiliary features. Columns are selected by header name, so the
//! file may contain extra columns that are simply ignored.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OerError, Result};

/// Binary class label. Stored as +1 / -1 regardless of the source encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_sign(sign: i32) -> Option<Label> {
        match sign {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// One observation: label, base-classifier score and auxiliary features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub label: Label,
    pub score: f64,
    pub aux: Vec<f64>,
}

impl LabeledSample {
    pub fn new(label: Label, score: f64, aux: Vec<f64>) -> Self {
        Self { label, score, aux }
    }
}

/// An immutable collection of samples sharing one auxiliary dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDataset {
    samples: Vec<LabeledSample>,
    aux_names: Vec<String>,
}

impl ScoredDataset {
    /// Validates that every sample is finite and has `aux_names.len()` features.
    pub fn new(samples: Vec<LabeledSample>, aux_names: Vec<String>) -> Result<Self> {
        if aux_names.is_empty() {
            return invalid("a dataset needs at least one auxiliary feature");
        }
        let m = aux_names.len();
        for (i, s) in samples.iter().enumerate() {
            if s.aux.len() != m {
                return invalid(format!(
                    "sample {i} has {} auxiliary values, expected {m}",
                    s.aux.len()
                ));
            }
            if !s.score.is_finite() || s.aux.iter().any(|v| !v.is_finite()) {
                return invalid(format!("sample {i} contains a non-finite value"));
            }
        }
        Ok(Self { samples, aux_names })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_positive(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_positive()).count()
    }

    pub fn count_negative(&self) -> usize {
        self.len() - self.count_positive()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.count_positive();
        pos > 0 && pos < self.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.aux_names.iter().position(|n| n == name)
    }

    /// Builds a new dataset from a subset of sample indices.
    pub fn subset(&self, indices: &[usize]) -> ScoredDataset {
        ScoredDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            aux_names: self.aux_names.clone(),
        }
    }

    /// Scores split by class, in dataset order.
    pub fn class_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for s in &self.samples {
            match s.label {
                Label::Positive => pos.push(s.score),
                Label::Negative => neg.push(s.score),
            }
        }
        (pos, neg)
    }
}

/// Mapping from raw label strings to classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for LabelMap {
    fn default() -> Self {
        Self {
            positive: vec!["1".into(), "+1".into()],
            negative: vec!["-1".into(), "0".into()],
        }
    }
}

impl LabelMap {
    pub fn new(positive: &[&str], negative: &[&str]) -> Self {
        Self {
            positive: positive.iter().map(|s| s.to_string()).collect(),
            negative: negative.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn map(&self, raw: &str) -> Option<Label> {
        let raw = raw.trim();
        if self.positive.iter().any(|p| p == raw) {
            Some(Label::Positive)
        } else if self.negative.iter().any(|n| n == raw) {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

/// Column mapping for delimited input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub label_column: String,
    pub score_column: String,
    /// Auxiliary columns by name. Empty means every column other than the
    /// label and score columns, in header order.
    pub aux_columns: Vec<String>,
    pub labels: LabelMap,
    pub delimiter: char,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            score_column: "score".into(),
            aux_columns: Vec::new(),
            labels: LabelMap::default(),
            delimiter: ',',
        }
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(OerError::Schema(format!("delimiter {c:?} is not a single ASCII character")))
    }
}

fn csv_error(err: csv::Error) -> OerError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => OerError::Parse {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Io(_) => OerError::Csv(err),
        _ => OerError::Parse { line, message: err.to_string() },
    }
}

/// Parses a delimited-text stream with a header row into a dataset.
pub fn parse_dataset<R: Read>(source: R, schema: &Schema) -> Result<ScoredDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(schema.delimiter)?)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(OerError::EmptyInput);
    }
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OerError::Schema(format!("column {name:?} not found in header")))
    };
    let label_col = column(&schema.label_column)?;
    let score_col = column(&schema.score_column)?;
    let aux_names: Vec<String> = if schema.aux_columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_col && *i != score_col)
            .map(|(_, h)| h.to_string())
            .collect()
    } else {
        schema.aux_columns.clone()
    };
    if aux_names.is_empty() {
        return Err(OerError::Schema("no auxiliary feature columns".into()));
    }
    let aux_cols = aux_names.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw_label = &record[label_col];
        let label = schema.labels.map(raw_label).ok_or_else(|| {
            OerError::Schema(format!("line {line}: label {raw_label:?} is not in the label mapping"))
        })?;
        let number = |col: usize| -> Result<f64> {
            let field = &record[col];
            let value: f64 = field.parse().map_err(|_| OerError::Parse {
                line,
                message: format!("column {:?}: cannot parse {field:?} as a number", &headers[col]),
            })?;
            if !value.is_finite() {
                return Err(OerError::Parse {
                    line,
                    message: format!("column {:?}: non-finite value {field:?}", &headers[col]),
                });
            }
            Ok(value)
        };
        let score = number(score_col)?;
        let aux = aux_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSample { label, score, aux });
    }
    if samples.is_empty() {
        return Err(OerError::EmptyInput);
    }
    ScoredDataset::new(samples, aux_names)
}

/// Writes a dataset as comma-separated text with header `label,score,<aux...>`.
/// Labels are written as `1` / `-1`; numbers use shortest round-trip formatting.
pub fn write_dataset<W: Write>(sink: W, data: &ScoredDataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["label".to_string(), "score".to_string()];
    header.extend(data.aux_names().iter().cloned());
    writer.write_record(&header)?;
    for s in data.samples() {
        let mut row = Vec::with_capacity(2 + s.aux.len());
        row.push(s.label.sign().to_string());
        row.push(s.score.to_string());
        row.extend(s.aux.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Splits a dataset into `folds` stratified (train, test) pairs.
///
/// Positives and negatives are shuffled separately and dealt round-robin, the
/// negatives continuing where the positives stopped, so every fold's class
/// counts differ from the ideal by less than one sample.
pub fn split_dataset(
    data: &ScoredDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<(ScoredDataset, ScoredDataset)>> {
    if folds < 2 {
        return invalid("at least two folds are required");
    }
    if folds > data.len() {
        return invalid(format!("{folds} folds requested for {} samples", data.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.samples()[i].label.is_positive());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut assignment = vec![0usize; data.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        assignment[i] = slot % folds;
    }
    let pairs = (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| assignment[i] == f);
            (data.subset(&train), data.subset(&test))
        })
        .collect();
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScoredDataset> {
        parse_dataset(text.as_bytes(), &Schema::default())
    }

    #[test]
    fn parses_three_rows() {
        let ds = parse("label,score,x1\n1,0.5,3\n-1,-0.2,4\n1,1.1,3\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.aux_dim(), 1);
        let labels: Vec<i32> = ds.samples().iter().map(|s| s.label.sign()).collect();
        assert_eq!(labels, vec![1, -1, 1]);
        let scores: Vec<f64> = ds.samples().iter().map(|s| s.score).collect();
        assert_eq!(scores, vec![0.5, -0.2, 1.1]);
        assert_eq!(ds.samples()[1].aux, vec![4.0]);
    }

    #[test]
    fn bad_number_names_the_line() {
        let err = parse("label,score,x1\n1,0.5,3\n-1,abc,4\n").unwrap_err();
        match err {
            OerError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_is_a_parse_error() {
        let err = parse("label,score,x1\n1,0.5\n").unwrap_err();
        assert!(matches!(err, OerError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn custom_label_mapping() {
        let schema = Schema {
            labels: LabelMap::new(&["pos"], &["neg"]),
            ..Schema::default()
        };
        let ds = parse_dataset("label,score,x1\npos,1,0\nneg,2,0\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.samples()[0].label, Label::Positive);
        assert_eq!(ds.samples()[1].label, Label::Negative);

        let err = parse_dataset("label,score,x1\nmaybe,1,0\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, OerError::Schema(_)));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse("").unwrap_err(), OerError::EmptyInput));
        assert!(matches!(parse("label,score,x1\n").unwrap_err(), OerError::EmptyInput));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let err = parse("label,score,x1\n1,NaN,3\n").unwrap_err();
        assert!(matches!(err, OerError::Parse { .. }));
        let err = parse("label,score,x1\n1,1,inf\n").unwrap_err();
        assert!(matches!(err, OerError::Parse { .. }));
    }

    #[test]
    fn explicit_columns_and_delimiter() {
        let schema = Schema {
            label_column: "y".into(),
            score_column: "h".into(),
            aux_columns: vec!["size".into()],
            delimiter: ';',
            ..Schema::default()
        };
        let ds = parse_dataset("id;h;size;y\n7;0.25;12;0\n8;0.75;3;1\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.aux_names(), ["size"]);
        assert_eq!(ds.samples()[0].aux, vec![12.0]);
        assert_eq!(ds.samples()[1].label, Label::Positive);

        let missing = Schema { aux_columns: vec!["nope".into()], ..schema };
        assert!(matches!(
            parse_dataset("id;h;size;y\n7;0.25;12;0\n".as_bytes(), &missing).unwrap_err(),
            OerError::Schema(_)
        ));
    }

    fn balanced(n_pos: usize, n_neg: usize) -> ScoredDataset {
        let samples = (0..n_pos)
            .map(|i| LabeledSample::new(Label::Positive, i as f64, vec![0.0]))
            .chain((0..n_neg).map(|i| LabeledSample::new(Label::Negative, -(i as f64), vec![0.0])))
            .collect();
        ScoredDataset::new(samples, vec!["x".into()]).unwrap()
    }

    #[test]
    fn stratified_folds_of_ten() {
        let ds = balanced(5, 5);
        let folds = split_dataset(&ds, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for (train, test) in &folds {
            assert_eq!(test.count_positive(), 1);
            assert_eq!(test.count_negative(), 1);
            assert_eq!(train.len(), 8);
        }
        assert_eq!(folds, split_dataset(&ds, 5, 3).unwrap());
    }

    #[test]
    fn split_argument_errors() {
        let ds = balanced(2, 1);
        assert!(split_dataset(&ds, 4, 0).is_err());
        assert!(split_dataset(&ds, 1, 0).is_err());
    }
}
