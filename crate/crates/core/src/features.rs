//! Password featurization, labeling, standardization, splitting and
//! class balancing.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charclass::CharClass;
use crate::corpus::CleanPassword;
use crate::matrix::Matrix;

/// Number of predictor features.
pub const N_FEATURES: usize = 8;

/// Predictor column names, in order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "length",
    "num_digits",
    "num_lowercase",
    "num_uppercase",
    "num_special_chars",
    "char_repeat",
    "max_consecutive_chars",
    "char_type_changes",
];

/// Label column name.
pub const LABEL_NAME: &str = "password_strength";

/// Minimum length of a strong password.
pub const STRONG_MIN_LENGTH: u32 = 9;
/// Minimum number of character classes in a strong password.
pub const STRONG_MIN_CLASSES: u32 = 3;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("character {ch:?} at position {position} is outside the legal set")]
    IllegalCharacter { ch: char, position: usize },
    #[error("password is empty")]
    Empty,
    #[error("expected {expected} feature columns, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("dataset has {0} rows; at least {1} are required")]
    TooFewRows(usize, usize),
    #[error("split fractions sum to {0}, not 1")]
    BadFractions(f64),
    #[error("class {0} is absent from the dataset")]
    MissingClass(u8),
    #[error("label {0} is not 0 or 1")]
    BadLabel(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected CSV header {0:?}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
}

/// The eight per-password counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Features {
    pub length: u32,
    pub num_digits: u32,
    pub num_lowercase: u32,
    pub num_uppercase: u32,
    pub num_special_chars: u32,
    pub char_repeat: u32,
    pub max_consecutive_chars: u32,
    pub char_type_changes: u32,
}

impl Features {
    pub fn to_row(&self) -> [f64; N_FEATURES] {
        [
            self.length as f64,
            self.num_digits as f64,
            self.num_lowercase as f64,
            self.num_uppercase as f64,
            self.num_special_chars as f64,
            self.char_repeat as f64,
            self.max_consecutive_chars as f64,
            self.char_type_changes as f64,
        ]
    }

    /// Number of character classes with a nonzero count.
    pub fn class_count(&self) -> u32 {
        [self.num_digits, self.num_lowercase, self.num_uppercase, self.num_special_chars]
            .iter()
            .filter(|&&n| n > 0)
            .count() as u32
    }

    /// Named values in column order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, u32)> {
        let row = self.to_row();
        FEATURE_NAMES.into_iter().zip(row.map(|v| v as u32))
    }
}

pub fn extract_features(password: &str) -> Result<Features, FeatureError> {
    let bytes = password.as_bytes();
    if bytes.is_empty() {
        return Err(FeatureError::Empty);
    }
    let mut class_counts = [0u32; 4];
    let mut seen = [false; 128];
    let mut distinct = 0u32;
    let mut max_run = 0u32;
    let mut run = 0u32;
    let mut changes = 0u32;
    let mut prev: Option<(u8, CharClass)> = None;
    for (position, &b) in bytes.iter().enumerate() {
        let class = CharClass::of(b).ok_or_else(|| FeatureError::IllegalCharacter {
            ch: password[position..].chars().next().unwrap_or('\u{fffd}'),
            position,
        })?;
        class_counts[class.index()] += 1;
        if !seen[b as usize] {
            seen[b as usize] = true;
            distinct += 1;
        }
        match prev {
            Some((pb, pc)) => {
                run = if pb == b { run + 1 } else { 1 };
                if pc != class {
                    changes += 1;
                }
            }
            None => run = 1,
        }
        max_run = max_run.max(run);
        prev = Some((b, class));
    }
    let length = bytes.len() as u32;
    Ok(Features {
        length,
        num_digits: class_counts[CharClass::Digit.index()],
        num_lowercase: class_counts[CharClass::Lower.index()],
        num_uppercase: class_counts[CharClass::Upper.index()],
        num_special_chars: class_counts[CharClass::Special.index()],
        char_repeat: length - distinct,
        max_consecutive_chars: max_run,
        char_type_changes: changes,
    })
}

/// Strength label: 1 iff length >= 9 and at least three classes present.
pub fn label(features: &Features) -> u8 {
    u8::from(features.length >= STRONG_MIN_LENGTH && features.class_count() >= STRONG_MIN_CLASSES)
}

/// Which parts of the strength rule a password fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleFailure {
    #[serde(rename = "length_lt_9")]
    LengthLt9,
    #[serde(rename = "class_count_lt_3")]
    ClassCountLt3,
}

pub fn failed_rules(features: &Features) -> Vec<RuleFailure> {
    let mut out = Vec::new();
    if features.length < STRONG_MIN_LENGTH {
        out.push(RuleFailure::LengthLt9);
    }
    if features.class_count() < STRONG_MIN_CLASSES {
        out.push(RuleFailure::ClassCountLt3);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Scaled,
    Balanced,
}

/// Feature rows with their binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
    /// Set once the rows have been standardized.
    pub scaler: Option<ScalerParams>,
}

impl LabeledDataset {
    pub fn raw(features: Matrix, labels: Vec<u8>) -> Self {
        assert_eq!(features.n_rows(), labels.len(), "row/label count mismatch");
        LabeledDataset { features, labels, provenance: Provenance::Raw, scaler: None }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(weak, strong)` row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let strong = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - strong, strong)
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance,
            scaler: self.scaler.clone(),
        }
    }
}

/// Featurizes and labels every unique password in a corpus, in corpus order.
pub fn featurize(corpus: &[CleanPassword]) -> Result<LabeledDataset, FeatureError> {
    let mut data = Vec::with_capacity(corpus.len() * N_FEATURES);
    let mut labels = Vec::with_capacity(corpus.len());
    for p in corpus {
        let f = extract_features(&p.text)?;
        data.extend_from_slice(&f.to_row());
        labels.push(label(&f));
    }
    Ok(LabeledDataset::raw(Matrix::new(N_FEATURES, data), labels))
}

pub fn write_csv<W: Write>(out: W, data: &LabeledDataset) -> Result<(), FeatureError> {
    if data.features.n_cols() != N_FEATURES {
        return Err(FeatureError::Arity { expected: N_FEATURES, found: data.features.n_cols() });
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push(LABEL_NAME);
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(N_FEATURES + 1);
    for (row, label) in data.features.rows().zip(&data.labels) {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a featurized CSV. The header must match exactly.
pub fn read_csv<R: Read>(input: R) -> Result<LabeledDataset, FeatureError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain([LABEL_NAME]).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        for field in record.iter().take(N_FEATURES) {
            let v: f64 = field.trim().parse().map_err(|_| FeatureError::Row {
                line,
                reason: format!("bad number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(FeatureError::Row { line, reason: "non-finite value".into() });
            }
            data.push(v);
        }
        let label = match record.get(N_FEATURES).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(FeatureError::BadLabel(other.unwrap_or("").to_owned())),
        };
        labels.push(label);
    }
    Ok(LabeledDataset::raw(Matrix::new(N_FEATURES, data), labels))
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    pub fn arity(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes one row in place; zero-variance features become 0.
    pub fn transform_row(&self, row: &mut [f64]) -> Result<(), FeatureError> {
        if row.len() != self.arity() {
            return Err(FeatureError::Arity { expected: self.arity(), found: row.len() });
        }
        for ((x, &mu), &sigma) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = if sigma > 0.0 { (*x - mu) / sigma } else { 0.0 };
        }
        Ok(())
    }

    pub fn transform(&self, m: &Matrix) -> Result<Matrix, FeatureError> {
        let mut out = m.clone();
        if m.n_cols() != self.arity() {
            return Err(FeatureError::Arity { expected: self.arity(), found: m.n_cols() });
        }
        for row in out.rows_mut() {
            self.transform_row(row)?;
        }
        Ok(out)
    }
}

pub fn fit_scaler(train: &LabeledDataset) -> Result<ScalerParams, FeatureError> {
    let n = train.len();
    if n == 0 {
        return Err(FeatureError::TooFewRows(0, 1));
    }
    let d = train.features.n_cols();
    let mut mean = vec![0.0; d];
    for row in train.features.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in train.features.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    Ok(ScalerParams { mean, std })
}

pub fn apply_scaler(
    data: &LabeledDataset,
    params: &ScalerParams,
) -> Result<LabeledDataset, FeatureError> {
    Ok(LabeledDataset {
        features: params.transform(&data.features)?,
        labels: data.labels.clone(),
        provenance: Provenance::Scaled,
        scaler: Some(params.clone()),
    })
}

/// Train/validation/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_frac: 0.70, val_frac: 0.15, test_frac: 0.15, seed: crate::DEFAULT_SEED }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        let each_ok = [self.train_frac, self.val_frac, self.test_frac]
            .iter()
            .all(|f| (0.0..=1.0).contains(f));
        if !each_ok || (sum - 1.0).abs() > 1e-9 {
            return Err(FeatureError::BadFractions(sum));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` rows.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train_frac * n as f64) + 1e-9).floor() as usize;
        let val = ((self.val_frac * n as f64) + 1e-9).floor() as usize;
        let train = train.min(n);
        let val = val.min(n - train);
        (train, val, n - train - val)
    }
}

/// Minimum dataset size accepted by [`split`].
pub const MIN_SPLIT_ROWS: usize = 10;

/// Seeded shuffle into train/validation/test parts.
pub fn split(
    data: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), FeatureError> {
    spec.validate()?;
    let n = data.len();
    if n < MIN_SPLIT_ROWS {
        return Err(FeatureError::TooFewRows(n, MIN_SPLIT_ROWS));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (n_train, n_val, _) = spec.sizes(n);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((data.select(train), data.select(val), data.select(test)))
}

/// Randomly drops majority-class rows until both classes have the minority
/// count. Kept rows stay in their original relative order.
pub fn undersample(train: &LabeledDataset, seed: u64) -> Result<LabeledDataset, FeatureError> {
    let (weak, strong) = train.class_counts();
    if weak == 0 {
        return Err(FeatureError::MissingClass(0));
    }
    if strong == 0 {
        return Err(FeatureError::MissingClass(1));
    }
    let majority: u8 = if weak > strong { 0 } else { 1 };
    let target = weak.min(strong);
    let mut majority_rows: Vec<usize> =
        (0..train.len()).filter(|&i| train.labels[i] == majority).collect();
    majority_rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    majority_rows.truncate(target);
    let mut keep: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] != majority).collect();
    keep.extend(majority_rows);
    keep.sort_unstable();
    let mut out = train.select(&keep);
    out.provenance = Provenance::Balanced;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Per-character walk that shares nothing with `extract_features`.
    fn oracle(p: &str) -> [u32; 8] {
        let chars: Vec<char> = p.chars().collect();
        let class = |c: char| -> u8 {
            if c.is_ascii_digit() {
                0
            } else if c.is_ascii_lowercase() {
                1
            } else if c.is_ascii_uppercase() {
                2
            } else {
                3
            }
        };
        let count = |k: u8| chars.iter().filter(|&&c| class(c) == k).count() as u32;
        let mut distinct = chars.clone();
        distinct.sort();
        distinct.dedup();
        let mut best = 0;
        for i in 0..chars.len() {
            let mut j = i;
            while j < chars.len() && chars[j] == chars[i] {
                j += 1;
            }
            best = best.max(j - i);
        }
        let changes = chars.windows(2).filter(|w| class(w[0]) != class(w[1])).count();
        [
            chars.len() as u32,
            count(0),
            count(1),
            count(2),
            count(3),
            (chars.len() - distinct.len()) as u32,
            best as u32,
            changes as u32,
        ]
    }

    fn as_array(f: &Features) -> [u32; 8] {
        f.to_row().map(|v| v as u32)
    }

    #[test]
    fn extracted_examples_match_oracle() {
        for (p, expected) in [
            ("a123456", [7, 6, 1, 0, 0, 0, 1, 1]),
            ("111111", [6, 6, 0, 0, 0, 5, 6, 0]),
            ("Abc123!@x", [9, 3, 3, 1, 2, 0, 1, 4]),
        ] {
            assert_eq!(oracle(p), expected, "oracle on {p}");
            assert_eq!(as_array(&extract_features(p).unwrap()), expected, "extractor on {p}");
        }
    }

    #[test]
    fn repeat_counts_distinct_characters() {
        assert_eq!(extract_features("aabb").unwrap().char_repeat, 2);
        assert_eq!(extract_features("abab").unwrap().char_repeat, 2);
        assert_eq!(extract_features("abab").unwrap().max_consecutive_chars, 1);
        assert_eq!(extract_features("abbba").unwrap().max_consecutive_chars, 3);
    }

    #[test]
    fn illegal_characters_are_rejected() {
        assert!(matches!(
            extract_features("ab cd"),
            Err(FeatureError::IllegalCharacter { position: 2, .. })
        ));
        assert!(matches!(extract_features(""), Err(FeatureError::Empty)));
    }

    #[test]
    fn labeling_rule() {
        let l = |p: &str| label(&extract_features(p).unwrap());
        assert_eq!(l("123456789"), 0);
        assert_eq!(l("Ab1!xyz"), 0);
        assert_eq!(l("Abcdef12!"), 1);
        assert_eq!(l("abcdef12!"), 1);
        assert_eq!(l("abcdefg12"), 0);
    }

    #[test]
    fn rule_failures() {
        let f = |p: &str| failed_rules(&extract_features(p).unwrap());
        assert_eq!(f("123456"), vec![RuleFailure::LengthLt9, RuleFailure::ClassCountLt3]);
        assert_eq!(f("Abcdef12!"), vec![]);
        assert_eq!(f("Ab1!"), vec![RuleFailure::LengthLt9]);
    }

    fn column(values: &[f64]) -> LabeledDataset {
        let labels = vec![0; values.len()];
        LabeledDataset::raw(Matrix::new(1, values.to_vec()), labels)
    }

    #[test]
    fn scaler_on_two_points() {
        let data = column(&[2.0, 4.0]);
        let params = fit_scaler(&data).unwrap();
        assert_eq!(params.mean, vec![3.0]);
        assert_eq!(params.std, vec![1.0]);
        let scaled = apply_scaler(&data, &params).unwrap();
        assert_eq!(scaled.features.as_slice(), &[-1.0, 1.0]);
        assert_eq!(scaled.provenance, Provenance::Scaled);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let data = column(&[5.0, 5.0, 5.0]);
        let params = fit_scaler(&data).unwrap();
        assert_eq!(params.std, vec![0.0]);
        let scaled = apply_scaler(&data, &params).unwrap();
        assert_eq!(scaled.features.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn scaler_arity_mismatch() {
        let params = ScalerParams { mean: vec![0.0; 8], std: vec![1.0; 8] };
        assert!(matches!(
            apply_scaler(&column(&[1.0]), &params),
            Err(FeatureError::Arity { expected: 8, found: 1 })
        ));
    }

    fn indexed(n: usize) -> LabeledDataset {
        let labels = (0..n).map(|i| u8::from(i % 5 == 0)).collect();
        LabeledDataset::raw(Matrix::new(1, (0..n).map(|i| i as f64).collect()), labels)
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        let (a, b, c) = split(&indexed(1000), &spec).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (700, 150, 150));
        assert_eq!(spec.sizes(10), (7, 1, 2));
        assert_eq!(spec.sizes(30), (21, 4, 5));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let data = indexed(10);
        let spec = SplitSpec { seed: 7, ..SplitSpec::default() };
        let first = split(&data, &spec).unwrap();
        let second = split(&data, &spec).unwrap();
        assert_eq!(first, second);
        let mut all: Vec<f64> = [&first.0, &first.1, &first.2]
            .iter()
            .flat_map(|d| d.features.as_slice().to_vec())
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        let bad = SplitSpec { train_frac: 0.8, ..SplitSpec::default() };
        assert!(matches!(split(&indexed(100), &bad), Err(FeatureError::BadFractions(_))));
        assert!(matches!(
            split(&indexed(9), &SplitSpec::default()),
            Err(FeatureError::TooFewRows(9, 10))
        ));
    }

    #[test]
    fn undersample_majority() {
        let mut labels = vec![0u8; 100];
        labels.extend(vec![1u8; 20]);
        let data = LabeledDataset::raw(Matrix::new(1, (0..120).map(f64::from).collect()), labels);
        let out = undersample(&data, 3).unwrap();
        assert_eq!(out.class_counts(), (20, 20));
        assert_eq!(out.provenance, Provenance::Balanced);
        for (row, l) in out.features.rows().zip(&out.labels) {
            let i = row[0] as usize;
            assert_eq!(data.labels[i], *l);
        }
        assert_eq!(undersample(&data, 3).unwrap(), out);
    }

    #[test]
    fn undersample_balanced_is_identity() {
        let labels = vec![0, 1, 0, 1];
        let data = LabeledDataset::raw(Matrix::new(1, vec![1.0, 2.0, 3.0, 4.0]), labels);
        let out = undersample(&data, 1).unwrap();
        assert_eq!(out.features, data.features);
        assert_eq!(out.labels, data.labels);
    }

    #[test]
    fn undersample_needs_both_classes() {
        let data = LabeledDataset::raw(Matrix::new(1, vec![1.0, 2.0]), vec![0, 0]);
        assert!(matches!(undersample(&data, 1), Err(FeatureError::MissingClass(1))));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let corpus = vec![
            CleanPassword::new("a123456", 3).unwrap(),
            CleanPassword::new("Abcdef12!", 1).unwrap(),
        ];
        let data = featurize(&corpus).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "length,num_digits,num_lowercase,num_uppercase,num_special_chars,char_repeat,max_consecutive_chars,char_type_changes,password_strength"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "7,6,1,0,0,0,1,1,0");
        assert_eq!(read_csv(&buf[..]).unwrap(), data);
        assert!(matches!(read_csv(&b"a,b\n1,2\n"[..]), Err(FeatureError::Header(_))));
    }
}
