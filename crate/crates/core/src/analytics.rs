//! Corpus characterization: popular-password rankings, length
//! distributions and character-composition signatures.
//!
//! All statistics are weighted by multiplicity, so a password seen 120 times
//! counts 120 times.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::charclass::CharClass;
use crate::corpus::CleanPassword;
use crate::{MAX_LENGTH, MIN_LENGTH};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("character {ch:?} at position {position} is outside the legal set")]
    IllegalCharacter { ch: char, position: usize },
    #[error("password length {0} is outside the corpus window")]
    LengthOutOfRange(usize),
    #[error("unknown report format {0:?} (expected json or csv)")]
    UnknownFormat(String),
    #[error("invalid signature {0:?}")]
    BadSignature(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// One row of a popularity ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub password: String,
    pub count: u64,
    pub share: f64,
}

/// Ranks passwords by occurrence count, ties broken by ascending password.
/// Entries with the same text are summed first.
pub fn top_k(corpus: &[CleanPassword], k: usize) -> Result<Vec<FrequencyEntry>, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::ZeroK);
    }
    let mut counts: HashMap<&str, u64> = HashMap::with_capacity(corpus.len());
    let mut total = 0u64;
    for p in corpus {
        *counts.entry(p.text.as_str()).or_insert(0) += p.multiplicity;
        total += p.multiplicity;
    }
    if total == 0 {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|(password, count)| FrequencyEntry {
            password: password.to_owned(),
            count,
            share: count as f64 / total as f64,
        })
        .collect())
}

/// The set of character classes present in a password, rendered in the
/// fixed order D, U, L, S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(u8);

impl Signature {
    pub fn from_classes(classes: impl IntoIterator<Item = CharClass>) -> Option<Signature> {
        let bits = classes.into_iter().fold(0u8, |acc, c| acc | (1 << c.index()));
        (bits != 0).then_some(Signature(bits))
    }

    pub fn contains(self, class: CharClass) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    pub fn class_count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn classes(self) -> impl Iterator<Item = CharClass> {
        CharClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// All 15 non-empty signatures.
    pub fn all() -> impl Iterator<Item = Signature> {
        (1u8..16).map(Signature)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.classes() {
            write!(f, "{}", c.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Signature {
    type Err = AnalyticsError;

    /// Accepts only the canonical spelling (e.g. `DL`, never `LD`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u8;
        let mut last: Option<usize> = None;
        for ch in s.chars() {
            let class = CharClass::ALL
                .into_iter()
                .find(|c| c.letter() == ch)
                .ok_or_else(|| AnalyticsError::BadSignature(s.to_owned()))?;
            if last.is_some_and(|l| l >= class.index()) {
                return Err(AnalyticsError::BadSignature(s.to_owned()));
            }
            last = Some(class.index());
            bits |= 1 << class.index();
        }
        if bits == 0 {
            return Err(AnalyticsError::BadSignature(s.to_owned()));
        }
        Ok(Signature(bits))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn composition_signature(password: &str) -> Result<Signature, AnalyticsError> {
    let mut bits = 0u8;
    for (position, ch) in password.chars().enumerate() {
        let class = u8::try_from(ch)
            .ok()
            .and_then(CharClass::of)
            .ok_or(AnalyticsError::IllegalCharacter { ch, position })?;
        bits |= 1 << class.index();
    }
    if bits == 0 {
        return Err(AnalyticsError::LengthOutOfRange(0));
    }
    Ok(Signature(bits))
}

const BUCKETS: usize = MAX_LENGTH - MIN_LENGTH + 1;

/// Occurrence counts per password length in the corpus window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram {
    /// `counts[i]` holds length `MIN_LENGTH + i`.
    counts: [u64; BUCKETS],
    total: u64,
}

impl Default for LengthHistogram {
    fn default() -> Self {
        LengthHistogram { counts: [0; BUCKETS], total: 0 }
    }
}

impl LengthHistogram {
    pub fn add(&mut self, length: usize, weight: u64) -> Result<(), AnalyticsError> {
        if !(MIN_LENGTH..=MAX_LENGTH).contains(&length) {
            return Err(AnalyticsError::LengthOutOfRange(length));
        }
        self.counts[length - MIN_LENGTH] += weight;
        self.total += weight;
        Ok(())
    }

    pub fn count(&self, length: usize) -> u64 {
        if (MIN_LENGTH..=MAX_LENGTH).contains(&length) {
            self.counts[length - MIN_LENGTH]
        } else {
            0
        }
    }

    pub fn share(&self, length: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(length) as f64 / self.total as f64
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(length, count)` for every length in the window, empty ones included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (i + MIN_LENGTH, c))
    }

    pub fn merge(&mut self, other: &LengthHistogram) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self.total += other.total;
    }
}

pub fn length_distribution(corpus: &[CleanPassword]) -> Result<LengthHistogram, AnalyticsError> {
    if corpus.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut hist = LengthHistogram::default();
    for p in corpus {
        hist.add(p.text.len(), p.multiplicity)?;
    }
    Ok(hist)
}

/// Occurrence counts per composition signature.
pub fn composition_distribution(
    corpus: &[CleanPassword],
) -> Result<BTreeMap<Signature, u64>, AnalyticsError> {
    let mut hist = BTreeMap::new();
    for p in corpus {
        *hist.entry(composition_signature(&p.text)?).or_insert(0) += p.multiplicity;
    }
    Ok(hist)
}

/// Signatures ranked by descending count, ties in canonical order.
pub fn rank_signatures(hist: &BTreeMap<Signature, u64>) -> Vec<(Signature, u64)> {
    let mut ranked: Vec<(Signature, u64)> = hist.iter().map(|(s, c)| (*s, *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Full characterization of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    pub total_occurrences: u64,
    pub unique_passwords: u64,
    pub top_k: Vec<FrequencyEntry>,
    pub top_k_share: f64,
    pub length_hist: LengthHistogram,
    pub composition_hist: BTreeMap<Signature, u64>,
}

impl DatasetReport {
    pub fn build(
        dataset_id: impl Into<String>,
        corpus: &[CleanPassword],
        k: usize,
    ) -> Result<DatasetReport, AnalyticsError> {
        let top = top_k(corpus, k)?;
        let length_hist = length_distribution(corpus)?;
        let composition_hist = composition_distribution(corpus)?;
        let total = length_hist.total();
        let top_count: u64 = top.iter().map(|e| e.count).sum();
        Ok(DatasetReport {
            dataset_id: dataset_id.into(),
            total_occurrences: total,
            unique_passwords: corpus.len() as u64,
            top_k_share: top_count as f64 / total as f64,
            top_k: top,
            length_hist,
            composition_hist,
        })
    }

    pub fn composition_share(&self, signature: &str) -> f64 {
        signature
            .parse::<Signature>()
            .ok()
            .and_then(|s| self.composition_hist.get(&s))
            .map_or(0.0, |&c| c as f64 / self.total_occurrences as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(AnalyticsError::UnknownFormat(other.to_owned())),
        }
    }
}

/// Serializes a report. Output is byte-for-byte deterministic.
pub fn emit_report(report: &DatasetReport, format: ReportFormat) -> Result<Vec<u8>, AnalyticsError> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)
                .map_err(|e| AnalyticsError::Serialize(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => emit_csv(report).map_err(|e| AnalyticsError::Serialize(e.to_string())),
    }
}

fn emit_csv(report: &DatasetReport) -> std::io::Result<Vec<u8>> {
    let total = report.total_occurrences.max(1) as f64;
    let mut out = Vec::new();
    writeln!(out, "rank,password,count,share")?;
    for (i, e) in report.top_k.iter().enumerate() {
        writeln!(out, "{},{},{},{}", i + 1, csv_field(&e.password), e.count, e.share)?;
    }
    writeln!(out)?;
    writeln!(out, "length,count,share")?;
    for (len, count) in report.length_hist.iter() {
        writeln!(out, "{},{},{}", len, count, count as f64 / total)?;
    }
    writeln!(out)?;
    writeln!(out, "signature,count,share")?;
    for (sig, count) in rank_signatures(&report.composition_hist) {
        writeln!(out, "{},{},{}", sig, count, count as f64 / total)?;
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
