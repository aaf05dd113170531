//! Leak-dump parsing and the cleaning pipeline.
//!
//! Records are split on a single delimiter byte according to a
//! [`RecordSchema`]. Only the password field survives cleaning; every other
//! field is dropped as soon as the record is parsed.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charclass::first_illegal;
use crate::{MAX_LENGTH, MIN_LENGTH};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Format { line: u64, reason: String },
    #[error("password {0:?} violates corpus invariants")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    Serial,
    Email,
    Username,
    Password,
}

impl FromStr for FieldRole {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "serial" => Ok(FieldRole::Serial),
            "email" => Ok(FieldRole::Email),
            "username" => Ok(FieldRole::Username),
            "password" => Ok(FieldRole::Password),
            other => Err(CorpusError::Schema(format!("unknown field role {other:?}"))),
        }
    }
}

/// Layout of one record line in a dump file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSchema {
    fields: Vec<FieldRole>,
    delimiter: u8,
    password_index: usize,
}

impl RecordSchema {
    pub fn new(fields: Vec<FieldRole>, delimiter: char) -> Result<Self, CorpusError> {
        if !delimiter.is_ascii_graphic() {
            return Err(CorpusError::Schema(format!(
                "delimiter {delimiter:?} is not a printable ASCII character"
            )));
        }
        let mut password_positions = fields
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == FieldRole::Password)
            .map(|(i, _)| i);
        let password_index = password_positions
            .next()
            .ok_or_else(|| CorpusError::Schema("schema has no password field".into()))?;
        if password_positions.next().is_some() {
            return Err(CorpusError::Schema("schema has more than one password field".into()));
        }
        Ok(RecordSchema { fields, delimiter: delimiter as u8, password_index })
    }

    /// Parses a comma-separated role list such as `serial,email,password`.
    pub fn parse(roles: &str, delimiter: char) -> Result<Self, CorpusError> {
        let fields = roles
            .split(',')
            .map(FieldRole::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        RecordSchema::new(fields, delimiter)
    }

    /// A schema whose lines hold only the password.
    pub fn password_only() -> Self {
        RecordSchema::new(vec![FieldRole::Password], ';').expect("valid schema")
    }

    pub fn fields(&self) -> &[FieldRole] {
        &self.fields
    }

    pub fn delimiter(&self) -> u8 {
        self.delimiter
    }

    pub fn password_index(&self) -> usize {
        self.password_index
    }
}

/// A successfully split line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub source_line_number: u64,
    pub fields: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub line_number: u64,
    pub found_fields: usize,
    pub expected_fields: usize,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: expected {} fields, found {}",
            self.line_number, self.expected_fields, self.found_fields
        )
    }
}

pub type ParsedLine = Result<RawRecord, ParseFailure>;

/// Streaming line splitter. Malformed lines come out as `Err(ParseFailure)`
/// items; only I/O errors end the stream.
pub struct RecordReader<'s, R> {
    input: R,
    schema: &'s RecordSchema,
    line_number: u64,
    buf: Vec<u8>,
}

pub fn parse_records<R: BufRead>(input: R, schema: &RecordSchema) -> RecordReader<'_, R> {
    RecordReader { input, schema, line_number: 0, buf: Vec::new() }
}

impl<R: BufRead> Iterator for RecordReader<'_, R> {
    type Item = io::Result<ParsedLine>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.input.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line_number += 1;
                let mut line = self.buf.as_slice();
                if let Some(stripped) = line.strip_suffix(b"\n") {
                    line = stripped;
                }
                if let Some(stripped) = line.strip_suffix(b"\r") {
                    line = stripped;
                }
                let fields: Vec<Vec<u8>> =
                    line.split(|&b| b == self.schema.delimiter).map(<[u8]>::to_vec).collect();
                let expected = self.schema.fields.len();
                if fields.len() == expected {
                    Some(Ok(Ok(RawRecord { source_line_number: self.line_number, fields })))
                } else {
                    Some(Ok(Err(ParseFailure {
                        line_number: self.line_number,
                        found_fields: fields.len(),
                        expected_fields: expected,
                    })))
                }
            }
            Err(e) => Some(Err(e)),
        }
    }
}

/// A legal, length-checked password and its occurrence count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CleanPassword {
    pub text: String,
    pub multiplicity: u64,
}

impl CleanPassword {
    /// Validates `text` against the corpus invariants.
    pub fn new(text: impl Into<String>, multiplicity: u64) -> Result<Self, CorpusError> {
        let text = text.into();
        if multiplicity == 0 || check_password(text.as_bytes()).is_err() {
            return Err(CorpusError::Invalid(text));
        }
        Ok(CleanPassword { text, multiplicity })
    }
}

/// Why a password failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    IllegalCharacter,
    Length,
}

impl Violation {
    pub fn rule_name(self) -> &'static str {
        match self {
            Violation::IllegalCharacter => "illegal_character",
            Violation::Length => "length",
        }
    }
}

/// Checks the character set first, then the length window.
pub fn check_password(bytes: &[u8]) -> Result<(), Violation> {
    if first_illegal(bytes).is_some() {
        return Err(Violation::IllegalCharacter);
    }
    if !(MIN_LENGTH..=MAX_LENGTH).contains(&bytes.len()) {
        return Err(Violation::Length);
    }
    Ok(())
}

/// Audit counts for one cleaning run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_read: u64,
    pub dropped_parse: u64,
    pub dropped_length: u64,
    pub dropped_illegal: u64,
    pub duplicates_merged: u64,
    pub unique_kept: u64,
}

impl CleaningReport {
    /// True when every read record is accounted for exactly once.
    pub fn reconciles(&self) -> bool {
        self.total_read
            == self.unique_kept
                + self.dropped_parse
                + self.dropped_length
                + self.dropped_illegal
                + self.duplicates_merged
    }
}

/// Accumulates cleaning state. Two cleaners over disjoint shards can be
/// merged in any order and give the same result as one pass.
#[derive(Debug, Clone, Default)]
pub struct Cleaner {
    counts: HashMap<String, u64>,
    total_read: u64,
    dropped_parse: u64,
    dropped_length: u64,
    dropped_illegal: u64,
    length_window: Option<(usize, usize)>,
}

impl Cleaner {
    pub fn new() -> Self {
        Cleaner::default()
    }

    /// Narrows the kept length range. It can never be wider than the
    /// corpus invariant of 4..=20.
    pub fn with_length_window(min: usize, max: usize) -> Self {
        Cleaner { length_window: Some((min, max)), ..Cleaner::default() }
    }

    pub fn push_failure(&mut self, _failure: &ParseFailure) {
        self.total_read += 1;
        self.dropped_parse += 1;
    }

    pub fn push_record(&mut self, record: &RawRecord, schema: &RecordSchema) {
        self.push_password(&record.fields[schema.password_index], 1);
    }

    /// Adds `weight` occurrences of one password.
    pub fn push_password(&mut self, bytes: &[u8], weight: u64) {
        self.total_read += weight;
        let verdict = check_password(bytes).and_then(|()| match self.length_window {
            Some((lo, hi)) if !(lo..=hi).contains(&bytes.len()) => Err(Violation::Length),
            _ => Ok(()),
        });
        match verdict {
            Err(Violation::IllegalCharacter) => self.dropped_illegal += weight,
            Err(Violation::Length) => self.dropped_length += weight,
            Ok(()) => {
                // Legal bytes are ASCII, so this cannot fail.
                let text = std::str::from_utf8(bytes).expect("legal bytes are ASCII");
                *self.counts.entry(text.to_owned()).or_insert(0) += weight;
            }
        }
    }

    pub fn push(&mut self, line: &ParsedLine, schema: &RecordSchema) {
        match line {
            Ok(record) => self.push_record(record, schema),
            Err(failure) => self.push_failure(failure),
        }
    }

    pub fn merge(mut self, other: Cleaner) -> Cleaner {
        self.total_read += other.total_read;
        self.dropped_parse += other.dropped_parse;
        self.dropped_length += other.dropped_length;
        self.dropped_illegal += other.dropped_illegal;
        for (text, n) in other.counts {
            *self.counts.entry(text).or_insert(0) += n;
        }
        self
    }

    /// Output sorted by descending multiplicity, then ascending text.
    pub fn finish(self) -> (Vec<CleanPassword>, CleaningReport) {
        let kept: u64 = self.counts.values().sum();
        let unique = self.counts.len() as u64;
        let mut out: Vec<CleanPassword> = self
            .counts
            .into_iter()
            .map(|(text, multiplicity)| CleanPassword { text, multiplicity })
            .collect();
        sort_corpus(&mut out);
        let report = CleaningReport {
            total_read: self.total_read,
            dropped_parse: self.dropped_parse,
            dropped_length: self.dropped_length,
            dropped_illegal: self.dropped_illegal,
            duplicates_merged: kept - unique,
            unique_kept: unique,
        };
        (out, report)
    }
}

/// Canonical corpus order: descending count, then ascending password.
pub fn sort_corpus(corpus: &mut [CleanPassword]) {
    corpus.sort_unstable_by(|a, b| b.multiplicity.cmp(&a.multiplicity).then_with(|| a.text.cmp(&b.text)));
}

/// Cleans a stream of parsed lines.
pub fn clean<I>(lines: I, schema: &RecordSchema) -> (Vec<CleanPassword>, CleaningReport)
where
    I: IntoIterator<Item = ParsedLine>,
{
    let mut cleaner = Cleaner::new();
    for line in lines {
        cleaner.push(&line, schema);
    }
    cleaner.finish()
}

/// Parses and cleans a whole input, failing only on I/O errors.
pub fn clean_reader<R: BufRead>(
    input: R,
    schema: &RecordSchema,
    cleaner: Cleaner,
) -> Result<(Vec<CleanPassword>, CleaningReport), CorpusError> {
    let mut cleaner = cleaner;
    for line in parse_records(input, schema) {
        cleaner.push(&line?, schema);
    }
    Ok(cleaner.finish())
}

/// Writes the cleaned-corpus TSV: `<count>\t<password>` per line.
pub fn write_tsv<W: Write>(mut out: W, corpus: &[CleanPassword]) -> io::Result<()> {
    for entry in corpus {
        writeln!(out, "{}\t{}", entry.multiplicity, entry.text)?;
    }
    out.flush()
}

/// Reads a cleaned-corpus TSV back, re-validating every password.
pub fn read_tsv<R: BufRead>(input: R) -> Result<Vec<CleanPassword>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let (count, text) = line.split_once('\t').ok_or_else(|| CorpusError::Format {
            line: line_no,
            reason: "missing tab separator".into(),
        })?;
        let multiplicity: u64 = count.parse().map_err(|_| CorpusError::Format {
            line: line_no,
            reason: format!("bad count {count:?}"),
        })?;
        let entry = CleanPassword::new(text, multiplicity).map_err(|_| CorpusError::Format {
            line: line_no,
            reason: "password violates corpus invariants".into(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Total occurrences in a corpus.
pub fn total_multiplicity(corpus: &[CleanPassword]) -> u64 {
    corpus.iter().map(|p| p.multiplicity).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sep_schema() -> RecordSchema {
        RecordSchema::parse("serial,email,password", ';').unwrap()
    }

    fn passwords(list: &[&str]) -> (Vec<CleanPassword>, CleaningReport) {
        let mut c = Cleaner::new();
        for p in list {
            c.push_password(p.as_bytes(), 1);
        }
        c.finish()
    }

    #[test]
    fn splits_a_three_field_line() {
        let schema = sep_schema();
        let lines: Vec<_> =
            parse_records(&b"1;a@b.com;123456\n"[..], &schema).map(Result::unwrap).collect();
        assert_eq!(
            lines,
            vec![Ok(RawRecord {
                source_line_number: 1,
                fields: vec![b"1".to_vec(), b"a@b.com".to_vec(), b"123456".to_vec()],
            })]
        );
    }

    #[test]
    fn wrong_field_count_is_a_recoverable_failure() {
        let schema = sep_schema();
        let input = b"a@b.com\n2;c@d.com;password1\n";
        let lines: Vec<_> = parse_records(&input[..], &schema).map(Result::unwrap).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].as_ref().unwrap_err().line_number, 1);
        assert!(lines[1].is_ok());
    }

    #[test]
    fn crlf_line_endings_are_stripped() {
        let schema = sep_schema();
        let lines: Vec<_> =
            parse_records(&b"1;x@y.z;hello123\r\n"[..], &schema).map(Result::unwrap).collect();
        assert_eq!(lines[0].as_ref().unwrap().fields[2], b"hello123");
    }

    #[test]
    fn duplicates_and_short_passwords() {
        let (out, report) = passwords(&["123456", "123456", "abc"]);
        assert_eq!(out, vec![CleanPassword { text: "123456".into(), multiplicity: 2 }]);
        assert_eq!(report.dropped_length, 1);
        assert_eq!(report.duplicates_merged, 1);
        assert_eq!(report.unique_kept, 1);
        assert!(report.reconciles());
    }

    #[test]
    fn space_is_illegal() {
        let (out, report) = passwords(&["pass word"]);
        assert!(out.is_empty());
        assert_eq!(report.dropped_illegal, 1);
    }

    #[test]
    fn non_ascii_bytes_are_illegal() {
        let mut c = Cleaner::new();
        c.push_password("pässword".as_bytes(), 1);
        c.push_password(b"tab\there", 1);
        let (_, report) = c.finish();
        assert_eq!(report.dropped_illegal, 2);
    }

    #[test]
    fn popular_alnum_password_is_kept() {
        let (out, _) = passwords(&["a123456"]);
        assert_eq!(out[0].text, "a123456");
    }

    #[test]
    fn length_window_edges() {
        let (out, report) = passwords(&["abcd", "a".repeat(20).as_str(), "a".repeat(21).as_str()]);
        assert_eq!(out.len(), 2);
        assert_eq!(report.dropped_length, 1);
    }

    #[test]
    fn narrower_window_is_respected() {
        let mut c = Cleaner::with_length_window(6, 8);
        for p in ["abcde", "abcdef", "abcdefghi"] {
            c.push_password(p.as_bytes(), 1);
        }
        let (out, report) = c.finish();
        assert_eq!(out.len(), 1);
        assert_eq!(report.dropped_length, 2);
    }

    #[test]
    fn schema_validation() {
        assert!(RecordSchema::parse("email,username", ';').is_err());
        assert!(RecordSchema::parse("password,password", ';').is_err());
        assert!(RecordSchema::parse("email,pin", ';').is_err());
        assert!(RecordSchema::parse("email,password", '\u{7}').is_err());
        assert_eq!(RecordSchema::parse("serial,email,password", ';').unwrap().password_index(), 2);
    }

    #[test]
    fn tsv_round_trip() {
        let (out, _) = passwords(&["123456", "123456", "zz12369"]);
        let mut buf = Vec::new();
        write_tsv(&mut buf, &out).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "2\t123456\n1\tzz12369\n");
        assert_eq!(read_tsv(&buf[..]).unwrap(), out);
    }

    #[test]
    fn tsv_rejects_bad_lines() {
        assert!(matches!(read_tsv(&b"x\tabcd\n"[..]), Err(CorpusError::Format { line: 1, .. })));
        assert!(matches!(read_tsv(&b"3 abcd\n"[..]), Err(CorpusError::Format { .. })));
        assert!(matches!(read_tsv(&b"1\tab\n"[..]), Err(CorpusError::Format { .. })));
    }
}
