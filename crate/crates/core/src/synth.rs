//! Seeded synthetic corpora shaped after per-dataset target statistics.
//!
//! A preset pins the top-10 passwords and their shares, some per-length
//! shares and some per-signature shares. Everything a preset leaves open is
//! filled from generic default weights. Budgets are integers worked out up
//! front, so declared shares are hit up to rounding of `share * size`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{composition_signature, Signature};
use crate::charclass::CharClass;
use crate::corpus::{check_password, sort_corpus, CleanPassword};
use crate::features::{STRONG_MIN_CLASSES, STRONG_MIN_LENGTH};
use crate::{MAX_LENGTH, MIN_LENGTH};

pub const MIN_SIZE: u64 = 1000;
pub const DEFAULT_STRONG_RATE: f64 = 0.12;

/// Names of the presets compiled into the crate.
pub const BUILTIN_PRESETS: [&str; 6] = ["game1", "game2", "forum1", "shopping1", "forum2", "forum3"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("preset file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("reading preset: {0}")]
    Io(#[from] std::io::Error),
    #[error("inconsistent preset: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub password: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPreset {
    pub name: String,
    pub top10: Vec<TopEntry>,
    pub top10_total_share: f64,
    /// Share of all occurrences at a given length.
    #[serde(default)]
    pub length_shares: BTreeMap<usize, f64>,
    /// Share of all occurrences with a given composition signature.
    #[serde(default)]
    pub composition_shares: BTreeMap<Signature, f64>,
    /// Fraction of occurrences that are injected strong passwords.
    #[serde(default = "default_strong_rate")]
    pub strong_rate: f64,
    pub size: u64,
    pub seed: u64,
}

fn default_strong_rate() -> f64 {
    DEFAULT_STRONG_RATE
}

impl CorpusPreset {
    pub fn builtin(name: &str) -> Result<CorpusPreset, SynthError> {
        let text = match name {
            "game1" => include_str!("../presets/game1.json"),
            "game2" => include_str!("../presets/game2.json"),
            "forum1" => include_str!("../presets/forum1.json"),
            "shopping1" => include_str!("../presets/shopping1.json"),
            "forum2" => include_str!("../presets/forum2.json"),
            "forum3" => include_str!("../presets/forum3.json"),
            _ => return Err(SynthError::UnknownPreset(name.to_owned())),
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<CorpusPreset, SynthError> {
        let preset: CorpusPreset = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }

    /// A built-in name, or otherwise a path to a preset JSON file.
    pub fn resolve(name_or_path: &str) -> Result<CorpusPreset, SynthError> {
        if BUILTIN_PRESETS.contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_json(&std::fs::read_to_string(path)?);
        }
        Err(SynthError::UnknownPreset(name_or_path.to_owned()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Inconsistent(m));
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.size < MIN_SIZE {
            return bad(format!("size {} is below {MIN_SIZE}", self.size));
        }
        let mut seen = HashSet::new();
        for e in &self.top10 {
            if check_password(e.password.as_bytes()).is_err() {
                return bad(format!("top-10 password {:?} violates corpus rules", e.password));
            }
            if !seen.insert(e.password.as_str()) {
                return bad(format!("top-10 password {:?} listed twice", e.password));
            }
            if !in_unit(e.share) {
                return bad(format!("share {} out of range", e.share));
            }
        }
        let sum: f64 = self.top10.iter().map(|e| e.share).sum();
        if (sum - self.top10_total_share).abs() > 1e-6 {
            return bad(format!("top-10 shares sum to {sum}, declared {}", self.top10_total_share));
        }
        if self.top10.windows(2).any(|w| w[0].share < w[1].share) {
            return bad("top-10 shares must be non-increasing".into());
        }
        for (&len, &s) in &self.length_shares {
            if !(MIN_LENGTH..=MAX_LENGTH).contains(&len) || !in_unit(s) {
                return bad(format!("length share {len}: {s}"));
            }
        }
        if self.length_shares.values().sum::<f64>() > 1.0 {
            return bad("length shares exceed 1".into());
        }
        if self.composition_shares.values().any(|&s| !in_unit(s)) {
            return bad("composition share out of range".into());
        }
        if !in_unit(self.strong_rate) {
            return bad(format!("strong_rate {}", self.strong_rate));
        }
        if self.composition_shares.values().sum::<f64>() + self.strong_rate > 1.0 {
            return bad("composition shares plus strong rate exceed 1".into());
        }
        Ok(())
    }
}

/// Splits `total` proportionally to `weights`; leftover units go to the
/// largest fractional parts, earliest first on ties.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let mut left = total - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        if weights[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

fn count_of(share: f64, size: u64) -> u64 {
    (share * size as f64).round() as u64
}

/// Fallback length profile for lengths a preset does not pin.
const DEFAULT_LENGTH_WEIGHTS: [f64; MAX_LENGTH - MIN_LENGTH + 1] = [
    0.5, 1.0, 10.0, 14.0, 20.0, 14.0, 11.0, 8.0, 6.0, 4.0, 3.0, 2.5, 2.0, 1.2, 1.0, 0.7, 0.6,
];

/// Fallback weights for weak passwords' signatures.
const DEFAULT_WEAK_SIGNATURES: [(&str, f64); 14] = [
    ("D", 0.26),
    ("L", 0.10),
    ("DL", 0.30),
    ("U", 0.01),
    ("DU", 0.06),
    ("UL", 0.06),
    ("DS", 0.04),
    ("LS", 0.04),
    ("US", 0.03),
    ("DUL", 0.04),
    ("DLS", 0.02),
    ("DUS", 0.01),
    ("ULS", 0.01),
    ("DULS", 0.02),
];

const STRONG_SIGNATURES: [(&str, f64); 5] =
    [("DUL", 0.35), ("DLS", 0.20), ("DUS", 0.10), ("ULS", 0.10), ("DULS", 0.25)];

fn sig(s: &str) -> Signature {
    s.parse().expect("static signature")
}

fn pool(class: CharClass) -> &'static [u8] {
    match class {
        CharClass::Digit => b"0123456789",
        CharClass::Upper => b"ABCDEFGHIJKLMNOPQRSTUVWXYZ",
        CharClass::Lower => b"abcdefghijklmnopqrstuvwxyz",
        CharClass::Special => b"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~",
    }
}

/// A uniformly random string of exactly `len` characters whose signature is
/// exactly `signature`.
pub fn random_password<R: Rng>(rng: &mut R, signature: Signature, len: usize) -> String {
    let classes: Vec<CharClass> = signature.classes().collect();
    assert!(len >= classes.len());
    let mut kinds: Vec<CharClass> = classes.clone();
    while kinds.len() < len {
        kinds.push(classes[rng.gen_range(0..classes.len())]);
    }
    kinds.shuffle(rng);
    kinds
        .into_iter()
        .map(|c| {
            let p = pool(c);
            p[rng.gen_range(0..p.len())] as char
        })
        .collect()
}

/// Strong passwords can only come from signatures with enough classes.
fn can_be_strong(s: Signature) -> bool {
    s.class_count() >= STRONG_MIN_CLASSES
}

/// Generates exactly `preset.size` occurrences, sorted like a cleaned corpus.
pub fn generate(preset: &CorpusPreset) -> Result<Vec<CleanPassword>, SynthError> {
    preset.validate()?;
    let n = preset.size;
    let inconsistent = |m: String| SynthError::Inconsistent(m);
    let mut rng = ChaCha8Rng::seed_from_u64(preset.seed);

    // Top-10 literals.
    let top_total = count_of(preset.top10_total_share, n);
    let top_counts = apportion(top_total, &preset.top10.iter().map(|e| e.share).collect::<Vec<_>>());
    let mut top_by_len: HashMap<usize, u64> = HashMap::new();
    let mut top_by_sig: HashMap<Signature, u64> = HashMap::new();
    for (e, &c) in preset.top10.iter().zip(&top_counts) {
        *top_by_len.entry(e.password.len()).or_default() += c;
        let s = composition_signature(&e.password).expect("validated");
        *top_by_sig.entry(s).or_default() += c;
    }

    // Length budgets for generated passwords.
    let lengths: Vec<usize> = (MIN_LENGTH..=MAX_LENGTH).collect();
    let declared_len: u64 = preset.length_shares.values().map(|&s| count_of(s, n)).sum();
    if declared_len > n {
        return Err(inconsistent("length shares round above size".into()));
    }
    let open_weights: Vec<f64> = lengths
        .iter()
        .map(|l| if preset.length_shares.contains_key(l) { 0.0 } else { DEFAULT_LENGTH_WEIGHTS[l - MIN_LENGTH] })
        .collect();
    let open = apportion(n - declared_len, &open_weights);
    let mut len_budget: Vec<i64> = lengths
        .iter()
        .zip(&open)
        .map(|(l, &o)| {
            let target = preset.length_shares.get(l).map_or(o, |&s| count_of(s, n));
            target as i64 - *top_by_len.get(l).unwrap_or(&0) as i64
        })
        .collect();
    for (i, l) in lengths.iter().enumerate() {
        if len_budget[i] < 0 && preset.length_shares.contains_key(l) {
            return Err(inconsistent(format!("top-10 passwords alone exceed the share of length {l}")));
        }
    }
    // Deficits at open lengths are taken from the roomiest open length.
    while let Some(i) = len_budget.iter().position(|&b| b < 0) {
        let j = (0..lengths.len())
            .filter(|&j| !preset.length_shares.contains_key(&lengths[j]))
            .max_by_key(|&j| (len_budget[j], std::cmp::Reverse(j)))
            .filter(|&j| len_budget[j] > 0)
            .ok_or_else(|| inconsistent("no room for top-10 passwords".into()))?;
        len_budget[j] -= 1;
        len_budget[i] += 1;
    }
    let mut len_budget: Vec<u64> = len_budget.into_iter().map(|b| b as u64).collect();

    // Strong injections go to lengths that allow them.
    let strong_total = count_of(preset.strong_rate, n);
    let strong_weights: Vec<f64> = lengths
        .iter()
        .zip(&len_budget)
        .map(|(&l, &b)| if l as u32 >= STRONG_MIN_LENGTH { b as f64 } else { 0.0 })
        .collect();
    if (strong_weights.iter().sum::<f64>() as u64) < strong_total {
        return Err(inconsistent("not enough long-password budget for the strong rate".into()));
    }
    let strong_by_len = apportion(strong_total, &strong_weights);
    for (b, s) in len_budget.iter_mut().zip(&strong_by_len) {
        *b -= s;
    }
    let strong_sigs: Vec<Signature> = STRONG_SIGNATURES.iter().map(|(s, _)| sig(s)).collect();
    let strong_sig_counts =
        apportion(strong_total, &STRONG_SIGNATURES.iter().map(|(_, w)| *w).collect::<Vec<_>>());

    // Signature budgets for the weak remainder.
    let weak_total: u64 = len_budget.iter().sum();
    let mut sig_budget: Vec<(Signature, u64)> = Vec::new();
    let mut declared_sig = 0u64;
    for (&s, &share) in &preset.composition_shares {
        let target = count_of(share, n);
        let have = *top_by_sig.get(&s).unwrap_or(&0);
        let c = target
            .checked_sub(have)
            .ok_or_else(|| inconsistent(format!("top-10 passwords alone exceed the {s} share")))?;
        declared_sig += c;
        sig_budget.push((s, c));
    }
    let open_sig = weak_total
        .checked_sub(declared_sig)
        .ok_or_else(|| inconsistent("composition shares exceed the weak budget".into()))?;
    let open_sigs: Vec<(Signature, f64)> = DEFAULT_WEAK_SIGNATURES
        .iter()
        .map(|(s, w)| (sig(s), *w))
        .filter(|(s, _)| !preset.composition_shares.contains_key(s))
        .collect();
    let open_counts = apportion(open_sig, &open_sigs.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    sig_budget.extend(open_sigs.iter().map(|(s, _)| *s).zip(open_counts));

    // Pair weak signatures with length slots. Signatures that could be
    // strong take short slots so the result stays weak.
    let mut short_slots = Vec::new();
    let mut long_slots = Vec::new();
    for (&l, &b) in lengths.iter().zip(&len_budget) {
        let slots = if (l as u32) < STRONG_MIN_LENGTH { &mut short_slots } else { &mut long_slots };
        slots.extend(std::iter::repeat_n(l, b as usize));
    }
    short_slots.shuffle(&mut rng);
    let mut restricted = Vec::new();
    let mut free = Vec::new();
    for &(s, c) in &sig_budget {
        let target = if can_be_strong(s) { &mut restricted } else { &mut free };
        target.extend(std::iter::repeat_n(s, c as usize));
    }
    if restricted.len() > short_slots.len() {
        return Err(inconsistent("too many multi-class weak passwords for short lengths".into()));
    }
    let mut pairs: Vec<(Signature, usize)> =
        restricted.iter().copied().zip(short_slots.drain(..restricted.len())).collect();
    let mut rest_slots: Vec<usize> = short_slots.into_iter().chain(long_slots).collect();
    rest_slots.shuffle(&mut rng);
    free.shuffle(&mut rng);
    pairs.extend(free.into_iter().zip(rest_slots));

    let mut strong_slots: Vec<usize> = Vec::new();
    for (&l, &c) in lengths.iter().zip(&strong_by_len) {
        strong_slots.extend(std::iter::repeat_n(l, c as usize));
    }
    let mut strong_sig_list: Vec<Signature> = Vec::new();
    for (&s, &c) in strong_sigs.iter().zip(&strong_sig_counts) {
        strong_sig_list.extend(std::iter::repeat_n(s, c as usize));
    }
    strong_sig_list.shuffle(&mut rng);
    pairs.extend(strong_sig_list.into_iter().zip(strong_slots));

    let literals: HashSet<&str> = preset.top10.iter().map(|e| e.password.as_str()).collect();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for (e, &c) in preset.top10.iter().zip(&top_counts) {
        if c > 0 {
            counts.insert(e.password.clone(), c);
        }
    }
    for (s, len) in pairs {
        let text = loop {
            let candidate = random_password(&mut rng, s, len);
            if !literals.contains(candidate.as_str()) {
                break candidate;
            }
        };
        *counts.entry(text).or_default() += 1;
    }
    let mut corpus: Vec<CleanPassword> = counts
        .into_iter()
        .map(|(text, m)| CleanPassword::new(text, m).expect("generated passwords are legal"))
        .collect();
    sort_corpus(&mut corpus);
    debug_assert_eq!(corpus.iter().map(|c| c.multiplicity).sum::<u64>(), n);
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{composition_distribution, length_distribution, top_k};
    use crate::corpus::{total_multiplicity, Cleaner};
    use crate::features::{extract_features, label};

    fn small(name: &str, size: u64) -> CorpusPreset {
        CorpusPreset { size, ..CorpusPreset::builtin(name).unwrap() }
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.0, 2.0, 5.0]), vec![0, 2, 5]);
        assert_eq!(apportion(5, &[0.0, 0.0]), vec![0, 0]);
        assert_eq!(apportion(100, &[0.3, 0.3, 0.4]).iter().sum::<u64>(), 100);
    }

    #[test]
    fn random_passwords_have_requested_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in Signature::all() {
            for len in s.class_count() as usize..=MAX_LENGTH {
                let len = len.max(MIN_LENGTH);
                let p = random_password(&mut rng, s, len);
                assert_eq!(p.len(), len);
                assert_eq!(composition_signature(&p).unwrap(), s);
            }
        }
    }

    #[test]
    fn all_builtins_generate_exact_sizes() {
        for name in BUILTIN_PRESETS {
            let p = small(name, 20_000);
            let corpus = generate(&p).unwrap();
            assert_eq!(total_multiplicity(&corpus), 20_000, "{name}");
            let hist = length_distribution(&corpus).unwrap();
            for (&len, &share) in &p.length_shares {
                assert!((hist.share(len) - share).abs() < 0.005, "{name} length {len}");
            }
            let comp = composition_distribution(&corpus).unwrap();
            for (s, &share) in &p.composition_shares {
                let got = comp.get(s).copied().unwrap_or(0) as f64 / 20_000.0;
                assert!((got - share).abs() < 0.005, "{name} {s}");
            }
            let top = top_k(&corpus, 10).unwrap();
            assert_eq!(top[0].password, p.top10[0].password);
        }
    }

    #[test]
    fn generated_corpus_survives_cleaning() {
        let corpus = generate(&small("game2", 5_000)).unwrap();
        let mut cleaner = Cleaner::new();
        for c in &corpus {
            for _ in 0..c.multiplicity {
                cleaner.push_password(c.text.as_bytes(), 1);
            }
        }
        let (again, report) = cleaner.finish();
        assert_eq!(report.dropped_length + report.dropped_illegal + report.dropped_parse, 0);
        assert_eq!(again, corpus);
    }

    #[test]
    fn both_labels_present_and_strong_rate_respected() {
        let p = small("forum1", 20_000);
        let corpus = generate(&p).unwrap();
        let strong: u64 = corpus
            .iter()
            .filter(|c| label(&extract_features(&c.text).unwrap()) == 1)
            .map(|c| c.multiplicity)
            .sum();
        assert_eq!(strong, count_of(p.strong_rate, p.size));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = small("shopping1", 3_000);
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let q = CorpusPreset { seed: 7, ..p.clone() };
        assert_ne!(generate(&p).unwrap(), generate(&q).unwrap());
    }

    #[test]
    fn inconsistent_presets_rejected() {
        let base = CorpusPreset::builtin("forum1").unwrap();
        let mut p = base.clone();
        p.size = 999;
        assert!(generate(&p).is_err());
        let mut p = base.clone();
        p.top10[0].share += 0.01;
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.length_shares.insert(9, 0.01);
        assert!(matches!(generate(&p), Err(SynthError::Inconsistent(_))));
        let mut p = base;
        p.top10[1].password = "abc".into();
        assert!(p.validate().is_err());
        assert!(CorpusPreset::builtin("nope").is_err());
    }
}
